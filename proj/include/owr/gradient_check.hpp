#pragma once

#include "owr/neural_core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace owr {

struct GradientCheckReport {
  double max_relative_error = 0.0;   // over coordinates with a non-negligible gradient
  double max_absolute_error = 0.0;   // over coordinates where both gradients are near zero
  std::size_t coordinates = 0;

  bool passes(double relative_tol = 1e-4, double absolute_tol = 1e-8) const {
    return max_relative_error < relative_tol && max_absolute_error < absolute_tol;
  }
};

/// Scalar loss of a recorded forward pass, with its partials w.r.t. embedding
/// and reconstruction.
template <typename Scalar>
struct LossEvaluation {
  Scalar value;
  Matrix<Scalar> d_embedding;
  Matrix<Scalar> d_reconstruction;
};

template <typename Scalar>
using LossFunction = std::function<LossEvaluation<Scalar>(const Matrix<Scalar>& input, const AutoencoderTape<Scalar>&)>;

template <typename Scalar>
LossFunction<Scalar> reconstruction_loss() {
  return [](const Matrix<Scalar>& input, const AutoencoderTape<Scalar>& tape) {
    return LossEvaluation<Scalar>{mse_loss(input, tape.reconstruction()), Matrix<Scalar>(),
                                  mse_gradient(input, tape.reconstruction())};
  };
}

/// Central-difference check of backward() against every parameter. Where the
/// larger of the two gradient magnitudes falls below `near_zero` the absolute
/// error is tracked instead of the relative one.
template <typename Scalar>
GradientCheckReport finite_diff_check(const AutoencoderParams<Scalar>& params, const Matrix<Scalar>& input,
                                      Scalar epsilon, const LossFunction<Scalar>& loss = reconstruction_loss<Scalar>(),
                                      Scalar near_zero = Scalar(1e-6)) {
  if (!(epsilon >= Scalar(1e-7) && epsilon <= Scalar(1e-3)))
    throw InvalidArgument("finite_diff_check: epsilon must lie in [1e-7, 1e-3]");
  const auto tape = record_forward(params, input);
  const auto eval = loss(input, tape);
  const GradientSet<Scalar> analytic = backward(params, tape, eval.d_embedding, eval.d_reconstruction);

  GradientCheckReport report;
  AutoencoderParams<Scalar> probe = params;
  auto value_at = [&]() { return loss(input, record_forward(probe, input)).value; };
  auto compare = [&](Scalar& slot, Scalar analytic_grad) {
    const Scalar saved = slot;
    slot = saved + epsilon;
    const Scalar up = value_at();
    slot = saved - epsilon;
    const Scalar down = value_at();
    slot = saved;
    const double numeric = static_cast<double>((up - down) / (Scalar(2) * epsilon));
    const double a = static_cast<double>(analytic_grad);
    const double scale = std::max(std::abs(a), std::abs(numeric));
    const double diff = std::abs(a - numeric);
    if (scale < static_cast<double>(near_zero))
      report.max_absolute_error = std::max(report.max_absolute_error, diff);
    else
      report.max_relative_error = std::max(report.max_relative_error, diff / scale);
    ++report.coordinates;
  };
  auto sweep = [&](LayerStack<Scalar>& stack, const std::vector<LayerGradient<Scalar>>& grads) {
    for (std::size_t l = 0; l < stack.size(); ++l) {
      for (Eigen::Index c = 0; c < stack[l].weights.cols(); ++c)
        for (Eigen::Index r = 0; r < stack[l].weights.rows(); ++r) compare(stack[l].weights(r, c), grads[l].weights(r, c));
      for (Eigen::Index r = 0; r < stack[l].bias.size(); ++r) compare(stack[l].bias(r), grads[l].bias(r));
    }
  };
  sweep(probe.encoder, analytic.encoder);
  sweep(probe.decoder, analytic.decoder);
  return report;
}

}  // namespace owr
