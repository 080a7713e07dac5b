#pragma once

// Minimal dense MLP with a recorded forward pass, exact reverse-mode gradients
// and plain SGD with step decay. Samples are stored as matrix columns.

#include "owr/common.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace owr {

enum class Activation { identity, relu, tanh };

const char* to_string(Activation a);
Activation parse_activation(const std::string& text);

template <typename Scalar = double>
struct DenseLayer {
  Matrix<Scalar> weights;  // out_dim x in_dim
  Vector<Scalar> bias;     // out_dim
  Activation activation = Activation::identity;

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }

  void validate() const {
    if (bias.size() != weights.rows())
      throw ShapeError("dense layer: bias has " + std::to_string(bias.size()) + " entries, expected " +
                       std::to_string(weights.rows()));
    if (!weights.allFinite() || !bias.allFinite()) throw InvalidArgument("dense layer: non-finite parameter");
  }
};

template <typename Scalar>
using LayerStack = std::vector<DenseLayer<Scalar>>;

/// Encoder g and its mirror decoder. Source and target share every layer.
template <typename Scalar = double>
struct AutoencoderParams {
  LayerStack<Scalar> encoder;
  LayerStack<Scalar> decoder;

  Eigen::Index input_dim() const { return encoder.front().in_dim(); }
  Eigen::Index embed_dim() const { return encoder.back().out_dim(); }

  void validate() const {
    if (encoder.empty() || decoder.empty()) throw ShapeError("autoencoder: encoder and decoder need at least one layer");
    auto check_chain = [](const LayerStack<Scalar>& stack, const char* name) {
      for (std::size_t l = 0; l < stack.size(); ++l) {
        stack[l].validate();
        if (l > 0 && stack[l].in_dim() != stack[l - 1].out_dim())
          throw ShapeError(std::string(name) + ": layer " + std::to_string(l) + " input dim does not match previous output");
      }
    };
    check_chain(encoder, "encoder");
    check_chain(decoder, "decoder");
    if (decoder.front().in_dim() != encoder.back().out_dim())
      throw ShapeError("autoencoder: decoder input dim differs from embedding dim");
    if (decoder.back().out_dim() != encoder.front().in_dim())
      throw ShapeError("autoencoder: decoder output dim differs from input dim");
  }
};

template <typename Scalar = double>
struct LayerGradient {
  Matrix<Scalar> weights;
  Vector<Scalar> bias;
};

template <typename Scalar = double>
struct GradientSet {
  std::vector<LayerGradient<Scalar>> encoder;
  std::vector<LayerGradient<Scalar>> decoder;

  bool all_finite() const {
    for (const auto* part : {&encoder, &decoder})
      for (const auto& g : *part)
        if (!g.weights.allFinite() || !g.bias.allFinite()) return false;
    return true;
  }
};

/// Learning-rate schedule: base_lr * gamma^floor(epoch / decay_every).
struct OptimizerState {
  double base_lr = 0.01;
  double gamma = 0.5;
  int decay_every = 20;
  int current_epoch = 0;

  void validate() const {
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw InvalidArgument("optimizer: base_lr must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("optimizer: gamma must lie in (0, 1]");
    if (decay_every <= 0) throw InvalidArgument("optimizer: decay_every must be positive");
    if (current_epoch < 0) throw InvalidArgument("optimizer: current_epoch must be non-negative");
  }

  double effective_lr() const { return base_lr * std::pow(gamma, current_epoch / decay_every); }
};

namespace detail {

template <typename Scalar>
Matrix<Scalar> activate(const Matrix<Scalar>& z, Activation a) {
  switch (a) {
    case Activation::relu:
      return z.cwiseMax(Scalar(0));
    case Activation::tanh:
      return z.array().tanh().matrix();
    case Activation::identity:
      break;
  }
  return z;
}

// Derivative of the activation expressed through (pre-activation, output).
template <typename Scalar>
Matrix<Scalar> activation_derivative(const Matrix<Scalar>& z, const Matrix<Scalar>& out, Activation a) {
  switch (a) {
    case Activation::relu:
      return (z.array() > Scalar(0)).template cast<Scalar>().matrix();
    case Activation::tanh:
      return (Scalar(1) - out.array().square()).matrix();
    case Activation::identity:
      break;
  }
  return Matrix<Scalar>::Ones(z.rows(), z.cols());
}

}  // namespace detail

/// Cached activations of one layer stack for a batch.
template <typename Scalar = double>
struct StackTape {
  std::vector<Matrix<Scalar>> inputs;           // input to layer l
  std::vector<Matrix<Scalar>> pre_activations;  // W a + b
  std::vector<Matrix<Scalar>> outputs;          // act(W a + b)

  bool empty() const { return outputs.empty(); }
  const Matrix<Scalar>& output() const { return outputs.back(); }
};

template <typename Scalar>
StackTape<Scalar> record_stack(const LayerStack<Scalar>& stack, const Matrix<Scalar>& input) {
  if (stack.empty()) throw ShapeError("empty layer stack");
  if (input.rows() != stack.front().in_dim())
    throw ShapeError("input has dim " + std::to_string(input.rows()) + ", network expects " +
                     std::to_string(stack.front().in_dim()));
  StackTape<Scalar> tape;
  Matrix<Scalar> a = input;
  for (const auto& layer : stack) {
    Matrix<Scalar> z = layer.weights * a;
    z.colwise() += layer.bias;
    Matrix<Scalar> out = detail::activate(z, layer.activation);
    tape.inputs.push_back(std::move(a));
    tape.pre_activations.push_back(std::move(z));
    a = out;
    tape.outputs.push_back(std::move(out));
  }
  return tape;
}

template <typename Scalar>
Matrix<Scalar> apply_stack(const LayerStack<Scalar>& stack, const Matrix<Scalar>& input) {
  if (stack.empty()) throw ShapeError("empty layer stack");
  if (input.rows() != stack.front().in_dim())
    throw ShapeError("input has dim " + std::to_string(input.rows()) + ", network expects " +
                     std::to_string(stack.front().in_dim()));
  Matrix<Scalar> a = input;
  for (const auto& layer : stack) {
    Matrix<Scalar> z = layer.weights * a;
    z.colwise() += layer.bias;
    a = detail::activate(z, layer.activation);
  }
  return a;
}

/// Back-propagates d_output through a recorded stack. Fills per-layer
/// gradients and returns the gradient with respect to the stack input.
template <typename Scalar>
Matrix<Scalar> backprop_stack(const LayerStack<Scalar>& stack, const StackTape<Scalar>& tape,
                              const Matrix<Scalar>& d_output, std::vector<LayerGradient<Scalar>>& grads) {
  if (tape.empty() || tape.outputs.size() != stack.size()) throw InvalidArgument("backward: no recorded forward pass");
  if (d_output.rows() != tape.output().rows() || d_output.cols() != tape.output().cols())
    throw ShapeError("backward: output gradient shape does not match recorded output");
  grads.resize(stack.size());
  Matrix<Scalar> delta = d_output;
  for (std::size_t i = stack.size(); i-- > 0;) {
    const auto& layer = stack[i];
    Matrix<Scalar> dz = delta.cwiseProduct(
        detail::activation_derivative(tape.pre_activations[i], tape.outputs[i], layer.activation));
    grads[i].weights = dz * tape.inputs[i].transpose();
    grads[i].bias = dz.rowwise().sum();
    delta = layer.weights.transpose() * dz;
  }
  return delta;
}

/// Recorded forward pass through encoder and decoder.
template <typename Scalar = double>
struct AutoencoderTape {
  StackTape<Scalar> encoder;
  StackTape<Scalar> decoder;

  bool empty() const { return encoder.empty() || decoder.empty(); }
  const Matrix<Scalar>& embedding() const { return encoder.output(); }
  const Matrix<Scalar>& reconstruction() const { return decoder.output(); }
};

template <typename Scalar>
AutoencoderTape<Scalar> record_forward(const AutoencoderParams<Scalar>& params, const Matrix<Scalar>& batch) {
  AutoencoderTape<Scalar> tape;
  tape.encoder = record_stack(params.encoder, batch);
  tape.decoder = record_stack(params.decoder, tape.encoder.output());
  return tape;
}

/// y = g(x) for a single sample.
template <typename Scalar>
Vector<Scalar> forward_encoder(const AutoencoderParams<Scalar>& params, const Vector<Scalar>& x) {
  return apply_stack(params.encoder, Matrix<Scalar>(x)).col(0);
}

/// Embeds every column of a batch.
template <typename Scalar>
Matrix<Scalar> encode_batch(const AutoencoderParams<Scalar>& params, const Matrix<Scalar>& batch) {
  return apply_stack(params.encoder, batch);
}

template <typename Scalar>
Vector<Scalar> forward_decoder(const AutoencoderParams<Scalar>& params, const Vector<Scalar>& y) {
  return apply_stack(params.decoder, Matrix<Scalar>(y)).col(0);
}

/// Mean over all coordinates of squared differences.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar mse_loss(const Eigen::MatrixBase<DerivedA>& x, const Eigen::MatrixBase<DerivedB>& x_prime) {
  if (x.rows() != x_prime.rows() || x.cols() != x_prime.cols()) throw ShapeError("mse_loss: dimension mismatch");
  if (x.size() == 0) throw InvalidArgument("mse_loss: empty input");
  return (x_prime - x).squaredNorm() / static_cast<typename DerivedA::Scalar>(x.size());
}

/// d mse / d x_prime.
template <typename Scalar>
Matrix<Scalar> mse_gradient(const Matrix<Scalar>& x, const Matrix<Scalar>& x_prime) {
  if (x.rows() != x_prime.rows() || x.cols() != x_prime.cols()) throw ShapeError("mse_gradient: dimension mismatch");
  if (x.size() == 0) throw InvalidArgument("mse_gradient: empty input");
  return (x_prime - x) * (Scalar(2) / static_cast<Scalar>(x.size()));
}

/// Exact gradients of a scalar loss whose partials with respect to the
/// embedding and the reconstruction are supplied. An empty matrix stands for
/// a zero partial.
template <typename Scalar>
GradientSet<Scalar> backward(const AutoencoderParams<Scalar>& params, const AutoencoderTape<Scalar>& tape,
                             const Matrix<Scalar>& d_embedding, const Matrix<Scalar>& d_reconstruction) {
  if (tape.empty()) throw InvalidArgument("backward: no recorded forward pass");
  GradientSet<Scalar> grads;
  const Matrix<Scalar>& recon = tape.reconstruction();
  Matrix<Scalar> d_recon = d_reconstruction.size() == 0 ? Matrix<Scalar>::Zero(recon.rows(), recon.cols())
                                                        : d_reconstruction;
  Matrix<Scalar> d_embed = backprop_stack(params.decoder, tape.decoder, d_recon, grads.decoder);
  if (d_embedding.size() != 0) {
    if (d_embedding.rows() != d_embed.rows() || d_embedding.cols() != d_embed.cols())
      throw ShapeError("backward: embedding gradient shape does not match recorded embedding");
    d_embed += d_embedding;
  }
  backprop_stack(params.encoder, tape.encoder, d_embed, grads.encoder);
  return grads;
}

/// p <- p - effective_lr * grad.
template <typename Scalar>
AutoencoderParams<Scalar> sgd_step(const OptimizerState& opt, AutoencoderParams<Scalar> params,
                                   const GradientSet<Scalar>& grads) {
  if (grads.encoder.size() != params.encoder.size() || grads.decoder.size() != params.decoder.size())
    throw ShapeError("sgd_step: gradient set does not match parameters");
  if (!grads.all_finite()) throw TrainingDivergence("sgd_step: non-finite gradient");
  const Scalar lr = static_cast<Scalar>(opt.effective_lr());
  auto apply = [lr](LayerStack<Scalar>& stack, const std::vector<LayerGradient<Scalar>>& g) {
    for (std::size_t l = 0; l < stack.size(); ++l) {
      if (g[l].weights.rows() != stack[l].weights.rows() || g[l].weights.cols() != stack[l].weights.cols() ||
          g[l].bias.size() != stack[l].bias.size())
        throw ShapeError("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
      stack[l].weights -= lr * g[l].weights;
      stack[l].bias -= lr * g[l].bias;
    }
  };
  apply(params.encoder, grads.encoder);
  apply(params.decoder, grads.decoder);
  return params;
}

struct ArchitectureSpec {
  std::vector<Eigen::Index> encoder_dims;  // input, hidden..., embedding
  Activation hidden = Activation::relu;
  Activation output = Activation::identity;
};

template <typename Scalar>
LayerStack<Scalar> glorot_stack(const std::vector<Eigen::Index>& dims, Activation hidden, Activation output,
                                std::mt19937_64& rng) {
  LayerStack<Scalar> stack;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Eigen::Index in = dims[l], out = dims[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> uni(-limit, limit);
    DenseLayer<Scalar> layer;
    layer.weights.resize(out, in);
    for (Eigen::Index c = 0; c < in; ++c)
      for (Eigen::Index r = 0; r < out; ++r) layer.weights(r, c) = static_cast<Scalar>(uni(rng));
    layer.bias = Vector<Scalar>::Zero(out);
    layer.activation = (l + 2 == dims.size()) ? output : hidden;
    stack.push_back(std::move(layer));
  }
  return stack;
}

/// Glorot-uniform initialisation; the decoder mirrors the encoder dims.
template <typename Scalar = double>
AutoencoderParams<Scalar> make_autoencoder(const ArchitectureSpec& arch, std::uint64_t seed) {
  if (arch.encoder_dims.size() < 2) throw InvalidArgument("architecture: need at least input and embedding dims");
  for (auto d : arch.encoder_dims)
    if (d <= 0) throw InvalidArgument("architecture: layer dims must be positive");
  std::mt19937_64 rng(seed);
  AutoencoderParams<Scalar> params;
  params.encoder = glorot_stack<Scalar>(arch.encoder_dims, arch.hidden, arch.output, rng);
  std::vector<Eigen::Index> mirrored(arch.encoder_dims.rbegin(), arch.encoder_dims.rend());
  params.decoder = glorot_stack<Scalar>(mirrored, arch.hidden, arch.output, rng);
  return params;
}

}  // namespace owr
