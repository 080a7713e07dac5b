#pragma once

#include "owr/common.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <vector>

namespace owr {

enum class Mining { batch_hard, all_valid };

struct TripletConfig {
  double margin = 0.3;
  Mining mining = Mining::batch_hard;

  void validate() const {
    if (!(margin >= 0.0) || !std::isfinite(margin)) throw InvalidArgument("triplet: margin must be >= 0");
  }
};

/// Euclidean distance between every pair of columns. Computed from explicit
/// differences rather than the Gram expansion so tiny distances stay exact.
template <typename Derived>
Matrix<typename Derived::Scalar> pairwise_distances(const Eigen::MatrixBase<Derived>& embeddings) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = embeddings.cols();
  if (n == 0) throw InvalidArgument("pairwise_distances: empty embedding list");
  Matrix<Scalar> d = Matrix<Scalar>::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const Scalar v = (embeddings.col(i) - embeddings.col(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  return d;
}

/// Overload for a list of separately stored vectors.
template <typename Scalar>
Matrix<Scalar> pairwise_distances(const std::vector<Vector<Scalar>>& embeddings) {
  if (embeddings.empty()) throw InvalidArgument("pairwise_distances: empty embedding list");
  Matrix<Scalar> packed(embeddings.front().size(), static_cast<Eigen::Index>(embeddings.size()));
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != packed.rows()) throw ShapeError("pairwise_distances: dimension mismatch");
    packed.col(static_cast<Eigen::Index>(i)) = embeddings[i];
  }
  return pairwise_distances(packed);
}

template <typename Scalar = double>
struct TripletResult {
  Scalar loss = 0;
  Matrix<Scalar> d_embeddings;  // same shape as the input embeddings
  int anchors = 0;              // anchors (batch_hard) or triplets (all_valid) averaged over
};

namespace detail {

// d ||a - b|| / d a, zero at coincident points.
template <typename Scalar, typename A, typename B>
Vector<Scalar> unit_direction(const A& a, const B& b, Scalar dist) {
  if (dist <= Scalar(0)) return Vector<Scalar>::Zero(a.size());
  return (a - b) / dist;
}

}  // namespace detail

/// Triplet loss on one batch. batch_hard: per anchor, hardest positive and
/// hardest negative, hinge averaged over anchors that have a positive.
/// Anchors whose identity is a singleton are skipped; a batch with fewer than
/// two identities or without any anchor is rejected.
template <typename Derived>
TripletResult<typename Derived::Scalar> batch_hard_triplet_loss(const Eigen::MatrixBase<Derived>& embeddings,
                                                               const std::vector<int>& labels,
                                                               const TripletConfig& config = {}) {
  using Scalar = typename Derived::Scalar;
  config.validate();
  const Eigen::Index n = embeddings.cols();
  if (static_cast<std::size_t>(n) != labels.size()) throw ShapeError("triplet: labels and embeddings differ in count");
  std::map<int, int> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2) throw InvalidBatch("triplet: batch needs at least two identities");
  bool any_anchor = false;
  for (const auto& [label, c] : counts) any_anchor |= c >= 2;
  if (!any_anchor) throw InvalidBatch("triplet: every identity in the batch is a singleton");

  const Matrix<Scalar> dist = pairwise_distances(embeddings);
  const Scalar margin = static_cast<Scalar>(config.margin);
  TripletResult<Scalar> out;
  out.d_embeddings = Matrix<Scalar>::Zero(embeddings.rows(), n);

  auto accumulate = [&](Eigen::Index a, Eigen::Index p, Eigen::Index q, Scalar weight) {
    const auto g_ap = detail::unit_direction<Scalar>(embeddings.col(a), embeddings.col(p), dist(a, p));
    const auto g_an = detail::unit_direction<Scalar>(embeddings.col(a), embeddings.col(q), dist(a, q));
    out.d_embeddings.col(a) += weight * (g_ap - g_an);
    out.d_embeddings.col(p) -= weight * g_ap;
    out.d_embeddings.col(q) += weight * g_an;
  };

  if (config.mining == Mining::batch_hard) {
    struct Pick { Eigen::Index a, p, n; Scalar hinge; };
    std::vector<Pick> picks;
    for (Eigen::Index a = 0; a < n; ++a) {
      if (counts[labels[a]] < 2) continue;
      Eigen::Index hard_p = -1, hard_n = -1;
      Scalar d_p = -std::numeric_limits<Scalar>::infinity();
      Scalar d_n = std::numeric_limits<Scalar>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == a) continue;
        if (labels[j] == labels[a]) {
          if (dist(a, j) > d_p) { d_p = dist(a, j); hard_p = j; }
        } else if (dist(a, j) < d_n) {
          d_n = dist(a, j);
          hard_n = j;
        }
      }
      picks.push_back({a, hard_p, hard_n, d_p - d_n + margin});
    }
    out.anchors = static_cast<int>(picks.size());
    const Scalar w = Scalar(1) / static_cast<Scalar>(picks.size());
    for (const auto& pk : picks) {
      if (pk.hinge <= Scalar(0)) continue;
      out.loss += pk.hinge * w;
      accumulate(pk.a, pk.p, pk.n, w);
    }
    return out;
  }

  // all_valid: mean hinge over every (a, p, n) with label(a) == label(p) != label(n).
  struct Triplet { Eigen::Index a, p, n; Scalar hinge; };
  std::vector<Triplet> triplets;
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (Eigen::Index q = 0; q < n; ++q)
        if (labels[q] != labels[a]) triplets.push_back({a, p, q, dist(a, p) - dist(a, q) + margin});
    }
  out.anchors = static_cast<int>(triplets.size());
  const Scalar w = Scalar(1) / static_cast<Scalar>(triplets.size());
  for (const auto& t : triplets) {
    if (t.hinge <= Scalar(0)) continue;
    out.loss += t.hinge * w;
    accumulate(t.a, t.p, t.n, w);
  }
  return out;
}

/// triplet + lambda * mse.
inline double combined_source_loss(double triplet_loss, double source_mse, double weight_lambda = 1.0) {
  if (!std::isfinite(triplet_loss) || !std::isfinite(source_mse) || !std::isfinite(weight_lambda))
    throw InvalidArgument("combined_source_loss: non-finite input");
  if (weight_lambda < 0.0) throw InvalidArgument("combined_source_loss: lambda must be >= 0");
  return triplet_loss + weight_lambda * source_mse;
}

}  // namespace owr
