#pragma once

// Coefficient-of-variation statistics over anchor-positive / anchor-negative
// distance sets, and the 8-dim meta-feature vector the evaluators consume.

#include "owr/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace owr {

/// Population standard deviation over mean, in percent. Returns 0 when the
/// mean is 0 (all entries zero).
template <typename Scalar>
Scalar coefficient_of_variation(std::span<const Scalar> values) {
  if (values.empty()) throw InvalidArgument("coefficient_of_variation: empty list");
  Scalar sum = 0;
  for (Scalar v : values) {
    if (!std::isfinite(v)) throw InvalidArgument("coefficient_of_variation: non-finite entry");
    if (v < Scalar(0)) throw InvalidArgument("coefficient_of_variation: negative entry");
    sum += v;
  }
  const Scalar mean = sum / static_cast<Scalar>(values.size());
  if (mean == Scalar(0)) return Scalar(0);
  Scalar ss = 0;
  for (Scalar v : values) ss += (v - mean) * (v - mean);
  const Scalar sigma = std::sqrt(ss / static_cast<Scalar>(values.size()));
  return sigma / mean * Scalar(100);
}

template <typename Scalar>
Scalar coefficient_of_variation(const std::vector<Scalar>& values) {
  return coefficient_of_variation(std::span<const Scalar>(values));
}

/// (cv_ap - cv_an) / (cv_ap + cv_an); 0 when both are 0.
template <typename Scalar>
Scalar mycv(Scalar cv_ap, Scalar cv_an) {
  if (!(cv_ap >= Scalar(0)) || !(cv_an >= Scalar(0))) throw InvalidArgument("mycv: inputs must be non-negative");
  const Scalar denom = cv_ap + cv_an;
  if (denom == Scalar(0)) return Scalar(0);
  return (cv_ap - cv_an) / denom;
}

enum class LabelKind { true_label, soft_label };

inline const char* to_string(LabelKind k) { return k == LabelKind::true_label ? "true_label" : "soft_label"; }

inline constexpr int kMetaFeatureDim = 8;

/// E(i): CV statistics and raw distance statistics of one query against a
/// candidate class, plus label provenance.
struct MetaFeatureRecord {
  double cv_ap = 0, cv_an = 0, mycv = 0;
  double mu_ap = 0, mu_an = 0;
  double sigma_ap = 0, sigma_an = 0;
  double d_min = 0;
  std::optional<int> label;  // 1 same class, 0 different class
  LabelKind label_kind = LabelKind::true_label;
  Domain domain = Domain::source;
  std::optional<double> confidence;

  /// Order: cv_ap, cv_an, mycv, mu_ap, mu_an, sigma_ap, sigma_an, d_min.
  VectorXd features() const {
    VectorXd f(kMetaFeatureDim);
    f << cv_ap, cv_an, mycv, mu_ap, mu_an, sigma_ap, sigma_an, d_min;
    return f;
  }
};

/// Indices into features() of the scale-free coordinates.
inline constexpr int kScaleFreeFeatures[] = {0, 1, 2};

inline constexpr const char* kMetaCsvHeader =
    "cv_ap,cv_an,mycv,mu_ap,mu_an,sigma_ap,sigma_an,d_min,label,label_kind,domain,confidence";

std::string to_csv_row(const MetaFeatureRecord& record);
MetaFeatureRecord parse_meta_csv_row(const std::string& line);

struct DistanceStats {
  double mean = 0, sigma = 0, cv = 0, min = 0;
};

template <typename Scalar>
DistanceStats describe_distances(const std::vector<Scalar>& d) {
  DistanceStats s;
  s.cv = static_cast<double>(coefficient_of_variation(d));
  double sum = 0;
  for (Scalar v : d) sum += static_cast<double>(v);
  s.mean = sum / static_cast<double>(d.size());
  double ss = 0;
  for (Scalar v : d) ss += (static_cast<double>(v) - s.mean) * (static_cast<double>(v) - s.mean);
  s.sigma = std::sqrt(ss / static_cast<double>(d.size()));
  s.min = static_cast<double>(*std::min_element(d.begin(), d.end()));
  return s;
}

struct MetaFeatureOptions {
  int k_negatives = 5;  // nearest non-candidate galleries pooled into AN
};

/// Builds the record for `anchor` against a candidate gallery (columns) and
/// the other galleries. AN pools every member of the k galleries whose
/// nearest member is closest to the anchor; ties keep gallery order.
template <typename Scalar>
MetaFeatureRecord extract_meta_features(const Vector<Scalar>& anchor, const Matrix<Scalar>& candidate_gallery,
                                        const std::vector<Matrix<Scalar>>& negative_galleries, Domain domain,
                                        std::optional<int> label = std::nullopt,
                                        const MetaFeatureOptions& options = {}) {
  if (candidate_gallery.cols() == 0) throw InvalidArgument("extract_meta_features: empty candidate gallery");
  if (options.k_negatives < 1) throw InvalidArgument("extract_meta_features: k_negatives must be >= 1");
  auto distances_to = [&](const Matrix<Scalar>& gallery) {
    if (gallery.rows() != anchor.size()) throw ShapeError("extract_meta_features: gallery dimension mismatch");
    std::vector<Scalar> d(static_cast<std::size_t>(gallery.cols()));
    for (Eigen::Index j = 0; j < gallery.cols(); ++j) d[static_cast<std::size_t>(j)] = (gallery.col(j) - anchor).norm();
    return d;
  };

  const std::vector<Scalar> ap = distances_to(candidate_gallery);

  struct Ranked { Scalar nearest; std::size_t index; std::vector<Scalar> d; };
  std::vector<Ranked> ranked;
  for (std::size_t g = 0; g < negative_galleries.size(); ++g) {
    if (negative_galleries[g].cols() == 0) continue;
    auto d = distances_to(negative_galleries[g]);
    const Scalar nearest = *std::min_element(d.begin(), d.end());
    ranked.push_back({nearest, g, std::move(d)});
  }
  if (ranked.empty()) throw InvalidArgument("extract_meta_features: no negatives available");
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    return a.nearest != b.nearest ? a.nearest < b.nearest : a.index < b.index;
  });
  const std::size_t k = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(options.k_negatives));
  std::vector<Scalar> an;
  for (std::size_t i = 0; i < k; ++i) an.insert(an.end(), ranked[i].d.begin(), ranked[i].d.end());

  const DistanceStats sap = describe_distances(ap);
  const DistanceStats san = describe_distances(an);
  MetaFeatureRecord r;
  r.cv_ap = sap.cv;
  r.cv_an = san.cv;
  r.mycv = mycv(r.cv_ap, r.cv_an);
  r.mu_ap = sap.mean;
  r.mu_an = san.mean;
  r.sigma_ap = sap.sigma;
  r.sigma_an = san.sigma;
  r.d_min = sap.min;
  r.label = label;
  r.label_kind = LabelKind::true_label;
  r.domain = domain;
  // The candidate set is the positive set, so its minimum cannot exceed its mean
  // beyond rounding.
  if (r.d_min > r.mu_ap * (1.0 + 1e-12) + 1e-300)
    throw Error("extract_meta_features: d_min exceeds mu_ap");
  return r;
}

}  // namespace owr
