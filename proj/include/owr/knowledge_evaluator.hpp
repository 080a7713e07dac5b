#pragma once

// Logistic-regression knowledge evaluators (one per domain) over meta-feature
// records, confidence gating of soft labels, and the cross-domain exchange.

#include "owr/meta_characteristics.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace owr {

/// How fit() standardizes a mixed-domain record pool.
enum class Standardization {
  pooled,      // one mean/std over every record
  per_domain,  // each domain's records by that domain's own mean/std
};

struct FeatureScaler {
  VectorXd means;
  VectorXd stds;

  bool empty() const { return means.size() == 0; }
  VectorXd apply(const VectorXd& raw) const { return (raw - means).cwiseQuotient(stds); }

  static constexpr double kMinStd = 1e-8;
  static FeatureScaler fit(const std::vector<const MetaFeatureRecord*>& records);
};

struct EvaluatorModel {
  VectorXd weights = VectorXd::Zero(kMetaFeatureDim);
  double bias = 0.0;
  FeatureScaler scaler;  // feature_means / feature_stds
  Domain domain = Domain::source;
  long records_seen = 0;

  bool fitted() const { return !scaler.empty(); }
  static EvaluatorModel unfitted(Domain domain);
};

/// w . standardize(E) + b
double decision_margin(const EvaluatorModel& model, const MetaFeatureRecord& record);

/// Probability that the query belongs to the candidate class.
double predict(const EvaluatorModel& model, const MetaFeatureRecord& record);

struct FitOptions {
  int epochs = 300;
  double lr = 0.1;
  bool class_balance = true;
  Standardization standardization = Standardization::per_domain;
  int min_domain_records = 20;  // per_domain: smaller domains fall back to pooled stats
};

/// Weighted logistic loss of `model` on labeled records, using the same
/// weighting fit() uses (class balance x confidence for soft labels).
double logistic_loss(const EvaluatorModel& model, const std::vector<MetaFeatureRecord>& records,
                     const FitOptions& options = {});

using DomainScalers = std::map<Domain, FeatureScaler>;

/// Refits standardization on `records` and runs full-batch gradient descent,
/// warm-starting from the current weights. Soft-labeled records are weighted
/// by their confidence. In per_domain mode a scaler supplied in `scalers`
/// takes precedence over the one estimated from that domain's records.
/// Optionally records the loss before each epoch and after the last one.
EvaluatorModel fit(EvaluatorModel model, const std::vector<MetaFeatureRecord>& records, const FitOptions& options = {},
                   std::vector<double>* loss_trace = nullptr, const DomainScalers* scalers = nullptr);

/// Replaces the model's standardization with stats of unlabeled records from
/// its own domain; weights are untouched.
EvaluatorModel adapt_standardization(EvaluatorModel model, const std::vector<MetaFeatureRecord>& records);

struct ConfidenceGate {
  double threshold = 0.9;
  void validate() const;
};

struct ScoredRecord {
  MetaFeatureRecord record;
  double probability = 0.5;
};

/// Keeps records with max(p, 1 - p) >= threshold and attaches soft labels.
std::vector<MetaFeatureRecord> gate_confident(const ConfidenceGate& gate, const std::vector<ScoredRecord>& scored);

struct ExchangeBatch {
  std::vector<MetaFeatureRecord> records;
  Domain from_domain = Domain::target;
  int issued_at_epoch = 0;

  void validate(const ConfidenceGate& gate) const;
};

struct EvaluatorPair {
  EvaluatorModel source;
  EvaluatorModel target;
};

/// Growing training pools shared by both evaluators.
struct ExchangePools {
  std::vector<MetaFeatureRecord> source_records;  // true labels
  std::vector<MetaFeatureRecord> gated_records;   // soft labels, accumulated across rounds

  std::vector<MetaFeatureRecord> union_records() const;
};

/// One exchange round: the batch joins the gated pool, then both evaluators
/// refit on source records plus every gated record so far.
EvaluatorPair exchange(const EvaluatorPair& models, ExchangePools& pools, const ExchangeBatch& batch,
                       const ConfidenceGate& gate, const FitOptions& options = {},
                       const DomainScalers* scalers = nullptr);

/// Plain-text snapshot: n, weights, bias, means, stds, domain, records_seen.
void save_evaluator(std::ostream& out, const EvaluatorModel& model);
EvaluatorModel load_evaluator(std::istream& in);
void save_evaluator(const std::string& path, const EvaluatorModel& model);
EvaluatorModel load_evaluator(const std::string& path);

}  // namespace owr
