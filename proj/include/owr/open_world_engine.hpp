#pragma once

// The open-world loop: a growing identity registry, nearest-candidate search,
// evaluator-driven accept/enroll decisions, and online reconstruction updates
// of the main model while the target stream is being recognised.

#include "owr/data_domain.hpp"
#include "owr/knowledge_evaluator.hpp"
#include "owr/neural_core.hpp"

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace owr {

/// One gallery member. The raw input is kept so the gallery can be
/// re-embedded after the encoder moves.
struct GalleryEntry {
  VectorXd raw;
  VectorXd embedding;
  Domain domain = Domain::target;
};

/// Open label space: label -> gallery. Labels are never reused and galleries
/// are never empty; each gallery keeps at most `gallery_cap` members (FIFO).
class IdentityRegistry {
 public:
  explicit IdentityRegistry(std::size_t gallery_cap = 50);

  /// Enrolls a new class under a fresh label and returns it.
  int enroll(GalleryEntry entry);
  /// Adds a member to a class with a caller-chosen label (initial galleries);
  /// the class is created if needed and next_label moves past it.
  void add_labeled(int label, GalleryEntry entry);
  /// Appends to an existing class, evicting the oldest member past the cap.
  void append(int label, GalleryEntry entry);

  void reembed(const AutoencoderParams<double>& params);

  bool empty() const { return classes_.empty(); }
  std::size_t size() const { return classes_.size(); }
  int next_label() const { return next_label_; }
  std::size_t gallery_cap() const { return gallery_cap_; }
  const std::map<int, std::deque<GalleryEntry>>& classes() const { return classes_; }
  MatrixXd gallery_matrix(int label) const;

 private:
  std::size_t gallery_cap_;
  int next_label_ = 0;
  std::map<int, std::deque<GalleryEntry>> classes_;
};

struct Candidate {
  int label = 0;
  double d_min = 0;
};

/// Class holding the single nearest gallery embedding; ties go to the smaller
/// label. Throws ColdStart on an empty registry.
Candidate nearest_candidate(const VectorXd& query, const IdentityRegistry& registry);

enum class Decision { accepted, enrolled_new };
const char* to_string(Decision d);

enum class DecisionRule {
  evaluator,       // target evaluator probability vs accept_threshold
  dmin_threshold,  // raw nearest distance vs a source-calibrated threshold
  ground_truth,    // supplied truth; used to harvest labelled source records
};

struct QueryOutcome {
  std::optional<int> candidate_label;  // empty on cold start
  double d_min = 0;
  Decision decision = Decision::enrolled_new;
  int assigned_label = 0;
  double probability = 0;
  std::optional<MetaFeatureRecord> record;  // absent when fewer than two classes exist
};

struct DecideOptions {
  double accept_threshold = 0.5;
  double dmin_threshold = 1.0;  // for dmin_threshold and the single-class fallback
  DecisionRule rule = DecisionRule::evaluator;
  MetaFeatureOptions meta;
  Domain domain = Domain::target;
};

/// Builds the meta-feature record against the nearest candidate, scores it,
/// and either appends the query to the candidate gallery or enrolls it under
/// a fresh label. An empty registry enrolls unconditionally; a single-class
/// registry falls back to the d_min threshold. `truth` is required by the
/// ground_truth rule only.
QueryOutcome decide(const VectorXd& raw, const VectorXd& embedding, IdentityRegistry& registry,
                    const EvaluatorModel& evaluator, const DecideOptions& options,
                    std::optional<bool> truth = std::nullopt);

struct OnlineUpdateResult {
  AutoencoderParams<double> params;
  double mse_before = 0;
};

/// One SGD step on the mean reconstruction loss of a raw target batch
/// (columns). With freeze_encoder only decoder layers move.
OnlineUpdateResult online_update(AutoencoderParams<double> params, const OptimizerState& opt, const MatrixXd& batch,
                                 bool freeze_encoder = false);

/// Same-class / different-class tallies for one epoch.
struct EpochTally {
  long same_total = 0, same_correct = 0;
  long diff_total = 0, diff_correct = 0;
  double mse_sum = 0;
  long mse_batches = 0;

  std::optional<double> same_class_accuracy() const;
  std::optional<double> diff_class_accuracy() const;
  std::optional<double> mean_mse() const;
};

struct EpochMetrics {
  int epoch = 0;
  Domain domain = Domain::target;
  std::optional<double> same_class_acc;
  std::optional<double> diff_class_acc;
  std::optional<double> mse;
  long gated = 0;        // records passed to the exchange at this epoch's end
  long registry_size = 0;
};

struct OutcomeLogRow {
  long query_id = 0;
  int true_label = 0;
  std::optional<int> candidate_label;
  double d_min = 0;
  double probability = 0;
  Decision decision = Decision::enrolled_new;
  int assigned_label = 0;
  int epoch = 0;
};

inline constexpr const char* kOutcomeCsvHeader =
    "query_id,true_label,candidate_label,d_min,probability,decision,assigned_label,epoch";
inline constexpr const char* kMetricsCsvHeader = "epoch,domain,same_class_acc,diff_class_acc,mse";

std::string outcome_csv(const std::vector<OutcomeLogRow>& rows);
std::string metrics_csv(const std::vector<EpochMetrics>& rows);

/// Recomputes per-epoch accuracies from an outcome log alone. Initial gallery
/// labels are true identities; a fresh label's identity is the true label of
/// the query that founded it.
std::map<int, EpochTally> tally_from_log(const std::vector<OutcomeLogRow>& rows);

struct StreamConfig {
  EpisodeConfig episode;
  DecideOptions decide;
  int batch_size = 10;
  bool online_updates = true;
  bool freeze_encoder = false;
  int exchange_every = 1;  // epochs; 0 disables the exchange
  ConfidenceGate gate;
  FitOptions fit;
  bool adapt_standardization = true;  // refresh the target scaler from observed target records
  std::size_t gallery_cap = 50;
  std::uint64_t seed = 0;
};

struct StreamModels {
  AutoencoderParams<double> autoencoder;
  OptimizerState online_opt;
  EvaluatorPair evaluators;
  ExchangePools pools;
};

struct StreamResult {
  std::vector<EpochMetrics> epochs;
  std::vector<OutcomeLogRow> outcomes;
  std::vector<MetaFeatureRecord> last_epoch_records;
  std::vector<double> batch_mse;  // reconstruction MSE of each batch before its update
  StreamModels models;
  std::optional<std::string> halted;  // set when a component error stopped the stream
};

/// Runs the open-world stream over a dataset. Every epoch is one episode that
/// starts from the dataset's gallery split (labelled by true identity); the
/// main model, both evaluators and the exchange pools carry over between
/// epochs. Per query: decide and log; per batch: online update and gallery
/// re-embedding; per exchange_every epochs: gate and exchange.
StreamResult run_stream(const Dataset& data, StreamModels models, const StreamConfig& config);

/// Ground-truth episodes over a labelled dataset, returning one true-labelled
/// record per query that had a candidate and negatives.
std::vector<MetaFeatureRecord> harvest_records(const Dataset& data, const AutoencoderParams<double>& params,
                                               const EpisodeConfig& episode, const MetaFeatureOptions& meta,
                                               std::size_t gallery_cap, std::uint64_t seed);

}  // namespace owr
