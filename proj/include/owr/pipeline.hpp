#pragma once

// End-to-end phases: main-model training on the labelled source domain,
// evaluator bootstrap, and the file-level commands behind the CLI.

#include "owr/run_config.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace owr {

struct TrainingRow {
  int epoch = 0;
  double lr = 0;
  double triplet = 0;
  double mse = 0;
  double combined = 0;
};

inline constexpr const char* kTrainingCsvHeader = "epoch,lr,triplet_loss,mse,combined_loss";
std::string training_csv(const std::vector<TrainingRow>& rows);

/// Triplet + lambda * reconstruction training with P x K identity batches and
/// step-decayed SGD. Appends one averaged row per epoch.
AutoencoderParams<double> train_main_model(const Dataset& source, const RunConfig& config,
                                           std::vector<TrainingRow>* rows = nullptr);

/// Threshold on d_min maximising balanced accuracy on labelled records;
/// accept when d_min <= threshold.
double calibrate_dmin_threshold(const std::vector<MetaFeatureRecord>& records);

struct TrainedModels {
  AutoencoderParams<double> autoencoder;
  EvaluatorPair evaluators;
  std::vector<MetaFeatureRecord> source_records;
  double dmin_threshold = 0;
  std::vector<TrainingRow> rows;
};

/// Source evaluator fitted on true-labelled source records; the target
/// evaluator starts from the same records.
EvaluatorPair bootstrap_evaluators(const std::vector<MetaFeatureRecord>& source_records, const FitOptions& options);

TrainedModels train_pipeline(const Dataset& source, const RunConfig& config);

StreamModels stream_models(const TrainedModels& trained, const RunConfig& config);

// File-level commands. Output directories are created when missing.
struct GeneratedPaths {
  std::string source_csv, source_manifest, target_csv, target_manifest;
};
GeneratedPaths cmd_gen_data(const RunConfig& config);
TrainedModels cmd_train(const RunConfig& config, const std::string& out_dir);
StreamResult cmd_stream(const RunConfig& config, const std::string& snapshots_dir, const std::string& out_dir);

void save_trained(const std::string& dir, const TrainedModels& trained);
TrainedModels load_trained(const std::string& dir);

std::string meta_records_csv(const std::vector<MetaFeatureRecord>& records);
std::vector<MetaFeatureRecord> parse_meta_records_csv(const std::string& text);

}  // namespace owr
