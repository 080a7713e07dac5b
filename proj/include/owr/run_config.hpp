#pragma once

// Run configuration: one JSON file per run. Missing keys take defaults;
// unknown keys and out-of-range values raise ConfigError naming the key.

#include "owr/data_domain.hpp"
#include "owr/knowledge_evaluator.hpp"
#include "owr/neural_core.hpp"
#include "owr/objectives.hpp"
#include "owr/open_world_engine.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace owr {

struct DomainConfig {
  int num_identities = 20;
  int samples_per_identity = 30;
  int raw_dim = 32;
  double cluster_spread = 0.1;
  double scale = 1.0;
  double offset = 0.0;  // added to every coordinate
  bool rotate = false;
  int first_identity = 0;
  double enrolled_fraction = 0.5;
  int gallery_per_identity = 10;
};

struct ModelConfig {
  int embed_dim = 16;
  std::vector<int> hidden = {64};
  Activation hidden_activation = Activation::relu;
};

struct TrainConfig {
  int epochs = 60;
  double base_lr = 0.01;
  double gamma = 0.5;
  int decay_every = 20;
  int batch_p = 8;
  int batch_k = 4;
  double margin = 0.3;
  double lambda = 1.0;
  Mining mining = Mining::batch_hard;
};

struct EvaluatorConfig {
  int epochs = 300;
  double lr = 0.1;
  double confidence_threshold = 0.9;
  Standardization standardization = Standardization::per_domain;
  int min_domain_records = 20;
  int bootstrap_epochs = 5;  // ground-truth source episodes used to bootstrap
};

struct StreamSettings {
  double p_same = 0.5;
  int queries_per_epoch = 200;
  int epochs = 10;
  double accept_threshold = 0.5;
  int batch_size = 10;
  double online_lr = 1e-3;
  bool online_updates = true;
  bool freeze_encoder = false;
  int exchange_every = 1;
  int k_negatives = 5;
  int gallery_cap = 50;
  bool adapt_standardization = true;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string data_dir = "data";
  DomainConfig source;
  DomainConfig target{20, 30, 32, 0.1, 5.0, 3.0, true, 1000, 0.5, 10};
  ModelConfig model;
  TrainConfig train;
  EvaluatorConfig evaluator;
  StreamSettings stream;

  /// Defaults form the reference configuration: 20 + 20 disjoint identities,
  /// target domain scaled by 5, randomly rotated and offset by 3 in every
  /// coordinate.
  static RunConfig reference() { return {}; }

  void validate() const;

  DomainSpec source_spec() const;
  DomainSpec target_spec() const;
  ArchitectureSpec architecture() const;
  OptimizerState train_optimizer() const;
  OptimizerState online_optimizer() const;
  FitOptions fit_options() const;
  EpisodeConfig episode() const;
  StreamConfig stream_config(double dmin_threshold) const;
};

/// Named child seeds for each random consumer of a run.
enum class SeedStream : std::uint64_t {
  source_data = 1,
  target_data,
  target_rotation,
  model_init,
  train_batches,
  bootstrap,
  stream,
};

inline std::uint64_t seed_for(const RunConfig& c, SeedStream s) {
  return derive_seed(c.seed, static_cast<std::uint64_t>(s));
}

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string dump_run_config(const RunConfig& config);

}  // namespace owr
