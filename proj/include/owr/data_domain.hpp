#pragma once

// Synthetic two-domain data, dataset files and the mixed query sampler.

#include "owr/common.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace owr {

enum class Split { gallery, query };

const char* to_string(Split s);
Split parse_split(const std::string& text);

/// scale * R * x + offset, with R a seeded random rotation (identity when no
/// seed is given). Multiplies every pairwise distance by exactly `scale`.
struct DomainTransform {
  double scale = 1.0;
  VectorXd offset;                            // empty means zero
  std::optional<std::uint64_t> rotation_seed; // nullopt means identity

  MatrixXd rotation(int dim) const;
};

struct DomainSpec {
  int num_identities = 20;
  int samples_per_identity = 30;
  int raw_dim = 32;
  double cluster_spread = 0.1;  // per-coordinate noise std around unit-variance centers
  DomainTransform transform;
  Domain domain_tag = Domain::source;
  int first_identity = 0;          // identity ids are first_identity .. first_identity + n - 1
  double enrolled_fraction = 0.5;  // leading identities with a gallery
  int gallery_per_identity = 10;

  void validate() const;
  int enrolled_identities() const;
};

struct Sample {
  VectorXd x;
  int identity = 0;
  Domain domain = Domain::source;
  Split split = Split::query;
};

struct Dataset {
  int raw_dim = 0;
  Domain domain_tag = Domain::source;
  std::uint64_t seed = 0;
  std::vector<Sample> samples;

  std::vector<std::size_t> indices(Split split) const;
  std::set<int> identities(std::optional<Split> split = std::nullopt) const;
  /// Samples as columns.
  MatrixXd matrix(const std::vector<std::size_t>& rows) const;
};

/// Centers ~ N(0, I), samples = center + N(0, spread^2 I), then transformed.
Dataset generate_domain(const DomainSpec& spec, std::uint64_t seed);

/// Mean between-identity distance over mean within-identity distance.
double separation_ratio(const Dataset& data);

/// Accuracy of assigning every sample to the nearest identity centroid, with
/// centroids from the known labels.
double nearest_center_accuracy(const Dataset& data);

struct DatasetManifest {
  int raw_dim = 0;
  int gallery_count = 0;
  int query_count = 0;
  Domain domain_tag = Domain::source;
  std::uint64_t seed = 0;
  std::string checksum;  // sha256 of the CSV bytes, lowercase hex
};

std::string dataset_csv(const Dataset& data);
std::string sha256_hex(const std::string& bytes);
std::string manifest_path_for(const std::string& csv_path);

/// Writes <path> and its manifest alongside (same stem, .json).
DatasetManifest save_dataset(const std::string& path, const Dataset& data);

/// Loads a dataset CSV. When a manifest exists alongside, its checksum and
/// counts are verified; a CSV without a manifest is accepted as an ingested
/// feature file.
Dataset load_dataset(const std::string& path);
Dataset parse_dataset_csv(const std::string& contents);

struct EpisodeConfig {
  double p_same = 0.5;
  int queries_per_epoch = 200;
  int epochs = 10;

  void validate() const;
};

/// Query stream over the query split: each query comes, with probability
/// p_same, from an identity in `enrolled` and otherwise from a held-out one;
/// identity first, then sample, both uniform.
std::vector<std::size_t> mixed_sampler(const Dataset& data, const std::set<int>& enrolled, const EpisodeConfig& config,
                                       std::uint64_t seed);

}  // namespace owr
