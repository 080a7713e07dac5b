#include "owr/data_domain.hpp"

#include "owr/text_io.hpp"

#include <Eigen/QR>
#include <json.hpp>
#include <openssl/evp.h>

#include <filesystem>
#include <map>
#include <random>
#include <sstream>

namespace owr {

const char* to_string(Split s) { return s == Split::gallery ? "gallery" : "query"; }

Split parse_split(const std::string& text) {
  if (text == "gallery") return Split::gallery;
  if (text == "query") return Split::query;
  throw DataError("unknown split '" + text + "'");
}

MatrixXd DomainTransform::rotation(int dim) const {
  if (!rotation_seed) return MatrixXd::Identity(dim, dim);
  std::mt19937_64 rng(*rotation_seed);
  std::normal_distribution<double> normal;
  MatrixXd g(dim, dim);
  for (int c = 0; c < dim; ++c)
    for (int r = 0; r < dim; ++r) g(r, c) = normal(rng);
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ();
  const MatrixXd rr = qr.matrixQR().triangularView<Eigen::Upper>();
  // Sign fix makes Q Haar-distributed and independent of the QR convention.
  for (int c = 0; c < dim; ++c)
    if (rr(c, c) < 0) q.col(c) = -q.col(c);
  return q;
}

void DomainSpec::validate() const {
  if (num_identities < 2) throw InvalidArgument("domain spec: num_identities must be >= 2");
  if (samples_per_identity < 1) throw InvalidArgument("domain spec: samples_per_identity must be >= 1");
  if (raw_dim < 1) throw InvalidArgument("domain spec: raw_dim must be >= 1");
  if (!(cluster_spread > 0.0)) throw InvalidArgument("domain spec: cluster_spread must be > 0");
  if (!(transform.scale > 0.0)) throw InvalidArgument("domain spec: transform scale must be > 0");
  if (transform.offset.size() != 0 && transform.offset.size() != raw_dim)
    throw InvalidArgument("domain spec: offset length must equal raw_dim");
  if (!(enrolled_fraction >= 0.0 && enrolled_fraction <= 1.0))
    throw InvalidArgument("domain spec: enrolled_fraction must lie in [0, 1]");
  if (gallery_per_identity < 0 || gallery_per_identity > samples_per_identity)
    throw InvalidArgument("domain spec: gallery_per_identity must lie in [0, samples_per_identity]");
}

int DomainSpec::enrolled_identities() const {
  return static_cast<int>(std::lround(enrolled_fraction * num_identities));
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == split) out.push_back(i);
  return out;
}

std::set<int> Dataset::identities(std::optional<Split> split) const {
  std::set<int> ids;
  for (const auto& s : samples)
    if (!split || s.split == *split) ids.insert(s.identity);
  return ids;
}

MatrixXd Dataset::matrix(const std::vector<std::size_t>& rows) const {
  MatrixXd m(raw_dim, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = samples.at(rows[i]).x;
  return m;
}

Dataset generate_domain(const DomainSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const MatrixXd rot = spec.transform.rotation(spec.raw_dim);
  const VectorXd offset =
      spec.transform.offset.size() ? spec.transform.offset : VectorXd::Zero(spec.raw_dim);
  const int enrolled = spec.enrolled_identities();

  Dataset data;
  data.raw_dim = spec.raw_dim;
  data.domain_tag = spec.domain_tag;
  data.seed = seed;
  for (int id = 0; id < spec.num_identities; ++id) {
    VectorXd center(spec.raw_dim);
    for (int d = 0; d < spec.raw_dim; ++d) center(d) = normal(rng);
    for (int s = 0; s < spec.samples_per_identity; ++s) {
      VectorXd x = center;
      for (int d = 0; d < spec.raw_dim; ++d) x(d) += spec.cluster_spread * normal(rng);
      Sample sample;
      sample.x = spec.transform.scale * (rot * x) + offset;
      sample.identity = spec.first_identity + id;
      sample.domain = spec.domain_tag;
      sample.split = (id < enrolled && s < spec.gallery_per_identity) ? Split::gallery : Split::query;
      data.samples.push_back(std::move(sample));
    }
  }
  return data;
}

double separation_ratio(const Dataset& data) {
  double within = 0, between = 0;
  long nw = 0, nb = 0;
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    for (std::size_t j = i + 1; j < data.samples.size(); ++j) {
      const double d = (data.samples[i].x - data.samples[j].x).norm();
      if (data.samples[i].identity == data.samples[j].identity) {
        within += d;
        ++nw;
      } else {
        between += d;
        ++nb;
      }
    }
  if (nw == 0 || nb == 0 || within == 0.0) throw InvalidArgument("separation_ratio: need repeated and distinct identities");
  return (between / static_cast<double>(nb)) / (within / static_cast<double>(nw));
}

double nearest_center_accuracy(const Dataset& data) {
  std::map<int, std::pair<VectorXd, int>> sums;
  for (const auto& s : data.samples) {
    auto [it, inserted] = sums.try_emplace(s.identity, VectorXd::Zero(data.raw_dim), 0);
    it->second.first += s.x;
    ++it->second.second;
  }
  std::vector<std::pair<int, VectorXd>> centers;
  for (const auto& [id, acc] : sums) centers.emplace_back(id, acc.first / acc.second);
  long correct = 0;
  for (const auto& s : data.samples) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& [id, c] : centers) {
      const double d = (s.x - c).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = id;
      }
    }
    correct += best == s.identity;
  }
  return static_cast<double>(correct) / static_cast<double>(data.samples.size());
}

std::string dataset_csv(const Dataset& data) {
  std::string out = "id,domain,split";
  for (int d = 0; d < data.raw_dim; ++d) out += ",f" + std::to_string(d);
  out += '\n';
  for (const auto& s : data.samples) {
    out += std::to_string(s.identity);
    out += ',';
    out += to_string(s.domain);
    out += ',';
    out += to_string(s.split);
    for (Eigen::Index d = 0; d < s.x.size(); ++d) {
      out += ',';
      out += format_double(s.x(d));
    }
    out += '\n';
  }
  return out;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

std::string manifest_path_for(const std::string& csv_path) {
  return std::filesystem::path(csv_path).replace_extension(".json").string();
}

DatasetManifest save_dataset(const std::string& path, const Dataset& data) {
  const std::string csv = dataset_csv(data);
  DatasetManifest m;
  m.raw_dim = data.raw_dim;
  m.gallery_count = static_cast<int>(data.indices(Split::gallery).size());
  m.query_count = static_cast<int>(data.indices(Split::query).size());
  m.domain_tag = data.domain_tag;
  m.seed = data.seed;
  m.checksum = sha256_hex(csv);
  nlohmann::ordered_json j;
  j["raw_dim"] = m.raw_dim;
  j["counts"] = {{"gallery", m.gallery_count}, {"query", m.query_count}};
  j["domain_tag"] = to_string(m.domain_tag);
  j["seed"] = m.seed;
  j["checksum"] = m.checksum;
  write_file(path, csv);
  write_file(manifest_path_for(path), j.dump(2) + "\n");
  return m;
}

Dataset parse_dataset_csv(const std::string& contents) {
  std::istringstream in(contents);
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset: empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "id" || header[1] != "domain" || header[2] != "split")
    throw DataError("dataset: header must start with id,domain,split");
  const int dim = static_cast<int>(header.size()) - 3;
  for (int d = 0; d < dim; ++d)
    if (header[static_cast<std::size_t>(d) + 3] != "f" + std::to_string(d))
      throw DataError("dataset: feature column " + std::to_string(d) + " must be named f" + std::to_string(d));
  Dataset data;
  data.raw_dim = dim;
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (static_cast<int>(f.size()) != dim + 3)
      throw DataError("dataset: row " + std::to_string(row) + " has " + std::to_string(f.size()) + " fields");
    Sample s;
    s.identity = static_cast<int>(parse_long(f[0]));
    s.domain = parse_domain(f[1]);
    s.split = parse_split(f[2]);
    s.x.resize(dim);
    for (int d = 0; d < dim; ++d) s.x(d) = parse_double(f[static_cast<std::size_t>(d) + 3]);
    data.samples.push_back(std::move(s));
  }
  if (data.samples.empty()) throw DataError("dataset: no rows");
  data.domain_tag = data.samples.front().domain;
  return data;
}

Dataset load_dataset(const std::string& path) {
  const std::string csv = read_file(path);
  const std::string mpath = manifest_path_for(path);
  if (!std::filesystem::exists(mpath)) return parse_dataset_csv(csv);

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(mpath));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + mpath + "': " + e.what());
  }
  if (!j.contains("checksum") || !j["checksum"].is_string()) throw DataError("manifest: missing checksum");
  if (sha256_hex(csv) != j["checksum"].get<std::string>())
    throw DataError("dataset '" + path + "': checksum mismatch with manifest");
  Dataset data = parse_dataset_csv(csv);
  try {
    if (j.at("raw_dim").get<int>() != data.raw_dim) throw DataError("dataset: raw_dim differs from manifest");
    if (j.at("counts").at("gallery").get<std::size_t>() != data.indices(Split::gallery).size() ||
        j.at("counts").at("query").get<std::size_t>() != data.indices(Split::query).size())
      throw DataError("dataset: split counts differ from manifest");
    data.domain_tag = parse_domain(j.at("domain_tag").get<std::string>());
    data.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + mpath + "': " + e.what());
  }
  return data;
}

void EpisodeConfig::validate() const {
  if (!(p_same >= 0.0 && p_same <= 1.0)) throw InvalidArgument("episode: p_same must lie in [0, 1]");
  if (queries_per_epoch < 1) throw InvalidArgument("episode: queries_per_epoch must be >= 1");
  if (epochs < 0) throw InvalidArgument("episode: epochs must be >= 0");
}

std::vector<std::size_t> mixed_sampler(const Dataset& data, const std::set<int>& enrolled, const EpisodeConfig& config,
                                       std::uint64_t seed) {
  config.validate();
  std::map<int, std::vector<std::size_t>> known, novel;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    if (s.split != Split::query) continue;
    (enrolled.count(s.identity) ? known : novel)[s.identity].push_back(i);
  }
  if (config.p_same < 1.0 && novel.empty())
    throw InvalidArgument("mixed_sampler: no held-out identities while p_same < 1");
  if (config.p_same > 0.0 && known.empty())
    throw InvalidArgument("mixed_sampler: no enrolled identities with query samples while p_same > 0");
  std::vector<const std::vector<std::size_t>*> known_ids, novel_ids;
  for (const auto& [id, rows] : known) known_ids.push_back(&rows);
  for (const auto& [id, rows] : novel) novel_ids.push_back(&rows);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<std::size_t> stream;
  stream.reserve(static_cast<std::size_t>(config.queries_per_epoch));
  for (int q = 0; q < config.queries_per_epoch; ++q) {
    const auto& pool = coin(rng) < config.p_same ? known_ids : novel_ids;
    const auto& rows = *pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    stream.push_back(rows[std::uniform_int_distribution<std::size_t>(0, rows.size() - 1)(rng)]);
  }
  return stream;
}

}  // namespace owr
