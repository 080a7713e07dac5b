#include "owr/run_config.hpp"

#include "owr/text_io.hpp"

#include <json.hpp>

#include <cmath>
#include <set>

namespace owr {

using nlohmann::json;

namespace {

// Reads an object's members by name and remembers which were consumed so the
// leftovers can be reported as unknown keys.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& slot) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      slot = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(name(key) + ": wrong type");
    }
  }

  Section child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    auto it = j_.find(key);
    return Section(it == j_.end() ? empty : *it, name(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + name(it.key().c_str()) + "'");
  }

  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& key, const std::string& rule) {
  if (!ok) throw ConfigError("config key '" + key + "' " + rule);
}

void read_domain(Section s, DomainConfig& d) {
  s.read("num_identities", d.num_identities);
  s.read("samples_per_identity", d.samples_per_identity);
  s.read("raw_dim", d.raw_dim);
  s.read("cluster_spread", d.cluster_spread);
  s.read("scale", d.scale);
  s.read("offset", d.offset);
  s.read("rotate", d.rotate);
  s.read("first_identity", d.first_identity);
  s.read("enrolled_fraction", d.enrolled_fraction);
  s.read("gallery_per_identity", d.gallery_per_identity);
  s.finish();
}

void validate_domain(const DomainConfig& d, const std::string& p) {
  require(d.num_identities >= 2, p + ".num_identities", "must be >= 2");
  require(d.samples_per_identity >= 1, p + ".samples_per_identity", "must be >= 1");
  require(d.raw_dim >= 1, p + ".raw_dim", "must be >= 1");
  require(d.cluster_spread > 0.0 && std::isfinite(d.cluster_spread), p + ".cluster_spread", "must be > 0");
  require(d.scale > 0.0 && std::isfinite(d.scale), p + ".scale", "must be > 0");
  require(std::isfinite(d.offset), p + ".offset", "must be finite");
  require(d.first_identity >= 0, p + ".first_identity", "must be >= 0");
  require(d.enrolled_fraction >= 0.0 && d.enrolled_fraction <= 1.0, p + ".enrolled_fraction", "must lie in [0, 1]");
  require(d.gallery_per_identity >= 0 && d.gallery_per_identity <= d.samples_per_identity,
          p + ".gallery_per_identity", "must lie in [0, samples_per_identity]");
}

json domain_json(const DomainConfig& d) {
  return {{"num_identities", d.num_identities}, {"samples_per_identity", d.samples_per_identity},
          {"raw_dim", d.raw_dim}, {"cluster_spread", d.cluster_spread}, {"scale", d.scale},
          {"offset", d.offset}, {"rotate", d.rotate}, {"first_identity", d.first_identity},
          {"enrolled_fraction", d.enrolled_fraction}, {"gallery_per_identity", d.gallery_per_identity}};
}

template <typename Enum>
Enum parse_enum(const std::string& text, const std::string& key, std::initializer_list<std::pair<const char*, Enum>> options) {
  for (const auto& [name, value] : options)
    if (text == name) return value;
  throw ConfigError("config key '" + key + "' has unknown value '" + text + "'");
}

DomainSpec to_spec(const DomainConfig& d, Domain tag, std::optional<std::uint64_t> rotation_seed) {
  DomainSpec s;
  s.num_identities = d.num_identities;
  s.samples_per_identity = d.samples_per_identity;
  s.raw_dim = d.raw_dim;
  s.cluster_spread = d.cluster_spread;
  s.transform.scale = d.scale;
  if (d.offset != 0.0) s.transform.offset = VectorXd::Constant(d.raw_dim, d.offset);
  if (d.rotate) s.transform.rotation_seed = rotation_seed;
  s.domain_tag = tag;
  s.first_identity = d.first_identity;
  s.enrolled_fraction = d.enrolled_fraction;
  s.gallery_per_identity = d.gallery_per_identity;
  return s;
}

}  // namespace

void RunConfig::validate() const {
  require(!data_dir.empty(), "data_dir", "must not be empty");
  validate_domain(source, "source");
  validate_domain(target, "target");
  require(source.raw_dim == target.raw_dim, "target.raw_dim", "must equal source.raw_dim");
  const int src_end = source.first_identity + source.num_identities;
  const int tgt_end = target.first_identity + target.num_identities;
  require(src_end <= target.first_identity || tgt_end <= source.first_identity, "target.first_identity",
          "must keep target identities disjoint from source identities");
  require(model.embed_dim >= 1, "model.embed_dim", "must be >= 1");
  for (int h : model.hidden) require(h >= 1, "model.hidden", "entries must be >= 1");
  require(train.epochs >= 0, "train.epochs", "must be >= 0");
  require(train.base_lr > 0.0 && std::isfinite(train.base_lr), "train.base_lr", "must be > 0");
  require(train.gamma > 0.0 && train.gamma <= 1.0, "train.gamma", "must lie in (0, 1]");
  require(train.decay_every >= 1, "train.decay_every", "must be >= 1");
  require(train.batch_p >= 2, "train.batch_p", "must be >= 2");
  require(train.batch_k >= 2, "train.batch_k", "must be >= 2");
  require(train.batch_p <= source.num_identities, "train.batch_p", "must not exceed source.num_identities");
  require(train.batch_k <= source.samples_per_identity, "train.batch_k", "must not exceed source.samples_per_identity");
  require(train.margin >= 0.0 && std::isfinite(train.margin), "train.margin", "must be >= 0");
  require(train.lambda >= 0.0 && std::isfinite(train.lambda), "train.lambda", "must be >= 0");
  require(evaluator.epochs >= 0, "evaluator.epochs", "must be >= 0");
  require(evaluator.lr > 0.0, "evaluator.lr", "must be > 0");
  require(evaluator.confidence_threshold > 0.5 && evaluator.confidence_threshold <= 1.0,
          "evaluator.confidence_threshold", "must lie in (0.5, 1]");
  require(evaluator.min_domain_records >= 1, "evaluator.min_domain_records", "must be >= 1");
  require(evaluator.bootstrap_epochs >= 1, "evaluator.bootstrap_epochs", "must be >= 1");
  require(stream.p_same >= 0.0 && stream.p_same <= 1.0, "stream.p_same", "must lie in [0, 1]");
  require(stream.queries_per_epoch >= 1, "stream.queries_per_epoch", "must be >= 1");
  require(stream.epochs >= 0, "stream.epochs", "must be >= 0");
  require(stream.accept_threshold >= 0.0 && stream.accept_threshold <= 1.0, "stream.accept_threshold",
          "must lie in [0, 1]");
  require(stream.batch_size >= 1, "stream.batch_size", "must be >= 1");
  require(stream.online_lr > 0.0 && std::isfinite(stream.online_lr), "stream.online_lr", "must be > 0");
  require(stream.exchange_every >= 0, "stream.exchange_every", "must be >= 0");
  require(stream.k_negatives >= 1, "stream.k_negatives", "must be >= 1");
  require(stream.gallery_cap >= 1, "stream.gallery_cap", "must be >= 1");
}

DomainSpec RunConfig::source_spec() const { return to_spec(source, Domain::source, seed_for(*this, SeedStream::target_rotation) ^ 1); }

DomainSpec RunConfig::target_spec() const { return to_spec(target, Domain::target, seed_for(*this, SeedStream::target_rotation)); }

ArchitectureSpec RunConfig::architecture() const {
  ArchitectureSpec a;
  a.encoder_dims.push_back(source.raw_dim);
  for (int h : model.hidden) a.encoder_dims.push_back(h);
  a.encoder_dims.push_back(model.embed_dim);
  a.hidden = model.hidden_activation;
  a.output = Activation::identity;
  return a;
}

OptimizerState RunConfig::train_optimizer() const {
  return {train.base_lr, train.gamma, train.decay_every, 0};
}

OptimizerState RunConfig::online_optimizer() const {
  return {stream.online_lr, train.gamma, train.decay_every, 0};
}

FitOptions RunConfig::fit_options() const {
  FitOptions f;
  f.epochs = evaluator.epochs;
  f.lr = evaluator.lr;
  f.standardization = evaluator.standardization;
  f.min_domain_records = evaluator.min_domain_records;
  return f;
}

EpisodeConfig RunConfig::episode() const { return {stream.p_same, stream.queries_per_epoch, stream.epochs}; }

StreamConfig RunConfig::stream_config(double dmin_threshold) const {
  StreamConfig s;
  s.episode = episode();
  s.decide.accept_threshold = stream.accept_threshold;
  s.decide.dmin_threshold = dmin_threshold;
  s.decide.rule = DecisionRule::evaluator;
  s.decide.meta.k_negatives = stream.k_negatives;
  s.decide.domain = Domain::target;
  s.batch_size = stream.batch_size;
  s.online_updates = stream.online_updates;
  s.freeze_encoder = stream.freeze_encoder;
  s.exchange_every = stream.exchange_every;
  s.gate.threshold = evaluator.confidence_threshold;
  s.fit = fit_options();
  s.adapt_standardization = stream.adapt_standardization;
  s.gallery_cap = static_cast<std::size_t>(stream.gallery_cap);
  s.seed = seed_for(*this, SeedStream::stream);
  return s;
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c = RunConfig::reference();
  Section root(j, "");
  root.read("seed", c.seed);
  root.read("data_dir", c.data_dir);
  read_domain(root.child("source"), c.source);
  read_domain(root.child("target"), c.target);

  {
    Section s = root.child("model");
    s.read("embed_dim", c.model.embed_dim);
    s.read("hidden", c.model.hidden);
    std::string act = to_string(c.model.hidden_activation);
    s.read("hidden_activation", act);
    c.model.hidden_activation = parse_enum<Activation>(
        act, s.name("hidden_activation"),
        {{"relu", Activation::relu}, {"tanh", Activation::tanh}, {"identity", Activation::identity}});
    s.finish();
  }
  {
    Section s = root.child("train");
    s.read("epochs", c.train.epochs);
    s.read("base_lr", c.train.base_lr);
    s.read("gamma", c.train.gamma);
    s.read("decay_every", c.train.decay_every);
    s.read("batch_p", c.train.batch_p);
    s.read("batch_k", c.train.batch_k);
    s.read("margin", c.train.margin);
    s.read("lambda", c.train.lambda);
    std::string mining = c.train.mining == Mining::batch_hard ? "batch_hard" : "all_valid";
    s.read("mining", mining);
    c.train.mining = parse_enum<Mining>(mining, s.name("mining"),
                                        {{"batch_hard", Mining::batch_hard}, {"all_valid", Mining::all_valid}});
    s.finish();
  }
  {
    Section s = root.child("evaluator");
    s.read("epochs", c.evaluator.epochs);
    s.read("lr", c.evaluator.lr);
    s.read("confidence_threshold", c.evaluator.confidence_threshold);
    std::string mode = c.evaluator.standardization == Standardization::pooled ? "pooled" : "per_domain";
    s.read("standardization", mode);
    c.evaluator.standardization = parse_enum<Standardization>(
        mode, s.name("standardization"),
        {{"pooled", Standardization::pooled}, {"per_domain", Standardization::per_domain}});
    s.read("min_domain_records", c.evaluator.min_domain_records);
    s.read("bootstrap_epochs", c.evaluator.bootstrap_epochs);
    s.finish();
  }
  {
    Section s = root.child("stream");
    s.read("p_same", c.stream.p_same);
    s.read("queries_per_epoch", c.stream.queries_per_epoch);
    s.read("epochs", c.stream.epochs);
    s.read("accept_threshold", c.stream.accept_threshold);
    s.read("batch_size", c.stream.batch_size);
    s.read("online_lr", c.stream.online_lr);
    s.read("online_updates", c.stream.online_updates);
    s.read("freeze_encoder", c.stream.freeze_encoder);
    s.read("exchange_every", c.stream.exchange_every);
    s.read("k_negatives", c.stream.k_negatives);
    s.read("gallery_cap", c.stream.gallery_cap);
    s.read("adapt_standardization", c.stream.adapt_standardization);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(text);
}

std::string dump_run_config(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["data_dir"] = c.data_dir;
  j["source"] = domain_json(c.source);
  j["target"] = domain_json(c.target);
  j["model"] = {{"embed_dim", c.model.embed_dim},
                {"hidden", c.model.hidden},
                {"hidden_activation", to_string(c.model.hidden_activation)}};
  j["train"] = {{"epochs", c.train.epochs},         {"base_lr", c.train.base_lr},
                {"gamma", c.train.gamma},           {"decay_every", c.train.decay_every},
                {"batch_p", c.train.batch_p},       {"batch_k", c.train.batch_k},
                {"margin", c.train.margin},         {"lambda", c.train.lambda},
                {"mining", c.train.mining == Mining::batch_hard ? "batch_hard" : "all_valid"}};
  j["evaluator"] = {{"epochs", c.evaluator.epochs},
                    {"lr", c.evaluator.lr},
                    {"confidence_threshold", c.evaluator.confidence_threshold},
                    {"standardization",
                     c.evaluator.standardization == Standardization::pooled ? "pooled" : "per_domain"},
                    {"min_domain_records", c.evaluator.min_domain_records},
                    {"bootstrap_epochs", c.evaluator.bootstrap_epochs}};
  j["stream"] = {{"p_same", c.stream.p_same},
                 {"queries_per_epoch", c.stream.queries_per_epoch},
                 {"epochs", c.stream.epochs},
                 {"accept_threshold", c.stream.accept_threshold},
                 {"batch_size", c.stream.batch_size},
                 {"online_lr", c.stream.online_lr},
                 {"online_updates", c.stream.online_updates},
                 {"freeze_encoder", c.stream.freeze_encoder},
                 {"exchange_every", c.stream.exchange_every},
                 {"k_negatives", c.stream.k_negatives},
                 {"gallery_cap", c.stream.gallery_cap},
                 {"adapt_standardization", c.stream.adapt_standardization}};
  return j.dump(2) + "\n";
}

}  // namespace owr
