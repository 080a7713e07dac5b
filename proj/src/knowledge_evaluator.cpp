#include "owr/knowledge_evaluator.hpp"

#include "owr/text_io.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace owr {

namespace {

double sigmoid(double m) {
  if (m >= 0) return 1.0 / (1.0 + std::exp(-m));
  const double e = std::exp(m);
  return e / (1.0 + e);
}

// -y log s(m) - (1 - y) log(1 - s(m))
double log_loss(double margin, int y) {
  const double softplus = std::max(margin, 0.0) + std::log1p(std::exp(-std::abs(margin)));
  return softplus - (y == 1 ? margin : 0.0);
}

double sample_weight(const MetaFeatureRecord& r) {
  if (r.label_kind == LabelKind::soft_label) return r.confidence.value_or(1.0);
  return 1.0;
}

// Per-record weights: confidence for soft labels times the inverse class
// frequency factor. Throws when a class is missing.
std::vector<double> training_weights(const std::vector<MetaFeatureRecord>& records, bool class_balance) {
  double totals[2] = {0.0, 0.0};
  for (const auto& r : records) {
    if (!r.label) throw InvalidArgument("fit: record without a label");
    if (*r.label != 0 && *r.label != 1) throw InvalidArgument("fit: labels must be 0 or 1");
    totals[*r.label] += sample_weight(r);
  }
  if (!(totals[0] > 0.0) || !(totals[1] > 0.0))
    throw DegenerateTraining("fit: records contain a single label class");
  std::vector<double> w;
  w.reserve(records.size());
  const double sum = totals[0] + totals[1];
  for (const auto& r : records) {
    const double factor = class_balance ? sum / (2.0 * totals[*r.label]) : 1.0;
    w.push_back(sample_weight(r) * factor);
  }
  return w;
}

}  // namespace

FeatureScaler FeatureScaler::fit(const std::vector<const MetaFeatureRecord*>& records) {
  if (records.empty()) throw InvalidArgument("feature scaler: no records");
  FeatureScaler s;
  s.means = VectorXd::Zero(kMetaFeatureDim);
  for (const auto* r : records) s.means += r->features();
  s.means /= static_cast<double>(records.size());
  VectorXd var = VectorXd::Zero(kMetaFeatureDim);
  for (const auto* r : records) var += (r->features() - s.means).cwiseAbs2();
  var /= static_cast<double>(records.size());
  s.stds = var.cwiseSqrt().cwiseMax(kMinStd);
  return s;
}

EvaluatorModel EvaluatorModel::unfitted(Domain domain) {
  EvaluatorModel m;
  m.domain = domain;
  return m;
}

double decision_margin(const EvaluatorModel& model, const MetaFeatureRecord& record) {
  if (!model.fitted()) throw NotFitted("evaluator: standardization stats missing");
  return model.weights.dot(model.scaler.apply(record.features())) + model.bias;
}

double predict(const EvaluatorModel& model, const MetaFeatureRecord& record) {
  return sigmoid(decision_margin(model, record));
}

double logistic_loss(const EvaluatorModel& model, const std::vector<MetaFeatureRecord>& records,
                     const FitOptions& options) {
  const auto w = training_weights(records, options.class_balance);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    num += w[i] * log_loss(decision_margin(model, records[i]), *records[i].label);
    den += w[i];
  }
  return num / den;
}

EvaluatorModel fit(EvaluatorModel model, const std::vector<MetaFeatureRecord>& records, const FitOptions& options,
                   std::vector<double>* loss_trace, const DomainScalers* scalers) {
  if (records.empty()) throw InvalidArgument("fit: no records");
  if (options.epochs < 0) throw InvalidArgument("fit: epochs must be >= 0");
  if (!(options.lr > 0.0)) throw InvalidArgument("fit: lr must be positive");
  const auto w = training_weights(records, options.class_balance);

  std::vector<const MetaFeatureRecord*> all;
  std::map<Domain, std::vector<const MetaFeatureRecord*>> by_domain;
  for (const auto& r : records) {
    all.push_back(&r);
    by_domain[r.domain].push_back(&r);
  }
  const FeatureScaler pooled = FeatureScaler::fit(all);
  DomainScalers scaler_of{{Domain::source, pooled}, {Domain::target, pooled}};
  if (options.standardization == Standardization::per_domain) {
    for (const auto& [domain, members] : by_domain)
      if (static_cast<int>(members.size()) >= options.min_domain_records) scaler_of[domain] = FeatureScaler::fit(members);
    if (scalers)
      for (const auto& [domain, s] : *scalers) scaler_of[domain] = s;
  }

  const Eigen::Index n = static_cast<Eigen::Index>(records.size());
  MatrixXd z(kMetaFeatureDim, n);
  VectorXd y(n), weight(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    z.col(i) = scaler_of.at(r.domain).apply(r.features());
    y(i) = *r.label;
    weight(i) = w[static_cast<std::size_t>(i)];
  }
  const double total = weight.sum();

  auto loss_at = [&](const VectorXd& wts, double b) {
    const VectorXd margin = (z.transpose() * wts).array() + b;
    double l = 0;
    for (Eigen::Index i = 0; i < n; ++i) l += weight(i) * log_loss(margin(i), static_cast<int>(y(i)));
    return l / total;
  };

  if (model.weights.size() != kMetaFeatureDim) model.weights = VectorXd::Zero(kMetaFeatureDim);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const VectorXd margin = (z.transpose() * model.weights).array() + model.bias;
    VectorXd residual(n);
    double l = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      residual(i) = weight(i) * (sigmoid(margin(i)) - y(i)) / total;
      if (loss_trace) l += weight(i) * log_loss(margin(i), static_cast<int>(y(i)));
    }
    if (loss_trace) loss_trace->push_back(l / total);
    model.weights -= options.lr * (z * residual);
    model.bias -= options.lr * residual.sum();
  }
  if (loss_trace) loss_trace->push_back(loss_at(model.weights, model.bias));
  if (!model.weights.allFinite() || !std::isfinite(model.bias)) throw TrainingDivergence("fit: non-finite weights");

  model.scaler = scaler_of.at(model.domain);
  model.records_seen = std::max<long>(model.records_seen, static_cast<long>(records.size()));
  return model;
}

EvaluatorModel adapt_standardization(EvaluatorModel model, const std::vector<MetaFeatureRecord>& records) {
  std::vector<const MetaFeatureRecord*> own;
  for (const auto& r : records)
    if (r.domain == model.domain) own.push_back(&r);
  if (own.empty()) return model;
  model.scaler = FeatureScaler::fit(own);
  return model;
}

void ConfidenceGate::validate() const {
  if (!(threshold > 0.5 && threshold <= 1.0)) throw InvalidArgument("confidence gate: threshold must lie in (0.5, 1]");
}

std::vector<MetaFeatureRecord> gate_confident(const ConfidenceGate& gate, const std::vector<ScoredRecord>& scored) {
  gate.validate();
  std::vector<MetaFeatureRecord> kept;
  for (const auto& s : scored) {
    const double confidence = std::max(s.probability, 1.0 - s.probability);
    if (confidence < gate.threshold) continue;
    MetaFeatureRecord r = s.record;
    r.label = s.probability >= 0.5 ? 1 : 0;
    r.label_kind = LabelKind::soft_label;
    r.confidence = confidence;
    kept.push_back(std::move(r));
  }
  return kept;
}

void ExchangeBatch::validate(const ConfidenceGate& gate) const {
  for (const auto& r : records) {
    if (!r.label) throw InvalidArgument("exchange batch: record without a label");
    if (r.label_kind == LabelKind::soft_label && !(r.confidence && *r.confidence >= gate.threshold))
      throw InvalidArgument("exchange batch: soft label below the confidence gate");
  }
}

std::vector<MetaFeatureRecord> ExchangePools::union_records() const {
  std::vector<MetaFeatureRecord> all = source_records;
  all.insert(all.end(), gated_records.begin(), gated_records.end());
  return all;
}

EvaluatorPair exchange(const EvaluatorPair& models, ExchangePools& pools, const ExchangeBatch& batch,
                       const ConfidenceGate& gate, const FitOptions& options, const DomainScalers* scalers) {
  if (!models.source.fitted() || !models.target.fitted())
    throw NotFitted("exchange: both evaluators must be bootstrapped on source records first");
  batch.validate(gate);
  pools.gated_records.insert(pools.gated_records.end(), batch.records.begin(), batch.records.end());
  const auto pool = pools.union_records();
  EvaluatorPair next;
  next.target = fit(models.target, pool, options, nullptr, scalers);
  next.source = fit(models.source, pool, options, nullptr, scalers);
  return next;
}

void save_evaluator(std::ostream& out, const EvaluatorModel& model) {
  if (!model.fitted()) throw NotFitted("save_evaluator: model not fitted");
  auto row = [&out](const char* key, const VectorXd& v) {
    out << key;
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << format_double(v(i));
    out << '\n';
  };
  out << "n " << model.weights.size() << '\n';
  row("weights", model.weights);
  out << "bias " << format_double(model.bias) << '\n';
  row("means", model.scaler.means);
  row("stds", model.scaler.stds);
  out << "domain " << to_string(model.domain) << '\n';
  out << "records_seen " << model.records_seen << '\n';
}

EvaluatorModel load_evaluator(std::istream& in) {
  std::map<std::string, std::vector<std::string>> fields;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key, tok;
    ls >> key;
    auto& vals = fields[key];
    while (ls >> tok) vals.push_back(tok);
  }
  auto need = [&](const char* key) -> const std::vector<std::string>& {
    auto it = fields.find(key);
    if (it == fields.end()) throw DataError(std::string("evaluator snapshot: missing '") + key + "'");
    return it->second;
  };
  const auto& n_field = need("n");
  if (n_field.size() != 1) throw DataError("evaluator snapshot: bad 'n'");
  const long n = parse_long(n_field[0]);
  if (n != kMetaFeatureDim) throw DataError("evaluator snapshot: unsupported feature dim " + n_field[0]);
  auto vec = [&](const char* key) {
    const auto& v = need(key);
    if (static_cast<long>(v.size()) != n) throw DataError(std::string("evaluator snapshot: '") + key + "' has wrong length");
    VectorXd out(n);
    for (long i = 0; i < n; ++i) out(i) = parse_double(v[static_cast<std::size_t>(i)]);
    return out;
  };
  EvaluatorModel m;
  m.weights = vec("weights");
  m.scaler.means = vec("means");
  m.scaler.stds = vec("stds");
  const auto& b = need("bias");
  const auto& d = need("domain");
  const auto& rs = need("records_seen");
  if (b.size() != 1 || d.size() != 1 || rs.size() != 1) throw DataError("evaluator snapshot: malformed scalar field");
  m.bias = parse_double(b[0]);
  m.domain = parse_domain(d[0]);
  m.records_seen = parse_long(rs[0]);
  if ((m.scaler.stds.array() <= 0.0).any()) throw DataError("evaluator snapshot: non-positive std");
  return m;
}

void save_evaluator(const std::string& path, const EvaluatorModel& model) {
  std::ostringstream ss;
  save_evaluator(ss, model);
  write_file(path, ss.str());
}

EvaluatorModel load_evaluator(const std::string& path) {
  std::istringstream ss(read_file(path));
  return load_evaluator(ss);
}

}  // namespace owr
