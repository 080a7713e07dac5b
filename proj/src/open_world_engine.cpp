#include "owr/open_world_engine.hpp"

#include "owr/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace owr {

IdentityRegistry::IdentityRegistry(std::size_t gallery_cap) : gallery_cap_(gallery_cap) {
  if (gallery_cap_ == 0) throw InvalidArgument("registry: gallery cap must be positive");
}

int IdentityRegistry::enroll(GalleryEntry entry) {
  const int label = next_label_++;
  classes_[label].push_back(std::move(entry));
  return label;
}

void IdentityRegistry::add_labeled(int label, GalleryEntry entry) {
  if (label < 0) throw InvalidArgument("registry: labels must be non-negative");
  auto it = classes_.find(label);
  if (it == classes_.end()) {
    if (label < next_label_) throw InvalidArgument("registry: label " + std::to_string(label) + " was already issued");
    next_label_ = label + 1;
    classes_[label].push_back(std::move(entry));
    return;
  }
  append(label, std::move(entry));
}

void IdentityRegistry::append(int label, GalleryEntry entry) {
  auto it = classes_.find(label);
  if (it == classes_.end()) throw InvalidArgument("registry: unknown label " + std::to_string(label));
  it->second.push_back(std::move(entry));
  while (it->second.size() > gallery_cap_) it->second.pop_front();
}

void IdentityRegistry::reembed(const AutoencoderParams<double>& params) {
  for (auto& [label, gallery] : classes_) {
    MatrixXd raw(params.input_dim(), static_cast<Eigen::Index>(gallery.size()));
    for (std::size_t i = 0; i < gallery.size(); ++i) raw.col(static_cast<Eigen::Index>(i)) = gallery[i].raw;
    const MatrixXd emb = encode_batch(params, raw);
    for (std::size_t i = 0; i < gallery.size(); ++i) gallery[i].embedding = emb.col(static_cast<Eigen::Index>(i));
  }
}

MatrixXd IdentityRegistry::gallery_matrix(int label) const {
  const auto& gallery = classes_.at(label);
  MatrixXd m(gallery.front().embedding.size(), static_cast<Eigen::Index>(gallery.size()));
  for (std::size_t i = 0; i < gallery.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = gallery[i].embedding;
  return m;
}

Candidate nearest_candidate(const VectorXd& query, const IdentityRegistry& registry) {
  if (registry.empty()) throw ColdStart("nearest_candidate: registry is empty; the first query must enroll");
  Candidate best{0, std::numeric_limits<double>::infinity()};
  for (const auto& [label, gallery] : registry.classes())
    for (const auto& member : gallery) {
      if (member.embedding.size() != query.size()) throw ShapeError("nearest_candidate: dimension mismatch");
      const double d = (member.embedding - query).norm();
      if (d < best.d_min) best = {label, d};  // map order: first hit keeps the smaller label
    }
  return best;
}

const char* to_string(Decision d) { return d == Decision::accepted ? "accepted" : "enrolled_new"; }

QueryOutcome decide(const VectorXd& raw, const VectorXd& embedding, IdentityRegistry& registry,
                    const EvaluatorModel& evaluator, const DecideOptions& options, std::optional<bool> truth) {
  QueryOutcome out;
  GalleryEntry entry{raw, embedding, options.domain};
  if (registry.empty()) {
    out.decision = Decision::enrolled_new;
    out.assigned_label = registry.enroll(std::move(entry));
    out.d_min = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const Candidate cand = nearest_candidate(embedding, registry);
  out.candidate_label = cand.label;
  out.d_min = cand.d_min;

  if (registry.size() >= 2) {
    std::vector<MatrixXd> negatives;
    for (const auto& [label, gallery] : registry.classes())
      if (label != cand.label) negatives.push_back(registry.gallery_matrix(label));
    out.record = extract_meta_features(embedding, registry.gallery_matrix(cand.label), negatives, options.domain,
                                       std::nullopt, options.meta);
  }

  switch (options.rule) {
    case DecisionRule::ground_truth:
      if (!truth) throw InvalidArgument("decide: ground_truth rule needs the true membership");
      out.probability = *truth ? 1.0 : 0.0;
      if (out.record) out.record->label = *truth ? 1 : 0;
      break;
    case DecisionRule::evaluator:
      if (out.record) {
        out.probability = predict(evaluator, *out.record);
        break;
      }
      [[fallthrough]];
    case DecisionRule::dmin_threshold:
      out.probability = cand.d_min <= options.dmin_threshold ? 1.0 : 0.0;
      break;
  }

  if (out.probability >= options.accept_threshold) {
    out.decision = Decision::accepted;
    out.assigned_label = cand.label;
    registry.append(cand.label, std::move(entry));
  } else {
    out.decision = Decision::enrolled_new;
    out.assigned_label = registry.enroll(std::move(entry));
  }
  return out;
}

OnlineUpdateResult online_update(AutoencoderParams<double> params, const OptimizerState& opt, const MatrixXd& batch,
                                 bool freeze_encoder) {
  if (batch.cols() == 0) throw InvalidArgument("online_update: empty batch");
  const auto tape = record_forward(params, batch);
  const double loss = mse_loss(batch, tape.reconstruction());
  if (!std::isfinite(loss)) throw TrainingDivergence("online_update: non-finite reconstruction loss");
  auto grads = backward(params, tape, MatrixXd(), mse_gradient(batch, tape.reconstruction()));
  if (freeze_encoder)
    for (auto& g : grads.encoder) {
      g.weights.setZero();
      g.bias.setZero();
    }
  return {sgd_step(opt, std::move(params), grads), loss};
}

std::optional<double> EpochTally::same_class_accuracy() const {
  if (same_total == 0) return std::nullopt;
  return static_cast<double>(same_correct) / static_cast<double>(same_total);
}

std::optional<double> EpochTally::diff_class_accuracy() const {
  if (diff_total == 0) return std::nullopt;
  return static_cast<double>(diff_correct) / static_cast<double>(diff_total);
}

std::optional<double> EpochTally::mean_mse() const {
  if (mse_batches == 0) return std::nullopt;
  return mse_sum / static_cast<double>(mse_batches);
}

namespace {

std::string optional_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

void count(EpochTally& tally, bool same_class, Decision decision) {
  if (same_class) {
    ++tally.same_total;
    tally.same_correct += decision == Decision::accepted;
  } else {
    ++tally.diff_total;
    tally.diff_correct += decision == Decision::enrolled_new;
  }
}

IdentityRegistry initial_registry(const Dataset& data, const AutoencoderParams<double>& params, std::size_t cap,
                                  std::map<int, int>& founder) {
  IdentityRegistry registry(cap);
  auto rows = data.indices(Split::gallery);
  if (rows.empty()) return registry;
  std::stable_sort(rows.begin(), rows.end(),
                   [&](std::size_t a, std::size_t b) { return data.samples[a].identity < data.samples[b].identity; });
  const MatrixXd emb = encode_batch(params, data.matrix(rows));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = data.samples[rows[i]];
    registry.add_labeled(s.identity, {s.x, emb.col(static_cast<Eigen::Index>(i)), s.domain});
    founder[s.identity] = s.identity;
  }
  return registry;
}

}  // namespace

std::string outcome_csv(const std::vector<OutcomeLogRow>& rows) {
  std::string out = std::string(kOutcomeCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.query_id) + ',' + std::to_string(r.true_label) + ',';
    if (r.candidate_label) out += std::to_string(*r.candidate_label);
    out += ',';
    if (r.candidate_label) out += format_double(r.d_min);
    out += ',' + format_double(r.probability) + ',' + to_string(r.decision) + ',' + std::to_string(r.assigned_label) +
           ',' + std::to_string(r.epoch) + '\n';
  }
  return out;
}

std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
  std::string out = std::string(kMetricsCsvHeader) + "\n";
  for (const auto& r : rows)
    out += std::to_string(r.epoch) + ',' + to_string(r.domain) + ',' + optional_field(r.same_class_acc) + ',' +
           optional_field(r.diff_class_acc) + ',' + optional_field(r.mse) + '\n';
  return out;
}

std::map<int, EpochTally> tally_from_log(const std::vector<OutcomeLogRow>& rows) {
  std::map<int, EpochTally> tallies;
  std::map<int, int> founder;
  int current_epoch = std::numeric_limits<int>::min();
  for (const auto& r : rows) {
    if (r.epoch != current_epoch) {
      founder.clear();  // each epoch restarts from the gallery split
      current_epoch = r.epoch;
    }
    auto& tally = tallies[r.epoch];
    if (r.candidate_label) {
      auto it = founder.find(*r.candidate_label);
      const int candidate_identity = it == founder.end() ? *r.candidate_label : it->second;
      count(tally, candidate_identity == r.true_label, r.decision);
    }
    if (r.decision == Decision::enrolled_new) founder[r.assigned_label] = r.true_label;
  }
  return tallies;
}

StreamResult run_stream(const Dataset& data, StreamModels models, const StreamConfig& config) {
  config.episode.validate();
  config.gate.validate();
  models.autoencoder.validate();
  models.online_opt.validate();
  if (config.batch_size < 1) throw InvalidArgument("stream: batch_size must be >= 1");
  if (config.exchange_every < 0) throw InvalidArgument("stream: exchange_every must be >= 0");
  if (config.decide.rule == DecisionRule::evaluator && !models.evaluators.target.fitted())
    throw NotFitted("stream: target evaluator must be bootstrapped before streaming");
  if (data.raw_dim != models.autoencoder.input_dim())
    throw ShapeError("stream: dataset dim " + std::to_string(data.raw_dim) + " differs from model input dim");

  StreamResult result;
  const std::set<int> enrolled = data.identities(Split::gallery);
  std::vector<MetaFeatureRecord> observed;  // unlabeled target records, for the target scaler
  long query_id = 0;
  EpochTally tally;
  std::optional<EpochMetrics> open_epoch;  // row of the epoch in progress
  auto metrics_row = [&](int epoch, std::size_t registry_size) {
    EpochMetrics row;
    row.epoch = epoch;
    row.domain = data.domain_tag;
    row.same_class_acc = tally.same_class_accuracy();
    row.diff_class_acc = tally.diff_class_accuracy();
    row.mse = tally.mean_mse();
    row.registry_size = static_cast<long>(registry_size);
    return row;
  };

  try {
    for (int epoch = 1; epoch <= config.episode.epochs; ++epoch) {
      std::map<int, int> founder;
      tally = {};
      open_epoch = metrics_row(epoch, 0);
      IdentityRegistry registry = initial_registry(data, models.autoencoder, config.gallery_cap, founder);
      const auto stream = mixed_sampler(data, enrolled, config.episode, derive_seed(config.seed, epoch));
      std::vector<ScoredRecord> scored;

      for (std::size_t start = 0; start < stream.size(); start += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t end = std::min(stream.size(), start + static_cast<std::size_t>(config.batch_size));
        const std::vector<std::size_t> rows(stream.begin() + static_cast<long>(start),
                                            stream.begin() + static_cast<long>(end));
        const MatrixXd raw = data.matrix(rows);
        const MatrixXd emb = encode_batch(models.autoencoder, raw);
        for (std::size_t i = 0; i < rows.size(); ++i) {
          const auto& sample = data.samples[rows[i]];
          const auto col = static_cast<Eigen::Index>(i);
          const QueryOutcome out =
              decide(raw.col(col), emb.col(col), registry, models.evaluators.target, config.decide);
          if (out.candidate_label) count(tally, founder.at(*out.candidate_label) == sample.identity, out.decision);
          if (out.decision == Decision::enrolled_new) founder[out.assigned_label] = sample.identity;
          result.outcomes.push_back({query_id++, sample.identity, out.candidate_label, out.d_min, out.probability,
                                     out.decision, out.assigned_label, epoch});
          if (out.record) {
            scored.push_back({*out.record, out.probability});
            observed.push_back(*out.record);
          }
        }

        if (config.online_updates) {
          auto upd = online_update(std::move(models.autoencoder), models.online_opt, raw, config.freeze_encoder);
          models.autoencoder = std::move(upd.params);
          result.batch_mse.push_back(upd.mse_before);
          registry.reembed(models.autoencoder);
        } else {
          result.batch_mse.push_back(mse_loss(raw, apply_stack(models.autoencoder.decoder, emb)));
        }
        tally.mse_sum += result.batch_mse.back();
        ++tally.mse_batches;
        open_epoch = metrics_row(epoch, registry.size());

        if (config.adapt_standardization && config.decide.rule == DecisionRule::evaluator &&
            static_cast<int>(observed.size()) >= config.fit.min_domain_records)
          models.evaluators.target = adapt_standardization(std::move(models.evaluators.target), observed);
      }

      EpochMetrics row = metrics_row(epoch, registry.size());

      if (config.exchange_every > 0 && epoch % config.exchange_every == 0 &&
          config.decide.rule == DecisionRule::evaluator) {
        ExchangeBatch batch{gate_confident(config.gate, scored), data.domain_tag, epoch};
        row.gated = static_cast<long>(batch.records.size());
        DomainScalers scalers;
        if (config.adapt_standardization && !models.evaluators.target.scaler.empty())
          scalers[Domain::target] = models.evaluators.target.scaler;
        models.evaluators = exchange(models.evaluators, models.pools, batch, config.gate, config.fit,
                                     scalers.empty() ? nullptr : &scalers);
      }
      result.epochs.push_back(row);
      open_epoch.reset();
      result.last_epoch_records.clear();
      for (const auto& s : scored) result.last_epoch_records.push_back(s.record);
      ++models.online_opt.current_epoch;
    }
  } catch (const Error& e) {
    result.halted = e.what();
    if (open_epoch) result.epochs.push_back(*open_epoch);  // partial epoch, up to the last completed batch
  }
  result.models = std::move(models);
  return result;
}

std::vector<MetaFeatureRecord> harvest_records(const Dataset& data, const AutoencoderParams<double>& params,
                                               const EpisodeConfig& episode, const MetaFeatureOptions& meta,
                                               std::size_t gallery_cap, std::uint64_t seed) {
  episode.validate();
  const std::set<int> enrolled = data.identities(Split::gallery);
  DecideOptions options;
  options.rule = DecisionRule::ground_truth;
  options.meta = meta;
  options.domain = data.domain_tag;
  const EvaluatorModel unused = EvaluatorModel::unfitted(data.domain_tag);
  std::vector<MetaFeatureRecord> records;
  for (int epoch = 1; epoch <= episode.epochs; ++epoch) {
    std::map<int, int> founder;
    IdentityRegistry registry = initial_registry(data, params, gallery_cap, founder);
    const auto stream = mixed_sampler(data, enrolled, episode, derive_seed(seed, epoch));
    const MatrixXd raw = data.matrix(stream);
    const MatrixXd emb = encode_batch(params, raw);
    for (std::size_t i = 0; i < stream.size(); ++i) {
      const auto& sample = data.samples[stream[i]];
      const auto col = static_cast<Eigen::Index>(i);
      std::optional<bool> truth;
      if (!registry.empty()) {
        const Candidate cand = nearest_candidate(emb.col(col), registry);
        truth = founder.at(cand.label) == sample.identity;
      } else {
        truth = false;
      }
      const QueryOutcome out = decide(raw.col(col), emb.col(col), registry, unused, options, truth);
      if (out.decision == Decision::enrolled_new) founder[out.assigned_label] = sample.identity;
      if (out.record) {
        MetaFeatureRecord r = *out.record;
        r.label_kind = LabelKind::true_label;
        records.push_back(r);
      }
    }
  }
  return records;
}

}  // namespace owr
