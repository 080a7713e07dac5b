#include "owr/pipeline.hpp"

#include "owr/objectives.hpp"
#include "owr/snapshot.hpp"
#include "owr/text_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>

namespace owr {

namespace fs = std::filesystem;

std::string training_csv(const std::vector<TrainingRow>& rows) {
  std::string out = std::string(kTrainingCsvHeader) + "\n";
  for (const auto& r : rows)
    out += std::to_string(r.epoch) + ',' + format_double(r.lr) + ',' + format_double(r.triplet) + ',' +
           format_double(r.mse) + ',' + format_double(r.combined) + '\n';
  return out;
}

AutoencoderParams<double> train_main_model(const Dataset& source, const RunConfig& config,
                                           std::vector<TrainingRow>* rows) {
  auto params = make_autoencoder<double>(config.architecture(), seed_for(config, SeedStream::model_init));
  if (source.raw_dim != params.input_dim()) throw ShapeError("train: dataset dim differs from configured raw_dim");

  std::map<int, std::vector<std::size_t>> by_identity;
  for (std::size_t i = 0; i < source.samples.size(); ++i) by_identity[source.samples[i].identity].push_back(i);
  std::vector<int> ids;
  for (const auto& [id, members] : by_identity)
    if (static_cast<int>(members.size()) >= 2) ids.push_back(id);
  const int P = config.train.batch_p, K = config.train.batch_k;
  if (static_cast<int>(ids.size()) < P)
    throw InvalidArgument("train: fewer identities with >= 2 samples than batch_p");

  const TripletConfig triplet{config.train.margin, config.train.mining};
  const double lambda = config.train.lambda;
  OptimizerState opt = config.train_optimizer();
  std::mt19937_64 rng(seed_for(config, SeedStream::train_batches));
  const int batches = std::max<int>(1, static_cast<int>(source.samples.size()) / (P * K));

  for (int epoch = 0; epoch < config.train.epochs; ++epoch) {
    opt.current_epoch = epoch;
    TrainingRow row;
    row.epoch = epoch + 1;
    row.lr = opt.effective_lr();
    for (int b = 0; b < batches; ++b) {
      std::shuffle(ids.begin(), ids.end(), rng);
      std::vector<std::size_t> picked;
      std::vector<int> labels;
      for (int p = 0; p < P; ++p) {
        auto members = by_identity[ids[static_cast<std::size_t>(p)]];
        std::shuffle(members.begin(), members.end(), rng);
        const int take = std::min<int>(K, static_cast<int>(members.size()));
        for (int k = 0; k < take; ++k) {
          picked.push_back(members[static_cast<std::size_t>(k)]);
          labels.push_back(ids[static_cast<std::size_t>(p)]);
        }
      }
      const MatrixXd x = source.matrix(picked);
      const auto tape = record_forward(params, x);
      const auto tri = batch_hard_triplet_loss(tape.embedding(), labels, triplet);
      const double mse = mse_loss(x, tape.reconstruction());
      const double combined = combined_source_loss(tri.loss, mse, lambda);
      if (!std::isfinite(combined)) throw TrainingDivergence("train: non-finite loss at epoch " + std::to_string(epoch + 1));
      const MatrixXd d_recon = lambda * mse_gradient(x, tape.reconstruction());
      params = sgd_step(opt, std::move(params), backward(params, tape, tri.d_embeddings, d_recon));
      row.triplet += tri.loss / batches;
      row.mse += mse / batches;
      row.combined += combined / batches;
    }
    if (rows) rows->push_back(row);
  }
  return params;
}

double calibrate_dmin_threshold(const std::vector<MetaFeatureRecord>& records) {
  std::vector<std::pair<double, int>> pts;
  long n1 = 0, n0 = 0;
  for (const auto& r : records) {
    if (!r.label) continue;
    pts.emplace_back(r.d_min, *r.label);
    (*r.label == 1 ? n1 : n0)++;
  }
  if (n1 == 0 || n0 == 0) throw DegenerateTraining("calibrate: need records of both labels");
  std::sort(pts.begin(), pts.end());
  // Threshold below everything: accept none.
  long accepted_pos = 0, accepted_neg = 0;
  double best_score = 0.5 * (0.0 + 1.0);
  double best = pts.front().first - 1.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    (pts[i].second == 1 ? accepted_pos : accepted_neg)++;
    if (i + 1 < pts.size() && pts[i + 1].first == pts[i].first) continue;
    const double score = 0.5 * (static_cast<double>(accepted_pos) / static_cast<double>(n1) +
                                static_cast<double>(n0 - accepted_neg) / static_cast<double>(n0));
    if (score > best_score) {
      best_score = score;
      best = i + 1 < pts.size() ? 0.5 * (pts[i].first + pts[i + 1].first) : pts[i].first;
    }
  }
  return best;
}

EvaluatorPair bootstrap_evaluators(const std::vector<MetaFeatureRecord>& source_records, const FitOptions& options) {
  EvaluatorPair pair;
  pair.source = fit(EvaluatorModel::unfitted(Domain::source), source_records, options);
  pair.target = fit(EvaluatorModel::unfitted(Domain::target), source_records, options);
  return pair;
}

TrainedModels train_pipeline(const Dataset& source, const RunConfig& config) {
  TrainedModels t;
  t.autoencoder = train_main_model(source, config, &t.rows);
  EpisodeConfig episode = config.episode();
  episode.epochs = config.evaluator.bootstrap_epochs;
  episode.p_same = 0.5;  // both label classes regardless of the stream mix
  MetaFeatureOptions meta;
  meta.k_negatives = config.stream.k_negatives;
  t.source_records = harvest_records(source, t.autoencoder, episode, meta,
                                     static_cast<std::size_t>(config.stream.gallery_cap),
                                     seed_for(config, SeedStream::bootstrap));
  t.evaluators = bootstrap_evaluators(t.source_records, config.fit_options());
  t.dmin_threshold = calibrate_dmin_threshold(t.source_records);
  return t;
}

StreamModels stream_models(const TrainedModels& trained, const RunConfig& config) {
  StreamModels m;
  m.autoencoder = trained.autoencoder;
  m.online_opt = config.online_optimizer();
  m.evaluators = trained.evaluators;
  m.pools.source_records = trained.source_records;
  return m;
}

std::string meta_records_csv(const std::vector<MetaFeatureRecord>& records) {
  std::string out = std::string(kMetaCsvHeader) + "\n";
  for (const auto& r : records) out += to_csv_row(r) + '\n';
  return out;
}

std::vector<MetaFeatureRecord> parse_meta_records_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetaCsvHeader) throw DataError("meta-feature CSV: bad header");
  std::vector<MetaFeatureRecord> out;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(parse_meta_csv_row(line));
  return out;
}

namespace {

std::string join(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create directory '" + dir + "'");
}

}  // namespace

void save_trained(const std::string& dir, const TrainedModels& t) {
  ensure_dir(dir);
  save_autoencoder(join(dir, "autoencoder.txt"), t.autoencoder);
  save_evaluator(join(dir, "source_evaluator.txt"), t.evaluators.source);
  save_evaluator(join(dir, "target_evaluator.txt"), t.evaluators.target);
  write_file(join(dir, "source_records.csv"), meta_records_csv(t.source_records));
  nlohmann::ordered_json cal;
  cal["dmin_threshold"] = t.dmin_threshold;
  write_file(join(dir, "calibration.json"), cal.dump(2) + "\n");
  write_file(join(dir, "training_metrics.csv"), training_csv(t.rows));
}

TrainedModels load_trained(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("snapshot directory '" + dir + "' does not exist");
  TrainedModels t;
  t.autoencoder = load_autoencoder(join(dir, "autoencoder.txt"));
  t.evaluators.source = load_evaluator(join(dir, "source_evaluator.txt"));
  t.evaluators.target = load_evaluator(join(dir, "target_evaluator.txt"));
  t.source_records = parse_meta_records_csv(read_file(join(dir, "source_records.csv")));
  try {
    t.dmin_threshold = nlohmann::json::parse(read_file(join(dir, "calibration.json"))).at("dmin_threshold").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("calibration.json: ") + e.what());
  }
  return t;
}

GeneratedPaths cmd_gen_data(const RunConfig& config) {
  config.validate();
  ensure_dir(config.data_dir);
  GeneratedPaths p;
  p.source_csv = join(config.data_dir, "source.csv");
  p.target_csv = join(config.data_dir, "target.csv");
  save_dataset(p.source_csv, generate_domain(config.source_spec(), seed_for(config, SeedStream::source_data)));
  save_dataset(p.target_csv, generate_domain(config.target_spec(), seed_for(config, SeedStream::target_data)));
  p.source_manifest = manifest_path_for(p.source_csv);
  p.target_manifest = manifest_path_for(p.target_csv);
  return p;
}

TrainedModels cmd_train(const RunConfig& config, const std::string& out_dir) {
  config.validate();
  const Dataset source = load_dataset(join(config.data_dir, "source.csv"));
  TrainedModels t = train_pipeline(source, config);
  save_trained(out_dir, t);
  write_file(join(out_dir, "config.json"), dump_run_config(config));
  return t;
}

StreamResult cmd_stream(const RunConfig& config, const std::string& snapshots_dir, const std::string& out_dir) {
  config.validate();
  const TrainedModels trained = load_trained(snapshots_dir);
  const Dataset target = load_dataset(join(config.data_dir, "target.csv"));
  StreamResult result = run_stream(target, stream_models(trained, config), config.stream_config(trained.dmin_threshold));
  ensure_dir(out_dir);
  write_file(join(out_dir, "outcomes.csv"), outcome_csv(result.outcomes));
  write_file(join(out_dir, "metrics.csv"), metrics_csv(result.epochs));
  write_file(join(out_dir, "gated_records.csv"), meta_records_csv(result.models.pools.gated_records));
  write_file(join(out_dir, "config.json"), dump_run_config(config));
  save_autoencoder(join(out_dir, "autoencoder.txt"), result.models.autoencoder);
  save_evaluator(join(out_dir, "source_evaluator.txt"), result.models.evaluators.source);
  save_evaluator(join(out_dir, "target_evaluator.txt"), result.models.evaluators.target);
  if (result.halted) throw Error("stream halted: " + *result.halted);
  return result;
}

}  // namespace owr
