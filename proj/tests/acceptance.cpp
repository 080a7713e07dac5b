// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include "oracles.hpp"
#include "owr/gradient_check.hpp"
#include "owr/pipeline.hpp"
#include "owr/report.hpp"
#include "owr/text_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

using namespace owr;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("owr_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Minimal well-formedness check: balanced, properly nested tags with quoted
// attribute values. Enough for the SVG this project emits.
bool well_formed_xml(const std::string& s, std::string& why) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  bool root_seen = false;
  while ((i = s.find('<', i)) != std::string::npos) {
    const std::size_t close = s.find('>', i);
    if (close == std::string::npos) return why = "unterminated tag", false;
    std::string tag = s.substr(i + 1, close - i - 1);
    i = close + 1;
    if (tag.empty()) return why = "empty tag", false;
    if (tag.front() == '?' || tag.front() == '!') continue;
    if (tag.front() == '/') {
      const std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return why = "mismatched </" + name + ">", false;
      stack.pop_back();
      continue;
    }
    const bool self_closing = tag.back() == '/';
    if (self_closing) tag.pop_back();
    const std::string name = tag.substr(0, tag.find_first_of(" \t\n"));
    if (stack.empty()) {
      if (root_seen) return why = "multiple root elements", false;
      root_seen = true;
    }
    if (std::count(tag.begin(), tag.end(), '"') % 2 != 0) return why = "unbalanced quotes in <" + name + ">", false;
    if (!self_closing) stack.push_back(name);
  }
  if (!stack.empty()) return why = "unclosed <" + stack.back() + ">", false;
  if (!root_seen) return why = "no root element", false;
  return true;
}

Verdict gradient_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 8);
  std::normal_distribution<double> n(0, 1);
  const LossFunction<double> loss = [](const MatrixXd& x, const AutoencoderTape<double>& tape) {
    const MatrixXd& e = tape.embedding();
    return LossEvaluation<double>{mse_loss(x, tape.reconstruction()) + 0.1 * e.squaredNorm(), 0.2 * e,
                                  mse_gradient(x, tape.reconstruction())};
  };
  double worst_rel = 0, worst_abs = 0;
  std::size_t coords = 0;
  for (int net = 0; net < 20; ++net) {
    ArchitectureSpec arch;
    arch.encoder_dims = {dim(rng), dim(rng), dim(rng)};
    arch.hidden = Activation::tanh;
    arch.output = net % 2 ? Activation::tanh : Activation::identity;
    auto p = make_autoencoder<double>(arch, static_cast<std::uint64_t>(net));
    for (auto* stack : {&p.encoder, &p.decoder})
      for (auto& l : *stack) l.bias = VectorXd::NullaryExpr(l.bias.size(), [&] { return 0.1 * n(rng); });
    MatrixXd x(arch.encoder_dims.front(), 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = n(rng);
    const auto r = finite_diff_check(p, x, 1e-5, loss);
    worst_rel = std::max(worst_rel, r.max_relative_error);
    worst_abs = std::max(worst_abs, r.max_absolute_error);
    coords += r.coordinates;
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = worst_rel < 1e-4 && worst_abs < 1e-8 && secs < 10;
  v.detail = "20 nets, " + std::to_string(coords) + " coords, max rel " + fmt(worst_rel, 3) + " (< 1e-4), max abs " +
             fmt(worst_abs, 3) + " (< 1e-8), " + fmt(secs, 3) + " s (< 10)";
  return v;
}

Verdict meta_invariants() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(1, 30);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::lognormal_distribution<double> mag(0.0, 2.0);
  const int sets = 10000;
  double worst_scale = 0, worst_cancel = 0;
  bool bounds = true, antisym = true;
  auto random_set = [&](int k) {
    std::vector<double> v(static_cast<std::size_t>(len(rng)));
    const double m = mag(rng);
    for (auto& x : v) x = (k % 97 == 0) ? 0.0 : (u(rng) < 0.05 ? 0.0 : m * u(rng));
    return v;
  };
  for (int k = 0; k < sets; ++k) {
    const auto ap = random_set(k), an = random_set(k + 1);
    const double cv_ap = coefficient_of_variation(ap), cv_an = coefficient_of_variation(an);
    for (const double c : {1e-3, 1.0, 1e3}) {
      for (const auto* set : {&ap, &an}) {
        std::vector<double> scaled(*set);
        for (auto& x : scaled) x *= c;
        const double base = set == &ap ? cv_ap : cv_an;
        const double cv = coefficient_of_variation(scaled);
        const double err = base == 0 ? std::abs(cv) : std::abs(cv - base) / base;
        worst_scale = std::max(worst_scale, err);
      }
    }
    const double m = mycv(cv_ap, cv_an);
    bounds &= m >= -1.0 && m <= 1.0;
    antisym &= mycv(cv_an, cv_ap) == -m;
    // Unscaled ratios sigma / mu, straight from the oracle.
    auto ratio = [](const std::vector<double>& v) {
      const double mu = oracle::mean(v);
      return mu == 0 ? 0.0 : oracle::population_sigma(v) / mu;
    };
    worst_cancel = std::max(worst_cancel, std::abs(mycv(ratio(ap), ratio(an)) - m));
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = worst_scale <= 1e-9 && bounds && antisym && worst_cancel <= 1e-12 && secs < 5;
  v.detail = std::to_string(sets) + " set pairs, CV scale err " + fmt(worst_scale, 3) + " (<= 1e-9), mycv in [-1,1] " +
             (bounds ? "yes" : "NO") + ", antisymmetry exact " + (antisym ? "yes" : "NO") + ", x100 cancel err " +
             fmt(worst_cancel, 3) + " (<= 1e-12), " + fmt(secs, 3) + " s (< 5)";
  return v;
}

Verdict triplet_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> pk(2, 4), dim(1, 6);
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> margin(0.0, 1.0);
  double worst = 0;
  for (int b = 0; b < 500; ++b) {
    const int P = pk(rng), K = pk(rng), D = dim(rng);
    std::vector<oracle::Point> pts;
    std::vector<int> labels;
    for (int p = 0; p < P; ++p)
      for (int k = 0; k < K; ++k) {
        oracle::Point x(static_cast<std::size_t>(D));
        for (auto& c : x) c = n(rng) + (b % 3 == 0 ? 3.0 * p : 0.0);
        pts.push_back(x);
        labels.push_back(p);
      }
    std::vector<std::size_t> order(pts.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    MatrixXd e(D, static_cast<Eigen::Index>(pts.size()));
    std::vector<int> shuffled_labels;
    std::vector<oracle::Point> shuffled;
    for (std::size_t j = 0; j < order.size(); ++j) {
      for (int d = 0; d < D; ++d) e(d, static_cast<Eigen::Index>(j)) = pts[order[j]][static_cast<std::size_t>(d)];
      shuffled_labels.push_back(labels[order[j]]);
      shuffled.push_back(pts[order[j]]);
    }
    const double m = margin(rng);
    const double got = batch_hard_triplet_loss(e, shuffled_labels, {m}).loss;
    worst = std::max(worst, std::abs(got - oracle::hardest_triplet_loss(shuffled, shuffled_labels, m)));
  }
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = worst <= 1e-12 && secs < 5;
  v.detail = "500 batches, max |loss - oracle| " + fmt(worst, 3) + " (<= 1e-12), " + fmt(secs, 3) + " s (< 5)";
  return v;
}

struct ReferenceRun {
  RunConfig config;
  fs::path dir;
  TrainedModels trained;
  StreamResult stream;
  double seconds = 0;
};

ReferenceRun reference_run(const std::string& name) {
  ReferenceRun run;
  run.dir = scratch(name);
  run.config = RunConfig::reference();
  run.config.data_dir = (run.dir / "data").string();
  const auto t0 = Clock::now();
  cmd_gen_data(run.config);
  run.trained = cmd_train(run.config, (run.dir / "snapshots").string());
  run.stream = cmd_stream(run.config, (run.dir / "snapshots").string(), (run.dir / "stream").string());
  run.seconds = seconds_since(t0);
  return run;
}

Verdict domain_shift(const ReferenceRun& run) {
  const auto t0 = Clock::now();
  const Dataset source = load_dataset(run.config.data_dir + "/source.csv");
  const Dataset target = load_dataset(run.config.data_dir + "/target.csv");
  const double oracle_src = nearest_center_accuracy(source), oracle_tgt = nearest_center_accuracy(target);

  StreamConfig baseline_cfg = run.config.stream_config(run.trained.dmin_threshold);
  baseline_cfg.decide.rule = DecisionRule::dmin_threshold;
  const auto baseline = run_stream(target, stream_models(run.trained, run.config), baseline_cfg);
  const double secs = run.seconds + seconds_since(t0);

  const auto& last = run.stream.epochs.back();
  const auto& base_last = baseline.epochs.back();
  const double same = last.same_class_acc.value_or(0), diff = last.diff_class_acc.value_or(0);
  const double b_same = base_last.same_class_acc.value_or(1), b_diff = base_last.diff_class_acc.value_or(1);
  Verdict v;
  v.pass = !run.stream.halted && !baseline.halted && oracle_src >= 0.99 && oracle_tgt >= 0.99 && same >= 0.90 &&
           diff >= 0.90 && std::min(b_same, b_diff) <= 0.70 && secs < 120;
  v.detail = "oracle src/tgt " + fmt(oracle_src) + "/" + fmt(oracle_tgt) + " (>= 0.99); final epoch same " + fmt(same) +
             ", diff " + fmt(diff) + " (>= 0.90); d_min baseline same " + fmt(b_same) + ", diff " + fmt(b_diff) +
             " (one <= 0.70); " + fmt(secs, 3) + " s (< 120)";
  return v;
}

Verdict online_learning(const ReferenceRun& run) {
  const auto& mse = run.stream.batch_mse;
  Verdict v;
  if (mse.size() != 200) {
    v.pass = false;
    v.detail = "expected a 200-batch stream, got " + std::to_string(mse.size());
    return v;
  }
  double first = 0, last = 0;
  for (int i = 0; i < 50; ++i) {
    first += mse[static_cast<std::size_t>(i)] / 50;
    last += mse[static_cast<std::size_t>(150 + i)] / 50;
  }
  const double drop = 1.0 - last / first;
  v.pass = drop >= 0.20;
  v.detail = "200 batches, first-quartile MSE " + fmt(first) + ", final-quartile " + fmt(last) + ", reduction " +
             fmt(100 * drop, 3) + "% (>= 20%)";
  return v;
}

double accuracy(const EvaluatorModel& m, const std::vector<MetaFeatureRecord>& records) {
  long ok = 0;
  for (const auto& r : records) ok += (predict(m, r) >= 0.5) == (*r.label == 1);
  return static_cast<double>(ok) / static_cast<double>(records.size());
}

struct ExchangeOutcome {
  long gated = 0;
  double bootstrap = 0, exchanged = 0;
  std::size_t held_out = 0;
};

ExchangeOutcome one_exchange_round(RunConfig config, const std::string& name) {
  const fs::path dir = scratch(name);
  config.data_dir = (dir / "data").string();
  config.stream.epochs = 1;
  cmd_gen_data(config);
  const auto trained = cmd_train(config, (dir / "snapshots").string());
  const Dataset target = load_dataset(config.data_dir + "/target.csv");
  const auto result = run_stream(target, stream_models(trained, config), config.stream_config(trained.dmin_threshold));
  if (result.halted) throw Error("stream halted: " + *result.halted);

  EpisodeConfig held_out_episode = config.episode();
  held_out_episode.epochs = 3;
  MetaFeatureOptions meta;
  meta.k_negatives = config.stream.k_negatives;
  const auto held_out = harvest_records(target, result.models.autoencoder, held_out_episode, meta,
                                        static_cast<std::size_t>(config.stream.gallery_cap),
                                        derive_seed(config.seed, 0x4e1dULL));
  ExchangeOutcome out;
  out.gated = result.epochs.front().gated;
  out.bootstrap = accuracy(trained.evaluators.target, held_out);
  out.exchanged = accuracy(result.models.evaluators.target, held_out);
  out.held_out = held_out.size();
  return out;
}

Verdict exchange_non_inferiority() {
  const auto t0 = Clock::now();
  RunConfig unshifted = RunConfig::reference();
  unshifted.target.scale = 1.0;
  unshifted.target.offset = 0.0;
  unshifted.target.rotate = false;
  const auto same = one_exchange_round(unshifted, "exchange_unshifted");
  const auto shifted = one_exchange_round(RunConfig::reference(), "exchange_shifted");
  Verdict v;
  v.pass = same.gated >= 50 && shifted.gated >= 50 && same.exchanged >= same.bootstrap - 0.01 &&
           shifted.exchanged > shifted.bootstrap;
  v.detail = "unshifted: " + std::to_string(same.gated) + " gated, held-out acc " + fmt(same.exchanged) +
             " vs bootstrap " + fmt(same.bootstrap) + " (>= -1pt); scale-shifted: " + std::to_string(shifted.gated) +
             " gated, " + fmt(shifted.exchanged) + " vs " + fmt(shifted.bootstrap) + " (strictly greater); " +
             std::to_string(same.held_out) + "/" + std::to_string(shifted.held_out) + " held-out records; " +
             fmt(seconds_since(t0), 3) + " s";
  return v;
}

Verdict determinism_and_reporting(const ReferenceRun& run) {
  Verdict v;
  const auto replay = reference_run("replay");
  bool identical = true;
  for (const char* f : {"metrics.csv", "outcomes.csv"})
    identical &= read_file((run.dir / "stream" / f).string()) == read_file((replay.dir / "stream" / f).string());
  identical &= read_file((run.dir / "snapshots" / "training_metrics.csv").string()) ==
               read_file((replay.dir / "snapshots" / "training_metrics.csv").string());

  const fs::path in = scratch("report_in");
  write_file((in / "metrics.csv").string(),
             "epoch,domain,same_class_acc,diff_class_acc,mse\n"
             "1,target,0.8,0.6,3.5\n"
             "2,target,0.9,0.7,2.5\n"
             "3,target,1,0.95,1.25\n");
  const auto files = cmd_report(in.string(), (in / "out").string());
  const std::string svg = read_file(files.svgs.at(0));
  std::string why;
  const bool xml_ok = well_formed_xml(svg, why);
  std::size_t polylines = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++polylines;
  const auto j = nlohmann::json::parse(read_file(files.summary)).at("metrics");
  const double expected[] = {(0.8 + 0.9 + 1.0) / 3, (0.6 + 0.7 + 0.95) / 3, (3.5 + 2.5 + 1.25) / 3};
  const char* cols[] = {"same_class_acc", "diff_class_acc", "mse"};
  double worst = 0;
  for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(j.at(cols[c]).at("mean").get<double>() - expected[c]));

  v.pass = identical && xml_ok && polylines == 3 && worst <= 1e-12;
  v.detail = std::string("replayed CSVs byte-identical ") + (identical ? "yes" : "NO") + ", SVG well-formed " +
             (xml_ok ? "yes" : "NO (" + why + ")") + ", polylines " + std::to_string(polylines) +
             " (= 3 metrics), summary mean err " + fmt(worst, 3) + " (<= 1e-12)";
  return v;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& check) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] criterion %d %s: %s\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
  };

  report(1, "gradient correctness", gradient_correctness);
  report(2, "meta-characteristic invariants", meta_invariants);
  report(3, "triplet oracle equivalence", triplet_oracle);

  std::optional<ReferenceRun> run;
  std::string run_error;
  try {
    run = reference_run("reference");
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  auto with_run = [&](const std::function<Verdict(const ReferenceRun&)>& f) {
    return [&, f]() -> Verdict {
      if (!run) return {false, "reference run failed: " + run_error};
      return f(*run);
    };
  };
  report(4, "domain-shift headline", with_run(domain_shift));
  report(5, "online learning effect", with_run(online_learning));
  report(6, "evaluator exchange non-inferiority", exchange_non_inferiority);
  report(7, "determinism and reporting", with_run(determinism_and_reporting));

  std::printf("%d of 7 criteria passed\n", 7 - failures);
  return failures == 0 ? 0 : 1;
}
