#include "owr/data_domain.hpp"
#include "owr/open_world_engine.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace owr;

namespace {

VectorXd v2(double a, double b) { return (VectorXd(2) << a, b).finished(); }

GalleryEntry entry(const VectorXd& e) { return {e, e, Domain::source}; }

AutoencoderParams<double> identity_net(int dim) {
  AutoencoderParams<double> p;
  p.encoder.push_back({MatrixXd::Identity(dim, dim), VectorXd::Zero(dim), Activation::identity});
  p.decoder.push_back({MatrixXd::Identity(dim, dim), VectorXd::Zero(dim), Activation::identity});
  return p;
}

struct Fixture {
  Dataset data;
  AutoencoderParams<double> net;
  EvaluatorModel evaluator;
  double threshold = 0;
};

// Seed-0 synthetic domain, identity encoder, evaluator fitted on ground-truth
// episodes of the same domain.
const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    DomainSpec spec;
    spec.raw_dim = 8;
    x.data = generate_domain(spec, 0);
    x.net = identity_net(8);
    const auto records = harvest_records(x.data, x.net, {0.5, 200, 2}, {}, 50, 1);
    x.evaluator = fit(EvaluatorModel::unfitted(Domain::source), records);
    return x;
  }();
  return f;
}

IdentityRegistry gallery_registry(const Dataset& d) {
  IdentityRegistry r;
  for (const auto i : d.indices(Split::gallery)) r.add_labeled(d.samples[i].identity, entry(d.samples[i].x));
  return r;
}

}  // namespace

TEST(IdentityRegistry, LabelsFreshAndMonotone) {
  IdentityRegistry r(3);
  EXPECT_EQ(r.enroll(entry(v2(0, 0))), 0);
  r.add_labeled(10, entry(v2(1, 1)));
  EXPECT_EQ(r.next_label(), 11);
  EXPECT_EQ(r.enroll(entry(v2(2, 2))), 11);
  EXPECT_THROW(r.add_labeled(5, entry(v2(0, 0))), InvalidArgument);
  EXPECT_THROW(r.append(99, entry(v2(0, 0))), InvalidArgument);
  EXPECT_THROW(IdentityRegistry(0), InvalidArgument);
}

TEST(IdentityRegistry, FifoCap) {
  IdentityRegistry r(2);
  const int l = r.enroll(entry(v2(0, 0)));
  r.append(l, entry(v2(1, 0)));
  r.append(l, entry(v2(2, 0)));
  const MatrixXd g = r.gallery_matrix(l);
  ASSERT_EQ(g.cols(), 2);
  EXPECT_EQ(g(0, 0), 1.0);
  EXPECT_EQ(g(0, 1), 2.0);
}

TEST(NearestCandidate, Examples) {
  IdentityRegistry r;
  const int a = r.enroll(entry(v2(1, 0)));
  const int b = r.enroll(entry(v2(0, 2)));
  auto c = nearest_candidate(v2(1, 0), r);
  EXPECT_EQ(c.label, a);
  EXPECT_EQ(c.d_min, 0.0);
  c = nearest_candidate(v2(0, 0), r);
  EXPECT_EQ(c.label, a);
  EXPECT_EQ(c.d_min, 1.0);
  (void)b;
}

TEST(NearestCandidate, TiesGoToSmallerLabel) {
  IdentityRegistry r;
  r.add_labeled(4, entry(v2(1, 0)));
  r.add_labeled(7, entry(v2(-1, 0)));
  EXPECT_EQ(nearest_candidate(v2(0, 0), r).label, 4);
}

TEST(NearestCandidate, EmptyRegistryIsColdStart) {
  EXPECT_THROW(nearest_candidate(v2(0, 0), IdentityRegistry{}), ColdStart);
}

TEST(NearestCandidate, MatchesExhaustiveScan) {
  std::mt19937_64 rng(0);
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 50; ++t) {
    IdentityRegistry r;
    std::vector<std::pair<int, VectorXd>> all;
    for (int c = 0; c < 10; ++c) {
      const int label = r.enroll(entry(VectorXd::NullaryExpr(3, [&] { return n(rng); })));
      all.emplace_back(label, r.gallery_matrix(label).col(0));
      for (int m = 0; m < 3; ++m) {
        const VectorXd e = VectorXd::NullaryExpr(3, [&] { return n(rng); });
        r.append(label, entry(e));
        all.emplace_back(label, e);
      }
    }
    const VectorXd q = VectorXd::NullaryExpr(3, [&] { return n(rng); });
    int best_label = -1;
    double best = INFINITY;
    for (const auto& [label, e] : all) {
      const double d = (e - q).norm();
      if (d < best || (d == best && label < best_label)) {
        best = d;
        best_label = label;
      }
    }
    const auto c = nearest_candidate(q, r);
    EXPECT_EQ(c.label, best_label);
    EXPECT_EQ(c.d_min, best);
  }
}

TEST(Decide, ColdStartEnrolls) {
  IdentityRegistry r;
  const auto out = decide(v2(0, 0), v2(0, 0), r, EvaluatorModel{}, {});
  EXPECT_EQ(out.decision, Decision::enrolled_new);
  EXPECT_FALSE(out.candidate_label.has_value());
  EXPECT_EQ(r.size(), 1u);
}

TEST(Decide, FarQueryEnrollsNew) {
  const auto& f = fixture();
  auto reg = gallery_registry(f.data);
  const auto& s = f.data.samples[f.data.indices(Split::gallery).front()];
  // Intra-class radius is about 0.1 * sqrt(8); this shift is 100 times that.
  const VectorXd far = s.x + VectorXd::Constant(8, 10.0);
  const int next = reg.next_label();
  const auto out = decide(far, far, reg, f.evaluator, {});
  EXPECT_EQ(out.decision, Decision::enrolled_new);
  EXPECT_EQ(out.assigned_label, next);
  EXPECT_EQ(reg.classes().at(next).size(), 1u);
}

TEST(Decide, DuplicateOfGalleryMemberAccepted) {
  const auto& f = fixture();
  auto reg = gallery_registry(f.data);
  const auto& s = f.data.samples[f.data.indices(Split::gallery)[3]];
  const std::size_t before = reg.classes().at(s.identity).size();
  const auto out = decide(s.x, s.x, reg, f.evaluator, {});
  EXPECT_EQ(out.decision, Decision::accepted);
  EXPECT_EQ(out.assigned_label, s.identity);
  EXPECT_EQ(out.d_min, 0.0);
  EXPECT_EQ(reg.classes().at(s.identity).size(), before + 1);
}

TEST(Decide, SingleClassFallsBackToDminThreshold) {
  IdentityRegistry r;
  r.enroll(entry(v2(0, 0)));
  DecideOptions opts;
  opts.dmin_threshold = 1.0;
  const auto near = decide(v2(0.5, 0), v2(0.5, 0), r, EvaluatorModel{}, opts);
  EXPECT_EQ(near.decision, Decision::accepted);
  EXPECT_FALSE(near.record.has_value());
  IdentityRegistry r2;
  r2.enroll(entry(v2(0, 0)));
  EXPECT_EQ(decide(v2(3, 0), v2(3, 0), r2, EvaluatorModel{}, opts).decision, Decision::enrolled_new);
}

TEST(Decide, DeterministicAndOutcomeInvariants) {
  const auto& f = fixture();
  std::mt19937_64 rng(5);
  auto reg_a = gallery_registry(f.data), reg_b = gallery_registry(f.data);
  const auto queries = f.data.indices(Split::query);
  std::uniform_int_distribution<std::size_t> pick(0, queries.size() - 1);
  std::size_t last_size = reg_a.size();
  for (int t = 0; t < 200; ++t) {
    const auto& s = f.data.samples[queries[pick(rng)]];
    const int next = reg_a.next_label();
    const auto a = decide(s.x, s.x, reg_a, f.evaluator, {});
    const auto b = decide(s.x, s.x, reg_b, f.evaluator, {});
    EXPECT_EQ(a.decision, b.decision);
    EXPECT_EQ(a.probability, b.probability);
    EXPECT_EQ(a.assigned_label, b.assigned_label);
    if (a.decision == Decision::accepted)
      EXPECT_EQ(a.assigned_label, *a.candidate_label);
    else
      EXPECT_EQ(a.assigned_label, next);
    EXPECT_GE(reg_a.size(), last_size);
    last_size = reg_a.size();
  }
}

TEST(Decide, GroundTruthRuleNeedsTruth) {
  IdentityRegistry r;
  r.enroll(entry(v2(0, 0)));
  DecideOptions opts;
  opts.rule = DecisionRule::ground_truth;
  EXPECT_THROW(decide(v2(1, 0), v2(1, 0), r, EvaluatorModel{}, opts), InvalidArgument);
}

TEST(OnlineUpdate, IdentityNetHasZeroLossAndNoUpdate) {
  const auto p = identity_net(3);
  const MatrixXd batch = MatrixXd::Random(3, 5);
  const auto r = online_update(p, OptimizerState{}, batch);
  EXPECT_EQ(r.mse_before, 0.0);
  EXPECT_EQ(r.params.encoder[0].weights, p.encoder[0].weights);
  EXPECT_EQ(r.params.decoder[0].weights, p.decoder[0].weights);
}

TEST(OnlineUpdate, FittedBatchStaysWithinTolerance) {
  auto p = make_autoencoder<double>({{4, 6, 3}, Activation::tanh, Activation::identity}, 2);
  const MatrixXd batch = 0.5 * MatrixXd::Random(4, 8);
  OptimizerState fast{0.05, 1.0, 20, 0};
  for (int i = 0; i < 3000; ++i) p = online_update(p, fast, batch).params;
  const double eps = mse_loss(batch, apply_stack(p.decoder, encode_batch(p, batch)));
  const auto r = online_update(p, OptimizerState{1e-4, 1.0, 20, 0}, batch);
  EXPECT_NEAR(r.mse_before, eps, 1e-15);
  EXPECT_LE(mse_loss(batch, apply_stack(r.params.decoder, encode_batch(r.params, batch))), eps + 1e-9);
}

TEST(OnlineUpdate, FreezeEncoderMovesDecoderOnly) {
  const auto p = make_autoencoder<double>({{4, 3}}, 3);
  const MatrixXd batch = MatrixXd::Random(4, 6);
  const auto r = online_update(p, OptimizerState{0.1, 0.5, 20, 0}, batch, true);
  EXPECT_EQ(r.params.encoder[0].weights, p.encoder[0].weights);
  EXPECT_NE(r.params.decoder[0].weights, p.decoder[0].weights);
}

TEST(OnlineUpdate, Errors) {
  EXPECT_THROW(online_update(identity_net(2), OptimizerState{}, MatrixXd(2, 0)), InvalidArgument);
  MatrixXd bad = MatrixXd::Ones(2, 2);
  bad(0, 0) = INFINITY;
  EXPECT_THROW(online_update(identity_net(2), OptimizerState{}, bad), TrainingDivergence);
}

namespace {

StreamModels fixture_models() {
  const auto& f = fixture();
  StreamModels m;
  m.autoencoder = f.net;
  m.online_opt = OptimizerState{1e-3, 0.5, 20, 0};
  m.evaluators = {f.evaluator, f.evaluator};
  m.evaluators.target.domain = Domain::source;
  return m;
}

StreamConfig fixture_config(double p_same) {
  StreamConfig c;
  c.episode = {p_same, 100, 2};
  c.decide.domain = Domain::source;
  c.online_updates = false;
  c.exchange_every = 0;
  c.adapt_standardization = false;
  return c;
}

}  // namespace

TEST(RunStream, EnrolledOnlySeparatedGivesPerfectSameClass) {
  const auto r = run_stream(fixture().data, fixture_models(), fixture_config(1.0));
  ASSERT_FALSE(r.halted) << *r.halted;
  ASSERT_EQ(r.epochs.size(), 2u);
  for (const auto& e : r.epochs) {
    EXPECT_EQ(e.same_class_acc, 1.0);
    EXPECT_FALSE(e.diff_class_acc.has_value());
  }
  EXPECT_NE(metrics_csv(r.epochs).find("1,source,1,,"), std::string::npos);
}

TEST(RunStream, NovelOnlyFarGivesPerfectDiffClass) {
  // Identities of the stream are held out; only the initial gallery is enrolled.
  const auto r = run_stream(fixture().data, fixture_models(), fixture_config(0.0));
  ASSERT_FALSE(r.halted) << *r.halted;
  for (const auto& e : r.epochs) EXPECT_GE(*e.diff_class_acc, 0.99);
}

TEST(RunStream, TallyFromLogMatchesMetricsAndReplayIsIdentical) {
  auto cfg = fixture_config(0.5);
  cfg.online_updates = true;
  cfg.exchange_every = 1;
  cfg.adapt_standardization = true;
  auto models = fixture_models();
  models.pools.source_records = harvest_records(fixture().data, fixture().net, {0.5, 100, 1}, {}, 50, 9);
  const auto a = run_stream(fixture().data, models, cfg);
  const auto b = run_stream(fixture().data, models, cfg);
  ASSERT_FALSE(a.halted) << *a.halted;
  EXPECT_EQ(metrics_csv(a.epochs), metrics_csv(b.epochs));
  EXPECT_EQ(outcome_csv(a.outcomes), outcome_csv(b.outcomes));
  const auto tallies = tally_from_log(a.outcomes);
  for (const auto& e : a.epochs) {
    const auto& t = tallies.at(e.epoch);
    EXPECT_EQ(t.same_class_accuracy(), e.same_class_acc);
    EXPECT_EQ(t.diff_class_accuracy(), e.diff_class_acc);
  }
  // Labels never reused within an episode.
  std::map<int, std::set<int>> fresh;
  for (const auto& o : a.outcomes)
    if (o.decision == Decision::enrolled_new) {
      EXPECT_TRUE(fresh[o.epoch].insert(o.assigned_label).second);
    }
}

TEST(RunStream, DivergenceHaltsWithPartialMetrics) {
  auto cfg = fixture_config(0.5);
  cfg.online_updates = true;
  auto models = fixture_models();
  models.autoencoder = make_autoencoder<double>({{8, 8, 4}, Activation::relu, Activation::identity}, 0);
  models.online_opt = OptimizerState{1e6, 1.0, 20, 0};
  const auto r = run_stream(fixture().data, models, cfg);
  ASSERT_TRUE(r.halted.has_value());
  ASSERT_FALSE(r.epochs.empty());
  EXPECT_TRUE(r.epochs.back().mse.has_value());
}

TEST(RunStream, Preconditions) {
  auto models = fixture_models();
  models.evaluators.target = EvaluatorModel::unfitted(Domain::target);
  EXPECT_THROW(run_stream(fixture().data, models, fixture_config(0.5)), NotFitted);
  auto wrong = fixture_models();
  wrong.autoencoder = identity_net(3);
  EXPECT_THROW(run_stream(fixture().data, wrong, fixture_config(0.5)), ShapeError);
}

TEST(OutcomeCsv, HeaderAndColdStartRow) {
  OutcomeLogRow row{0, 7, std::nullopt, 0, 0, Decision::enrolled_new, 3, 1};
  EXPECT_EQ(outcome_csv({row}),
            "query_id,true_label,candidate_label,d_min,probability,decision,assigned_label,epoch\n"
            "0,7,,,0,enrolled_new,3,1\n");
}
