#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "cacto/trainer.hpp"

using namespace cacto;

namespace {

TrainConfig small_toy(int iterations = 3) {
  TrainConfig cfg;
  cfg.model = default_model_spec(SystemKind::Toy1D);
  cfg.model.horizon = 20;
  cfg.field.control_weight = 0.1;
  cfg.solver.calibration_probes = 10;
  cfg.solver.calibration_cap = 200;
  cfg.solver.eval_max_iter = 200;
  cfg.nets.hidden = {8, 8};
  cfg.nets.minibatch = 16;
  cfg.N = 30;
  cfg.M = 20;
  cfg.K = 5;
  cfg.iterations = iterations;
  cfg.eval_count = 5;
  cfg.workers = 1;
  cfg.seed = 11;
  return cfg;
}

CostField three_far_obstacles() {
  CostField f;
  f.obstacles.assign(3, Ellipse{});
  f.obstacles[0].center = {30, 30};
  f.obstacles[1].center = {-30, 30};
  f.obstacles[2].center = {30, -30};
  return f;
}

// Std-critic whose score grows monotonically with the first state entry.
MlpParams monotone_scorer(int n) {
  MlpParams p = make_mlp({n + 1, {}, 1, Activation::Silu, OutputHead::SoftplusFloor, false, 1});
  p.layers[0].W.setZero();
  p.layers[0].W(0, 0) = 1.0;
  p.layers[0].b.setZero();
  p.output_floor = 1e-3;
  return p;
}

std::vector<TimeState> line_states(const std::vector<double>& xs) {
  std::vector<TimeState> out;
  for (double x : xs) out.push_back({VectorXd::Constant(1, x), 0});
  return out;
}

bool same_report(const IterationReport& a, const IterationReport& b) {
  return a.iter == b.iter && a.episodes_cum == b.episodes_cum &&
         a.eval_mean_cost == b.eval_mean_cost && a.to_mean_cost == b.to_mean_cost &&
         a.to_median_cost == b.to_median_cost && a.converged_frac == b.converged_frac &&
         a.critic_loss == b.critic_loss && a.std_loss == b.std_loss && a.max_iter == b.max_iter;
}

}  // namespace

// ----- configuration ----- //

TEST(TrainConfig, LaterBatchRounds) {
  TrainConfig cfg;
  cfg.N = 300;
  EXPECT_EQ(cfg.later_batch(), 75);
  cfg.N = 30;
  EXPECT_EQ(cfg.later_batch(), 8);
  cfg.N = 1;
  EXPECT_EQ(cfg.later_batch(), 1);
  cfg.episode_fraction = 1.0;
  cfg.N = 550;
  EXPECT_EQ(cfg.later_batch(), 550);
}

TEST(TrainConfig, ValidateRejectsBrokenInvariants) {
  const TrainConfig ok = small_toy();
  EXPECT_NO_THROW(validate(ok));
  auto bad = [&](auto&& mutate) {
    TrainConfig c = ok;
    mutate(c);
    return c;
  };
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.N = 0; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.episode_fraction = 0.0; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.episode_fraction = 1.5; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.candidate_multiplier = 0; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.K = 0; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.M = 0; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.eval_count = 0; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.nets.k_s = -1; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.nets.sigma_min = 0; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.solver.calibration_probes = 9; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.solver.p_later = 0; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.solver.p_first = 101; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.field.obstacles.resize(1); })), std::invalid_argument);
}

TEST(Variant, MapsToScheduleAndSampling) {
  TrainConfig cfg;
  apply_variant(cfg, Variant::Baseline);
  EXPECT_FALSE(cfg.bic);
  EXPECT_EQ(cfg.episode_fraction, 1.0);
  apply_variant(cfg, Variant::Bic);
  EXPECT_TRUE(cfg.bic);
  EXPECT_EQ(cfg.episode_fraction, 0.25);
  apply_variant(cfg, Variant::Reduced);
  EXPECT_FALSE(cfg.bic);
  EXPECT_EQ(cfg.episode_fraction, 0.25);
  for (Variant v : {Variant::Bic, Variant::Reduced, Variant::Baseline}) {
    EXPECT_EQ(variant_from_string(to_string(v)), v);
  }
  EXPECT_THROW(variant_from_string("cacto"), std::invalid_argument);
}

TEST(DeriveSeed, DeterministicAndDistinct) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  std::set<std::uint64_t> seen;
  for (std::uint64_t base : {0ull, 1ull, 2ull})
    for (std::uint64_t stream = 0; stream < 8; ++stream)
      for (std::uint64_t idx = 0; idx < 8; ++idx) seen.insert(derive_seed(base, stream, idx));
  EXPECT_EQ(seen.size(), 3u * 8u * 8u);
}

// ----- BIC selection ----- //

TEST(BicSelection, IncreasingScoresKeepLastDescending) {
  const auto cands = line_states({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto kept = select_initial_states_bic(cands, monotone_scorer(1), 3);
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_EQ(kept[0].x[0], 9);
  EXPECT_EQ(kept[1].x[0], 8);
  EXPECT_EQ(kept[2].x[0], 7);
}

TEST(BicSelection, TiesResolvedByCandidateIndex) {
  MlpParams flat = monotone_scorer(1);
  flat.layers[0].W.setZero();
  const auto cands = line_states({5, 4, 3, 2});
  const auto kept = select_initial_states_bic(cands, flat, 2);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].x[0], 5);
  EXPECT_EQ(kept[1].x[0], 4);
}

TEST(BicSelection, SelectedDominateRejected) {
  MlpInit init{3, {16, 16}, 1, Activation::Silu, OutputHead::SoftplusFloor, false, 5};
  const MlpParams sd = make_mlp(init);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<TimeState> cands(1000);
  for (auto& c : cands) c = {(VectorXd(2) << u(rng), u(rng)).finished(), 0};
  const auto kept = select_initial_states_bic(cands, sd, 100);
  ASSERT_EQ(kept.size(), 100u);

  // independent oracle: score everything, sort, compare sets
  std::vector<std::pair<double, int>> scored;
  for (int i = 0; i < 1000; ++i) scored.push_back({mlp_forward(sd, augment(cands[i]))[0], i});
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  double min_kept = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(kept[i].x, cands[scored[i].second].x);
    min_kept = std::min(min_kept, mlp_forward(sd, augment(kept[i]))[0]);
  }
  for (int i = 100; i < 1000; ++i) EXPECT_LE(scored[i].first, min_kept);

  // a permutation of the candidates selects the same set
  std::vector<TimeState> shuffled = cands;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto kept2 = select_initial_states_bic(shuffled, sd, 100);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(kept2[i].x, kept[i].x);
}

TEST(BicSelection, KeepBeyondCandidatesThrows) {
  EXPECT_THROW(select_initial_states_bic(line_states({1, 2}), monotone_scorer(1), 3),
               std::invalid_argument);
  EXPECT_TRUE(select_initial_states_bic(line_states({1, 2}), monotone_scorer(1), 0).empty());
}

// ----- evaluation ----- //

TEST(Evaluate, ZeroCostFieldGivesZero) {
  const ModelSpec m = default_model_spec(SystemKind::PointMass);
  const ModelProblem problem(m, three_far_obstacles());
  const MlpParams actor = make_mlp({5, {8}, 2, Activation::Silu, OutputHead::ScaledTanh, false, 2});
  const auto starts = sample_initial_states(m, 4, 1, Region::Workspace);
  SolverOptions opt;
  opt.max_iter = 50;
  EXPECT_EQ(evaluate_policy(actor, problem, starts, false, opt).mean_cost, 0.0);
  EXPECT_EQ(evaluate_policy(actor, problem, starts, true, opt).mean_cost, 0.0);
}

TEST(Evaluate, SingleStartEqualsTrajectoryCost) {
  const ModelSpec m = default_model_spec(SystemKind::Toy1D);
  CostField f;
  f.control_weight = 0.1;
  const ModelProblem problem(m, f);
  MlpParams actor = make_mlp({2, {8}, 1, Activation::Silu, OutputHead::ScaledTanh, false, 3});
  actor.output_bound = m.u_max;
  const std::vector<TimeState> start{{VectorXd::Constant(1, 0.7), 4}};
  SolverOptions opt;
  const EvalResult r = evaluate_policy(actor, problem, start, false, opt);
  EXPECT_EQ(r.mean_cost, actor_rollout(actor, problem, start[0], m.horizon - 4).total_cost());
  ASSERT_EQ(r.costs.size(), 1u);
}

TEST(Evaluate, TrajectoryOptimizationNeverWorsensRollout) {
  const ModelSpec m = default_model_spec(SystemKind::Toy1D);
  CostField f;
  f.control_weight = 0.1;
  const ModelProblem problem(m, f);
  MlpParams actor = make_mlp({2, {8}, 1, Activation::Silu, OutputHead::ScaledTanh, false, 4});
  actor.output_bound = m.u_max;
  const auto starts = sample_initial_states(m, 20, 2, Region::Workspace);
  SolverOptions opt;
  opt.max_iter = 200;
  const EvalResult ro = evaluate_policy(actor, problem, starts, false, opt);
  const EvalResult to = evaluate_policy(actor, problem, starts, true, opt);
  for (std::size_t i = 0; i < starts.size(); ++i) EXPECT_LE(to.costs[i], ro.costs[i]);
  EXPECT_THROW(evaluate_policy(actor, problem, {}, false, opt), std::invalid_argument);
}

TEST(Evaluate, ReachesTargetUsesFinalTaskPosition) {
  const ModelSpec m = default_model_spec(SystemKind::PointMass);
  CostField f = three_far_obstacles();
  f.target = {-7, 0};
  f.target_reward_radius = 1.0;
  Trajectory t;
  t.X = {VectorXd::Zero(4), (VectorXd(4) << -7.5, 0.5, 0, 0).finished()};
  t.U = {VectorXd::Zero(2)};
  EXPECT_TRUE(reaches_target(m, f, t));
  t.X.back() << -8.2, 0, 0, 0;
  EXPECT_FALSE(reaches_target(m, f, t));
}

// ----- the training loop ----- //

TEST(Trainer, ZeroInitializedActorWarmStartsLikeNaive) {
  const Trainer tr(small_toy());
  const TimeState x0{VectorXd::Constant(1, 1.3), 2};
  const auto w = tr.actor_warmstart(x0);
  const auto n = naive_warmstart(tr.problem(), x0);
  ASSERT_EQ(w.size(), n.size());
  for (std::size_t k = 0; k < w.size(); ++k) EXPECT_EQ(w[k], n[k]);
  EXPECT_EQ(tr.eval_starts().size(), 5u);
}

TEST(Trainer, EpisodeScheduleIsExact) {
  TrainConfig cfg = small_toy(4);
  const auto r = train(cfg).reports;
  ASSERT_EQ(r.size(), 4u);
  for (int j = 1; j <= 4; ++j) EXPECT_EQ(r[j - 1].episodes_cum, 30 + (j - 1) * 8);

  apply_variant(cfg, Variant::Baseline);
  cfg.iterations = 2;
  const auto b = train(cfg).reports;
  EXPECT_EQ(b[0].episodes_cum, 30);
  EXPECT_EQ(b[1].episodes_cum, 60);
}

TEST(Trainer, FirstIterationSolvesExactlyN) {
  Trainer tr(small_toy(1));
  const IterationReport r = tr.run_iteration(1);
  EXPECT_EQ(r.episodes_cum, 30);
  EXPECT_EQ(tr.episodes(), 30);
  // one sample per node, terminal included
  EXPECT_EQ(tr.buffer().size(), 30u * 21u);
  EXPECT_GT(tr.max_iter_first(), 0);
  EXPECT_GT(tr.max_iter_later(), 0);
  EXPECT_EQ(r.max_iter, tr.max_iter_first());
}

TEST(Trainer, IterationsMustRunInOrder) {
  Trainer tr(small_toy());
  EXPECT_THROW(tr.run_iteration(2), std::logic_error);
  tr.run_iteration(1);
  EXPECT_THROW(tr.run_iteration(1), std::logic_error);
  EXPECT_NO_THROW(tr.run_iteration(2));
}

TEST(Trainer, MaxIterOverridesSkipCalibration) {
  TrainConfig cfg = small_toy(2);
  cfg.solver.max_iter_first = 7;
  cfg.solver.max_iter_later = 3;
  const auto r = train(cfg).reports;
  EXPECT_EQ(r[0].max_iter, 7);
  EXPECT_EQ(r[1].max_iter, 3);
}

TEST(Trainer, ZeroIterationsReturnsInitialNetworks) {
  const TrainConfig cfg = small_toy(0);
  const TrainResult r = train(cfg);
  const Trainer fresh(cfg);
  EXPECT_TRUE(r.reports.empty());
  EXPECT_EQ(r.actor.layers.back().W, fresh.actor().layers.back().W);
  EXPECT_EQ(r.critic.layers[0].W, fresh.critic().layers[0].W);
  EXPECT_EQ(r.std_critic.layers[0].W, fresh.std_critic().layers[0].W);
}

TEST(Trainer, FixedSeedRunsAreIdentical) {
  const TrainConfig cfg = small_toy(3);
  int calls = 0;
  const TrainResult a = train(cfg, [&](const Trainer&, const IterationReport&) { ++calls; });
  const TrainResult b = train(cfg);
  EXPECT_EQ(calls, 3);
  ASSERT_EQ(a.reports.size(), b.reports.size());
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    EXPECT_TRUE(same_report(a.reports[i], b.reports[i])) << "iteration " << i + 1;
  }
  for (std::size_t l = 0; l < a.critic.layers.size(); ++l) {
    EXPECT_EQ(a.critic.layers[l].W, b.critic.layers[l].W);
    EXPECT_EQ(a.actor.layers[l].W, b.actor.layers[l].W);
    EXPECT_EQ(a.std_critic.layers[l].W, b.std_critic.layers[l].W);
  }
  TrainConfig other = cfg;
  other.seed = 12;
  EXPECT_NE(train(other).reports.back().critic_loss, a.reports.back().critic_loss);
}

TEST(Trainer, ReportsAreFinite) {
  const auto r = train(small_toy(2)).reports;
  for (const IterationReport& rep : r) {
    EXPECT_TRUE(std::isfinite(rep.eval_mean_cost));
    EXPECT_TRUE(std::isfinite(rep.critic_loss));
    EXPECT_TRUE(std::isfinite(rep.std_loss));
    EXPECT_GE(rep.converged_frac, 0.0);
    EXPECT_LE(rep.converged_frac, 1.0);
    EXPECT_LE(rep.to_median_cost, std::numeric_limits<double>::max());
    EXPECT_GE(rep.t_to_s, 0.0);
  }
}

TEST(Trainer, Toy1DTrainingDoesNotWorsenEvaluation) {
  TrainConfig cfg = small_toy(3);
  cfg.model.horizon = 60;
  cfg.nets.hidden = {32, 32};
  cfg.nets.minibatch = 64;
  cfg.nets.lr_critic = 3e-3;
  cfg.nets.lr_std = 3e-3;
  cfg.nets.k_s = 0.0;
  cfg.N = 100;
  cfg.K = 60;
  cfg.M = 2000;
  cfg.eval_count = 20;
  const Trainer fresh(cfg);
  const double initial =
      evaluate_policy(fresh.actor(), fresh.problem(), fresh.eval_starts(), cfg.eval_with_to,
                      fresh.solver_options(cfg.solver.eval_max_iter))
          .mean_cost;
  const auto r = train(cfg).reports;
  EXPECT_LE(r.back().eval_mean_cost, initial + 1e-9);
}

TEST(Diagnostic, RequiresToyModel) {
  TrainConfig cfg = small_toy();
  cfg.model = default_model_spec(SystemKind::PointMass);
  cfg.field = three_far_obstacles();
  EXPECT_THROW(toy1d_diagnostic(cfg, 10), std::invalid_argument);
}

TEST(Diagnostic, GridCoversWorkspace) {
  TrainConfig cfg = small_toy(1);
  const auto rows = toy1d_diagnostic(cfg, 21);
  ASSERT_EQ(rows.size(), 21u);
  EXPECT_EQ(rows.front().x0, cfg.model.workspace.lo[0]);
  EXPECT_EQ(rows.back().x0, cfg.model.workspace.hi[0]);
  for (const DiagnosticRow& row : rows) {
    EXPECT_GE(row.v_std, cfg.nets.sigma_min);
    EXPECT_TRUE(std::isfinite(row.v_critic));
  }
}
