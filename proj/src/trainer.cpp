#include "cacto/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cacto {
namespace {

enum Stream : std::uint64_t {
  kStarts = 1,
  kCandidates = 2,
  kEval = 3,
  kCalibration = 4,
  kInit = 5,
  kMinibatch = 6,
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

void set_input_normalization(MlpParams& p, const ModelSpec& model) {
  p.input_shift = VectorXd::Zero(model.n + 1);
  p.input_scale = VectorXd::Ones(model.n + 1);
  p.input_shift.head(model.n) = model.workspace.mid();
  const VectorXd half = model.workspace.half_width();
  for (int i = 0; i < model.n; ++i) {
    p.input_scale[i] = half[i] > 0.0 ? half[i] : 1.0;
  }
  p.input_scale[model.n] = model.horizon;
}

}  // namespace

int TrainConfig::later_batch() const {
  return std::max(1, static_cast<int>(std::lround(episode_fraction * N)));
}

void validate(const TrainConfig& cfg) {
  validate(cfg.model, cfg.field);
  if (cfg.N < 1) throw std::invalid_argument("N must be >= 1");
  if (!(cfg.episode_fraction > 0.0 && cfg.episode_fraction <= 1.0)) {
    throw std::invalid_argument("episode_fraction must lie in (0, 1]");
  }
  if (cfg.candidate_multiplier < 1) {
    throw std::invalid_argument("candidate_multiplier must be >= 1");
  }
  if (cfg.K < 1) throw std::invalid_argument("K must be >= 1");
  if (cfg.M < 1) throw std::invalid_argument("M must be >= 1");
  if (cfg.iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (cfg.eval_count < 1) throw std::invalid_argument("eval_count must be >= 1");
  if (cfg.nets.minibatch < 1) throw std::invalid_argument("minibatch must be >= 1");
  if (cfg.nets.k_s < 0.0) throw std::invalid_argument("k_s must be >= 0");
  if (!(cfg.nets.sigma_min > 0.0)) {
    throw std::invalid_argument("sigma_min must be positive");
  }
  if (!(cfg.solver.reg_eps > 0.0)) throw std::invalid_argument("reg_eps must be positive");
  if (cfg.solver.calibration_probes < 10) {
    throw std::invalid_argument("calibration_probes must be >= 10");
  }
  for (double p : {cfg.solver.p_first, cfg.solver.p_later}) {
    if (!(p > 0.0 && p <= 100.0)) {
      throw std::invalid_argument("percentiles must lie in (0, 100]");
    }
  }
}

Variant variant_from_string(std::string_view name) {
  if (name == "bic") return Variant::Bic;
  if (name == "reduced") return Variant::Reduced;
  if (name == "baseline") return Variant::Baseline;
  throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Bic:
      return "bic";
    case Variant::Reduced:
      return "reduced";
    case Variant::Baseline:
      return "baseline";
  }
  return "bic";
}

void apply_variant(TrainConfig& cfg, Variant v) {
  cfg.bic = v == Variant::Bic;
  cfg.episode_fraction = v == Variant::Baseline ? 1.0 : 0.25;
}

std::vector<TimeState> select_initial_states_bic(
    const std::vector<TimeState>& candidates, const MlpParams& std_critic,
    int keep) {
  if (keep < 0 || keep > static_cast<int>(candidates.size())) {
    throw std::invalid_argument("cannot keep " + std::to_string(keep) + " of " +
                                std::to_string(candidates.size()) +
                                " candidates");
  }
  if (keep == 0) return {};
  const int n = static_cast<int>(candidates.front().x.size());
  MatrixXd inputs(n + 1, static_cast<Eigen::Index>(candidates.size()));
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    inputs.col(i) = augment(candidates[i]);
  }
  const MatrixXd scores = mlp_forward_batch(std_critic, inputs);
  std::vector<int> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores(0, a) > scores(0, b);
  });
  std::vector<TimeState> out;
  out.reserve(keep);
  for (int i = 0; i < keep; ++i) out.push_back(candidates[order[i]]);
  return out;
}

EvalResult evaluate_policy(const MlpParams& actor, const ModelProblem& problem,
                           const std::vector<TimeState>& eval_starts,
                           bool use_to, const SolverOptions& to_options,
                           int workers) {
  if (eval_starts.empty()) throw std::invalid_argument("no evaluation starts");
  EvalResult out;
  std::vector<Trajectory> rollouts;
  rollouts.reserve(eval_starts.size());
  for (const TimeState& s : eval_starts) {
    rollouts.push_back(
        actor_rollout(actor, problem, s, problem.max_horizon() - s.t));
  }
  if (use_to) {
    std::vector<std::vector<VectorXd>> warm;
    warm.reserve(rollouts.size());
    for (const Trajectory& r : rollouts) warm.push_back(r.U);
    auto batch = solve_batch(problem, eval_starts, warm, to_options, workers);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (!batch[i].result) throw std::runtime_error(batch[i].error);
      out.trajectories.push_back(std::move(batch[i].result->traj));
    }
  } else {
    out.trajectories = std::move(rollouts);
  }
  double total = 0.0;
  for (const Trajectory& t : out.trajectories) {
    out.costs.push_back(t.total_cost());
    total += out.costs.back();
  }
  out.mean_cost = total / static_cast<double>(out.costs.size());
  return out;
}

bool reaches_target(const ModelSpec& model, const CostField& field,
                    const Trajectory& traj) {
  const VectorXd& last = traj.X.back();
  if (model.kind == SystemKind::Toy1D) return false;
  return (task_position(model, last) - field.target).norm() <=
         field.target_reward_radius;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                          std::uint64_t index) {
  // splitmix64 finalizer over a mixed key
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1) +
                    0xBF58476D1CE4E5B9ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<TimeState> evaluation_starts(const TrainConfig& cfg, Region region) {
  return sample_initial_states(cfg.model, cfg.eval_count,
                               derive_seed(cfg.seed, kEval), region);
}

// ----- Trainer ----- //

Trainer::Trainer(TrainConfig cfg)
    : cfg_(std::move(cfg)),
      problem_(cfg_.model, cfg_.field),
      buffer_(cfg_.nets.buffer_capacity),
      batch_rng_(derive_seed(cfg_.seed, kMinibatch)) {
  validate(cfg_);
  const ModelSpec& model = cfg_.model;

  MlpInit init;
  init.input_dim = model.n + 1;
  init.hidden = cfg_.nets.hidden;
  init.activation = cfg_.nets.activation;

  init.output_dim = model.m;
  init.head = OutputHead::ScaledTanh;
  init.zero_last_layer = true;
  init.seed = derive_seed(cfg_.seed, kInit, 0);
  actor_ = make_mlp(init);
  actor_.output_bound = model.u_max;

  init.output_dim = 1;
  init.head = OutputHead::Linear;
  init.zero_last_layer = false;
  init.seed = derive_seed(cfg_.seed, kInit, 1);
  critic_ = make_mlp(init);

  init.head = OutputHead::SoftplusFloor;
  init.seed = derive_seed(cfg_.seed, kInit, 2);
  std_critic_ = make_mlp(init);
  std_critic_.output_floor = cfg_.nets.sigma_min;

  for (MlpParams* p : {&actor_, &critic_, &std_critic_}) {
    set_input_normalization(*p, model);
  }
  critic_target_ = critic_;

  actor_opt_ = make_adam(actor_, cfg_.nets.lr_actor);
  critic_opt_ = make_adam(critic_, cfg_.nets.lr_critic);
  std_opt_ = make_adam(std_critic_, cfg_.nets.lr_std);

  eval_starts_ = evaluation_starts(cfg_, Region::HardRegion);
  scales_.gradient = VectorXd::Ones(model.n);
}

SolverOptions Trainer::solver_options(int max_iter) const {
  SolverOptions o;
  o.max_iter = max_iter;
  o.reg.eps = cfg_.solver.reg_eps;
  o.tol = cfg_.solver.tol;
  return o;
}

std::vector<VectorXd> Trainer::actor_warmstart(const TimeState& x0) const {
  return actor_rollout(actor_, problem_, x0, cfg_.model.horizon - x0.t).U;
}

void Trainer::calibrate_first() {
  if (cfg_.solver.max_iter_first > 0) {
    max_iter_first_ = cfg_.solver.max_iter_first;
    return;
  }
  const auto probes = sample_initial_states(
      cfg_.model, cfg_.solver.calibration_probes,
      derive_seed(cfg_.seed, kCalibration, 0), Region::Workspace);
  const WarmstartSource naive = [this](const TimeState& x0) {
    return naive_warmstart(problem_, x0);
  };
  max_iter_first_ =
      calibrate_max_iter(problem_, probes, cfg_.solver.calibration_cap,
                         cfg_.solver.p_first, naive,
                         solver_options(cfg_.solver.calibration_cap),
                         cfg_.workers)
          .max_iter;
}

void Trainer::calibrate_later() {
  if (cfg_.solver.max_iter_later > 0) {
    max_iter_later_ = cfg_.solver.max_iter_later;
    return;
  }
  const auto probes = sample_initial_states(
      cfg_.model, cfg_.solver.calibration_probes,
      derive_seed(cfg_.seed, kCalibration, 1), Region::Workspace);
  const WarmstartSource warm = [this](const TimeState& x0) {
    return actor_warmstart(x0);
  };
  max_iter_later_ =
      calibrate_max_iter(problem_, probes, cfg_.solver.calibration_cap,
                         cfg_.solver.p_later, warm,
                         solver_options(cfg_.solver.calibration_cap),
                         cfg_.workers)
          .max_iter;
}

void Trainer::prepare_networks(std::span<const TOSample> samples) {
  // Value scale from the first batch of targets; fixed afterwards.
  double mean = 0.0;
  for (const TOSample& s : samples) mean += s.V_bar;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (const TOSample& s : samples) var += (s.V_bar - mean) * (s.V_bar - mean);
  const double scale = std::max(std::sqrt(var / samples.size()), 1e-3);

  critic_.output_scale = scale;
  critic_.layers.back().b.setConstant(mean / scale);
  critic_target_ = critic_;
  std_critic_.output_scale = scale;

  scales_.value = 1.0 / (scale * scale);
  VectorXd grad_sq = VectorXd::Zero(cfg_.model.n);
  for (const TOSample& s : samples) grad_sq += s.V_bar_x.cwiseAbs2();
  grad_sq /= static_cast<double>(samples.size());
  scales_.gradient = grad_sq.cwiseMax(1e-12).cwiseInverse();
}

void Trainer::update_networks(IterationReport& report) {
  const int horizon = cfg_.model.horizon;
  const bool boot = cfg_.nets.bootstrap;
  const auto mb = static_cast<std::size_t>(cfg_.nets.minibatch);
  double critic_total = 0.0;
  std::vector<TimeState> states;
  states.reserve(mb);
  for (int c = 0; c < cfg_.M; ++c) {
    const auto batch = buffer_.sample_minibatch(mb, batch_rng_);
    const LossAndGrad cl = critic_loss(critic_, critic_target_, batch,
                                       cfg_.nets.k_s, boot, horizon, scales_);
    auto cu = adam_step(critic_, critic_opt_, cl.grads);
    critic_ = std::move(cu.params);
    critic_opt_ = std::move(cu.state);
    critic_target_ = polyak_average(critic_target_, critic_, cfg_.nets.polyak_tau);
    critic_total += cl.loss;

    states.clear();
    for (const TOSample& s : batch) {
      if (s.state.t < horizon) states.push_back(s.state);
    }
    if (!states.empty()) {
      const LossAndGrad al = actor_loss(actor_, critic_, problem_, states);
      auto au = adam_step(actor_, actor_opt_, al.grads);
      actor_ = std::move(au.params);
      actor_opt_ = std::move(au.state);
    }
  }
  double std_total = 0.0;
  for (int c = 0; c < cfg_.M; ++c) {
    const auto batch = buffer_.sample_minibatch(mb, batch_rng_);
    const LossAndGrad sl = std_critic_loss(std_critic_, critic_, batch,
                                           &critic_target_, boot, horizon);
    auto su = adam_step(std_critic_, std_opt_, sl.grads);
    std_critic_ = std::move(su.params);
    std_opt_ = std::move(su.state);
    std_total += sl.loss;
  }
  report.critic_loss = critic_total / cfg_.M;
  report.std_loss = std_total / cfg_.M;
}

IterationReport Trainer::run_iteration(int iter_idx) {
  if (iter_idx != next_iter_) {
    throw std::logic_error("iteration " + std::to_string(iter_idx) +
                           " run out of order (expected " +
                           std::to_string(next_iter_) + ")");
  }
  IterationReport report;
  report.iter = iter_idx;
  const ModelSpec& model = cfg_.model;

  auto t_start = std::chrono::steady_clock::now();
  std::vector<TimeState> starts;
  std::vector<std::vector<VectorXd>> warm;
  int max_iter = 0;
  if (iter_idx == 1) {
    calibrate_first();
    max_iter = max_iter_first_;
    starts = sample_initial_states(model, cfg_.N,
                                   derive_seed(cfg_.seed, kStarts, iter_idx),
                                   Region::Workspace);
    for (const TimeState& s : starts) warm.push_back(naive_warmstart(problem_, s));
  } else {
    max_iter = max_iter_later_;
    const int keep = cfg_.later_batch();
    if (cfg_.bic) {
      const auto candidates = sample_initial_states(
          model, keep * cfg_.candidate_multiplier,
          derive_seed(cfg_.seed, kCandidates, iter_idx), Region::Workspace);
      starts = select_initial_states_bic(candidates, std_critic_, keep);
    } else {
      starts = sample_initial_states(model, keep,
                                     derive_seed(cfg_.seed, kStarts, iter_idx),
                                     Region::Workspace);
    }
    for (const TimeState& s : starts) warm.push_back(actor_warmstart(s));
  }
  report.max_iter = max_iter;

  auto batch = solve_batch(problem_, starts, warm, solver_options(max_iter),
                           cfg_.workers);
  std::string errors;
  for (const BatchEntry& e : batch) {
    if (!e.result) errors += e.error + "; ";
  }
  if (!errors.empty()) {
    throw std::runtime_error("TO batch failed in iteration " +
                             std::to_string(iter_idx) + ": " + errors);
  }

  std::vector<TOSample> samples;
  std::vector<double> costs;
  int converged = 0;
  for (const BatchEntry& e : batch) {
    const SolveResult& r = *e.result;
    costs.push_back(r.cost);
    converged += r.converged ? 1 : 0;
    auto s = kstep_targets(r, cfg_.K);
    samples.insert(samples.end(), std::make_move_iterator(s.begin()),
                   std::make_move_iterator(s.end()));
  }
  buffer_.push_many(samples);
  episodes_ += static_cast<int>(starts.size());
  report.episodes_cum = episodes_;
  report.to_mean_cost =
      std::accumulate(costs.begin(), costs.end(), 0.0) / costs.size();
  report.to_median_cost = median(costs);
  report.converged_frac = static_cast<double>(converged) / costs.size();
  report.t_to_s = seconds_since(t_start);

  t_start = std::chrono::steady_clock::now();
  if (iter_idx == 1) prepare_networks(samples);
  update_networks(report);
  report.t_nets_s = seconds_since(t_start);

  t_start = std::chrono::steady_clock::now();
  if (iter_idx == 1) calibrate_later();
  report.t_to_s += seconds_since(t_start);

  t_start = std::chrono::steady_clock::now();
  report.eval_mean_cost =
      evaluate_policy(actor_, problem_, eval_starts_, cfg_.eval_with_to,
                      solver_options(cfg_.solver.eval_max_iter), cfg_.workers)
          .mean_cost;
  report.t_eval_s = seconds_since(t_start);

  ++next_iter_;
  return report;
}

TrainResult train(const TrainConfig& cfg, const IterationCallback& on_iteration) {
  Trainer trainer(cfg);
  TrainResult out;
  for (int j = 1; j <= cfg.iterations; ++j) {
    out.reports.push_back(trainer.run_iteration(j));
    if (on_iteration) on_iteration(trainer, out.reports.back());
  }
  out.actor = trainer.actor();
  out.critic = trainer.critic();
  out.std_critic = trainer.std_critic();
  return out;
}

std::vector<DiagnosticRow> toy1d_diagnostic(const TrainConfig& cfg,
                                            int grid_points) {
  if (cfg.model.kind != SystemKind::Toy1D) {
    throw std::invalid_argument("toy1d_diagnostic requires the Toy1D model");
  }
  if (grid_points < 2) throw std::invalid_argument("grid needs >= 2 points");
  Trainer trainer(cfg);
  const double lo = cfg.model.workspace.lo[0];
  const double hi = cfg.model.workspace.hi[0];
  std::vector<TimeState> grid;
  grid.reserve(grid_points);
  for (int i = 0; i < grid_points; ++i) {
    grid.push_back({VectorXd::Constant(
                        1, lo + (hi - lo) * i / static_cast<double>(grid_points - 1)),
                    0});
  }
  std::vector<std::vector<VectorXd>> warm;
  for (const TimeState& s : grid) warm.push_back(naive_warmstart(trainer.problem(), s));
  auto batch = solve_batch(trainer.problem(), grid, warm,
                           trainer.solver_options(cfg.solver.eval_max_iter),
                           cfg.workers);

  trainer.run_iteration(1);

  MatrixXd inputs(2, grid_points);
  for (int i = 0; i < grid_points; ++i) inputs.col(i) = augment(grid[i]);
  const MatrixXd v = mlp_forward_batch(trainer.critic(), inputs);
  const MatrixXd sd = mlp_forward_batch(trainer.std_critic(), inputs);

  std::vector<DiagnosticRow> rows(grid_points);
  for (int i = 0; i < grid_points; ++i) {
    if (!batch[i].result) throw std::runtime_error(batch[i].error);
    rows[i].x0 = grid[i].x[0];
    rows[i].v_bar = batch[i].result->cost;
    rows[i].v_critic = v(0, i);
    rows[i].v_std = sd(0, i);
    rows[i].final_state = batch[i].result->traj.X.back()[0];
  }
  return rows;
}

}  // namespace cacto
