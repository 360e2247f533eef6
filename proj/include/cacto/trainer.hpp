#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cacto/buffer.hpp"
#include "cacto/envs.hpp"
#include "cacto/ilqr.hpp"
#include "cacto/nets.hpp"

namespace cacto {

struct SolverConfig {
  double reg_eps = 1e-6;
  double tol = 1e-6;
  int calibration_cap = 1000;
  int calibration_probes = 200;
  double p_first = 99.0;
  double p_later = 50.0;
  int max_iter_first = 0;  // > 0 skips calibration
  int max_iter_later = 0;
  int eval_max_iter = 1000;
};

struct NetsConfig {
  std::vector<int> hidden{64, 64, 64};
  Activation activation = Activation::Silu;
  double lr_actor = 1e-3;
  double lr_critic = 1e-3;
  double lr_std = 1e-3;
  double k_s = 1.0;
  double sigma_min = 1e-3;
  int minibatch = 128;
  bool bootstrap = true;
  double polyak_tau = 0.005;
  std::size_t buffer_capacity = std::size_t{1} << 20;
};

struct TrainConfig {
  ModelSpec model;
  CostField field;
  SolverConfig solver;
  NetsConfig nets;
  int N = 300;
  double episode_fraction = 0.25;
  int candidate_multiplier = 10;
  int M = 500;
  int K = 60;
  int iterations = 5;
  bool bic = true;
  int eval_count = 100;
  bool eval_with_to = true;
  std::uint64_t seed = 1;
  int workers = 0;

  // TO episodes per iteration after the first.
  int later_batch() const;
};

void validate(const TrainConfig& cfg);

enum class Variant { Bic, Reduced, Baseline };
Variant variant_from_string(std::string_view name);
std::string_view to_string(Variant v);
// bic: BIC on, 25% episodes; reduced: BIC off, 25%; baseline: BIC off, 100%.
void apply_variant(TrainConfig& cfg, Variant v);

struct IterationReport {
  int iter = 0;
  int episodes_cum = 0;
  double eval_mean_cost = 0.0;
  double to_mean_cost = 0.0;
  double to_median_cost = 0.0;
  double converged_frac = 0.0;
  double critic_loss = 0.0;
  double std_loss = 0.0;
  int max_iter = 0;
  double t_to_s = 0.0;
  double t_nets_s = 0.0;
  double t_eval_s = 0.0;
};

// Keeps the `keep` candidates with the largest predicted critic std,
// descending, ties resolved by candidate index.
std::vector<TimeState> select_initial_states_bic(
    const std::vector<TimeState>& candidates, const MlpParams& std_critic,
    int keep);

struct EvalResult {
  double mean_cost = 0.0;
  std::vector<double> costs;
  std::vector<Trajectory> trajectories;
};

EvalResult evaluate_policy(const MlpParams& actor, const ModelProblem& problem,
                           const std::vector<TimeState>& eval_starts,
                           bool use_to, const SolverOptions& to_options,
                           int workers = 0);

// True when the final task-space position lies within the reward radius.
bool reaches_target(const ModelSpec& model, const CostField& field,
                    const Trajectory& traj);

// Deterministic seed derivation for independent random streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                          std::uint64_t index = 0);

// Frozen evaluation set of a run: eval_count starts from `region`, seeded by
// the run seed.
std::vector<TimeState> evaluation_starts(const TrainConfig& cfg, Region region);

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  const TrainConfig& config() const { return cfg_; }
  const ModelProblem& problem() const { return problem_; }
  const MlpParams& actor() const { return actor_; }
  const MlpParams& critic() const { return critic_; }
  const MlpParams& std_critic() const { return std_critic_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const std::vector<TimeState>& eval_starts() const { return eval_starts_; }
  int episodes() const { return episodes_; }
  int max_iter_first() const { return max_iter_first_; }
  int max_iter_later() const { return max_iter_later_; }

  // One outer loop: TO batch, buffer, M actor-critic cycles, M std-critic
  // steps, evaluation. Iterations are numbered from 1 and must be run in order.
  IterationReport run_iteration(int iter_idx);

  // Warm start for a start state from the current actor.
  std::vector<VectorXd> actor_warmstart(const TimeState& x0) const;

  SolverOptions solver_options(int max_iter) const;

 private:
  void calibrate_first();
  void calibrate_later();
  void prepare_networks(std::span<const TOSample> samples);
  void update_networks(IterationReport& report);

  TrainConfig cfg_;
  ModelProblem problem_;
  MlpParams actor_, critic_, critic_target_, std_critic_;
  AdamState actor_opt_, critic_opt_, std_opt_;
  CriticLossScales scales_;
  ReplayBuffer buffer_;
  std::mt19937_64 batch_rng_;
  std::vector<TimeState> eval_starts_;
  int episodes_ = 0;
  int next_iter_ = 1;
  int max_iter_first_ = 0;
  int max_iter_later_ = 0;
};

struct TrainResult {
  MlpParams actor, critic, std_critic;
  std::vector<IterationReport> reports;
};

using IterationCallback =
    std::function<void(const Trainer&, const IterationReport&)>;

TrainResult train(const TrainConfig& cfg, const IterationCallback& on_iteration = {});

struct DiagnosticRow {
  double x0 = 0.0;
  double v_bar = 0.0;      // naive warm-start TO value
  double v_critic = 0.0;
  double v_std = 0.0;
  double final_state = 0.0;
};

// Dense grid over the Toy1D workspace; critic and std-critic after one
// training iteration.
std::vector<DiagnosticRow> toy1d_diagnostic(const TrainConfig& cfg,
                                            int grid_points = 400);

}  // namespace cacto
