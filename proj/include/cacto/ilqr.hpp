#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cacto/envs.hpp"
#include "cacto/problem.hpp"
#include "cacto/sample.hpp"

namespace cacto {

struct Trajectory {
  int t0 = 0;
  std::vector<VectorXd> X;          // T + 1 states
  std::vector<VectorXd> U;          // T controls
  std::vector<double> step_costs;   // T running costs, then the terminal cost

  int horizon() const { return static_cast<int>(U.size()); }
  TimeState state(int k) const { return {X[k], t0 + k}; }
  // Summed from the terminal cost backwards, matching SolveResult::V_bar[0].
  double total_cost() const;
};

// Rolls U out from x0 (controls clamped to the problem's box).
Trajectory rollout(const OptimalControlProblem& problem, const TimeState& x0,
                   const std::vector<VectorXd>& U);

struct RegularizerConfig {
  double eps = 1e-6;
};

// Eigenvalue floor: Q_psd = sym(W diag(max(S, eps)) W^T) for Q = W diag(S) W^T.
MatrixXd regularize_psd(const MatrixXd& q, double eps);

struct Gains {
  VectorXd k;  // feedforward, m
  MatrixXd K;  // feedback, m x n
};

// Local model of one step, stored so value gradients can be re-propagated.
struct StepExpansion {
  MatrixXd f_x, f_u;
  VectorXd l_x, l_u;
};

struct BackwardPassResult {
  std::vector<Gains> gains;         // T
  std::vector<VectorXd> V_x;        // T + 1
  std::vector<MatrixXd> V_xx;       // T + 1
  std::vector<StepExpansion> expansion;  // T
  double expected_decrease = 0.0;
};

// Gauss-Newton DDP recursion. Controls resting on their bound whose gradient
// pushes further out are held fixed (zero gain rows).
BackwardPassResult backward_pass(const OptimalControlProblem& problem,
                                 const Trajectory& traj,
                                 const RegularizerConfig& reg);

Trajectory forward_rollout(const OptimalControlProblem& problem,
                           const Trajectory& nominal,
                           const std::vector<Gains>& gains, double alpha);

struct SolverOptions {
  int max_iter = 100;
  RegularizerConfig reg;
  double tol = 1e-6;
  std::string trace_path;  // per-iteration CSV when non-empty
};

struct SolveResult {
  Trajectory traj;
  double cost = 0.0;
  std::vector<double> V_bar;     // cost-to-go, T + 1
  std::vector<VectorXd> V_bar_x; // value gradient, T + 1
  int iters_used = 0;
  bool converged = false;
  std::vector<Gains> gains;
  std::vector<StepExpansion> expansion;
};

SolveResult solve(const OptimalControlProblem& problem, const TimeState& x0,
                  const std::vector<VectorXd>& U_init,
                  const SolverOptions& options);

struct BatchEntry {
  std::optional<SolveResult> result;
  std::string error;  // set when the solve threw
};

// Solves problems independently on `workers` threads (0 = hardware
// concurrency); entry i always corresponds to starts[i].
std::vector<BatchEntry> solve_batch(
    const OptimalControlProblem& problem, const std::vector<TimeState>& starts,
    const std::vector<std::vector<VectorXd>>& warmstarts,
    const SolverOptions& options, int workers = 0);

// Zero controls over the remaining horizon of a start.
std::vector<VectorXd> naive_warmstart(const OptimalControlProblem& problem,
                                      const TimeState& x0);

// (V, dV/dx) of a learned value function at an augmented state.
using CriticEval = std::function<std::pair<double, VectorXd>(const TimeState&)>;

// One sample per trajectory node, terminal node included.
std::vector<TOSample> kstep_targets(const SolveResult& result, int K,
                                    const CriticEval& critic_eval = {});

// Nearest-rank percentile: ceil(p/100 * count)-th smallest value.
int nearest_rank_percentile(std::vector<int> counts, double percentile);

using WarmstartSource =
    std::function<std::vector<VectorXd>(const TimeState& x0)>;

struct Calibration {
  int max_iter = 0;
  std::vector<int> counts;  // per probe, non-converged clamped to cap
};

Calibration calibrate_max_iter(const OptimalControlProblem& problem,
                               const std::vector<TimeState>& probes, int cap,
                               double percentile,
                               const WarmstartSource& warmstart,
                               const SolverOptions& options, int workers = 0);

}  // namespace cacto
