#include "cacto/ilqr.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <thread>

#include <Eigen/Eigenvalues>

namespace cacto {
namespace {

VectorXd clamp_control(const VectorXd& u, const VectorXd& limit) {
  return u.cwiseMax(-limit).cwiseMin(limit);
}

void require_finite(const MatrixXd& m, const char* what, int k) {
  if (!m.allFinite()) {
    throw std::runtime_error(std::string("non-finite ") + what +
                             " in backward pass at step " + std::to_string(k));
  }
}

}  // namespace

double Trajectory::total_cost() const {
  double acc = 0.0;
  for (auto it = step_costs.rbegin(); it != step_costs.rend(); ++it) acc += *it;
  return acc;
}

Trajectory rollout(const OptimalControlProblem& problem, const TimeState& x0,
                   const std::vector<VectorXd>& U) {
  const int T = static_cast<int>(U.size());
  Trajectory traj;
  traj.t0 = x0.t;
  traj.X.reserve(T + 1);
  traj.U.reserve(T);
  traj.step_costs.reserve(T + 1);
  traj.X.push_back(x0.x);
  for (int k = 0; k < T; ++k) {
    VectorXd u = clamp_control(U[k], problem.control_limit());
    traj.step_costs.push_back(problem.running_cost(traj.X[k], u, x0.t + k));
    traj.X.push_back(problem.step(traj.X[k], u, x0.t + k));
    traj.U.push_back(std::move(u));
  }
  traj.step_costs.push_back(problem.terminal_cost(traj.X[T]));
  return traj;
}

MatrixXd regularize_psd(const MatrixXd& q, double eps) {
  if (q.rows() != q.cols()) {
    throw std::invalid_argument("regularize_psd expects a square matrix");
  }
  if (!q.allFinite()) {
    throw std::runtime_error("regularize_psd: non-finite input");
  }
  const MatrixXd sym = 0.5 * (q + q.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("regularize_psd: eigendecomposition failed");
  }
  const VectorXd clipped = eig.eigenvalues().cwiseMax(eps);
  const MatrixXd& w = eig.eigenvectors();
  const MatrixXd rebuilt = w * clipped.asDiagonal() * w.transpose();
  return 0.5 * (rebuilt + rebuilt.transpose());
}

BackwardPassResult backward_pass(const OptimalControlProblem& problem,
                                 const Trajectory& traj,
                                 const RegularizerConfig& reg) {
  const int T = traj.horizon();
  const int n = problem.state_dim();
  const int m = problem.control_dim();
  const VectorXd& limit = problem.control_limit();

  BackwardPassResult out;
  out.gains.resize(T);
  out.V_x.resize(T + 1);
  out.V_xx.resize(T + 1);
  out.expansion.resize(T);

  const CostDerivatives terminal = problem.terminal_cost_derivatives(traj.X[T]);
  out.V_x[T] = terminal.l_x;
  out.V_xx[T] = regularize_psd(terminal.l_xx, reg.eps);
  require_finite(out.V_x[T], "terminal gradient", T);

  double decrease = 0.0;
  for (int k = T - 1; k >= 0; --k) {
    const int t = traj.t0 + k;
    const VectorXd& x = traj.X[k];
    const VectorXd& u = traj.U[k];
    DynamicsJacobians jac = problem.linearize(x, u, t);
    CostDerivatives cost = problem.running_cost_derivatives(x, u, t);

    const VectorXd& vx = out.V_x[k + 1];
    const MatrixXd& vxx = out.V_xx[k + 1];
    const MatrixXd vxx_fx = vxx * jac.f_x;
    const MatrixXd vxx_fu = vxx * jac.f_u;

    const VectorXd q_x = cost.l_x + jac.f_x.transpose() * vx;
    const VectorXd q_u = cost.l_u + jac.f_u.transpose() * vx;
    const MatrixXd q_xx = cost.l_xx + jac.f_x.transpose() * vxx_fx;
    const MatrixXd q_uu = cost.l_uu + jac.f_u.transpose() * vxx_fu;
    const MatrixXd q_ux = cost.l_ux + jac.f_u.transpose() * vxx_fx;
    require_finite(q_x, "Q_x", k);
    require_finite(q_xx, "Q_xx", k);
    require_finite(q_uu, "Q_uu", k);
    require_finite(q_ux, "Q_ux", k);
    require_finite(q_u, "Q_u", k);

    const MatrixXd q_uu_reg = regularize_psd(q_uu, reg.eps);

    // free set: controls not pinned against their bound
    std::vector<int> free;
    free.reserve(m);
    for (int i = 0; i < m; ++i) {
      const bool at_upper = u[i] >= limit[i] * (1.0 - 1e-12) && q_u[i] < 0.0;
      const bool at_lower = u[i] <= -limit[i] * (1.0 - 1e-12) && q_u[i] > 0.0;
      if (!(at_upper || at_lower)) free.push_back(i);
    }

    Gains& g = out.gains[k];
    g.k = VectorXd::Zero(m);
    g.K = MatrixXd::Zero(m, n);
    const int nf = static_cast<int>(free.size());
    if (nf == m) {
      const Eigen::LLT<MatrixXd> llt(q_uu_reg);
      g.k = -llt.solve(q_u);
      g.K = -llt.solve(q_ux);
    } else if (nf > 0) {
      MatrixXd h(nf, nf);
      VectorXd gu(nf);
      MatrixXd gux(nf, n);
      for (int a = 0; a < nf; ++a) {
        gu[a] = q_u[free[a]];
        gux.row(a) = q_ux.row(free[a]);
        for (int b = 0; b < nf; ++b) h(a, b) = q_uu_reg(free[a], free[b]);
      }
      const Eigen::LLT<MatrixXd> llt(h);
      const VectorXd kf = -llt.solve(gu);
      const MatrixXd Kf = -llt.solve(gux);
      for (int a = 0; a < nf; ++a) {
        g.k[free[a]] = kf[a];
        g.K.row(free[a]) = Kf.row(a);
      }
    }
    require_finite(g.k, "feedforward gain", k);
    require_finite(g.K, "feedback gain", k);

    const VectorXd quu_k = q_uu * g.k;
    out.V_x[k] = q_x + g.K.transpose() * quu_k + g.K.transpose() * q_u +
                 q_ux.transpose() * g.k;
    MatrixXd v_xx = q_xx + g.K.transpose() * q_uu * g.K +
                    g.K.transpose() * q_ux + q_ux.transpose() * g.K;
    out.V_xx[k] = regularize_psd(v_xx, reg.eps);
    decrease -= g.k.dot(q_u) + 0.5 * g.k.dot(quu_k);

    out.expansion[k] = StepExpansion{std::move(jac.f_x), std::move(jac.f_u),
                                     std::move(cost.l_x), std::move(cost.l_u)};
  }
  out.expected_decrease = decrease;
  return out;
}

Trajectory forward_rollout(const OptimalControlProblem& problem,
                           const Trajectory& nominal,
                           const std::vector<Gains>& gains, double alpha) {
  const int T = nominal.horizon();
  if (static_cast<int>(gains.size()) != T) {
    throw std::invalid_argument("gains do not match the trajectory horizon");
  }
  Trajectory out;
  out.t0 = nominal.t0;
  out.X.reserve(T + 1);
  out.U.reserve(T);
  out.step_costs.reserve(T + 1);
  out.X.push_back(nominal.X[0]);
  for (int k = 0; k < T; ++k) {
    const int t = nominal.t0 + k;
    VectorXd u = nominal.U[k] + alpha * gains[k].k +
                 gains[k].K * (out.X[k] - nominal.X[k]);
    u = clamp_control(u, problem.control_limit());
    out.step_costs.push_back(problem.running_cost(out.X[k], u, t));
    out.X.push_back(problem.step(out.X[k], u, t));
    out.U.push_back(std::move(u));
  }
  out.step_costs.push_back(problem.terminal_cost(out.X[T]));
  return out;
}

SolveResult solve(const OptimalControlProblem& problem, const TimeState& x0,
                  const std::vector<VectorXd>& U_init,
                  const SolverOptions& options) {
  if (options.max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
  if (U_init.empty()) throw std::invalid_argument("empty control sequence");
  if (x0.t + static_cast<int>(U_init.size()) > problem.max_horizon()) {
    throw std::invalid_argument("warm start runs past the problem horizon");
  }

  std::ofstream trace;
  if (!options.trace_path.empty()) {
    trace.open(options.trace_path);
    trace << std::setprecision(17) << "iteration,cost,alpha\n";
  }

  Trajectory traj = rollout(problem, x0, U_init);
  double cost = traj.total_cost();
  if (!std::isfinite(cost)) {
    throw std::runtime_error("non-finite cost at the initial guess");
  }
  if (trace) trace << 0 << ',' << cost << ',' << 0.0 << '\n';

  SolveResult res;
  std::optional<BackwardPassResult> pass;  // valid for the current traj
  for (int it = 1; it <= options.max_iter; ++it) {
    res.iters_used = it;
    if (!pass) pass = backward_pass(problem, traj, options.reg);

    bool accepted = false;
    double alpha = 1.0;
    for (int ls = 0; ls <= 10; ++ls, alpha *= 0.5) {
      Trajectory cand = forward_rollout(problem, traj, pass->gains, alpha);
      const double cand_cost = cand.total_cost();
      if (!std::isfinite(cand_cost) || cand_cost >= cost) continue;
      // A candidate whose local model overflows (e.g. a diverging rollout
      // with bounded cost) is treated like a failed decrease.
      std::optional<BackwardPassResult> next;
      try {
        next = backward_pass(problem, cand, options.reg);
      } catch (const std::runtime_error&) {
        continue;
      }
      const double decrease = cost - cand_cost;
      const double scale = std::max(std::abs(cost), 1.0);
      traj = std::move(cand);
      cost = cand_cost;
      accepted = true;
      pass = std::move(next);
      res.converged = decrease < options.tol * scale;
      break;
    }
    if (trace) trace << it << ',' << cost << ',' << (accepted ? alpha : 0.0) << '\n';
    if (!accepted) res.converged = true;
    if (res.converged) break;
  }

  if (!pass) pass = backward_pass(problem, traj, options.reg);

  const int T = traj.horizon();
  res.V_bar.assign(T + 1, 0.0);
  res.V_bar[T] = traj.step_costs[T];
  for (int k = T - 1; k >= 0; --k) {
    res.V_bar[k] = traj.step_costs[k] + res.V_bar[k + 1];
  }
  res.cost = res.V_bar[0];
  res.V_bar_x = std::move(pass->V_x);
  res.gains = std::move(pass->gains);
  res.expansion = std::move(pass->expansion);
  res.traj = std::move(traj);
  return res;
}

std::vector<BatchEntry> solve_batch(
    const OptimalControlProblem& problem, const std::vector<TimeState>& starts,
    const std::vector<std::vector<VectorXd>>& warmstarts,
    const SolverOptions& options, int workers) {
  if (starts.size() != warmstarts.size()) {
    throw std::invalid_argument("starts and warmstarts differ in length");
  }
  std::vector<BatchEntry> out(starts.size());
  if (workers <= 0) {
    workers = std::max(1u, std::thread::hardware_concurrency());
  }
  workers = std::min<int>(workers, static_cast<int>(starts.size()));

  SolverOptions batch_options = options;
  batch_options.trace_path.clear();

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < starts.size(); i = next++) {
      try {
        out[i].result = solve(problem, starts[i], warmstarts[i], batch_options);
      } catch (const std::exception& e) {
        out[i].error = "problem " + std::to_string(i) + ": " + e.what();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  return out;
}

std::vector<VectorXd> naive_warmstart(const OptimalControlProblem& problem,
                                      const TimeState& x0) {
  const int T = problem.max_horizon() - x0.t;
  return std::vector<VectorXd>(std::max(T, 0),
                               VectorXd::Zero(problem.control_dim()));
}

std::vector<TOSample> kstep_targets(const SolveResult& result, int K,
                                    const CriticEval& critic_eval) {
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  const Trajectory& traj = result.traj;
  const int T = traj.horizon();
  std::vector<TOSample> out;
  out.reserve(T + 1);
  for (int k = 0; k <= T; ++k) {
    const int kk = std::min(K, T - k);
    const int end = k + kk;
    TOSample s;
    s.state = traj.state(k);
    s.u = k < T ? traj.U[k] : VectorXd::Zero(traj.U.empty() ? 0 : traj.U[0].size());
    double acc = end == T ? traj.step_costs[T] : 0.0;
    for (int i = end - 1; i >= k; --i) acc += traj.step_costs[i];
    s.V_bar = acc;
    s.state_plus_K = traj.state(end);

    if (critic_eval && end < T) {
      VectorXd lambda = critic_eval(traj.state(end)).second;
      for (int i = end - 1; i >= k; --i) {
        const StepExpansion& e = result.expansion[i];
        const MatrixXd& gain = result.gains[i].K;
        const MatrixXd closed = e.f_x + e.f_u * gain;
        lambda = e.l_x + gain.transpose() * e.l_u + closed.transpose() * lambda;
      }
      s.V_bar_x = std::move(lambda);
    } else {
      s.V_bar_x = result.V_bar_x[k];
    }
    out.push_back(std::move(s));
  }
  return out;
}

int nearest_rank_percentile(std::vector<int> counts, double percentile) {
  if (counts.empty()) throw std::invalid_argument("no counts");
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw std::invalid_argument("percentile must lie in (0, 100]");
  }
  std::sort(counts.begin(), counts.end());
  const double n = static_cast<double>(counts.size());
  // guard against p/100*n landing a hair above an integer
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, counts.size());
  return counts[rank - 1];
}

Calibration calibrate_max_iter(const OptimalControlProblem& problem,
                               const std::vector<TimeState>& probes, int cap,
                               double percentile,
                               const WarmstartSource& warmstart,
                               const SolverOptions& options, int workers) {
  if (probes.size() < 10) throw std::invalid_argument("need >= 10 probes");
  if (cap < 1) throw std::invalid_argument("cap must be >= 1");
  std::vector<std::vector<VectorXd>> warm;
  warm.reserve(probes.size());
  for (const TimeState& p : probes) warm.push_back(warmstart(p));
  SolverOptions probe_options = options;
  probe_options.max_iter = cap;
  const auto batch = solve_batch(problem, probes, warm, probe_options, workers);
  Calibration out;
  out.counts.reserve(batch.size());
  for (const BatchEntry& e : batch) {
    if (e.result && e.result->converged) {
      out.counts.push_back(e.result->iters_used);
    } else {
      out.counts.push_back(cap);
    }
  }
  out.max_iter = nearest_rank_percentile(out.counts, percentile);
  return out;
}

}  // namespace cacto
