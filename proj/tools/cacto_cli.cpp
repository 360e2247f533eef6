#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "cacto/buffer.hpp"
#include "cacto/checkpoint.hpp"
#include "cacto/config.hpp"
#include "cacto/trainer.hpp"

#ifndef CACTO_BUILD_ID
#define CACTO_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using namespace cacto;

namespace {

enum Exit { kOk = 0, kRuntime = 1, kConfig = 2, kCheckpoint = 3, kModel = 4 };

struct CliError : std::runtime_error {
  CliError(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

constexpr std::uint64_t kBenchStream = 7;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

RunConfig load(const Common& c) {
  RunConfig rc;
  try {
    rc = load_config(c.config_path);
  } catch (const ConfigError& e) {
    throw CliError(kConfig, e.what());
  }
  if (c.seed) rc.train.seed = *c.seed;
  if (c.workers) rc.train.workers = *c.workers;
  return rc;
}

void prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliError(kRuntime, "cannot create '" + dir + "': " + ec.message());
  if (fs::exists(fs::path(dir) / "manifest.json")) {
    throw CliError(kRuntime, "'" + dir + "' already holds a run, choose another --out");
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw CliError(kRuntime, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

nlohmann::json manifest(const std::string& command, const Common& c,
                        const RunConfig& rc) {
  const int workers = rc.train.workers > 0
                          ? rc.train.workers
                          : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return {{"command", command},
          {"config_path", c.config_path},
          {"config_hash", hex(rc.hash)},
          {"config_text", rc.text},
          {"build", CACTO_BUILD_ID},
          {"seeds", {rc.train.seed}},
          {"out", c.out},
          {"workers", workers}};
}

std::ofstream open_csv(const fs::path& path, const std::string& header) {
  std::ofstream out(path);
  if (!out) throw CliError(kRuntime, "cannot write '" + path.string() + "'");
  out << header << '\n';
  return out;
}

SolverOptions eval_options(const TrainConfig& cfg) {
  SolverOptions o;
  o.max_iter = cfg.solver.eval_max_iter;
  o.reg.eps = cfg.solver.reg_eps;
  o.tol = cfg.solver.tol;
  return o;
}

Region region_from_string(const std::string& s) {
  return s == "workspace" ? Region::Workspace : Region::HardRegion;
}

// train

struct TrainArgs {
  Common common;
  std::string variant;
  std::optional<int> iterations;
  bool no_timing = false;
  bool dump_buffer = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig rc = load(a.common);
  TrainConfig& cfg = rc.train;
  if (!a.variant.empty()) apply_variant(cfg, variant_from_string(a.variant));
  if (a.iterations) cfg.iterations = *a.iterations;
  try {
    validate(cfg);
  } catch (const std::exception& e) {
    throw CliError(kConfig, a.common.config_path + ":0: " + e.what());
  }

  const fs::path dir = a.common.out;
  prepare_out_dir(dir);
  nlohmann::json m = manifest("train", a.common, rc);
  m["variant"] = a.variant.empty() ? (cfg.bic ? "bic" : "custom") : a.variant;
  m["bic"] = cfg.bic;
  m["episode_fraction"] = cfg.episode_fraction;
  m["iterations"] = cfg.iterations;
  m["region"] = "hard";
  write_json(dir / "manifest.json", m);

  std::ofstream reports = open_csv(
      dir / "reports.csv",
      "iter,episodes_cum,eval_mean_cost,to_mean_cost,converged_frac,critic_loss,std_loss,t_to_s,t_nets_s");

  const auto t_start = std::chrono::steady_clock::now();
  double t_to = 0.0, t_nets = 0.0, t_eval = 0.0;
  Trainer trainer(cfg);
  const std::string model_name(to_string(cfg.model.kind));
  auto save = [&](int iter) {
    Checkpoint ck;
    ck.model = model_name;
    ck.n = cfg.model.n;
    ck.m = cfg.model.m;
    ck.config_hash = rc.hash;
    ck.iter = iter;
    ck.episodes = trainer.episodes();
    ck.actor = trainer.actor();
    ck.critic = trainer.critic();
    ck.std_critic = trainer.std_critic();
    char name[32];
    std::snprintf(name, sizeof(name), "ckpt_%03d.json", iter);
    write_checkpoint(ck, (dir / name).string());
  };
  save(0);

  for (int j = 1; j <= cfg.iterations; ++j) {
    const IterationReport r = trainer.run_iteration(j);
    t_to += r.t_to_s;
    t_nets += r.t_nets_s;
    t_eval += r.t_eval_s;
    const double tt = a.no_timing ? 0.0 : r.t_to_s;
    const double tn = a.no_timing ? 0.0 : r.t_nets_s;
    reports << r.iter << ',' << r.episodes_cum << ',' << num(r.eval_mean_cost) << ','
            << num(r.to_mean_cost) << ',' << num(r.converged_frac) << ','
            << num(r.critic_loss) << ',' << num(r.std_loss) << ',' << num(tt) << ','
            << num(tn) << std::endl;
    save(j);
    std::cerr << "iter " << j << " episodes " << r.episodes_cum << " eval "
              << num(r.eval_mean_cost) << '\n';
  }

  if (a.dump_buffer) {
    dump_buffer(trainer.buffer(), (dir / "buffer.bin").string(), model_name,
                cfg.model.n, cfg.model.m, cfg.K);
  }
  const double total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  write_json(dir / "timing.json", {{"to_s", t_to},
                                   {"nets_s", t_nets},
                                   {"eval_s", t_eval},
                                   {"total_s", total},
                                   {"max_iter_first", trainer.max_iter_first()},
                                   {"max_iter_later", trainer.max_iter_later()}});
  return kOk;
}

// eval

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string region = "hard";
  bool with_to = false;
};

int cmd_eval(EvalArgs a) {
  const RunConfig rc = load(a.common);
  const TrainConfig& cfg = rc.train;
  Checkpoint ck;
  try {
    ck = read_checkpoint(a.checkpoint);
    check_compatible(ck, cfg.model);
  } catch (const CheckpointError& e) {
    throw CliError(kCheckpoint, a.checkpoint + ": " + e.what());
  }

  if (a.common.out.empty()) {
    a.common.out = (fs::path(a.checkpoint).parent_path() /
                    ("eval_" + fs::path(a.checkpoint).stem().string() + "_" + a.region +
                     (a.with_to ? "_to" : "")))
                       .string();
  }
  const fs::path dir = a.common.out;
  prepare_out_dir(dir);
  nlohmann::json m = manifest("eval", a.common, rc);
  m["checkpoint"] = a.checkpoint;
  m["checkpoint_iter"] = ck.iter;
  m["region"] = a.region;
  m["with_to"] = a.with_to;
  write_json(dir / "manifest.json", m);

  const std::vector<TimeState> starts = evaluation_starts(cfg, region_from_string(a.region));
  const ModelProblem problem(cfg.model, cfg.field);
  const EvalResult res = evaluate_policy(ck.actor, problem, starts, a.with_to,
                                         eval_options(cfg), cfg.workers);

  std::string header = "index";
  for (int i = 0; i < cfg.model.n; ++i) header += ",x0_" + std::to_string(i);
  header += ",cost,reached";
  std::ofstream csv = open_csv(dir / "eval.csv", header);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    csv << i;
    for (int k = 0; k < cfg.model.n; ++k) csv << ',' << num(starts[i].x[k]);
    csv << ',' << num(res.costs[i]) << ','
        << (reaches_target(cfg.model, cfg.field, res.trajectories[i]) ? 1 : 0) << '\n';
  }
  std::cout << "mean_cost " << num(res.mean_cost) << '\n';
  return kOk;
}

// demo1d

struct DemoArgs {
  Common common;
  int grid = 400;
};

int cmd_demo1d(const DemoArgs& a) {
  const RunConfig rc = load(a.common);
  const TrainConfig& cfg = rc.train;
  if (cfg.model.kind != SystemKind::Toy1D) {
    throw CliError(kModel, a.common.config_path + ": demo1d needs system = toy1d, got " +
                               std::string(to_string(cfg.model.kind)));
  }
  const fs::path dir = a.common.out;
  prepare_out_dir(dir);
  nlohmann::json m = manifest("demo1d", a.common, rc);
  m["grid"] = a.grid;
  write_json(dir / "manifest.json", m);

  const std::vector<DiagnosticRow> rows = toy1d_diagnostic(cfg, a.grid);
  std::ofstream diag = open_csv(dir / "diagnostic.csv", "x0,v_bar,v_critic,v_std,final_state");
  std::ofstream curve = open_csv(dir / "cost_curve.csv", "x,cost");
  std::size_t jump = 0, peak = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const DiagnosticRow& r = rows[i];
    diag << num(r.x0) << ',' << num(r.v_bar) << ',' << num(r.v_critic) << ','
         << num(r.v_std) << ',' << num(r.final_state) << '\n';
    curve << num(r.x0) << ',' << num(toy1d_cost(cfg.field.well, r.x0)) << '\n';
    if (i > 0 && std::abs(r.v_bar - rows[i - 1].v_bar) >
                     std::abs(rows[jump + 1].v_bar - rows[jump].v_bar)) {
      jump = i - 1;
    }
    if (r.v_std > rows[peak].v_std) peak = i;
  }
  std::cout << "value_jump_x " << num(0.5 * (rows[jump].x0 + rows[jump + 1].x0))
            << "\nstd_peak_x " << num(rows[peak].x0) << '\n';
  return kOk;
}

// bench

struct BenchArgs {
  Common common;
  std::vector<int> sizes{10, 50, 100, 250};
  int max_iter = 50;
};

bool same_result(const BatchEntry& a, const BatchEntry& b) {
  if (!a.result || !b.result) return !a.result && !b.result && a.error == b.error;
  if (a.result->cost != b.result->cost) return false;
  const auto& ua = a.result->traj.U;
  const auto& ub = b.result->traj.U;
  if (ua.size() != ub.size()) return false;
  for (std::size_t k = 0; k < ua.size(); ++k) {
    if (ua[k] != ub[k]) return false;
  }
  return true;
}

int cmd_bench(const BenchArgs& a) {
  const RunConfig rc = load(a.common);
  const TrainConfig& cfg = rc.train;
  for (int s : a.sizes) {
    if (s < 1) throw CliError(kRuntime, "batch sizes must be >= 1");
  }
  const fs::path dir = a.common.out;
  prepare_out_dir(dir);
  nlohmann::json m = manifest("bench", a.common, rc);
  m["batch_sizes"] = a.sizes;
  m["max_iter"] = a.max_iter;
  write_json(dir / "manifest.json", m);

  const int workers = m["workers"].get<int>();
  const int largest = *std::max_element(a.sizes.begin(), a.sizes.end());
  const ModelProblem problem(cfg.model, cfg.field);
  const std::vector<TimeState> all = sample_initial_states(
      cfg.model, largest, derive_seed(cfg.seed, kBenchStream), Region::Workspace);
  SolverOptions opts = eval_options(cfg);
  opts.max_iter = a.max_iter;

  std::ofstream csv =
      open_csv(dir / "bench.csv", "batch_size,workers,wall_s,per_problem_ms,identical");
  std::vector<BatchEntry> reference;  // first problems, 1 worker, smallest batch seen
  for (int size : a.sizes) {
    const std::vector<TimeState> starts(all.begin(), all.begin() + size);
    std::vector<std::vector<VectorXd>> warm;
    for (const TimeState& s : starts) warm.push_back(naive_warmstart(problem, s));
    std::vector<int> pools{1};
    if (workers > 1) pools.push_back(workers);
    for (int w : pools) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::vector<BatchEntry> out = solve_batch(problem, starts, warm, opts, w);
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (reference.empty()) reference = out;
      bool identical = true;
      for (std::size_t i = 0; i < std::min(reference.size(), out.size()); ++i) {
        identical = identical && same_result(reference[i], out[i]);
      }
      csv << size << ',' << w << ',' << num(wall) << ',' << num(1e3 * wall / size) << ','
          << (identical ? 1 : 0) << std::endl;
    }
  }
  return kOk;
}

void add_common(CLI::App* sub, Common& c, bool config_positional = true) {
  if (config_positional) sub->add_option("config", c.config_path, "config file")->required();
  sub->add_option("--seed", c.seed, "run seed, overrides CACTO_SEED and the config")
      ->envname("CACTO_SEED");
  sub->add_option("--workers", c.workers, "solver threads (0 = all cores)")
      ->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cacto: trajectory optimization guided actor-critic"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a policy and write reports");
  add_common(train, train_args.common);
  train->add_option("--out", train_args.common.out, "output directory")->required();
  train->add_option("--variant", train_args.variant, "bic, reduced or baseline")
      ->check(CLI::IsMember({"bic", "reduced", "baseline"}));
  train->add_option("--iterations", train_args.iterations)->check(CLI::NonNegativeNumber);
  train->add_flag("--no-timing", train_args.no_timing, "zero the timing columns of reports.csv");
  train->add_flag("--dump-buffer", train_args.dump_buffer, "write buffer.bin at the end");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("checkpoint", eval_args.checkpoint)->required();
  add_common(eval, eval_args.common);
  eval->add_option("--out", eval_args.common.out, "output directory");
  eval->add_option("--region", eval_args.region)->check(CLI::IsMember({"hard", "workspace"}));
  eval->add_flag("--with-to", eval_args.with_to, "refine each rollout with TO");

  DemoArgs demo_args;
  auto* demo = app.add_subcommand("demo1d", "value, critic and std-critic curves on toy1d");
  add_common(demo, demo_args.common);
  demo->add_option("--out", demo_args.common.out, "output directory")->required();
  demo->add_option("--grid", demo_args.grid)->check(CLI::Range(2, 1000000));

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "time solve_batch over batch sizes");
  add_common(bench, bench_args.common);
  bench->add_option("--out", bench_args.common.out, "output directory")->required();
  bench->add_option("--batch-sizes", bench_args.sizes)->delimiter(',');
  bench->add_option("--max-iter", bench_args.max_iter)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*eval) return cmd_eval(eval_args);
    if (*demo) return cmd_demo1d(demo_args);
    if (*bench) return cmd_bench(bench_args);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kRuntime;
}
