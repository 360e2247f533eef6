#include "cacto/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace cacto {
namespace {

struct Entry {
  std::string section;
  std::string key;
  std::string value;
  int line = 0;
  bool used = false;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

class Parser {
 public:
  Parser(std::string origin, std::vector<Entry> entries)
      : origin_(std::move(origin)), entries_(std::move(entries)) {}

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ConfigError(origin_ + ":" + std::to_string(line) + ": " + msg);
  }

  Entry* find(const std::string& section, const std::string& key) {
    Entry* hit = nullptr;
    for (Entry& e : entries_) {
      if (e.section == section && e.key == key) {
        if (hit != nullptr) fail(e.line, "duplicate key '" + key + "'");
        hit = &e;
      }
    }
    if (hit) hit->used = true;
    return hit;
  }

  std::vector<Entry*> find_all(const std::string& section, const std::string& key) {
    std::vector<Entry*> out;
    for (Entry& e : entries_) {
      if (e.section == section && e.key == key) {
        e.used = true;
        out.push_back(&e);
      }
    }
    return out;
  }

  std::vector<double> numbers(const Entry& e) const {
    std::vector<double> out;
    std::istringstream is(e.value);
    std::string tok;
    while (is >> tok) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        fail(e.line, "'" + e.key + "': '" + tok + "' is not a number");
      }
      out.push_back(v);
    }
    if (out.empty()) fail(e.line, "'" + e.key + "' needs a value");
    return out;
  }

  void get(const std::string& s, const std::string& k, double& out) {
    if (Entry* e = find(s, k)) {
      const auto v = numbers(*e);
      if (v.size() != 1) fail(e->line, "'" + k + "' takes one number");
      out = v[0];
    }
  }

  template <typename Int>
  void get_int(const std::string& s, const std::string& k, Int& out) {
    if (Entry* e = find(s, k)) {
      Int v{};
      const auto& str = e->value;
      const auto [ptr, ec] = std::from_chars(str.data(), str.data() + str.size(), v);
      if (ec != std::errc() || ptr != str.data() + str.size()) {
        fail(e->line, "'" + k + "' must be an integer, got '" + str + "'");
      }
      out = v;
    }
  }

  void get_bool(const std::string& s, const std::string& k, bool& out) {
    if (Entry* e = find(s, k)) {
      if (e->value == "true" || e->value == "on" || e->value == "1") {
        out = true;
      } else if (e->value == "false" || e->value == "off" || e->value == "0") {
        out = false;
      } else {
        fail(e->line, "'" + k + "' must be true or false");
      }
    }
  }

  void get_vec(const std::string& s, const std::string& k, VectorXd& out, int dim) {
    if (Entry* e = find(s, k)) {
      const auto v = numbers(*e);
      if (static_cast<int>(v.size()) != dim) {
        fail(e->line, "'" + k + "' needs " + std::to_string(dim) + " numbers, got " +
                          std::to_string(v.size()));
      }
      out = Eigen::Map<const VectorXd>(v.data(), dim);
    }
  }

  void get_vec3(const std::string& s, const std::string& k, Eigen::Vector3d& out) {
    VectorXd v = out;
    get_vec(s, k, v, 3);
    out = v;
  }

  void check_unused() const {
    for (const Entry& e : entries_) {
      if (!e.used) fail(e.line, "unknown key '" + e.key + "' in [" + e.section + "]");
    }
  }

  // Applies `fn`, turning validation failures into errors on `line`.
  template <typename Fn>
  void checked(int line, Fn&& fn) const {
    try {
      fn();
    } catch (const std::invalid_argument& ex) {
      fail(line, ex.what());
    }
  }

 private:
  std::string origin_;
  std::vector<Entry> entries_;
};

const char* const kSections[] = {"model", "cost", "solver", "nets", "trainer", "cli"};

}  // namespace

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  std::vector<Entry> entries;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  int system_line = 1;
  auto fail = [&](int line, const std::string& msg) {
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      bool known = false;
      for (const char* s : kSections) known = known || section == s;
      if (!known) fail(line_no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
    if (section.empty()) fail(line_no, "key outside of any section");
    Entry e{section, trim(std::string_view(line).substr(0, eq)),
            trim(std::string_view(line).substr(eq + 1)), line_no};
    if (e.key.empty()) fail(line_no, "empty key");
    if (section == "model" && e.key == "system") system_line = line_no;
    entries.push_back(std::move(e));
  }

  Parser p(origin, std::move(entries));
  RunConfig out;
  out.text = text;
  out.hash = fnv1a(text);
  TrainConfig& cfg = out.train;

  Entry* sys = p.find("model", "system");
  if (sys == nullptr) fail(system_line, "[model] system is required");
  p.checked(sys->line, [&] { cfg.model = default_model_spec(system_from_string(sys->value)); });
  ModelSpec& model = cfg.model;

  p.get("model", "dt", model.dt);
  p.get_int("model", "horizon", model.horizon);
  p.get_vec("model", "u_max", model.u_max, model.m);
  p.get_vec("model", "workspace_lo", model.workspace.lo, model.n);
  p.get_vec("model", "workspace_hi", model.workspace.hi, model.n);
  model.hard_region = model.workspace;
  p.get_vec("model", "hard_lo", model.hard_region.lo, model.n);
  p.get_vec("model", "hard_hi", model.hard_region.hi, model.n);
  p.get_bool("model", "randomize_initial_time", model.randomize_initial_time);
  p.get_vec3("model", "link_lengths", model.arm.link_lengths);
  p.get_vec3("model", "link_masses", model.arm.link_masses);

  CostField& field = cfg.field;
  {
    VectorXd target = field.target;
    p.get_vec("cost", "target", target, 2);
    field.target = target;
  }
  for (Entry* e : p.find_all("cost", "obstacle")) {
    const auto v = p.numbers(*e);
    if (v.size() != 5) p.fail(e->line, "obstacle takes 'cx cy a b angle'");
    Ellipse el;
    el.center = {v[0], v[1]};
    el.semi_axes = {v[2], v[3]};
    el.angle = v[4];
    field.obstacles.push_back(el);
  }
  p.get("cost", "obstacle_weight", field.obstacle_weight);
  p.get("cost", "obstacle_sharpness", field.obstacle_sharpness);
  p.get("cost", "target_reward_weight", field.target_reward_weight);
  p.get("cost", "target_reward_radius", field.target_reward_radius);
  p.get("cost", "control_weight", field.control_weight);
  p.get("cost", "distance_weight", field.distance_weight);
  p.get("cost", "well_height", field.well.height);
  p.get("cost", "well_width", field.well.width);
  p.get("cost", "well_tilt", field.well.tilt);

  SolverConfig& solver = cfg.solver;
  p.get("solver", "reg_eps", solver.reg_eps);
  p.get("solver", "tol", solver.tol);
  p.get_int("solver", "calibration_cap", solver.calibration_cap);
  p.get_int("solver", "calibration_probes", solver.calibration_probes);
  p.get("solver", "p_first", solver.p_first);
  p.get("solver", "p_later", solver.p_later);
  p.get_int("solver", "max_iter_first", solver.max_iter_first);
  p.get_int("solver", "max_iter_later", solver.max_iter_later);
  p.get_int("solver", "eval_max_iter", solver.eval_max_iter);

  NetsConfig& nets = cfg.nets;
  if (Entry* e = p.find("nets", "hidden")) {
    nets.hidden.clear();
    for (double v : p.numbers(*e)) {
      if (v < 1 || v != static_cast<int>(v)) p.fail(e->line, "hidden widths must be positive integers");
      nets.hidden.push_back(static_cast<int>(v));
    }
  }
  if (Entry* e = p.find("nets", "activation")) {
    if (e->value == "silu") {
      nets.activation = Activation::Silu;
    } else if (e->value == "tanh") {
      nets.activation = Activation::Tanh;
    } else {
      p.fail(e->line, "activation must be silu or tanh");
    }
  }
  p.get("nets", "lr_actor", nets.lr_actor);
  p.get("nets", "lr_critic", nets.lr_critic);
  p.get("nets", "lr_std", nets.lr_std);
  p.get("nets", "k_s", nets.k_s);
  p.get("nets", "sigma_min", nets.sigma_min);
  p.get_int("nets", "minibatch", nets.minibatch);
  p.get_bool("nets", "bootstrap", nets.bootstrap);
  p.get("nets", "polyak_tau", nets.polyak_tau);
  p.get_int("nets", "buffer_capacity", nets.buffer_capacity);

  p.get_int("trainer", "N", cfg.N);
  p.get("trainer", "episode_fraction", cfg.episode_fraction);
  p.get_int("trainer", "candidate_multiplier", cfg.candidate_multiplier);
  p.get_int("trainer", "M", cfg.M);
  p.get_int("trainer", "K", cfg.K);
  p.get_int("trainer", "iterations", cfg.iterations);
  p.get_bool("trainer", "bic", cfg.bic);
  p.get_int("trainer", "eval_count", cfg.eval_count);
  p.get_bool("trainer", "eval_with_to", cfg.eval_with_to);
  p.get_int("trainer", "seed", cfg.seed);

  p.get_int("cli", "workers", cfg.workers);

  p.check_unused();
  p.checked(sys->line, [&] { validate(cfg); });
  return out;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ":0: cannot read config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace cacto
