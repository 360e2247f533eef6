#include "cacto/nets.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace cacto {
namespace {

// ----- activations ----- //

double act(Activation a, double z) {
  if (a == Activation::Tanh) return std::tanh(z);
  return z / (1.0 + std::exp(-z));
}

double act_d1(Activation a, double z) {
  if (a == Activation::Tanh) {
    const double t = std::tanh(z);
    return 1.0 - t * t;
  }
  const double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 + z * (1.0 - s));
}

double act_d2(Activation a, double z) {
  if (a == Activation::Tanh) {
    const double t = std::tanh(z);
    return -2.0 * t * (1.0 - t * t);
  }
  const double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 - s) * (2.0 + z * (1.0 - 2.0 * s));
}

double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

MatrixXd apply(const MatrixXd& z, double (*f)(Activation, double),
               Activation a) {
  return z.unaryExpr([f, a](double v) { return f(a, v); });
}

// ----- forward pass with cache ----- //

struct Cache {
  std::vector<MatrixXd> A;  // A[0] normalized input, A[l] hidden outputs
  std::vector<MatrixXd> Z;  // Z[l] pre-activations, l = 1..L (Z[0] unused)
};

MatrixXd normalize(const MlpParams& p, const MatrixXd& inputs) {
  if (inputs.rows() != p.input_dim()) {
    throw std::invalid_argument("input dimension " +
                                std::to_string(inputs.rows()) +
                                " does not match network input " +
                                std::to_string(p.input_dim()));
  }
  MatrixXd out = inputs;
  if (p.input_shift.size() == inputs.rows()) out.colwise() -= p.input_shift;
  if (p.input_scale.size() == inputs.rows()) {
    out.array().colwise() /= p.input_scale.array();
  }
  return out;
}

VectorXd inverse_scale(const MlpParams& p) {
  if (p.input_scale.size() == p.input_dim()) {
    return p.input_scale.cwiseInverse();
  }
  return VectorXd::Ones(p.input_dim());
}

Cache forward_cache(const MlpParams& p, const MatrixXd& inputs) {
  const int L = static_cast<int>(p.layers.size());
  Cache c;
  c.A.resize(L);
  c.Z.resize(L + 1);
  c.A[0] = normalize(p, inputs);
  for (int l = 1; l <= L; ++l) {
    const Layer& layer = p.layers[l - 1];
    c.Z[l] = layer.W * c.A[l - 1];
    c.Z[l].colwise() += layer.b;
    if (l < L) c.A[l] = apply(c.Z[l], act, p.activation);
  }
  return c;
}

MatrixXd head_value(const MlpParams& p, const MatrixXd& z) {
  switch (p.head) {
    case OutputHead::Linear:
      return p.output_scale * z;
    case OutputHead::ScaledTanh:
      return (z.array().tanh().colwise() * p.output_bound.array()).matrix();
    case OutputHead::SoftplusFloor:
      return (p.output_floor +
              p.output_scale * z.unaryExpr([](double v) { return softplus(v); })
                                   .array())
          .matrix();
  }
  return z;
}

MatrixXd head_slope(const MlpParams& p, const MatrixXd& z) {
  switch (p.head) {
    case OutputHead::Linear:
      return MatrixXd::Constant(z.rows(), z.cols(), p.output_scale);
    case OutputHead::ScaledTanh: {
      MatrixXd t = z.array().tanh();
      return ((1.0 - t.array().square()).colwise() * p.output_bound.array())
          .matrix();
    }
    case OutputHead::SoftplusFloor:
      return p.output_scale *
             z.unaryExpr([](double v) { return logistic(v); });
  }
  return MatrixXd::Ones(z.rows(), z.cols());
}

ParamGrads zero_grads(const MlpParams& p) {
  ParamGrads g(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    g[l].W = MatrixXd::Zero(p.layers[l].W.rows(), p.layers[l].W.cols());
    g[l].b = VectorXd::Zero(p.layers[l].b.size());
  }
  return g;
}

// Reverse pass for the objective sum(zbar_L .* Z_L) + sum(zdot_bar_L .* Zdot_L)
// where Zdot is the forward tangent of Z along `tangent` (normalized input
// coordinates). Pass an empty tangent for plain backprop.
ParamGrads backprop(const MlpParams& p, const Cache& c, MatrixXd zbar,
                    const MatrixXd& tangent, MatrixXd zdot_bar) {
  const int L = static_cast<int>(p.layers.size());
  const bool with_tangent = tangent.size() > 0;

  // forward tangents
  std::vector<MatrixXd> Adot(L);
  std::vector<MatrixXd> Zdot(L + 1);
  if (with_tangent) {
    Adot[0] = tangent;
    for (int l = 1; l <= L; ++l) {
      Zdot[l] = p.layers[l - 1].W * Adot[l - 1];
      if (l < L) {
        Adot[l] = apply(c.Z[l], act_d1, p.activation).cwiseProduct(Zdot[l]);
      }
    }
  }

  ParamGrads g = zero_grads(p);
  for (int l = L; l >= 1; --l) {
    const Layer& layer = p.layers[l - 1];
    g[l - 1].W.noalias() = zbar * c.A[l - 1].transpose();
    if (with_tangent) g[l - 1].W.noalias() += zdot_bar * Adot[l - 1].transpose();
    g[l - 1].b = zbar.rowwise().sum();
    if (l == 1) break;

    const MatrixXd abar = layer.W.transpose() * zbar;
    const MatrixXd d1 = apply(c.Z[l - 1], act_d1, p.activation);
    zbar = d1.cwiseProduct(abar);
    if (with_tangent) {
      const MatrixXd adot_bar = layer.W.transpose() * zdot_bar;
      const MatrixXd d2 = apply(c.Z[l - 1], act_d2, p.activation);
      zbar += d2.cwiseProduct(Zdot[l - 1]).cwiseProduct(adot_bar);
      zdot_bar = d1.cwiseProduct(adot_bar);
    }
  }
  return g;
}

// Input gradient of a scalar-output net, normalized coordinates, in x B.
MatrixXd input_gradient_normalized(const MlpParams& p, const Cache& c,
                                   const MatrixXd& slope) {
  const int L = static_cast<int>(p.layers.size());
  MatrixXd delta = slope;  // d out / d Z_L
  for (int l = L; l >= 1; --l) {
    MatrixXd back = p.layers[l - 1].W.transpose() * delta;
    if (l == 1) return back;
    delta = apply(c.Z[l - 1], act_d1, p.activation).cwiseProduct(back);
  }
  return delta;
}

MatrixXd augment_batch(std::span<const TimeState> states) {
  const int n = static_cast<int>(states.front().x.size());
  MatrixXd out(n + 1, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    out.col(i).head(n) = states[i].x;
    out(n, i) = states[i].t;
  }
  return out;
}

void check_batch(std::size_t size) {
  if (size == 0) throw std::invalid_argument("empty batch");
}

// Batched value function: values (B) and gradients w.r.t. x (n x B).
using BatchCritic = std::function<void(const MatrixXd& inputs, VectorXd& values,
                                       MatrixXd& state_grads)>;

LossAndGrad actor_loss_impl(const MlpParams& actor, const BatchCritic& critic,
                            const ModelProblem& problem,
                            std::span<const TimeState> batch) {
  check_batch(batch.size());
  const ModelSpec& model = problem.model();
  std::vector<TimeState> live;
  live.reserve(batch.size());
  for (const TimeState& s : batch) {
    if (s.t < model.horizon) live.push_back(s);
  }
  LossAndGrad out;
  out.skipped = static_cast<int>(batch.size() - live.size());
  if (live.empty()) {
    out.grads = zero_grads(actor);
    return out;
  }
  const int B = static_cast<int>(live.size());
  const MatrixXd inputs = augment_batch(live);
  const Cache c = forward_cache(actor, inputs);
  const int L = static_cast<int>(actor.layers.size());
  const MatrixXd controls = head_value(actor, c.Z[L]);

  std::vector<TimeState> next(B);
  std::vector<CostDerivatives> costs(B);
  std::vector<MatrixXd> f_u(B);
  for (int b = 0; b < B; ++b) {
    const VectorXd u = controls.col(b);
    costs[b] = running_cost(model, problem.field(), live[b], u);
    next[b] = step(model, live[b], u);
    f_u[b] = dynamics_jacobians(model, live[b], u).f_u;
  }
  VectorXd values;
  MatrixXd grads;
  critic(augment_batch(next), values, grads);

  MatrixXd dq_du(model.m, B);
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    total += costs[b].l + values[b];
    dq_du.col(b) = costs[b].l_u + f_u[b].transpose() * grads.col(b);
  }
  out.loss = total / B;
  const MatrixXd zbar = head_slope(actor, c.Z[L]).cwiseProduct(dq_du) / B;
  out.grads = backprop(actor, c, zbar, MatrixXd(), MatrixXd());
  return out;
}

}  // namespace

MlpParams make_mlp(const MlpInit& init) {
  if (init.input_dim < 1 || init.output_dim < 1) {
    throw std::invalid_argument("network dimensions must be positive");
  }
  std::mt19937_64 rng(init.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  MlpParams p;
  p.activation = init.activation;
  p.head = init.head;
  p.input_shift = VectorXd::Zero(init.input_dim);
  p.input_scale = VectorXd::Ones(init.input_dim);
  p.output_bound = VectorXd::Ones(init.output_dim);
  std::vector<int> dims{init.input_dim};
  dims.insert(dims.end(), init.hidden.begin(), init.hidden.end());
  dims.push_back(init.output_dim);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l];
    const int out = dims[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    Layer layer{MatrixXd(out, in), VectorXd::Zero(out)};
    for (int i = 0; i < out; ++i) {
      for (int j = 0; j < in; ++j) layer.W(i, j) = limit * unit(rng);
    }
    p.layers.push_back(std::move(layer));
  }
  if (init.zero_last_layer) p.layers.back().W.setZero();
  return p;
}

void validate(const MlpParams& params) {
  if (params.layers.empty()) throw std::invalid_argument("network has no layers");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const Layer& layer = params.layers[l];
    if (layer.b.size() != layer.W.rows()) {
      throw std::invalid_argument("bias/weight mismatch in layer " +
                                  std::to_string(l));
    }
    if (l > 0 && layer.W.cols() != params.layers[l - 1].W.rows()) {
      throw std::invalid_argument("layer " + std::to_string(l) +
                                  " does not chain with its predecessor");
    }
    if (!layer.W.allFinite() || !layer.b.allFinite()) {
      throw std::invalid_argument("non-finite parameters in layer " +
                                  std::to_string(l));
    }
  }
  if (params.head == OutputHead::ScaledTanh &&
      params.output_bound.size() != params.output_dim()) {
    throw std::invalid_argument("output bound does not match output dim");
  }
}

VectorXd mlp_forward(const MlpParams& params, const VectorXd& input) {
  return mlp_forward_batch(params, input);
}

MatrixXd mlp_forward_batch(const MlpParams& params, const MatrixXd& inputs) {
  const Cache c = forward_cache(params, inputs);
  return head_value(params, c.Z.back());
}

MatrixXd mlp_input_gradient(const MlpParams& params, const VectorXd& input) {
  const Cache c = forward_cache(params, input);
  const MatrixXd slope = head_slope(params, c.Z.back());
  const VectorXd inv = inverse_scale(params);
  MatrixXd jac(params.output_dim(), params.input_dim());
  for (int o = 0; o < params.output_dim(); ++o) {
    MatrixXd seed = MatrixXd::Zero(params.output_dim(), 1);
    seed(o, 0) = slope(o, 0);
    jac.row(o) = input_gradient_normalized(params, c, seed).col(0)
                     .cwiseProduct(inv)
                     .transpose();
  }
  return jac;
}

void mlp_value_and_input_gradient(const MlpParams& params,
                                  const MatrixXd& inputs, VectorXd& values,
                                  MatrixXd& gradients) {
  if (params.output_dim() != 1) {
    throw std::invalid_argument("value network must have a scalar output");
  }
  const Cache c = forward_cache(params, inputs);
  values = head_value(params, c.Z.back()).row(0).transpose();
  gradients = input_gradient_normalized(params, c, head_slope(params, c.Z.back()));
  gradients.array().colwise() *= inverse_scale(params).array();
}

VectorXd augment(const TimeState& s) {
  VectorXd out(s.x.size() + 1);
  out.head(s.x.size()) = s.x;
  out[s.x.size()] = s.t;
  return out;
}

double value_target(const TOSample& s, const MlpParams* target_critic,
                    bool bootstrap, int horizon) {
  double y = s.V_bar;
  if (bootstrap && target_critic != nullptr && s.state_plus_K.t < horizon) {
    y += mlp_forward(*target_critic, augment(s.state_plus_K))[0];
  }
  return y;
}

LossAndGrad critic_loss(const MlpParams& critic, const MlpParams& target_critic,
                        std::span<const TOSample> batch, double k_s,
                        bool bootstrap, int horizon,
                        const CriticLossScales& scales) {
  check_batch(batch.size());
  if (k_s < 0.0) throw std::invalid_argument("k_s must be >= 0");
  if (k_s > 0.0 && critic.head != OutputHead::Linear) {
    throw std::invalid_argument("gradient matching needs a linear critic head");
  }
  const int B = static_cast<int>(batch.size());
  const int n = static_cast<int>(batch.front().state.x.size());
  const VectorXd grad_w = scales.gradient.size() == n
                              ? scales.gradient
                              : VectorXd::Ones(n).eval();

  MatrixXd inputs(n + 1, B);
  VectorXd targets(B);
  std::vector<TimeState> ahead;
  std::vector<int> ahead_index;
  for (int b = 0; b < B; ++b) {
    inputs.col(b) = augment(batch[b].state);
    targets[b] = batch[b].V_bar;
    if (bootstrap && batch[b].state_plus_K.t < horizon) {
      ahead.push_back(batch[b].state_plus_K);
      ahead_index.push_back(b);
    }
  }
  if (!ahead.empty()) {
    const MatrixXd boot = mlp_forward_batch(target_critic, augment_batch(ahead));
    for (std::size_t i = 0; i < ahead.size(); ++i) {
      targets[ahead_index[i]] += boot(0, static_cast<Eigen::Index>(i));
    }
  }

  const Cache c = forward_cache(critic, inputs);
  const int L = static_cast<int>(critic.layers.size());
  const MatrixXd slope = head_slope(critic, c.Z[L]);
  const VectorXd values = head_value(critic, c.Z[L]).row(0).transpose();
  const VectorXd inv = inverse_scale(critic);
  MatrixXd grads = input_gradient_normalized(critic, c, slope);
  grads.array().colwise() *= inv.array();

  double total = 0.0;
  MatrixXd out_adj(1, B);
  MatrixXd tangent = MatrixXd::Zero(n + 1, B);
  for (int b = 0; b < B; ++b) {
    const double e = values[b] - targets[b];
    total += scales.value * e * e;
    out_adj(0, b) = 2.0 * scales.value * e / B;
    if (k_s > 0.0) {
      const VectorXd r = grads.col(b).head(n) - batch[b].V_bar_x;
      total += k_s * r.cwiseAbs2().dot(grad_w);
      // d loss / d (input gradient), mapped to normalized coordinates
      tangent.col(b).head(n) =
          (2.0 * k_s / B) * grad_w.cwiseProduct(r).cwiseProduct(inv.head(n));
    }
  }

  LossAndGrad out;
  out.loss = total / B;
  const MatrixXd zbar = slope.cwiseProduct(out_adj);
  if (k_s > 0.0) {
    out.grads = backprop(critic, c, zbar, tangent, slope);
  } else {
    out.grads = backprop(critic, c, zbar, MatrixXd(), MatrixXd());
  }
  return out;
}

LossAndGrad actor_loss(const MlpParams& actor, const MlpParams& critic,
                       const ModelProblem& problem,
                       std::span<const TimeState> batch) {
  const int n = problem.model().n;
  BatchCritic eval = [&critic, n](const MatrixXd& inputs, VectorXd& values,
                                  MatrixXd& state_grads) {
    MatrixXd full;
    mlp_value_and_input_gradient(critic, inputs, values, full);
    state_grads = full.topRows(n);
  };
  return actor_loss_impl(actor, eval, problem, batch);
}

LossAndGrad actor_loss(const MlpParams& actor, const CriticEval& critic,
                       const ModelProblem& problem,
                       std::span<const TimeState> batch) {
  const int n = problem.model().n;
  BatchCritic eval = [&critic, n](const MatrixXd& inputs, VectorXd& values,
                                  MatrixXd& state_grads) {
    values.resize(inputs.cols());
    state_grads.resize(n, inputs.cols());
    for (Eigen::Index b = 0; b < inputs.cols(); ++b) {
      const TimeState s{inputs.col(b).head(n),
                        static_cast<int>(std::lround(inputs(n, b)))};
      auto [v, g] = critic(s);
      values[b] = v;
      state_grads.col(b) = g;
    }
  };
  return actor_loss_impl(actor, eval, problem, batch);
}

LossAndGrad std_critic_loss(const MlpParams& std_critic,
                            const MlpParams& critic,
                            std::span<const TOSample> batch,
                            const MlpParams* target_critic, bool bootstrap,
                            int horizon) {
  check_batch(batch.size());
  if (std_critic.head != OutputHead::SoftplusFloor) {
    throw std::invalid_argument("std-critic needs the softplus-floor head");
  }
  const int B = static_cast<int>(batch.size());
  const int n = static_cast<int>(batch.front().state.x.size());
  MatrixXd inputs(n + 1, B);
  for (int b = 0; b < B; ++b) inputs.col(b) = augment(batch[b].state);
  const MatrixXd values = mlp_forward_batch(critic, inputs);

  const Cache c = forward_cache(std_critic, inputs);
  const int L = static_cast<int>(std_critic.layers.size());
  const MatrixXd sigma = head_value(std_critic, c.Z[L]);
  const MatrixXd slope = head_slope(std_critic, c.Z[L]);

  double total = 0.0;
  MatrixXd zbar(1, B);
  for (int b = 0; b < B; ++b) {
    const double y = value_target(batch[b], target_critic, bootstrap, horizon);
    const double e = y - values(0, b);
    const double s = sigma(0, b);
    total += std::log(s) + 0.5 * e * e / (s * s);
    zbar(0, b) = slope(0, b) * (1.0 / s - e * e / (s * s * s)) / B;
  }
  LossAndGrad out;
  out.loss = total / B;
  out.grads = backprop(std_critic, c, zbar, MatrixXd(), MatrixXd());
  return out;
}

AdamState make_adam(const MlpParams& params, double lr) {
  AdamState s;
  s.m = zero_grads(params);
  s.v = zero_grads(params);
  s.lr = lr;
  return s;
}

AdamUpdate adam_step(const MlpParams& params, const AdamState& state,
                     const ParamGrads& grads) {
  if (grads.size() != params.layers.size() ||
      state.m.size() != params.layers.size()) {
    throw std::invalid_argument("adam_step: layer count mismatch");
  }
  AdamUpdate out{params, state};
  out.state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, out.state.step);
  const double c2 = 1.0 - std::pow(state.beta2, out.state.step);
  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    if (g.size() != p.size() || g.rows() != p.rows()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    }
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseAbs2();
    p.array() -= state.lr * (m.array() / c1) /
                 ((v.array() / c2).sqrt() + state.eps);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(out.params.layers[l].W, out.state.m[l].W, out.state.v[l].W,
           grads[l].W);
    update(out.params.layers[l].b, out.state.m[l].b, out.state.v[l].b,
           grads[l].b);
  }
  return out;
}

MlpParams polyak_average(const MlpParams& target, const MlpParams& source,
                         double tau) {
  MlpParams out = target;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    out.layers[l].W = (1.0 - tau) * target.layers[l].W + tau * source.layers[l].W;
    out.layers[l].b = (1.0 - tau) * target.layers[l].b + tau * source.layers[l].b;
  }
  out.output_scale = source.output_scale;
  out.input_shift = source.input_shift;
  out.input_scale = source.input_scale;
  return out;
}

Trajectory actor_rollout(const MlpParams& actor, const ModelProblem& problem,
                         const TimeState& x0, int T) {
  if (x0.t + T > problem.max_horizon()) {
    throw std::invalid_argument("rollout runs past the horizon");
  }
  std::vector<VectorXd> U;
  U.reserve(T);
  VectorXd x = x0.x;
  for (int k = 0; k < T; ++k) {
    const VectorXd u = mlp_forward(actor, augment({x, x0.t + k}));
    x = problem.step(x, u, x0.t + k);
    U.push_back(u);
  }
  return rollout(problem, x0, U);
}

// ----- checkpoints ----- //

namespace {

std::string_view head_name(OutputHead h) {
  switch (h) {
    case OutputHead::Linear:
      return "linear";
    case OutputHead::ScaledTanh:
      return "scaled_tanh";
    case OutputHead::SoftplusFloor:
      return "softplus_floor";
  }
  return "linear";
}

OutputHead head_from_name(const std::string& s) {
  if (s == "linear") return OutputHead::Linear;
  if (s == "scaled_tanh") return OutputHead::ScaledTanh;
  if (s == "softplus_floor") return OutputHead::SoftplusFloor;
  throw std::invalid_argument("unknown output head '" + s + "'");
}

std::vector<double> to_vec(const VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json to_json(const MlpParams& params) {
  nlohmann::json j;
  j["activation"] = params.activation == Activation::Tanh ? "tanh" : "silu";
  j["head"] = head_name(params.head);
  j["input_shift"] = to_vec(params.input_shift);
  j["input_scale"] = to_vec(params.input_scale);
  j["output_scale"] = params.output_scale;
  j["output_floor"] = params.output_floor;
  j["output_bound"] = to_vec(params.output_bound);
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& layer : params.layers) {
    std::vector<double> w;
    w.reserve(layer.W.size());
    for (Eigen::Index r = 0; r < layer.W.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.W.cols(); ++c) w.push_back(layer.W(r, c));
    }
    layers.push_back({{"rows", layer.W.rows()},
                      {"cols", layer.W.cols()},
                      {"weights", w},
                      {"bias", to_vec(layer.b)}});
  }
  j["layers"] = layers;
  return j;
}

MlpParams mlp_from_json(const nlohmann::json& j) {
  MlpParams p;
  const std::string act_name = j.at("activation").get<std::string>();
  if (act_name == "tanh") {
    p.activation = Activation::Tanh;
  } else if (act_name == "silu") {
    p.activation = Activation::Silu;
  } else {
    throw std::invalid_argument("unknown activation '" + act_name + "'");
  }
  p.head = head_from_name(j.at("head").get<std::string>());
  p.input_shift = from_vec(j.at("input_shift").get<std::vector<double>>());
  p.input_scale = from_vec(j.at("input_scale").get<std::vector<double>>());
  p.output_scale = j.at("output_scale").get<double>();
  p.output_floor = j.at("output_floor").get<double>();
  p.output_bound = from_vec(j.at("output_bound").get<std::vector<double>>());
  for (const auto& lj : j.at("layers")) {
    const auto rows = lj.at("rows").get<Eigen::Index>();
    const auto cols = lj.at("cols").get<Eigen::Index>();
    const auto w = lj.at("weights").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols) {
      throw std::invalid_argument("weight array does not match layer shape");
    }
    Layer layer{MatrixXd(rows, cols), from_vec(lj.at("bias").get<std::vector<double>>())};
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) layer.W(r, c) = w[r * cols + c];
    }
    p.layers.push_back(std::move(layer));
  }
  validate(p);
  return p;
}

}  // namespace cacto
