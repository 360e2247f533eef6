#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cacto/envs.hpp"
#include "cacto/ilqr.hpp"
#include "cacto/sample.hpp"

namespace cacto {

enum class Activation { Silu, Tanh };

// Output nonlinearity applied after the last affine layer.
//   Linear:        y = output_scale * z
//   ScaledTanh:    y = output_bound .* tanh(z)
//   SoftplusFloor: y = output_floor + output_scale * softplus(z)
enum class OutputHead { Linear, ScaledTanh, SoftplusFloor };

struct Layer {
  MatrixXd W;
  VectorXd b;
};

struct MlpParams {
  std::vector<Layer> layers;
  Activation activation = Activation::Silu;
  OutputHead head = OutputHead::Linear;
  VectorXd input_shift;  // network sees (input - shift) ./ scale
  VectorXd input_scale;
  double output_scale = 1.0;
  double output_floor = 0.0;
  VectorXd output_bound;

  int input_dim() const { return static_cast<int>(layers.front().W.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().W.rows()); }
};

// Gradients share the layer layout of the parameters.
using ParamGrads = std::vector<Layer>;

struct MlpInit {
  int input_dim = 1;
  std::vector<int> hidden{64, 64, 64};
  int output_dim = 1;
  Activation activation = Activation::Silu;
  OutputHead head = OutputHead::Linear;
  bool zero_last_layer = false;
  std::uint64_t seed = 0;
};

// Glorot-uniform weights, zero biases, identity normalization.
MlpParams make_mlp(const MlpInit& init);

void validate(const MlpParams& params);

VectorXd mlp_forward(const MlpParams& params, const VectorXd& input);
// Column-wise batch: inputs is input_dim x B, result output_dim x B.
MatrixXd mlp_forward_batch(const MlpParams& params, const MatrixXd& inputs);

// d output / d input (output_dim x input_dim), normalization included.
MatrixXd mlp_input_gradient(const MlpParams& params, const VectorXd& input);

// Scalar-output nets only: values (1 x B) and input gradients (in x B).
void mlp_value_and_input_gradient(const MlpParams& params,
                                  const MatrixXd& inputs, VectorXd& values,
                                  MatrixXd& gradients);

// [x; t] as fed to the networks.
VectorXd augment(const TimeState& s);

struct LossAndGrad {
  double loss = 0.0;
  ParamGrads grads;
  int skipped = 0;  // samples ignored (actor: terminal-time states)
};

// Relative weights of the value and gradient residuals. Unit weights give the
// plain mean of (y - V)^2 + k_s * |y_x - S_x V_x|^2.
struct CriticLossScales {
  double value = 1.0;
  VectorXd gradient;  // per state component; empty = ones
};

// Target of a sample: V_bar plus, when bootstrapping and the K-step state is
// before the horizon, the target critic evaluated there.
double value_target(const TOSample& s, const MlpParams* target_critic,
                    bool bootstrap, int horizon);

LossAndGrad critic_loss(const MlpParams& critic, const MlpParams& target_critic,
                        std::span<const TOSample> batch, double k_s,
                        bool bootstrap, int horizon,
                        const CriticLossScales& scales = {});

// One-step Q minimization through the model: mean of l(x, mu(x)) + V(f(x, mu)).
LossAndGrad actor_loss(const MlpParams& actor, const MlpParams& critic,
                       const ModelProblem& problem,
                       std::span<const TimeState> batch);
// Same loss against an arbitrary value function.
LossAndGrad actor_loss(const MlpParams& actor, const CriticEval& critic,
                       const ModelProblem& problem,
                       std::span<const TimeState> batch);

// Gaussian negative log-likelihood of the critic residual; the residual is a
// constant w.r.t. the std-critic parameters.
LossAndGrad std_critic_loss(const MlpParams& std_critic,
                            const MlpParams& critic,
                            std::span<const TOSample> batch,
                            const MlpParams* target_critic = nullptr,
                            bool bootstrap = false, int horizon = 0);

struct AdamState {
  ParamGrads m;
  ParamGrads v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam(const MlpParams& params, double lr);

struct AdamUpdate {
  MlpParams params;
  AdamState state;
};

AdamUpdate adam_step(const MlpParams& params, const AdamState& state,
                     const ParamGrads& grads);

// target <- (1 - tau) * target + tau * source
MlpParams polyak_average(const MlpParams& target, const MlpParams& source,
                         double tau);

// Closed-loop rollout of the actor for T steps from x0.
Trajectory actor_rollout(const MlpParams& actor, const ModelProblem& problem,
                         const TimeState& x0, int T);

nlohmann::json to_json(const MlpParams& params);
MlpParams mlp_from_json(const nlohmann::json& j);

}  // namespace cacto
