#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "cacto/problem.hpp"

namespace cacto {

// Physical state plus discrete time index.
struct TimeState {
  VectorXd x;
  int t = 0;
};

using Control = VectorXd;

enum class SystemKind { Toy1D, PointMass, DubinsCar, Manipulator3DoF };

std::string_view to_string(SystemKind kind);
SystemKind system_from_string(std::string_view name);

// Axis-aligned box; lo == hi pins a dimension.
struct Box {
  VectorXd lo;
  VectorXd hi;

  int dim() const { return static_cast<int>(lo.size()); }
  bool empty() const;
  VectorXd mid() const { return 0.5 * (lo + hi); }
  VectorXd half_width() const { return 0.5 * (hi - lo); }
};

// Planar arm made of uniform rods, joint torques as controls, no gravity.
struct ArmParams {
  Eigen::Vector3d link_lengths{2.5, 2.5, 2.5};
  Eigen::Vector3d link_masses{1.0, 1.0, 1.0};
};

struct ModelSpec {
  SystemKind kind = SystemKind::PointMass;
  int n = 4;
  int m = 2;
  double dt = 0.05;
  int horizon = 60;  // T_max
  VectorXd u_max;
  Box workspace;
  Box hard_region;
  bool randomize_initial_time = false;
  ArmParams arm;
};

// Dimension, step and horizon defaults for each system. Workspace and hard
// region are placeholders; shipped configs override them.
ModelSpec default_model_spec(SystemKind kind);

void validate(const ModelSpec& model);

struct Ellipse {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Eigen::Vector2d semi_axes = Eigen::Vector2d::Ones();
  double angle = 0.0;  // rad, rotation of the first semi-axis
};

// Double-well landscape of the 1D toy problem:
//   c(x) = height * ((x/width)^2 - 1)^2 + tilt * x/width
struct DoubleWell {
  double height = 1.0;
  double width = 1.0;
  double tilt = 0.3;
};

struct CostField {
  Eigen::Vector2d target{-7.0, 0.0};
  std::vector<Ellipse> obstacles;
  double obstacle_weight = 0.0;
  double obstacle_sharpness = 5.0;
  double target_reward_weight = 0.0;
  double target_reward_radius = 1.0;
  double control_weight = 0.0;
  double distance_weight = 0.0;
  DoubleWell well;  // Toy1D only
};

void validate(const ModelSpec& model, const CostField& field);

TimeState step(const ModelSpec& model, const TimeState& state,
               const Control& u);
DynamicsJacobians dynamics_jacobians(const ModelSpec& model,
                                     const TimeState& state, const Control& u);

// Task-space point the cost acts on: end-effector for the arm, (x, y) for the
// mobile systems. Not defined for Toy1D.
Eigen::Vector2d task_position(const ModelSpec& model, const VectorXd& x);

CostDerivatives running_cost(const ModelSpec& model, const CostField& field,
                             const TimeState& state, const Control& u);
CostDerivatives terminal_cost(const ModelSpec& model, const CostField& field,
                              const TimeState& state);

double toy1d_cost(const DoubleWell& well, double x);
double toy1d_cost_derivative(const DoubleWell& well, double x);
double toy1d_cost_second_derivative(const DoubleWell& well, double x);

enum class Region { Workspace, HardRegion };

std::vector<TimeState> sample_initial_states(const ModelSpec& model, int count,
                                             std::uint64_t rng_seed,
                                             Region region);

// Adapter exposing a benchmark system and its cost field to the solver.
class ModelProblem final : public OptimalControlProblem {
 public:
  ModelProblem(ModelSpec model, CostField field);

  const ModelSpec& model() const { return model_; }
  const CostField& field() const { return field_; }

  int state_dim() const override { return model_.n; }
  int control_dim() const override { return model_.m; }
  int max_horizon() const override { return model_.horizon; }
  const VectorXd& control_limit() const override { return model_.u_max; }

  VectorXd step(const VectorXd& x, const VectorXd& u, int t) const override;
  DynamicsJacobians linearize(const VectorXd& x, const VectorXd& u,
                              int t) const override;
  double running_cost(const VectorXd& x, const VectorXd& u,
                      int t) const override;
  double terminal_cost(const VectorXd& x) const override;
  CostDerivatives running_cost_derivatives(const VectorXd& x,
                                           const VectorXd& u,
                                           int t) const override;
  CostDerivatives terminal_cost_derivatives(const VectorXd& x) const override;

 private:
  ModelSpec model_;
  CostField field_;
};

}  // namespace cacto
