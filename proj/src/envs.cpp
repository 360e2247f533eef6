#include "cacto/envs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include <unsupported/Eigen/AutoDiff>

namespace cacto {
namespace {

constexpr double kPi = 3.14159265358979323846;

void check_dims(const ModelSpec& model, const TimeState& state,
                const Control* u) {
  if (state.x.size() != model.n) {
    throw std::invalid_argument("state dimension " +
                                std::to_string(state.x.size()) +
                                " does not match model n=" +
                                std::to_string(model.n));
  }
  if (u != nullptr && u->size() != model.m) {
    throw std::invalid_argument("control dimension " +
                                std::to_string(u->size()) +
                                " does not match model m=" +
                                std::to_string(model.m));
  }
}

void check_time(const ModelSpec& model, int t) {
  if (t < 0 || t >= model.horizon) {
    throw std::out_of_range("time index " + std::to_string(t) +
                            " outside [0, " + std::to_string(model.horizon) +
                            ")");
  }
}

// ----- planar arm ----- //

template <typename S>
using Vec3 = Eigen::Matrix<S, 3, 1>;

// Joint accelerations of the three-link arm: M(q) qdd = tau - c(q, qd).
template <typename S>
Vec3<S> arm_acceleration(const ArmParams& arm, const Vec3<S>& q,
                         const Vec3<S>& qd, const Vec3<S>& tau) {
  using std::cos;
  using std::sin;
  S phi[3];
  S phid[3];
  phi[0] = q[0];
  phid[0] = qd[0];
  for (int j = 1; j < 3; ++j) {
    phi[j] = phi[j - 1] + q[j];
    phid[j] = phid[j - 1] + qd[j];
  }

  Eigen::Matrix<S, 3, 3> mass = Eigen::Matrix<S, 3, 3>::Zero();
  Vec3<S> bias = Vec3<S>::Zero();
  for (int i = 0; i < 3; ++i) {
    // lever arm of link j as seen from the center of link i
    auto lever = [&](int j) {
      return j < i ? arm.link_lengths[j] : 0.5 * arm.link_lengths[i];
    };
    Eigen::Matrix<S, 2, 3> jac = Eigen::Matrix<S, 2, 3>::Zero();
    Eigen::Matrix<S, 2, 1> jdot_qd = Eigen::Matrix<S, 2, 1>::Zero();
    for (int j = 0; j <= i; ++j) {
      const double l = lever(j);
      const S c = cos(phi[j]);
      const S s = sin(phi[j]);
      // column k collects every link j >= k
      for (int k = 0; k <= j; ++k) {
        jac(0, k) += -l * s;
        jac(1, k) += l * c;
      }
      jdot_qd(0) += -l * phid[j] * phid[j] * c;
      jdot_qd(1) += -l * phid[j] * phid[j] * s;
    }
    const double m = arm.link_masses[i];
    const double inertia = m * arm.link_lengths[i] * arm.link_lengths[i] / 12.0;
    mass += m * jac.transpose() * jac;
    for (int a = 0; a <= i; ++a) {
      for (int b = 0; b <= i; ++b) mass(a, b) += S(inertia);
    }
    bias += m * jac.transpose() * jdot_qd;
  }
  return mass.inverse() * (tau - bias);
}

using ArmDual = Eigen::AutoDiffScalar<Eigen::Matrix<double, 9, 1>>;

// ----- cost geometry ----- //

double softplus(double s) {
  return std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s)));
}

double logistic(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

// Shape matrix A with h(p) = (p - c)^T A (p - c); h < 1 inside the ellipse.
Eigen::Matrix2d ellipse_shape(const Ellipse& e) {
  const double c = std::cos(e.angle);
  const double s = std::sin(e.angle);
  Eigen::Matrix2d rot;
  rot << c, -s, s, c;
  const Eigen::Vector2d inv_sq = e.semi_axes.cwiseInverse().cwiseAbs2();
  return rot * inv_sq.asDiagonal() * rot.transpose();
}

struct TaskCost {
  double g = 0.0;
  Eigen::Vector2d grad = Eigen::Vector2d::Zero();
  Eigen::Matrix2d hess = Eigen::Matrix2d::Zero();
};

// Position-dependent part of the cost: tracking, obstacle barriers, reward.
TaskCost task_cost(const CostField& field, const Eigen::Vector2d& p) {
  TaskCost out;
  const Eigen::Vector2d d = p - field.target;
  const double dist_sq = d.squaredNorm();

  out.g += field.distance_weight * dist_sq;
  out.grad += 2.0 * field.distance_weight * d;
  out.hess += 2.0 * field.distance_weight * Eigen::Matrix2d::Identity();

  const double kappa = field.obstacle_sharpness;
  for (const Ellipse& e : field.obstacles) {
    const Eigen::Matrix2d shape = ellipse_shape(e);
    const Eigen::Vector2d rel = p - e.center;
    const double h = rel.dot(shape * rel);
    const Eigen::Vector2d dh = 2.0 * shape * rel;
    const double s = kappa * (1.0 - h);
    const double sig = logistic(s);
    out.g += field.obstacle_weight * softplus(s);
    out.grad += -field.obstacle_weight * sig * kappa * dh;
    out.hess += field.obstacle_weight *
                (sig * (1.0 - sig) * kappa * kappa * dh * dh.transpose() -
                 sig * kappa * 2.0 * shape);
  }

  if (field.target_reward_weight != 0.0) {
    const double r2 = field.target_reward_radius * field.target_reward_radius;
    const double bump = field.target_reward_weight * std::exp(-dist_sq / r2);
    out.g -= bump;
    out.grad += bump * 2.0 / r2 * d;
    out.hess += bump * (2.0 / r2 * Eigen::Matrix2d::Identity() -
                        4.0 / (r2 * r2) * d * d.transpose());
  }
  return out;
}

struct TaskMap {
  Eigen::Vector2d p;
  MatrixXd jac;                      // 2 x n
  std::array<MatrixXd, 2> hess;      // n x n per task coordinate
};

TaskMap task_map(const ModelSpec& model, const VectorXd& x) {
  TaskMap out;
  out.jac = MatrixXd::Zero(2, model.n);
  out.hess[0] = MatrixXd::Zero(model.n, model.n);
  out.hess[1] = MatrixXd::Zero(model.n, model.n);
  switch (model.kind) {
    case SystemKind::PointMass:
    case SystemKind::DubinsCar:
      out.p = x.head<2>();
      out.jac(0, 0) = 1.0;
      out.jac(1, 1) = 1.0;
      break;
    case SystemKind::Manipulator3DoF: {
      const auto& len = model.arm.link_lengths;
      double phi[3];
      phi[0] = x[0];
      phi[1] = phi[0] + x[1];
      phi[2] = phi[1] + x[2];
      out.p.setZero();
      for (int j = 0; j < 3; ++j) {
        out.p += len[j] * Eigen::Vector2d(std::cos(phi[j]), std::sin(phi[j]));
      }
      for (int k = 0; k < 3; ++k) {
        for (int j = k; j < 3; ++j) {
          out.jac(0, k) -= len[j] * std::sin(phi[j]);
          out.jac(1, k) += len[j] * std::cos(phi[j]);
        }
      }
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          for (int j = std::max(a, b); j < 3; ++j) {
            out.hess[0](a, b) -= len[j] * std::cos(phi[j]);
            out.hess[1](a, b) -= len[j] * std::sin(phi[j]);
          }
        }
      }
      break;
    }
    case SystemKind::Toy1D:
      throw std::logic_error("Toy1D has no task-space position");
  }
  return out;
}

CostDerivatives state_cost(const ModelSpec& model, const CostField& field,
                           const VectorXd& x) {
  CostDerivatives out;
  if (model.kind == SystemKind::Toy1D) {
    out.l = toy1d_cost(field.well, x[0]);
    out.l_x = VectorXd::Constant(1, toy1d_cost_derivative(field.well, x[0]));
    out.l_xx = MatrixXd::Constant(
        1, 1, toy1d_cost_second_derivative(field.well, x[0]));
    return out;
  }
  const TaskMap map = task_map(model, x);
  const TaskCost tc = task_cost(field, map.p);
  out.l = tc.g;
  out.l_x = map.jac.transpose() * tc.grad;
  out.l_xx = map.jac.transpose() * tc.hess * map.jac + tc.grad[0] * map.hess[0] +
             tc.grad[1] * map.hess[1];
  return out;
}

double state_cost_value(const ModelSpec& model, const CostField& field,
                        const VectorXd& x) {
  if (model.kind == SystemKind::Toy1D) return toy1d_cost(field.well, x[0]);
  return task_cost(field, task_position(model, x)).g;
}

}  // namespace

std::string_view to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::Toy1D:
      return "toy1d";
    case SystemKind::PointMass:
      return "point_mass";
    case SystemKind::DubinsCar:
      return "dubins_car";
    case SystemKind::Manipulator3DoF:
      return "manipulator3dof";
  }
  return "unknown";
}

SystemKind system_from_string(std::string_view name) {
  for (SystemKind k : {SystemKind::Toy1D, SystemKind::PointMass,
                       SystemKind::DubinsCar, SystemKind::Manipulator3DoF}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown system '" + std::string(name) + "'");
}

bool Box::empty() const {
  if (lo.size() == 0 || lo.size() != hi.size()) return true;
  return ((hi - lo).array() < 0.0).any();
}

ModelSpec default_model_spec(SystemKind kind) {
  ModelSpec spec;
  spec.kind = kind;
  spec.dt = 0.05;
  switch (kind) {
    case SystemKind::Toy1D:
      spec.n = 1;
      spec.m = 1;
      spec.horizon = 60;
      spec.u_max = VectorXd::Constant(1, 2.0);
      spec.workspace = {VectorXd::Constant(1, -2.0), VectorXd::Constant(1, 2.0)};
      break;
    case SystemKind::PointMass:
      spec.n = 4;
      spec.m = 2;
      spec.horizon = 60;
      spec.u_max = VectorXd::Constant(2, 10.0);
      spec.workspace = {(VectorXd(4) << -10, -6, -1, -1).finished(),
                        (VectorXd(4) << 6, 6, 1, 1).finished()};
      break;
    case SystemKind::DubinsCar:
      spec.n = 5;
      spec.m = 2;
      spec.horizon = 100;
      spec.u_max = (VectorXd(2) << 3.0, 10.0).finished();
      spec.workspace = {(VectorXd(5) << -10, -6, -kPi, 0, -1).finished(),
                        (VectorXd(5) << 6, 6, kPi, 2, 1).finished()};
      break;
    case SystemKind::Manipulator3DoF:
      spec.n = 6;
      spec.m = 3;
      spec.horizon = 100;
      spec.u_max = VectorXd::Constant(3, 20.0);
      spec.workspace = {
          (VectorXd(6) << -kPi, -kPi, -kPi, -1, -1, -1).finished(),
          (VectorXd(6) << kPi, kPi, kPi, 1, 1, 1).finished()};
      break;
  }
  spec.hard_region = spec.workspace;
  return spec;
}

void validate(const ModelSpec& model) {
  const ModelSpec ref = default_model_spec(model.kind);
  if (model.n != ref.n || model.m != ref.m) {
    throw std::invalid_argument("dimensions of " +
                                std::string(to_string(model.kind)) +
                                " must be n=" + std::to_string(ref.n) +
                                ", m=" + std::to_string(ref.m));
  }
  if (!(model.dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (model.horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (model.u_max.size() != model.m || (model.u_max.array() <= 0.0).any()) {
    throw std::invalid_argument("u_max must have m positive entries");
  }
  if (model.workspace.dim() != model.n || model.workspace.empty()) {
    throw std::invalid_argument("workspace must be a non-empty box of dim n");
  }
  if (model.hard_region.dim() != model.n || model.hard_region.empty()) {
    throw std::invalid_argument("hard_region must be a non-empty box of dim n");
  }
}

void validate(const ModelSpec& model, const CostField& field) {
  validate(model);
  const std::size_t expected = model.kind == SystemKind::Toy1D ? 0 : 3;
  if (field.obstacles.size() != expected) {
    throw std::invalid_argument(std::string(to_string(model.kind)) +
                                " requires " + std::to_string(expected) +
                                " obstacles, got " +
                                std::to_string(field.obstacles.size()));
  }
  for (const Ellipse& e : field.obstacles) {
    if ((e.semi_axes.array() <= 0.0).any()) {
      throw std::invalid_argument("ellipse semi-axes must be positive");
    }
  }
  for (double w : {field.obstacle_weight, field.target_reward_weight,
                   field.control_weight, field.distance_weight,
                   field.obstacle_sharpness}) {
    if (w < 0.0) throw std::invalid_argument("cost weights must be >= 0");
  }
  if (!(field.target_reward_radius > 0.0)) {
    throw std::invalid_argument("target_reward_radius must be positive");
  }
  if (model.kind == SystemKind::Toy1D && !(field.well.width > 0.0)) {
    throw std::invalid_argument("double-well width must be positive");
  }
}

TimeState step(const ModelSpec& model, const TimeState& state,
               const Control& u) {
  check_dims(model, state, &u);
  check_time(model, state.t);
  const double dt = model.dt;
  const VectorXd& x = state.x;
  TimeState next{x, state.t + 1};
  switch (model.kind) {
    case SystemKind::Toy1D:
      next.x[0] += dt * u[0];
      break;
    case SystemKind::PointMass:
      next.x.head<2>() += dt * x.segment<2>(2);
      next.x.segment<2>(2) += dt * u;
      break;
    case SystemKind::DubinsCar:
      next.x[0] += dt * x[3] * std::cos(x[2]);
      next.x[1] += dt * x[3] * std::sin(x[2]);
      next.x[2] += dt * u[0];
      next.x[3] += dt * x[4];
      next.x[4] += dt * u[1];
      break;
    case SystemKind::Manipulator3DoF: {
      const Eigen::Vector3d q = x.head<3>();
      const Eigen::Vector3d qd = x.tail<3>();
      const Eigen::Vector3d qdd =
          arm_acceleration<double>(model.arm, q, qd, u.head<3>());
      next.x.head<3>() += dt * qd;
      next.x.tail<3>() += dt * qdd;
      break;
    }
  }
  return next;
}

DynamicsJacobians dynamics_jacobians(const ModelSpec& model,
                                     const TimeState& state, const Control& u) {
  check_dims(model, state, &u);
  check_time(model, state.t);
  const double dt = model.dt;
  const VectorXd& x = state.x;
  DynamicsJacobians jac{MatrixXd::Identity(model.n, model.n),
                        MatrixXd::Zero(model.n, model.m)};
  switch (model.kind) {
    case SystemKind::Toy1D:
      jac.f_u(0, 0) = dt;
      break;
    case SystemKind::PointMass:
      jac.f_x(0, 2) = dt;
      jac.f_x(1, 3) = dt;
      jac.f_u(2, 0) = dt;
      jac.f_u(3, 1) = dt;
      break;
    case SystemKind::DubinsCar: {
      const double c = std::cos(x[2]);
      const double s = std::sin(x[2]);
      jac.f_x(0, 2) = -dt * x[3] * s;
      jac.f_x(0, 3) = dt * c;
      jac.f_x(1, 2) = dt * x[3] * c;
      jac.f_x(1, 3) = dt * s;
      jac.f_x(3, 4) = dt;
      jac.f_u(2, 0) = dt;
      jac.f_u(4, 1) = dt;
      break;
    }
    case SystemKind::Manipulator3DoF: {
      Vec3<ArmDual> q;
      Vec3<ArmDual> qd;
      Vec3<ArmDual> tau;
      for (int i = 0; i < 3; ++i) {
        q[i] = ArmDual(x[i], 9, i);
        qd[i] = ArmDual(x[3 + i], 9, 3 + i);
        tau[i] = ArmDual(u[i], 9, 6 + i);
      }
      const Vec3<ArmDual> qdd = arm_acceleration<ArmDual>(model.arm, q, qd, tau);
      for (int i = 0; i < 3; ++i) {
        jac.f_x(i, 3 + i) = dt;
        const auto& d = qdd[i].derivatives();
        for (int k = 0; k < 6; ++k) jac.f_x(3 + i, k) += dt * d[k];
        for (int k = 0; k < 3; ++k) jac.f_u(3 + i, k) = dt * d[6 + k];
      }
      break;
    }
  }
  return jac;
}

Eigen::Vector2d task_position(const ModelSpec& model, const VectorXd& x) {
  if (model.kind == SystemKind::Manipulator3DoF) {
    const auto& len = model.arm.link_lengths;
    const double p0 = x[0];
    const double p1 = p0 + x[1];
    const double p2 = p1 + x[2];
    return {len[0] * std::cos(p0) + len[1] * std::cos(p1) + len[2] * std::cos(p2),
            len[0] * std::sin(p0) + len[1] * std::sin(p1) + len[2] * std::sin(p2)};
  }
  if (model.kind == SystemKind::Toy1D) {
    throw std::logic_error("Toy1D has no task-space position");
  }
  return x.head<2>();
}

CostDerivatives running_cost(const ModelSpec& model, const CostField& field,
                             const TimeState& state, const Control& u) {
  check_dims(model, state, &u);
  CostDerivatives out = state_cost(model, field, state.x);
  out.l += field.control_weight * u.squaredNorm();
  out.l_u = 2.0 * field.control_weight * u;
  out.l_uu = 2.0 * field.control_weight * MatrixXd::Identity(model.m, model.m);
  out.l_ux = MatrixXd::Zero(model.m, model.n);
  return out;
}

CostDerivatives terminal_cost(const ModelSpec& model, const CostField& field,
                              const TimeState& state) {
  check_dims(model, state, nullptr);
  return state_cost(model, field, state.x);
}

double toy1d_cost(const DoubleWell& well, double x) {
  const double s = x / well.width;
  const double q = s * s - 1.0;
  return well.height * q * q + well.tilt * s;
}

double toy1d_cost_derivative(const DoubleWell& well, double x) {
  const double s = x / well.width;
  return (4.0 * well.height * s * (s * s - 1.0) + well.tilt) / well.width;
}

double toy1d_cost_second_derivative(const DoubleWell& well, double x) {
  const double s = x / well.width;
  return well.height * (12.0 * s * s - 4.0) / (well.width * well.width);
}

std::vector<TimeState> sample_initial_states(const ModelSpec& model, int count,
                                             std::uint64_t rng_seed,
                                             Region region) {
  if (count < 1) throw std::invalid_argument("count must be >= 1");
  const Box& box =
      region == Region::Workspace ? model.workspace : model.hard_region;
  if (box.empty() || box.dim() != model.n) {
    throw std::invalid_argument("sampling region is empty");
  }
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> start_time(0, model.horizon - 1);
  std::vector<TimeState> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    TimeState s{VectorXd(model.n), 0};
    for (int d = 0; d < model.n; ++d) {
      s.x[d] = box.lo[d] + (box.hi[d] - box.lo[d]) * unit(rng);
    }
    if (model.randomize_initial_time) s.t = start_time(rng);
    out.push_back(std::move(s));
  }
  return out;
}

// ----- ModelProblem ----- //

ModelProblem::ModelProblem(ModelSpec model, CostField field)
    : model_(std::move(model)), field_(std::move(field)) {}

VectorXd ModelProblem::step(const VectorXd& x, const VectorXd& u,
                            int t) const {
  return cacto::step(model_, TimeState{x, t}, u).x;
}

DynamicsJacobians ModelProblem::linearize(const VectorXd& x, const VectorXd& u,
                                          int t) const {
  return dynamics_jacobians(model_, TimeState{x, t}, u);
}

double ModelProblem::running_cost(const VectorXd& x, const VectorXd& u,
                                  int /*t*/) const {
  return state_cost_value(model_, field_, x) +
         field_.control_weight * u.squaredNorm();
}

double ModelProblem::terminal_cost(const VectorXd& x) const {
  return state_cost_value(model_, field_, x);
}

CostDerivatives ModelProblem::running_cost_derivatives(const VectorXd& x,
                                                       const VectorXd& u,
                                                       int t) const {
  return cacto::running_cost(model_, field_, TimeState{x, t}, u);
}

CostDerivatives ModelProblem::terminal_cost_derivatives(
    const VectorXd& x) const {
  return cacto::terminal_cost(model_, field_, TimeState{x, 0});
}

}  // namespace cacto
