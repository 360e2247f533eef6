#pragma once

#include <Eigen/Dense>

namespace cacto {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Value and derivatives of a stage cost. For terminal costs the control
// blocks are empty.
struct CostDerivatives {
  double l = 0.0;
  VectorXd l_x;
  VectorXd l_u;
  MatrixXd l_xx;
  MatrixXd l_uu;
  MatrixXd l_ux;  // m x n
};

struct DynamicsJacobians {
  MatrixXd f_x;  // n x n
  MatrixXd f_u;  // n x m
};

// Discrete-time finite-horizon optimal control problem as seen by the solver.
// Time indices are absolute: a problem started at t0 runs steps t0 .. T_max-1.
class OptimalControlProblem {
 public:
  virtual ~OptimalControlProblem() = default;

  virtual int state_dim() const = 0;
  virtual int control_dim() const = 0;
  virtual int max_horizon() const = 0;
  virtual const VectorXd& control_limit() const = 0;

  virtual VectorXd step(const VectorXd& x, const VectorXd& u, int t) const = 0;
  virtual DynamicsJacobians linearize(const VectorXd& x, const VectorXd& u,
                                      int t) const = 0;

  virtual double running_cost(const VectorXd& x, const VectorXd& u,
                              int t) const = 0;
  virtual double terminal_cost(const VectorXd& x) const = 0;
  virtual CostDerivatives running_cost_derivatives(const VectorXd& x,
                                                   const VectorXd& u,
                                                   int t) const = 0;
  virtual CostDerivatives terminal_cost_derivatives(
      const VectorXd& x) const = 0;
};

}  // namespace cacto
