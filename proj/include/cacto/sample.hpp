#pragma once

#include "cacto/envs.hpp"

namespace cacto {

// One replay-buffer record produced from an optimized trajectory.
struct TOSample {
  TimeState state;
  Control u;
  double V_bar = 0.0;      // K-step partial cost-to-go
  VectorXd V_bar_x;        // value gradient w.r.t. the physical state
  TimeState state_plus_K;  // state reached K steps later (or at the horizon)
};

}  // namespace cacto
