#pragma once

namespace owal {

/// One classical RK4 step. The right-hand side is addressed by half-step
/// index so that tabulated forcing can be looked up exactly: stage times
/// t_k, t_k + dt/2, t_k + dt map to 2k, 2k+1, 2k+2.
template <class State, class Rhs>
State rk4_step(Rhs&& f, long k, const State& y, double dt) {
  const State k1 = f(2 * k, y);
  const State k2 = f(2 * k + 1, State(y + (0.5 * dt) * k1));
  const State k3 = f(2 * k + 1, State(y + (0.5 * dt) * k2));
  const State k4 = f(2 * k + 2, State(y + dt * k3));
  return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace owal
