#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nnmrom/errors.hpp"
#include "nnmrom/series.hpp"

namespace nnmrom::sim {

// Chain of n_dof masses joined by linear spring + linear damper + cubic
// spring elements, optionally grounded at either end. Parameters are uniform
// across elements; with uniform c_lin/k_lin the damping matrix is
// proportional to the linear stiffness matrix.
struct ChainParams {
  std::size_t n_dof = 20;
  double mass = 0.1;     // kg per DOF
  double k_lin = 100.0;  // N/m per element
  double c_lin = 0.1;    // kg/s per element
  double k_nl = 2500.0;  // N/m^3 per element
  bool grounded_left = true;
  bool grounded_right = true;

  void validate() const;
};

struct ChainSystem {
  ChainParams params;
  // Element e joins DOFs (a, b); -1 marks ground. Extension d = x_b - x_a,
  // element force k*d + c*d' + k_nl*d^3 pulls a toward b.
  struct Element {
    int a, b;
  };
  std::vector<Element> elements;

  std::size_t n_dof() const { return params.n_dof; }
  std::size_t n_elements() const { return elements.size(); }
};

ChainSystem build_chain(const ChainParams& params);

struct State {
  std::vector<double> x;  // displacement, m
  std::vector<double> v;  // velocity, m/s
  double t = 0.0;

  static State zero(std::size_t n_dof, double t = 0.0) {
    return State{std::vector<double>(n_dof, 0.0), std::vector<double>(n_dof, 0.0), t};
  }
  bool finite() const;
};

struct StateDerivative {
  std::vector<double> xdot;
  std::vector<double> vdot;
};

// acceleration_i = (force_i + sum of element forces acting on i) / mass.
void rhs(const ChainSystem& sys, const State& state, std::span<const double> force,
         StateDerivative& out);

// Total mechanical energy: kinetic + elastic (quadratic + quartic element terms).
double hamiltonian(const ChainSystem& sys, const State& state);

// Classical RK4 update. force_fn(t, f) must fill f (length n_dof) with the
// external force at time t; it is queried at t, t+dt/2 and t+dt. Throws
// NonFiniteState when the update blows up.
template <class ForceFn>
State rk4_step(const ChainSystem& sys, const State& state, ForceFn&& force_fn,
               double dt) {
  if (dt <= 0.0) throw InvalidParams("rk4_step: dt must be positive");
  const std::size_t n = sys.n_dof();
  if (state.x.size() != n || state.v.size() != n)
    throw DimensionMismatch("rk4_step: state size does not match system");

  std::vector<double> f(n);
  StateDerivative k1, k2, k3, k4;
  State tmp = state;

  force_fn(state.t, f.data());
  rhs(sys, state, f, k1);

  const double half = 0.5 * dt;
  force_fn(state.t + half, f.data());
  for (std::size_t i = 0; i < n; ++i) {
    tmp.x[i] = state.x[i] + half * k1.xdot[i];
    tmp.v[i] = state.v[i] + half * k1.vdot[i];
  }
  rhs(sys, tmp, f, k2);

  for (std::size_t i = 0; i < n; ++i) {
    tmp.x[i] = state.x[i] + half * k2.xdot[i];
    tmp.v[i] = state.v[i] + half * k2.vdot[i];
  }
  rhs(sys, tmp, f, k3);

  force_fn(state.t + dt, f.data());
  for (std::size_t i = 0; i < n; ++i) {
    tmp.x[i] = state.x[i] + dt * k3.xdot[i];
    tmp.v[i] = state.v[i] + dt * k3.vdot[i];
  }
  rhs(sys, tmp, f, k4);

  State out = state;
  out.t = state.t + dt;
  const double w = dt / 6.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.x[i] = state.x[i] + w * (k1.xdot[i] + 2.0 * (k2.xdot[i] + k3.xdot[i]) + k4.xdot[i]);
    out.v[i] = state.v[i] + w * (k1.vdot[i] + 2.0 * (k2.vdot[i] + k3.vdot[i]) + k4.vdot[i]);
  }
  if (!out.finite())
    throw NonFiniteState(0, "rk4_step produced a non-finite state");
  return out;
}

// Band-limited stochastic forcing applied at drive_dofs. Gaussian samples are
// drawn per channel (independent streams derived from seed), low-passed with
// a causal FIR at cutoff_hz, then rescaled back to noise_std.
struct ForcingSpec {
  std::vector<std::size_t> drive_dofs{0, 19};
  double noise_std = 1.0;   // N, pre-filter and post-rescale
  double cutoff_hz = 8.0;
  double fs = 100.0;
  double duration = 1000.0;  // s
  std::uint64_t seed = 1;
  std::size_t fir_taps = 101;

  void validate(std::size_t n_dof) const;
  std::size_t steps() const { return static_cast<std::size_t>(std::llround(duration * fs)); }
};

// Returns one channel per drive DOF, labelled f<dof+1>.
MultiChannelSeries generate_forcing(const ForcingSpec& spec);

struct SimulateOptions {
  bool record_velocities = false;
};

struct SimResult {
  MultiChannelSeries displacement;  // x1..xN
  MultiChannelSeries velocity;      // v1..vN; empty unless requested
};

// Integrates the chain under the given forcing series (drive DOFs parsed from
// the forcing labels). Output rows align with forcing rows; row 0 is the
// initial state. Stage forcing between samples is linearly interpolated.
// Throws NonFiniteState carrying the step index on divergence.
SimResult simulate(const ChainSystem& sys, const MultiChannelSeries& forcing,
                   const State& x0, const SimulateOptions& opts = {});

// Summed linear-element (spring + damper) and cubic-element forces acting on
// `dof`, as two channels ["linear", "cubic"]. When velocity is empty it is
// re-derived from displacement by second-order central differences.
MultiChannelSeries element_force_histories(const ChainSystem& sys,
                                           const MultiChannelSeries& displacement,
                                           const MultiChannelSeries& velocity,
                                           std::size_t dof);

// Ratio RMS(cubic)/RMS(linear) of element forces at `dof` over a response.
double restoring_force_ratio(const ChainSystem& sys,
                             const MultiChannelSeries& displacement,
                             const MultiChannelSeries& velocity, std::size_t dof);

// Scales spec.noise_std until restoring_force_ratio at the probe DOF (middle
// of the chain) lands near target. Uses short probe simulations of
// probe_duration seconds. Returns the calibrated standard deviation.
double calibrate_forcing_std(const ChainParams& params, const ForcingSpec& spec,
                             double target_ratio = 1.0,
                             double probe_duration = 100.0,
                             std::size_t max_iter = 8);

}  // namespace nnmrom::sim
