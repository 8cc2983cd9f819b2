#pragma once

#include <functional>

#include "vgw/tensor.hpp"

namespace vgw {

// Flow times above this value are never sampled; the teacher-forced loss
// weight is clamped with the same constant.
inline constexpr double kTauClamp = 0.995;

// Linear interpolation state between clean data (tau = 0) and unit Gaussian
// noise (tau = 1).
struct FlowSample {
  Tensor z;      // clean target
  Tensor eps;    // noise endpoint
  Tensor z_tau;  // (1 - tau) * z + tau * eps
  double tau = 0.0;
};

FlowSample corrupt(const Tensor& z, const Tensor& eps, double tau);

// Teacher-forced clean-prediction loss: mean squared error between the
// prediction and the clean target, weighted by 1 / (1 - tau)^2 with the
// denominator clamped at (1 - kTauClamp)^2.
double loss_s1(const Tensor& z_hat, const Tensor& z, double tau);

// Plain velocity-matching loss: mean || v_hat - (eps - z) ||^2.
double loss_vpred(const Tensor& v_hat, const Tensor& z, const Tensor& eps);

// Bridge from a clean-target prediction to the probe velocity at time tau.
Tensor zpred_to_velocity(const Tensor& z_tau, const Tensor& z_hat, double tau);

struct SolverConfig {
  int steps = 20;
  double tau_start = 1.0;
  double tau_end = 0.0;
  void validate() const;
};

// predict(z_tau, tau) -> clean estimate (or velocity for the _velocity solver).
using Predictor = std::function<Tensor(const Tensor& z_tau, double tau)>;

// Uniform-grid Euler integration downward from tau_start to tau_end using a
// clean-target predictor through the velocity bridge. When tau_end is 0 the
// final update is the direct assignment z <- predict(z, tau_last) at the
// smallest positive grid time, which avoids the 1/tau singularity. Equal
// endpoints return the input unchanged.
Tensor ode_solve(Tensor z_init, const Predictor& predict_clean, const SolverConfig& cfg);

// Same grid, but the predictor emits the velocity field directly.
Tensor ode_solve_velocity(Tensor z_init, const Predictor& predict_velocity,
                          const SolverConfig& cfg);

inline constexpr double kSnrCapDb = 120.0;

// 10 log10(||z||^2 / ||z_hat - z||^2), capped at +kSnrCapDb. A zero clean
// target is rejected.
double latent_snr_db(const Tensor& z_hat, const Tensor& z);

}  // namespace vgw
