#include "vgw/flowmatch.hpp"

#include <cmath>
#include <string>

#include "vgw/errors.hpp"

namespace vgw {

namespace {

void require_tau01(double tau, const char* op) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw ValidationError(std::string(op) + ": tau must lie in [0, 1], got " + std::to_string(tau));
  }
}

}  // namespace

FlowSample corrupt(const Tensor& z, const Tensor& eps, double tau) {
  require_tau01(tau, "corrupt");
  if (!z.same_shape(eps)) {
    throw ValidationError("corrupt: shape mismatch " + shape_str(z.shape) + " vs " +
                          shape_str(eps.shape));
  }
  FlowSample s;
  s.z = z;
  s.eps = eps;
  s.z_tau = lerp(z, eps, tau);
  s.tau = tau;
  return s;
}

double loss_s1(const Tensor& z_hat, const Tensor& z, double tau) {
  require_tau01(tau, "loss_s1");
  if (tau > kTauClamp + 1e-12) {
    throw ValidationError("loss_s1: tau " + std::to_string(tau) + " exceeds the clamp " +
                          std::to_string(kTauClamp));
  }
  if (!z_hat.same_shape(z)) {
    throw ValidationError("loss_s1: shape mismatch " + shape_str(z_hat.shape) + " vs " +
                          shape_str(z.shape));
  }
  const double one_minus = std::max(1.0 - tau, 1.0 - kTauClamp);
  const double mse = sumsq(sub(z_hat, z)) / static_cast<double>(z.numel());
  return mse / (one_minus * one_minus);
}

double loss_vpred(const Tensor& v_hat, const Tensor& z, const Tensor& eps) {
  if (!v_hat.same_shape(z) || !z.same_shape(eps)) {
    throw ValidationError("loss_vpred: shape mismatch");
  }
  double acc = 0.0;
  for (size_t i = 0; i < z.data.size(); ++i) {
    const double d = v_hat.data[i] - (eps.data[i] - z.data[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(z.numel());
}

Tensor zpred_to_velocity(const Tensor& z_tau, const Tensor& z_hat, double tau) {
  if (tau <= 0.0) {
    throw ValidationError("zpred_to_velocity: tau must be positive, got " + std::to_string(tau));
  }
  require_tau01(tau, "zpred_to_velocity");
  Tensor v = sub(z_tau, z_hat);
  scale_inplace(v, 1.0 / tau);
  return v;
}

void SolverConfig::validate() const {
  if (steps < 1) throw ValidationError("solver: steps must be >= 1");
  if (!(tau_end >= 0.0 && tau_start <= 1.0 && tau_end <= tau_start)) {
    throw ValidationError("solver: need 0 <= tau_end <= tau_start <= 1, got start " +
                          std::to_string(tau_start) + " end " + std::to_string(tau_end));
  }
}

Tensor ode_solve(Tensor z_init, const Predictor& predict_clean, const SolverConfig& cfg) {
  cfg.validate();
  if (cfg.tau_start == cfg.tau_end) return z_init;
  const double h = (cfg.tau_start - cfg.tau_end) / static_cast<double>(cfg.steps);
  Tensor z = std::move(z_init);
  for (int i = 0; i < cfg.steps; ++i) {
    const double tau = cfg.tau_start - static_cast<double>(i) * h;
    Tensor z_hat = predict_clean(z, tau);
    if (i == cfg.steps - 1 && cfg.tau_end == 0.0) {
      z = std::move(z_hat);
    } else {
      // z_{tau-h} = z_tau - h * (z_tau - z_hat) / tau
      const double a = h / tau;
      for (size_t k = 0; k < z.data.size(); ++k)
        z.data[k] -= a * (z.data[k] - z_hat.data[k]);
    }
  }
  return z;
}

Tensor ode_solve_velocity(Tensor z_init, const Predictor& predict_velocity,
                          const SolverConfig& cfg) {
  cfg.validate();
  if (cfg.tau_start == cfg.tau_end) return z_init;
  const double h = (cfg.tau_start - cfg.tau_end) / static_cast<double>(cfg.steps);
  Tensor z = std::move(z_init);
  for (int i = 0; i < cfg.steps; ++i) {
    const double tau = cfg.tau_start - static_cast<double>(i) * h;
    const Tensor v = predict_velocity(z, tau);
    axpy(z, -h, v);
  }
  return z;
}

double latent_snr_db(const Tensor& z_hat, const Tensor& z) {
  if (!z_hat.same_shape(z)) {
    throw ValidationError("latent_snr_db: shape mismatch");
  }
  const double sig = sumsq(z);
  if (sig == 0.0) throw ValidationError("latent_snr_db: clean target is all zero");
  const double err = sumsq(sub(z_hat, z));
  if (err == 0.0) return kSnrCapDb;
  const double db = 10.0 * std::log10(sig / err);
  return std::min(db, kSnrCapDb);
}

}  // namespace vgw
