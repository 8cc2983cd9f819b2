#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vgw/rng.hpp"
#include "vgw/tensor.hpp"

namespace vgw {

// Named parameter set with deterministic ordering (registration order).
// Used both as trainable model state and as the generic parameter vector
// fed to the finite-difference checker.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  int add(std::string name, Tensor t);
  int index(const std::string& name) const;  // -1 if absent
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  int64_t total_count() const;
};

struct FdProbe {
  std::string tensor;
  int64_t coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct FdReport {
  std::vector<FdProbe> probes;
  double max_rel_err = 0.0;
  std::string worst_tensor;

  bool pass(double tol) const { return probes.empty() || max_rel_err <= tol; }
};

using ScalarFn = std::function<double(const ParamSet&)>;
using GradFn = std::function<ParamSet(const ParamSet&)>;  // same layout, grads in tensors

// Central-difference gradient verification: numeric = (f(p+h e) - f(p-h e)) / 2h,
// rel_err = |analytic - numeric| / max(|analytic|, |numeric|, floor). Probe
// coordinates are sampled uniformly over all parameter scalars. A
// zero-parameter set yields an empty report that passes.
//
// The numeric side carries cancellation noise of about eps * |f| / step, so
// the floor and step must absorb it: the defaults keep that noise two orders
// of magnitude under a 1e-4 tolerance for losses up to the thousands.
FdReport finite_difference_check(const ScalarFn& f, const GradFn& grad, ParamSet params,
                                 int probes, uint64_t seed, double step = 1e-3,
                                 double rel_floor = 1e-6);

}  // namespace vgw
