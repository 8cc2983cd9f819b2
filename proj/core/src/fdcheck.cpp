#include "vgw/fdcheck.hpp"

#include <cmath>

#include "vgw/errors.hpp"

namespace vgw {

int ParamSet::add(std::string name, Tensor t) {
  if (index(name) >= 0) throw ValidationError("param set: duplicate name '" + name + "'");
  names.push_back(std::move(name));
  tensors.push_back(std::move(t));
  return static_cast<int>(names.size()) - 1;
}

int ParamSet::index(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

Tensor& ParamSet::at(const std::string& name) {
  const int i = index(name);
  if (i < 0) throw ValidationError("param set: unknown name '" + name + "'");
  return tensors[static_cast<size_t>(i)];
}

const Tensor& ParamSet::at(const std::string& name) const {
  const int i = index(name);
  if (i < 0) throw ValidationError("param set: unknown name '" + name + "'");
  return tensors[static_cast<size_t>(i)];
}

int64_t ParamSet::total_count() const {
  int64_t n = 0;
  for (const Tensor& t : tensors) n += t.numel();
  return n;
}

FdReport finite_difference_check(const ScalarFn& f, const GradFn& grad, ParamSet params,
                                 int probes, uint64_t seed, double step, double rel_floor) {
  FdReport report;
  const int64_t total = params.total_count();
  if (total == 0 || probes <= 0) return report;
  if (step <= 0.0) throw ValidationError("fd check: step must be positive");

  const ParamSet analytic = grad(params);
  if (analytic.tensors.size() != params.tensors.size()) {
    throw ValidationError("fd check: gradient layout does not match parameters");
  }

  Rng rng(derive_seed(seed, 0xfdc));
  for (int p = 0; p < probes; ++p) {
    // Uniform over all scalars, then locate the owning tensor.
    int64_t flat = static_cast<int64_t>(rng.uniform() * static_cast<double>(total));
    if (flat >= total) flat = total - 1;
    size_t ti = 0;
    while (flat >= params.tensors[ti].numel()) {
      flat -= params.tensors[ti].numel();
      ++ti;
    }
    double& slot = params.tensors[ti].data[static_cast<size_t>(flat)];
    const double saved = slot;

    slot = saved + step;
    const double fp = f(params);
    slot = saved - step;
    const double fm = f(params);
    slot = saved;

    FdProbe probe;
    probe.tensor = params.names[ti];
    probe.coord = flat;
    probe.numeric = (fp - fm) / (2.0 * step);
    probe.analytic = analytic.tensors[ti].data[static_cast<size_t>(flat)];
    probe.rel_err = std::abs(probe.analytic - probe.numeric) /
                    std::max({std::abs(probe.analytic), std::abs(probe.numeric), rel_floor});
    if (probe.rel_err > report.max_rel_err) {
      report.max_rel_err = probe.rel_err;
      report.worst_tensor = probe.tensor;
    }
    report.probes.push_back(std::move(probe));
  }
  return report;
}

}  // namespace vgw
