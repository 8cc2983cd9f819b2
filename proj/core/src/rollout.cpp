#include "vgw/rollout.hpp"

#include <algorithm>
#include <string>

#include "vgw/errors.hpp"
#include "vgw/rng.hpp"

namespace vgw {

void RolloutPlan::validate() const {
  if (k < 1) throw ValidationError("rollout: k must be >= 1");
  if (m < 1) throw ValidationError("rollout: m must be >= 1");
  if (stride < 1 || stride > m) {
    throw ValidationError("rollout: need 1 <= stride <= m, got stride " + std::to_string(stride) +
                          " with m " + std::to_string(m));
  }
  if (horizon < 1) throw ValidationError("rollout: horizon must be >= 1");
  solver.validate();
  if (solver.tau_start != 1.0 || solver.tau_end != 0.0) {
    throw ValidationError("rollout: solver must integrate from tau 1 to 0");
  }
}

namespace {

void check_contiguous(const std::vector<GeometryState>& states, const char* what) {
  for (size_t i = 1; i < states.size(); ++i) {
    if (states[i].frame_index != states[i - 1].frame_index + 1) {
      throw ValidationError(std::string(what) + ": frame indices not contiguous at position " +
                            std::to_string(i) + " (" + std::to_string(states[i - 1].frame_index) +
                            " then " + std::to_string(states[i].frame_index) + ")");
    }
  }
}

Tensor flatten_window(const std::vector<GeometryState>& window) {
  const Tensor& t0 = window.front().tokens;
  const int64_t n = t0.shape[0], d = t0.shape[1];
  Tensor out({static_cast<int64_t>(window.size()) * n, d});
  for (size_t f = 0; f < window.size(); ++f) {
    std::copy(window[f].tokens.data.begin(), window[f].tokens.data.end(),
              out.data.begin() + static_cast<int64_t>(f) * n * d);
  }
  return out;
}

}  // namespace

std::vector<GeometryState> rollout_chunks(const ChunkPredictor& predict,
                                          const std::vector<GeometryState>& context,
                                          const RolloutPlan& plan) {
  plan.validate();
  if (static_cast<int>(context.size()) != plan.k) {
    throw ValidationError("rollout: context has " + std::to_string(context.size()) +
                          " frames, plan wants k = " + std::to_string(plan.k));
  }
  check_contiguous(context, "rollout context");

  const int64_t n = context.front().tokens.shape[0];
  const int64_t d = context.front().tokens.shape[1];

  Rng rng(derive_seed(plan.seed, 0x7011));
  Tensor fixed_eps;
  if (plan.deterministic_noise) {
    fixed_eps = Tensor::gaussian({static_cast<int64_t>(plan.m) * n, d}, rng);
  }

  std::vector<GeometryState> window = context;
  std::vector<GeometryState> out;
  out.reserve(static_cast<size_t>(plan.horizon));
  int64_t call = 0;
  while (static_cast<int>(out.size()) < plan.horizon) {
    const Tensor cond = flatten_window(window);
    std::vector<int> cond_frames, chunk_frames;
    for (const GeometryState& s : window) cond_frames.push_back(s.frame_index);
    const int next = window.back().frame_index + 1;
    for (int i = 0; i < plan.m; ++i) chunk_frames.push_back(next + i);

    const Tensor eps = plan.deterministic_noise
                           ? fixed_eps
                           : Tensor::gaussian({static_cast<int64_t>(plan.m) * n, d}, rng);
    const Tensor chunk = predict(cond, cond_frames, chunk_frames, eps);
    if (chunk.shape[0] != static_cast<int64_t>(plan.m) * n || chunk.shape[1] != d) {
      throw ValidationError("rollout: predictor returned shape " + shape_str(chunk.shape) +
                            ", expected [" + std::to_string(plan.m * n) + ", " +
                            std::to_string(d) + "]");
    }
    if (!all_finite(chunk)) {
      throw NumericError("rollout: non-finite prediction at step " + std::to_string(call));
    }

    const int remaining = plan.horizon - static_cast<int>(out.size());
    const int commit = std::min(plan.commit == CommitRule::kFirst ? plan.stride : plan.m, remaining);
    for (int i = 0; i < commit; ++i) {
      GeometryState s;
      s.frame_index = next + i;
      s.tokens = Tensor({n, d});
      std::copy(chunk.data.begin() + static_cast<int64_t>(i) * n * d,
                chunk.data.begin() + static_cast<int64_t>(i + 1) * n * d, s.tokens.data.begin());
      out.push_back(std::move(s));
    }

    // Refill the window with the most recent k frames of context + output.
    window.insert(window.end(), out.end() - commit, out.end());
    window.erase(window.begin(), window.end() - plan.k);
    ++call;
  }
  return out;
}

std::vector<GeometryState> rollout_model(const Former& former, const ParamSet& params,
                                         const std::vector<GeometryState>& context,
                                         const RolloutPlan& plan) {
  const ChunkPredictor predict = [&](const Tensor& cond, const std::vector<int>& cond_frames,
                                     const std::vector<int>& chunk_frames, const Tensor& eps) {
    const Predictor clean = [&](const Tensor& z_tau, double tau) {
      return former.forward_value(params, z_tau, tau, cond, cond_frames, chunk_frames);
    };
    return ode_solve(eps, clean, plan.solver);
  };
  return rollout_chunks(predict, context, plan);
}

std::vector<GeometryState> assemble_full(const std::vector<GeometryState>& context,
                                         const std::vector<GeometryState>& predicted) {
  if (context.empty()) throw ValidationError("assemble_full: empty context");
  std::vector<GeometryState> full = context;
  full.insert(full.end(), predicted.begin(), predicted.end());
  check_contiguous(full, "assemble_full");
  return full;
}

DecodedGeometry joint_decode(const World& world, const std::vector<GeometryState>& full) {
  return world.decode(full);
}

}  // namespace vgw
