#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vgw/fdcheck.hpp"
#include "vgw/flowformer.hpp"
#include "vgw/flowmatch.hpp"
#include "vgw/tensor.hpp"
#include "vgw/toyworld.hpp"

namespace vgw {

// Which predicted frames of each chunk survive. kFirst commits the first
// `stride` frames and re-predicts the rest with fresher context on the next
// call; kAll commits the whole chunk and advances by the chunk length.
enum class CommitRule { kFirst, kAll };

struct RolloutPlan {
  int k = 2;       // context frames per predictor call
  int m = 2;       // frames predicted per call
  int stride = 1;  // window advance per call under kFirst
  int horizon = 8; // total future frames emitted
  SolverConfig solver;
  uint64_t seed = 0;
  bool deterministic_noise = false;  // reuse one noise draw for every chunk
  CommitRule commit = CommitRule::kFirst;

  void validate() const;
};

// Predicts one clean chunk from a flattened condition window. Implemented by
// the trained model (noise plus a full solve) and by test oracles.
using ChunkPredictor =
    std::function<Tensor(const Tensor& cond, const std::vector<int>& cond_frames,
                         const std::vector<int>& chunk_frames, const Tensor& eps)>;

// Sliding-window autoregression: each call sees exactly k condition frames
// (the most recent of context plus committed output), emits per the commit
// rule, and stops once `horizon` frames exist. Retains at most k + m + stride
// frames beyond the emitted output.
std::vector<GeometryState> rollout_chunks(const ChunkPredictor& predict,
                                          const std::vector<GeometryState>& context,
                                          const RolloutPlan& plan);

// Model-backed rollout: per chunk, draw noise from the plan's seeded stream
// and integrate the flow down to tau = 0 conditioned on the current window.
std::vector<GeometryState> rollout_model(const Former& former, const ParamSet& params,
                                         const std::vector<GeometryState>& context,
                                         const RolloutPlan& plan);

// [context; predicted] with contiguous frame indices enforced.
std::vector<GeometryState> assemble_full(const std::vector<GeometryState>& context,
                                         const std::vector<GeometryState>& predicted);

// Decodes the assembled sequence through the shared-scale world decoder, so
// appended future frames can move the geometry of earlier frames.
DecodedGeometry joint_decode(const World& world, const std::vector<GeometryState>& full);

}  // namespace vgw
