#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vgw/flowformer.hpp"
#include "vgw/flowmatch.hpp"
#include "vgw/toyworld.hpp"

namespace vgw {

struct TauMidSampler {
  double lo = 0.1;
  double hi = 0.9;
  void validate() const;
  double sample(Rng& rng) const { return rng.uniform(lo, hi); }
};

struct LambdaSchedule {
  enum class Kind { kLinear, kStatic };
  Kind kind = Kind::kLinear;
  double value = 0.7;  // static only
  void validate() const;
};

// Mixing weight for the given optimizer step. The linear ramp hits 0 at the
// first step and 1 at the last one.
double lambda_at(const LambdaSchedule& sched, int64_t step, int64_t total_steps);

enum class LossWeighting {
  kPerStage,      // stage 1 weighted by 1/(1-tau)^2, stage 2 plain
  kWeightedBoth,
  kPlainBoth,
};

struct TrainConfig {
  double lr = 2e-4;
  double weight_decay = 0.05;
  double grad_clip_l2 = 1.0;  // <= 0 disables clipping
  int batch_stage1 = 8;
  int batch_stage2 = 8;
  int64_t steps_stage1 = 400;
  int64_t steps_stage2 = 200;
  TauMidSampler tau_mid;
  LambdaSchedule lambda_schedule;
  uint64_t seed = 7;
  uint64_t init_seed = 3;
  int dataset_episodes = 16;
  int dataset_frames = 24;
  int rollout_solver_steps = 8;  // Euler steps for the training-time partial leg
  bool predict_registers = true; // false drops register rows from the loss
  LossWeighting loss_weighting = LossWeighting::kPerStage;
  int64_t ckpt_every = 0;
  void validate() const;
};

struct Dataset {
  std::vector<Trajectory> episodes;
  int frames() const;
};

// Episode seeds are derive_seed(seed_tag, index); pass different tags for
// train and held-out splits.
Dataset make_dataset(const World& world, int episodes, int frames, uint64_t seed_tag);

// One teacher-forced training example: a window of k condition frames
// followed by m target frames, with its noise draw and flow time.
struct Stage1Item {
  Tensor cond;   // [k*tokens, d]
  Tensor chunk;  // [m*tokens, d] clean target
  Tensor eps;    // same shape as chunk
  double tau = 0.0;
  std::vector<int> cond_frames;
  std::vector<int> chunk_frames;
};

// Draw order per item: episode, window start, tau, eps. Both stages share
// this sampler shape so parameterization arms can consume identical streams.
Stage1Item sample_stage1(const Dataset& data, const ModelConfig& mc, Rng& rng);
std::vector<Stage1Item> sample_stage1_batch(const Dataset& data, const ModelConfig& mc, Rng& rng,
                                            int batch);

// Flatten k consecutive trajectory frames into a condition block.
Tensor flatten_frames(const Trajectory& traj, int first, int count);

struct MixedCondition {
  Tensor tokens;
  double lambda = 0.0;
  double rollout_error_norm = 0.0;  // || predicted - clean || over the chunk
};

// c_mix = (1 - lambda) * clean + lambda * predicted, elementwise. The lambda
// endpoints return bitwise copies of the corresponding input.
MixedCondition mix_condition(const Tensor& clean_chunk, const Tensor& predicted_chunk,
                             double lambda);

// Integrate the probability path from pure noise down to tau_mid with the
// model as a frozen clean-target predictor. No gradient state is created.
Tensor make_partial_rollout(const Former& former, const ParamSet& params, const Tensor& cond,
                            const std::vector<int>& cond_frames,
                            const std::vector<int>& chunk_frames, const Tensor& eps,
                            double tau_mid, int solver_steps);

struct AdamW {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
  int64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  void init(const ParamSet& params);
  void step(ParamSet& params, const std::vector<Tensor>& grads);
};

struct TrainLogRow {
  int64_t step = 0;
  int stage = 1;
  double lambda = 0.0;
  double tau_mean = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;  // global l2 before clipping
  std::optional<double> rollout_err;
};

using StepSink = std::function<void(const TrainLogRow&, const ParamSet&)>;
// Called with the prior step's parameters when a step produces a non-finite
// loss, before the NumericError is thrown.
using AbortSink = std::function<void(int64_t step, const ParamSet&)>;

struct TrainResult {
  std::vector<TrainLogRow> log;
  double final_loss = 0.0;
};

// Batch objective under the stage-1 teacher-forced loss, or under plain
// velocity matching for the parameterization study. Gradients are averaged
// over the batch and returned in parameter order.
struct BatchEval {
  double loss = 0.0;
  double grad_norm = 0.0;     // global l2 before clipping
  std::vector<Tensor> grads;  // empty unless with_grads
};

BatchEval stage1_batch_eval(const Former& former, const ParamSet& params,
                            const std::vector<Stage1Item>& batch, const TrainConfig& cfg,
                            bool with_grads);
BatchEval vpred_batch_eval(const Former& former, const ParamSet& params,
                           const std::vector<Stage1Item>& batch, const TrainConfig& cfg,
                           bool with_grads);

TrainResult train_stage1(const Former& former, ParamSet& params, const Dataset& data,
                         const TrainConfig& cfg, int64_t steps, const StepSink& sink = nullptr,
                         const AbortSink& abort_sink = nullptr);

TrainResult train_stage2(const Former& former, ParamSet& params, const Dataset& data,
                         const TrainConfig& cfg, int64_t steps, const StepSink& sink = nullptr,
                         const AbortSink& abort_sink = nullptr);

// One fully sampled stage-2 window (frames f0 .. f_{k+m}).
struct Stage2Sample {
  Tensor context;        // frames [f0, f_{k-1}]
  Tensor rollout_chunk;  // clean frames [f_k, f_{k+m-1}]
  Tensor target_chunk;   // clean frames [f_{k+1}, f_{k+m}]
  Tensor shift_cond;     // clean frames [f_1, f_k] (the lambda = 0 condition)
  Tensor eps_roll;
  Tensor eps_sup;
  double tau_mid = 0.5;
  double tau = 0.5;
  std::vector<int> context_frames, rollout_frames, shift_frames, target_frames;
};

Stage2Sample sample_stage2(const Dataset& data, const ModelConfig& mc, const TauMidSampler& mid,
                           Rng& rng);

// The stage-2 objective with the two parameter roles made explicit: the
// partial rollout runs with `rollout_params` and is treated as data; the
// supervised pass runs (and differentiates) with `main_params`. Training
// passes the same set for both.
struct Stage2Eval {
  double loss = 0.0;
  double rollout_error_norm = 0.0;
  Tensor condition;  // mixed condition actually fed to the supervised pass
  ParamSet grads;    // populated when with_grads
};

Stage2Eval stage2_objective(const Former& former, const ParamSet& main_params,
                            const ParamSet& rollout_params, const Stage2Sample& s, double lambda,
                            const TrainConfig& cfg, bool with_grads);

// Loss helpers shared by both stages (register masking included).
double chunk_mse(const Former& former, const Tensor& pred, const Tensor& target,
                 bool predict_registers);

// Streaming FNV-1a over raw tensor bytes; used to fingerprint batch streams.
uint64_t fnv1a_bytes(const void* data, size_t bytes, uint64_t h = 0xcbf29ce484222325ULL);
uint64_t hash_item(const Stage1Item& item, uint64_t h);

}  // namespace vgw
