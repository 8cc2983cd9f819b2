#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vgw/curriculum.hpp"
#include "vgw/rollout.hpp"
#include "vgw/runconfig.hpp"

namespace vgw {

// Parameterization study: matched-capacity models trained on identical batch
// streams, one regressing the clean target, one the velocity, with the fully
// denoised prediction's SNR logged over training.
struct SnrSettings {
  std::vector<int> dims = {64, 256};
  int64_t iters = 160;
  int64_t log_every = 20;
  int batch = 4;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double grad_clip_l2 = 1.0;
  uint64_t seed = 21;
  int solver_steps = 20;
  int episodes = 8;
  int frames = 12;
  int eval_samples = 4;
  int n_heads = 4;
  int l_dual = 1;
  int l_single = 1;
  int n_patch = 4;
  bool run_z = true;
  bool run_v = true;

  void validate() const;
};

struct SnrRow {
  int64_t iteration = 0;
  std::string parameterization;  // "z" or "v"
  int dim = 0;
  double snr_db = 0.0;
};

struct SnrArm {
  std::string parameterization;
  int dim = 0;
  uint64_t batch_hash = 0;  // streaming hash of every consumed batch
};

struct SnrOutcome {
  std::vector<SnrRow> rows;
  std::vector<SnrArm> arms;
};

SnrOutcome run_snr_experiment(const SnrSettings& s);

void write_snr_csv(const std::string& path, const SnrOutcome& o,
                   const std::vector<std::string>& meta);

// Mean squared token error of the h-th predicted frame (1-based horizon),
// averaged over held-out episodes. Episode e rolls out with plan seed
// derive_seed(rollout_seed, e), so arms sharing rollout_seed consume
// identical noise.
std::vector<double> rollout_mse_by_horizon(const Former& former, const ParamSet& params,
                                           const Dataset& heldout, const RolloutPlan& plan,
                                           uint64_t rollout_seed);

// Flow-forcing ablation: one shared stage-1 prefix, then three arms with the
// same number of further optimizer steps: stage-1 continuation, stage-2 with
// the linear lambda ramp, stage-2 with a static lambda.
struct ForcingSettings {
  WorldConfig world;
  ModelConfig model;
  TrainConfig train;
  int64_t steps_stage1 = 400;
  int64_t steps_stage2 = 200;
  int heldout_episodes = 20;
  int heldout_frames = 12;
  int horizon = 8;
  uint64_t heldout_seed_tag = 0x8e1d;
  uint64_t rollout_seed = 0x5eed;
  int rollout_solver_steps = 20;
  double static_lambda = 0.7;
  bool run_static_arm = true;

  void validate() const;
};

struct ForcingArm {
  std::string name;
  std::vector<double> mse_by_horizon;
  std::vector<TrainLogRow> log;
  ParamSet params;
};

struct ForcingOutcome {
  ForcingArm stage1_only;
  ForcingArm curriculum;
  ForcingArm static_lambda;  // empty when the arm is skipped
};

ForcingOutcome run_forcing_experiment(const ForcingSettings& s);

// Single-episode overfit: the stage-1 loss on a fixed probe batch, measured
// before and after training.
struct MemorizationSettings {
  WorldConfig world;
  ModelConfig model;
  TrainConfig train;
  int64_t steps = 1500;
  int probe_batch = 16;

  void validate() const;
};

struct MemorizationOutcome {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<TrainLogRow> log;
  ParamSet params;
};

MemorizationOutcome run_memorization(const MemorizationSettings& s);

}  // namespace vgw
