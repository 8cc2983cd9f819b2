#pragma once

#include <string>

#include "vgw/curriculum.hpp"
#include "vgw/flowformer.hpp"
#include "vgw/rollout.hpp"
#include "vgw/toyworld.hpp"

namespace vgw {

struct RolloutConfig {
  int stride = 1;
  int horizon = 8;
  int solver_steps = 20;
  CommitRule commit = CommitRule::kFirst;
  bool deterministic_noise = false;
  uint64_t seed = 11;

  void validate() const;
  RolloutPlan plan(const ModelConfig& mc) const;
};

struct EvalConfig {
  double delta1_threshold = 1.25;
  int fps_count = 0;  // 0 keeps every point

  void validate() const;
};

// Whole-run configuration. The JSON form mirrors these fields one to one
// under the sections world/model/train/rollout/eval; unknown keys are
// rejected, missing keys fall back to the defaults above.
struct RunConfig {
  WorldConfig world;
  ModelConfig model;
  TrainConfig train;
  RolloutConfig rollout;
  EvalConfig eval;

  TokenLayout layout() const;
  void validate() const;
};

RunConfig default_run_config();
RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& cfg);

// FNV-1a over the canonical serialization, so semantically equal configs hash
// equally regardless of input formatting.
uint64_t run_config_hash(const RunConfig& cfg);
std::string hash_hex(uint64_t h);

const char* to_string(LambdaSchedule::Kind k);
const char* to_string(LossWeighting w);
const char* to_string(CommitRule c);

}  // namespace vgw
