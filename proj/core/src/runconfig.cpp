#include "vgw/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <json.hpp>
#include <sstream>

#include "vgw/errors.hpp"

namespace vgw {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw ValidationError("config: section '" + section + "' must be a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ValidationError("config: unknown key '" + section + "." + key + "'");
  }
}

template <typename T>
void get_to(const json& j, const std::string& section, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ValidationError("config: bad value for '" + section + "." + key + "': " + e.what());
  }
}

void get_enum(const json& j, const std::string& section, const char* key, const char* a,
              const char* b, const char* c, int& out) {
  if (!j.contains(key)) return;
  std::string v;
  get_to(j, section, key, v);
  if (v == a) {
    out = 0;
  } else if (v == b) {
    out = 1;
  } else if (c != nullptr && v == c) {
    out = 2;
  } else {
    throw ValidationError("config: bad value '" + v + "' for '" + section + "." + key + "'");
  }
}

void parse_world(const json& j, WorldConfig& w) {
  check_keys(j, "world", {"d", "n_patch", "n_special", "manifold_dim", "seed", "fps_dt"});
  get_to(j, "world", "d", w.d);
  get_to(j, "world", "n_patch", w.n_patch);
  get_to(j, "world", "n_special", w.n_special);
  get_to(j, "world", "manifold_dim", w.manifold_dim);
  get_to(j, "world", "seed", w.seed);
  get_to(j, "world", "fps_dt", w.fps_dt);
}

void parse_model(const json& j, ModelConfig& m) {
  check_keys(j, "model",
             {"d_model", "n_heads", "l_dual", "l_single", "mlp_ratio", "k", "m", "rope_base"});
  get_to(j, "model", "d_model", m.d_model);
  get_to(j, "model", "n_heads", m.n_heads);
  get_to(j, "model", "l_dual", m.L_d);
  get_to(j, "model", "l_single", m.L_s);
  get_to(j, "model", "mlp_ratio", m.mlp_ratio);
  get_to(j, "model", "k", m.k);
  get_to(j, "model", "m", m.m);
  get_to(j, "model", "rope_base", m.rope_base);
}

void parse_train(const json& j, TrainConfig& t) {
  check_keys(j, "train",
             {"lr", "weight_decay", "grad_clip_l2", "batch_stage1", "batch_stage2",
              "steps_stage1", "steps_stage2", "tau_mid_lo", "tau_mid_hi", "lambda",
              "lambda_static_value", "seed", "init_seed", "dataset_episodes", "dataset_frames",
              "rollout_solver_steps", "predict_registers", "loss_weighting", "ckpt_every"});
  get_to(j, "train", "lr", t.lr);
  get_to(j, "train", "weight_decay", t.weight_decay);
  get_to(j, "train", "grad_clip_l2", t.grad_clip_l2);
  get_to(j, "train", "batch_stage1", t.batch_stage1);
  get_to(j, "train", "batch_stage2", t.batch_stage2);
  get_to(j, "train", "steps_stage1", t.steps_stage1);
  get_to(j, "train", "steps_stage2", t.steps_stage2);
  get_to(j, "train", "tau_mid_lo", t.tau_mid.lo);
  get_to(j, "train", "tau_mid_hi", t.tau_mid.hi);
  int kind = t.lambda_schedule.kind == LambdaSchedule::Kind::kLinear ? 0 : 1;
  get_enum(j, "train", "lambda", "linear", "static", nullptr, kind);
  t.lambda_schedule.kind = kind == 0 ? LambdaSchedule::Kind::kLinear : LambdaSchedule::Kind::kStatic;
  get_to(j, "train", "lambda_static_value", t.lambda_schedule.value);
  get_to(j, "train", "seed", t.seed);
  get_to(j, "train", "init_seed", t.init_seed);
  get_to(j, "train", "dataset_episodes", t.dataset_episodes);
  get_to(j, "train", "dataset_frames", t.dataset_frames);
  get_to(j, "train", "rollout_solver_steps", t.rollout_solver_steps);
  get_to(j, "train", "predict_registers", t.predict_registers);
  int lw = static_cast<int>(t.loss_weighting);
  get_enum(j, "train", "loss_weighting", "per_stage", "weighted_both", "plain_both", lw);
  t.loss_weighting = static_cast<LossWeighting>(lw);
  get_to(j, "train", "ckpt_every", t.ckpt_every);
}

void parse_rollout(const json& j, RolloutConfig& r) {
  check_keys(j, "rollout",
             {"stride", "horizon", "solver_steps", "commit", "deterministic_noise", "seed"});
  get_to(j, "rollout", "stride", r.stride);
  get_to(j, "rollout", "horizon", r.horizon);
  get_to(j, "rollout", "solver_steps", r.solver_steps);
  int commit = r.commit == CommitRule::kFirst ? 0 : 1;
  get_enum(j, "rollout", "commit", "first", "all", nullptr, commit);
  r.commit = commit == 0 ? CommitRule::kFirst : CommitRule::kAll;
  get_to(j, "rollout", "deterministic_noise", r.deterministic_noise);
  get_to(j, "rollout", "seed", r.seed);
}

void parse_eval(const json& j, EvalConfig& e) {
  check_keys(j, "eval", {"delta1_threshold", "fps_count"});
  get_to(j, "eval", "delta1_threshold", e.delta1_threshold);
  get_to(j, "eval", "fps_count", e.fps_count);
}

}  // namespace

const char* to_string(LambdaSchedule::Kind k) {
  return k == LambdaSchedule::Kind::kLinear ? "linear" : "static";
}

const char* to_string(LossWeighting w) {
  switch (w) {
    case LossWeighting::kPerStage: return "per_stage";
    case LossWeighting::kWeightedBoth: return "weighted_both";
    case LossWeighting::kPlainBoth: return "plain_both";
  }
  return "per_stage";
}

const char* to_string(CommitRule c) { return c == CommitRule::kFirst ? "first" : "all"; }

void RolloutConfig::validate() const {
  if (stride < 1) throw ValidationError("config: rollout.stride must be >= 1");
  if (horizon < 0) throw ValidationError("config: rollout.horizon must be >= 0");
  if (solver_steps < 1) throw ValidationError("config: rollout.solver_steps must be >= 1");
}

RolloutPlan RolloutConfig::plan(const ModelConfig& mc) const {
  RolloutPlan p;
  p.k = mc.k;
  p.m = mc.m;
  p.stride = stride;
  p.horizon = horizon;
  p.solver.steps = solver_steps;
  p.solver.tau_start = 1.0;
  p.solver.tau_end = 0.0;
  p.seed = seed;
  p.deterministic_noise = deterministic_noise;
  p.commit = commit;
  return p;
}

void EvalConfig::validate() const {
  if (delta1_threshold <= 1.0) throw ValidationError("config: eval.delta1_threshold must exceed 1");
  if (fps_count < 0) throw ValidationError("config: eval.fps_count must be >= 0");
}

TokenLayout RunConfig::layout() const {
  TokenLayout l;
  l.n_special = world.n_special;
  l.n_patch = world.n_patch;
  return l;
}

void RunConfig::validate() const {
  world.validate();
  model.validate();
  train.validate();
  rollout.validate();
  eval.validate();
  if (model.d_model != world.d) {
    throw ValidationError("config: model.d_model (" + std::to_string(model.d_model) +
                          ") must equal world.d (" + std::to_string(world.d) + ")");
  }
  if (rollout.stride > model.m) {
    throw ValidationError("config: rollout.stride must not exceed model.m");
  }
  if (train.dataset_frames < model.k + model.m + 1) {
    throw ValidationError("config: train.dataset_frames must cover a stage-2 window (k + m + 1)");
  }
}

RunConfig default_run_config() { return RunConfig{}; }

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: JSON parse error: ") + e.what());
  }
  check_keys(j, "(root)", {"world", "model", "train", "rollout", "eval"});
  RunConfig cfg;
  if (j.contains("world")) parse_world(j.at("world"), cfg.world);
  if (j.contains("model")) parse_model(j.at("model"), cfg.model);
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("rollout")) parse_rollout(j.at("rollout"), cfg.rollout);
  if (j.contains("eval")) parse_eval(j.at("eval"), cfg.eval);
  cfg.validate();
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["world"] = {{"d", cfg.world.d},
                {"n_patch", cfg.world.n_patch},
                {"n_special", cfg.world.n_special},
                {"manifold_dim", cfg.world.manifold_dim},
                {"seed", cfg.world.seed},
                {"fps_dt", cfg.world.fps_dt}};
  j["model"] = {{"d_model", cfg.model.d_model},
                {"n_heads", cfg.model.n_heads},
                {"l_dual", cfg.model.L_d},
                {"l_single", cfg.model.L_s},
                {"mlp_ratio", cfg.model.mlp_ratio},
                {"k", cfg.model.k},
                {"m", cfg.model.m},
                {"rope_base", cfg.model.rope_base}};
  j["train"] = {{"lr", cfg.train.lr},
                {"weight_decay", cfg.train.weight_decay},
                {"grad_clip_l2", cfg.train.grad_clip_l2},
                {"batch_stage1", cfg.train.batch_stage1},
                {"batch_stage2", cfg.train.batch_stage2},
                {"steps_stage1", cfg.train.steps_stage1},
                {"steps_stage2", cfg.train.steps_stage2},
                {"tau_mid_lo", cfg.train.tau_mid.lo},
                {"tau_mid_hi", cfg.train.tau_mid.hi},
                {"lambda", to_string(cfg.train.lambda_schedule.kind)},
                {"lambda_static_value", cfg.train.lambda_schedule.value},
                {"seed", cfg.train.seed},
                {"init_seed", cfg.train.init_seed},
                {"dataset_episodes", cfg.train.dataset_episodes},
                {"dataset_frames", cfg.train.dataset_frames},
                {"rollout_solver_steps", cfg.train.rollout_solver_steps},
                {"predict_registers", cfg.train.predict_registers},
                {"loss_weighting", to_string(cfg.train.loss_weighting)},
                {"ckpt_every", cfg.train.ckpt_every}};
  j["rollout"] = {{"stride", cfg.rollout.stride},
                  {"horizon", cfg.rollout.horizon},
                  {"solver_steps", cfg.rollout.solver_steps},
                  {"commit", to_string(cfg.rollout.commit)},
                  {"deterministic_noise", cfg.rollout.deterministic_noise},
                  {"seed", cfg.rollout.seed}};
  j["eval"] = {{"delta1_threshold", cfg.eval.delta1_threshold},
               {"fps_count", cfg.eval.fps_count}};
  return j.dump(2) + "\n";
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failure on config '" + path + "'");
  return run_config_from_json(buf.str());
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << run_config_to_json(cfg);
  out.flush();
  if (!out) throw IoError("write failure on '" + path + "'");
}

uint64_t run_config_hash(const RunConfig& cfg) {
  const std::string s = run_config_to_json(cfg);
  return fnv1a_bytes(s.data(), s.size());
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace vgw
