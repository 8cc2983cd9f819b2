#include <CLI11.hpp>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <thread>

#include "vgw/checkpoint.hpp"
#include "vgw/curriculum.hpp"
#include "vgw/errors.hpp"
#include "vgw/evalmetrics.hpp"
#include "vgw/experiments.hpp"
#include "vgw/flowformer.hpp"
#include "vgw/rollout.hpp"
#include "vgw/runconfig.hpp"
#include "vgw/trajio.hpp"

using namespace vgw;

namespace {

constexpr uint64_t kDatasetTag = 0xeb15;    // episode seeds for generated corpora
constexpr uint64_t kTrainDataTag = 0xda7a;  // episode seeds for training data

RunConfig load_or_default(const std::string& config_path) {
  return config_path.empty() ? default_run_config() : load_run_config(config_path);
}

// A global --seed re-derives every configured seed so one knob reproduces a
// whole run.
void apply_global_seed(RunConfig& cfg, const std::optional<uint64_t>& seed) {
  if (!seed) return;
  cfg.world.seed = derive_seed(*seed, 1);
  cfg.train.seed = derive_seed(*seed, 2);
  cfg.train.init_seed = derive_seed(*seed, 3);
  cfg.rollout.seed = derive_seed(*seed, 4);
}

int thread_budget(int jobs) {
  int cap = 0;
  if (const char* env = std::getenv("VGW_THREADS")) {
    cap = std::atoi(env);
  } else {
    cap = static_cast<int>(std::thread::hardware_concurrency());
  }
  if (cap < 1) cap = 1;
  return std::min(cap, jobs);
}

std::string episode_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "episode_%04d", index);
  return std::string(buf);
}

std::vector<std::string> base_meta(const RunConfig& cfg) {
  return {"config_hash: " + hash_hex(run_config_hash(cfg))};
}

void report_params(const ParamSet& params) {
  std::printf("model parameters: %" PRId64 " in %zu tensors\n", params.total_count(),
              params.tensors.size());
}

// Loaded tensors must agree with the live model tensor for tensor.
void verify_params(const Former& former, const ParamSet& loaded) {
  const ParamSet ref = former.init_params(0);
  for (size_t i = 0; i < ref.names.size(); ++i) {
    const int j = loaded.index(ref.names[i]);
    if (j < 0) {
      throw ValidationError("checkpoint: missing parameter '" + ref.names[i] + "'");
    }
    if (!loaded.tensors[static_cast<size_t>(j)].same_shape(ref.tensors[i])) {
      throw ValidationError(
          "checkpoint: parameter '" + ref.names[i] + "' has shape " +
          shape_str(loaded.tensors[static_cast<size_t>(j)].shape) + ", model wants " +
          shape_str(ref.tensors[i].shape));
    }
  }
  if (loaded.names.size() != ref.names.size()) {
    throw ValidationError("checkpoint: holds " + std::to_string(loaded.names.size()) +
                          " tensors, model wants " + std::to_string(ref.names.size()));
  }
}

std::string states_blob(const RunConfig& cfg, const char* kind, uint64_t episode_seed) {
  nlohmann::json j;
  j["kind"] = kind;
  j["episode_seed"] = episode_seed;
  j["config_hash"] = hash_hex(run_config_hash(cfg));
  j["world"] = nlohmann::json::parse(run_config_to_json(cfg)).at("world");
  return j.dump(2) + "\n";
}

int cmd_gen(const RunConfig& cfg, int episodes, int frames, const std::string& out) {
  const World world(cfg.world);
  const uint64_t tag = derive_seed(cfg.world.seed, kDatasetTag);

  std::vector<Trajectory> trajs(static_cast<size_t>(episodes));
  std::vector<uint64_t> seeds(static_cast<size_t>(episodes));
  for (int i = 0; i < episodes; ++i) seeds[static_cast<size_t>(i)] = derive_seed(tag, i);

  const int workers = thread_budget(episodes);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < episodes; i += workers) {
          trajs[static_cast<size_t>(i)] = world.generate(seeds[static_cast<size_t>(i)], frames);
        }
      } catch (...) {
        errors[static_cast<size_t>(w)] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ensure_dir(out);
  save_run_config(out + "/config.json", cfg);
  for (int i = 0; i < episodes; ++i) {
    const Trajectory& traj = trajs[static_cast<size_t>(i)];
    const std::string dir = out + "/" + episode_dir_name(i);
    ensure_dir(dir);
    std::vector<int> frame_ids;
    for (const GeometryState& s : traj.states) frame_ids.push_back(s.frame_index);
    std::vector<std::string> meta = base_meta(cfg);
    meta.push_back("episode: " + std::to_string(i));
    meta.push_back("episode_seed: " + std::to_string(seeds[static_cast<size_t>(i)]));
    save_states(dir + "/states.bin", traj.states,
                states_blob(cfg, "latent_states", seeds[static_cast<size_t>(i)]));
    write_geometry_dir(dir, frame_ids, traj.depths, traj.points, traj.poses, meta);
  }

  nlohmann::json manifest;
  manifest["config_hash"] = hash_hex(run_config_hash(cfg));
  manifest["episodes"] = episodes;
  manifest["frames"] = frames;
  manifest["seeds"] = seeds;
  std::ofstream mf(out + "/manifest.json", std::ios::trunc);
  if (!mf) throw IoError("cannot open '" + out + "/manifest.json' for writing");
  mf << manifest.dump(2) << "\n";
  mf.flush();
  if (!mf) throw IoError("write failure on '" + out + "/manifest.json'");

  std::printf("wrote %d episodes of %d frames to %s\n", episodes, frames, out.c_str());
  return kExitOk;
}

std::string log_row_csv(const TrainLogRow& row) {
  std::string line = std::to_string(row.step) + "," + std::to_string(row.stage) + "," +
                     format_double(row.lambda) + "," + format_double(row.tau_mean) + "," +
                     format_double(row.loss) + "," + format_double(row.grad_norm) + ",";
  if (row.rollout_err) line += format_double(*row.rollout_err);
  return line;
}

int cmd_train(const RunConfig& cfg, int stage, const std::string& resume, const std::string& out,
              int64_t steps_override, int64_t ckpt_every_override) {
  if (stage == 2 && resume.empty()) {
    throw ValidationError("train: stage 2 requires --resume with a stage-1 checkpoint");
  }
  ensure_dir(out);
  const World world(cfg.world);
  const Former former(cfg.model, cfg.layout());

  ParamSet params;
  if (resume.empty()) {
    params = former.init_params(cfg.train.init_seed);
  } else {
    LoadedCheckpoint ck = load_checkpoint(resume);
    const RunConfig ck_cfg = run_config_from_json(ck.config_json);
    const auto section = [](const RunConfig& c, const char* key) {
      return nlohmann::json::parse(run_config_to_json(c)).at(key);
    };
    for (const char* key : {"world", "model"}) {
      if (section(ck_cfg, key) != section(cfg, key)) {
        throw ValidationError(std::string("train: checkpoint '") + resume +
                              "' disagrees with the current config in section '" + key + "'");
      }
    }
    verify_params(former, ck.params);
    params = std::move(ck.params);
  }
  report_params(params);

  const Dataset data = make_dataset(world, cfg.train.dataset_episodes, cfg.train.dataset_frames,
                                    derive_seed(cfg.train.seed, kTrainDataTag));
  const int64_t steps = steps_override >= 0
                            ? steps_override
                            : (stage == 1 ? cfg.train.steps_stage1 : cfg.train.steps_stage2);
  const int64_t ckpt_every = ckpt_every_override >= 0 ? ckpt_every_override : cfg.train.ckpt_every;
  const std::string config_json = run_config_to_json(cfg);

  const std::string log_path = out + "/train_log.csv";
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot open '" + log_path + "' for writing");
  for (const std::string& line : base_meta(cfg)) log << "# " << line << "\n";
  log << "# rollout_err is empty outside stage 2\n";
  log << "step,stage,lambda,tau_mean,loss,grad_norm,rollout_err\n";

  const StepSink sink = [&](const TrainLogRow& row, const ParamSet& p) {
    log << log_row_csv(row) << "\n";
    if (ckpt_every > 0 && (row.step + 1) % ckpt_every == 0) {
      char name[48];
      std::snprintf(name, sizeof(name), "step_%06lld.vgwf",
                    static_cast<long long>(row.step + 1));
      save_checkpoint(out + "/" + name, config_json, p);
    }
  };
  const AbortSink abort_sink = [&](int64_t step, const ParamSet& p) {
    char name[48];
    std::snprintf(name, sizeof(name), "abort_step_%06lld.vgwf", static_cast<long long>(step));
    save_checkpoint(out + "/" + name, config_json, p);
    log.flush();
  };

  const TrainResult res = stage == 1
                              ? train_stage1(former, params, data, cfg.train, steps, sink, abort_sink)
                              : train_stage2(former, params, data, cfg.train, steps, sink, abort_sink);
  log.flush();
  if (!log) throw IoError("write failure on '" + log_path + "'");
  save_checkpoint(out + "/final.vgwf", config_json, params);
  std::printf("stage %d: %lld steps, final loss %.6g, checkpoint %s/final.vgwf\n", stage,
              static_cast<long long>(steps), res.final_loss, out.c_str());
  return kExitOk;
}

int cmd_rollout(const std::string& ckpt_path, const std::string& dataset, int episode,
                int context_k, int64_t horizon_flag, const std::string& out,
                const RolloutConfig& ro_overrides, bool have_commit, bool have_noise_flag,
                bool have_solver_steps, const std::optional<uint64_t>& global_seed) {
  LoadedCheckpoint ck = load_checkpoint(ckpt_path);
  const RunConfig cfg_ck = run_config_from_json(ck.config_json);
  const RunConfig cfg_ds = load_run_config(dataset + "/config.json");

  if (cfg_ck.model.d_model != cfg_ds.world.d) {
    throw ValidationError("rollout: checkpoint model.d_model (" +
                          std::to_string(cfg_ck.model.d_model) + ") vs dataset world.d (" +
                          std::to_string(cfg_ds.world.d) + ")");
  }
  if (cfg_ck.world.tokens() != cfg_ds.world.tokens()) {
    throw ValidationError("rollout: checkpoint world tokens (" +
                          std::to_string(cfg_ck.world.tokens()) + ") vs dataset world tokens (" +
                          std::to_string(cfg_ds.world.tokens()) + ")");
  }

  TokenLayout layout;
  layout.n_special = cfg_ds.world.n_special;
  layout.n_patch = cfg_ds.world.n_patch;
  const Former former(cfg_ck.model, layout);
  verify_params(former, ck.params);
  report_params(ck.params);

  const StatesFile sf = load_states(dataset + "/" + episode_dir_name(episode) + "/states.bin");
  const int k = context_k > 0 ? context_k : cfg_ck.model.k;
  if (k != cfg_ck.model.k) {
    throw ValidationError("rollout: --context " + std::to_string(k) +
                          " does not match the model's context size " +
                          std::to_string(cfg_ck.model.k));
  }
  if (static_cast<int>(sf.states.size()) < k) {
    throw ValidationError("rollout: episode has " + std::to_string(sf.states.size()) +
                          " frames, need at least k = " + std::to_string(k));
  }
  const std::vector<GeometryState> context(sf.states.begin(), sf.states.begin() + k);

  RolloutConfig ro = cfg_ck.rollout;
  if (have_commit) ro.commit = ro_overrides.commit;
  if (have_noise_flag) ro.deterministic_noise = ro_overrides.deterministic_noise;
  if (have_solver_steps) ro.solver_steps = ro_overrides.solver_steps;
  ro.horizon = horizon_flag >= 0 ? static_cast<int>(horizon_flag) : ro.horizon;
  if (global_seed) ro.seed = derive_seed(*global_seed, 4);

  std::vector<GeometryState> predicted;
  if (ro.horizon > 0) {
    RolloutPlan plan = ro.plan(cfg_ck.model);
    predicted = rollout_model(former, ck.params, context, plan);
  }
  const std::vector<GeometryState> full = assemble_full(context, predicted);

  const World world(cfg_ds.world);
  const DecodedGeometry geo = joint_decode(world, full);

  ensure_dir(out);
  std::vector<std::string> meta = base_meta(cfg_ds);
  meta.push_back("checkpoint: " + ckpt_path);
  meta.push_back("episode: " + std::to_string(episode));
  meta.push_back("horizon: " + std::to_string(ro.horizon));
  meta.push_back("solver_steps: " + std::to_string(ro.solver_steps));
  meta.push_back(std::string("commit: ") + to_string(ro.commit));
  save_states(out + "/states.bin", full, states_blob(cfg_ds, "assembled_latents", ro.seed));
  if (!predicted.empty()) {
    save_states(out + "/predicted_latents.bin", predicted,
                states_blob(cfg_ds, "predicted_latents", ro.seed));
  }
  write_geometry_dir(out, geo.frame_indices, geo.depths, geo.points, geo.poses, meta);
  std::printf("rolled out %zu predicted frames (scene scale %.6g) to %s\n", predicted.size(),
              geo.scene_scale, out.c_str());
  return kExitOk;
}

PointCloud cloud_from_tensor(const Tensor& t) {
  PointCloud c;
  for (int64_t i = 0; i < t.shape[0]; ++i) {
    c.points.push_back({t.at(i, 0), t.at(i, 1), t.at(i, 2)});
  }
  return c;
}

PointCloud maybe_fps(const PointCloud& c, int count) {
  if (count <= 0 || c.size() <= count) return c;
  PointCloud out;
  for (int idx : farthest_point_sampling(c, count)) {
    out.points.push_back(c.points[static_cast<size_t>(idx)]);
  }
  return out;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& suite,
             const std::string& out_path, const RunConfig& cfg) {
  const bool want_depth = suite == "depth" || suite == "all";
  const bool want_points = suite == "points" || suite == "all";
  const bool want_traj = suite == "traj" || suite == "all";

  std::vector<std::string> missing;
  const auto need = [&](const std::string& dir, const char* file, bool wanted) {
    if (wanted && !std::filesystem::exists(dir + "/" + file)) missing.push_back(dir + "/" + file);
  };
  for (const std::string& dir : {pred, gt}) {
    need(dir, "depth.csv", want_depth);
    need(dir, "points.xyz", want_points);
    need(dir, "poses.csv", want_traj);
  }
  if (!missing.empty()) {
    std::string msg = "eval: missing files:";
    for (const std::string& m : missing) msg += " " + m;
    throw IoError(msg);
  }

  std::vector<int> frames;
  nlohmann::json horizons = nlohmann::json::object();
  const auto horizon_of = [&](int frame) {
    return std::to_string(frame - frames.front() + 1);
  };

  DepthSeries dp, dg;
  if (want_depth) {
    dp = read_depth_csv(pred + "/depth.csv");
    dg = read_depth_csv(gt + "/depth.csv");
    if (dp.frames != dg.frames) throw ValidationError("eval: depth frame indices differ");
    frames = dp.frames;
  }
  PointSeries pp, pg;
  if (want_points) {
    pp = read_points_xyz(pred + "/points.xyz");
    pg = read_points_xyz(gt + "/points.xyz");
    if (pp.frames != pg.frames) throw ValidationError("eval: point frame indices differ");
    if (frames.empty()) frames = pp.frames;
    if (pp.frames != frames) throw ValidationError("eval: point frames disagree with depth frames");
  }
  PoseSeries qp, qg;
  if (want_traj) {
    qp = read_poses_csv(pred + "/poses.csv");
    qg = read_poses_csv(gt + "/poses.csv");
    if (qp.frames != qg.frames) throw ValidationError("eval: pose frame indices differ");
    if (qp.poses.size() < 2) throw ValidationError("eval: trajectory suite needs >= 2 poses");
    if (frames.empty()) frames = qp.frames;
    if (qp.frames != frames) throw ValidationError("eval: pose frames disagree with other suites");
  }
  if (frames.empty()) throw ValidationError("eval: nothing to evaluate");

  for (size_t i = 0; i < frames.size(); ++i) {
    nlohmann::json& h = horizons[horizon_of(frames[i])];
    h["frame"] = frames[i];
    if (want_depth) {
      const DepthStats ds = absrel_delta1(dp.maps[i], dg.maps[i], cfg.eval.delta1_threshold);
      h["absrel"] = ds.absrel;
      h["delta1"] = ds.delta1;
    }
    if (want_points) {
      const PointCloud cp = maybe_fps(cloud_from_tensor(pp.clouds[i]), cfg.eval.fps_count);
      const PointCloud cg = maybe_fps(cloud_from_tensor(pg.clouds[i]), cfg.eval.fps_count);
      const ChamferStats cs = chamfer_acc_comp(cp, cg);
      h["accuracy"] = cs.accuracy;
      h["completeness"] = cs.completeness;
      h["chamfer"] = cs.chamfer;
    }
    if (want_traj && i >= 1) {
      const std::vector<Pose> prefix_p(qp.poses.begin(), qp.poses.begin() + i + 1);
      const std::vector<Pose> prefix_g(qg.poses.begin(), qg.poses.begin() + i + 1);
      const TrajErrors te = ate_rte_rre(prefix_p, prefix_g);
      h["ate"] = te.ate;
      h["rte"] = te.rte;
      h["rre_deg"] = te.rre_deg;
    }
  }

  nlohmann::json doc;
  doc["_meta"] = {
      {"suite", suite},
      {"pred", pred},
      {"gt", gt},
      {"config_hash", hash_hex(run_config_hash(cfg))},
      {"delta1_threshold", cfg.eval.delta1_threshold},
      {"fps_count", cfg.eval.fps_count},
      {"conventions",
       {{"chamfer", "mean-of-means of unsquared nearest-neighbor distances; cd=(acc+comp)/2"},
        {"horizon", "frame_index - first_frame + 1"},
        {"trajectory", "similarity-aligned prefix up to each horizon; consecutive pairs"}}}};
  doc["horizons"] = horizons;

  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + out_path + "' for writing");
  out << doc.dump(2) << "\n";
  out.flush();
  if (!out) throw IoError("write failure on '" + out_path + "'");
  std::printf("wrote %zu horizons to %s\n", horizons.size(), out_path.c_str());
  return kExitOk;
}

int cmd_snr(const RunConfig& cfg, bool have_config, const SnrSettings& s, const std::string& out) {
  if (have_config) {
    for (int d : s.dims) {
      if (d > cfg.world.d) {
        throw ValidationError("snr: dim " + std::to_string(d) + " exceeds the world budget " +
                              std::to_string(cfg.world.d));
      }
    }
  }
  const SnrOutcome o = run_snr_experiment(s);
  std::vector<std::string> meta = base_meta(cfg);
  meta.push_back("snr_db: 10*log10(sum ||z||^2 / sum ||z_hat - z||^2) over the eval set");
  meta.push_back("solver: " + std::to_string(s.solver_steps) + " Euler steps from tau 1 to 0");
  write_snr_csv(out, o, meta);
  for (const SnrArm& arm : o.arms) {
    std::printf("arm %s dim %d: batch hash %s\n", arm.parameterization.c_str(), arm.dim,
                hash_hex(arm.batch_hash).c_str());
  }
  std::printf("wrote %zu rows to %s\n", o.rows.size(), out.c_str());
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& cfg, int probes, const std::string& ckpt_path, int batch) {
  const World world(cfg.world);
  const Former former(cfg.model, cfg.layout());
  ParamSet params;
  if (ckpt_path.empty()) {
    params = former.init_params(cfg.train.init_seed);
  } else {
    LoadedCheckpoint ck = load_checkpoint(ckpt_path);
    verify_params(former, ck.params);
    params = std::move(ck.params);
  }
  report_params(params);

  const Dataset data =
      make_dataset(world, 1, cfg.train.dataset_frames, derive_seed(cfg.train.seed, kTrainDataTag));
  Rng rng(derive_seed(cfg.train.seed, 0x6c));
  const std::vector<Stage1Item> batch_items = sample_stage1_batch(data, cfg.model, rng, batch);

  const ScalarFn f = [&](const ParamSet& p) {
    return stage1_batch_eval(former, p, batch_items, cfg.train, false).loss;
  };
  const GradFn g = [&](const ParamSet& p) {
    BatchEval be = stage1_batch_eval(former, p, batch_items, cfg.train, true);
    ParamSet out;
    out.names = p.names;
    out.tensors = std::move(be.grads);
    return out;
  };
  const FdReport report =
      finite_difference_check(f, g, std::move(params), probes, derive_seed(cfg.train.seed, 0xfd));
  std::printf("gradcheck: %zu probes, max rel err %.3e (worst tensor '%s')\n",
              report.probes.size(), report.max_rel_err, report.worst_tensor.c_str());
  if (!report.pass(1e-4)) {
    std::printf("gradcheck: FAIL (tolerance 1e-4)\n");
    return kExitNumeric;
  }
  std::printf("gradcheck: PASS (tolerance 1e-4)\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent geometry world model toolkit"};
  app.require_subcommand(1);

  std::optional<uint64_t> global_seed;
  app.add_option("--seed", global_seed, "re-derive all configured seeds from this value");

  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration")->envname("VGW_CONFIG");

  auto* gen = app.add_subcommand("gen", "generate a latent episode corpus");
  int gen_episodes = 4, gen_frames = 16;
  std::string gen_out = "dataset";
  gen->add_option("--episodes", gen_episodes, "episode count")->check(CLI::PositiveNumber);
  gen->add_option("--frames", gen_frames, "frames per episode");
  gen->add_option("--out", gen_out, "output directory")->required();

  auto* train = app.add_subcommand("train", "run one training stage");
  int train_stage = 1;
  std::string train_resume, train_out = "run";
  int64_t train_steps = -1, train_ckpt_every = -1;
  train->add_option("--stage", train_stage, "training stage")->check(CLI::Range(1, 2));
  train->add_option("--resume", train_resume, "checkpoint to start from");
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--steps", train_steps, "override the configured step count");
  train->add_option("--ckpt-every", train_ckpt_every, "checkpoint period in steps");

  auto* roll = app.add_subcommand("rollout", "autoregressive forecast plus joint decode");
  std::string roll_ckpt, roll_dataset, roll_out = "rollout";
  int roll_episode = 0, roll_context = -1;
  int64_t roll_horizon = -1;
  RolloutConfig roll_over;
  std::string roll_commit;
  bool roll_det_noise = false;
  int roll_solver_steps = -1;
  roll->add_option("--ckpt", roll_ckpt, "model checkpoint")->required();
  roll->add_option("--dataset", roll_dataset, "generated corpus directory")->required();
  roll->add_option("--episode", roll_episode, "episode index")->check(CLI::NonNegativeNumber);
  roll->add_option("--context", roll_context, "context frames taken from the episode");
  roll->add_option("--horizon", roll_horizon, "future frames to emit (0 decodes context only)");
  roll->add_option("--out", roll_out, "output directory")->required();
  roll->add_option("--commit", roll_commit, "frames committed per call")
      ->check(CLI::IsMember({"first", "all"}));
  roll->add_flag("--deterministic-noise", roll_det_noise, "reuse one noise draw per chunk");
  roll->add_option("--solver-steps", roll_solver_steps, "Euler steps per chunk");

  auto* eval = app.add_subcommand("eval", "geometry metric suites over exported directories");
  std::string eval_pred, eval_gt, eval_suite = "all", eval_out = "metrics.json";
  eval->add_option("--pred", eval_pred, "predicted geometry directory")->required();
  eval->add_option("--gt", eval_gt, "ground-truth geometry directory")->required();
  eval->add_option("--suite", eval_suite, "metric family")
      ->check(CLI::IsMember({"depth", "points", "traj", "all"}));
  eval->add_option("--out", eval_out, "metrics JSON path");

  auto* snr = app.add_subcommand("snr", "z- vs v-parameterization latent SNR study");
  SnrSettings snr_settings;
  std::string snr_param, snr_out = "snr_curve.csv";
  snr->add_option("--param", snr_param, "restrict to one arm")
      ->check(CLI::IsMember({"z", "v"}));
  snr->add_option("--dims", snr_settings.dims, "latent widths to sweep");
  snr->add_option("--iters", snr_settings.iters, "training iterations per arm");
  snr->add_option("--log-every", snr_settings.log_every, "iterations between SNR checkpoints");
  snr->add_option("--batch", snr_settings.batch, "batch size");
  snr->add_option("--lr", snr_settings.lr, "learning rate");
  snr->add_option("--out", snr_out, "output CSV path");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  int gc_probes = 200, gc_batch = 2;
  std::string gc_ckpt;
  gradcheck->add_option("--probes", gc_probes, "probe count")->check(CLI::NonNegativeNumber);
  gradcheck->add_option("--ckpt", gc_ckpt, "checkpoint to verify instead of a fresh init");
  gradcheck->add_option("--batch", gc_batch, "loss batch size")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitValidation;
  }

  try {
    RunConfig cfg = load_or_default(config_path);
    apply_global_seed(cfg, global_seed);
    if (*gen) return cmd_gen(cfg, gen_episodes, gen_frames, gen_out);
    if (*train) {
      return cmd_train(cfg, train_stage, train_resume, train_out, train_steps, train_ckpt_every);
    }
    if (*roll) {
      if (!roll_commit.empty()) {
        roll_over.commit = roll_commit == "first" ? CommitRule::kFirst : CommitRule::kAll;
      }
      roll_over.deterministic_noise = roll_det_noise;
      if (roll_solver_steps > 0) roll_over.solver_steps = roll_solver_steps;
      return cmd_rollout(roll_ckpt, roll_dataset, roll_episode, roll_context, roll_horizon,
                         roll_out, roll_over, !roll_commit.empty(), roll_det_noise,
                         roll_solver_steps > 0, global_seed);
    }
    if (*eval) return cmd_eval(eval_pred, eval_gt, eval_suite, eval_out, cfg);
    if (*snr) {
      snr_settings.seed = global_seed ? derive_seed(*global_seed, 5) : cfg.train.seed;
      if (snr_param == "z") snr_settings.run_v = false;
      if (snr_param == "v") snr_settings.run_z = false;
      return cmd_snr(cfg, !config_path.empty(), snr_settings, snr_out);
    }
    if (*gradcheck) return cmd_gradcheck(cfg, gc_probes, gc_ckpt, gc_batch);
    throw ValidationError("no subcommand selected");
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
}
