#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vgw/checkpoint.hpp"
#include "vgw/curriculum.hpp"
#include "vgw/errors.hpp"
#include "vgw/evalmetrics.hpp"
#include "vgw/experiments.hpp"
#include "vgw/flowformer.hpp"
#include "vgw/flowmatch.hpp"
#include "vgw/rollout.hpp"
#include "vgw/runconfig.hpp"
#include "vgw/tensor.hpp"
#include "vgw/toyworld.hpp"
#include "vgw/trajio.hpp"

using namespace vgw;

namespace {

std::string g_vgw;

std::string scratch_dir() {
  const std::string dir =
      (std::filesystem::temp_directory_path() / "vgw_acceptance").string();
  std::filesystem::create_directories(dir);
  return dir;
}

std::string fresh_dir(const std::string& name) {
  const std::string dir = scratch_dir() + "/" + name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failure on '" + path + "'");
}

struct CmdResult {
  int code = -1;
  std::string output;
};

CmdResult run_cli(const std::string& args) {
  static int invocation = 0;
  const std::string out_path =
      scratch_dir() + "/cmd_" + std::to_string(invocation++) + ".txt";
  const std::string cmd = "\"" + g_vgw + "\" " + args + " > \"" + out_path + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  CmdResult res;
  if (rc == -1) {
    res.output = "failed to launch the tool";
    return res;
  }
  res.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  res.output = read_file(out_path);
  return res;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::istringstream is(line);
  std::string cell;
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  return cells;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return std::string(buf);
}

std::string small_config_json(int d) {
  std::ostringstream os;
  os << "{\n"
     << "  \"world\": {\"d\": " << d << ", \"n_patch\": 4, \"seed\": 5},\n"
     << "  \"model\": {\"d_model\": " << d
     << ", \"n_heads\": 4, \"l_dual\": 1, \"l_single\": 1, \"mlp_ratio\": 2, \"k\": 2, \"m\": 2},\n"
     << "  \"train\": {\"dataset_episodes\": 2, \"dataset_frames\": 8, \"batch_stage1\": 2,\n"
     << "            \"batch_stage2\": 2, \"rollout_solver_steps\": 2},\n"
     << "  \"rollout\": {\"horizon\": 3, \"solver_steps\": 3}\n"
     << "}\n";
  return os.str();
}

WorldConfig small_world(int d, uint64_t seed) {
  WorldConfig wc;
  wc.d = d;
  wc.n_patch = 4;
  wc.seed = seed;
  return wc;
}

ModelConfig small_model(int d) {
  ModelConfig mc;
  mc.d_model = d;
  mc.n_heads = 4;
  mc.L_d = 1;
  mc.L_s = 1;
  mc.mlp_ratio = 2;
  mc.k = 2;
  mc.m = 2;
  return mc;
}

ParamSet random_params(const Former& former, uint64_t seed, double stddev) {
  ParamSet p = former.init_params(3);
  Rng rng(derive_seed(seed, 0x9e));
  for (Tensor& t : p.tensors) t = Tensor::gaussian(t.shape, rng, stddev);
  return p;
}

Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return Mat3{c, -s, 0, s, c, 0, 0, 0, 1};
}

Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return Mat3{1, 0, 0, 0, c, -s, 0, s, c};
}

Vec3 vadd(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }

Vec3 vneg(const Vec3& a) { return {-a[0], -a[1], -a[2]}; }

Pose pose_at_center(const Mat3& R, const Vec3& center) {
  Pose p;
  p.R = R;
  p.t = vneg(mat3_apply(R, center));
  return p;
}

struct Check {
  bool ok = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// 1. Full stage-1 gradient check through the command-line tool.

Check c01_gradcheck() {
  const std::string dir = fresh_dir("c01");
  write_file(dir + "/config.json", small_config_json(64));
  const auto t0 = std::chrono::steady_clock::now();
  const CmdResult res = run_cli("--config " + dir + "/config.json gradcheck --probes 200");
  const double secs = seconds_since(t0);

  unsigned long probes = 0;
  double max_rel = -1.0;
  for (const std::string& line : split_lines(res.output)) {
    if (std::sscanf(line.c_str(), "gradcheck: %lu probes, max rel err %lf", &probes, &max_rel) ==
        2) {
      break;
    }
  }
  Check c;
  c.ok = res.code == 0 && probes >= 200 && max_rel >= 0.0 && max_rel <= 1e-4 && secs < 120.0;
  c.detail = "max rel err " + fmt(max_rel) + " over " + std::to_string(probes) + " probes in " +
             fmt(secs) + " s (limits 1e-4, 120 s)";
  if (res.code != 0) c.detail += "; exit code " + std::to_string(res.code);
  return c;
}

// ---------------------------------------------------------------------------
// 2. Fresh init predicts exactly zero, so the batch loss must equal the
// closed form computed from the same clean targets and flow times.

Check c02_zero_init_loss() {
  const WorldConfig wc = small_world(64, 17);
  const World world(wc);
  const ModelConfig mc = small_model(64);
  const Former former(mc, TokenLayout{wc.n_special, wc.n_patch});
  TrainConfig tc;
  tc.batch_stage1 = 8;

  const Dataset data = make_dataset(world, 2, 8, derive_seed(17, 0xfeed));
  Rng rng(derive_seed(17, 0xabc));
  const std::vector<Stage1Item> batch = sample_stage1_batch(data, mc, rng, tc.batch_stage1);

  const ParamSet params = former.init_params(tc.init_seed);
  const double measured = stage1_batch_eval(former, params, batch, tc, false).loss;

  const double floor = (1.0 - kTauClamp) * (1.0 - kTauClamp);
  double analytic = 0.0;
  for (const Stage1Item& item : batch) {
    const double denom = std::max((1.0 - item.tau) * (1.0 - item.tau), floor);
    analytic += sumsq(item.chunk) / static_cast<double>(item.chunk.numel()) / denom;
  }
  analytic /= static_cast<double>(batch.size());

  const double diff = std::abs(measured - analytic);
  const double tol = 1e-10 * std::max(1.0, std::abs(analytic));
  Check c;
  c.ok = diff <= tol;
  c.detail = "measured " + fmt(measured) + ", closed form " + fmt(analytic) + ", |diff| " +
             fmt(diff) + " (tol " + fmt(tol) + ")";
  return c;
}

// ---------------------------------------------------------------------------
// 3. Single-episode overfit drives the probe loss below 1% of its start.

Check c03_memorization() {
  MemorizationSettings ms;
  ms.world = small_world(64, 23);
  ms.model = small_model(64);
  ms.train.lr = 1e-3;
  ms.train.weight_decay = 0.0;
  ms.train.batch_stage1 = 8;
  ms.train.dataset_frames = 8;
  ms.steps = 1500;
  ms.probe_batch = 16;

  const auto t0 = std::chrono::steady_clock::now();
  const MemorizationOutcome out = run_memorization(ms);
  const double secs = seconds_since(t0);
  const double ratio = out.final_loss / out.initial_loss;
  Check c;
  c.ok = ratio < 0.01 && secs < 900.0;
  c.detail = "loss " + fmt(out.initial_loss) + " -> " + fmt(out.final_loss) + " (ratio " +
             fmt(ratio) + ", limit 0.01) after " + std::to_string(ms.steps) + " steps in " +
             fmt(secs) + " s";
  return c;
}

// ---------------------------------------------------------------------------
// 4. Clean-target regression keeps a higher latent SNR than velocity
// regression on matched batches, with a clear margin at the wide dim.

Check c04_snr() {
  const std::string dir = fresh_dir("c04");
  const std::string csv = dir + "/snr.csv";
  const int64_t iters = 160;
  const auto t0 = std::chrono::steady_clock::now();
  const CmdResult res = run_cli("snr --dims 64 --dims 256 --iters " + std::to_string(iters) +
                                " --log-every 20 --out " + csv);
  const double secs = seconds_since(t0);
  Check c;
  if (res.code != 0) {
    c.detail = "tool exit code " + std::to_string(res.code);
    return c;
  }

  // (dim, iteration) -> {z snr, v snr}
  std::map<std::pair<int, int64_t>, std::map<std::string, double>> table;
  for (const std::string& line : split_lines(read_file(csv))) {
    if (line.empty() || line[0] == '#' || line[0] == 'i') continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != 4) continue;
    table[{std::stoi(cells[2]), std::stoll(cells[0])}][cells[1]] = std::stod(cells[3]);
  }

  bool ordered = true;
  double min_gap = 1e300;
  double final_gap_256 = -1e300;
  for (const auto& [key, arms] : table) {
    if (key.second <= iters / 10) continue;
    if (!arms.count("z") || !arms.count("v")) {
      ordered = false;
      continue;
    }
    const double gap = arms.at("z") - arms.at("v");
    min_gap = std::min(min_gap, gap);
    if (gap <= 0.0) ordered = false;
    if (key.first == 256 && key.second == iters) final_gap_256 = gap;
  }
  c.ok = ordered && final_gap_256 >= 3.0;
  c.detail = "min z-v gap after warmup " + fmt(min_gap) + " dB, final gap at d=256 " +
             fmt(final_gap_256) + " dB (needs > 0 and >= 3) in " + fmt(secs) + " s";
  return c;
}

// ---------------------------------------------------------------------------
// 5 + 6. One shared three-arm run: stage-1 only, stage-2 with the linear
// ramp, stage-2 with a static mixing weight, all at the same step budget.

class ForcingLab {
 public:
  const ForcingOutcome& outcome() {
    if (attempted_ && !out_) throw ValidationError(error_);
    if (!out_) {
      attempted_ = true;
      ForcingSettings s;
      s.world = small_world(64, 29);
      s.model = small_model(64);
      s.train.lr = 1e-3;
      s.train.dataset_frames = 12;
      try {
        const auto t0 = std::chrono::steady_clock::now();
        out_ = run_forcing_experiment(s);
        secs_ = seconds_since(t0);
      } catch (const std::exception& e) {
        error_ = std::string("three-arm run failed: ") + e.what();
        throw ValidationError(error_);
      }
    }
    return *out_;
  }

  double seconds() const { return secs_; }

 private:
  bool attempted_ = false;
  std::optional<ForcingOutcome> out_;
  std::string error_;
  double secs_ = 0.0;
};

Check c05_forcing(ForcingLab& lab) {
  const ForcingOutcome& out = lab.outcome();
  const double s1 = out.stage1_only.mse_by_horizon.back();
  const double cur = out.curriculum.mse_by_horizon.back();
  Check c;
  c.ok = cur <= 0.9 * s1;
  c.detail = "horizon-8 latent mse: two-stage " + fmt(cur) + " vs one-stage " + fmt(s1) +
             " (needs >= 10% lower) in " + fmt(lab.seconds()) + " s";
  return c;
}

Check c06_static_lambda(ForcingLab& lab) {
  const ForcingOutcome& out = lab.outcome();
  const double cur = out.curriculum.mse_by_horizon.back();
  const double stat = out.static_lambda.mse_by_horizon.back();
  Check c;
  c.ok = cur < stat;
  c.detail = "horizon-8 latent mse: ramped " + fmt(cur) + " vs static 0.7 " + fmt(stat);
  return c;
}

// ---------------------------------------------------------------------------
// 7. With the mixing weight at zero the stage-2 step must reduce to the
// teacher-forced loss, and the rollout leg must carry no gradient.

Check c07_stage2_reductions() {
  const WorldConfig wc = small_world(32, 37);
  const World world(wc);
  const ModelConfig mc = small_model(32);
  const Former former(mc, TokenLayout{wc.n_special, wc.n_patch});
  TrainConfig tc;
  tc.rollout_solver_steps = 4;

  const Dataset data = make_dataset(world, 2, 8, derive_seed(37, 0xfeed));
  Rng rng(derive_seed(37, 0xabc));
  const Stage2Sample s = sample_stage2(data, mc, tc.tau_mid, rng);

  const ParamSet main_p = random_params(former, 51, 0.05);
  const ParamSet roll_a = random_params(former, 52, 0.08);
  const ParamSet roll_b = random_params(former, 53, 0.08);

  const FlowSample fs = corrupt(s.target_chunk, s.eps_sup, s.tau);
  const Tensor pred =
      former.forward_value(main_p, fs.z_tau, s.tau, s.shift_cond, s.shift_frames, s.target_frames);
  const double teacher_forced = chunk_mse(former, pred, s.target_chunk, tc.predict_registers);

  const Stage2Eval ev_a = stage2_objective(former, main_p, roll_a, s, 0.0, tc, true);
  const Stage2Eval ev_b = stage2_objective(former, main_p, roll_b, s, 0.0, tc, true);

  const double reduction_diff = std::abs(ev_a.loss - teacher_forced);
  const double loss_probe = std::abs(ev_a.loss - ev_b.loss);
  double grad_probe = 0.0;
  for (size_t i = 0; i < ev_a.grads.tensors.size(); ++i) {
    grad_probe = std::max(grad_probe, max_abs_diff(ev_a.grads.tensors[i], ev_b.grads.tensors[i]));
  }

  Check c;
  c.ok = reduction_diff <= 1e-12 && loss_probe == 0.0 && grad_probe == 0.0;
  c.detail = "teacher-forced |diff| " + fmt(reduction_diff) +
             " (tol 1e-12); rollout-leg probe: loss delta " + fmt(loss_probe) + ", grad delta " +
             fmt(grad_probe) + " (both must be 0)";
  return c;
}

// ---------------------------------------------------------------------------
// 8. Metric implementations against closed forms and exhaustive oracles.

PointCloud random_cloud(int n, Rng& rng) {
  PointCloud c;
  for (int i = 0; i < n; ++i) {
    c.points.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
  }
  return c;
}

double vdist(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

Check c08_metric_oracles() {
  std::vector<std::string> failures;
  Rng rng(61);

  {
    const PointCloud src = random_cloud(40, rng);
    const double scale = 1.7;
    const Mat3 R = mat3_mul(rot_z(0.6), rot_x(0.3));
    const Vec3 t{0.4, -2.0, 1.25};
    PointCloud dst;
    for (const Vec3& p : src.points) {
      Vec3 q = mat3_apply(R, p);
      dst.points.push_back(vadd({scale * q[0], scale * q[1], scale * q[2]}, t));
    }
    const AlignResult ar = umeyama_align(src, dst, true);
    double r_err = 0.0;
    for (int i = 0; i < 9; ++i) {
      r_err = std::max(r_err, std::abs(ar.transform.R[static_cast<size_t>(i)] -
                                       R[static_cast<size_t>(i)]));
    }
    double t_err = 0.0;
    for (int i = 0; i < 3; ++i) {
      t_err = std::max(t_err, std::abs(ar.transform.t[static_cast<size_t>(i)] -
                                       t[static_cast<size_t>(i)]));
    }
    if (ar.rms > 1e-9 || std::abs(ar.transform.scale - scale) > 1e-9 || r_err > 1e-9 ||
        t_err > 1e-9) {
      failures.push_back("similarity recovery off (rms " + fmt(ar.rms) + ")");
    }
    PointCloud line_a, line_b;
    for (int i = 0; i < 6; ++i) {
      line_a.points.push_back({0.5 * i, 1.0 * i, -0.25 * i});
      line_b.points.push_back({0.5 * i + 1.0, 1.0 * i, -0.25 * i});
    }
    bool rejected = false;
    try {
      umeyama_align(line_a, line_b, true);
    } catch (const ValidationError&) {
      rejected = true;
    }
    if (!rejected) failures.push_back("collinear alignment not rejected");
  }

  double chamfer_diff = 0.0;
  {
    const PointCloud pred = random_cloud(50, rng);
    const PointCloud gt = random_cloud(60, rng);
    const ChamferStats cs = chamfer_acc_comp(pred, gt);
    double acc = 0.0, comp = 0.0;
    for (const Vec3& p : pred.points) {
      double best = 1e300;
      for (const Vec3& g : gt.points) best = std::min(best, vdist(p, g));
      acc += best / pred.size();
    }
    for (const Vec3& g : gt.points) {
      double best = 1e300;
      for (const Vec3& p : pred.points) best = std::min(best, vdist(g, p));
      comp += best / gt.size();
    }
    chamfer_diff = std::max({std::abs(cs.accuracy - acc), std::abs(cs.completeness - comp),
                             std::abs(cs.chamfer - (acc + comp) / 2.0)});
    if (chamfer_diff > 1e-12) {
      failures.push_back("chamfer off exhaustive oracle by " + fmt(chamfer_diff));
    }
  }

  {
    const PointCloud cloud = random_cloud(30, rng);
    const std::vector<int> got = farthest_point_sampling(cloud, 10, 0);
    std::vector<int> ref = {0};
    std::vector<double> min_d(30, 1e300);
    while (static_cast<int>(ref.size()) < 10) {
      for (int i = 0; i < 30; ++i) {
        min_d[static_cast<size_t>(i)] =
            std::min(min_d[static_cast<size_t>(i)],
                     vdist(cloud.points[static_cast<size_t>(i)],
                           cloud.points[static_cast<size_t>(ref.back())]));
      }
      int best = -1;
      double best_d = -1.0;
      for (int i = 0; i < 30; ++i) {
        bool taken = false;
        for (int r : ref) taken = taken || r == i;
        if (taken) continue;
        if (min_d[static_cast<size_t>(i)] > best_d) {
          best_d = min_d[static_cast<size_t>(i)];
          best = i;
        }
      }
      ref.push_back(best);
    }
    if (got != ref) failures.push_back("farthest-point selection disagrees with brute force");
  }

  {
    const std::vector<double> gt = {1.0, 2.0, 3.0, 4.0};
    std::vector<double> pred;
    for (double g : gt) pred.push_back(1.2 * g);
    const DepthStats a = absrel_delta1(pred, gt, 1.25);
    pred.clear();
    for (double g : gt) pred.push_back(1.3 * g);
    const DepthStats b = absrel_delta1(pred, gt, 1.25);
    if (std::abs(a.absrel - 0.2) > 1e-12 || a.delta1 != 1.0 ||
        std::abs(b.absrel - 0.3) > 1e-12 || b.delta1 != 0.0) {
      failures.push_back("depth ratio cases off (absrel " + fmt(a.absrel) + ", " + fmt(b.absrel) +
                         ")");
    }
  }

  {
    std::vector<Pose> gt;
    for (int i = 0; i < 10; ++i) {
      const double a = 0.25 * i;
      gt.push_back(pose_at_center(rot_z(0.3 * i), {std::cos(a), std::sin(a), 0.15 * i}));
    }
    const TrajErrors same = ate_rte_rre(gt, gt);
    if (same.ate > 1e-12 || same.rte > 1e-12 || same.rre_deg > 1e-12) {
      failures.push_back("identical trajectories not at zero error");
    }

    std::vector<Pose> shifted;
    const Vec3 c{2.0, -1.0, 0.5};
    for (const Pose& p : gt) shifted.push_back(pose_at_center(p.R, vadd(camera_center(p), c)));
    const TrajErrors trans = ate_rte_rre(shifted, gt);
    if (trans.ate > 1e-9 || trans.rte > 1e-9 || trans.rre_deg > 1e-9) {
      failures.push_back("translated trajectory errors exceed 1e-9 (ate " + fmt(trans.ate) + ")");
    }

    const Mat3 Q = mat3_mul(rot_z(0.8), rot_x(0.35));
    std::vector<Pose> rotated;
    for (const Pose& p : gt) {
      rotated.push_back(pose_at_center(mat3_mul(p.R, mat3_transpose(Q)),
                                       vadd(mat3_apply(Q, camera_center(p)), c)));
    }
    const TrajErrors rot = ate_rte_rre(rotated, gt);
    if (rot.ate > 1e-9 || rot.rte > 1e-9 || rot.rre_deg > 1e-9) {
      failures.push_back("rotated trajectory errors too large (ate " + fmt(rot.ate) + ", rre " +
                         fmt(rot.rre_deg) + ")");
    }
  }

  Check c;
  c.ok = failures.empty();
  if (c.ok) {
    c.detail = "alignment, chamfer (|diff| " + fmt(chamfer_diff) +
               "), sampling, depth ratios, and trajectory errors all within tolerance";
  } else {
    c.detail = failures.front();
    for (size_t i = 1; i < failures.size(); ++i) c.detail += "; " + failures[i];
  }
  return c;
}

// ---------------------------------------------------------------------------
// 9. The sampler grid lands exactly on a constant prediction, and plain
// Euler segments converge at first order on a state-dependent predictor.

Check c09_ode() {
  Rng rng(67);
  const Tensor target = Tensor::gaussian({18, 32}, rng, 1.0);
  const Tensor eps = Tensor::gaussian({18, 32}, rng, 1.0);
  const Predictor constant = [&](const Tensor&, double) { return target; };

  double exact_err = 0.0;
  for (int steps : {1, 5, 20}) {
    SolverConfig sc;
    sc.steps = steps;
    exact_err = std::max(exact_err, max_abs_diff(ode_solve(eps, constant, sc), target));
  }

  // z_hat = z/2 makes the flow dz/dtau = z/(2 tau), solved by z1 * sqrt(tau).
  const Tensor z1 = Tensor::gaussian({4, 6}, rng, 1.0);
  const Predictor halving = [](const Tensor& z_tau, double) { return scaled(z_tau, 0.5); };
  const Tensor expected = scaled(z1, std::sqrt(0.5));
  std::vector<double> errs;
  for (int steps : {16, 32, 64}) {
    SolverConfig sc;
    sc.steps = steps;
    sc.tau_start = 1.0;
    sc.tau_end = 0.5;
    errs.push_back(max_abs_diff(ode_solve(z1, halving, sc), expected));
  }
  const double r1 = errs[0] / errs[1];
  const double r2 = errs[1] / errs[2];

  Check c;
  c.ok = exact_err <= 1e-12 && r1 > 1.6 && r1 < 2.4 && r2 > 1.6 && r2 < 2.4;
  c.detail = "constant landing err " + fmt(exact_err) + " (tol 1e-12); halving-step error ratios " +
             fmt(r1) + ", " + fmt(r2) + " (first order is 2)";
  return c;
}

// ---------------------------------------------------------------------------
// 10. Bytes: identical seeds give identical artifacts, containers survive a
// save/load/save cycle unchanged, and corruption is caught.

Check c10_determinism() {
  const std::string dir = fresh_dir("c10");
  write_file(dir + "/config.json", small_config_json(32));
  const std::string common = "--config " + dir + "/config.json --seed 42 ";
  std::vector<std::string> failures;

  for (const char* name : {"ga", "gb"}) {
    const CmdResult r =
        run_cli(common + "gen --episodes 1 --frames 8 --out " + dir + "/" + name);
    if (r.code != 0) failures.push_back(std::string("gen failed in ") + name);
  }
  if (failures.empty() &&
      (read_file(dir + "/ga/manifest.json") != read_file(dir + "/gb/manifest.json") ||
       read_file(dir + "/ga/episode_0000/states.bin") !=
           read_file(dir + "/gb/episode_0000/states.bin"))) {
    failures.push_back("generation is not byte-stable");
  }

  for (const char* name : {"ta", "tb"}) {
    const CmdResult r =
        run_cli(common + "train --stage 1 --steps 3 --out " + dir + "/" + name);
    if (r.code != 0) failures.push_back(std::string("train failed in ") + name);
  }
  if (failures.empty() &&
      read_file(dir + "/ta/final.vgwf") != read_file(dir + "/tb/final.vgwf")) {
    failures.push_back("training is not byte-stable");
  }

  for (const char* name : {"ra", "rb"}) {
    const CmdResult r = run_cli(common + "rollout --ckpt " + dir + "/ta/final.vgwf --dataset " +
                                dir + "/ga --episode 0 --horizon 3 --out " + dir + "/" + name);
    if (r.code != 0) failures.push_back(std::string("rollout failed in ") + name);
  }
  if (failures.empty() &&
      read_file(dir + "/ra/states.bin") != read_file(dir + "/rb/states.bin")) {
    failures.push_back("rollout is not byte-stable");
  }

  if (failures.empty()) {
    const LoadedCheckpoint ck = load_checkpoint(dir + "/ta/final.vgwf");
    save_checkpoint(dir + "/resaved.vgwf", ck.config_json, ck.params);
    if (read_file(dir + "/ta/final.vgwf") != read_file(dir + "/resaved.vgwf")) {
      failures.push_back("save/load/save changed bytes");
    }

    std::string bytes = read_file(dir + "/ta/final.vgwf");
    bytes[bytes.size() / 2] ^= 0x01;
    write_file(dir + "/broken.vgwf", bytes);
    bool caught = false;
    try {
      load_checkpoint(dir + "/broken.vgwf");
    } catch (const ValidationError& e) {
      caught = std::string(e.what()).find("CRC mismatch") != std::string::npos;
    }
    if (!caught) failures.push_back("corruption not detected by the checksum");
  }

  Check c;
  c.ok = failures.empty();
  if (c.ok) {
    c.detail =
        "generation, training, and rollout byte-stable; round trip unchanged; corruption caught";
  } else {
    c.detail = failures.front();
    for (size_t i = 1; i < failures.size(); ++i) c.detail += "; " + failures[i];
  }
  return c;
}

// ---------------------------------------------------------------------------
// 11. Appending forecast frames moves the decoded geometry of the context,
// because the decoder shares one scale statistic across presented frames.

Check c11_joint_decode() {
  const WorldConfig wc = small_world(32, 31);
  const World world(wc);
  const ModelConfig mc = small_model(32);
  const Former former(mc, TokenLayout{wc.n_special, wc.n_patch});

  TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch_stage1 = 4;
  tc.dataset_frames = 10;
  tc.dataset_episodes = 2;
  const Dataset data = make_dataset(world, tc.dataset_episodes, tc.dataset_frames,
                                    derive_seed(31, 0xfeed));
  ParamSet params = former.init_params(tc.init_seed);
  train_stage1(former, params, data, tc, 30);

  const Trajectory episode = world.generate(derive_seed(31, 0xe9), 10);
  double roundtrip = 0.0;
  const DecodedGeometry whole = joint_decode(world, episode.states);
  for (size_t i = 0; i < episode.depths.size(); ++i) {
    roundtrip = std::max(roundtrip, max_abs_diff(whole.depths[i], episode.depths[i]));
  }

  const std::vector<GeometryState> context(episode.states.begin(), episode.states.begin() + 2);
  RolloutPlan plan;
  plan.k = 2;
  plan.m = 2;
  plan.horizon = 4;
  plan.solver.steps = 20;
  plan.seed = 77;
  const std::vector<GeometryState> predicted = rollout_model(former, params, context, plan);
  const std::vector<GeometryState> full = assemble_full(context, predicted);

  const DecodedGeometry alone = joint_decode(world, context);
  const DecodedGeometry coupled = joint_decode(world, full);
  const double moved = max_abs_diff(alone.depths[0], coupled.depths[0]);

  Check c;
  c.ok = roundtrip <= 1e-9 && moved > 1e-9;
  c.detail = "clean-episode decode round trip " + fmt(roundtrip) +
             " (tol 1e-9); context depth moved by " + fmt(moved) +
             " once forecasts were appended (scale " + fmt(alone.scene_scale) + " -> " +
             fmt(coupled.scene_scale) + ")";
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <path to the command-line tool>\n");
    return 2;
  }
  g_vgw = argv[1];

  ForcingLab lab;
  struct Criterion {
    int id;
    const char* label;
    std::function<Check()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "stage-1 gradient check (d=64, 200 probes)", c01_gradcheck},
      {2, "zero-init loss closed form", c02_zero_init_loss},
      {3, "single-episode memorization", c03_memorization},
      {4, "clean-target vs velocity latent snr", c04_snr},
      {5, "two-stage rollout mse at horizon 8", [&] { return c05_forcing(lab); }},
      {6, "ramped vs static mixing weight", [&] { return c06_static_lambda(lab); }},
      {7, "stage-2 teacher-forced reduction, detached rollout", c07_stage2_reductions},
      {8, "geometry metric oracles", c08_metric_oracles},
      {9, "ode exactness and convergence order", c09_ode},
      {10, "determinism, persistence, corruption detection", c10_determinism},
      {11, "joint decoding couples context to forecasts", c11_joint_decode},
  };

  int failures = 0;
  for (const Criterion& cr : criteria) {
    Check c;
    try {
      c = cr.run();
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail = std::string("exception: ") + e.what();
    }
    if (!c.ok) ++failures;
    std::printf("[%s] %2d %s: %s\n", c.ok ? "PASS" : "FAIL", cr.id, cr.label, c.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/11 criteria passed\n", 11 - failures);
  return failures == 0 ? 0 : 1;
}
