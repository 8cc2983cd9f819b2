#include "vgw/experiments.hpp"

#include <cmath>
#include <fstream>

#include "vgw/errors.hpp"
#include "vgw/trajio.hpp"

namespace vgw {

void SnrSettings::validate() const {
  if (dims.empty()) throw ValidationError("snr: need at least one dim");
  for (int d : dims) {
    if (d < 16) throw ValidationError("snr: dim must be >= 16");
  }
  if (iters < 0) throw ValidationError("snr: iters must be >= 0");
  if (log_every < 1) throw ValidationError("snr: log_every must be >= 1");
  if (batch < 1) throw ValidationError("snr: batch must be >= 1");
  if (lr <= 0.0) throw ValidationError("snr: lr must be positive");
  if (solver_steps < 1) throw ValidationError("snr: solver_steps must be >= 1");
  if (episodes < 1 || frames < 5) throw ValidationError("snr: dataset too small");
  if (eval_samples < 1) throw ValidationError("snr: eval_samples must be >= 1");
  if (!run_z && !run_v) throw ValidationError("snr: both arms disabled");
}

namespace {

struct SnrProblem {
  World world;
  Former former;
  Dataset train_data;
  std::vector<Stage1Item> eval_items;
  TrainConfig cfg;

  SnrProblem(const WorldConfig& wc, const ModelConfig& mc, const SnrSettings& s)
      : world(wc), former(mc, TokenLayout{wc.n_special, wc.n_patch}) {
    cfg.lr = s.lr;
    cfg.weight_decay = s.weight_decay;
    cfg.grad_clip_l2 = s.grad_clip_l2;
    cfg.batch_stage1 = s.batch;
    cfg.seed = s.seed;
    train_data = make_dataset(world, s.episodes, s.frames, derive_seed(s.seed, 0xd5e7));
    Dataset heldout =
        make_dataset(world, std::max(1, s.eval_samples / 2), s.frames, derive_seed(s.seed, 0xe0a1));
    Rng eval_rng(derive_seed(s.seed, 0xeea1));
    for (int i = 0; i < s.eval_samples; ++i) {
      eval_items.push_back(sample_stage1(heldout, former.config(), eval_rng));
    }
  }
};

double snr_over_evalset(const SnrProblem& p, const ParamSet& params, bool z_arm,
                        int solver_steps) {
  SolverConfig sc;
  sc.steps = solver_steps;
  double num = 0.0, den = 0.0;
  for (const Stage1Item& item : p.eval_items) {
    const Predictor pred = [&](const Tensor& z_tau, double tau) {
      return p.former.forward_value(params, z_tau, tau, item.cond, item.cond_frames,
                                    item.chunk_frames);
    };
    const Tensor z_hat =
        z_arm ? ode_solve(item.eps, pred, sc) : ode_solve_velocity(item.eps, pred, sc);
    num += sumsq(item.chunk);
    den += sumsq(sub(z_hat, item.chunk));
  }
  if (num <= 0.0) throw NumericError("snr: zero clean signal over the eval set");
  if (den <= 0.0) return kSnrCapDb;
  return std::min(10.0 * std::log10(num / den), kSnrCapDb);
}

SnrArm run_snr_arm(const SnrProblem& p, const SnrSettings& s, int dim, bool z_arm,
                   std::vector<SnrRow>& rows) {
  SnrArm arm;
  arm.parameterization = z_arm ? "z" : "v";
  arm.dim = dim;
  arm.batch_hash = fnv1a_bytes(nullptr, 0);

  ParamSet params = p.former.init_params(derive_seed(s.seed, 0x1417));
  AdamW opt;
  opt.lr = s.lr;
  opt.weight_decay = s.weight_decay;
  opt.init(params);
  Rng rng(derive_seed(s.seed, 0xba7c8));

  const auto log_row = [&](int64_t iteration) {
    SnrRow row;
    row.iteration = iteration;
    row.parameterization = arm.parameterization;
    row.dim = dim;
    row.snr_db = snr_over_evalset(p, params, z_arm, s.solver_steps);
    rows.push_back(row);
  };

  log_row(0);
  for (int64_t it = 1; it <= s.iters; ++it) {
    const std::vector<Stage1Item> batch =
        sample_stage1_batch(p.train_data, p.former.config(), rng, s.batch);
    for (const Stage1Item& item : batch) arm.batch_hash = hash_item(item, arm.batch_hash);
    const BatchEval be = z_arm ? stage1_batch_eval(p.former, params, batch, p.cfg, true)
                               : vpred_batch_eval(p.former, params, batch, p.cfg, true);
    if (!std::isfinite(be.loss) || !std::isfinite(be.grad_norm)) {
      throw NumericError("snr: non-finite loss at iteration " + std::to_string(it));
    }
    std::vector<Tensor> grads = be.grads;
    if (s.grad_clip_l2 > 0.0 && be.grad_norm > s.grad_clip_l2) {
      for (Tensor& t : grads) scale_inplace(t, s.grad_clip_l2 / be.grad_norm);
    }
    opt.step(params, grads);
    if (it % s.log_every == 0 || it == s.iters) log_row(it);
  }
  return arm;
}

}  // namespace

SnrOutcome run_snr_experiment(const SnrSettings& s) {
  s.validate();
  SnrOutcome out;
  for (int dim : s.dims) {
    WorldConfig wc;
    wc.d = dim;
    wc.n_patch = s.n_patch;
    wc.seed = derive_seed(s.seed, static_cast<uint64_t>(dim));
    wc.validate();

    ModelConfig mc;
    mc.d_model = dim;
    mc.n_heads = s.n_heads;
    mc.L_d = s.l_dual;
    mc.L_s = s.l_single;
    mc.validate();

    const SnrProblem p(wc, mc, s);
    if (s.run_z) out.arms.push_back(run_snr_arm(p, s, dim, true, out.rows));
    if (s.run_v) out.arms.push_back(run_snr_arm(p, s, dim, false, out.rows));
  }
  return out;
}

void write_snr_csv(const std::string& path, const SnrOutcome& o,
                   const std::vector<std::string>& meta) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const std::string& line : meta) out << "# " << line << "\n";
  for (const SnrArm& arm : o.arms) {
    out << "# batch_hash " << arm.parameterization << " dim " << arm.dim << ": "
        << hash_hex(arm.batch_hash) << "\n";
  }
  out << "iteration,parameterization,dim,snr_db\n";
  for (const SnrRow& r : o.rows) {
    out << r.iteration << ',' << r.parameterization << ',' << r.dim << ','
        << format_double(r.snr_db) << "\n";
  }
  out.flush();
  if (!out) throw IoError("write failure on '" + path + "'");
}

std::vector<double> rollout_mse_by_horizon(const Former& former, const ParamSet& params,
                                           const Dataset& heldout, const RolloutPlan& plan,
                                           uint64_t rollout_seed) {
  const int k = plan.k;
  if (heldout.episodes.empty()) throw ValidationError("rollout eval: empty dataset");
  if (heldout.frames() < k + plan.horizon) {
    throw ValidationError("rollout eval: episodes need at least k + horizon frames");
  }
  std::vector<double> mse(static_cast<size_t>(plan.horizon), 0.0);
  for (size_t e = 0; e < heldout.episodes.size(); ++e) {
    const Trajectory& traj = heldout.episodes[e];
    std::vector<GeometryState> context(traj.states.begin(), traj.states.begin() + k);
    RolloutPlan ep_plan = plan;
    ep_plan.seed = derive_seed(rollout_seed, static_cast<uint64_t>(e));
    const std::vector<GeometryState> pred = rollout_model(former, params, context, ep_plan);
    for (int h = 1; h <= plan.horizon; ++h) {
      const Tensor& a = pred[static_cast<size_t>(h - 1)].tokens;
      const Tensor& b = traj.states[static_cast<size_t>(k + h - 1)].tokens;
      mse[static_cast<size_t>(h - 1)] +=
          sumsq(sub(a, b)) / static_cast<double>(a.numel()) /
          static_cast<double>(heldout.episodes.size());
    }
  }
  return mse;
}

void ForcingSettings::validate() const {
  world.validate();
  model.validate();
  train.validate();
  if (steps_stage1 < 1 || steps_stage2 < 1) {
    throw ValidationError("forcing: both stages need at least 1 step");
  }
  if (heldout_episodes < 1) throw ValidationError("forcing: need held-out episodes");
  if (horizon < 1) throw ValidationError("forcing: horizon must be >= 1");
  if (heldout_frames < model.k + horizon) {
    throw ValidationError("forcing: heldout_frames must cover k + horizon");
  }
  if (!(static_lambda >= 0.0 && static_lambda <= 1.0)) {
    throw ValidationError("forcing: static_lambda must lie in [0, 1]");
  }
}

ForcingOutcome run_forcing_experiment(const ForcingSettings& s) {
  s.validate();
  const World world(s.world);
  const TokenLayout layout{s.world.n_special, s.world.n_patch};
  const Former former(s.model, layout);
  const Dataset train_data = make_dataset(world, s.train.dataset_episodes, s.train.dataset_frames,
                                          derive_seed(s.train.seed, 0xda7a));
  const Dataset heldout =
      make_dataset(world, s.heldout_episodes, s.heldout_frames, s.heldout_seed_tag);

  RolloutPlan plan;
  plan.k = s.model.k;
  plan.m = s.model.m;
  plan.stride = 1;
  plan.horizon = s.horizon;
  plan.solver.steps = s.rollout_solver_steps;

  ParamSet prefix = former.init_params(s.train.init_seed);
  TrainResult prefix_log = train_stage1(former, prefix, train_data, s.train, s.steps_stage1);

  ForcingOutcome out;

  out.stage1_only.name = "stage1_only";
  out.stage1_only.params = prefix;
  {
    TrainConfig cfg = s.train;
    cfg.seed = derive_seed(s.train.seed, 0xa);
    TrainResult ext =
        train_stage1(former, out.stage1_only.params, train_data, cfg, s.steps_stage2);
    out.stage1_only.log = prefix_log.log;
    out.stage1_only.log.insert(out.stage1_only.log.end(), ext.log.begin(), ext.log.end());
  }
  out.stage1_only.mse_by_horizon =
      rollout_mse_by_horizon(former, out.stage1_only.params, heldout, plan, s.rollout_seed);

  out.curriculum.name = "curriculum";
  out.curriculum.params = prefix;
  {
    TrainConfig cfg = s.train;
    cfg.lambda_schedule.kind = LambdaSchedule::Kind::kLinear;
    TrainResult st2 = train_stage2(former, out.curriculum.params, train_data, cfg, s.steps_stage2);
    out.curriculum.log = prefix_log.log;
    out.curriculum.log.insert(out.curriculum.log.end(), st2.log.begin(), st2.log.end());
  }
  out.curriculum.mse_by_horizon =
      rollout_mse_by_horizon(former, out.curriculum.params, heldout, plan, s.rollout_seed);

  if (s.run_static_arm) {
    out.static_lambda.name = "static_lambda";
    out.static_lambda.params = prefix;
    TrainConfig cfg = s.train;
    cfg.lambda_schedule.kind = LambdaSchedule::Kind::kStatic;
    cfg.lambda_schedule.value = s.static_lambda;
    TrainResult st2 =
        train_stage2(former, out.static_lambda.params, train_data, cfg, s.steps_stage2);
    out.static_lambda.log = prefix_log.log;
    out.static_lambda.log.insert(out.static_lambda.log.end(), st2.log.begin(), st2.log.end());
    out.static_lambda.mse_by_horizon =
        rollout_mse_by_horizon(former, out.static_lambda.params, heldout, plan, s.rollout_seed);
  }
  return out;
}

void MemorizationSettings::validate() const {
  world.validate();
  model.validate();
  train.validate();
  if (steps < 1) throw ValidationError("memorization: steps must be >= 1");
  if (probe_batch < 1) throw ValidationError("memorization: probe_batch must be >= 1");
}

MemorizationOutcome run_memorization(const MemorizationSettings& s) {
  s.validate();
  const World world(s.world);
  const TokenLayout layout{s.world.n_special, s.world.n_patch};
  const Former former(s.model, layout);
  const Dataset data = make_dataset(world, 1, s.train.dataset_frames,
                                    derive_seed(s.train.seed, 0xda7a));

  Rng probe_rng(derive_seed(s.train.seed, 0x9e0be));
  const std::vector<Stage1Item> probe =
      sample_stage1_batch(data, s.model, probe_rng, s.probe_batch);

  MemorizationOutcome out;
  out.params = former.init_params(s.train.init_seed);
  out.initial_loss = stage1_batch_eval(former, out.params, probe, s.train, false).loss;
  TrainResult res = train_stage1(former, out.params, data, s.train, s.steps);
  out.log = res.log;
  out.final_loss = stage1_batch_eval(former, out.params, probe, s.train, false).loss;
  return out;
}

}  // namespace vgw
