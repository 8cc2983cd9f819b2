#include "vgw/curriculum.hpp"

#include <cmath>
#include <cstring>

#include "vgw/errors.hpp"

namespace vgw {

namespace {

// Mask that zeroes register-token rows (rows 1..4 of each frame).
Tensor register_mask(const TokenLayout& layout, int frames, int d) {
  const int n = layout.tokens();
  Tensor mask = Tensor::full({static_cast<int64_t>(frames) * n, d}, 1.0);
  for (int f = 0; f < frames; ++f) {
    for (int r = 1; r < layout.n_special; ++r) {
      double* row = mask.data.data() + (static_cast<int64_t>(f) * n + r) * d;
      std::fill(row, row + d, 0.0);
    }
  }
  return mask;
}

double loss_weight(double tau, bool weighted) {
  if (!weighted) return 1.0;
  const double one_minus = std::max(1.0 - tau, 1.0 - kTauClamp);
  return 1.0 / (one_minus * one_minus);
}

bool stage_weighted(LossWeighting w, int stage) {
  switch (w) {
    case LossWeighting::kPerStage: return stage == 1;
    case LossWeighting::kWeightedBoth: return true;
    case LossWeighting::kPlainBoth: return false;
  }
  return stage == 1;
}

// Builds the forward graph plus the (optionally weighted, optionally
// register-masked) squared-error loss against `target`.
struct LossGraph {
  Graph g;
  Bound bound;
  NodeId loss = -1;
};

void build_loss(LossGraph& lg, const Former& former, const ParamSet& params, const Tensor& z_tau,
                double tau, const Tensor& cond, const std::vector<int>& cond_frames,
                const std::vector<int>& chunk_frames, const Tensor& target, bool weighted,
                bool predict_registers, bool with_grads) {
  lg.bound = former.bind(lg.g, params, with_grads);
  const NodeId zt = lg.g.leaf(&z_tau);
  const NodeId c = lg.g.leaf(&cond);
  const NodeId out = former.forward(lg.g, lg.bound, zt, tau, c, cond_frames, chunk_frames);
  const NodeId tgt = lg.g.leaf(&target);
  NodeId diff = lg.g.add(out, lg.g.scale(tgt, -1.0));
  int64_t denom = target.numel();
  if (!predict_registers) {
    const int frames = static_cast<int>(chunk_frames.size());
    Tensor mask = register_mask(former.layout(), frames, former.config().d_model);
    denom = 0;
    for (double v : mask.data) denom += v != 0.0 ? 1 : 0;
    diff = lg.g.mul(diff, lg.g.constant(std::move(mask)));
  }
  lg.loss = lg.g.scale(lg.g.sum_sq(diff), loss_weight(tau, weighted) / static_cast<double>(denom));
}

void accumulate_grads(std::vector<Tensor>& acc, const GradMap& grads, const ParamSet& params,
                      double scale) {
  if (acc.empty()) {
    acc.reserve(params.tensors.size());
    for (const Tensor& t : params.tensors) acc.push_back(Tensor(t.shape));
  }
  // GradMap preserves leaf registration order == ParamSet order.
  for (size_t i = 0; i < grads.size(); ++i) {
    axpy(acc[i], scale, grads[i].grad);
  }
}

double global_norm(const std::vector<Tensor>& grads) {
  double s = 0.0;
  for (const Tensor& t : grads) s += sumsq(t);
  return std::sqrt(s);
}

}  // namespace

void TauMidSampler::validate() const {
  if (!(lo >= 0.0 && hi <= 1.0 && lo <= hi)) {
    throw ValidationError("tau_mid sampler: need 0 <= lo <= hi <= 1");
  }
}

void LambdaSchedule::validate() const {
  if (kind == Kind::kStatic && !(value >= 0.0 && value <= 1.0)) {
    throw ValidationError("lambda schedule: static value must lie in [0, 1]");
  }
}

double lambda_at(const LambdaSchedule& sched, int64_t step, int64_t total_steps) {
  sched.validate();
  if (sched.kind == LambdaSchedule::Kind::kStatic) return sched.value;
  if (total_steps < 2) {
    throw ValidationError("lambda schedule: linear ramp needs at least 2 steps, got " +
                          std::to_string(total_steps));
  }
  if (step < 0 || step >= total_steps) {
    throw ValidationError("lambda schedule: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(total_steps) + ")");
  }
  return static_cast<double>(step) / static_cast<double>(total_steps - 1);
}

void TrainConfig::validate() const {
  if (lr <= 0.0) throw ValidationError("train: lr must be positive");
  if (weight_decay < 0.0) throw ValidationError("train: weight_decay must be >= 0");
  if (batch_stage1 < 1 || batch_stage2 < 1) throw ValidationError("train: batch sizes must be >= 1");
  if (steps_stage1 < 0 || steps_stage2 < 0) throw ValidationError("train: step counts must be >= 0");
  if (dataset_episodes < 1 || dataset_frames < 2) {
    throw ValidationError("train: dataset needs >= 1 episode and >= 2 frames");
  }
  if (rollout_solver_steps < 1) throw ValidationError("train: rollout_solver_steps must be >= 1");
  tau_mid.validate();
  lambda_schedule.validate();
}

int Dataset::frames() const {
  return episodes.empty() ? 0 : episodes.front().frames();
}

Dataset make_dataset(const World& world, int episodes, int frames, uint64_t seed_tag) {
  Dataset d;
  d.episodes.reserve(static_cast<size_t>(episodes));
  for (int i = 0; i < episodes; ++i) {
    d.episodes.push_back(world.generate(derive_seed(seed_tag, static_cast<uint64_t>(i)), frames));
  }
  return d;
}

Tensor flatten_frames(const Trajectory& traj, int first, int count) {
  if (first < 0 || count < 1 || first + count > traj.frames()) {
    throw ValidationError("flatten_frames: window [" + std::to_string(first) + ", " +
                          std::to_string(first + count) + ") outside episode of " +
                          std::to_string(traj.frames()) + " frames");
  }
  const Tensor& t0 = traj.states[static_cast<size_t>(first)].tokens;
  const int64_t n = t0.shape[0], d = t0.shape[1];
  Tensor out({static_cast<int64_t>(count) * n, d});
  for (int f = 0; f < count; ++f) {
    const Tensor& tok = traj.states[static_cast<size_t>(first + f)].tokens;
    std::copy(tok.data.begin(), tok.data.end(), out.data.begin() + static_cast<int64_t>(f) * n * d);
  }
  return out;
}

Stage1Item sample_stage1(const Dataset& data, const ModelConfig& mc, Rng& rng) {
  if (data.episodes.empty()) throw ValidationError("sample_stage1: empty dataset");
  const int window = mc.k + mc.m;
  const int ep = rng.uniform_int(static_cast<int>(data.episodes.size()));
  const Trajectory& traj = data.episodes[static_cast<size_t>(ep)];
  if (traj.frames() < window) {
    throw ValidationError("sample_stage1: episode of " + std::to_string(traj.frames()) +
                          " frames is shorter than the window " + std::to_string(window));
  }
  const int start = rng.uniform_int(traj.frames() - window + 1);
  Stage1Item item;
  item.cond = flatten_frames(traj, start, mc.k);
  item.chunk = flatten_frames(traj, start + mc.k, mc.m);
  item.tau = rng.uniform(0.0, kTauClamp);
  item.eps = Tensor::gaussian(item.chunk.shape, rng);
  for (int i = 0; i < mc.k; ++i) item.cond_frames.push_back(start + i);
  for (int i = 0; i < mc.m; ++i) item.chunk_frames.push_back(start + mc.k + i);
  return item;
}

std::vector<Stage1Item> sample_stage1_batch(const Dataset& data, const ModelConfig& mc, Rng& rng,
                                            int batch) {
  std::vector<Stage1Item> items;
  items.reserve(static_cast<size_t>(batch));
  for (int i = 0; i < batch; ++i) items.push_back(sample_stage1(data, mc, rng));
  return items;
}

MixedCondition mix_condition(const Tensor& clean_chunk, const Tensor& predicted_chunk,
                             double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ValidationError("mix_condition: lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  if (!clean_chunk.same_shape(predicted_chunk)) {
    throw ValidationError("mix_condition: shape mismatch " + shape_str(clean_chunk.shape) +
                          " vs " + shape_str(predicted_chunk.shape));
  }
  MixedCondition out;
  out.lambda = lambda;
  out.rollout_error_norm = std::sqrt(sumsq(sub(predicted_chunk, clean_chunk)));
  if (lambda == 0.0) {
    out.tokens = clean_chunk;
  } else if (lambda == 1.0) {
    out.tokens = predicted_chunk;
  } else {
    out.tokens = lerp(clean_chunk, predicted_chunk, lambda);
  }
  return out;
}

Tensor make_partial_rollout(const Former& former, const ParamSet& params, const Tensor& cond,
                            const std::vector<int>& cond_frames,
                            const std::vector<int>& chunk_frames, const Tensor& eps,
                            double tau_mid, int solver_steps) {
  if (!(tau_mid >= 0.0 && tau_mid <= 1.0)) {
    throw ValidationError("make_partial_rollout: tau_mid must lie in [0, 1]");
  }
  SolverConfig sc;
  sc.steps = solver_steps;
  sc.tau_start = 1.0;
  sc.tau_end = tau_mid;
  const Predictor pred = [&](const Tensor& z_tau, double tau) {
    return former.forward_value(params, z_tau, tau, cond, cond_frames, chunk_frames);
  };
  return ode_solve(eps, pred, sc);
}

void AdamW::init(const ParamSet& params) {
  t = 0;
  m.clear();
  v.clear();
  for (const Tensor& p : params.tensors) {
    m.push_back(Tensor(p.shape));
    v.push_back(Tensor(p.shape));
  }
}

void AdamW::step(ParamSet& params, const std::vector<Tensor>& grads) {
  if (grads.size() != params.tensors.size() || m.size() != params.tensors.size()) {
    throw ValidationError("adamw: gradient/state layout mismatch");
  }
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    Tensor& p = params.tensors[i];
    const Tensor& g = grads[i];
    for (size_t j = 0; j < p.data.size(); ++j) {
      double& mj = m[i].data[j];
      double& vj = v[i].data[j];
      mj = beta1 * mj + (1.0 - beta1) * g.data[j];
      vj = beta2 * vj + (1.0 - beta2) * g.data[j] * g.data[j];
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      p.data[j] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p.data[j]);
    }
  }
}

double chunk_mse(const Former& former, const Tensor& pred, const Tensor& target,
                 bool predict_registers) {
  if (!pred.same_shape(target)) throw ValidationError("chunk_mse: shape mismatch");
  if (predict_registers) {
    return sumsq(sub(pred, target)) / static_cast<double>(target.numel());
  }
  const int n = former.layout().tokens();
  const int d = former.config().d_model;
  const int frames = static_cast<int>(target.shape[0] / n);
  Tensor mask = register_mask(former.layout(), frames, d);
  double acc = 0.0;
  int64_t kept = 0;
  for (size_t i = 0; i < target.data.size(); ++i) {
    if (mask.data[i] == 0.0) continue;
    const double dv = pred.data[i] - target.data[i];
    acc += dv * dv;
    ++kept;
  }
  return acc / static_cast<double>(kept);
}

uint64_t fnv1a_bytes(const void* data, size_t bytes, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t hash_item(const Stage1Item& item, uint64_t h) {
  h = fnv1a_bytes(item.cond.data.data(), item.cond.data.size() * sizeof(double), h);
  h = fnv1a_bytes(item.chunk.data.data(), item.chunk.data.size() * sizeof(double), h);
  h = fnv1a_bytes(item.eps.data.data(), item.eps.data.size() * sizeof(double), h);
  h = fnv1a_bytes(&item.tau, sizeof(item.tau), h);
  return h;
}

namespace {

BatchEval batch_eval(const Former& former, const ParamSet& params,
                     const std::vector<Stage1Item>& batch, const TrainConfig& cfg, bool weighted,
                     bool velocity_target, bool with_grads) {
  if (batch.empty()) throw ValidationError("batch eval: empty batch");
  BatchEval out;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const Stage1Item& item : batch) {
    const FlowSample fs = corrupt(item.chunk, item.eps, item.tau);
    const Tensor target = velocity_target ? sub(item.eps, item.chunk) : item.chunk;
    LossGraph lg;
    build_loss(lg, former, params, fs.z_tau, item.tau, item.cond, item.cond_frames,
               item.chunk_frames, target, weighted, cfg.predict_registers, with_grads);
    out.loss += inv_b * lg.g.value(lg.loss).data[0];
    if (with_grads) {
      GradMap grads = lg.g.backward(lg.loss);
      accumulate_grads(out.grads, grads, params, inv_b);
    }
  }
  out.grad_norm = global_norm(out.grads);
  return out;
}

void clip_grads(std::vector<Tensor>& grads, double clip, double norm) {
  if (clip > 0.0 && norm > clip) {
    const double s = clip / norm;
    for (Tensor& t : grads) scale_inplace(t, s);
  }
}

}  // namespace

BatchEval stage1_batch_eval(const Former& former, const ParamSet& params,
                            const std::vector<Stage1Item>& batch, const TrainConfig& cfg,
                            bool with_grads) {
  return batch_eval(former, params, batch, cfg, stage_weighted(cfg.loss_weighting, 1), false,
                    with_grads);
}

BatchEval vpred_batch_eval(const Former& former, const ParamSet& params,
                           const std::vector<Stage1Item>& batch, const TrainConfig& cfg,
                           bool with_grads) {
  return batch_eval(former, params, batch, cfg, false, true, with_grads);
}

TrainResult train_stage1(const Former& former, ParamSet& params, const Dataset& data,
                         const TrainConfig& cfg, int64_t steps, const StepSink& sink,
                         const AbortSink& abort_sink) {
  cfg.validate();
  TrainResult res;
  Rng rng(derive_seed(cfg.seed, 0x51a6e1));
  AdamW opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  opt.init(params);
  ParamSet prior = abort_sink ? params : ParamSet{};
  for (int64_t step = 0; step < steps; ++step) {
    const std::vector<Stage1Item> batch =
        sample_stage1_batch(data, former.config(), rng, cfg.batch_stage1);
    if (abort_sink) prior = params;
    BatchEval so = stage1_batch_eval(former, params, batch, cfg, true);
    if (!std::isfinite(so.loss) || !std::isfinite(so.grad_norm)) {
      if (abort_sink) abort_sink(step, prior);
      throw NumericError("stage 1: non-finite loss at step " + std::to_string(step));
    }
    clip_grads(so.grads, cfg.grad_clip_l2, so.grad_norm);
    opt.step(params, so.grads);

    TrainLogRow row;
    row.step = step;
    row.stage = 1;
    row.lambda = 0.0;
    double tau_acc = 0.0;
    for (const Stage1Item& item : batch) tau_acc += item.tau;
    row.tau_mean = tau_acc / static_cast<double>(batch.size());
    row.loss = so.loss;
    row.grad_norm = so.grad_norm;
    res.log.push_back(row);
    res.final_loss = so.loss;
    if (sink) sink(row, params);
  }
  return res;
}

Stage2Sample sample_stage2(const Dataset& data, const ModelConfig& mc, const TauMidSampler& mid,
                           Rng& rng) {
  if (data.episodes.empty()) throw ValidationError("sample_stage2: empty dataset");
  const int window = mc.k + mc.m + 1;
  const int ep = rng.uniform_int(static_cast<int>(data.episodes.size()));
  const Trajectory& traj = data.episodes[static_cast<size_t>(ep)];
  if (traj.frames() < window) {
    throw ValidationError("sample_stage2: episode of " + std::to_string(traj.frames()) +
                          " frames is shorter than the window " + std::to_string(window));
  }
  const int start = rng.uniform_int(traj.frames() - window + 1);

  Stage2Sample s;
  s.context = flatten_frames(traj, start, mc.k);
  s.rollout_chunk = flatten_frames(traj, start + mc.k, mc.m);
  s.target_chunk = flatten_frames(traj, start + mc.k + 1, mc.m);
  s.shift_cond = flatten_frames(traj, start + 1, mc.k);
  for (int i = 0; i < mc.k; ++i) s.context_frames.push_back(start + i);
  for (int i = 0; i < mc.m; ++i) s.rollout_frames.push_back(start + mc.k + i);
  for (int i = 0; i < mc.k; ++i) s.shift_frames.push_back(start + 1 + i);
  for (int i = 0; i < mc.m; ++i) s.target_frames.push_back(start + mc.k + 1 + i);
  s.eps_roll = Tensor::gaussian(s.rollout_chunk.shape, rng);
  s.tau_mid = mid.sample(rng);
  s.tau = rng.uniform(0.0, kTauClamp);
  s.eps_sup = Tensor::gaussian(s.target_chunk.shape, rng);
  return s;
}

Stage2Eval stage2_objective(const Former& former, const ParamSet& main_params,
                            const ParamSet& rollout_params, const Stage2Sample& s, double lambda,
                            const TrainConfig& cfg, bool with_grads) {
  const ModelConfig& mc = former.config();
  const int n = former.layout().tokens();
  const int64_t frame_elems = static_cast<int64_t>(n) * mc.d_model;

  Stage2Eval ev;
  // Partial rollout of the first future chunk, conditions fully clean. The
  // result is data: gradients never flow through this pass.
  const Tensor partial =
      make_partial_rollout(former, rollout_params, s.context, s.context_frames, s.rollout_frames,
                           s.eps_roll, s.tau_mid, cfg.rollout_solver_steps);
  MixedCondition mixed = mix_condition(s.rollout_chunk, partial, lambda);
  ev.rollout_error_norm = mixed.rollout_error_norm;

  // Next condition: clean frames [f1, f_{k-1}] plus the mixed first future
  // frame f_k.
  Tensor cond = s.shift_cond;
  std::copy(mixed.tokens.data.begin(), mixed.tokens.data.begin() + frame_elems,
            cond.data.end() - frame_elems);
  ev.condition = cond;

  const FlowSample fs = corrupt(s.target_chunk, s.eps_sup, s.tau);
  const bool weighted = stage_weighted(cfg.loss_weighting, 2);
  LossGraph lg;
  build_loss(lg, former, main_params, fs.z_tau, s.tau, cond, s.shift_frames, s.target_frames,
             s.target_chunk, weighted, cfg.predict_registers, with_grads);
  ev.loss = lg.g.value(lg.loss).data[0];
  if (with_grads) {
    GradMap grads = lg.g.backward(lg.loss);
    ev.grads.names = main_params.names;
    for (size_t i = 0; i < grads.size(); ++i) ev.grads.tensors.push_back(std::move(grads[i].grad));
  }
  return ev;
}

TrainResult train_stage2(const Former& former, ParamSet& params, const Dataset& data,
                         const TrainConfig& cfg, int64_t steps, const StepSink& sink,
                         const AbortSink& abort_sink) {
  cfg.validate();
  TrainResult res;
  Rng rng(derive_seed(cfg.seed, 0x51a6e2));
  AdamW opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  opt.init(params);
  ParamSet prior = abort_sink ? params : ParamSet{};
  const double inv_b = 1.0 / static_cast<double>(cfg.batch_stage2);
  for (int64_t step = 0; step < steps; ++step) {
    const double lam = lambda_at(cfg.lambda_schedule, step, steps);
    if (abort_sink) prior = params;

    double loss_acc = 0.0, tau_acc = 0.0, roll_acc = 0.0;
    std::vector<Tensor> grads;
    for (int bi = 0; bi < cfg.batch_stage2; ++bi) {
      const Stage2Sample s = sample_stage2(data, former.config(), cfg.tau_mid, rng);
      Stage2Eval ev = stage2_objective(former, params, params, s, lam, cfg, true);
      loss_acc += inv_b * ev.loss;
      tau_acc += inv_b * s.tau;
      roll_acc += inv_b * ev.rollout_error_norm;
      if (grads.empty()) {
        for (const Tensor& t : params.tensors) grads.push_back(Tensor(t.shape));
      }
      for (size_t i = 0; i < grads.size(); ++i) axpy(grads[i], inv_b, ev.grads.tensors[i]);
    }
    const double gnorm = global_norm(grads);
    if (!std::isfinite(loss_acc) || !std::isfinite(gnorm)) {
      if (abort_sink) abort_sink(step, prior);
      throw NumericError("stage 2: non-finite loss at step " + std::to_string(step));
    }
    clip_grads(grads, cfg.grad_clip_l2, gnorm);
    opt.step(params, grads);

    TrainLogRow row;
    row.step = step;
    row.stage = 2;
    row.lambda = lam;
    row.tau_mean = tau_acc;
    row.loss = loss_acc;
    row.grad_norm = gnorm;
    row.rollout_err = roll_acc;
    res.log.push_back(row);
    res.final_loss = loss_acc;
    if (sink) sink(row, params);
  }
  return res;
}

}  // namespace vgw
