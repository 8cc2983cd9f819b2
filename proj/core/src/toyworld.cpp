#include "vgw/toyworld.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "vgw/errors.hpp"

namespace vgw {

namespace {

constexpr int kOscDims = 5;
constexpr double kBaseDepth = 1.0;
constexpr double kTanhClip = 1.0 - 1e-15;

double softplus(double x) {
  // Overflow-safe: log(1+e^x) = max(x,0) + log1p(e^-|x|).
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Rows of the result are orthonormal: QR of a seeded Gaussian, transposed.
Tensor orthonormal_rows(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd g(cols, rows);
  for (int j = 0; j < rows; ++j)
    for (int i = 0; i < cols; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(cols, rows);
  Tensor out({rows, cols});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.at(r, c) = q(c, r);
  return out;
}

// Rotation about +Y by `a`, row-major.
Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return Mat3{c, 0, s, 0, 1, 0, -s, 0, c};
}

}  // namespace

Vec3 apply_pose(const Pose& p, const Vec3& x) {
  Vec3 y = mat3_apply(p.R, x);
  for (int i = 0; i < 3; ++i) y[i] += p.t[i];
  return y;
}

Vec3 camera_center(const Pose& p) {
  // x_cam = R x + t == 0  =>  center = -R^T t.
  const Mat3 rt = mat3_transpose(p.R);
  Vec3 c = mat3_apply(rt, p.t);
  for (double& v : c) v = -v;
  return c;
}

Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[static_cast<size_t>(i * 3 + k)] * b[static_cast<size_t>(k * 3 + j)];
      r[static_cast<size_t>(i * 3 + j)] = s;
    }
  return r;
}

Mat3 mat3_transpose(const Mat3& a) {
  return Mat3{a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]};
}

Vec3 mat3_apply(const Mat3& a, const Vec3& x) {
  return Vec3{a[0] * x[0] + a[1] * x[1] + a[2] * x[2],
              a[3] * x[0] + a[4] * x[1] + a[5] * x[2],
              a[6] * x[0] + a[7] * x[1] + a[8] * x[2]};
}

double rotation_geodesic_deg(const Mat3& a, const Mat3& b) {
  // The chordal form 2*asin(|a - b| / 2 sqrt 2) keeps full precision at small
  // angles, where acos of the relative trace loses half the digits; past 90
  // degrees asin saturates, so the trace form takes over there.
  double fro = 0.0;
  for (size_t i = 0; i < 9; ++i) fro += (a[i] - b[i]) * (a[i] - b[i]);
  const double s = std::clamp(std::sqrt(fro) / (2.0 * std::sqrt(2.0)), 0.0, 1.0);
  double angle;
  if (s <= std::sqrt(0.5)) {
    angle = 2.0 * std::asin(s);
  } else {
    const Mat3 rel = mat3_mul(mat3_transpose(a), b);
    const double c = std::clamp((rel[0] + rel[4] + rel[8] - 1.0) * 0.5, -1.0, 1.0);
    angle = std::acos(c);
  }
  return angle * 180.0 / 3.14159265358979323846;
}

double median(std::vector<double> v) {
  if (v.empty()) throw ValidationError("median of empty set");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int WorldConfig::grid() const {
  const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_patch))));
  return g;
}

void WorldConfig::validate() const {
  if (d < manifold_dim) {
    throw ValidationError("world: d (" + std::to_string(d) + ") must be >= manifold_dim (" +
                          std::to_string(manifold_dim) + ")");
  }
  if (n_special != 5) throw ValidationError("world: token layout requires 5 special tokens");
  const int g = grid();
  if (g * g != n_patch || n_patch <= 0) {
    throw ValidationError("world: n_patch (" + std::to_string(n_patch) + ") must be a perfect square");
  }
  if (manifold_dim != kOscDims + 3) {
    throw ValidationError("world: manifold_dim must be 8 (5 oscillators + 3 camera rates)");
  }
  if (fps_dt <= 0.0) throw ValidationError("world: fps_dt must be positive");
}

World::World(WorldConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const int q = cfg_.manifold_dim;
  const int nd = cfg_.tokens() * cfg_.d;
  hidden_ = 2 * q;
  // Output gain keeps per-channel token variance near 1 over an episode.
  gain_ = 2.0 * std::sqrt(static_cast<double>(nd) / static_cast<double>(hidden_));

  Rng rng(derive_seed(cfg_.seed, 0x70791d));
  first_map_ = orthonormal_rows(q, hidden_, rng);
  first_bias_ = Tensor({hidden_});
  for (double& v : first_bias_.data) v = rng.uniform(-0.2, 0.2);
  final_map_ = orthonormal_rows(hidden_, nd, rng);
  final_bias_ = Tensor::gaussian({nd}, rng, 0.5);

  // Coupled oscillator: conjugate a block rotation with a random basis so
  // every coordinate participates. Plane frequencies sit in [0.1, 0.5]
  // rad/frame; one axis is fixed and acts as a constant scene parameter.
  const double w1 = rng.uniform(0.1, 0.5);
  const double w2 = rng.uniform(0.1, 0.5);
  Tensor basis = orthonormal_rows(kOscDims, kOscDims, rng);
  Tensor block({kOscDims, kOscDims});
  block.at(0, 0) = std::cos(w1);
  block.at(0, 1) = -std::sin(w1);
  block.at(1, 0) = std::sin(w1);
  block.at(1, 1) = std::cos(w1);
  block.at(2, 2) = std::cos(w2);
  block.at(2, 3) = -std::sin(w2);
  block.at(3, 2) = std::sin(w2);
  block.at(3, 3) = std::cos(w2);
  block.at(4, 4) = 1.0;
  Tensor bt({kOscDims, kOscDims});
  for (int i = 0; i < kOscDims; ++i)
    for (int j = 0; j < kOscDims; ++j) bt.at(i, j) = basis.at(j, i);
  osc_update_ = matmul_value(matmul_value(bt, block), basis);

  // Pinhole rays with unit z, so depth is plain z-depth.
  const int g = cfg_.grid();
  rays_ = Tensor({cfg_.n_patch, 3});
  for (int r = 0; r < g; ++r) {
    for (int c = 0; c < g; ++c) {
      const int p = r * g + c;
      rays_.at(p, 0) = (static_cast<double>(c) + 0.5) / static_cast<double>(g) - 0.5;
      rays_.at(p, 1) = (static_cast<double>(r) + 0.5) / static_cast<double>(g) - 0.5;
      rays_.at(p, 2) = 1.0;
    }
  }

  depth_w_ = Tensor::gaussian({cfg_.n_patch, q}, rng, 1.0 / std::sqrt(static_cast<double>(q)));
  scale_w_ = Tensor::gaussian({q}, rng, 1.0);
}

Tensor World::initial_state(uint64_t episode_seed) const {
  Rng rng(derive_seed(cfg_.seed, mix64(episode_seed)));
  Tensor s({cfg_.manifold_dim});
  for (int i = 0; i < kOscDims; ++i) s.data[static_cast<size_t>(i)] = rng.normal() * 0.8;
  // Camera rates: yaw rate (rad/s), forward speed, vertical speed.
  const double yaw_sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  s.data[kOscDims + 0] = yaw_sign * rng.uniform(0.3, 1.2);
  s.data[kOscDims + 1] = rng.uniform(0.5, 1.5);
  s.data[kOscDims + 2] = rng.uniform(-0.2, 0.2);
  return s;
}

Tensor World::step_state(const Tensor& s) const {
  Tensor next = s;
  for (int i = 0; i < kOscDims; ++i) {
    double acc = 0.0;
    for (int j = 0; j < kOscDims; ++j) acc += osc_update_.at(i, j) * s.data[static_cast<size_t>(j)];
    next.data[static_cast<size_t>(i)] = acc;
  }
  return next;  // camera-rate dims are constant in time
}

GeometryState World::encode(const Tensor& s, int frame_index) const {
  const int q = cfg_.manifold_dim;
  if (s.shape != Shape{q}) {
    throw ValidationError("encode: state must have shape [" + std::to_string(q) + "], got " +
                          shape_str(s.shape));
  }
  const int nd = cfg_.tokens() * cfg_.d;
  std::vector<double> u(static_cast<size_t>(hidden_), 0.0);
  for (int h = 0; h < hidden_; ++h) {
    double acc = first_bias_.data[static_cast<size_t>(h)];
    for (int i = 0; i < q; ++i) acc += s.data[static_cast<size_t>(i)] * first_map_.at(i, h);
    u[static_cast<size_t>(h)] = std::tanh(acc);
  }
  Tensor tokens({cfg_.tokens(), cfg_.d});
  for (int c = 0; c < nd; ++c) {
    double acc = final_bias_.data[static_cast<size_t>(c)];
    for (int h = 0; h < hidden_; ++h) acc += gain_ * u[static_cast<size_t>(h)] * final_map_.at(h, c);
    tokens.data[static_cast<size_t>(c)] = acc;
  }
  return GeometryState{std::move(tokens), frame_index};
}

Tensor World::recover_state(const Tensor& tokens) const {
  const int nd = cfg_.tokens() * cfg_.d;
  if (tokens.numel() != nd) {
    throw ValidationError("recover_state: tokens must have " + std::to_string(nd) +
                          " entries, got " + shape_str(tokens.shape));
  }
  const int q = cfg_.manifold_dim;
  std::vector<double> u(static_cast<size_t>(hidden_), 0.0);
  for (int h = 0; h < hidden_; ++h) {
    double acc = 0.0;
    for (int c = 0; c < nd; ++c)
      acc += (tokens.data[static_cast<size_t>(c)] - final_bias_.data[static_cast<size_t>(c)]) *
             final_map_.at(h, c);
    acc /= gain_;
    // Off-manifold inputs (predictions) may leave tanh's range; clamp so the
    // readout stays finite instead of silently masking rows.
    acc = std::clamp(acc, -kTanhClip, kTanhClip);
    u[static_cast<size_t>(h)] = std::atanh(acc);
  }
  Tensor s({q});
  for (int i = 0; i < q; ++i) {
    double acc = 0.0;
    for (int h = 0; h < hidden_; ++h)
      acc += (u[static_cast<size_t>(h)] - first_bias_.data[static_cast<size_t>(h)]) * first_map_.at(i, h);
    s.data[static_cast<size_t>(i)] = acc;
  }
  return s;
}

double World::scale_statistic(const Tensor& s) const {
  double acc = 0.0;
  for (int i = 0; i < cfg_.manifold_dim; ++i)
    acc += scale_w_.data[static_cast<size_t>(i)] * s.data[static_cast<size_t>(i)];
  return std::exp(acc / static_cast<double>(cfg_.manifold_dim));
}

Tensor World::depth_map(const Tensor& s, double scene_scale) const {
  const int g = cfg_.grid();
  Tensor depth({g, g});
  for (int p = 0; p < cfg_.n_patch; ++p) {
    double acc = 0.0;
    for (int i = 0; i < cfg_.manifold_dim; ++i) acc += depth_w_.at(p, i) * s.data[static_cast<size_t>(i)];
    depth.data[static_cast<size_t>(p)] = scene_scale * (kBaseDepth + softplus(acc));
  }
  return depth;
}

Tensor World::point_map(const Tensor& depth) const {
  Tensor pts({cfg_.n_patch, 3});
  for (int p = 0; p < cfg_.n_patch; ++p) {
    const double z = depth.data[static_cast<size_t>(p)];
    pts.at(p, 0) = rays_.at(p, 0) * z;
    pts.at(p, 1) = rays_.at(p, 1) * z;
    pts.at(p, 2) = z;
  }
  return pts;
}

Pose World::pose_at(const Tensor& s, int frame_index, double scene_scale) const {
  const double yaw_rate = s.data[kOscDims + 0];
  const double v_fwd = s.data[kOscDims + 1];
  const double v_up = s.data[kOscDims + 2];
  const double t = static_cast<double>(frame_index) * cfg_.fps_dt;
  const double theta = yaw_rate * t;

  // Constant-twist motion about +Y with body velocity (0, v_up, v_fwd):
  // closed-form screw integration. The camera looks along +Z of its frame.
  double cx, cz;
  if (std::abs(yaw_rate) > 1e-9) {
    cx = (v_fwd / yaw_rate) * (1.0 - std::cos(theta));
    cz = (v_fwd / yaw_rate) * std::sin(theta);
  } else {
    cx = 0.0;
    cz = v_fwd * t;
  }
  const Vec3 center{scene_scale * cx, scene_scale * v_up * t, scene_scale * cz};

  Pose pose;
  pose.R = mat3_transpose(rot_y(theta));  // world-to-camera
  const Vec3 rc = mat3_apply(pose.R, center);
  pose.t = Vec3{-rc[0], -rc[1], -rc[2]};
  return pose;
}

Trajectory World::generate(uint64_t episode_seed, int frames) const {
  if (frames < 2) {
    throw ValidationError("generate: need at least 2 frames, got " + std::to_string(frames));
  }
  Trajectory traj;
  Tensor s = initial_state(episode_seed);
  std::vector<double> stats;
  for (int t = 0; t < frames; ++t) {
    traj.intrinsic.push_back(s);
    stats.push_back(scale_statistic(s));
    if (t + 1 < frames) s = step_state(s);
  }
  const double scene_scale = median(stats);
  for (int t = 0; t < frames; ++t) {
    const Tensor& st = traj.intrinsic[static_cast<size_t>(t)];
    traj.states.push_back(encode(st, t));
    Tensor depth = depth_map(st, scene_scale);
    traj.points.push_back(point_map(depth));
    traj.depths.push_back(std::move(depth));
    traj.poses.push_back(pose_at(st, t, scene_scale));
  }
  return traj;
}

DecodedGeometry World::decode(std::span<const GeometryState> states) const {
  if (states.empty()) throw ValidationError("decode: empty state set");
  DecodedGeometry out;
  std::vector<double> stats;
  for (const GeometryState& gs : states) {
    Tensor s = recover_state(gs.tokens);
    stats.push_back(scale_statistic(s));
    out.intrinsic.push_back(std::move(s));
    out.frame_indices.push_back(gs.frame_index);
  }
  out.scene_scale = median(stats);
  for (size_t i = 0; i < out.intrinsic.size(); ++i) {
    const Tensor& s = out.intrinsic[i];
    Tensor depth = depth_map(s, out.scene_scale);
    out.points.push_back(point_map(depth));
    out.depths.push_back(std::move(depth));
    out.poses.push_back(pose_at(s, out.frame_indices[i], out.scene_scale));
  }
  return out;
}

double World::manifold_residual_sq(const Tensor& tokens) const {
  const int nd = cfg_.tokens() * cfg_.d;
  if (tokens.numel() != nd) {
    throw ValidationError("manifold_residual_sq: tokens must have " + std::to_string(nd) +
                          " entries");
  }
  // Project onto the affine image {final_bias + w * final_map}: the residual
  // is (I - A^T A)(y - b) with A's rows orthonormal.
  std::vector<double> centered(static_cast<size_t>(nd));
  for (int c = 0; c < nd; ++c)
    centered[static_cast<size_t>(c)] =
        tokens.data[static_cast<size_t>(c)] - final_bias_.data[static_cast<size_t>(c)];
  std::vector<double> coeff(static_cast<size_t>(hidden_), 0.0);
  for (int h = 0; h < hidden_; ++h) {
    double acc = 0.0;
    for (int c = 0; c < nd; ++c) acc += centered[static_cast<size_t>(c)] * final_map_.at(h, c);
    coeff[static_cast<size_t>(h)] = acc;
  }
  double res = 0.0;
  for (int c = 0; c < nd; ++c) {
    double proj = 0.0;
    for (int h = 0; h < hidden_; ++h) proj += coeff[static_cast<size_t>(h)] * final_map_.at(h, c);
    const double r = centered[static_cast<size_t>(c)] - proj;
    res += r * r;
  }
  return res;
}

double World::lipschitz_bound() const {
  // first map: orthonormal rows (gain 1), tanh 1-Lipschitz, final map gain_.
  return gain_;
}

}  // namespace vgw
