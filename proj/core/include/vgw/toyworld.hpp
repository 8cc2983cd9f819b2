#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "vgw/tensor.hpp"

namespace vgw {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major

// World-to-camera rigid transform: x_cam = R * x_world + t.
struct Pose {
  Mat3 R{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 t{0, 0, 0};
};

Vec3 apply_pose(const Pose& p, const Vec3& x);
Vec3 camera_center(const Pose& p);
Mat3 mat3_mul(const Mat3& a, const Mat3& b);
Mat3 mat3_transpose(const Mat3& a);
Vec3 mat3_apply(const Mat3& a, const Vec3& x);
double rotation_geodesic_deg(const Mat3& a, const Mat3& b);

struct WorldConfig {
  int d = 256;           // token width
  int n_patch = 16;      // patch tokens, laid out on a square grid
  int n_special = 5;     // camera token + register tokens
  int manifold_dim = 8;  // intrinsic state width
  uint64_t seed = 0;
  double fps_dt = 0.1;  // seconds per frame

  int tokens() const { return n_special + n_patch; }
  int grid() const;  // side of the patch grid
  void validate() const;
};

// One frame of the latent world: a fixed-layout token matrix plus its frame
// index. Token row 0 is the camera token, rows 1..4 are registers, the rest
// are patch tokens in row-major grid order.
struct GeometryState {
  Tensor tokens;  // [tokens(), d]
  int frame_index = 0;
};

struct Trajectory {
  std::vector<GeometryState> states;
  std::vector<Tensor> intrinsic;  // per frame [manifold_dim]
  std::vector<Tensor> depths;     // per frame [grid, grid]
  std::vector<Tensor> points;     // per frame [n_patch, 3], camera-frame
  std::vector<Pose> poses;        // per frame, world-to-camera

  int frames() const { return static_cast<int>(states.size()); }
};

struct DecodedGeometry {
  std::vector<int> frame_indices;
  std::vector<Tensor> intrinsic;
  std::vector<Tensor> depths;
  std::vector<Tensor> points;
  std::vector<Pose> poses;
  double scene_scale = 1.0;
};

// Deterministic latent world. A low-dimensional intrinsic state evolves by a
// coupled-oscillator update plus a constant-twist camera, and each frame is
// embedded into token space through a fixed smooth injective map with a
// closed-form left inverse. Geometry (depths, camera-frame points, poses) is
// read out of the intrinsic state in closed form; one scene scale, the median
// over frames of a per-frame scale statistic, multiplies all of it, which
// couples the decode of each frame to every other frame in the batch.
class World {
 public:
  explicit World(WorldConfig cfg);

  const WorldConfig& config() const { return cfg_; }

  // Forward generation. episode_seed selects initial conditions and camera
  // rates; the embedding and dynamics are shared across episodes.
  Trajectory generate(uint64_t episode_seed, int frames) const;

  // Intrinsic state -> tokens and its exact left inverse.
  GeometryState encode(const Tensor& s, int frame_index) const;
  Tensor recover_state(const Tensor& tokens) const;

  // Joint decode of an arbitrary set of frames (clean or predicted).
  DecodedGeometry decode(std::span<const GeometryState> states) const;

  // Squared distance from `tokens` to the image of the embedding's final
  // affine map.
  double manifold_residual_sq(const Tensor& tokens) const;

  // Upper bound on ||g(s+d) - g(s)|| / ||d|| from the affine map gains.
  double lipschitz_bound() const;

  double scale_statistic(const Tensor& s) const;

 private:
  Tensor step_state(const Tensor& s) const;
  Tensor initial_state(uint64_t episode_seed) const;
  Tensor depth_map(const Tensor& s, double scene_scale) const;
  Tensor point_map(const Tensor& depth) const;
  Pose pose_at(const Tensor& s, int frame_index, double scene_scale) const;

  WorldConfig cfg_;
  int hidden_ = 0;    // embedding bottleneck width
  double gain_ = 1.0; // output gain of the final affine map
  Tensor first_map_;  // [manifold_dim, hidden], orthonormal rows
  Tensor first_bias_; // [hidden]
  Tensor final_map_;  // [hidden, tokens*d], orthonormal rows
  Tensor final_bias_; // [tokens*d]
  Tensor osc_update_; // [osc, osc] rotation applied per frame
  Tensor rays_;       // [n_patch, 3], unit-z rays
  Tensor depth_w_;    // [n_patch, manifold_dim]
  Tensor scale_w_;    // [manifold_dim]
};

double median(std::vector<double> v);

}  // namespace vgw
