#pragma once

#include <string>
#include <vector>

#include "vgw/tensor.hpp"
#include "vgw/toyworld.hpp"

namespace vgw {

// Text formats share one convention: leading '#' comment lines carry metadata
// (config hash, column descriptions, frame indices), then plain data rows.

struct DepthSeries {
  std::vector<int> frames;
  std::vector<Tensor> maps;  // [grid, grid] each
};

struct PointSeries {
  std::vector<int> frames;
  std::vector<Tensor> clouds;  // [n, 3] each
};

struct PoseSeries {
  std::vector<int> frames;
  std::vector<Pose> poses;
};

// One row per frame holding grid*grid row-major depths.
void write_depth_csv(const std::string& path, const std::vector<int>& frames,
                     const std::vector<Tensor>& maps, const std::vector<std::string>& meta);
DepthSeries read_depth_csv(const std::string& path);

// One row per frame: r00..r22 then tx,ty,tz of the world-to-camera transform.
void write_poses_csv(const std::string& path, const std::vector<int>& frames,
                     const std::vector<Pose>& poses, const std::vector<std::string>& meta);
PoseSeries read_poses_csv(const std::string& path);

// One "x y z" line per point, frames separated by "# frame <t>" markers.
void write_points_xyz(const std::string& path, const std::vector<int>& frames,
                      const std::vector<Tensor>& clouds, const std::vector<std::string>& meta);
PointSeries read_points_xyz(const std::string& path);

// Latent frames in the checkpoint container: tensors "tokens" ([T*N, d]) and
// "frame_indices" ([T]), with caller-provided JSON describing the source.
void save_states(const std::string& path, const std::vector<GeometryState>& states,
                 const std::string& config_json);

struct StatesFile {
  std::string config_json;
  std::vector<GeometryState> states;
};

StatesFile load_states(const std::string& path);

// Decoded-geometry text bundle: depth.csv, points.xyz, poses.csv inside dir.
void write_geometry_dir(const std::string& dir, const std::vector<int>& frames,
                        const std::vector<Tensor>& depths, const std::vector<Tensor>& points,
                        const std::vector<Pose>& poses, const std::vector<std::string>& meta);

// Full-precision decimal formatting shared by every writer, so identical
// values round trip to identical bytes.
std::string format_double(double v);

void ensure_dir(const std::string& dir);

}  // namespace vgw
