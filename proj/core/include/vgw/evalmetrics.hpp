#pragma once

#include <vector>

#include "vgw/toyworld.hpp"

namespace vgw {

struct PointCloud {
  std::vector<Vec3> points;

  int size() const { return static_cast<int>(points.size()); }
};

struct DepthStats {
  double absrel = 0.0;
  double delta1 = 0.0;
};

// absrel = mean |pred - gt| / gt; delta1 = fraction with max(pred/gt, gt/pred)
// below the threshold. Ground truth must be strictly positive (invalid pixels
// are masked out before the call).
DepthStats absrel_delta1(const std::vector<double>& pred, const std::vector<double>& gt,
                         double threshold = 1.25);
DepthStats absrel_delta1(const Tensor& pred, const Tensor& gt, double threshold = 1.25);

// x -> scale * R * x + t with R orthonormal and det +1.
struct SimilarityTransform {
  double scale = 1.0;
  Mat3 R{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 t{0, 0, 0};

  Vec3 apply(const Vec3& x) const;
  void validate() const;
};

struct AlignResult {
  SimilarityTransform transform;
  double rms = 0.0;  // root-mean-square residual after alignment
};

// Least-squares similarity (or rigid, when with_scale is false) mapping source
// onto target, with the determinant-sign correction for reflections. Collinear
// or coincident configurations are rejected as degenerate.
AlignResult umeyama_align(const PointCloud& source, const PointCloud& target, bool with_scale);

// Greedy max-min subset selection. Starts at `start` (default 0 keeps results
// deterministic); ties go to the lowest index; count >= n returns every index
// in selection order.
std::vector<int> farthest_point_sampling(const PointCloud& cloud, int count, int start = 0);

struct ChamferStats {
  double accuracy = 0.0;      // mean over pred of nearest-neighbor distance to gt
  double completeness = 0.0;  // mean over gt of nearest-neighbor distance to pred
  double chamfer = 0.0;       // (accuracy + completeness) / 2
};

// Distances are unsquared Euclidean; chamfer is the mean of the two means.
ChamferStats chamfer_acc_comp(const PointCloud& pred, const PointCloud& gt);

struct TrajErrors {
  double ate = 0.0;      // RMS of aligned camera-center residuals
  double rte = 0.0;      // RMS of consecutive relative-translation errors
  double rre_deg = 0.0;  // mean geodesic angle of consecutive relative-rotation errors
};

// Camera centers are similarity-aligned first; collinear trajectories, which
// the similarity fit cannot orient, fall back to a translation-only alignment
// so straight paths remain evaluable. Relative errors use consecutive frame
// pairs at stride 1.
TrajErrors ate_rte_rre(const std::vector<Pose>& pred, const std::vector<Pose>& gt);

}  // namespace vgw
