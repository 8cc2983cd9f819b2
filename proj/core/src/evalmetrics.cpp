#include "vgw/evalmetrics.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vgw/errors.hpp"

namespace vgw {

DepthStats absrel_delta1(const std::vector<double>& pred, const std::vector<double>& gt,
                         double threshold) {
  if (pred.size() != gt.size()) {
    throw ValidationError("depth metrics: size mismatch " + std::to_string(pred.size()) + " vs " +
                          std::to_string(gt.size()));
  }
  if (gt.empty()) throw ValidationError("depth metrics: empty input");
  if (threshold <= 1.0) throw ValidationError("depth metrics: threshold must exceed 1");
  double absrel = 0.0;
  int64_t hits = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (!(gt[i] > 0.0)) {
      throw ValidationError("depth metrics: nonpositive ground truth at index " +
                            std::to_string(i));
    }
    absrel += std::abs(pred[i] - gt[i]) / gt[i];
    const double ratio = std::max(pred[i] / gt[i], gt[i] / pred[i]);
    if (ratio < threshold) ++hits;
  }
  DepthStats s;
  s.absrel = absrel / static_cast<double>(gt.size());
  s.delta1 = static_cast<double>(hits) / static_cast<double>(gt.size());
  return s;
}

DepthStats absrel_delta1(const Tensor& pred, const Tensor& gt, double threshold) {
  if (!pred.same_shape(gt)) {
    throw ValidationError("depth metrics: shape mismatch " + shape_str(pred.shape) + " vs " +
                          shape_str(gt.shape));
  }
  return absrel_delta1(pred.data, gt.data, threshold);
}

Vec3 SimilarityTransform::apply(const Vec3& x) const {
  Vec3 y = mat3_apply(R, x);
  for (int i = 0; i < 3; ++i) y[i] = scale * y[i] + t[i];
  return y;
}

void SimilarityTransform::validate() const {
  if (!(scale > 0.0)) throw ValidationError("similarity: scale must be positive");
  const Mat3 rtr = mat3_mul(mat3_transpose(R), R);
  double dev = 0.0;
  for (int i = 0; i < 9; ++i) {
    const double id = (i % 4 == 0) ? 1.0 : 0.0;
    dev = std::max(dev, std::abs(rtr[static_cast<size_t>(i)] - id));
  }
  const double det = R[0] * (R[4] * R[8] - R[5] * R[7]) - R[1] * (R[3] * R[8] - R[5] * R[6]) +
                     R[2] * (R[3] * R[7] - R[4] * R[6]);
  if (dev > 1e-9 || std::abs(det - 1.0) > 1e-9) {
    throw ValidationError("similarity: rotation is not special orthogonal");
  }
}

namespace {

using EMat3 = Eigen::Matrix3d;
using EVec3 = Eigen::Vector3d;

EVec3 to_eigen(const Vec3& v) { return EVec3(v[0], v[1], v[2]); }

struct CloudStats {
  EVec3 mean_src, mean_tgt;
  double var_src = 0.0;  // mean squared deviation of the source
  EMat3 cross;           // (1/n) sum of (tgt - mean_tgt)(src - mean_src)^T
};

CloudStats cloud_stats(const PointCloud& source, const PointCloud& target) {
  const int n = source.size();
  CloudStats st;
  st.mean_src.setZero();
  st.mean_tgt.setZero();
  for (int i = 0; i < n; ++i) {
    st.mean_src += to_eigen(source.points[static_cast<size_t>(i)]);
    st.mean_tgt += to_eigen(target.points[static_cast<size_t>(i)]);
  }
  st.mean_src /= n;
  st.mean_tgt /= n;
  st.cross.setZero();
  for (int i = 0; i < n; ++i) {
    const EVec3 xs = to_eigen(source.points[static_cast<size_t>(i)]) - st.mean_src;
    const EVec3 xt = to_eigen(target.points[static_cast<size_t>(i)]) - st.mean_tgt;
    st.var_src += xs.squaredNorm();
    st.cross += xt * xs.transpose();
  }
  st.var_src /= n;
  st.cross /= n;
  return st;
}

SimilarityTransform from_eigen(double scale, const EMat3& R, const EVec3& t) {
  SimilarityTransform out;
  out.scale = scale;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out.R[static_cast<size_t>(3 * r + c)] = R(r, c);
    out.t[static_cast<size_t>(r)] = t(r);
  }
  return out;
}

double alignment_rms(const PointCloud& source, const PointCloud& target,
                     const SimilarityTransform& tf) {
  double acc = 0.0;
  for (int i = 0; i < source.size(); ++i) {
    const Vec3 y = tf.apply(source.points[static_cast<size_t>(i)]);
    const Vec3& g = target.points[static_cast<size_t>(i)];
    for (int k = 0; k < 3; ++k) acc += (y[k] - g[k]) * (y[k] - g[k]);
  }
  return std::sqrt(acc / source.size());
}

void check_finite_cloud(const PointCloud& c, const char* what) {
  for (const Vec3& p : c.points) {
    for (double v : p) {
      if (!std::isfinite(v)) throw ValidationError(std::string(what) + ": non-finite coordinate");
    }
  }
}

// Similarity fit with a translation-only fallback when the cross-covariance
// cannot pin down a rotation (all points collinear or coincident).
AlignResult align_with_fallback(const PointCloud& source, const PointCloud& target,
                                bool with_scale) {
  const CloudStats st = cloud_stats(source, target);
  const Eigen::JacobiSVD<EMat3> svd(st.cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const EVec3 sv = svd.singularValues();
  AlignResult out;
  if (sv(1) <= 1e-12 * std::max(sv(0), 1e-300)) {
    out.transform = from_eigen(1.0, EMat3::Identity(), st.mean_tgt - st.mean_src);
  } else {
    EMat3 S = EMat3::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) S(2, 2) = -1.0;
    const EMat3 R = svd.matrixU() * S * svd.matrixV().transpose();
    const double scale = with_scale ? (sv.dot(S.diagonal()) / st.var_src) : 1.0;
    const EVec3 t = st.mean_tgt - scale * R * st.mean_src;
    out.transform = from_eigen(scale, R, t);
  }
  out.rms = alignment_rms(source, target, out.transform);
  return out;
}

}  // namespace

AlignResult umeyama_align(const PointCloud& source, const PointCloud& target, bool with_scale) {
  if (source.size() != target.size()) {
    throw ValidationError("umeyama: cloud sizes differ, " + std::to_string(source.size()) +
                          " vs " + std::to_string(target.size()));
  }
  if (source.size() < 3) throw ValidationError("umeyama: need at least 3 point pairs");
  check_finite_cloud(source, "umeyama source");
  check_finite_cloud(target, "umeyama target");

  const CloudStats st = cloud_stats(source, target);
  const Eigen::JacobiSVD<EMat3> svd(st.cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const EVec3 sv = svd.singularValues();
  if (sv(1) <= 1e-12 * std::max(sv(0), 1e-300)) {
    throw ValidationError("umeyama: degenerate configuration (cross-covariance rank < 2)");
  }
  if (with_scale && st.var_src <= 0.0) {
    throw ValidationError("umeyama: source cloud has zero spread");
  }

  EMat3 S = EMat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) S(2, 2) = -1.0;
  const EMat3 R = svd.matrixU() * S * svd.matrixV().transpose();
  const double scale = with_scale ? (sv.dot(S.diagonal()) / st.var_src) : 1.0;
  const EVec3 t = st.mean_tgt - scale * R * st.mean_src;

  AlignResult out;
  out.transform = from_eigen(scale, R, t);
  out.rms = alignment_rms(source, target, out.transform);
  out.transform.validate();
  return out;
}

std::vector<int> farthest_point_sampling(const PointCloud& cloud, int count, int start) {
  const int n = cloud.size();
  if (n < 1) throw ValidationError("fps: empty cloud");
  if (count < 1) throw ValidationError("fps: count must be >= 1");
  if (start < 0 || start >= n) throw ValidationError("fps: start index out of range");
  check_finite_cloud(cloud, "fps");
  const int want = std::min(count, n);

  std::vector<int> picked;
  picked.reserve(static_cast<size_t>(want));
  std::vector<double> min_d2(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<char> taken(static_cast<size_t>(n), 0);
  int cur = start;
  picked.push_back(cur);
  taken[static_cast<size_t>(cur)] = 1;
  while (static_cast<int>(picked.size()) < want) {
    const Vec3& p = cloud.points[static_cast<size_t>(cur)];
    int best = -1;
    double best_d2 = -1.0;
    for (int i = 0; i < n; ++i) {
      const Vec3& q = cloud.points[static_cast<size_t>(i)];
      const double dx = q[0] - p[0], dy = q[1] - p[1], dz = q[2] - p[2];
      min_d2[static_cast<size_t>(i)] =
          std::min(min_d2[static_cast<size_t>(i)], dx * dx + dy * dy + dz * dz);
      if (!taken[static_cast<size_t>(i)] && min_d2[static_cast<size_t>(i)] > best_d2) {
        best_d2 = min_d2[static_cast<size_t>(i)];
        best = i;
      }
    }
    cur = best;
    picked.push_back(cur);
    taken[static_cast<size_t>(cur)] = 1;
  }
  return picked;
}

ChamferStats chamfer_acc_comp(const PointCloud& pred, const PointCloud& gt) {
  if (pred.size() < 1 || gt.size() < 1) throw ValidationError("chamfer: empty cloud");
  check_finite_cloud(pred, "chamfer pred");
  check_finite_cloud(gt, "chamfer gt");
  const auto mean_nn = [](const PointCloud& a, const PointCloud& b) {
    double acc = 0.0;
    for (const Vec3& p : a.points) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : b.points) {
        const double dx = q[0] - p[0], dy = q[1] - p[1], dz = q[2] - p[2];
        best = std::min(best, dx * dx + dy * dy + dz * dz);
      }
      acc += std::sqrt(best);
    }
    return acc / a.size();
  };
  ChamferStats s;
  s.accuracy = mean_nn(pred, gt);
  s.completeness = mean_nn(gt, pred);
  s.chamfer = 0.5 * (s.accuracy + s.completeness);
  return s;
}

TrajErrors ate_rte_rre(const std::vector<Pose>& pred, const std::vector<Pose>& gt) {
  if (pred.size() != gt.size()) {
    throw ValidationError("trajectory metrics: length mismatch " + std::to_string(pred.size()) +
                          " vs " + std::to_string(gt.size()));
  }
  const int n = static_cast<int>(pred.size());
  if (n < 2) throw ValidationError("trajectory metrics: need at least 2 poses");

  PointCloud cp, cg;
  for (int i = 0; i < n; ++i) {
    cp.points.push_back(camera_center(pred[static_cast<size_t>(i)]));
    cg.points.push_back(camera_center(gt[static_cast<size_t>(i)]));
  }
  check_finite_cloud(cp, "trajectory pred");
  check_finite_cloud(cg, "trajectory gt");
  const AlignResult al = align_with_fallback(cp, cg, true);

  std::vector<Vec3> ap(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    ap[static_cast<size_t>(i)] = al.transform.apply(cp.points[static_cast<size_t>(i)]);
  }

  TrajErrors e;
  e.ate = al.rms;
  double rte_acc = 0.0, rre_acc = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    const size_t a = static_cast<size_t>(i), b = a + 1;
    for (int k = 0; k < 3; ++k) {
      const double dp = ap[b][static_cast<size_t>(k)] - ap[a][static_cast<size_t>(k)];
      const double dg = cg.points[b][static_cast<size_t>(k)] - cg.points[a][static_cast<size_t>(k)];
      rte_acc += (dp - dg) * (dp - dg);
    }
    // Camera-to-camera relative rotation, invariant to any global alignment.
    const Mat3 rel_p = mat3_mul(pred[b].R, mat3_transpose(pred[a].R));
    const Mat3 rel_g = mat3_mul(gt[b].R, mat3_transpose(gt[a].R));
    rre_acc += rotation_geodesic_deg(rel_p, rel_g);
  }
  e.rte = std::sqrt(rte_acc / (n - 1));
  e.rre_deg = rre_acc / (n - 1);
  return e;
}

}  // namespace vgw
