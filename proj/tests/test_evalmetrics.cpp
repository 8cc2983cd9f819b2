#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "vgw/errors.hpp"
#include "vgw/evalmetrics.hpp"
#include "vgw/rng.hpp"

using namespace vgw;

namespace {

Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return Mat3{c, -s, 0, s, c, 0, 0, 0, 1};
}

Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return Mat3{1, 0, 0, 0, c, -s, 0, s, c};
}

Vec3 vadd(const Vec3& a, const Vec3& b) { return Vec3{a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }

Vec3 vscale(const Vec3& a, double s) { return Vec3{s * a[0], s * a[1], s * a[2]}; }

PointCloud random_cloud(int n, Rng& rng) {
  PointCloud c;
  for (int i = 0; i < n; ++i) {
    c.points.push_back(Vec3{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
  }
  return c;
}

PointCloud transformed(const PointCloud& src, double scale, const Mat3& R, const Vec3& t) {
  PointCloud out;
  for (const Vec3& p : src.points) out.points.push_back(vadd(vscale(mat3_apply(R, p), scale), t));
  return out;
}

Pose pose_at_center(const Mat3& R, const Vec3& center) {
  Pose p;
  p.R = R;
  p.t = vscale(mat3_apply(R, center), -1.0);
  return p;
}

double max_mat_diff(const Mat3& a, const Mat3& b) {
  double m = 0.0;
  for (int i = 0; i < 9; ++i) m = std::max(m, std::abs(a[static_cast<size_t>(i)] - b[static_cast<size_t>(i)]));
  return m;
}

}  // namespace

TEST_CASE("depth metrics hit their closed forms") {
  const std::vector<double> gt = {1.0, 2.0, 4.0, 0.5};
  SUBCASE("a perfect prediction") {
    const DepthStats s = absrel_delta1(gt, gt);
    CHECK(s.absrel == 0.0);
    CHECK(s.delta1 == 1.0);
  }
  SUBCASE("a uniform 20 percent overestimate stays within delta1") {
    std::vector<double> pred;
    for (double g : gt) pred.push_back(1.2 * g);
    const DepthStats s = absrel_delta1(pred, gt);
    CHECK(s.absrel == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(s.delta1 == 1.0);
  }
  SUBCASE("a uniform 30 percent overestimate misses delta1 everywhere") {
    std::vector<double> pred;
    for (double g : gt) pred.push_back(1.3 * g);
    const DepthStats s = absrel_delta1(pred, gt);
    CHECK(s.absrel == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(s.delta1 == 0.0);
  }
  SUBCASE("the delta1 threshold is strict") {
    const DepthStats s = absrel_delta1({2.5}, {2.0});
    CHECK(s.delta1 == 0.0);
  }
  SUBCASE("a mixed prediction averages its hits") {
    const DepthStats s = absrel_delta1({1.2, 2.4, 5.2, 0.65}, gt);
    CHECK(s.delta1 == 0.5);
  }
}

TEST_CASE("depth metrics validate their inputs") {
  CHECK_THROWS_AS(absrel_delta1({1.0}, {1.0, 2.0}), ValidationError);
  CHECK_THROWS_AS(absrel_delta1(std::vector<double>{}, std::vector<double>{}), ValidationError);
  CHECK_THROWS_AS(absrel_delta1({1.0}, {0.0}), ValidationError);
  CHECK_THROWS_AS(absrel_delta1({1.0}, {-1.0}), ValidationError);
  CHECK_THROWS_AS(absrel_delta1({1.0}, {1.0}, 1.0), ValidationError);
  CHECK_THROWS_AS(absrel_delta1(Tensor({2, 2}), Tensor({2, 3})), ValidationError);
  Tensor a = Tensor::full({2, 2}, 2.0);
  Tensor b = Tensor::full({2, 2}, 1.0);
  const DepthStats s = absrel_delta1(a, b);
  CHECK(s.absrel == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("aligning a cloud onto itself is the identity") {
  Rng rng(3);
  const PointCloud cloud = random_cloud(10, rng);
  const AlignResult al = umeyama_align(cloud, cloud, true);
  CHECK(al.rms < 1e-12);
  CHECK(al.transform.scale == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(max_mat_diff(al.transform.R, Mat3{1, 0, 0, 0, 1, 0, 0, 0, 1}) < 1e-12);
  for (double v : al.transform.t) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("a known similarity transform is recovered exactly") {
  Rng rng(4);
  const PointCloud src = random_cloud(12, rng);
  const Mat3 R = rot_z(M_PI / 6.0);
  const Vec3 t{1.0, 2.0, 3.0};
  const PointCloud tgt = transformed(src, 2.0, R, t);
  const AlignResult al = umeyama_align(src, tgt, true);
  CHECK(al.rms < 1e-9);
  CHECK(al.transform.scale == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(max_mat_diff(al.transform.R, R) < 1e-9);
  for (int i = 0; i < 3; ++i) {
    CHECK(al.transform.t[static_cast<size_t>(i)] ==
          doctest::Approx(t[static_cast<size_t>(i)]).epsilon(1e-9));
  }
}

TEST_CASE("a rigid fit pins the scale at one") {
  Rng rng(5);
  const PointCloud src = random_cloud(9, rng);
  const Mat3 R = mat3_mul(rot_z(0.4), rot_x(-0.9));
  const PointCloud tgt = transformed(src, 1.0, R, Vec3{-0.5, 0.25, 2.0});
  const AlignResult rigid = umeyama_align(src, tgt, false);
  CHECK(rigid.transform.scale == 1.0);
  CHECK(rigid.rms < 1e-9);
  const PointCloud grown = transformed(src, 3.0, R, Vec3{0, 0, 0});
  const AlignResult forced = umeyama_align(src, grown, false);
  CHECK(forced.transform.scale == 1.0);
  CHECK(forced.rms > 0.1);
}

TEST_CASE("a mirrored target still yields a proper rotation") {
  Rng rng(6);
  const PointCloud src = random_cloud(11, rng);
  PointCloud mirrored;
  for (const Vec3& p : src.points) mirrored.points.push_back(Vec3{-p[0], p[1], p[2]});
  const AlignResult al = umeyama_align(src, mirrored, true);
  CHECK_NOTHROW(al.transform.validate());
  const Mat3& R = al.transform.R;
  const double det = R[0] * (R[4] * R[8] - R[5] * R[7]) - R[1] * (R[3] * R[8] - R[5] * R[6]) +
                     R[2] * (R[3] * R[7] - R[4] * R[6]);
  CHECK(det == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(al.rms > 0.0);
  SimilarityTransform naive;
  double naive_acc = 0.0;
  for (size_t i = 0; i < src.points.size(); ++i) {
    const Vec3 y = naive.apply(src.points[i]);
    for (int k = 0; k < 3; ++k) {
      const double dv = y[static_cast<size_t>(k)] - mirrored.points[i][static_cast<size_t>(k)];
      naive_acc += dv * dv;
    }
  }
  CHECK(al.rms <= std::sqrt(naive_acc / static_cast<double>(src.points.size())));
}

TEST_CASE("degenerate clouds are rejected") {
  PointCloud line;
  for (int i = 0; i < 5; ++i) line.points.push_back(Vec3{static_cast<double>(i), 0.0, 0.0});
  CHECK_THROWS_AS(umeyama_align(line, line, true), ValidationError);
  PointCloud point;
  for (int i = 0; i < 4; ++i) point.points.push_back(Vec3{1.0, 2.0, 3.0});
  CHECK_THROWS_AS(umeyama_align(point, point, true), ValidationError);
  Rng rng(7);
  const PointCloud ok = random_cloud(5, rng);
  PointCloud two;
  two.points.assign(ok.points.begin(), ok.points.begin() + 2);
  CHECK_THROWS_AS(umeyama_align(two, two, true), ValidationError);
  PointCloud four;
  four.points.assign(ok.points.begin(), ok.points.begin() + 4);
  CHECK_THROWS_AS(umeyama_align(four, ok, true), ValidationError);
  PointCloud bad = ok;
  bad.points[0][1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(umeyama_align(bad, ok, true), ValidationError);
}

TEST_CASE("similarity transforms validate scale and orthonormality") {
  SimilarityTransform tf;
  CHECK_NOTHROW(tf.validate());
  tf.scale = 0.0;
  CHECK_THROWS_AS(tf.validate(), ValidationError);
  tf.scale = 1.0;
  tf.R[0] = 2.0;
  CHECK_THROWS_AS(tf.validate(), ValidationError);
  SimilarityTransform known;
  known.scale = 2.0;
  known.R = rot_z(M_PI / 2.0);
  known.t = Vec3{1.0, 0.0, 0.0};
  const Vec3 y = known.apply(Vec3{1.0, 0.0, 0.0});
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(y[2]) < 1e-12);
}

TEST_CASE("farthest point sampling walks the unit square as expected") {
  PointCloud cloud;
  cloud.points = {Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{1, 1, 0}, Vec3{0.5, 0.5, 0}};
  CHECK(farthest_point_sampling(cloud, 5) == std::vector<int>{0, 3, 1, 2, 4});
  CHECK(farthest_point_sampling(cloud, 1) == std::vector<int>{0});
  CHECK(farthest_point_sampling(cloud, 2, 3) == std::vector<int>{3, 0});
  CHECK(farthest_point_sampling(cloud, 99) == std::vector<int>{0, 3, 1, 2, 4});
}

TEST_CASE("farthest point sampling matches a brute-force reference") {
  Rng rng(8);
  const PointCloud cloud = random_cloud(30, rng);
  const std::vector<int> got = farthest_point_sampling(cloud, 8);

  std::vector<int> want{0};
  while (want.size() < 8) {
    int best = -1;
    double best_d2 = -1.0;
    for (int i = 0; i < cloud.size(); ++i) {
      if (std::find(want.begin(), want.end(), i) != want.end()) continue;
      double d2 = std::numeric_limits<double>::infinity();
      for (int j : want) {
        const Vec3& p = cloud.points[static_cast<size_t>(i)];
        const Vec3& q = cloud.points[static_cast<size_t>(j)];
        const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
        d2 = std::min(d2, dx * dx + dy * dy + dz * dz);
      }
      if (d2 > best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
    want.push_back(best);
  }
  CHECK(got == want);
}

TEST_CASE("farthest point sampling validates its inputs") {
  PointCloud empty;
  CHECK_THROWS_AS(farthest_point_sampling(empty, 1), ValidationError);
  PointCloud one;
  one.points.push_back(Vec3{0, 0, 0});
  CHECK_THROWS_AS(farthest_point_sampling(one, 0), ValidationError);
  CHECK_THROWS_AS(farthest_point_sampling(one, 1, 1), ValidationError);
  CHECK_THROWS_AS(farthest_point_sampling(one, 1, -1), ValidationError);
}

TEST_CASE("chamfer distances hit hand-computed values") {
  PointCloud same;
  same.points = {Vec3{0, 0, 0}, Vec3{1, 1, 1}};
  const ChamferStats zero = chamfer_acc_comp(same, same);
  CHECK(zero.accuracy == 0.0);
  CHECK(zero.completeness == 0.0);
  CHECK(zero.chamfer == 0.0);

  PointCloud pred, gt;
  pred.points = {Vec3{0, 0, 0}};
  gt.points = {Vec3{1, 0, 0}, Vec3{3, 0, 0}};
  const ChamferStats s = chamfer_acc_comp(pred, gt);
  CHECK(s.accuracy == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.completeness == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(s.chamfer == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("chamfer distances match an exhaustive reference on random clouds") {
  Rng rng(9);
  const PointCloud pred = random_cloud(50, rng);
  const PointCloud gt = random_cloud(60, rng);
  const ChamferStats s = chamfer_acc_comp(pred, gt);

  const auto mean_nn = [](const PointCloud& a, const PointCloud& b) {
    double acc = 0.0;
    for (const Vec3& p : a.points) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : b.points) {
        const double dx = q[0] - p[0], dy = q[1] - p[1], dz = q[2] - p[2];
        best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
      }
      acc += best;
    }
    return acc / static_cast<double>(a.points.size());
  };
  CHECK(s.accuracy == doctest::Approx(mean_nn(pred, gt)).epsilon(1e-12));
  CHECK(s.completeness == doctest::Approx(mean_nn(gt, pred)).epsilon(1e-12));
  CHECK(s.chamfer == doctest::Approx(0.5 * (s.accuracy + s.completeness)).epsilon(1e-15));

  const ChamferStats flipped = chamfer_acc_comp(gt, pred);
  CHECK(flipped.accuracy == s.completeness);
  CHECK(flipped.completeness == s.accuracy);

  PointCloud empty;
  CHECK_THROWS_AS(chamfer_acc_comp(empty, gt), ValidationError);
  CHECK_THROWS_AS(chamfer_acc_comp(pred, empty), ValidationError);
}

TEST_CASE("identical trajectories have zero error") {
  std::vector<Pose> traj;
  for (int i = 0; i < 6; ++i) {
    const double a = 0.3 * i;
    traj.push_back(pose_at_center(rot_z(a), Vec3{std::cos(a), std::sin(a), 0.1 * i}));
  }
  const TrajErrors e = ate_rte_rre(traj, traj);
  CHECK(e.ate < 1e-12);
  CHECK(e.rte < 1e-12);
  CHECK(e.rre_deg < 1e-9);
}

TEST_CASE("trajectory errors are invariant to a global similarity of the scene") {
  std::vector<Pose> gt, pred;
  const Mat3 Q = mat3_mul(rot_z(0.8), rot_x(0.35));
  const double s = 1.7;
  const Vec3 c{2.0, -1.0, 0.5};
  for (int i = 0; i < 8; ++i) {
    const double a = 0.25 * i;
    const Mat3 R = mat3_mul(rot_x(0.1 * i), rot_z(a));
    const Vec3 center{std::cos(a), 2.0 * std::sin(a), 0.3 * i};
    gt.push_back(pose_at_center(R, center));
    const Vec3 moved = vadd(vscale(mat3_apply(Q, center), s), c);
    pred.push_back(pose_at_center(mat3_mul(R, mat3_transpose(Q)), moved));
  }
  const TrajErrors e = ate_rte_rre(pred, gt);
  CHECK(e.ate < 1e-9);
  CHECK(e.rte < 1e-9);
  CHECK(e.rre_deg < 1e-7);
}

TEST_CASE("a single displaced pose on a straight path produces known errors") {
  std::vector<Pose> gt, pred;
  for (int i = 0; i < 10; ++i) {
    gt.push_back(pose_at_center(Mat3{1, 0, 0, 0, 1, 0, 0, 0, 1},
                                Vec3{static_cast<double>(i), 0.0, 0.0}));
    const double dy = i == 5 ? 1.0 : 0.0;
    pred.push_back(pose_at_center(Mat3{1, 0, 0, 0, 1, 0, 0, 0, 1},
                                  Vec3{static_cast<double>(i), dy, 0.0}));
  }
  const TrajErrors e = ate_rte_rre(pred, gt);
  CHECK(e.ate == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(e.rte == doctest::Approx(std::sqrt(2.0 / 9.0)).epsilon(1e-12));
  CHECK(e.rre_deg < 1e-12);
}

TEST_CASE("trajectory metrics validate their inputs") {
  std::vector<Pose> two(2), three(3);
  CHECK_THROWS_AS(ate_rte_rre(two, three), ValidationError);
  std::vector<Pose> one(1);
  CHECK_THROWS_AS(ate_rte_rre(one, one), ValidationError);
}
