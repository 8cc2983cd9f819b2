#include "vgw/tensor.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "vgw/errors.hpp"

namespace vgw {

namespace {

using MatMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ValidationError(std::string(op) + ": shape mismatch " +
                          shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape s) : shape(std::move(s)) {
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e <= 0) throw ValidationError("tensor extent must be positive, got " + shape_str(shape));
    n *= e;
  }
  data.assign(static_cast<size_t>(n), 0.0);
}

Tensor Tensor::full(Shape s, double v) {
  Tensor t(std::move(s));
  std::fill(t.data.begin(), t.data.end(), v);
  return t;
}

Tensor Tensor::from(Shape s, std::vector<double> values) {
  Tensor t(std::move(s));
  if (static_cast<int64_t>(values.size()) != t.numel()) {
    throw ValidationError("tensor init: " + std::to_string(values.size()) +
                          " values for shape " + shape_str(t.shape));
  }
  t.data = std::move(values);
  return t;
}

Tensor Tensor::gaussian(Shape s, Rng& rng, double stddev) {
  Tensor t(std::move(s));
  for (double& v : t.data) v = stddev * rng.normal();
  return t;
}

int64_t Tensor::numel() const { return static_cast<int64_t>(data.size()); }

int64_t Tensor::rows() const {
  if (shape.size() <= 1) return 1;
  int64_t r = 1;
  for (size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
  return r;
}

int64_t Tensor::cols() const { return shape.empty() ? 1 : shape.back(); }

double& Tensor::at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
double Tensor::at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

void add_inplace(Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add_inplace");
  for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

void axpy(Tensor& y, double alpha, const Tensor& x) {
  require_same_shape(y, x, "axpy");
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += alpha * x.data[i];
}

void scale_inplace(Tensor& a, double s) {
  for (double& v : a.data) v *= s;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor r = a;
  add_inplace(r, b);
  return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor r = a;
  for (size_t i = 0; i < r.data.size(); ++i) r.data[i] -= b.data[i];
  return r;
}

Tensor scaled(const Tensor& a, double s) {
  Tensor r = a;
  scale_inplace(r, s);
  return r;
}

Tensor lerp(const Tensor& a, const Tensor& b, double t) {
  require_same_shape(a, b, "lerp");
  Tensor r(a.shape);
  for (size_t i = 0; i < r.data.size(); ++i) r.data[i] = (1.0 - t) * a.data[i] + t * b.data[i];
  return r;
}

double sumsq(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data) s += v * v;
  return s;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

bool all_finite(const Tensor& a) {
  for (double v : a.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor matmul_value(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0]) {
    throw ValidationError("matmul_value: incompatible shapes " + shape_str(a.shape) +
                          " x " + shape_str(b.shape));
  }
  Tensor r({a.shape[0], b.shape[1]});
  ConstMatMap ma(a.data.data(), a.shape[0], a.shape[1]);
  ConstMatMap mb(b.data.data(), b.shape[0], b.shape[1]);
  MatMap mr(r.data.data(), r.shape[0], r.shape[1]);
  mr.noalias() = ma * mb;
  return r;
}

}  // namespace vgw
