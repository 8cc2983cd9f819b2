#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vgw/rng.hpp"

namespace vgw {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);

// Dense row-major tensor of doubles. All training and evaluation math runs
// in double precision; narrower types exist only inside checkpoint files.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s);

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double v);
  static Tensor from(Shape s, std::vector<double> values);
  static Tensor gaussian(Shape s, Rng& rng, double stddev = 1.0);

  int64_t numel() const;
  int64_t rows() const;  // rank-1 tensors count as a single row
  int64_t cols() const;  // trailing-axis extent

  double& at(int64_t r, int64_t c);
  double at(int64_t r, int64_t c) const;

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// Elementwise helpers used by optimizer/solver code outside the autodiff
// graph. Shape mismatches throw ValidationError.
void add_inplace(Tensor& a, const Tensor& b);
void axpy(Tensor& y, double alpha, const Tensor& x);  // y += alpha * x
void scale_inplace(Tensor& a, double s);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& a, double s);
Tensor lerp(const Tensor& a, const Tensor& b, double t);  // (1-t)*a + t*b

double sumsq(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& a);

// Plain dense matrix product of 2-D tensors, outside the graph.
Tensor matmul_value(const Tensor& a, const Tensor& b);

}  // namespace vgw
