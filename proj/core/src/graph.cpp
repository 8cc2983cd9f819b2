#include "vgw/graph.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "vgw/errors.hpp"

namespace vgw {

namespace {

using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MatMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

bool is_row_broadcast(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2) return false;
  if (b.shape.size() == 1) return b.shape[0] == a.shape[1];
  return b.shape.size() == 2 && b.shape[0] == 1 && b.shape[1] == a.shape[1];
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kSoftmax: return "softmax";
    case Op::kLayerNorm: return "layer_norm";
    case Op::kGelu: return "gelu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kConcatTokens: return "concat_tokens";
    case Op::kSlice: return "slice";
    case Op::kTranspose: return "transpose";
    case Op::kMean: return "mean";
    case Op::kSumSq: return "sum_sq";
  }
  return "?";
}

const Graph::Node& Graph::node(NodeId id) const {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
    throw ValidationError("graph: invalid node id " + std::to_string(id));
  }
  return nodes_[static_cast<size_t>(id)];
}

const Tensor& Graph::value(NodeId id) const { return val(node(id)); }

NodeId Graph::push(Node n) {
  if (!all_finite(val(n))) {
    throw NumericError(std::string("graph: non-finite output of op '") + op_name(n.op) + "'");
  }
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::leaf(const Tensor* value, std::string name, bool requires_grad) {
  if (value == nullptr) throw ValidationError("graph: null leaf");
  Node n;
  n.op = Op::kLeaf;
  n.ext = value;
  n.requires_grad = requires_grad;
  n.name = std::move(name);
  return push(std::move(n));
}

NodeId Graph::constant(Tensor value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0]) {
    throw ValidationError("matmul: incompatible shapes " + shape_str(ta.shape) + " x " +
                          shape_str(tb.shape));
  }
  Node n;
  n.op = Op::kMatmul;
  n.in = {a, b};
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  n.value = matmul_value(ta, tb);
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  Node n;
  n.op = Op::kAdd;
  n.in = {a, b};
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  if (ta.same_shape(tb)) {
    n.value = vgw::add(ta, tb);
  } else if (is_row_broadcast(ta, tb)) {
    Tensor r = ta;
    const int64_t rows = ta.shape[0], cols = ta.shape[1];
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < cols; ++j) r.data[static_cast<size_t>(i * cols + j)] += tb.data[static_cast<size_t>(j)];
    n.value = std::move(r);
  } else {
    throw ValidationError("add: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  Node n;
  n.op = Op::kMul;
  n.in = {a, b};
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  if (ta.same_shape(tb)) {
    Tensor r = ta;
    for (size_t i = 0; i < r.data.size(); ++i) r.data[i] *= tb.data[i];
    n.value = std::move(r);
  } else if (is_row_broadcast(ta, tb)) {
    Tensor r = ta;
    const int64_t rows = ta.shape[0], cols = ta.shape[1];
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < cols; ++j) r.data[static_cast<size_t>(i * cols + j)] *= tb.data[static_cast<size_t>(j)];
    n.value = std::move(r);
  } else {
    throw ValidationError("mul: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double s) {
  Node n;
  n.op = Op::kScale;
  n.in = {a, -1};
  n.scalar = s;
  n.requires_grad = node(a).requires_grad;
  n.value = scaled(value(a), s);
  return push(std::move(n));
}

NodeId Graph::softmax(NodeId a) {
  const Tensor& ta = value(a);
  Node n;
  n.op = Op::kSoftmax;
  n.in = {a, -1};
  n.requires_grad = node(a).requires_grad;
  Tensor r = ta;
  const int64_t rows = ta.rows(), cols = ta.cols();
  for (int64_t i = 0; i < rows; ++i) {
    double* row = r.data.data() + i * cols;
    double mx = row[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int64_t j = 0; j < cols; ++j) row[j] /= sum;
  }
  n.value = std::move(r);
  return push(std::move(n));
}

NodeId Graph::layer_norm(NodeId a) {
  const Tensor& ta = value(a);
  Node n;
  n.op = Op::kLayerNorm;
  n.in = {a, -1};
  n.requires_grad = node(a).requires_grad;
  Tensor r = ta;
  const int64_t rows = ta.rows(), cols = ta.cols();
  for (int64_t i = 0; i < rows; ++i) {
    double* row = r.data.data() + i * cols;
    double mu = 0.0;
    for (int64_t j = 0; j < cols; ++j) mu += row[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      const double d = row[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (int64_t j = 0; j < cols; ++j) row[j] = (row[j] - mu) * inv;
  }
  n.value = std::move(r);
  return push(std::move(n));
}

NodeId Graph::gelu(NodeId a) {
  Node n;
  n.op = Op::kGelu;
  n.in = {a, -1};
  n.requires_grad = node(a).requires_grad;
  Tensor r = value(a);
  for (double& v : r.data) v = v * 0.5 * (1.0 + std::erf(v * kInvSqrt2));
  n.value = std::move(r);
  return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId a) {
  Node n;
  n.op = Op::kSigmoid;
  n.in = {a, -1};
  n.requires_grad = node(a).requires_grad;
  Tensor r = value(a);
  for (double& v : r.data) v = 1.0 / (1.0 + std::exp(-v));
  n.value = std::move(r);
  return push(std::move(n));
}

NodeId Graph::concat_tokens(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[1]) {
    throw ValidationError("concat_tokens: shape mismatch " + shape_str(ta.shape) + " vs " +
                          shape_str(tb.shape));
  }
  Node n;
  n.op = Op::kConcatTokens;
  n.in = {a, b};
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  Tensor r({ta.shape[0] + tb.shape[0], ta.shape[1]});
  std::copy(ta.data.begin(), ta.data.end(), r.data.begin());
  std::copy(tb.data.begin(), tb.data.end(), r.data.begin() + ta.data.size());
  n.value = std::move(r);
  return push(std::move(n));
}

NodeId Graph::slice(NodeId a, int axis, int64_t start, int64_t len) {
  const Tensor& ta = value(a);
  if (ta.shape.size() != 2 || axis < 0 || axis > 1) {
    throw ValidationError("slice: need a 2-d input and axis 0/1, got " + shape_str(ta.shape) +
                          " axis " + std::to_string(axis));
  }
  if (start < 0 || len <= 0 || start + len > ta.shape[static_cast<size_t>(axis)]) {
    throw ValidationError("slice: range [" + std::to_string(start) + ", " +
                          std::to_string(start + len) + ") out of bounds for " + shape_str(ta.shape));
  }
  Node n;
  n.op = Op::kSlice;
  n.in = {a, -1};
  n.axis = axis;
  n.start = start;
  n.len = len;
  n.requires_grad = node(a).requires_grad;
  const int64_t rows = ta.shape[0], cols = ta.shape[1];
  if (axis == 0) {
    Tensor r({len, cols});
    std::copy(ta.data.begin() + start * cols, ta.data.begin() + (start + len) * cols, r.data.begin());
    n.value = std::move(r);
  } else {
    Tensor r({rows, len});
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < len; ++j)
        r.data[static_cast<size_t>(i * len + j)] = ta.data[static_cast<size_t>(i * cols + start + j)];
    n.value = std::move(r);
  }
  return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
  const Tensor& ta = value(a);
  if (ta.shape.size() != 2) {
    throw ValidationError("transpose: need a 2-d input, got " + shape_str(ta.shape));
  }
  Node n;
  n.op = Op::kTranspose;
  n.in = {a, -1};
  n.requires_grad = node(a).requires_grad;
  Tensor r({ta.shape[1], ta.shape[0]});
  ConstMatMap ma(ta.data.data(), ta.shape[0], ta.shape[1]);
  MatMap mr(r.data.data(), r.shape[0], r.shape[1]);
  mr = ma.transpose();
  n.value = std::move(r);
  return push(std::move(n));
}

NodeId Graph::mean(NodeId a) {
  const Tensor& ta = value(a);
  Node n;
  n.op = Op::kMean;
  n.in = {a, -1};
  n.requires_grad = node(a).requires_grad;
  double s = 0.0;
  for (double v : ta.data) s += v;
  n.value = Tensor::from({1}, {s / static_cast<double>(ta.numel())});
  return push(std::move(n));
}

NodeId Graph::sum_sq(NodeId a) {
  Node n;
  n.op = Op::kSumSq;
  n.in = {a, -1};
  n.requires_grad = node(a).requires_grad;
  n.value = Tensor::from({1}, {sumsq(value(a))});
  return push(std::move(n));
}

GradMap Graph::backward(NodeId loss) {
  if (swept_) throw ValidationError("graph: backward may run once per graph");
  swept_ = true;
  const Tensor& lv = value(loss);
  if (lv.numel() != 1) {
    throw ValidationError("backward: loss must be scalar, got " + shape_str(lv.shape));
  }

  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> has_grad(nodes_.size(), false);
  auto acc = [&](NodeId id, auto&& fill) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return;
    if (!has_grad[static_cast<size_t>(id)]) {
      grads[static_cast<size_t>(id)] = Tensor(val(n).shape);
      has_grad[static_cast<size_t>(id)] = true;
    }
    fill(grads[static_cast<size_t>(id)]);
  };

  if (nodes_[static_cast<size_t>(loss)].requires_grad) {
    grads[static_cast<size_t>(loss)] = Tensor::from({1}, {1.0});
    has_grad[static_cast<size_t>(loss)] = true;
  }

  for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || !has_grad[static_cast<size_t>(id)]) continue;
    const Tensor& g = grads[static_cast<size_t>(id)];
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatmul: {
        const Tensor& ta = val(nodes_[static_cast<size_t>(n.in[0])]);
        const Tensor& tb = val(nodes_[static_cast<size_t>(n.in[1])]);
        ConstMatMap ma(ta.data.data(), ta.shape[0], ta.shape[1]);
        ConstMatMap mb(tb.data.data(), tb.shape[0], tb.shape[1]);
        ConstMatMap mg(g.data.data(), g.shape[0], g.shape[1]);
        acc(n.in[0], [&](Tensor& d) {
          MatMap md(d.data.data(), d.shape[0], d.shape[1]);
          md.noalias() += mg * mb.transpose();
        });
        acc(n.in[1], [&](Tensor& d) {
          MatMap md(d.data.data(), d.shape[0], d.shape[1]);
          md.noalias() += ma.transpose() * mg;
        });
        break;
      }
      case Op::kAdd: {
        const Tensor& ta = val(nodes_[static_cast<size_t>(n.in[0])]);
        const Tensor& tb = val(nodes_[static_cast<size_t>(n.in[1])]);
        acc(n.in[0], [&](Tensor& d) {
          for (size_t i = 0; i < d.data.size(); ++i) d.data[i] += g.data[i];
        });
        if (ta.same_shape(tb)) {
          acc(n.in[1], [&](Tensor& d) {
            for (size_t i = 0; i < d.data.size(); ++i) d.data[i] += g.data[i];
          });
        } else {
          const int64_t rows = ta.shape[0], cols = ta.shape[1];
          acc(n.in[1], [&](Tensor& d) {
            for (int64_t i = 0; i < rows; ++i)
              for (int64_t j = 0; j < cols; ++j)
                d.data[static_cast<size_t>(j)] += g.data[static_cast<size_t>(i * cols + j)];
          });
        }
        break;
      }
      case Op::kMul: {
        const Tensor& ta = val(nodes_[static_cast<size_t>(n.in[0])]);
        const Tensor& tb = val(nodes_[static_cast<size_t>(n.in[1])]);
        if (ta.same_shape(tb)) {
          acc(n.in[0], [&](Tensor& d) {
            for (size_t i = 0; i < d.data.size(); ++i) d.data[i] += g.data[i] * tb.data[i];
          });
          acc(n.in[1], [&](Tensor& d) {
            for (size_t i = 0; i < d.data.size(); ++i) d.data[i] += g.data[i] * ta.data[i];
          });
        } else {
          const int64_t rows = ta.shape[0], cols = ta.shape[1];
          acc(n.in[0], [&](Tensor& d) {
            for (int64_t i = 0; i < rows; ++i)
              for (int64_t j = 0; j < cols; ++j)
                d.data[static_cast<size_t>(i * cols + j)] +=
                    g.data[static_cast<size_t>(i * cols + j)] * tb.data[static_cast<size_t>(j)];
          });
          acc(n.in[1], [&](Tensor& d) {
            for (int64_t i = 0; i < rows; ++i)
              for (int64_t j = 0; j < cols; ++j)
                d.data[static_cast<size_t>(j)] +=
                    g.data[static_cast<size_t>(i * cols + j)] * ta.data[static_cast<size_t>(i * cols + j)];
          });
        }
        break;
      }
      case Op::kScale: {
        acc(n.in[0], [&](Tensor& d) {
          for (size_t i = 0; i < d.data.size(); ++i) d.data[i] += n.scalar * g.data[i];
        });
        break;
      }
      case Op::kSoftmax: {
        const Tensor& y = n.value;
        const int64_t rows = y.rows(), cols = y.cols();
        acc(n.in[0], [&](Tensor& d) {
          for (int64_t i = 0; i < rows; ++i) {
            const double* yr = y.data.data() + i * cols;
            const double* gr = g.data.data() + i * cols;
            double dotv = 0.0;
            for (int64_t j = 0; j < cols; ++j) dotv += yr[j] * gr[j];
            double* dr = d.data.data() + i * cols;
            for (int64_t j = 0; j < cols; ++j) dr[j] += yr[j] * (gr[j] - dotv);
          }
        });
        break;
      }
      case Op::kLayerNorm: {
        const Tensor& y = n.value;
        const int64_t rows = y.rows(), cols = y.cols();
        const Tensor& x = val(nodes_[static_cast<size_t>(n.in[0])]);
        acc(n.in[0], [&](Tensor& d) {
          for (int64_t i = 0; i < rows; ++i) {
            const double* xr = x.data.data() + i * cols;
            const double* yr = y.data.data() + i * cols;
            const double* gr = g.data.data() + i * cols;
            double mu = 0.0;
            for (int64_t j = 0; j < cols; ++j) mu += xr[j];
            mu /= static_cast<double>(cols);
            double var = 0.0;
            for (int64_t j = 0; j < cols; ++j) {
              const double dv = xr[j] - mu;
              var += dv * dv;
            }
            var /= static_cast<double>(cols);
            const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
            double gmean = 0.0, gymean = 0.0;
            for (int64_t j = 0; j < cols; ++j) {
              gmean += gr[j];
              gymean += gr[j] * yr[j];
            }
            gmean /= static_cast<double>(cols);
            gymean /= static_cast<double>(cols);
            double* dr = d.data.data() + i * cols;
            for (int64_t j = 0; j < cols; ++j) dr[j] += inv * (gr[j] - gmean - yr[j] * gymean);
          }
        });
        break;
      }
      case Op::kGelu: {
        const Tensor& x = val(nodes_[static_cast<size_t>(n.in[0])]);
        acc(n.in[0], [&](Tensor& d) {
          for (size_t i = 0; i < d.data.size(); ++i) {
            const double v = x.data[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            d.data[i] += g.data[i] * (cdf + v * pdf);
          }
        });
        break;
      }
      case Op::kSigmoid: {
        const Tensor& y = n.value;
        acc(n.in[0], [&](Tensor& d) {
          for (size_t i = 0; i < d.data.size(); ++i)
            d.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
        });
        break;
      }
      case Op::kConcatTokens: {
        const Tensor& ta = val(nodes_[static_cast<size_t>(n.in[0])]);
        const size_t na = ta.data.size();
        acc(n.in[0], [&](Tensor& d) {
          for (size_t i = 0; i < na; ++i) d.data[i] += g.data[i];
        });
        acc(n.in[1], [&](Tensor& d) {
          for (size_t i = 0; i < d.data.size(); ++i) d.data[i] += g.data[na + i];
        });
        break;
      }
      case Op::kSlice: {
        const Tensor& x = val(nodes_[static_cast<size_t>(n.in[0])]);
        const int64_t cols = x.shape[1];
        acc(n.in[0], [&](Tensor& d) {
          if (n.axis == 0) {
            for (size_t i = 0; i < g.data.size(); ++i)
              d.data[static_cast<size_t>(n.start * cols) + i] += g.data[i];
          } else {
            const int64_t rows = x.shape[0];
            for (int64_t i = 0; i < rows; ++i)
              for (int64_t j = 0; j < n.len; ++j)
                d.data[static_cast<size_t>(i * cols + n.start + j)] +=
                    g.data[static_cast<size_t>(i * n.len + j)];
          }
        });
        break;
      }
      case Op::kTranspose: {
        acc(n.in[0], [&](Tensor& d) {
          const int64_t rows = d.shape[0], cols = d.shape[1];
          for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < cols; ++j)
              d.data[static_cast<size_t>(i * cols + j)] += g.data[static_cast<size_t>(j * rows + i)];
        });
        break;
      }
      case Op::kMean: {
        const Tensor& x = val(nodes_[static_cast<size_t>(n.in[0])]);
        const double gv = g.data[0] / static_cast<double>(x.numel());
        acc(n.in[0], [&](Tensor& d) {
          for (size_t i = 0; i < d.data.size(); ++i) d.data[i] += gv;
        });
        break;
      }
      case Op::kSumSq: {
        const Tensor& x = val(nodes_[static_cast<size_t>(n.in[0])]);
        const double gv = g.data[0];
        acc(n.in[0], [&](Tensor& d) {
          for (size_t i = 0; i < d.data.size(); ++i) d.data[i] += 2.0 * gv * x.data[i];
        });
        break;
      }
    }
    // Free interior gradient storage as soon as a node is consumed.
    if (n.op != Op::kLeaf) {
      grads[static_cast<size_t>(id)] = Tensor();
      has_grad[static_cast<size_t>(id)] = false;
    }
  }

  GradMap out;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op == Op::kLeaf && n.requires_grad && !n.name.empty()) {
      Tensor gt = has_grad[i] ? std::move(grads[i]) : Tensor(val(n).shape);
      out.push_back({n.name, std::move(gt)});
    }
  }
  return out;
}

}  // namespace vgw
