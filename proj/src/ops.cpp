#include "direp/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace direp {

namespace {

template <typename Real>
using MatrixMap = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename Real>
using ConstMatrixMap =
    Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename Real>
using NodePtr = std::shared_ptr<TensorNode<Real>>;

template <typename Real>
ConstMatrixMap<Real> as_matrix(const std::vector<Real>& v, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap<Real>(v.data(), static_cast<Eigen::Index>(rows),
                              static_cast<Eigen::Index>(cols));
}

template <typename Real>
MatrixMap<Real> as_mutable_matrix(std::vector<Real>& v, std::size_t rows, std::size_t cols) {
  return MatrixMap<Real>(v.data(), static_cast<Eigen::Index>(rows),
                         static_cast<Eigen::Index>(cols));
}

// Row-by-row column sums. Eigen's colwise().sum() on an unaligned map picks
// its summation order from the buffer address, which breaks bit-for-bit
// reproducibility between otherwise identical graphs.
template <typename Real>
std::vector<Real> column_sums(const std::vector<Real>& v, std::size_t rows, std::size_t cols) {
  std::vector<Real> out(cols, Real(0));
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = v.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += row[c];
  }
  return out;
}

void require_rank2(const Shape& shape, std::string_view op) {
  if (shape.size() != 2) {
    throw ShapeError(std::string(op) + " expects a rank-2 tensor, got " + to_string(shape));
  }
}

enum class Broadcast { none, left_scalar, right_scalar };

Broadcast broadcast_rule(const Shape& a, const Shape& b, std::string_view op) {
  if (a == b) return Broadcast::none;
  const std::size_t na = element_count(a);
  const std::size_t nb = element_count(b);
  if (na == 1 && nb != 1) return Broadcast::left_scalar;
  if (nb == 1 && na != 1) return Broadcast::right_scalar;
  if (na == 1 && nb == 1) return Broadcast::none;
  throw ShapeError(std::string(op) + ": dimension mismatch " + to_string(a) + " vs " +
                   to_string(b) + " (only scalar broadcasting is supported)");
}

template <typename Real, typename Fn>
Tensor<Real> unary(const Tensor<Real>& x, Fn&& fn,
                   std::function<void(TensorNode<Real>&)> backward_fn) {
  const auto& in = x.data();
  std::vector<Real> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fn(in[i]);
  return make_result<Real>(x.shape(), std::move(out), {x.node()}, std::move(backward_fn));
}

/// Adds `values(i)` into the parent's gradient when it requires one.
template <typename Real, typename Fn>
void accumulate(const NodePtr<Real>& parent, Fn&& values) {
  if (!parent->requires_grad) return;
  auto& g = parent->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += values(i);
}

template <typename Real>
Real sum_of(const std::vector<Real>& v) {
  Real s = 0;
  for (Real x : v) s += x;
  return s;
}

}  // namespace

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  const Broadcast rule = broadcast_rule(a.shape(), b.shape(), "add");
  const Shape shape = rule == Broadcast::left_scalar ? b.shape() : a.shape();
  const std::size_t n = element_count(shape);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = av[rule == Broadcast::left_scalar ? 0 : i] + bv[rule == Broadcast::right_scalar ? 0 : i];
  }
  return make_result<Real>(shape, std::move(out), {a.node(), b.node()}, [rule](TensorNode<Real>& o) {
    const auto& g = o.grad;
    auto reduce_into = [&](const NodePtr<Real>& p, bool is_scalar) {
      if (!p->requires_grad) return;
      if (is_scalar) {
        p->ensure_grad()[0] += sum_of(g);
      } else {
        accumulate(p, [&](std::size_t i) { return g[i]; });
      }
    };
    reduce_into(o.parents[0], rule == Broadcast::left_scalar);
    reduce_into(o.parents[1], rule == Broadcast::right_scalar);
  });
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  const Broadcast rule = broadcast_rule(a.shape(), b.shape(), "subtract");
  const Shape shape = rule == Broadcast::left_scalar ? b.shape() : a.shape();
  const std::size_t n = element_count(shape);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = av[rule == Broadcast::left_scalar ? 0 : i] - bv[rule == Broadcast::right_scalar ? 0 : i];
  }
  return make_result<Real>(shape, std::move(out), {a.node(), b.node()}, [rule](TensorNode<Real>& o) {
    const auto& g = o.grad;
    const auto& pa = o.parents[0];
    const auto& pb = o.parents[1];
    if (pa->requires_grad) {
      if (rule == Broadcast::left_scalar) pa->ensure_grad()[0] += sum_of(g);
      else accumulate(pa, [&](std::size_t i) { return g[i]; });
    }
    if (pb->requires_grad) {
      if (rule == Broadcast::right_scalar) pb->ensure_grad()[0] -= sum_of(g);
      else accumulate(pb, [&](std::size_t i) { return -g[i]; });
    }
  });
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  const Broadcast rule = broadcast_rule(a.shape(), b.shape(), "multiply");
  const Shape shape = rule == Broadcast::left_scalar ? b.shape() : a.shape();
  const std::size_t n = element_count(shape);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = av[rule == Broadcast::left_scalar ? 0 : i] * bv[rule == Broadcast::right_scalar ? 0 : i];
  }
  return make_result<Real>(shape, std::move(out), {a.node(), b.node()}, [rule](TensorNode<Real>& o) {
    const auto& g = o.grad;
    const auto& pa = o.parents[0];
    const auto& pb = o.parents[1];
    const auto& av = *pa->data;
    const auto& bv = *pb->data;
    const std::size_t n = g.size();
    auto ai = [&](std::size_t i) { return av[rule == Broadcast::left_scalar ? 0 : i]; };
    auto bi = [&](std::size_t i) { return bv[rule == Broadcast::right_scalar ? 0 : i]; };
    if (pa->requires_grad) {
      if (rule == Broadcast::left_scalar) {
        Real s = 0;
        for (std::size_t i = 0; i < n; ++i) s += g[i] * bi(i);
        pa->ensure_grad()[0] += s;
      } else {
        accumulate(pa, [&](std::size_t i) { return g[i] * bi(i); });
      }
    }
    if (pb->requires_grad) {
      if (rule == Broadcast::right_scalar) {
        Real s = 0;
        for (std::size_t i = 0; i < n; ++i) s += g[i] * ai(i);
        pb->ensure_grad()[0] += s;
      } else {
        accumulate(pb, [&](std::size_t i) { return g[i] * ai(i); });
      }
    }
  });
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real factor) {
  return unary<Real>(x, [factor](Real v) { return v * factor; }, [factor](TensorNode<Real>& o) {
    const auto& g = o.grad;
    accumulate(o.parents[0], [&](std::size_t i) { return g[i] * factor; });
  });
}

template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& x, Real value) {
  return unary<Real>(x, [value](Real v) { return v + value; }, [](TensorNode<Real>& o) {
    const auto& g = o.grad;
    accumulate(o.parents[0], [&](std::size_t i) { return g[i]; });
  });
}

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_rank2(a.shape(), "matmul");
  require_rank2(b.shape(), "matmul");
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  std::vector<Real> out(n * m);
  as_mutable_matrix(out, n, m).noalias() =
      as_matrix(*a.node()->data, n, k) * as_matrix(*b.node()->data, k, m);
  return make_result<Real>({n, m}, std::move(out), {a.node(), b.node()},
                           [n, k, m](TensorNode<Real>& o) {
    const auto g = as_matrix(o.grad, n, m);
    const auto& pa = o.parents[0];
    const auto& pb = o.parents[1];
    if (pa->requires_grad) {
      as_mutable_matrix(pa->ensure_grad(), n, k).noalias() +=
          g * as_matrix(*pb->data, k, m).transpose();
    }
    if (pb->requires_grad) {
      as_mutable_matrix(pb->ensure_grad(), k, m).noalias() +=
          as_matrix(*pa->data, n, k).transpose() * g;
    }
  });
}

template <typename Real>
Tensor<Real> affine(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias) {
  require_rank2(x.shape(), "affine");
  require_rank2(weight.shape(), "affine");
  const std::size_t n = x.shape()[0], k = x.shape()[1], m = weight.shape()[1];
  if (weight.shape()[0] != k) {
    throw ShapeError("affine: input width " + std::to_string(k) + " does not match weight " +
                     to_string(weight.shape()));
  }
  if (bias.shape() != Shape{m}) {
    throw ShapeError("affine: bias shape " + to_string(bias.shape()) + " does not match " +
                     std::to_string(m) + " outputs");
  }
  std::vector<Real> out(n * m);
  auto y = as_mutable_matrix(out, n, m);
  y.noalias() = as_matrix(*x.node()->data, n, k) * as_matrix(*weight.node()->data, k, m);
  y.rowwise() += Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(
      bias.node()->data->data(), static_cast<Eigen::Index>(m));
  return make_result<Real>({n, m}, std::move(out), {x.node(), weight.node(), bias.node()},
                           [n, k, m](TensorNode<Real>& o) {
    const auto g = as_matrix(o.grad, n, m);
    const auto& px = o.parents[0];
    const auto& pw = o.parents[1];
    const auto& pb = o.parents[2];
    if (px->requires_grad) {
      as_mutable_matrix(px->ensure_grad(), n, k).noalias() +=
          g * as_matrix(*pw->data, k, m).transpose();
    }
    if (pw->requires_grad) {
      as_mutable_matrix(pw->ensure_grad(), k, m).noalias() +=
          as_matrix(*px->data, n, k).transpose() * g;
    }
    if (pb->requires_grad) {
      const auto sums = column_sums(o.grad, n, m);
      auto& db = pb->ensure_grad();
      for (std::size_t c = 0; c < m; ++c) db[c] += sums[c];
    }
  });
}

template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& x) {
  require_rank2(x.shape(), "transpose");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  std::vector<Real> out(n * m);
  as_mutable_matrix(out, m, n) = as_matrix(*x.node()->data, n, m).transpose();
  return make_result<Real>({m, n}, std::move(out), {x.node()}, [n, m](TensorNode<Real>& o) {
    const auto& p = o.parents[0];
    if (!p->requires_grad) return;
    as_mutable_matrix(p->ensure_grad(), n, m) += as_matrix(o.grad, m, n).transpose();
  });
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  if (element_count(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<Real> out(x.data().begin(), x.data().end());
  return make_result<Real>(std::move(shape), std::move(out), {x.node()}, [](TensorNode<Real>& o) {
    const auto& g = o.grad;
    accumulate(o.parents[0], [&](std::size_t i) { return g[i]; });
  });
}

template <typename Real>
Tensor<Real> concat_last(std::span<const Tensor<Real>> parts) {
  if (parts.empty()) throw ShapeError("concat_last: no inputs");
  const std::size_t n = parts[0].rank() == 2 ? parts[0].shape()[0] : 0;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p.shape(), "concat_last");
    if (p.shape()[0] != n) {
      throw ShapeError("concat_last: row counts differ, " + to_string(parts[0].shape()) + " vs " +
                       to_string(p.shape()));
    }
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  std::vector<Real> out(n * total);
  std::vector<NodePtr<Real>> parents;
  std::size_t offset = 0;
  for (std::size_t j = 0; j < parts.size(); ++j) {
    const auto& src = parts[j].data();
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r * widths[j]), widths[j],
                  out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    }
    offset += widths[j];
    parents.push_back(parts[j].node());
  }
  return make_result<Real>({n, total}, std::move(out), std::move(parents),
                           [n, total, widths](TensorNode<Real>& o) {
    std::size_t offset = 0;
    for (std::size_t j = 0; j < widths.size(); ++j) {
      const auto& p = o.parents[j];
      if (p->requires_grad) {
        auto& g = p->ensure_grad();
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < widths[j]; ++c) {
            g[r * widths[j] + c] += o.grad[r * total + offset + c];
          }
        }
      }
      offset += widths[j];
    }
  });
}

template <typename Real>
Tensor<Real> concat_last(const Tensor<Real>& a, const Tensor<Real>& b) {
  const Tensor<Real> parts[] = {a, b};
  return concat_last<Real>(std::span<const Tensor<Real>>(parts));
}

template <typename Real>
Tensor<Real> concat_rows(std::span<const Tensor<Real>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  require_rank2(parts[0].shape(), "concat_rows");
  const std::size_t m = parts[0].shape()[1];
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p.shape(), "concat_rows");
    if (p.shape()[1] != m) {
      throw ShapeError("concat_rows: column counts differ, " + to_string(parts[0].shape()) +
                       " vs " + to_string(p.shape()));
    }
    counts.push_back(p.shape()[0]);
    total += p.shape()[0];
  }
  std::vector<Real> out;
  out.reserve(total * m);
  std::vector<NodePtr<Real>> parents;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    parents.push_back(p.node());
  }
  return make_result<Real>({total, m}, std::move(out), std::move(parents),
                           [m, counts](TensorNode<Real>& o) {
    std::size_t offset = 0;
    for (std::size_t j = 0; j < counts.size(); ++j) {
      const std::size_t base = offset * m;
      accumulate(o.parents[j], [&](std::size_t i) { return o.grad[base + i]; });
      offset += counts[j];
    }
  });
}

template <typename Real>
Tensor<Real> slice_rows(const Tensor<Real>& x, std::size_t begin, std::size_t end) {
  if (x.rank() < 1 || begin >= end || end > x.rows()) {
    throw ShapeError("slice_rows: invalid range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") for shape " + to_string(x.shape()));
  }
  const std::size_t stride = x.cols();
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<Real> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                        x.data().begin() + static_cast<std::ptrdiff_t>(end * stride));
  return make_result<Real>(std::move(shape), std::move(out), {x.node()},
                           [begin, end, stride](TensorNode<Real>& o) {
    const auto& p = o.parents[0];
    if (!p->requires_grad) return;
    auto& g = p->ensure_grad();
    for (std::size_t i = 0; i < (end - begin) * stride; ++i) g[begin * stride + i] += o.grad[i];
  });
}

template <typename Real>
Tensor<Real> gather_rows(const Tensor<Real>& x, std::span<const std::size_t> indices) {
  if (x.rank() < 1 || indices.empty()) {
    throw ShapeError("gather_rows: empty selection from shape " + to_string(x.shape()));
  }
  const std::size_t stride = x.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<Real> out;
  out.reserve(idx.size() * stride);
  for (std::size_t r : idx) {
    if (r >= x.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range for " +
                       to_string(x.shape()));
    }
    auto first = x.data().begin() + static_cast<std::ptrdiff_t>(r * stride);
    out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(stride));
  }
  Shape shape = x.shape();
  shape[0] = idx.size();
  return make_result<Real>(std::move(shape), std::move(out), {x.node()},
                           [idx, stride](TensorNode<Real>& o) {
    const auto& p = o.parents[0];
    if (!p->requires_grad) return;
    auto& g = p->ensure_grad();
    for (std::size_t j = 0; j < idx.size(); ++j) {
      for (std::size_t c = 0; c < stride; ++c) g[idx[j] * stride + c] += o.grad[j * stride + c];
    }
  });
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  return unary<Real>(x, [](Real v) { return v < Real(0) ? Real(0) : v; }, [](TensorNode<Real>& o) {
    const auto& in = *o.parents[0]->data;
    accumulate(o.parents[0], [&](std::size_t i) { return in[i] > Real(0) ? o.grad[i] : Real(0); });
  });
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  auto fn = [](Real v) {
    if (v >= Real(0)) return Real(1) / (Real(1) + std::exp(-v));
    const Real e = std::exp(v);
    return e / (Real(1) + e);
  };
  return unary<Real>(x, fn, [](TensorNode<Real>& o) {
    const auto& y = *o.data;
    accumulate(o.parents[0], [&](std::size_t i) { return o.grad[i] * y[i] * (Real(1) - y[i]); });
  });
}

template <typename Real>
Tensor<Real> softmax_last(const Tensor<Real>& x) {
  if (x.rank() < 1) throw ShapeError("softmax_last expects rank >= 1");
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.size() / k;
  const auto& in = x.data();
  std::vector<Real> out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = in.data() + r * k;
    Real* dst = out.data() + r * k;
    const Real hi = *std::max_element(row, row + k);
    Real total = 0;
    for (std::size_t c = 0; c < k; ++c) total += (dst[c] = std::exp(row[c] - hi));
    for (std::size_t c = 0; c < k; ++c) dst[c] /= total;
  }
  return make_result<Real>(x.shape(), std::move(out), {x.node()}, [rows, k](TensorNode<Real>& o) {
    const auto& p = o.parents[0];
    if (!p->requires_grad) return;
    auto& g = p->ensure_grad();
    const auto& y = *o.data;
    for (std::size_t r = 0; r < rows; ++r) {
      Real dot = 0;
      for (std::size_t c = 0; c < k; ++c) dot += o.grad[r * k + c] * y[r * k + c];
      for (std::size_t c = 0; c < k; ++c) {
        g[r * k + c] += y[r * k + c] * (o.grad[r * k + c] - dot);
      }
    }
  });
}

template <typename Real>
Tensor<Real> log_softmax_last(const Tensor<Real>& x) {
  if (x.rank() < 1) throw ShapeError("log_softmax_last expects rank >= 1");
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.size() / k;
  const auto& in = x.data();
  std::vector<Real> out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = in.data() + r * k;
    const Real hi = *std::max_element(row, row + k);
    Real total = 0;
    for (std::size_t c = 0; c < k; ++c) total += std::exp(row[c] - hi);
    const Real lse = hi + std::log(total);
    for (std::size_t c = 0; c < k; ++c) out[r * k + c] = row[c] - lse;
  }
  return make_result<Real>(x.shape(), std::move(out), {x.node()}, [rows, k](TensorNode<Real>& o) {
    const auto& p = o.parents[0];
    if (!p->requires_grad) return;
    auto& g = p->ensure_grad();
    const auto& y = *o.data;
    for (std::size_t r = 0; r < rows; ++r) {
      Real total = 0;
      for (std::size_t c = 0; c < k; ++c) total += o.grad[r * k + c];
      for (std::size_t c = 0; c < k; ++c) {
        g[r * k + c] += o.grad[r * k + c] - std::exp(y[r * k + c]) * total;
      }
    }
  });
}

template <typename Real>
Tensor<Real> log(const Tensor<Real>& x) {
  for (Real v : x.data()) {
    if (!(v > Real(0))) {
      throw DomainError("log of non-positive value " + std::to_string(static_cast<double>(v)));
    }
  }
  return unary<Real>(x, [](Real v) { return std::log(v); }, [](TensorNode<Real>& o) {
    const auto& in = *o.parents[0]->data;
    accumulate(o.parents[0], [&](std::size_t i) { return o.grad[i] / in[i]; });
  });
}

template <typename Real>
Tensor<Real> exp(const Tensor<Real>& x) {
  return unary<Real>(x, [](Real v) { return std::exp(v); }, [](TensorNode<Real>& o) {
    const auto& y = *o.data;
    accumulate(o.parents[0], [&](std::size_t i) { return o.grad[i] * y[i]; });
  });
}

template <typename Real>
Tensor<Real> batch_mean(const Tensor<Real>& x) {
  if (x.rank() < 1) throw ShapeError("batch_mean expects rank >= 1");
  const std::size_t n = x.rows();
  const std::size_t stride = x.cols();
  const auto& in = x.data();
  std::vector<Real> out(stride, Real(0));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < stride; ++c) out[c] += in[r * stride + c];
  }
  for (Real& v : out) v /= static_cast<Real>(n);
  Shape shape(x.shape().begin() + 1, x.shape().end());
  return make_result<Real>(std::move(shape), std::move(out), {x.node()},
                           [n, stride](TensorNode<Real>& o) {
    const Real inv = Real(1) / static_cast<Real>(n);
    accumulate(o.parents[0], [&](std::size_t i) { return o.grad[i % stride] * inv; });
  });
}

template <typename Real>
Tensor<Real> sum_last(const Tensor<Real>& x) {
  if (x.rank() < 1) throw ShapeError("sum_last expects rank >= 1");
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.size() / k;
  const auto& in = x.data();
  std::vector<Real> out(rows, Real(0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < k; ++c) out[r] += in[r * k + c];
  }
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  return make_result<Real>(std::move(shape), std::move(out), {x.node()}, [k](TensorNode<Real>& o) {
    accumulate(o.parents[0], [&](std::size_t i) { return o.grad[i / k]; });
  });
}

template <typename Real>
Tensor<Real> sum_all(const Tensor<Real>& x) {
  Real total = 0;
  for (Real v : x.data()) total += v;
  return make_result<Real>({}, {total}, {x.node()}, [](TensorNode<Real>& o) {
    const Real g = o.grad[0];
    accumulate(o.parents[0], [&](std::size_t) { return g; });
  });
}

template <typename Real>
Tensor<Real> sum_of_squares(const Tensor<Real>& x) {
  Real total = 0;
  for (Real v : x.data()) total += v * v;
  return make_result<Real>({}, {total}, {x.node()}, [](TensorNode<Real>& o) {
    const Real g = o.grad[0];
    const auto& in = *o.parents[0]->data;
    accumulate(o.parents[0], [&](std::size_t i) { return Real(2) * in[i] * g; });
  });
}

template <typename Real>
Tensor<Real> center_columns(const Tensor<Real>& x) {
  require_rank2(x.shape(), "center_columns");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  std::vector<Real> out(x.data().begin(), x.data().end());
  auto y = as_mutable_matrix(out, n, m);
  auto mean = column_sums(out, n, m);
  for (auto& v : mean) v /= static_cast<Real>(n);
  y.rowwise() -= Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(mean.data(), static_cast<Eigen::Index>(m));
  return make_result<Real>(x.shape(), std::move(out), {x.node()}, [n, m](TensorNode<Real>& o) {
    const auto& p = o.parents[0];
    if (!p->requires_grad) return;
    const auto g = as_matrix(o.grad, n, m);
    auto gmean = column_sums(o.grad, n, m);
    for (auto& v : gmean) v /= static_cast<Real>(n);
    auto dst = as_mutable_matrix(p->ensure_grad(), n, m);
    dst += g;
    dst.rowwise() -= Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(gmean.data(), static_cast<Eigen::Index>(m));
  });
}

template <typename Real>
Tensor<Real> normalize_rows(const Tensor<Real>& x) {
  require_rank2(x.shape(), "normalize_rows");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  constexpr Real floor = std::numeric_limits<Real>::epsilon();
  std::vector<Real> norms(n);
  std::vector<Real> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < n; ++r) {
    Real ss = 0;
    for (std::size_t c = 0; c < m; ++c) ss += out[r * m + c] * out[r * m + c];
    norms[r] = std::sqrt(ss) + floor;
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] /= norms[r];
  }
  return make_result<Real>(x.shape(), std::move(out), {x.node()},
                           [n, m, norms](TensorNode<Real>& o) {
    const auto& p = o.parents[0];
    if (!p->requires_grad) return;
    auto& g = p->ensure_grad();
    const auto& y = *o.data;
    for (std::size_t r = 0; r < n; ++r) {
      Real dot = 0;
      for (std::size_t c = 0; c < m; ++c) dot += o.grad[r * m + c] * y[r * m + c];
      for (std::size_t c = 0; c < m; ++c) {
        g[r * m + c] += (o.grad[r * m + c] - y[r * m + c] * dot) / norms[r];
      }
    }
  });
}

template <typename Real>
Tensor<Real> scale_gradient(const Tensor<Real>& x, Real factor) {
  std::vector<Real> out(x.data().begin(), x.data().end());
  return make_result<Real>(x.shape(), std::move(out), {x.node()}, [factor](TensorNode<Real>& o) {
    accumulate(o.parents[0], [&](std::size_t i) { return o.grad[i] * factor; });
  });
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::add: return "add";
    case OpKind::subtract: return "subtract";
    case OpKind::multiply: return "multiply";
    case OpKind::matmul: return "matmul";
    case OpKind::concat_last: return "concat_last";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softmax_last: return "softmax_last";
    case OpKind::log: return "log";
    case OpKind::exp: return "exp";
    case OpKind::batch_mean: return "batch_mean";
    case OpKind::sum_of_squares: return "sum_of_squares";
  }
  return "unknown";
}

template <typename Real>
Tensor<Real> apply(OpKind kind, std::span<const Tensor<Real>> inputs) {
  auto arity = [&](std::size_t expected) {
    if (inputs.size() != expected) {
      throw ShapeError(std::string(op_name(kind)) + " takes " + std::to_string(expected) +
                       " inputs, got " + std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::add: arity(2); return add(inputs[0], inputs[1]);
    case OpKind::subtract: arity(2); return sub(inputs[0], inputs[1]);
    case OpKind::multiply: arity(2); return mul(inputs[0], inputs[1]);
    case OpKind::matmul: arity(2); return matmul(inputs[0], inputs[1]);
    case OpKind::concat_last: return concat_last(inputs);
    case OpKind::relu: arity(1); return relu(inputs[0]);
    case OpKind::sigmoid: arity(1); return sigmoid(inputs[0]);
    case OpKind::softmax_last: arity(1); return softmax_last(inputs[0]);
    case OpKind::log: arity(1); return log(inputs[0]);
    case OpKind::exp: arity(1); return exp(inputs[0]);
    case OpKind::batch_mean: arity(1); return batch_mean(inputs[0]);
    case OpKind::sum_of_squares: arity(1); return sum_of_squares(inputs[0]);
  }
  throw ShapeError("unknown op kind");
}

#define DIREP_INSTANTIATE_OPS(Real)                                                              \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);                           \
  template Tensor<Real> sub(const Tensor<Real>&, const Tensor<Real>&);                           \
  template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&);                           \
  template Tensor<Real> scale(const Tensor<Real>&, Real);                                        \
  template Tensor<Real> add_scalar(const Tensor<Real>&, Real);                                   \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);                        \
  template Tensor<Real> affine(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&);   \
  template Tensor<Real> transpose(const Tensor<Real>&);                                          \
  template Tensor<Real> reshape(const Tensor<Real>&, Shape);                                     \
  template Tensor<Real> concat_last(std::span<const Tensor<Real>>);                              \
  template Tensor<Real> concat_last(const Tensor<Real>&, const Tensor<Real>&);                   \
  template Tensor<Real> concat_rows(std::span<const Tensor<Real>>);                              \
  template Tensor<Real> slice_rows(const Tensor<Real>&, std::size_t, std::size_t);               \
  template Tensor<Real> gather_rows(const Tensor<Real>&, std::span<const std::size_t>);          \
  template Tensor<Real> relu(const Tensor<Real>&);                                               \
  template Tensor<Real> sigmoid(const Tensor<Real>&);                                            \
  template Tensor<Real> softmax_last(const Tensor<Real>&);                                       \
  template Tensor<Real> log_softmax_last(const Tensor<Real>&);                                   \
  template Tensor<Real> log(const Tensor<Real>&);                                                \
  template Tensor<Real> exp(const Tensor<Real>&);                                                \
  template Tensor<Real> batch_mean(const Tensor<Real>&);                                         \
  template Tensor<Real> sum_last(const Tensor<Real>&);                                           \
  template Tensor<Real> sum_all(const Tensor<Real>&);                                            \
  template Tensor<Real> sum_of_squares(const Tensor<Real>&);                                     \
  template Tensor<Real> center_columns(const Tensor<Real>&);                                     \
  template Tensor<Real> normalize_rows(const Tensor<Real>&);                                     \
  template Tensor<Real> scale_gradient(const Tensor<Real>&, Real);                               \
  template Tensor<Real> apply(OpKind, std::span<const Tensor<Real>>);

DIREP_INSTANTIATE_OPS(float)
DIREP_INSTANTIATE_OPS(double)

}  // namespace direp
