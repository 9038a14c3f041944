#pragma once

// Differentiable operations over tape Vars. Every forward result is checked
// for NaN/Inf; binary elementwise kinds broadcast numpy-style (right-aligned,
// size-1 dimensions stretch).

#include "leona/rng.hpp"
#include "leona/tensor.hpp"

namespace leona::ops {

namespace detail {

inline void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite())
    throw NumericError(std::string("non-finite value produced by ") + op);
}

struct Broadcast {
  Shape out;
  std::vector<std::size_t> a_strides;
  std::vector<std::size_t> b_strides;
  bool same = false;

  Broadcast(const Shape& a, const Shape& b) {
    if (a == b) {
      out = a;
      same = true;
      return;
    }
    const std::size_t rank = std::max(a.size(), b.size());
    out.assign(rank, 1);
    a_strides.assign(rank, 0);
    b_strides.assign(rank, 0);
    auto dim_at = [rank](const Shape& s, std::size_t d) -> std::size_t {
      const std::size_t off = rank - s.size();
      return d < off ? 1 : s[d - off];
    };
    for (std::size_t d = 0; d < rank; ++d) {
      const std::size_t da = dim_at(a, d), db = dim_at(b, d);
      if (da != db && da != 1 && db != 1)
        throw DimensionError("shapes " + to_string(a) + " and " + to_string(b) +
                             " are not broadcastable");
      out[d] = std::max(da, db);
    }
    std::size_t sa = 1, sb = 1;
    for (std::size_t d = rank; d-- > 0;) {
      const std::size_t da = dim_at(a, d), db = dim_at(b, d);
      a_strides[d] = da == 1 ? 0 : sa;
      b_strides[d] = db == 1 ? 0 : sb;
      sa *= da;
      sb *= db;
    }
  }

  /// Calls f(out_index, a_index, b_index) for every output element.
  template <class F>
  void for_each(F&& f) const {
    const std::size_t n = numel(out);
    if (same) {
      for (std::size_t i = 0; i < n; ++i) f(i, i, i);
      return;
    }
    const std::size_t rank = out.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ai = 0, bi = 0;
    for (std::size_t o = 0; o < n; ++o) {
      f(o, ai, bi);
      for (std::size_t d = rank; d-- > 0;) {
        ++idx[d];
        ai += a_strides[d];
        bi += b_strides[d];
        if (idx[d] < out[d]) break;
        ai -= a_strides[d] * out[d];
        bi -= b_strides[d] * out[d];
        idx[d] = 0;
      }
    }
  }
};

// (outer, axis length, inner) view of a shape around one axis.
struct AxisView {
  std::size_t outer = 1, n = 1, inner = 1;
  AxisView(const Shape& s, std::size_t axis) {
    if (axis >= s.size())
      throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                           to_string(s));
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    n = s[axis];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  }
  std::size_t at(std::size_t o, std::size_t k, std::size_t i) const {
    return (o * n + k) * inner + i;
  }
};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

enum class OpKind { add, sub, mul, sigmoid, tanh, relu };

inline Var add(const Var& a, const Var& b);
inline Var sub(const Var& a, const Var& b);
inline Var mul(const Var& a, const Var& b);

namespace detail {

template <class Fwd, class DA, class DB>
Var binary(const Var& a, const Var& b, const char* name, Fwd fwd, DA da, DB db) {
  Tape& tape = a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Broadcast plan(av.shape(), bv.shape());
  Tensor out(plan.out);
  plan.for_each([&](std::size_t o, std::size_t i, std::size_t j) { out[o] = fwd(av[i], bv[j]); });
  check_finite(out, name);
  return tape.record(std::move(out), {a, b}, [a, b, plan, da, db](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_buffer(a.id());
      plan.for_each([&](std::size_t o, std::size_t i, std::size_t j) {
        ga[i] += g[o] * da(av[i], bv[j]);
      });
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b.id());
      plan.for_each([&](std::size_t o, std::size_t i, std::size_t j) {
        gb[j] += g[o] * db(av[i], bv[j]);
      });
    }
  });
}

// Unary op whose derivative is expressed through the output value.
template <class Fwd, class D>
Var unary(const Var& a, const char* name, Fwd fwd, D d_from_out) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  check_finite(out, name);
  return a.tape().record(std::move(out), {a}, [a, d_from_out](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * d_from_out(y[i], a.value()[i]);
  });
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline Var mul(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

inline Var sigmoid(const Var& a) {
  return detail::unary(
      a, "sigmoid", [](double x) { return detail::sigmoid(x); },
      [](double y, double) { return y * (1.0 - y); });
}

inline Var tanh(const Var& a) {
  return detail::unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double y, double) { return 1.0 - y * y; });
}

inline Var relu(const Var& a) {
  return detail::unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double, double x) { return x > 0.0 ? 1.0 : 0.0; });
}

/// Dispatches on kind; `b` is required for the binary kinds and ignored otherwise.
inline Var elementwise(OpKind kind, const Var& a, const Var* b = nullptr) {
  auto need_b = [&]() -> const Var& {
    if (!b) throw std::invalid_argument("binary elementwise op needs a second operand");
    return *b;
  };
  switch (kind) {
    case OpKind::add: return add(a, need_b());
    case OpKind::sub: return sub(a, need_b());
    case OpKind::mul: return mul(a, need_b());
    case OpKind::sigmoid: return sigmoid(a);
    case OpKind::tanh: return tanh(a);
    case OpKind::relu: return relu(a);
  }
  throw std::invalid_argument("unknown op kind");
}

/// scale * a + shift
inline Var affine(const Var& a, double scale, double shift) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = scale * av[i] + shift;
  detail::check_finite(out, "affine");
  return a.tape().record(std::move(out), {a}, [a, scale](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += scale * g[i];
  });
}

inline Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2)
    throw DimensionError("matmul needs rank-2 operands, got " + to_string(av.shape()) + " and " +
                         to_string(bv.shape()));
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k)
    throw DimensionError("matmul inner dimensions disagree: " + to_string(av.shape()) + " x " +
                         to_string(bv.shape()));
  Tensor out(Shape{m, n});
  using detail::ConstMap;
  detail::MutMap(out.data(), m, n).noalias() = ConstMap(av.data(), m, k) * ConstMap(bv.data(), k, n);
  detail::check_finite(out, "matmul");
  return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, std::size_t self) {
    ConstMap g(t.grad_of(self).data(), m, n);
    if (t.requires_grad(a)) {
      detail::MutMap(t.grad_buffer(a.id()).data(), m, k).noalias() +=
          g * ConstMap(b.value().data(), k, n).transpose();
    }
    if (t.requires_grad(b)) {
      detail::MutMap(t.grad_buffer(b.id()).data(), k, n).noalias() +=
          ConstMap(a.value().data(), m, k).transpose() * g;
    }
  });
}

inline Var transpose(const Var& a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw DimensionError("transpose needs rank 2, got " + to_string(av.shape()));
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return a.tape().record(std::move(out), {a}, [a, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

inline Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of an empty list");
  if (parts.size() == 1) return parts.front();
  const Shape& first = parts.front().shape();
  Shape out_shape = first;
  if (axis >= first.size()) throw DimensionError("concat axis out of range for " + to_string(first));
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d)
      if (d != axis && s[d] != first[d]) ok = false;
    if (!ok)
      throw DimensionError("concat: incompatible shapes " + to_string(first) + " and " +
                           to_string(s) + " along axis " + std::to_string(axis));
    out_shape[axis] += s[axis];
  }
  Tensor out(out_shape);
  detail::AxisView ov(out_shape, axis);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const Tensor& pv = p.value();
    detail::AxisView pvw(pv.shape(), axis);
    for (std::size_t o = 0; o < pvw.outer; ++o)
      for (std::size_t k = 0; k < pvw.n; ++k)
        std::copy_n(pv.data() + pvw.at(o, k, 0), pvw.inner, out.data() + ov.at(o, off + k, 0));
    off += pvw.n;
  }
  return parts.front().tape().record(
      std::move(out), parts, [parts, offsets, axis, ov](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_of(self);
        for (std::size_t p = 0; p < parts.size(); ++p) {
          if (!t.requires_grad(parts[p])) continue;
          Tensor& gp = t.grad_buffer(parts[p].id());
          detail::AxisView pvw(gp.shape(), axis);
          for (std::size_t o = 0; o < pvw.outer; ++o)
            for (std::size_t k = 0; k < pvw.n; ++k) {
              const double* src = g.data() + ov.at(o, offsets[p] + k, 0);
              double* dst = gp.data() + pvw.at(o, k, 0);
              for (std::size_t i = 0; i < pvw.inner; ++i) dst[i] += src[i];
            }
        }
      });
}

/// Elements [begin, end) along `axis`.
inline Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  detail::AxisView view(av.shape(), axis);
  if (begin >= end || end > view.n)
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for axis of length " + std::to_string(view.n));
  Shape s = av.shape();
  s[axis] = end - begin;
  Tensor out(s);
  detail::AxisView outv(s, axis);
  for (std::size_t o = 0; o < view.outer; ++o)
    for (std::size_t k = begin; k < end; ++k)
      std::copy_n(av.data() + view.at(o, k, 0), view.inner, out.data() + outv.at(o, k - begin, 0));
  return a.tape().record(std::move(out), {a}, [a, view, outv, begin, end](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_buffer(a.id());
    for (std::size_t o = 0; o < view.outer; ++o)
      for (std::size_t k = begin; k < end; ++k) {
        const double* src = g.data() + outv.at(o, k - begin, 0);
        double* dst = ga.data() + view.at(o, k, 0);
        for (std::size_t i = 0; i < view.inner; ++i) dst[i] += src[i];
      }
  });
}

inline std::vector<Var> split(const Var& a, std::size_t axis, const std::vector<std::size_t>& sizes) {
  std::vector<Var> out;
  std::size_t off = 0;
  for (auto s : sizes) {
    out.push_back(slice(a, axis, off, off + s));
    off += s;
  }
  if (off != a.shape().at(axis))
    throw DimensionError("split sizes do not cover axis " + std::to_string(axis));
  return out;
}

/// Max-subtracted softmax along `axis`.
inline Var softmax(const Var& a, std::size_t axis) {
  const Tensor& av = a.value();
  detail::AxisView v(av.shape(), axis);
  Tensor out(av.shape());
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < v.n; ++k) mx = std::max(mx, av[v.at(o, k, i)]);
      double z = 0.0;
      for (std::size_t k = 0; k < v.n; ++k) {
        const double e = std::exp(av[v.at(o, k, i)] - mx);
        out[v.at(o, k, i)] = e;
        z += e;
      }
      for (std::size_t k = 0; k < v.n; ++k) out[v.at(o, k, i)] /= z;
    }
  detail::check_finite(out, "softmax");
  return a.tape().record(std::move(out), {a}, [a, v](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_buffer(a.id());
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < v.inner; ++i) {
        double dot = 0.0;
        for (std::size_t k = 0; k < v.n; ++k) dot += g[v.at(o, k, i)] * y[v.at(o, k, i)];
        for (std::size_t k = 0; k < v.n; ++k) {
          const std::size_t idx = v.at(o, k, i);
          ga[idx] += y[idx] * (g[idx] - dot);
        }
      }
  });
}

/// Reduces `axis` by max. The gradient goes to the first (lowest-index) argmax.
inline Var max_over_axis(const Var& a, std::size_t axis) {
  const Tensor& av = a.value();
  detail::AxisView v(av.shape(), axis);
  Shape s = av.shape();
  s.erase(s.begin() + static_cast<std::ptrdiff_t>(axis));
  if (s.empty()) s = {1};
  Tensor out(s);
  std::vector<std::size_t> argmax(v.outer * v.inner);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.inner; ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < v.n; ++k)
        if (av[v.at(o, k, i)] > av[v.at(o, best, i)]) best = k;
      argmax[o * v.inner + i] = v.at(o, best, i);
      out[o * v.inner + i] = av[v.at(o, best, i)];
    }
  return a.tape().record(std::move(out), {a}, [a, argmax](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_buffer(a.id());
    for (std::size_t r = 0; r < argmax.size(); ++r) ga[argmax[r]] += g[r];
  });
}

inline Var sum(const Var& a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double x : av.values()) s += x;
  Tensor out = Tensor::scalar(s);
  detail::check_finite(out, "sum");
  return a.tape().record(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0];
    Tensor& ga = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

/// Selects columns of a (dim x vocab) table: result is (dim x ids.size()).
inline Var gather_cols(const Var& table, const std::vector<std::size_t>& ids) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("gather_cols needs a rank-2 table");
  const std::size_t dim = tv.rows(), vocab = tv.cols(), n = ids.size();
  if (n == 0) throw DimensionError("gather_cols with no ids");
  for (auto id : ids)
    if (id >= vocab)
      throw DimensionError("gather index " + std::to_string(id) + " outside vocabulary of " +
                           std::to_string(vocab));
  Tensor out(Shape{dim, n});
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = tv[r * vocab + ids[j]];
  return table.tape().record(std::move(out), {table}, [table, ids, dim, vocab, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    Tensor& gt = t.grad_buffer(table.id());
    for (std::size_t r = 0; r < dim; ++r)
      for (std::size_t j = 0; j < n; ++j) gt[r * vocab + ids[j]] += g[r * n + j];
  });
}

/// Inverted dropout: survivors are scaled by 1/(1-rate) so eval mode is identity.
inline Var dropout(const Var& a, double rate, bool training, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout rate must lie in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return a;
  const Tensor& av = a.value();
  SplitMix64 rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(av.size());
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    out[i] = av[i] * mask[i];
  }
  return a.tape().record(std::move(out), {a}, [a, mask = std::move(mask)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_buffer(a.id());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
  });
}

}  // namespace leona::ops
