#pragma once

// Dense float64 tensors and a reverse-mode differentiation tape.
//
// A Tape records every operation applied to its Vars in execution order; the
// backward pass walks the record once, in reverse. Values stored on the tape
// are immutable once recorded. Parameters live outside any tape and receive
// accumulated gradients when a tape that used them runs backward.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace leona {

using Shape = std::vector<std::size_t>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

class Tensor {
 public:
  Tensor() : shape_{1}, data_(1, 0.0) {}

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(numel(shape_), fill) {
    check_shape();
  }

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (numel(shape_) != data_.size())
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + to_string(shape_));
  }

  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  static Tensor column(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(Shape{n, 1}, std::move(v));
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged rows in from_rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return rank() >= 2 ? shape_[1] : 1; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  void check_shape() const {
    if (shape_.empty()) throw DimensionError("tensor shape must have rank >= 1");
    for (auto d : shape_)
      if (d == 0) throw DimensionError("zero-sized dimension in shape " + to_string(shape_));
  }

  Shape shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
};

/// A trainable tensor that outlives tapes. `grad` accumulates across every
/// tape that ran backward since the last zero_grad().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape(), 0.0) {
    value.set_requires_grad(true);
  }

  void zero_grad() { grad = Tensor(value.shape(), 0.0); }
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using GradientTable = std::map<std::string, Tensor>;

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  /// With grad disabled the tape only evaluates; parameters enter as constants.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor t) {
    t.set_requires_grad(false);
    return push(Node{std::move(t), nullptr, {}, false, {}, nullptr});
  }

  /// Differentiable leaf; its gradient is readable through grad() after backward.
  Var variable(Tensor t) {
    t.set_requires_grad(true);
    return push(Node{std::move(t), nullptr, {}, grad_enabled_, {}, nullptr});
  }

  /// Parameters are referenced, not copied; they must outlive the tape.
  Var param(Parameter& p) {
    const bool rg = grad_enabled_;
    Node n{Tensor(), &p.value, {}, rg, {}, rg ? &p : nullptr};
    return push(std::move(n));
  }

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(fn));
  }

  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    if (backward_done_)
      throw std::logic_error("cannot record on a tape after backward; call reset()");
    bool rg = false;
    for (const auto& v : inputs) {
      if (&v.tape() != this) throw std::logic_error("Var belongs to another tape");
      rg = rg || nodes_[v.id()].requires_grad;
    }
    Node n{std::move(value), nullptr, {}, rg, rg ? std::move(fn) : BackwardFn{}, nullptr};
    return push(std::move(n));
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(const Var& v) const { return nodes_.at(v.id()).requires_grad; }

  /// Gradient buffer for node `id`, zero-initialized on first use.
  Tensor& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Tensor(value(id).shape(), 0.0);
      n.has_grad = true;
    }
    return n.grad;
  }

  const Tensor& grad_of(std::size_t id) const { return nodes_.at(id).grad; }

  /// Gradient of a leaf after backward; zeros when the leaf was not reached.
  Tensor grad(const Var& v) const {
    const Node& n = nodes_.at(v.id());
    if (n.has_grad) return n.grad;
    return Tensor(value(v.id()).shape(), 0.0);
  }

  void backward(const Var& loss) {
    if (&loss.tape() != this) throw std::logic_error("loss belongs to another tape");
    if (backward_done_) throw std::logic_error("backward already ran on this tape; call reset()");
    if (value(loss.id()).size() != 1)
      throw DimensionError("backward requires a scalar loss, got shape " +
                           to_string(value(loss.id()).shape()));
    backward_done_ = true;
    if (!nodes_[loss.id()].requires_grad) return;
    grad_buffer(loss.id()).fill(1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param) {
        auto dst = n.param->grad.values();
        auto src = n.grad.values();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

  /// Gradients of every parameter referenced on this tape, by name.
  GradientTable gradients() const {
    GradientTable table;
    for (const auto& n : nodes_) {
      if (!n.param) continue;
      Tensor g = n.has_grad ? n.grad : Tensor(n.param->value.shape(), 0.0);
      auto it = table.find(n.param->name);
      if (it == table.end()) {
        table.emplace(n.param->name, std::move(g));
      } else {
        for (std::size_t k = 0; k < g.size(); ++k) it->second[k] += g[k];
      }
    }
    return table;
  }

  std::size_t size() const { return nodes_.size(); }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool has_grad = false;

    Node(Tensor v, const Tensor* ext, Tensor g, bool rg, BackwardFn fn, Parameter* p)
        : value(std::move(v)), external(ext), grad(std::move(g)), requires_grad(rg),
          backward(std::move(fn)), param(p) {}
  };

  Var push(Node n) {
    if (backward_done_)
      throw std::logic_error("cannot record on a tape after backward; call reset()");
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

}  // namespace leona
