#pragma once

// Central finite differences, shared by the unit tests and the acceptance run.

#include "leona/network.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace leona::testing {

/// |a - b| / max(|a|, |b|), with pairs below `floor` in magnitude compared
/// absolutely against floor (both are then numerically zero).
inline double relative_error(double a, double b, double floor = 1e-7) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / scale;
}

struct GradReport {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

/// Compares p.grad (already filled by backward) against central differences
/// of `loss` on up to `max_entries` evenly spaced entries of p.
inline GradReport check_parameter(Parameter& p, const std::function<double()>& loss,
                                  std::size_t max_entries = 0, double step = 1e-5) {
  GradReport r;
  const std::size_t n = p.value.size();
  const std::size_t stride = max_entries == 0 || n <= max_entries ? 1 : n / max_entries;
  const Tensor analytic = p.grad;
  for (std::size_t i = 0; i < n; i += stride) {
    const double keep = p.value[i];
    p.value[i] = keep + step;
    const double up = loss();
    p.value[i] = keep - step;
    const double down = loss();
    p.value[i] = keep;
    const double numeric = (up - down) / (2.0 * step);
    r.max_rel = std::max(r.max_rel, relative_error(analytic[i], numeric));
    ++r.checked;
  }
  return r;
}

/// Checks d(sum(w * f(x)))/dx for a single-input op against central differences.
/// `w` is a fixed random weighting so every output element contributes.
inline GradReport check_op(const Tensor& x0, const std::function<Var(const Var&)>& f,
                           std::uint64_t seed = 3, double step = 1e-6) {
  Parameter p("x", x0);
  Tensor weights;
  auto eval = [&](bool grad) {
    Tape t(grad);
    Var y = f(t.param(p));
    if (weights.size() != y.value().size() || weights.shape() != y.shape()) {
      weights = Tensor(y.shape());
      SplitMix64 rng(seed);
      for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = rng.uniform(-1.0, 1.0);
    }
    Var loss = ops::sum(ops::mul(y, t.constant(weights)));
    if (grad) {
      p.zero_grad();
      t.backward(loss);
    }
    return loss.value()[0];
  };
  eval(true);
  return check_parameter(p, [&] { return eval(false); }, 0, step);
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

struct OpCase {
  std::string name;
  Tensor input;
  std::function<Var(const Var&)> f;
};

/// One case per autodiff op; binary ops are checked in each argument slot.
/// Inputs stay away from the kinks of relu and max.
inline std::vector<OpCase> op_cases() {
  using namespace ops;
  const Tensor m23 = random_tensor({2, 3}, 11);
  const Tensor other23 = random_tensor({2, 3}, 12);
  const Tensor row13 = random_tensor({1, 3}, 13);
  const Tensor m34 = random_tensor({3, 4}, 14);
  Tensor away = random_tensor({3, 4}, 15, 0.1, 1.0);
  for (std::size_t i = 0; i < away.size(); i += 2) away[i] = -away[i];
  Tensor distinct = random_tensor({3, 4}, 16);
  for (std::size_t i = 0; i < distinct.size(); ++i) distinct[i] += 0.3 * static_cast<double>(i);
  auto c = [](const Var& like, const Tensor& t) { return like.tape().constant(t); };

  std::vector<OpCase> cases;
  cases.push_back({"add", m23, [=](const Var& x) { return add(x, c(x, other23)); }});
  cases.push_back({"add_broadcast_row", row13, [=](const Var& x) { return add(c(x, m23), x); }});
  cases.push_back({"sub_left", m23, [=](const Var& x) { return sub(x, c(x, other23)); }});
  cases.push_back({"sub_right_broadcast", row13, [=](const Var& x) { return sub(c(x, m23), x); }});
  cases.push_back({"mul", m23, [=](const Var& x) { return mul(x, c(x, other23)); }});
  cases.push_back({"mul_self", m23, [=](const Var& x) { return mul(x, x); }});
  cases.push_back({"mul_broadcast_col", random_tensor({2, 1}, 17),
                   [=](const Var& x) { return mul(c(x, m23), x); }});
  cases.push_back({"sigmoid", m34, [](const Var& x) { return sigmoid(x); }});
  cases.push_back({"tanh", m34, [](const Var& x) { return ops::tanh(x); }});
  cases.push_back({"relu", away, [](const Var& x) { return relu(x); }});
  cases.push_back({"affine", m34, [](const Var& x) { return affine(x, -1.7, 0.4); }});
  cases.push_back({"matmul_left", m23, [=](const Var& x) { return matmul(x, c(x, m34)); }});
  cases.push_back({"matmul_right", m34, [=](const Var& x) { return matmul(c(x, m23), x); }});
  cases.push_back({"transpose", m23, [](const Var& x) { return transpose(x); }});
  cases.push_back({"reshape", m34, [](const Var& x) { return reshape(x, Shape{2, 6}); }});
  cases.push_back({"concat_rows", m23, [=](const Var& x) { return concat({x, c(x, other23), x}, 0); }});
  cases.push_back({"concat_cols", m23, [=](const Var& x) { return concat({c(x, other23), x}, 1); }});
  cases.push_back({"slice", m34, [](const Var& x) { return slice(x, 1, 1, 3); }});
  cases.push_back({"split", m34, [](const Var& x) {
                     auto parts = split(x, 0, {1, 2});
                     return mul(parts[1], parts[1]);
                   }});
  cases.push_back({"softmax_rows", m34, [](const Var& x) { return softmax(x, 1); }});
  cases.push_back({"softmax_cols", m34, [](const Var& x) { return softmax(x, 0); }});
  cases.push_back({"max_over_axis", distinct, [](const Var& x) { return max_over_axis(x, 1); }});
  cases.push_back({"sum", m34, [](const Var& x) { return sum(mul(x, x)); }});
  cases.push_back({"gather_cols", m34, [](const Var& x) { return gather_cols(x, {3, 0, 3, 1}); }});
  cases.push_back({"dropout", m34, [](const Var& x) { return dropout(x, 0.4, true, 9); }});
  cases.push_back({"crf_nll_emissions", random_tensor({4, 3}, 18), [](const Var& x) {
                     Tape& t = x.tape();
                     return crf::neg_log_likelihood(x, t.constant(random_tensor({3, 3}, 19)),
                                                    t.constant(random_tensor({3}, 20)),
                                                    t.constant(random_tensor({3}, 21)),
                                                    {Tag::B, Tag::I, Tag::O, Tag::B});
                   }});
  cases.push_back({"crf_nll_transitions", random_tensor({3, 3}, 19), [](const Var& x) {
                     Tape& t = x.tape();
                     return crf::neg_log_likelihood(t.constant(random_tensor({4, 3}, 18)), x,
                                                    t.constant(random_tensor({3}, 20)),
                                                    t.constant(random_tensor({3}, 21)),
                                                    {Tag::B, Tag::I, Tag::O, Tag::B});
                   }});
  cases.push_back({"crf_nll_start_end", random_tensor({3}, 20), [](const Var& x) {
                     Tape& t = x.tape();
                     return crf::neg_log_likelihood(t.constant(random_tensor({4, 3}, 18)),
                                                    t.constant(random_tensor({3, 3}, 19)), x, x,
                                                    {Tag::O, Tag::B, Tag::I, Tag::I});
                   }});
  return cases;
}

// -- network fixtures -----------------------------------------------------------

/// A model small enough for finite differences over every parameter.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.pos_dim = 4;
  c.ner_dim = 3;
  c.ctx_dim = 6;
  c.fused_dim = 5;
  c.lstm_hidden = 3;
  c.iob_feed_dim = 2;
  c.head_dim = 4;
  c.dropout = 0.3;
  return c;
}

struct TinyExample {
  Utterance utterance;
  SlotType slot;
  TrainingExample example;
  Features utterance_features;
  Features description_features;
};

inline TinyExample tiny_example(const ModelConfig& cfg) {
  TinyExample e;
  e.utterance = {"t-1", "d", "i", {"book", "the", "Blue", "Hill", "now"},
                 {"O", "O", "B-restaurant_name", "I-restaurant_name", "O"}};
  e.slot = {"restaurant_name", {"restaurant", "name"}, {"d"}};
  e.example = generate_examples(e.utterance, {e.slot}, 0, 1).front();
  const FallbackProvider provider(cfg.ctx_dim);
  const Annotation ua = provider.annotate(e.utterance);
  const Annotation da = provider.annotate(e.slot);
  e.utterance_features = make_features(e.utterance.tokens, &ua, cfg);
  e.description_features = make_features(e.slot.description, &da, cfg);
  return e;
}

}  // namespace leona::testing
