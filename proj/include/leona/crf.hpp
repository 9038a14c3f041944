#pragma once

// Linear-chain CRF over {B, I, O}.
//
// Path score of tags y over J positions:
//   start[y0] + sum_j emit[j][y_j] + sum_{j>0} trans[y_{j-1}][y_j] + end[y_{J-1}]
// Forbidden moves (O -> I, and I as the first tag) add kForbidden to the
// score instead of -inf so every quantity stays finite.

#include "leona/iob.hpp"
#include "leona/ops.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace leona::crf {

inline constexpr double kForbidden = -1e4;

using Row = std::array<double, kNumTags>;
using Emissions = std::vector<Row>;

struct CrfParams {
  std::array<Row, kNumTags> transitions{};  // [previous][current]
  Row start{};
  Row end{};
  std::array<std::array<bool, kNumTags>, kNumTags> allowed{};
  std::array<bool, kNumTags> start_allowed{};

  /// Zero scores with the IOB constraint mask.
  static CrfParams iob() {
    CrfParams p;
    for (auto& row : p.allowed) row.fill(true);
    p.start_allowed.fill(true);
    p.allowed[index_of(Tag::O)][index_of(Tag::I)] = false;
    p.start_allowed[index_of(Tag::I)] = false;
    return p;
  }

  double transition(std::size_t prev, std::size_t cur) const {
    return transitions[prev][cur] + (allowed[prev][cur] ? 0.0 : kForbidden);
  }
  double start_score(std::size_t t) const { return start[t] + (start_allowed[t] ? 0.0 : kForbidden); }
  double end_score(std::size_t t) const { return end[t]; }

  bool permits(const std::vector<Tag>& tags) const {
    for (std::size_t j = 0; j < tags.size(); ++j) {
      const auto c = index_of(tags[j]);
      if (j == 0 ? !start_allowed[c] : !allowed[index_of(tags[j - 1])][c]) return false;
    }
    return true;
  }
};

namespace detail {

inline double logsumexp(const double* v, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

inline void require_nonempty(const Emissions& e) {
  if (e.empty()) throw std::invalid_argument("CRF needs at least one position");
}

// Tie preference during decoding: O, then B, then I.
inline int preference(std::size_t tag) {
  static constexpr int rank[kNumTags] = {1, 2, 0};
  return rank[tag];
}

inline bool better(double a, std::size_t ta, double b, std::size_t tb) {
  return a > b || (a == b && preference(ta) < preference(tb));
}

}  // namespace detail

/// Forward/backward tables plus the normalizer.
struct Lattice {
  std::vector<Row> alpha;
  std::vector<Row> beta;
  double log_z = 0.0;
};

inline Lattice forward_backward(const Emissions& emis, const CrfParams& p) {
  detail::require_nonempty(emis);
  const std::size_t J = emis.size();
  Lattice L;
  L.alpha.resize(J);
  L.beta.resize(J);
  for (std::size_t t = 0; t < kNumTags; ++t) L.alpha[0][t] = p.start_score(t) + emis[0][t];
  double buf[kNumTags];
  for (std::size_t j = 1; j < J; ++j)
    for (std::size_t c = 0; c < kNumTags; ++c) {
      for (std::size_t q = 0; q < kNumTags; ++q) buf[q] = L.alpha[j - 1][q] + p.transition(q, c);
      L.alpha[j][c] = detail::logsumexp(buf, kNumTags) + emis[j][c];
    }
  for (std::size_t t = 0; t < kNumTags; ++t) L.beta[J - 1][t] = p.end_score(t);
  for (std::size_t j = J - 1; j-- > 0;)
    for (std::size_t q = 0; q < kNumTags; ++q) {
      for (std::size_t c = 0; c < kNumTags; ++c)
        buf[c] = p.transition(q, c) + emis[j + 1][c] + L.beta[j + 1][c];
      L.beta[j][q] = detail::logsumexp(buf, kNumTags);
    }
  for (std::size_t t = 0; t < kNumTags; ++t) buf[t] = L.alpha[J - 1][t] + p.end_score(t);
  L.log_z = detail::logsumexp(buf, kNumTags);
  return L;
}

inline double log_partition(const Emissions& emis, const CrfParams& p) {
  return forward_backward(emis, p).log_z;
}

inline double path_score(const Emissions& emis, const std::vector<Tag>& tags, const CrfParams& p) {
  if (tags.size() != emis.size())
    throw std::invalid_argument("label count " + std::to_string(tags.size()) +
                                " does not match emission rows " + std::to_string(emis.size()));
  double s = 0.0;
  for (std::size_t j = 0; j < tags.size(); ++j) {
    const auto c = index_of(tags[j]);
    s += emis[j][c];
    s += j == 0 ? p.start_score(c) : p.transition(index_of(tags[j - 1]), c);
  }
  return s + p.end_score(index_of(tags.back()));
}

inline double log_likelihood(const Emissions& emis, const std::vector<Tag>& tags, const CrfParams& p) {
  detail::require_nonempty(emis);
  if (!p.permits(tags))
    throw IobError("label sequence violates the CRF constraint mask: " + to_string(tags));
  return std::min(0.0, path_score(emis, tags, p) - log_partition(emis, p));
}

struct Decoded {
  std::vector<Tag> tags;
  double path_log_prob = 0.0;
};

inline Decoded viterbi(const Emissions& emis, const CrfParams& p) {
  detail::require_nonempty(emis);
  const std::size_t J = emis.size();
  std::vector<Row> score(J);
  std::vector<std::array<std::size_t, kNumTags>> back(J);
  for (std::size_t t = 0; t < kNumTags; ++t) score[0][t] = p.start_score(t) + emis[0][t];
  for (std::size_t j = 1; j < J; ++j)
    for (std::size_t c = 0; c < kNumTags; ++c) {
      std::size_t best = 0;
      double best_s = score[j - 1][0] + p.transition(0, c);
      for (std::size_t q = 1; q < kNumTags; ++q) {
        const double s = score[j - 1][q] + p.transition(q, c);
        if (detail::better(s, q, best_s, best)) {
          best = q;
          best_s = s;
        }
      }
      score[j][c] = best_s + emis[j][c];
      back[j][c] = best;
    }
  std::size_t last = 0;
  double last_s = score[J - 1][0] + p.end_score(0);
  for (std::size_t t = 1; t < kNumTags; ++t) {
    const double s = score[J - 1][t] + p.end_score(t);
    if (detail::better(s, t, last_s, last)) {
      last = t;
      last_s = s;
    }
  }
  Decoded d;
  d.tags.resize(J);
  std::size_t cur = last;
  for (std::size_t j = J; j-- > 0;) {
    d.tags[j] = tag_at(cur);
    if (j > 0) cur = back[j][cur];
  }
  d.path_log_prob = std::min(0.0, last_s - log_partition(emis, p));
  return d;
}

/// Posterior tag marginals, J x 3.
inline std::vector<Row> marginals(const Emissions& emis, const CrfParams& p) {
  const Lattice L = forward_backward(emis, p);
  std::vector<Row> m(emis.size());
  for (std::size_t j = 0; j < emis.size(); ++j)
    for (std::size_t t = 0; t < kNumTags; ++t)
      m[j][t] = std::exp(L.alpha[j][t] + L.beta[j][t] - L.log_z);
  return m;
}

/// Reads a (J x 3) emission tensor.
inline Emissions to_emissions(const Tensor& t) {
  if (t.rank() != 2 || t.cols() != kNumTags)
    throw DimensionError("emissions must be (J,3), got " + to_string(t.shape()));
  Emissions e(t.rows());
  for (std::size_t j = 0; j < t.rows(); ++j)
    for (std::size_t c = 0; c < kNumTags; ++c) e[j][c] = t.at(j, c);
  return e;
}

/// Scores taken from tensors: transitions (3,3), start (3,1), end (3,1).
inline CrfParams params_from(const Tensor& transitions, const Tensor& start, const Tensor& end) {
  if (transitions.size() != kNumTags * kNumTags || start.size() != kNumTags || end.size() != kNumTags)
    throw DimensionError("CRF parameter tensors must hold 3x3, 3 and 3 values");
  CrfParams p = CrfParams::iob();
  for (std::size_t a = 0; a < kNumTags; ++a) {
    for (std::size_t b = 0; b < kNumTags; ++b) p.transitions[a][b] = transitions[a * kNumTags + b];
    p.start[a] = start[a];
    p.end[a] = end[a];
  }
  return p;
}

/// -log P(tags | emissions) as a tape node. Gradients are expected counts
/// under the model minus the observed counts.
inline Var neg_log_likelihood(const Var& emissions, const Var& transitions, const Var& start,
                              const Var& end, const std::vector<Tag>& tags) {
  const Emissions emis = to_emissions(emissions.value());
  const CrfParams p = params_from(transitions.value(), start.value(), end.value());
  if (tags.size() != emis.size())
    throw std::invalid_argument("label count does not match emission rows");
  const double nll = -log_likelihood(emis, tags, p);
  Tensor out = Tensor::scalar(std::max(0.0, nll));
  return emissions.tape().record(
      std::move(out), {emissions, transitions, start, end},
      [emissions, transitions, start, end, tags](Tape& t, std::size_t self) {
        const double g = t.grad_of(self)[0];
        const Emissions emis = to_emissions(emissions.value());
        const CrfParams p = params_from(transitions.value(), start.value(), end.value());
        const Lattice L = forward_backward(emis, p);
        const std::size_t J = emis.size();
        if (t.requires_grad(emissions)) {
          Tensor& ge = t.grad_buffer(emissions.id());
          for (std::size_t j = 0; j < J; ++j)
            for (std::size_t c = 0; c < kNumTags; ++c) {
              const double mu = std::exp(L.alpha[j][c] + L.beta[j][c] - L.log_z);
              ge[j * kNumTags + c] += g * (mu - (index_of(tags[j]) == c ? 1.0 : 0.0));
            }
        }
        if (t.requires_grad(transitions)) {
          Tensor& gt = t.grad_buffer(transitions.id());
          for (std::size_t j = 1; j < J; ++j)
            for (std::size_t q = 0; q < kNumTags; ++q)
              for (std::size_t c = 0; c < kNumTags; ++c) {
                const double xi = std::exp(L.alpha[j - 1][q] + p.transition(q, c) + emis[j][c] +
                                           L.beta[j][c] - L.log_z);
                const double seen =
                    (index_of(tags[j - 1]) == q && index_of(tags[j]) == c) ? 1.0 : 0.0;
                gt[q * kNumTags + c] += g * (xi - seen);
              }
        }
        if (t.requires_grad(start)) {
          Tensor& gs = t.grad_buffer(start.id());
          for (std::size_t c = 0; c < kNumTags; ++c) {
            const double mu = std::exp(L.alpha[0][c] + L.beta[0][c] - L.log_z);
            gs[c] += g * (mu - (index_of(tags[0]) == c ? 1.0 : 0.0));
          }
        }
        if (t.requires_grad(end)) {
          Tensor& gn = t.grad_buffer(end.id());
          for (std::size_t c = 0; c < kNumTags; ++c) {
            const double mu = std::exp(L.alpha[J - 1][c] + L.beta[J - 1][c] - L.log_z);
            gn[c] += g * (mu - (index_of(tags[J - 1]) == c ? 1.0 : 0.0));
          }
        }
      });
}

}  // namespace leona::crf
