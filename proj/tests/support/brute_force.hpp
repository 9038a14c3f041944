#pragma once

// Exhaustive enumeration over constraint-allowed tag sequences; the reference
// the dynamic programs are compared against.

#include "leona/crf.hpp"

#include <cmath>
#include <limits>

namespace leona::testing {

struct Enumerated {
  double log_z = -std::numeric_limits<double>::infinity();
  std::vector<Tag> best;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<crf::Row> marginals;
  double probability_mass = 0.0;
};

/// Calls f(tags) for every one of the 3^J sequences.
template <class F>
void for_each_sequence(std::size_t J, F&& f) {
  std::vector<Tag> tags(J, Tag::B);
  std::size_t total = 1;
  for (std::size_t j = 0; j < J; ++j) total *= kNumTags;
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t j = 0; j < J; ++j) {
      tags[j] = tag_at(c % kNumTags);
      c /= kNumTags;
    }
    f(tags);
  }
}

/// Tie order among equal best scores: O before B before I, first position first.
inline bool tie_preferred(const std::vector<Tag>& a, const std::vector<Tag>& b) {
  static constexpr int rank[kNumTags] = {1, 2, 0};
  for (std::size_t j = a.size(); j-- > 0;) {
    if (a[j] != b[j]) return rank[index_of(a[j])] < rank[index_of(b[j])];
  }
  return false;
}

inline Enumerated enumerate(const crf::Emissions& emis, const crf::CrfParams& p) {
  Enumerated out;
  const std::size_t J = emis.size();
  std::vector<std::pair<std::vector<Tag>, double>> allowed;
  for_each_sequence(J, [&](const std::vector<Tag>& tags) {
    if (!p.permits(tags)) return;
    double s = p.start[index_of(tags[0])] + p.end[index_of(tags[J - 1])];
    for (std::size_t j = 0; j < J; ++j) {
      s += emis[j][index_of(tags[j])];
      if (j > 0) s += p.transitions[index_of(tags[j - 1])][index_of(tags[j])];
    }
    allowed.emplace_back(tags, s);
  });
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& [tags, s] : allowed) {
    mx = std::max(mx, s);
    if (s > out.best_score || (s == out.best_score && tie_preferred(tags, out.best))) {
      out.best_score = s;
      out.best = tags;
    }
  }
  double z = 0.0;
  for (const auto& a : allowed) z += std::exp(a.second - mx);
  out.log_z = mx + std::log(z);
  out.marginals.assign(J, crf::Row{});
  for (const auto& [tags, s] : allowed) {
    const double prob = std::exp(s - out.log_z);
    out.probability_mass += prob;
    for (std::size_t j = 0; j < J; ++j) out.marginals[j][index_of(tags[j])] += prob;
  }
  return out;
}

inline double sequence_score(const crf::Emissions& emis, const crf::CrfParams& p,
                             const std::vector<Tag>& tags) {
  const std::size_t J = tags.size();
  double s = p.start[index_of(tags[0])] + p.end[index_of(tags[J - 1])];
  for (std::size_t j = 0; j < J; ++j) {
    s += emis[j][index_of(tags[j])];
    if (j > 0) s += p.transitions[index_of(tags[j - 1])][index_of(tags[j])];
  }
  return s;
}

inline crf::CrfParams random_params(SplitMix64& rng, double scale = 2.0) {
  crf::CrfParams p = crf::CrfParams::iob();
  for (auto& row : p.transitions)
    for (auto& v : row) v = rng.uniform(-scale, scale);
  for (auto& v : p.start) v = rng.uniform(-scale, scale);
  for (auto& v : p.end) v = rng.uniform(-scale, scale);
  return p;
}

inline crf::Emissions random_emissions(SplitMix64& rng, std::size_t J, double scale = 3.0) {
  crf::Emissions e(J);
  for (auto& row : e)
    for (auto& v : row) v = rng.uniform(-scale, scale);
  return e;
}

}  // namespace leona::testing
