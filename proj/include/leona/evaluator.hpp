#pragma once

// Exact-match span scoring in the CoNLL convention: a predicted span is a
// true positive only if start, end and slot type all agree with a gold span.

#include "leona/decoder.hpp"
#include "leona/iob.hpp"
#include "leona/jsonl.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace leona {

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  std::string slot;
  auto operator<=>(const Span&) const = default;
};

inline std::vector<Span> extract_spans(const std::vector<std::string>& labels) {
  if (auto bad = first_iob_violation(labels))
    throw IobError("label sequence is not IOB-valid at position " + std::to_string(*bad) + " ('" +
                   labels[*bad] + "')");
  std::vector<Span> out;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const auto l = TypedLabel::parse(labels[j]);
    if (l.tag == Tag::B) out.push_back({j, j, l.slot});
    else if (l.tag == Tag::I) out.back().end = j;
  }
  return out;
}

/// Inverse of extract_spans for non-overlapping spans.
inline std::vector<std::string> render_spans(const std::vector<Span>& spans, std::size_t length) {
  std::vector<std::string> out(length, "O");
  for (const auto& s : spans) {
    if (s.start > s.end || s.end >= length) throw std::invalid_argument("span outside sequence");
    for (std::size_t j = s.start; j <= s.end; ++j) {
      if (out[j] != "O") throw std::invalid_argument("overlapping spans cannot be rendered");
      out[j] = (j == s.start ? "B-" : "I-") + s.slot;
    }
  }
  return out;
}

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn); }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
  bool empty() const { return tp + fp + fn == 0; }
  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const Counts&) const = default;
};

struct EvalItem {
  std::string id;
  std::string domain;
  std::vector<std::string> gold;
  std::vector<std::string> pred;
};

struct EvalReport {
  std::size_t utterances = 0;
  Counts micro;
  std::map<std::string, Counts> per_slot;
  std::map<std::string, Counts> per_domain;
  std::optional<Counts> seen;    // nullopt: no training inventory given, or partition empty
  std::optional<Counts> unseen;
};

namespace detail {

// Adds span-level counts for one utterance, routed by `key(slot)`; spans for
// which key returns nullopt are skipped.
template <class Key>
void count_spans(const std::vector<Span>& gold, const std::vector<Span>& pred,
                 std::map<std::string, Counts>& table, Key key) {
  const std::set<Span> g(gold.begin(), gold.end()), p(pred.begin(), pred.end());
  for (const auto& s : p)
    if (auto k = key(s.slot)) (g.count(s) ? table[*k].tp : table[*k].fp)++;
  for (const auto& s : g)
    if (!p.count(s))
      if (auto k = key(s.slot)) table[*k].fn++;
}

}  // namespace detail

/// Gold/pred spans split by whether the slot name occurs in the training
/// inventory. An empty partition is reported as nullopt.
inline std::pair<std::optional<Counts>, std::optional<Counts>> seen_unseen_breakdown(
    const std::vector<EvalItem>& items, const std::set<std::string>& train_slots) {
  std::map<std::string, Counts> parts;
  for (const auto& it : items)
    detail::count_spans(extract_spans(it.gold), extract_spans(it.pred), parts,
                        [&](const std::string& slot) -> std::optional<std::string> {
                          return train_slots.count(slot) ? "seen" : "unseen";
                        });
  auto pick = [&](const char* k) -> std::optional<Counts> {
    auto f = parts.find(k);
    if (f == parts.end() || f->second.empty()) return std::nullopt;
    return f->second;
  };
  return {pick("seen"), pick("unseen")};
}

inline EvalReport span_f1(const std::vector<EvalItem>& items,
                          const std::set<std::string>* train_slots = nullptr) {
  EvalReport r;
  r.utterances = items.size();
  for (const auto& it : items) {
    if (it.gold.size() != it.pred.size())
      throw ValidationError("utterance " + it.id + ": gold has " + std::to_string(it.gold.size()) +
                            " labels, prediction has " + std::to_string(it.pred.size()));
    const auto gold = extract_spans(it.gold);
    const auto pred = extract_spans(it.pred);
    detail::count_spans(gold, pred, r.per_slot,
                        [](const std::string& s) -> std::optional<std::string> { return s; });
    std::map<std::string, Counts> one;
    detail::count_spans(gold, pred, one,
                        [](const std::string&) -> std::optional<std::string> { return "all"; });
    r.micro += one["all"];
    r.per_domain[it.domain] += one["all"];
  }
  if (train_slots) std::tie(r.seen, r.unseen) = seen_unseen_breakdown(items, *train_slots);
  return r;
}

/// Pairs gold and predicted records by id, keeping the prediction file's order.
/// Ids present on only one side are listed in the error.
inline std::vector<EvalItem> align(const std::vector<PredictionRecord>& gold,
                                   const std::vector<PredictionRecord>& pred,
                                   const std::map<std::string, std::string>& domains = {}) {
  std::map<std::string, const PredictionRecord*> by_id;
  for (const auto& g : gold)
    if (!by_id.emplace(g.id, &g).second) throw ValidationError("duplicate gold id " + g.id);
  std::vector<std::string> orphans;
  std::set<std::string> used;
  std::vector<EvalItem> out;
  for (const auto& p : pred) {
    auto it = by_id.find(p.id);
    if (it == by_id.end()) {
      orphans.push_back("prediction-only " + p.id);
      continue;
    }
    if (!used.insert(p.id).second) throw ValidationError("duplicate prediction id " + p.id);
    const auto& g = *it->second;
    const auto& labels = g.gold ? *g.gold : g.pred;
    if (g.tokens != p.tokens) throw ValidationError("tokens differ for id " + p.id);
    auto d = domains.find(p.id);
    out.push_back({p.id, d == domains.end() ? "" : d->second, labels, p.pred});
  }
  for (const auto& g : gold)
    if (!used.count(g.id)) orphans.push_back("gold-only " + g.id);
  if (!orphans.empty()) {
    std::string msg = "unaligned ids:";
    for (const auto& o : orphans) msg += " " + o;
    throw ValidationError(msg);
  }
  return out;
}

/// Items from a predictions file that carries its own gold labels.
inline std::vector<EvalItem> items_from(const std::vector<PredictionRecord>& records,
                                        const std::map<std::string, std::string>& domains = {}) {
  std::vector<EvalItem> out;
  for (const auto& r : records) {
    if (!r.gold) throw ValidationError("record " + r.id + " has no gold labels");
    auto d = domains.find(r.id);
    out.push_back({r.id, d == domains.end() ? "" : d->second, *r.gold, r.pred});
  }
  return out;
}

inline json counts_json(const Counts& c) {
  return json{{"tp", c.tp},
              {"fp", c.fp},
              {"fn", c.fn},
              {"precision", c.precision()},
              {"recall", c.recall()},
              {"f1", c.f1()}};
}

inline json report_json(const EvalReport& r) {
  json j;
  j["utterances"] = r.utterances;
  j["micro"] = counts_json(r.micro);
  j["per_slot"] = json::object();
  for (const auto& [k, c] : r.per_slot) j["per_slot"][k] = counts_json(c);
  j["per_domain"] = json::object();
  for (const auto& [k, c] : r.per_domain) j["per_domain"][k] = counts_json(c);
  j["seen"] = r.seen ? counts_json(*r.seen) : json(nullptr);
  j["unseen"] = r.unseen ? counts_json(*r.unseen) : json(nullptr);
  return j;
}

inline std::string report_text(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  auto row = [&](const std::string& name, const Counts& c) {
    os << std::left << std::setw(28) << name << std::right << std::setw(6) << c.tp << std::setw(6)
       << c.fp << std::setw(6) << c.fn << std::setw(9) << c.precision() << std::setw(9)
       << c.recall() << std::setw(9) << c.f1() << "\n";
  };
  auto header = [&](const std::string& title) {
    os << std::left << std::setw(28) << title << std::right << std::setw(6) << "tp" << std::setw(6)
       << "fp" << std::setw(6) << "fn" << std::setw(9) << "P" << std::setw(9) << "R" << std::setw(9)
       << "F1" << "\n";
  };
  os << "utterances: " << r.utterances << "\n\n";
  header("micro");
  row("all", r.micro);
  os << "\n";
  header("slot");
  for (const auto& [k, c] : r.per_slot) row(k, c);
  os << "\n";
  header("domain");
  for (const auto& [k, c] : r.per_domain) row(k.empty() ? "(unknown)" : k, c);
  os << "\n";
  auto opt = [&](const char* name, const std::optional<Counts>& c) {
    os << name << " F1: ";
    if (c) os << c->f1();
    else os << "N/A";
    os << "\n";
  };
  opt("seen", r.seen);
  opt("unseen", r.unseen);
  return os.str();
}

struct Aggregate {
  std::size_t n = 0;
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation; 0 for a single run
};

inline Aggregate aggregate(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("aggregate of no values");
  Aggregate a;
  a.n = values.size();
  for (double v : values) a.mean += v;
  a.mean /= double(a.n);
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stdev = std::sqrt(ss / double(a.n - 1));
  }
  return a;
}

inline std::string format_aggregate(const Aggregate& a, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << a.mean << " ± " << a.stdev;
  return os.str();
}

}  // namespace leona
