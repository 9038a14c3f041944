#pragma once

// Zero-shot inference: one forward pass per candidate slot type, a
// constrained Viterbi decode per slot, then a greedy merge of the typed spans.

#include "leona/annotators.hpp"
#include "leona/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

namespace leona {

struct ScoredSpan {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  double confidence = 0.0;
  std::string slot;

  TokenRange range() const { return {start, end}; }
  bool operator==(const ScoredSpan&) const = default;
};

struct SlotPrediction {
  std::string slot_type;
  std::vector<Tag> labels;
  std::vector<ScoredSpan> spans;
};

struct MergedPrediction {
  std::vector<std::string> labels;
  std::vector<ScoredSpan> spans;  // accepted spans, in acceptance order
};

enum class ConfidenceMode { span_marginals, path_probability };

/// Decodes one slot's emissions. Span confidence is the geometric mean of the
/// posterior marginals of the decoded tags over the span, or the whole-path
/// probability in path_probability mode.
inline SlotPrediction decode_slot(const std::string& slot, const crf::Emissions& emissions,
                                  const crf::CrfParams& params,
                                  ConfidenceMode mode = ConfidenceMode::span_marginals) {
  SlotPrediction out;
  out.slot_type = slot;
  const crf::Decoded d = crf::viterbi(emissions, params);
  out.labels = d.tags;
  const auto runs = tag_runs(d.tags);
  if (runs.empty()) return out;
  const auto marg = crf::marginals(emissions, params);
  for (const auto& r : runs) {
    double conf;
    if (mode == ConfidenceMode::path_probability) {
      conf = std::exp(d.path_log_prob);
    } else {
      double log_sum = 0.0;
      for (std::size_t j = r.start; j <= r.end; ++j)
        log_sum += std::log(std::max(marg[j][index_of(d.tags[j])], 1e-300));
      conf = std::exp(log_sum / static_cast<double>(r.length()));
    }
    out.spans.push_back({r.start, r.end, std::clamp(conf, 0.0, 1.0), slot});
  }
  return out;
}

/// Collects spans from every prediction, orders them by (confidence desc,
/// length desc, slot name asc) and keeps each span that does not overlap an
/// already kept one.
inline MergedPrediction merge(const std::vector<SlotPrediction>& predictions, std::size_t length) {
  std::vector<ScoredSpan> all;
  for (const auto& p : predictions) {
    if (p.labels.size() != length)
      throw std::invalid_argument("prediction for slot " + p.slot_type + " has " +
                                  std::to_string(p.labels.size()) + " labels, expected " +
                                  std::to_string(length));
    for (ScoredSpan s : p.spans) {
      if (s.start > s.end || s.end >= length)
        throw std::invalid_argument("span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                                    "] of slot " + p.slot_type + " lies outside the utterance");
      if (!(s.confidence >= 0.0)) s.confidence = 0.0;  // also catches NaN
      s.slot = p.slot_type;
      all.push_back(s);
    }
  }
  std::sort(all.begin(), all.end(), [](const ScoredSpan& a, const ScoredSpan& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    const auto la = a.end - a.start, lb = b.end - b.start;
    if (la != lb) return la > lb;
    if (a.slot != b.slot) return a.slot < b.slot;
    return a.start < b.start;
  });
  MergedPrediction out;
  out.labels.assign(length, "O");
  for (const auto& s : all) {
    const bool clash = std::any_of(out.spans.begin(), out.spans.end(),
                                   [&](const ScoredSpan& k) { return k.range().overlaps(s.range()); });
    if (clash) continue;
    out.spans.push_back(s);
    out.labels[s.start] = "B-" + s.slot;
    for (std::size_t j = s.start + 1; j <= s.end; ++j) out.labels[j] = "I-" + s.slot;
  }
  return out;
}

/// Splits a merged prediction back into one SlotPrediction per slot type.
inline std::vector<SlotPrediction> rewrap(const MergedPrediction& merged) {
  std::map<std::string, SlotPrediction> by_slot;
  const std::size_t J = merged.labels.size();
  for (const auto& s : merged.spans) {
    auto& p = by_slot[s.slot];
    if (p.labels.empty()) {
      p.slot_type = s.slot;
      p.labels.assign(J, Tag::O);
    }
    p.labels[s.start] = Tag::B;
    for (std::size_t j = s.start + 1; j <= s.end; ++j) p.labels[j] = Tag::I;
    p.spans.push_back(s);
  }
  std::vector<SlotPrediction> out;
  for (auto& [_, p] : by_slot) out.push_back(std::move(p));
  return out;
}

/// Runs a model over utterances with cached description encodings.
class Decoder {
 public:
  Decoder(LeonaModel& model, const AnnotationProvider* provider,
          ConfidenceMode mode = ConfidenceMode::span_marginals)
      : model_(model), provider_(provider), mode_(mode) {}

  /// Encoded descriptions depend on the weights; call after any update.
  void invalidate() { descriptions_.clear(); }

  SlotPrediction predict_slot(const Utterance& u, const SlotType& slot) {
    const auto enc = model_.encode_utterance(features(u));
    return predict_slot(enc, slot);
  }

  MergedPrediction predict_utterance(const Utterance& u, const std::vector<SlotType>& candidates) {
    if (candidates.empty()) throw std::invalid_argument("no candidate slot types for " + u.id);
    const auto enc = model_.encode_utterance(features(u));
    std::vector<SlotPrediction> preds;
    for (const auto& s : candidates) preds.push_back(predict_slot(enc, s));
    return merge(preds, u.tokens.size());
  }

 private:
  SlotPrediction predict_slot(const LeonaModel::EncodedUtterance& enc, const SlotType& slot) {
    return decode_slot(slot.name, model_.slot_emissions(enc, description(slot)),
                       model_.crf_params("crf2"), mode_);
  }

  Features features(const Utterance& u) const {
    if (!model_.config().use_pretrained_features) return make_features(u.tokens, nullptr, model_.config());
    const Annotation a = provider_->annotate(u);
    return make_features(u.tokens, &a, model_.config());
  }

  const Tensor& description(const SlotType& slot) {
    auto it = descriptions_.find(slot.name);
    if (it != descriptions_.end()) return it->second;
    Features f;
    if (model_.config().use_pretrained_features) {
      const Annotation a = provider_->annotate(slot);
      f = make_features(slot.description, &a, model_.config());
    } else {
      f = make_features(slot.description, nullptr, model_.config());
    }
    return descriptions_.emplace(slot.name, model_.encode_description(f)).first->second;
  }

  LeonaModel& model_;
  const AnnotationProvider* provider_;
  ConfidenceMode mode_;
  std::map<std::string, Tensor> descriptions_;
};

/// One line of a predictions file.
struct PredictionRecord {
  std::string id;
  std::vector<std::string> tokens;
  std::optional<std::vector<std::string>> gold;
  std::vector<std::string> pred;
};

inline std::string predictions_jsonl(const std::vector<PredictionRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    json j{{"id", r.id}, {"tokens", r.tokens}};
    if (r.gold) j["gold"] = *r.gold;
    j["pred"] = r.pred;
    out += j.dump() + "\n";
  }
  return out;
}

inline std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
  std::vector<PredictionRecord> out;
  for_each_jsonl(path, [&](std::size_t line, const json& obj) {
    const std::string where = path.string() + ":" + std::to_string(line);
    PredictionRecord r;
    r.id = field<std::string>(obj, "id", where);
    r.tokens = field<std::vector<std::string>>(obj, "tokens", where);
    if (obj.contains("gold")) r.gold = field<std::vector<std::string>>(obj, "gold", where);
    r.pred = field<std::vector<std::string>>(obj, "pred", where);
    if (r.pred.size() != r.tokens.size() || (r.gold && r.gold->size() != r.tokens.size()))
      throw ValidationError(where + ": label count does not match token count");
    out.push_back(std::move(r));
  });
  return out;
}

}  // namespace leona
