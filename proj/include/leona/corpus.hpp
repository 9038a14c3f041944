#pragma once

// Utterances, slot types and the label algebra that turns one typed IOB
// sequence into slot-independent and per-slot training targets.

#include "leona/iob.hpp"
#include "leona/jsonl.hpp"
#include "leona/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace leona {

inline constexpr int kCorpusFormatVersion = 1;

struct Utterance {
  std::string id;
  std::string domain;
  std::string intent;
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
};

struct SlotType {
  std::string name;
  std::vector<std::string> description;
  std::set<std::string> domains;

  bool operator==(const SlotType&) const = default;
};

struct DatasetCounts {
  std::size_t utterances = 0;
  std::size_t domains = 0;
  std::size_t intents = 0;
  std::size_t slot_types = 0;
};

struct Dataset {
  std::string name;
  std::vector<Utterance> utterances;
  std::vector<SlotType> slot_types;  // sorted by name

  DatasetCounts counts() const {
    std::set<std::string> domains, intents;
    for (const auto& u : utterances) {
      domains.insert(u.domain);
      intents.insert(u.intent);
    }
    return {utterances.size(), domains.size(), intents.size(), slot_types.size()};
  }

  const SlotType* find_slot(const std::string& name) const {
    auto it = std::lower_bound(slot_types.begin(), slot_types.end(), name,
                               [](const SlotType& s, const std::string& n) { return s.name < n; });
    return it != slot_types.end() && it->name == name ? &*it : nullptr;
  }
};

/// "playlist_owner" -> {"playlist", "owner"}
inline std::vector<std::string> tokenize_slot_name(const std::string& name) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : name) {
    if (c == '_' || c == '-' || c == '.' || c == ' ') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  if (out.empty()) out.push_back(name);
  return out;
}

/// Distinct slot names in order of first appearance.
inline std::vector<std::string> slots_present(const std::vector<std::string>& labels) {
  std::vector<std::string> out;
  for (const auto& l : labels) {
    TypedLabel t = TypedLabel::parse(l);
    if (t.tag == Tag::B && std::find(out.begin(), out.end(), t.slot) == out.end())
      out.push_back(t.slot);
  }
  return out;
}

inline void sort_slot_types(std::vector<SlotType>& slots) {
  std::sort(slots.begin(), slots.end(),
            [](const SlotType& a, const SlotType& b) { return a.name < b.name; });
}

// ---------------------------------------------------------------------------
// Label algebra

/// B-S -> B, I-S -> I, O -> O.
inline std::vector<Tag> strip_slot_labels(const std::vector<std::string>& labels) {
  if (auto bad = first_iob_violation(labels))
    throw IobError("IOB violation at position " + std::to_string(*bad));
  std::vector<Tag> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(TypedLabel::parse(l).tag);
  return out;
}

/// Untyped tags marking only the spans of `slot`.
inline std::vector<Tag> project_slot_labels(const std::vector<std::string>& labels,
                                            const std::string& slot) {
  if (auto bad = first_iob_violation(labels))
    throw IobError("IOB violation at position " + std::to_string(*bad));
  std::vector<Tag> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    TypedLabel t = TypedLabel::parse(l);
    out.push_back(t.tag != Tag::O && t.slot == slot ? t.tag : Tag::O);
  }
  return out;
}

enum class Polarity { positive, negative };

struct TrainingExample {
  std::string utterance_id;
  SlotType slot_type;
  std::vector<Tag> y_indep;
  std::vector<Tag> y_slot;
  Polarity polarity = Polarity::positive;
};

/// One positive per slot type present, then up to q negatives drawn without
/// replacement from the inventory types absent from the utterance.
inline std::vector<TrainingExample> generate_examples(const Utterance& utt,
                                                      const std::vector<SlotType>& inventory,
                                                      std::size_t q, std::uint64_t seed) {
  if (inventory.empty()) throw std::invalid_argument("generate_examples: empty slot inventory");
  const auto y_indep = strip_slot_labels(utt.labels);
  const auto present = slots_present(utt.labels);
  auto lookup = [&](const std::string& name) -> const SlotType& {
    for (const auto& s : inventory)
      if (s.name == name) return s;
    throw std::invalid_argument("slot type '" + name + "' of utterance " + utt.id +
                                " is not in the inventory");
  };
  std::vector<TrainingExample> out;
  for (const auto& name : present)
    out.push_back({utt.id, lookup(name), y_indep, project_slot_labels(utt.labels, name),
                   Polarity::positive});

  std::vector<const SlotType*> absent;
  for (const auto& s : inventory)
    if (std::find(present.begin(), present.end(), s.name) == present.end()) absent.push_back(&s);
  std::sort(absent.begin(), absent.end(),
            [](const SlotType* a, const SlotType* b) { return a->name < b->name; });
  SplitMix64 rng(seed);
  rng.shuffle(absent);
  const std::size_t n = std::min(q, absent.size());
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({utt.id, *absent[i], y_indep, std::vector<Tag>(utt.tokens.size(), Tag::O),
                   Polarity::negative});
  return out;
}

// ---------------------------------------------------------------------------
// Loading and validation

/// Checks alignment, IOB validity and that every label names a declared slot.
inline void validate_utterance(const Utterance& u, const Dataset* declared) {
  if (u.tokens.empty()) throw ValidationError("utterance " + u.id + " has no tokens");
  if (u.tokens.size() != u.labels.size())
    throw ValidationError("utterance " + u.id + ": " + std::to_string(u.tokens.size()) +
                          " tokens but " + std::to_string(u.labels.size()) + " labels");
  if (auto bad = first_iob_violation(u.labels))
    throw ValidationError("utterance " + u.id + ": IOB violation at position " +
                          std::to_string(*bad) + " ('" + u.labels[*bad] + "')");
  if (declared)
    for (const auto& name : slots_present(u.labels))
      if (!declared->find_slot(name))
        throw ValidationError("utterance " + u.id + ": undeclared slot type '" + name + "'");
}

inline bool is_header(const json& obj) {
  return obj.contains("format_version") && !obj.contains("tokens") && !obj.contains("name");
}

inline void check_header(const json& obj, const std::string& where) {
  const int v = field<int>(obj, "format_version", where);
  if (v != kCorpusFormatVersion)
    throw ValidationError(where + ": unsupported format_version " + std::to_string(v));
}

inline std::vector<SlotType> load_slot_types(const std::filesystem::path& path) {
  std::vector<SlotType> out;
  std::set<std::string> seen;
  for_each_jsonl(path, [&](std::size_t line, const json& obj) {
    const std::string where = path.string() + ":" + std::to_string(line);
    if (is_header(obj)) {
      check_header(obj, where);
      return;
    }
    SlotType s;
    s.name = field<std::string>(obj, "name", where);
    if (obj.contains("description"))
      s.description = field<std::vector<std::string>>(obj, "description", where);
    if (s.description.empty()) s.description = tokenize_slot_name(s.name);
    if (obj.contains("domains")) {
      auto d = field<std::vector<std::string>>(obj, "domains", where);
      s.domains.insert(d.begin(), d.end());
    }
    if (!seen.insert(s.name).second)
      throw ValidationError(where + ": duplicate slot type '" + s.name + "'");
    out.push_back(std::move(s));
  });
  sort_slot_types(out);
  return out;
}

/// Slot types inferred from labels: tokenized names as descriptions, domains
/// where each slot occurs.
inline std::vector<SlotType> infer_slot_types(const std::vector<Utterance>& utts) {
  std::map<std::string, SlotType> by_name;
  for (const auto& u : utts)
    for (const auto& name : slots_present(u.labels)) {
      auto& s = by_name[name];
      s.name = name;
      s.description = tokenize_slot_name(name);
      s.domains.insert(u.domain);
    }
  std::vector<SlotType> out;
  for (auto& [_, s] : by_name) out.push_back(std::move(s));
  return out;
}

/// Loads a corpus. Without a slot file the inventory is inferred from labels.
inline Dataset load_dataset(const std::filesystem::path& corpus_path,
                            const std::optional<std::filesystem::path>& slots_path = std::nullopt) {
  Dataset ds;
  ds.name = corpus_path.stem().string();
  if (slots_path) ds.slot_types = load_slot_types(*slots_path);
  std::set<std::string> ids;
  for_each_jsonl(corpus_path, [&](std::size_t line, const json& obj) {
    const std::string where = corpus_path.string() + ":" + std::to_string(line);
    if (is_header(obj)) {
      check_header(obj, where);
      if (obj.contains("dataset")) ds.name = field<std::string>(obj, "dataset", where);
      return;
    }
    Utterance u;
    u.id = field<std::string>(obj, "id", where);
    u.domain = field<std::string>(obj, "domain", where);
    u.intent = field<std::string>(obj, "intent", where);
    u.tokens = field<std::vector<std::string>>(obj, "tokens", where);
    u.labels = field<std::vector<std::string>>(obj, "labels", where);
    if (!ids.insert(u.id).second) throw ValidationError(where + ": duplicate utterance id " + u.id);
    try {
      validate_utterance(u, slots_path ? &ds : nullptr);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    ds.utterances.push_back(std::move(u));
  });
  if (!slots_path) ds.slot_types = infer_slot_types(ds.utterances);
  return ds;
}

inline std::string corpus_jsonl(const Dataset& ds) {
  std::string out = json{{"format_version", kCorpusFormatVersion}, {"dataset", ds.name}}.dump() + "\n";
  for (const auto& u : ds.utterances)
    out += json{{"id", u.id}, {"domain", u.domain}, {"intent", u.intent},
                {"tokens", u.tokens}, {"labels", u.labels}}.dump() + "\n";
  return out;
}

inline std::string slots_jsonl(const std::vector<SlotType>& slots) {
  std::string out = json{{"format_version", kCorpusFormatVersion}}.dump() + "\n";
  for (const auto& s : slots)
    out += json{{"name", s.name}, {"description", s.description},
                {"domains", std::vector<std::string>(s.domains.begin(), s.domains.end())}}.dump() +
           "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Rare-unit grouping and splits

enum class UnitKind { intent, domain, dataset };

inline std::string unit_of(const Utterance& u, const std::string& dataset, UnitKind kind) {
  switch (kind) {
    case UnitKind::intent: return u.intent;
    case UnitKind::domain: return u.domain;
    case UnitKind::dataset: return dataset;
  }
  return {};
}

inline const std::string kOthersUnit = "Others";

/// Renames every intent (or domain) with fewer than `threshold` utterances
/// (at most `threshold` when inclusive) to "Others".
inline Dataset group_rare_into_others(Dataset ds, std::size_t threshold, UnitKind unit,
                                      bool inclusive = false) {
  if (threshold == 0) throw std::invalid_argument("grouping threshold must be positive");
  if (unit == UnitKind::dataset) throw std::invalid_argument("cannot group by dataset");
  std::map<std::string, std::size_t> count;
  for (const auto& u : ds.utterances) ++count[unit_of(u, ds.name, unit)];
  std::set<std::string> rare;
  for (const auto& [name, n] : count)
    if (n < threshold || (inclusive && n == threshold)) rare.insert(name);
  for (auto& u : ds.utterances) {
    std::string& field = unit == UnitKind::intent ? u.intent : u.domain;
    if (rare.count(field)) field = kOthersUnit;
  }
  if (unit == UnitKind::domain)
    for (auto& s : ds.slot_types) {
      bool touched = false;
      for (const auto& d : rare) touched = s.domains.erase(d) > 0 || touched;
      if (touched) s.domains.insert(kOthersUnit);
    }
  return ds;
}

enum class Regime { leave_one_out, percentage, cross_dataset };

struct SplitSpec {
  Regime regime = Regime::leave_one_out;
  UnitKind unit = UnitKind::intent;
  std::string target_unit;                 // leave_one_out
  int percentage = 25;                     // percentage: 25, 50 or 75
  std::string train_dataset;               // cross_dataset
  std::vector<std::string> test_datasets;  // cross_dataset; empty = all others
  std::uint64_t seed = 0;
  double dev_fraction = 0.1;
};

struct Split {
  SplitSpec spec;
  std::vector<std::string> train_units;
  std::vector<std::string> test_units;
  std::vector<std::string> train_ids;
  std::vector<std::string> dev_ids;
  std::vector<std::string> test_ids;
};

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::leave_one_out: return "leave_one_out";
    case Regime::percentage: return "percentage";
    case Regime::cross_dataset: return "cross_dataset";
  }
  return "";
}

inline Regime parse_regime(const std::string& s) {
  if (s == "leave_one_out") return Regime::leave_one_out;
  if (s == "percentage") return Regime::percentage;
  if (s == "cross_dataset") return Regime::cross_dataset;
  throw ValidationError("unknown split regime '" + s + "'");
}

inline const char* unit_name(UnitKind u) {
  switch (u) {
    case UnitKind::intent: return "intent";
    case UnitKind::domain: return "domain";
    case UnitKind::dataset: return "dataset";
  }
  return "";
}

inline UnitKind parse_unit(const std::string& s) {
  if (s == "intent") return UnitKind::intent;
  if (s == "domain") return UnitKind::domain;
  if (s == "dataset") return UnitKind::dataset;
  throw ValidationError("unknown unit kind '" + s + "'");
}

inline Split make_split(const std::vector<Dataset>& datasets, const SplitSpec& spec) {
  const UnitKind unit = spec.regime == Regime::cross_dataset ? UnitKind::dataset : spec.unit;
  std::set<std::string> units;
  std::set<std::string> ids;
  for (const auto& ds : datasets)
    for (const auto& u : ds.utterances) {
      units.insert(unit_of(u, ds.name, unit));
      if (!ids.insert(u.id).second)
        throw ValidationError("utterance id " + u.id + " occurs in more than one dataset");
    }

  std::set<std::string> train_units, test_units;
  switch (spec.regime) {
    case Regime::leave_one_out: {
      if (!units.count(spec.target_unit))
        throw ValidationError("held-out unit '" + spec.target_unit + "' not found");
      for (const auto& u : units) (u == spec.target_unit ? test_units : train_units).insert(u);
      break;
    }
    case Regime::percentage: {
      if (spec.percentage != 25 && spec.percentage != 50 && spec.percentage != 75)
        throw ValidationError("percentage must be 25, 50 or 75");
      if (units.size() < 2) throw ValidationError("percentage split needs at least 2 units");
      const std::size_t n = units.size();
      auto k = static_cast<std::size_t>(std::lround(spec.percentage * static_cast<double>(n) / 100.0));
      k = std::clamp<std::size_t>(k, 1, n - 1);
      std::vector<std::string> order(units.begin(), units.end());
      SplitMix64 rng(mix_seed(spec.seed, {1}));
      rng.shuffle(order);
      train_units.insert(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
      test_units.insert(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
      break;
    }
    case Regime::cross_dataset: {
      if (!units.count(spec.train_dataset))
        throw ValidationError("training dataset '" + spec.train_dataset + "' not found");
      train_units.insert(spec.train_dataset);
      if (spec.test_datasets.empty()) {
        for (const auto& u : units)
          if (u != spec.train_dataset) test_units.insert(u);
      } else {
        for (const auto& t : spec.test_datasets) {
          if (!units.count(t)) throw ValidationError("test dataset '" + t + "' not found");
          if (t == spec.train_dataset)
            throw ValidationError("test dataset equals the training dataset");
          test_units.insert(t);
        }
      }
      if (test_units.empty()) throw ValidationError("cross_dataset split has no test dataset");
      break;
    }
  }

  Split split;
  split.spec = spec;
  split.train_units.assign(train_units.begin(), train_units.end());
  split.test_units.assign(test_units.begin(), test_units.end());

  // Dev: a seeded fraction of each training intent.
  std::map<std::string, std::vector<std::string>> by_intent;
  std::vector<std::string> train_order;
  for (const auto& ds : datasets)
    for (const auto& u : ds.utterances) {
      const std::string unit_value = unit_of(u, ds.name, unit);
      if (train_units.count(unit_value)) {
        by_intent[u.intent].push_back(u.id);
        train_order.push_back(u.id);
      } else if (test_units.count(unit_value)) {
        split.test_ids.push_back(u.id);
      }
    }
  std::set<std::string> dev;
  SplitMix64 dev_rng(mix_seed(spec.seed, {2}));
  for (auto& [intent, members] : by_intent) {
    const auto n_dev = static_cast<std::size_t>(
        std::lround(spec.dev_fraction * static_cast<double>(members.size())));
    std::vector<std::string> pool = members;
    dev_rng.shuffle(pool);
    dev.insert(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min(n_dev, pool.size())));
  }
  for (const auto& id : train_order) (dev.count(id) ? split.dev_ids : split.train_ids).push_back(id);
  return split;
}

/// `runs` splits with consecutive seeds, for averaging.
inline std::vector<Split> make_split_batch(const std::vector<Dataset>& datasets, SplitSpec spec,
                                           std::size_t runs) {
  std::vector<Split> out;
  const std::uint64_t base = spec.seed;
  for (std::size_t r = 0; r < runs; ++r) {
    spec.seed = base + r;
    out.push_back(make_split(datasets, spec));
  }
  return out;
}

/// Every unit of the given kind, sorted.
inline std::vector<std::string> all_units(const std::vector<Dataset>& datasets, UnitKind kind) {
  std::set<std::string> units;
  for (const auto& ds : datasets)
    for (const auto& u : ds.utterances) units.insert(unit_of(u, ds.name, kind));
  return {units.begin(), units.end()};
}

/// Slot types occurring in the labels of the given utterances.
inline std::vector<SlotType> inventory_of(const std::vector<const Utterance*>& utts,
                                          const std::vector<SlotType>& declared) {
  std::set<std::string> names;
  for (const auto* u : utts)
    for (const auto& n : slots_present(u->labels)) names.insert(n);
  std::vector<SlotType> out;
  for (const auto& s : declared)
    if (names.count(s.name)) out.push_back(s);
  return out;
}

/// Slot types offered to the decoder for an utterance: its domain's inventory.
inline std::vector<SlotType> candidates_for(const Utterance& u, const std::vector<SlotType>& declared) {
  std::vector<SlotType> out;
  for (const auto& s : declared)
    if (s.domains.count(u.domain)) out.push_back(s);
  return out;
}

}  // namespace leona
