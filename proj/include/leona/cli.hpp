#pragma once

// Command implementations behind tools/leona.cpp. Each command reads a
// RunConfig (JSON file plus flag overrides) and writes its outputs; errors
// surface as exceptions and are mapped to exit codes by run_command.

#include "leona/evaluator.hpp"
#include "leona/synthetic.hpp"
#include "leona/trainer.hpp"

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>

namespace leona::cli {

enum ExitCode { kOk = 0, kValidation = 1, kRuntime = 2 };

struct RunConfig {
  std::vector<std::string> corpora;
  std::vector<std::string> slots;  // parallel to corpora; missing entries are inferred
  std::string annotations;
  std::string embeddings;
  std::string gazetteer;
  std::string provider = "fallback";
  std::string run_dir;
  std::string split;  // manifest path
  ModelConfig model;
  TrainConfig train;
  SplitSpec split_spec;
  std::size_t runs = 1;

  json to_json() const {
    json s{{"regime", regime_name(split_spec.regime)},
           {"unit", unit_name(split_spec.unit)},
           {"target_unit", split_spec.target_unit},
           {"percentage", split_spec.percentage},
           {"train_dataset", split_spec.train_dataset},
           {"test_datasets", split_spec.test_datasets},
           {"seed", split_spec.seed},
           {"dev_fraction", split_spec.dev_fraction},
           {"runs", runs}};
    return json{{"corpora", corpora},     {"slots", slots},         {"annotations", annotations},
                {"embeddings", embeddings}, {"gazetteer", gazetteer}, {"provider", provider},
                {"model", model.to_json()}, {"train", train.to_json()}, {"split", s}};
  }

  static RunConfig from_json(const json& j) {
    RunConfig c;
    auto get = [&](const json& obj, const char* k, auto& dst) {
      if (obj.contains(k)) dst = obj.at(k).get<std::decay_t<decltype(dst)>>();
    };
    if (j.contains("corpus")) c.corpora = {j.at("corpus").get<std::string>()};
    get(j, "corpora", c.corpora);
    if (j.contains("slots") && j.at("slots").is_string()) c.slots = {j.at("slots").get<std::string>()};
    else get(j, "slots", c.slots);
    get(j, "annotations", c.annotations);
    get(j, "embeddings", c.embeddings);
    get(j, "gazetteer", c.gazetteer);
    get(j, "provider", c.provider);
    get(j, "run_dir", c.run_dir);
    get(j, "split_manifest", c.split);
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
    if (j.contains("split")) {
      const json& s = j.at("split");
      if (s.contains("regime")) c.split_spec.regime = parse_regime(s.at("regime"));
      if (s.contains("unit")) c.split_spec.unit = parse_unit(s.at("unit"));
      get(s, "target_unit", c.split_spec.target_unit);
      get(s, "percentage", c.split_spec.percentage);
      get(s, "train_dataset", c.split_spec.train_dataset);
      get(s, "test_datasets", c.split_spec.test_datasets);
      get(s, "seed", c.split_spec.seed);
      get(s, "dev_fraction", c.split_spec.dev_fraction);
      get(s, "runs", c.runs);
    }
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    try {
      return from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
  }

  std::string hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(to_json().dump())));
    return buf;
  }
};

inline std::string default_run_dir(const std::string& given) {
  if (!given.empty()) return given;
  if (const char* env = std::getenv("LEONA_RUN_DIR"); env && *env) return env;
  return "runs/default";
}

inline std::vector<Dataset> load_datasets(const RunConfig& cfg) {
  if (cfg.corpora.empty()) throw ValidationError("no corpus given (--corpus)");
  std::vector<Dataset> out;
  for (std::size_t i = 0; i < cfg.corpora.size(); ++i) {
    std::optional<std::filesystem::path> slots;
    if (i < cfg.slots.size() && !cfg.slots[i].empty()) slots = cfg.slots[i];
    out.push_back(load_dataset(cfg.corpora[i], slots));
  }
  return out;
}

/// Declared slot types across datasets; same-named types merge their domains.
inline std::vector<SlotType> all_slot_types(const std::vector<Dataset>& datasets) {
  std::map<std::string, SlotType> by_name;
  for (const auto& ds : datasets)
    for (const auto& s : ds.slot_types) {
      auto [it, fresh] = by_name.emplace(s.name, s);
      if (!fresh) it->second.domains.insert(s.domains.begin(), s.domains.end());
    }
  std::vector<SlotType> out;
  for (auto& [_, s] : by_name) out.push_back(std::move(s));
  return out;
}

inline std::map<std::string, const Utterance*> index_utterances(const std::vector<Dataset>& datasets) {
  std::map<std::string, const Utterance*> out;
  for (const auto& ds : datasets)
    for (const auto& u : ds.utterances) out.emplace(u.id, &u);
  return out;
}

inline std::unique_ptr<AnnotationProvider> make_provider(const RunConfig& cfg) {
  if (cfg.provider == "file") {
    if (cfg.annotations.empty() || cfg.embeddings.empty())
      throw ValidationError("the file provider needs --annotations and --embeddings");
    auto p = std::make_unique<FileProvider>(cfg.annotations, cfg.embeddings);
    if (cfg.model.use_pretrained_features && p->ctx_dim() != cfg.model.ctx_dim)
      throw ValidationError("embedding file has dim " + std::to_string(p->ctx_dim()) +
                            " but model.ctx_dim is " + std::to_string(cfg.model.ctx_dim));
    return p;
  }
  if (cfg.provider == "fallback") {
    Gazetteer g = cfg.gazetteer.empty() ? Gazetteer{} : Gazetteer::load(cfg.gazetteer);
    return std::make_unique<FallbackProvider>(cfg.model.ctx_dim, cfg.model.feature_seed, std::move(g));
  }
  throw ValidationError("unknown provider '" + cfg.provider + "' (expected file or fallback)");
}

// -- prepare ---------------------------------------------------------------------

struct PrepareOptions {
  std::string out_dir;
  std::string synthetic;  // "", "toy" or "zeroshot"
  std::size_t group_threshold = 0;
  bool group_inclusive = false;
  UnitKind group_unit = UnitKind::intent;
  bool write_annotations = false;
};

/// Writes normalized corpus.jsonl and slots.jsonl (and optionally fallback
/// annotation files) into out_dir.
inline void cmd_prepare(const RunConfig& cfg, const PrepareOptions& opt, std::ostream& log) {
  if (opt.out_dir.empty()) throw ValidationError("prepare needs --out");
  Dataset ds;
  if (opt.synthetic == "toy") ds = synthetic::toy_corpus();
  else if (opt.synthetic == "zeroshot") ds = synthetic::zero_shot_corpus();
  else if (!opt.synthetic.empty()) throw ValidationError("unknown synthetic corpus '" + opt.synthetic + "'");
  else {
    auto all = load_datasets(cfg);
    if (all.size() != 1) throw ValidationError("prepare takes exactly one corpus");
    ds = std::move(all.front());
  }
  if (opt.group_threshold > 0) ds = group_rare_into_others(ds, opt.group_threshold, opt.group_unit, opt.group_inclusive);
  const std::filesystem::path out(opt.out_dir);
  write_file_atomic(out / "corpus.jsonl", corpus_jsonl(ds));
  write_file_atomic(out / "slots.jsonl", slots_jsonl(ds.slot_types));
  const auto c = ds.counts();
  log << "prepared " << ds.name << ": " << c.utterances << " utterances, " << c.domains << " domains, "
      << c.intents << " intents, " << c.slot_types << " slot types\n";
  if (opt.write_annotations) {
    RunConfig fallback = cfg;
    fallback.provider = "fallback";
    const auto provider = make_provider(fallback);
    auto [tags, store] = export_annotations(*provider, ds.utterances, ds.slot_types);
    write_file_atomic(out / "annotations.jsonl", annotations_jsonl(tags));
    write_file_atomic(out / "embeddings.bin", embeddings_binary(store));
    log << "wrote " << tags.size() << " annotation records, vectors of width " << store.dim << "\n";
  }
}

// -- validate-annotations -----------------------------------------------------------

inline bool cmd_validate(const RunConfig& cfg, std::ostream& log) {
  std::vector<Utterance> corpus;
  const bool with_corpus = !cfg.corpora.empty();
  if (with_corpus) {
    for (const auto& ds : load_datasets(cfg)) {
      corpus.insert(corpus.end(), ds.utterances.begin(), ds.utterances.end());
      for (const auto& s : ds.slot_types)
        corpus.push_back({description_key(s), "", "", s.description, {}});
    }
  }
  std::vector<std::string> files;
  if (!cfg.annotations.empty()) files.push_back(cfg.annotations);
  if (!cfg.embeddings.empty()) files.push_back(cfg.embeddings);
  if (files.empty()) throw ValidationError("nothing to validate (--annotations / --embeddings)");
  bool ok = true;
  for (const auto& f : files) {
    const auto rep = validate_annotation_file(f, with_corpus ? &corpus : nullptr);
    log << f << ": " << rep.kind << ", " << rep.records << " records, " << rep.errors.size() << " errors\n";
    for (const auto& e : rep.errors) log << "  " << e << "\n";
    ok = ok && rep.ok();
  }
  return ok;
}

// -- split ---------------------------------------------------------------------------

inline json manifest_json(const Split& s, const RunConfig& cfg) {
  return json{{"format_version", kCorpusFormatVersion},
              {"config_hash", cfg.hash()},
              {"regime", regime_name(s.spec.regime)},
              {"unit", unit_name(s.spec.regime == Regime::cross_dataset ? UnitKind::dataset : s.spec.unit)},
              {"target_unit", s.spec.target_unit},
              {"percentage", s.spec.percentage},
              {"seed", s.spec.seed},
              {"dev_fraction", s.spec.dev_fraction},
              {"train_units", s.train_units},
              {"test_units", s.test_units},
              {"train_ids", s.train_ids},
              {"dev_ids", s.dev_ids},
              {"test_ids", s.test_ids}};
}

struct Manifest {
  std::vector<std::string> train_units, test_units, train_ids, dev_ids, test_ids;
  std::uint64_t seed = 0;
};

inline Manifest load_manifest(const std::filesystem::path& path) {
  try {
    const json j = json::parse(read_file(path));
    Manifest m;
    m.train_units = j.at("train_units").get<std::vector<std::string>>();
    m.test_units = j.at("test_units").get<std::vector<std::string>>();
    m.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    m.dev_ids = j.at("dev_ids").get<std::vector<std::string>>();
    m.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed split manifest (" + e.what() + ")");
  }
}

inline std::string manifest_name(const Split& s) {
  std::string unit = s.spec.regime == Regime::leave_one_out ? s.spec.target_unit
                     : s.spec.regime == Regime::percentage  ? std::to_string(s.spec.percentage)
                                                            : s.spec.train_dataset;
  for (char& c : unit)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return std::string(regime_name(s.spec.regime)) + "-" + unit + "-seed" + std::to_string(s.spec.seed) + ".json";
}

/// Leave-one-out without a target unit emits one manifest per unit.
inline std::vector<std::filesystem::path> cmd_split(const RunConfig& cfg, const std::string& out_dir,
                                                    std::ostream& log) {
  if (out_dir.empty()) throw ValidationError("split needs --out");
  const auto datasets = load_datasets(cfg);
  std::vector<Split> splits;
  if (cfg.split_spec.regime == Regime::leave_one_out && cfg.split_spec.target_unit.empty()) {
    for (const auto& unit : all_units(datasets, cfg.split_spec.unit)) {
      SplitSpec s = cfg.split_spec;
      s.target_unit = unit;
      auto batch = make_split_batch(datasets, s, cfg.runs);
      splits.insert(splits.end(), batch.begin(), batch.end());
    }
  } else {
    splits = make_split_batch(datasets, cfg.split_spec, cfg.runs);
  }
  std::vector<std::filesystem::path> written;
  for (const auto& s : splits) {
    const auto path = std::filesystem::path(out_dir) / manifest_name(s);
    write_file_atomic(path, manifest_json(s, cfg).dump(2) + "\n");
    log << path.string() << ": train " << s.train_ids.size() << ", dev " << s.dev_ids.size() << ", test "
        << s.test_ids.size() << "\n";
    written.push_back(path);
  }
  return written;
}

// -- train -----------------------------------------------------------------------

inline std::vector<Utterance> select(const std::map<std::string, const Utterance*>& index,
                                     const std::vector<std::string>& ids) {
  std::vector<Utterance> out;
  std::vector<std::string> missing;
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) missing.push_back(id);
    else out.push_back(*it->second);
  }
  if (!missing.empty()) {
    std::string msg = "split manifest names " + std::to_string(missing.size()) + " unknown id(s):";
    for (const auto& m : missing) msg += " " + m;
    throw ValidationError(msg);
  }
  return out;
}

inline TrainResult cmd_train(const RunConfig& cfg, bool resume, std::ostream& log) {
  const auto datasets = load_datasets(cfg);
  const auto index = index_utterances(datasets);
  TrainData data;
  data.slot_types = all_slot_types(datasets);
  if (!cfg.split.empty()) {
    const Manifest m = load_manifest(cfg.split);
    data.train = select(index, m.train_ids);
    data.dev = select(index, m.dev_ids);
  } else {
    for (const auto& ds : datasets) data.train.insert(data.train.end(), ds.utterances.begin(), ds.utterances.end());
  }
  std::unique_ptr<AnnotationProvider> provider;
  if (cfg.model.use_pretrained_features) provider = make_provider(cfg);
  data.provider = provider.get();
  const std::filesystem::path run_dir = default_run_dir(cfg.run_dir);
  LeonaModel model(cfg.model);
  Trainer trainer(model, cfg.train, std::move(data));
  trainer.on_epoch([&](const json& line) { log << line.dump() << "\n" << std::flush; });
  const auto res = trainer.run(run_dir, resume);
  log << "best dev F1 " << res.best_dev_f1 << " at epoch " << res.best_epoch << " of " << res.epochs_run
      << (res.stopped_early ? " (early stop)" : "") << "\n";
  return res;
}

// -- predict -----------------------------------------------------------------------

inline std::vector<PredictionRecord> cmd_predict(const RunConfig& cfg, const std::string& out_path,
                                                 std::ostream& log) {
  const std::filesystem::path run_dir = default_run_dir(cfg.run_dir);
  LeonaModel model = model_from(load_checkpoint(run_dir / "best.ckpt"));
  RunConfig effective = cfg;
  effective.model = model.config();
  const auto datasets = load_datasets(cfg);
  const auto slot_types = all_slot_types(datasets);
  std::vector<Utterance> targets;
  if (!cfg.split.empty()) {
    targets = select(index_utterances(datasets), load_manifest(cfg.split).test_ids);
  } else {
    for (const auto& ds : datasets) targets.insert(targets.end(), ds.utterances.begin(), ds.utterances.end());
  }
  if (targets.empty()) throw ValidationError("no utterances to predict");
  std::unique_ptr<AnnotationProvider> provider;
  if (model.config().use_pretrained_features) provider = make_provider(effective);
  Decoder decoder(model, provider.get());
  std::vector<PredictionRecord> out;
  for (const auto& u : targets) {
    auto cands = candidates_for(u, slot_types);
    if (cands.empty()) cands = slot_types;
    out.push_back({u.id, u.tokens, u.labels, decoder.predict_utterance(u, cands).labels});
  }
  const std::string path = out_path.empty() ? (run_dir / "predictions.jsonl").string() : out_path;
  write_file_atomic(path, predictions_jsonl(out));
  log << "wrote " << out.size() << " predictions to " << path << "\n";
  return out;
}

// -- eval --------------------------------------------------------------------------

struct EvalOptions {
  std::vector<std::string> predictions;  // one file, or several with aggregate
  std::string gold;                      // optional separate gold file
  std::string out;                       // report JSON path
  bool aggregate = false;                // inputs are report JSON files
};

inline EvalReport evaluate_file(const RunConfig& cfg, const std::string& predictions, const std::string& gold) {
  const auto pred = load_predictions(predictions);
  if (pred.empty()) throw ValidationError(predictions + ": no predictions");
  std::map<std::string, std::string> domains;
  if (!cfg.corpora.empty())
    for (const auto& ds : load_datasets(cfg))
      for (const auto& u : ds.utterances) domains[u.id] = u.domain;
  const auto items = gold.empty() ? items_from(pred, domains) : align(load_predictions(gold), pred, domains);
  std::set<std::string> train_slots;
  const auto config_path = std::filesystem::path(default_run_dir(cfg.run_dir)) / "config.json";
  const bool have_inventory = std::filesystem::exists(config_path);
  if (have_inventory) {
    const json run = json::parse(read_file(config_path));
    for (const auto& s : run.at("train_slot_types")) train_slots.insert(s.get<std::string>());
  }
  return span_f1(items, have_inventory ? &train_slots : nullptr);
}

inline json aggregate_reports(const std::vector<json>& reports) {
  auto collect = [&](const char* part) -> json {
    std::vector<double> v;
    for (const auto& r : reports)
      if (!r.at(part).is_null()) v.push_back(r.at(part).at("f1").get<double>());
    if (v.empty()) return nullptr;
    const auto a = aggregate(v);
    return json{{"n", a.n}, {"mean", a.mean}, {"stdev", a.stdev}, {"values", v}};
  };
  return json{{"runs", reports.size()},
              {"micro_f1", collect("micro")},
              {"seen_f1", collect("seen")},
              {"unseen_f1", collect("unseen")}};
}

inline json cmd_eval(const RunConfig& cfg, const EvalOptions& opt, std::ostream& log) {
  if (opt.predictions.empty()) throw ValidationError("eval needs --predictions");
  json result;
  if (opt.aggregate) {
    std::vector<json> reports;
    for (const auto& p : opt.predictions) {
      try {
        reports.push_back(json::parse(read_file(p)));
      } catch (const json::exception& e) {
        throw ValidationError(p + ": not a report (" + e.what() + ")");
      }
    }
    result = aggregate_reports(reports);
    for (const char* part : {"micro_f1", "seen_f1", "unseen_f1"}) {
      log << part << ": ";
      if (result[part].is_null()) log << "N/A\n";
      else
        log << format_aggregate(Aggregate{result[part]["n"].get<std::size_t>(),
                                          result[part]["mean"].get<double>(),
                                          result[part]["stdev"].get<double>()})
            << " over " << result[part]["n"].get<std::size_t>() << " runs\n";
    }
  } else {
    if (opt.predictions.size() != 1) throw ValidationError("eval takes one predictions file unless --aggregate");
    const auto report = evaluate_file(cfg, opt.predictions.front(), opt.gold);
    result = report_json(report);
    log << report_text(report);
  }
  if (!opt.out.empty()) write_file_atomic(opt.out, result.dump(2) + "\n");
  return result;
}

/// Maps exceptions to exit codes: 1 for bad input, 2 for everything else.
template <class Fn>
int run_command(Fn&& fn, std::ostream& err = std::cerr) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const IobError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace leona::cli
