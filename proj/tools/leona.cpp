// leona: command-line front end.
//
//   leona prepare              normalize a corpus, or write a bundled synthetic one
//   leona validate-annotations check annotation / embedding files
//   leona split                write split manifests
//   leona train                train into a run directory
//   leona predict              decode a split's test utterances
//   leona eval                 score predictions, or aggregate several reports
//
// Exit status: 0 success, 1 invalid input, 2 runtime failure.

#include "leona/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace leona;
using namespace leona::cli;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> corpora;
  std::vector<std::string> slots;
  std::string annotations, embeddings, gazetteer, provider, run_dir, split;
  std::optional<std::uint64_t> seed;
  bool no_iob_feed = false;
  bool no_pretrained = false;
};

void add_inputs(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration; flags override it");
  cmd->add_option("--corpus", c.corpora, "corpus JSONL (repeatable)");
  cmd->add_option("--slots", c.slots, "slot-type JSONL, parallel to --corpus");
}

void add_features(CLI::App* cmd, Common& c) {
  cmd->add_option("--provider", c.provider, "annotation provider")->check(CLI::IsMember({"file", "fallback"}));
  cmd->add_option("--annotations", c.annotations, "annotation JSONL for the file provider");
  cmd->add_option("--embeddings", c.embeddings, "embedding file for the file provider");
  cmd->add_option("--gazetteer", c.gazetteer, "phrase<TAB>TYPE list for the fallback NER");
}

// Config file first, then flags.
RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
  if (!c.corpora.empty()) cfg.corpora = c.corpora;
  if (!c.slots.empty()) cfg.slots = c.slots;
  if (!c.annotations.empty()) cfg.annotations = c.annotations;
  if (!c.embeddings.empty()) cfg.embeddings = c.embeddings;
  if (!c.gazetteer.empty()) cfg.gazetteer = c.gazetteer;
  if (!c.provider.empty()) cfg.provider = c.provider;
  if (!c.run_dir.empty()) cfg.run_dir = c.run_dir;
  if (!c.split.empty()) cfg.split = c.split;
  if (c.seed) {
    cfg.train.seed = *c.seed;
    cfg.model.init_seed = *c.seed;
    cfg.split_spec.seed = *c.seed;
  }
  if (c.no_iob_feed) cfg.model.use_iob_feed = false;
  if (c.no_pretrained) cfg.model.use_pretrained_features = false;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot slot filling: training, decoding and evaluation"};
  app.require_subcommand(1);
  Common c;

  auto* prepare = app.add_subcommand("prepare", "normalize a corpus or write a synthetic one");
  PrepareOptions prep;
  std::string group_unit = "intent";
  add_inputs(prepare, c);
  add_features(prepare, c);
  prepare->add_option("--out", prep.out_dir, "output directory")->required();
  prepare->add_option("--synthetic", prep.synthetic, "bundled corpus")->check(CLI::IsMember({"toy", "zeroshot"}));
  prepare->add_option("--group-threshold", prep.group_threshold, "merge units with fewer utterances into Others");
  prepare->add_flag("--group-inclusive", prep.group_inclusive, "merge units with at most threshold utterances");
  prepare->add_option("--group-unit", group_unit, "unit kind for grouping");
  prepare->add_flag("--write-annotations", prep.write_annotations, "also write fallback annotation files");

  auto* validate = app.add_subcommand("validate-annotations", "check annotation and embedding files");
  add_inputs(validate, c);
  add_features(validate, c);

  auto* split = app.add_subcommand("split", "write split manifests");
  std::string regime, unit, target_unit, split_out;
  std::optional<int> percentage;
  std::optional<std::size_t> runs;
  add_inputs(split, c);
  split->add_option("--regime", regime, "leave_one_out | percentage | cross_dataset");
  split->add_option("--unit", unit, "intent | domain | dataset");
  split->add_option("--target-unit", target_unit, "held-out unit; omit for one manifest per unit");
  split->add_option("--percentage", percentage, "training share of units")->check(CLI::IsMember({25, 50, 75}));
  split->add_option("--runs", runs, "number of seeds, starting at --seed");
  split->add_option("--seed", c.seed, "split seed");
  split->add_option("--out", split_out, "manifest directory")->required();

  auto* train = app.add_subcommand("train", "train a model");
  bool resume = false;
  std::optional<std::size_t> max_epochs;
  add_inputs(train, c);
  add_features(train, c);
  train->add_option("--split", c.split, "split manifest");
  train->add_option("--run-dir", c.run_dir, "output directory (default $LEONA_RUN_DIR)");
  train->add_option("--seed", c.seed, "training and initialization seed");
  train->add_option("--max-epochs", max_epochs, "epoch limit");
  train->add_flag("--no-iob-feed", c.no_iob_feed, "do not feed slot-independent tags forward");
  train->add_flag("--no-pretrained", c.no_pretrained, "use hashed token features instead of annotations");
  train->add_flag("--resume", resume, "continue from last.ckpt in the run directory");

  auto* predict = app.add_subcommand("predict", "decode test utterances with best.ckpt");
  std::string predict_out;
  add_inputs(predict, c);
  add_features(predict, c);
  predict->add_option("--split", c.split, "split manifest; its test ids are decoded");
  predict->add_option("--run-dir", c.run_dir, "run directory (default $LEONA_RUN_DIR)");
  predict->add_option("--out", predict_out, "predictions JSONL (default run_dir/predictions.jsonl)");

  auto* eval = app.add_subcommand("eval", "score predictions");
  EvalOptions ev;
  add_inputs(eval, c);
  eval->add_option("--predictions", ev.predictions, "predictions JSONL, or report JSON files with --aggregate")->required();
  eval->add_option("--gold", ev.gold, "gold file when predictions carry no gold labels");
  eval->add_option("--run-dir", c.run_dir, "run directory, for the seen/unseen split");
  eval->add_option("--out", ev.out, "report JSON path");
  eval->add_flag("--aggregate", ev.aggregate, "report mean and standard deviation over runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  return run_command([&]() -> int {
    RunConfig cfg = resolve(c);
    if (*prepare) {
      prep.group_unit = parse_unit(group_unit);
      cmd_prepare(cfg, prep, std::cout);
      return kOk;
    }
    if (*validate) return cmd_validate(cfg, std::cout) ? kOk : kValidation;
    if (*split) {
      if (!regime.empty()) cfg.split_spec.regime = parse_regime(regime);
      if (!unit.empty()) cfg.split_spec.unit = parse_unit(unit);
      if (!target_unit.empty()) cfg.split_spec.target_unit = target_unit;
      if (percentage) cfg.split_spec.percentage = *percentage;
      if (runs) cfg.runs = *runs;
      cmd_split(cfg, split_out, std::cout);
      return kOk;
    }
    if (*train) {
      if (max_epochs) cfg.train.max_epochs = *max_epochs;
      cmd_train(cfg, resume, std::cout);
      return kOk;
    }
    if (*predict) {
      cmd_predict(cfg, predict_out, std::cout);
      return kOk;
    }
    if (*eval) {
      cmd_eval(cfg, ev, std::cout);
      return kOk;
    }
    return kRuntime;
  });
}
