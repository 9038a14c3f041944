#pragma once

// Mini-batch joint training with Adam, reduce-on-plateau learning rate,
// early stopping on dev span F1 and resumable run directories:
//   run_dir/{config.json, metrics.jsonl, best.ckpt, last.ckpt}

#include "leona/checkpoint.hpp"
#include "leona/decoder.hpp"
#include "leona/evaluator.hpp"

#include <functional>
#include <limits>
#include <set>

namespace leona {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  double lr_init = 1e-3;
  double lr_decay_factor = 0.5;
  double lr_floor = 1e-5;
  std::size_t lr_patience = 3;
  std::size_t early_stop_patience = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t q = 3;

  void validate() const {
    if (batch_size == 0) throw ValidationError("batch_size must be at least 1");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0))
      throw ValidationError("lr_decay_factor must lie in (0,1)");
    if (!(lr_init > 0.0)) throw ValidationError("lr_init must be positive");
    if (max_epochs == 0) throw ValidationError("max_epochs must be at least 1");
  }

  json to_json() const {
    return json{{"batch_size", batch_size},
                {"max_epochs", max_epochs},
                {"lr_init", lr_init},
                {"lr_decay_factor", lr_decay_factor},
                {"lr_floor", lr_floor},
                {"lr_patience", lr_patience},
                {"early_stop_patience", early_stop_patience},
                {"beta1", beta1},
                {"beta2", beta2},
                {"eps", eps},
                {"seed", seed},
                {"q", q}};
  }

  static TrainConfig from_json(const json& j) {
    TrainConfig c;
    auto get = [&](const char* k, auto& dst) {
      if (j.contains(k)) dst = j.at(k).get<std::decay_t<decltype(dst)>>();
    };
    get("batch_size", c.batch_size);
    get("max_epochs", c.max_epochs);
    get("lr_init", c.lr_init);
    get("lr_decay_factor", c.lr_decay_factor);
    get("lr_floor", c.lr_floor);
    get("lr_patience", c.lr_patience);
    get("early_stop_patience", c.early_stop_patience);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("eps", c.eps);
    get("seed", c.seed);
    get("q", c.q);
    c.validate();
    return c;
  }
};

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::uint64_t t = 0;
};

/// Bias-corrected Adam update using each parameter's accumulated grad.
inline void adam_step(std::map<std::string, Parameter>& params, AdamState& state, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  for (const auto& [name, p] : params)
    if (p.grad.shape() != p.value.shape())
      throw DimensionError("gradient of " + name + " has shape " + to_string(p.grad.shape()) +
                           ", parameter has " + to_string(p.value.shape()));
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, double(state.t));
  const double c2 = 1.0 - std::pow(beta2, double(state.t));
  for (auto& [name, p] : params) {
    auto& m = state.m.try_emplace(name, Tensor(p.value.shape(), 0.0)).first->second;
    auto& v = state.v.try_emplace(name, Tensor(p.value.shape(), 0.0)).first->second;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
}

struct TrainData {
  std::vector<Utterance> train;
  std::vector<Utterance> dev;  // empty: score on the training utterances
  std::vector<SlotType> slot_types;
  const AnnotationProvider* provider = nullptr;  // may be null without pretrained features
};

struct TrainResult {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_dev_f1 = 0.0;
  bool stopped_early = false;
  std::vector<json> metrics;
};

class Trainer {
 public:
  using EpochHook = std::function<void(const json&)>;

  Trainer(LeonaModel& model, TrainConfig cfg, TrainData data)
      : model_(model), cfg_(std::move(cfg)), data_(std::move(data)) {
    cfg_.validate();
    if (data_.train.empty()) throw ValidationError("training set is empty");
    std::vector<const Utterance*> ptrs;
    for (const auto& u : data_.train) ptrs.push_back(&u);
    inventory_ = inventory_of(ptrs, data_.slot_types);
    if (inventory_.empty()) throw ValidationError("training utterances contain no slot labels");
    prepare_features();
  }

  const std::vector<SlotType>& inventory() const { return inventory_; }
  void on_epoch(EpochHook hook) { hook_ = std::move(hook); }

  /// Training examples for one epoch, shuffled; negatives are redrawn per epoch.
  std::vector<TrainingExample> epoch_examples(std::size_t epoch) const {
    std::vector<TrainingExample> out;
    for (std::size_t i = 0; i < data_.train.size(); ++i) {
      auto ex = generate_examples(data_.train[i], inventory_, cfg_.q, mix_seed(cfg_.seed, {epoch, i, 1}));
      std::move(ex.begin(), ex.end(), std::back_inserter(out));
    }
    SplitMix64 rng(mix_seed(cfg_.seed, {epoch, 2}));
    rng.shuffle(out);
    return out;
  }

  /// One optimizer step on the mean loss of `batch`; returns that mean loss.
  double step(const std::vector<TrainingExample>& batch, double lr, std::uint64_t dropout_seed,
              bool training = true) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    model_.zero_grad();
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& ex = batch[i];
      Tape t;
      Var loss = model_.forward_loss(t, ex, utterance_features_.at(ex.utterance_id),
                                     slot_features(ex.slot_type), mix_seed(dropout_seed, {i}), training);
      t.backward(loss);
      total += loss.value()[0];
    }
    const double scale = 1.0 / double(batch.size());
    for (auto& [_, p] : model_.params())
      for (double& g : p.grad.values()) g *= scale;
    adam_step(model_.params(), adam_, lr, cfg_.beta1, cfg_.beta2, cfg_.eps);
    return total * scale;
  }

  /// Span F1 over the dev utterances (training utterances when dev is empty).
  double evaluate_dev() {
    const auto& utts = data_.dev.empty() ? data_.train : data_.dev;
    Decoder dec(model_, data_.provider);
    std::vector<EvalItem> items;
    for (const auto& u : utts) {
      auto cands = candidates_for(u, data_.slot_types);
      if (cands.empty()) cands = inventory_;
      items.push_back({u.id, u.domain, u.labels, dec.predict_utterance(u, cands).labels});
    }
    return span_f1(items).micro.f1();
  }

  /// Full loop. With a run directory, writes config.json, metrics.jsonl and
  /// checkpoints after every epoch; `resume` continues from last.ckpt.
  TrainResult run(const std::optional<std::filesystem::path>& run_dir = std::nullopt, bool resume = false) {
    TrainResult res;
    State st;
    st.lr = cfg_.lr_init;
    if (run_dir) {
      const auto last = *run_dir / "last.ckpt";
      if (resume && std::filesystem::exists(last)) restore(load_checkpoint(last), st, res);
      else write_file_atomic(*run_dir / "config.json", run_config().dump(2) + "\n");
    }
    while (st.epoch < cfg_.max_epochs && st.since_best < cfg_.early_stop_patience) {
      const std::size_t epoch = st.epoch + 1;
      const auto examples = epoch_examples(epoch);
      double loss_sum = 0.0;
      for (std::size_t b = 0; b < examples.size(); b += cfg_.batch_size) {
        const std::vector<TrainingExample> batch(
            examples.begin() + b, examples.begin() + std::min(examples.size(), b + cfg_.batch_size));
        loss_sum += step(batch, st.lr, mix_seed(cfg_.seed, {epoch, b, 3})) * double(batch.size());
      }
      const double train_loss = loss_sum / double(examples.size());
      const double dev_f1 = evaluate_dev();
      json line{{"epoch", epoch}, {"train_loss", train_loss}, {"dev_f1", dev_f1}, {"lr", st.lr}};
      res.metrics.push_back(line);
      st.epoch = epoch;
      const bool f1_improved = dev_f1 > st.best_f1 || st.best_epoch == 0;
      const bool loss_improved = train_loss < st.best_loss;
      if (loss_improved) st.best_loss = train_loss;
      if (f1_improved) {
        st.best_f1 = dev_f1;
        st.best_epoch = epoch;
        st.since_best = 0;
        if (run_dir) save_checkpoint(*run_dir / "best.ckpt", best_checkpoint(st));
        else best_params_ = snapshot();
      } else if (st.best_f1 > 0.0) {
        // Early-stopping patience runs once the model decodes any correct span.
        ++st.since_best;
      }
      // Span F1 on a small dev set moves in steps, so the learning rate only
      // decays when training loss has stalled as well.
      if (f1_improved || loss_improved) {
        st.since_lr = 0;
      } else if (++st.since_lr >= cfg_.lr_patience) {
        st.lr = std::max(st.lr * cfg_.lr_decay_factor, cfg_.lr_floor);
        st.since_lr = 0;
      }
      if (run_dir) {
        std::string log;
        for (const auto& m : res.metrics) log += m.dump() + "\n";
        write_file_atomic(*run_dir / "metrics.jsonl", log);
        save_checkpoint(*run_dir / "last.ckpt", last_checkpoint(st, res));
      }
      if (hook_) hook_(line);
    }
    res.epochs_run = st.epoch;
    res.best_epoch = st.best_epoch;
    res.best_dev_f1 = st.best_f1;
    res.stopped_early = st.epoch < cfg_.max_epochs;
    return res;
  }

  /// Loads the best weights seen by the last run() into the model.
  void restore_best(const std::optional<std::filesystem::path>& run_dir = std::nullopt) {
    if (run_dir) {
      const auto ck = load_checkpoint(*run_dir / "best.ckpt");
      for (auto& [name, p] : model_.params()) p.value = ck.tensors.at("param/" + name);
      return;
    }
    for (auto& [name, p] : model_.params()) p.value = best_params_.at(name);
  }

  json run_config() const {
    std::set<std::string> train_slots;
    for (const auto& s : inventory_) train_slots.insert(s.name);
    return json{{"model", model_.config().to_json()},
                {"train", cfg_.to_json()},
                {"train_utterances", data_.train.size()},
                {"dev_utterances", data_.dev.size()},
                {"train_slot_types", train_slots}};
  }

 private:
  struct State {
    std::size_t epoch = 0;
    double lr = 0.0;
    double best_f1 = 0.0;
    std::size_t best_epoch = 0;
    std::size_t since_best = 0;
    std::size_t since_lr = 0;
    double best_loss = std::numeric_limits<double>::infinity();
  };

  void prepare_features() {
    const bool pretrained = model_.config().use_pretrained_features;
    if (pretrained && !data_.provider) throw std::invalid_argument("pretrained features need a provider");
    std::vector<std::string> missing;
    auto build = [&](const std::string& key, const std::vector<std::string>& tokens,
                     auto annotate) -> std::optional<Features> {
      if (!pretrained) return make_features(tokens, nullptr, model_.config());
      try {
        const Annotation a = annotate();
        return make_features(tokens, &a, model_.config());
      } catch (const AnnotationLookupError&) {
        missing.push_back(key);
        return std::nullopt;
      }
    };
    for (const auto& u : data_.train)
      if (auto f = build(u.id, u.tokens, [&] { return data_.provider->annotate(u); }))
        utterance_features_.emplace(u.id, std::move(*f));
    for (const auto& s : inventory_)
      if (auto f = build(description_key(s), s.description, [&] { return data_.provider->annotate(s); }))
        slot_features_.emplace(s.name, std::move(*f));
    if (!missing.empty()) {
      std::string msg = "missing annotations for " + std::to_string(missing.size()) + " id(s):";
      for (const auto& id : missing) msg += " " + id;
      throw ValidationError(msg);
    }
  }

  const Features& slot_features(const SlotType& s) const { return slot_features_.at(s.name); }

  std::map<std::string, Tensor> snapshot() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, p] : model_.params()) out.emplace(name, p.value);
    return out;
  }

  Checkpoint best_checkpoint(const State& st) const {
    return model_checkpoint(model_, json{{"epoch", st.epoch}, {"dev_f1", st.best_f1}, {"train", cfg_.to_json()}});
  }

  Checkpoint last_checkpoint(const State& st, const TrainResult& res) const {
    json trainer{{"epoch", st.epoch},         {"lr", st.lr},
                 {"best_f1", st.best_f1},     {"best_epoch", st.best_epoch},
                 {"since_best", st.since_best}, {"since_lr", st.since_lr},
                 {"best_loss", st.best_loss},
                 {"adam_t", adam_.t},         {"metrics", res.metrics}};
    Checkpoint ck = model_checkpoint(model_, json{{"trainer", trainer}, {"train", cfg_.to_json()}});
    for (const auto& [name, t] : adam_.m) ck.tensors.emplace("adam.m/" + name, t);
    for (const auto& [name, t] : adam_.v) ck.tensors.emplace("adam.v/" + name, t);
    return ck;
  }

  void restore(const Checkpoint& ck, State& st, TrainResult& res) {
    const LeonaModel saved = model_from(ck);
    for (auto& [name, p] : model_.params()) p.value = saved.params().at(name).value;
    const json& tr = ck.meta.at("trainer");
    st.epoch = tr.at("epoch");
    st.lr = tr.at("lr");
    st.best_f1 = tr.at("best_f1");
    st.best_epoch = tr.at("best_epoch");
    st.since_best = tr.at("since_best");
    st.since_lr = tr.at("since_lr");
    st.best_loss = tr.at("best_loss");
    adam_.t = tr.at("adam_t");
    for (const auto& m : tr.at("metrics")) res.metrics.push_back(m);
    for (const auto& [key, t] : ck.tensors) {
      if (key.rfind("adam.m/", 0) == 0) adam_.m[key.substr(7)] = t;
      else if (key.rfind("adam.v/", 0) == 0) adam_.v[key.substr(7)] = t;
    }
  }

  LeonaModel& model_;
  TrainConfig cfg_;
  TrainData data_;
  std::vector<SlotType> inventory_;
  std::map<std::string, Features> utterance_features_;
  std::map<std::string, Features> slot_features_;
  AdamState adam_;
  std::map<std::string, Tensor> best_params_;
  EpochHook hook_;
};

}  // namespace leona
