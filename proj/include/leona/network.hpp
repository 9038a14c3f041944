#pragma once

// The six-layer slot filler:
//   embedding   POS/NER/contextual features -> projection -> 2-layer highway  (d x J)
//   encoding    BiLSTM over utterance and slot description                    (2l x J), (2l x K)
//   crf         slot-independent IOB emissions from the utterance encoding    (J x 3)
//   similarity  A = alpha(H_j, U_k), attention both ways, G = [U'; H']        (4l x J)
//   context     2-stack BiLSTM over [H; G; iob embedding]                     (2l x J)
//   prediction  two rectified affine layers, emissions for the slot CRF       (J x 3)

#include "leona/annotators.hpp"
#include "leona/corpus.hpp"
#include "leona/crf.hpp"
#include "leona/ops.hpp"

#include <map>
#include <string>

namespace leona {

struct ModelConfig {
  std::size_t pos_dim = 300;
  std::size_t ner_dim = 300;
  std::size_t ctx_dim = 1024;
  std::size_t fused_dim = 400;
  std::size_t lstm_hidden = 300;
  std::size_t iob_feed_dim = 32;
  std::size_t head_dim = 300;
  std::size_t encoder_layers = 1;
  double dropout = 0.3;
  bool use_pretrained_features = true;
  bool use_iob_feed = true;
  bool share_encoders = true;
  std::uint64_t init_seed = 1;
  std::uint64_t feature_seed = 17;

  void validate() const {
    for (auto d : {pos_dim, ner_dim, ctx_dim, fused_dim, lstm_hidden, iob_feed_dim, head_dim, encoder_layers})
      if (d == 0) throw ValidationError("model dimensions must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0,1)");
  }

  json to_json() const {
    return json{{"pos_dim", pos_dim},
                {"ner_dim", ner_dim},
                {"ctx_dim", ctx_dim},
                {"fused_dim", fused_dim},
                {"lstm_hidden", lstm_hidden},
                {"iob_feed_dim", iob_feed_dim},
                {"head_dim", head_dim},
                {"encoder_layers", encoder_layers},
                {"dropout", dropout},
                {"use_pretrained_features", use_pretrained_features},
                {"use_iob_feed", use_iob_feed},
                {"share_encoders", share_encoders},
                {"init_seed", init_seed},
                {"feature_seed", feature_seed}};
  }

  /// Missing keys keep their defaults.
  static ModelConfig from_json(const json& j) {
    ModelConfig c;
    auto get = [&](const char* k, auto& dst) {
      if (j.contains(k)) dst = j.at(k).get<std::decay_t<decltype(dst)>>();
    };
    get("pos_dim", c.pos_dim);
    get("ner_dim", c.ner_dim);
    get("ctx_dim", c.ctx_dim);
    get("fused_dim", c.fused_dim);
    get("lstm_hidden", c.lstm_hidden);
    get("iob_feed_dim", c.iob_feed_dim);
    get("head_dim", c.head_dim);
    get("encoder_layers", c.encoder_layers);
    get("dropout", c.dropout);
    get("use_pretrained_features", c.use_pretrained_features);
    get("use_iob_feed", c.use_iob_feed);
    get("share_encoders", c.share_encoders);
    get("init_seed", c.init_seed);
    get("feature_seed", c.feature_seed);
    c.validate();
    return c;
  }
};

/// Per-token network input for one token sequence.
struct Features {
  std::size_t length = 0;
  std::vector<std::size_t> pos_ids;
  std::vector<std::size_t> ner_ids;
  Tensor ctx;    // (ctx_dim, J); used with pretrained features
  Tensor fixed;  // (pos_dim + ner_dim + ctx_dim, J); hashed stand-in otherwise
};

/// Builds network input. Unknown tags map to UNK. Without pretrained
/// features the annotation is ignored and seeded token hashes fill all three
/// blocks at their configured widths.
inline Features make_features(const std::vector<std::string>& tokens, const Annotation* ann,
                              const ModelConfig& cfg) {
  Features f;
  const std::size_t J = tokens.size();
  if (J == 0) throw ValidationError("cannot build features for an empty token sequence");
  f.length = J;
  if (cfg.use_pretrained_features) {
    if (!ann) throw std::invalid_argument("pretrained features need an annotation");
    if (ann->pos.size() != J || ann->ner.size() != J || ann->ctx.cols() != J)
      throw ValidationError("annotation length does not match token count");
    if (ann->ctx.rows() != cfg.ctx_dim)
      throw ValidationError("contextual vectors have width " + std::to_string(ann->ctx.rows()) +
                            " but the model expects " + std::to_string(cfg.ctx_dim));
    for (const auto& t : ann->pos) f.pos_ids.push_back(TagVocabulary::pos().index(t));
    for (const auto& t : ann->ner) f.ner_ids.push_back(TagVocabulary::ner().index(t));
    f.ctx = ann->ctx;
    return f;
  }
  const std::size_t rows = cfg.pos_dim + cfg.ner_dim + cfg.ctx_dim;
  f.fixed = Tensor(Shape{rows, J});
  const std::size_t widths[3] = {cfg.pos_dim, cfg.ner_dim, cfg.ctx_dim};
  for (std::size_t j = 0; j < J; ++j) {
    std::size_t row = 0;
    for (std::size_t b = 0; b < 3; ++b) {
      const auto v = hash_embed(tokens[j], widths[b], mix_seed(cfg.feature_seed, {101 + b}));
      for (std::size_t k = 0; k < widths[b]; ++k) f.fixed[(row + k) * J + j] = v[k];
      row += widths[b];
    }
  }
  return f;
}

/// Per-forward dropout settings; each call site draws a fresh derived seed.
class DropoutStream {
 public:
  DropoutStream(double rate, bool training, std::uint64_t seed)
      : rate_(rate), training_(training), seed_(seed) {}

  Var apply(const Var& x) {
    return ops::dropout(x, rate_, training_, mix_seed(seed_, {counter_++}));
  }
  bool training() const { return training_; }

 private:
  double rate_;
  bool training_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// Layer outputs kept for inspection and tests.
struct AttentionOutput {
  Var similarity;       // A, (J, K)
  Var slot_attended;    // U', (2l, J)
  Var utterance_summary;  // h', (2l, 1)
  Var g;                // (4l, J)
};

class LeonaModel {
 public:
  explicit LeonaModel(ModelConfig cfg) : config_(std::move(cfg)) {
    config_.validate();
    init_params();
  }

  const ModelConfig& config() const { return config_; }
  std::map<std::string, Parameter>& params() { return params_; }
  const std::map<std::string, Parameter>& params() const { return params_; }

  Parameter& param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
  }

  // -- embedding --------------------------------------------------------------

  Var embed(Tape& t, const Features& f, DropoutStream& drop) {
    Var input;
    if (config_.use_pretrained_features) {
      Var pos = ops::gather_cols(t.param(param("embed.pos")), f.pos_ids);
      Var ner = ops::gather_cols(t.param(param("embed.ner")), f.ner_ids);
      input = ops::concat({pos, ner, t.constant(f.ctx)}, 0);
    } else {
      input = t.constant(f.fixed);
    }
    Var x = affine_layer(t, "embed.proj", input);
    for (int layer = 0; layer < 2; ++layer) x = highway(t, "embed.highway" + std::to_string(layer), x);
    return drop.apply(x);
  }

  // -- encoding ---------------------------------------------------------------

  /// BiLSTM encoding; `slot` selects the description encoder when encoders are not shared.
  Var encode(Tape& t, const Var& x, bool slot = false) {
    const std::string prefix = slot && !config_.share_encoders ? "slot_encoder" : "encoder";
    Var h = bilstm(t, prefix, x);
    for (std::size_t layer = 1; layer < config_.encoder_layers; ++layer)
      h = bilstm(t, prefix + std::to_string(layer), h);
    return h;
  }

  // -- slot-independent CRF -----------------------------------------------------

  Var step_two_emissions(Tape& t, const Var& h) {
    return ops::transpose(affine_layer(t, "crf1.proj", h));
  }

  crf::CrfParams crf_params(const std::string& prefix) const {
    return crf::params_from(params_.at(prefix + ".transitions").value,
                            params_.at(prefix + ".start").value, params_.at(prefix + ".end").value);
  }

  Var crf_nll(Tape& t, const std::string& prefix, const Var& emissions, const std::vector<Tag>& tags) {
    return crf::neg_log_likelihood(emissions, t.param(param(prefix + ".transitions")),
                                   t.param(param(prefix + ".start")), t.param(param(prefix + ".end")),
                                   tags);
  }

  // -- similarity -------------------------------------------------------------

  /// A[j,k] = w . [h_j ; u_k ; h_j * u_k]
  Var similarity_matrix(Tape& t, const Var& h, const Var& u) {
    const std::size_t width = 2 * config_.lstm_hidden;
    if (h.shape().at(0) != width || u.shape().at(0) != width)
      throw DimensionError("similarity inputs must have " + std::to_string(width) + " rows, got " +
                           to_string(h.shape()) + " and " + to_string(u.shape()));
    Var w = t.param(param("similarity.w"));
    auto parts = ops::split(w, 0, {width, width, width});
    Var by_word = ops::matmul(ops::transpose(h), parts[0]);                       // (J,1)
    Var by_slot = ops::matmul(ops::transpose(parts[1]), u);                       // (1,K)
    Var joint = ops::matmul(ops::transpose(ops::mul(h, parts[2])), u);            // (J,K)
    return ops::add(ops::add(joint, by_word), by_slot);
  }

  AttentionOutput attend(Tape& t, const Var& a, const Var& h, const Var& u) {
    const std::size_t J = h.shape()[1];
    AttentionOutput out;
    out.similarity = a;
    Var slot_weights = ops::softmax(a, 1);                                        // (J,K)
    out.slot_attended = ops::matmul(u, ops::transpose(slot_weights));             // (2l,J)
    Var word_scores = ops::max_over_axis(a, 1);                                   // (J)
    Var word_weights = ops::reshape(ops::softmax(word_scores, 0), Shape{J, 1});
    out.utterance_summary = ops::matmul(h, word_weights);                         // (2l,1)
    Var tiled = ops::matmul(out.utterance_summary, t.constant(Tensor(Shape{1, J}, 1.0)));
    out.g = ops::concat({out.slot_attended, tiled}, 0);
    return out;
  }

  // -- contextualization and prediction ------------------------------------------

  Var contextualize(Tape& t, const Var& h, const Var& g, const std::vector<Tag>& tags,
                    DropoutStream& drop) {
    const std::size_t J = h.shape()[1];
    if (tags.size() != J || g.shape()[1] != J)
      throw DimensionError("contextualize: " + std::to_string(tags.size()) + " tags, H has " +
                           std::to_string(J) + " columns, G has " + std::to_string(g.shape()[1]));
    Var iob;
    if (config_.use_iob_feed) {
      std::vector<std::size_t> ids;
      for (Tag tag : tags) ids.push_back(index_of(tag));
      iob = ops::gather_cols(t.param(param("iob.embed")), ids);
    } else {
      iob = t.constant(Tensor(Shape{config_.iob_feed_dim, J}, 0.0));
    }
    Var x = ops::concat({h, g, iob}, 0);
    x = bilstm(t, "context0", x);
    x = bilstm(t, "context1", x);
    return drop.apply(x);
  }

  Var predict_emissions(Tape& t, const Var& c) {
    Var x = ops::relu(affine_layer(t, "head.fc0", c));
    x = ops::relu(affine_layer(t, "head.fc1", x));
    return ops::transpose(affine_layer(t, "head.out", x));
  }

  // -- training objective -------------------------------------------------------

  /// Joint negative log-likelihood of the slot-independent and slot-specific
  /// CRFs. The gold slot-independent tags feed the contextualization layer.
  Var forward_loss(Tape& t, const TrainingExample& ex, const Features& utterance,
                   const Features& description, std::uint64_t dropout_seed, bool training = true) {
    if (ex.y_indep.size() != utterance.length || ex.y_slot.size() != utterance.length)
      throw ValidationError("example labels do not match utterance length");
    DropoutStream drop(config_.dropout, training, dropout_seed);
    Var h = drop.apply(encode(t, embed(t, utterance, drop)));
    Var u = drop.apply(encode(t, embed(t, description, drop), true));
    Var indep = crf_nll(t, "crf1", step_two_emissions(t, h), ex.y_indep);
    AttentionOutput att = attend(t, similarity_matrix(t, h, u), h, u);
    Var g = drop.apply(att.g);
    Var c = contextualize(t, h, g, ex.y_indep, drop);
    Var specific = crf_nll(t, "crf2", predict_emissions(t, c), ex.y_slot);
    return ops::add(indep, specific);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.value.size();
    return n;
  }

  // -- inference ----------------------------------------------------------------
  // Utterance encodings and description encodings are computed once and
  // reused across every (utterance, slot) pair.

  struct EncodedUtterance {
    Tensor h;                     // (2l, J)
    crf::Emissions indep;         // step-two emissions
    std::vector<Tag> indep_tags;  // Viterbi decode, fed to contextualization
  };

  EncodedUtterance encode_utterance(const Features& f) {
    Tape t(false);
    DropoutStream off(0.0, false, 0);
    Var h = encode(t, embed(t, f, off));
    EncodedUtterance out;
    out.h = h.value();
    out.indep = crf::to_emissions(step_two_emissions(t, h).value());
    out.indep_tags = crf::viterbi(out.indep, crf_params("crf1")).tags;
    return out;
  }

  Tensor encode_description(const Features& f) {
    Tape t(false);
    DropoutStream off(0.0, false, 0);
    return encode(t, embed(t, f, off), true).value();
  }

  /// Prediction-head emissions for one slot type.
  crf::Emissions slot_emissions(const EncodedUtterance& utt, const Tensor& description) {
    Tape t(false);
    DropoutStream off(0.0, false, 0);
    Var h = t.constant(utt.h);
    Var u = t.constant(description);
    AttentionOutput att = attend(t, similarity_matrix(t, h, u), h, u);
    Var c = contextualize(t, h, att.g, utt.indep_tags, off);
    return crf::to_emissions(predict_emissions(t, c).value());
  }

  // -- building blocks ---------------------------------------------------------

  Var affine_layer(Tape& t, const std::string& prefix, const Var& x) {
    return affine_layer_named(t, prefix + ".W", prefix + ".b", x);
  }

  // y = g * relu(W x + b) + (1 - g) * x with transform gate g = sigmoid(Wg x + bg).
  Var highway(Tape& t, const std::string& prefix, const Var& x) {
    Var gate = ops::sigmoid(affine_layer(t, prefix + ".gate", x));
    Var transformed = ops::relu(affine_layer(t, prefix + ".transform", x));
    return ops::add(ops::mul(gate, transformed), ops::mul(ops::affine(gate, -1.0, 1.0), x));
  }

  Var lstm(Tape& t, const std::string& prefix, const Var& x, bool reverse) {
    const std::size_t l = config_.lstm_hidden;
    const std::size_t J = x.shape().at(1);
    Var wh = t.param(param(prefix + ".Wh"));
    Var projected = affine_layer_named(t, prefix + ".Wx", prefix + ".b", x);  // (4l, J)
    std::vector<Var> out(J);
    Var h, c;
    for (std::size_t step = 0; step < J; ++step) {
      const std::size_t j = reverse ? J - 1 - step : step;
      Var z = ops::slice(projected, 1, j, j + 1);
      if (step > 0) z = ops::add(z, ops::matmul(wh, h));
      Var in_gate = ops::sigmoid(ops::slice(z, 0, 0, l));
      Var forget = ops::sigmoid(ops::slice(z, 0, l, 2 * l));
      Var cand = ops::tanh(ops::slice(z, 0, 2 * l, 3 * l));
      Var out_gate = ops::sigmoid(ops::slice(z, 0, 3 * l, 4 * l));
      Var fresh = ops::mul(in_gate, cand);
      c = step > 0 ? ops::add(ops::mul(forget, c), fresh) : fresh;
      h = ops::mul(out_gate, ops::tanh(c));
      out[j] = h;
    }
    return ops::concat(out, 1);
  }

  Var affine_layer_named(Tape& t, const std::string& w, const std::string& b, const Var& x) {
    return ops::add(ops::matmul(t.param(param(w)), x), t.param(param(b)));
  }

  Var bilstm(Tape& t, const std::string& prefix, const Var& x) {
    return ops::concat({lstm(t, prefix + ".fwd", x, false), lstm(t, prefix + ".bwd", x, true)}, 0);
  }

 private:
  void add_param(const std::string& name, Shape shape, double bias_fill = 0.0, bool weight = true) {
    Tensor v(shape, bias_fill);
    if (weight && shape.size() == 2 && shape[1] > 1) {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      SplitMix64 rng(mix_seed(config_.init_seed, {fnv1a(name)}));
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(-limit, limit);
    }
    params_.emplace(name, Parameter(name, std::move(v)));
  }

  void add_affine(const std::string& prefix, std::size_t out, std::size_t in, double bias = 0.0) {
    add_param(prefix + ".W", {out, in});
    add_param(prefix + ".b", {out, 1}, bias, false);
  }

  void add_lstm(const std::string& prefix, std::size_t in) {
    const std::size_t l = config_.lstm_hidden;
    for (const char* dir : {".fwd", ".bwd"}) {
      const std::string p = prefix + dir;
      add_param(p + ".Wx", {4 * l, in});
      add_param(p + ".Wh", {4 * l, l});
      Tensor b(Shape{4 * l, 1}, 0.0);
      for (std::size_t k = l; k < 2 * l; ++k) b[k] = 1.0;  // forget gate
      params_.emplace(p + ".b", Parameter(p + ".b", std::move(b)));
    }
  }

  void add_crf(const std::string& prefix) {
    add_param(prefix + ".transitions", {kNumTags, kNumTags}, 0.0, false);
    add_param(prefix + ".start", {kNumTags, 1}, 0.0, false);
    add_param(prefix + ".end", {kNumTags, 1}, 0.0, false);
  }

  void init_params() {
    const auto& c = config_;
    const std::size_t l2 = 2 * c.lstm_hidden;
    if (c.use_pretrained_features) {
      add_param("embed.pos", {c.pos_dim, TagVocabulary::pos().size()});
      add_param("embed.ner", {c.ner_dim, TagVocabulary::ner().size()});
    }
    add_affine("embed.proj", c.fused_dim, c.pos_dim + c.ner_dim + c.ctx_dim);
    for (int layer = 0; layer < 2; ++layer) {
      const std::string p = "embed.highway" + std::to_string(layer);
      add_affine(p + ".gate", c.fused_dim, c.fused_dim, -1.0);
      add_affine(p + ".transform", c.fused_dim, c.fused_dim);
    }
    for (const char* enc : {"encoder", "slot_encoder"}) {
      if (std::string(enc) == "slot_encoder" && c.share_encoders) continue;
      add_lstm(enc, c.fused_dim);
      for (std::size_t layer = 1; layer < c.encoder_layers; ++layer) add_lstm(enc + std::to_string(layer), l2);
    }
    add_affine("crf1.proj", kNumTags, l2);
    add_crf("crf1");
    add_param("similarity.w", {3 * l2, 1}, 0.0, false);
    {
      // Small symmetric start so every similarity term receives gradient.
      SplitMix64 rng(mix_seed(c.init_seed, {fnv1a("similarity.w")}));
      auto& w = params_.at("similarity.w").value;
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-0.1, 0.1);
    }
    if (c.use_iob_feed) add_param("iob.embed", {c.iob_feed_dim, kNumTags});
    add_lstm("context0", l2 + 2 * l2 + c.iob_feed_dim);
    add_lstm("context1", l2);
    add_affine("head.fc0", c.head_dim, l2);
    add_affine("head.fc1", c.head_dim, c.head_dim);
    add_affine("head.out", kNumTags, c.head_dim);
    add_crf("crf2");
  }

  ModelConfig config_;
  std::map<std::string, Parameter> params_;
};

}  // namespace leona
