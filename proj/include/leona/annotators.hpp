#pragma once

// Providers of the per-token linguistic signals: POS tags, NER tags and
// contextual vectors. File-backed providers read precomputed annotations
// keyed by utterance id; the fallback provider derives everything from the
// tokens themselves so the pipeline runs with no external models.

#include "leona/corpus.hpp"
#include "leona/tensor.hpp"

#include <array>
#include <cctype>
#include <cstring>
#include <memory>
#include <unordered_map>

namespace leona {

// ---------------------------------------------------------------------------
// Vocabularies

class TagVocabulary {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kPad = 1;

  explicit TagVocabulary(const std::vector<std::string>& tags) {
    tags_ = {"<unk>", "<pad>"};
    for (const auto& t : tags) {
      if (index_.count(t) || t == "<unk>" || t == "<pad>")
        throw std::invalid_argument("duplicate tag '" + t + "' in vocabulary");
      index_[t] = tags_.size();
      tags_.push_back(t);
    }
  }

  /// Universal POS tagset.
  static const TagVocabulary& pos() {
    static const TagVocabulary v({"ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
                                  "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"});
    return v;
  }

  static const TagVocabulary& ner() {
    static const TagVocabulary v({"O", "B-PER", "I-PER", "B-GPE", "I-GPE", "B-ORG", "I-ORG",
                                  "B-MISC", "I-MISC"});
    return v;
  }

  std::size_t index(const std::string& tag) const {
    auto it = index_.find(tag);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& tag) const { return index_.count(tag) > 0; }
  std::size_t size() const { return tags_.size(); }
  const std::string& tag(std::size_t i) const { return tags_.at(i); }

 private:
  std::vector<std::string> tags_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline bool is_ner_tag_valid(const std::vector<std::string>& ner) {
  static const std::set<std::string> types = {"PER", "GPE", "ORG", "MISC"};
  for (const auto& t : ner)
    if (t != "O" && !(t.size() > 2 && (t[0] == 'B' || t[0] == 'I') && t[1] == '-' &&
                      types.count(t.substr(2))))
      return false;
  return is_iob_valid(ner);
}

// ---------------------------------------------------------------------------
// Hashed character-trigram features

/// Average of seeded +-1 projections of the token's boundary-marked character
/// trigrams, L2-normalized. Empty tokens map to the zero vector.
inline std::vector<double> hash_embed(const std::string& token, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw std::invalid_argument("hash_embed: dim must be positive");
  std::vector<double> v(dim, 0.0);
  if (token.empty()) return v;
  const std::string marked = "^" + token + "$";
  const std::uint64_t basis = mix_seed(seed, {0x7472696772616dULL});
  for (std::size_t i = 0; i + 3 <= marked.size(); ++i) {
    SplitMix64 proj(fnv1a(std::string_view(marked).substr(i, 3), basis));
    for (std::size_t k = 0; k < dim; k += 64) {
      std::uint64_t bits = proj.next();
      for (std::size_t b = 0; b < 64 && k + b < dim; ++b) v[k + b] += (bits >> b) & 1 ? 1.0 : -1.0;
    }
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    v[fnv1a(token, basis) % dim] = 1.0;
    return v;
  }
  for (double& x : v) x /= norm;
  return v;
}

// ---------------------------------------------------------------------------
// Records and providers

/// The three signals for one token sequence.
struct Annotation {
  std::vector<std::string> pos;
  std::vector<std::string> ner;
  Tensor ctx;  // (ctx_dim, J)
};

class AnnotationLookupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Key under which a slot description's annotations are stored.
inline std::string description_key(const SlotType& s) { return "slot:" + s.name; }

class AnnotationProvider {
 public:
  virtual ~AnnotationProvider() = default;
  virtual std::size_t ctx_dim() const = 0;
  virtual Annotation lookup(const std::string& id, const std::vector<std::string>& tokens) const = 0;

  Annotation annotate(const Utterance& u) const { return checked(u.id, u.tokens); }
  Annotation annotate(const SlotType& s) const { return checked(description_key(s), s.description); }

 private:
  Annotation checked(const std::string& id, const std::vector<std::string>& tokens) const {
    Annotation a = lookup(id, tokens);
    const std::size_t J = tokens.size();
    if (a.pos.size() != J || a.ner.size() != J || a.ctx.rank() != 2 || a.ctx.cols() != J)
      throw ValidationError("annotation for " + id + " is not aligned with its " +
                            std::to_string(J) + " tokens");
    if (a.ctx.rows() != ctx_dim())
      throw ValidationError("annotation for " + id + " has vectors of width " +
                            std::to_string(a.ctx.rows()) + ", expected " + std::to_string(ctx_dim()));
    return a;
  }
};

/// Closed-class lexicon plus suffix rules over the Universal POS tagset.
inline std::string fallback_pos(const std::string& tok, bool sentence_initial) {
  static const std::unordered_map<std::string, std::string> lexicon = {
      {"a", "DET"},      {"an", "DET"},      {"the", "DET"},     {"this", "DET"},
      {"that", "DET"},   {"these", "DET"},   {"those", "DET"},   {"some", "DET"},
      {"any", "DET"},    {"every", "DET"},   {"my", "PRON"},     {"your", "PRON"},
      {"i", "PRON"},     {"me", "PRON"},     {"you", "PRON"},    {"we", "PRON"},
      {"us", "PRON"},    {"it", "PRON"},     {"he", "PRON"},     {"she", "PRON"},
      {"they", "PRON"},  {"them", "PRON"},   {"what", "PRON"},   {"who", "PRON"},
      {"in", "ADP"},     {"at", "ADP"},      {"on", "ADP"},      {"for", "ADP"},
      {"to", "PART"},    {"from", "ADP"},    {"with", "ADP"},    {"by", "ADP"},
      {"of", "ADP"},     {"into", "ADP"},    {"near", "ADP"},    {"about", "ADP"},
      {"and", "CCONJ"},  {"or", "CCONJ"},    {"but", "CCONJ"},   {"if", "SCONJ"},
      {"because", "SCONJ"}, {"is", "AUX"},   {"are", "AUX"},     {"was", "AUX"},
      {"be", "AUX"},     {"would", "AUX"},   {"will", "AUX"},    {"can", "AUX"},
      {"could", "AUX"},  {"should", "AUX"},  {"do", "AUX"},      {"please", "INTJ"},
      {"hello", "INTJ"}, {"hi", "INTJ"},     {"not", "PART"},    {"very", "ADV"},
      {"now", "ADV"},    {"today", "NOUN"},  {"tomorrow", "NOUN"}, {"like", "VERB"},
      {"book", "VERB"},  {"find", "VERB"},   {"play", "VERB"},   {"add", "VERB"},
      {"show", "VERB"},  {"get", "VERB"},    {"want", "VERB"},   {"need", "VERB"},
  };
  auto ends_with = [&](const char* suf) {
    const std::size_t n = std::strlen(suf);
    return tok.size() > n + 1 && tok.compare(tok.size() - n, n, suf) == 0;
  };
  if (tok.empty()) return "X";
  if (std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::ispunct(c); }))
    return "PUNCT";
  if (std::any_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); }))
    return "NUM";
  std::string lower = tok;
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (auto it = lexicon.find(lower); it != lexicon.end()) return it->second;
  if (!sentence_initial && std::isupper(static_cast<unsigned char>(tok[0]))) return "PROPN";
  if (ends_with("ing") || ends_with("ed")) return "VERB";
  if (ends_with("ly")) return "ADV";
  if (ends_with("ous") || ends_with("ful") || ends_with("able") || ends_with("ive")) return "ADJ";
  if (ends_with("tion") || ends_with("ment") || ends_with("ness") || ends_with("er")) return "NOUN";
  return "<unk>";
}

/// Phrase -> entity type, matched longest-first over tokens.
class Gazetteer {
 public:
  Gazetteer() = default;

  void add(const std::vector<std::string>& phrase, const std::string& type) {
    if (phrase.empty()) return;
    entries_[phrase] = type;
    longest_ = std::max(longest_, phrase.size());
  }

  /// Lines of "<phrase>\t<TYPE>", tokens separated by spaces.
  static Gazetteer load(const std::filesystem::path& path) {
    Gazetteer g;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) continue;
      std::vector<std::string> phrase;
      std::istringstream ws(line.substr(0, tab));
      for (std::string w; ws >> w;) phrase.push_back(w);
      g.add(phrase, line.substr(tab + 1));
    }
    return g;
  }

  std::vector<std::string> tag(const std::vector<std::string>& tokens) const {
    std::vector<std::string> out(tokens.size(), "O");
    for (std::size_t j = 0; j < tokens.size();) {
      std::size_t matched = 0;
      for (std::size_t len = std::min(longest_, tokens.size() - j); len > 0 && !matched; --len) {
        std::vector<std::string> key(tokens.begin() + static_cast<std::ptrdiff_t>(j),
                                     tokens.begin() + static_cast<std::ptrdiff_t>(j + len));
        if (auto it = entries_.find(key); it != entries_.end()) {
          out[j] = "B-" + it->second;
          for (std::size_t k = 1; k < len; ++k) out[j + k] = "I-" + it->second;
          matched = len;
        }
      }
      j += matched ? matched : 1;
    }
    return out;
  }

 private:
  std::map<std::vector<std::string>, std::string> entries_;
  std::size_t longest_ = 0;
};

/// Token-derived stand-in for the pretrained annotators. Contextual vectors
/// blend each token's hashed trigram vector with a quarter of each
/// neighbour's, then renormalize.
class FallbackProvider : public AnnotationProvider {
 public:
  explicit FallbackProvider(std::size_t ctx_dim, std::uint64_t seed = 17, Gazetteer gazetteer = {})
      : ctx_dim_(ctx_dim), seed_(seed), gazetteer_(std::move(gazetteer)) {
    if (ctx_dim == 0) throw std::invalid_argument("ctx_dim must be positive");
  }

  std::size_t ctx_dim() const override { return ctx_dim_; }

  Annotation lookup(const std::string&, const std::vector<std::string>& tokens) const override {
    Annotation a;
    const std::size_t J = tokens.size();
    if (J == 0) throw ValidationError("cannot annotate an empty token sequence");
    for (std::size_t j = 0; j < J; ++j) a.pos.push_back(fallback_pos(tokens[j], j == 0));
    a.ner = gazetteer_.tag(tokens);
    std::vector<std::vector<double>> base;
    for (const auto& t : tokens) base.push_back(hash_embed(t, ctx_dim_, seed_));
    a.ctx = Tensor(Shape{ctx_dim_, J});
    for (std::size_t j = 0; j < J; ++j) {
      std::vector<double> v = base[j];
      if (j > 0)
        for (std::size_t k = 0; k < ctx_dim_; ++k) v[k] += 0.25 * base[j - 1][k];
      if (j + 1 < J)
        for (std::size_t k = 0; k < ctx_dim_; ++k) v[k] += 0.25 * base[j + 1][k];
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = norm > 0.0 ? std::sqrt(norm) : 1.0;
      for (std::size_t k = 0; k < ctx_dim_; ++k) a.ctx[k * J + j] = v[k] / norm;
    }
    return a;
  }

 private:
  std::size_t ctx_dim_;
  std::uint64_t seed_;
  Gazetteer gazetteer_;
};

// ---------------------------------------------------------------------------
// Annotation files

struct AnnotationRecord {
  std::string utterance_id;
  std::vector<std::string> pos;
  std::vector<std::string> ner;
};

struct EmbeddingRecord {
  std::string utterance_id;
  std::vector<std::vector<double>> vectors;  // J rows of width dim
};

struct EmbeddingStore {
  std::size_t dim = 0;
  std::vector<EmbeddingRecord> records;
};

inline constexpr char kEmbeddingMagic[8] = {'L', 'E', 'O', 'N', 'A', 'E', 'M', 'B'};
inline constexpr std::uint32_t kEmbeddingBinaryVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string where) : b_(bytes), where_(std::move(where)) {}
  std::uint64_t uint(int nbytes) {
    need(static_cast<std::size_t>(nbytes));
    std::uint64_t v = 0;
    for (int i = 0; i < nbytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(nbytes);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  float f32() {
    const auto bits = static_cast<std::uint32_t>(uint(4));
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw ValidationError(where_ + ": truncated binary container");
  }
  const std::string& b_;
  std::string where_;
  std::size_t pos_ = 0;
};

// JSON has no NaN/Infinity literals; some writers emit them anyway. They
// are rewritten to null so the record can be reported rather than rejected.
inline json parse_lenient(const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::parse_error&) {
    std::string fixed;
    for (std::size_t i = 0; i < line.size();) {
      auto starts = [&](const char* w) { return line.compare(i, std::strlen(w), w) == 0; };
      if (starts("-Infinity")) { fixed += "null"; i += 9; }
      else if (starts("Infinity")) { fixed += "null"; i += 8; }
      else if (starts("NaN")) { fixed += "null"; i += 3; }
      else fixed += line[i++];
    }
    return json::parse(fixed);
  }
}

}  // namespace detail

inline bool is_binary_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[8] = {};
  in.read(magic, 8);
  return in.gcount() == 8 && std::memcmp(magic, kEmbeddingMagic, 8) == 0;
}

inline std::string embeddings_jsonl(const EmbeddingStore& store) {
  std::string out = json{{"dim", store.dim}, {"count", store.records.size()}}.dump() + "\n";
  for (const auto& r : store.records)
    out += json{{"id", r.utterance_id}, {"vectors", r.vectors}}.dump() + "\n";
  return out;
}

/// magic, version, dim, count, index of (id, rows, byte offset), float32 payload.
inline std::string embeddings_binary(const EmbeddingStore& store) {
  std::string out(kEmbeddingMagic, 8);
  detail::put_u32(out, kEmbeddingBinaryVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(store.dim));
  detail::put_u32(out, static_cast<std::uint32_t>(store.records.size()));
  std::uint64_t offset = 0;
  for (const auto& r : store.records) {
    detail::put_u32(out, static_cast<std::uint32_t>(r.utterance_id.size()));
    out += r.utterance_id;
    detail::put_u32(out, static_cast<std::uint32_t>(r.vectors.size()));
    detail::put_u64(out, offset);
    offset += r.vectors.size() * store.dim * 4;
  }
  for (const auto& r : store.records)
    for (const auto& row : r.vectors)
      for (double x : row) {
        const float f = static_cast<float>(x);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        detail::put_u32(out, bits);
      }
  return out;
}

/// Problems found in an annotation or embedding file.
struct ValidationReport {
  std::filesystem::path path;
  std::string kind;  // "annotations" | "embeddings" | "embeddings-binary"
  std::size_t records = 0;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

namespace detail {

inline void check_embedding_record(const EmbeddingRecord& r, std::size_t dim, ValidationReport& rep) {
  if (r.vectors.empty()) rep.errors.push_back("record " + r.utterance_id + ": no vectors");
  for (std::size_t row = 0; row < r.vectors.size(); ++row) {
    if (r.vectors[row].size() != dim)
      rep.errors.push_back("record " + r.utterance_id + " row " + std::to_string(row) +
                           ": width " + std::to_string(r.vectors[row].size()) +
                           " does not match header dim " + std::to_string(dim));
    if (!std::all_of(r.vectors[row].begin(), r.vectors[row].end(),
                     [](double x) { return std::isfinite(x); }))
      rep.errors.push_back("record " + r.utterance_id + " row " + std::to_string(row) +
                           ": non-finite value");
  }
}

inline EmbeddingStore read_embeddings(const std::filesystem::path& path, ValidationReport& rep) {
  EmbeddingStore store;
  if (is_binary_embedding_file(path)) {
    rep.kind = "embeddings-binary";
    const std::string bytes = read_file(path);
    ByteReader rd(bytes, path.string());
    rd.str(8);
    const auto version = rd.uint(4);
    if (version != kEmbeddingBinaryVersion)
      throw ValidationError(path.string() + ": unsupported container version " + std::to_string(version));
    store.dim = rd.uint(4);
    const auto count = rd.uint(4);
    struct Entry { std::string id; std::size_t rows; std::uint64_t offset; };
    std::vector<Entry> index;
    for (std::uint64_t i = 0; i < count; ++i) {
      Entry e;
      e.id = rd.str(rd.uint(4));
      e.rows = rd.uint(4);
      e.offset = rd.uint(8);
      index.push_back(std::move(e));
    }
    const std::size_t payload = rd.pos();
    for (const auto& e : index) {
      rd.seek(payload + e.offset);
      EmbeddingRecord r{e.id, {}};
      for (std::size_t row = 0; row < e.rows; ++row) {
        std::vector<double> v(store.dim);
        for (auto& x : v) x = rd.f32();
        r.vectors.push_back(std::move(v));
      }
      store.records.push_back(std::move(r));
    }
    return store;
  }
  rep.kind = "embeddings";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::optional<std::size_t> declared;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = parse_lenient(line);
    } catch (const json::parse_error&) {
      rep.errors.push_back(where + ": malformed JSON");
      continue;
    }
    if (!have_header) {
      store.dim = field<std::size_t>(obj, "dim", where);
      if (obj.contains("count")) declared = field<std::size_t>(obj, "count", where);
      if (store.dim == 0) rep.errors.push_back(where + ": header dim must be positive");
      have_header = true;
      continue;
    }
    EmbeddingRecord r;
    try {
      r.utterance_id = field<std::string>(obj, "id", where);
      const json& rows = obj.at("vectors");
      for (const auto& row : rows) {
        std::vector<double> v;
        for (const auto& x : row)
          v.push_back(x.is_number() ? x.get<double>() : std::numeric_limits<double>::quiet_NaN());
        r.vectors.push_back(std::move(v));
      }
    } catch (const std::exception& e) {
      rep.errors.push_back(where + ": bad record (" + e.what() + ")");
      continue;
    }
    store.records.push_back(std::move(r));
  }
  if (!have_header) rep.errors.push_back(path.string() + ": missing {\"dim\",\"count\"} header");
  if (declared && *declared != store.records.size())
    rep.errors.push_back(path.string() + ": header count " + std::to_string(*declared) +
                         " but " + std::to_string(store.records.size()) + " records");
  return store;
}

}  // namespace detail

inline std::vector<AnnotationRecord> read_annotation_records(const std::filesystem::path& path,
                                                             ValidationReport& rep) {
  rep.kind = "annotations";
  std::vector<AnnotationRecord> out;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      json obj = json::parse(line);
      AnnotationRecord r;
      r.utterance_id = field<std::string>(obj, "id", where);
      r.pos = field<std::vector<std::string>>(obj, "pos", where);
      r.ner = field<std::vector<std::string>>(obj, "ner", where);
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      rep.errors.push_back(where + ": bad record (" + e.what() + ")");
    }
  }
  return out;
}

/// Structural checks on one annotation or embedding file: per-record
/// validity, header dimension, duplicate ids, non-finite vectors. With a
/// corpus, also token alignment for every record whose id the corpus knows.
inline ValidationReport validate_annotation_file(const std::filesystem::path& path,
                                                 const std::vector<Utterance>* corpus = nullptr) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  ValidationReport rep;
  rep.path = path;
  std::unordered_map<std::string, std::size_t> lengths;
  if (corpus)
    for (const auto& u : *corpus) lengths[u.id] = u.tokens.size();
  std::set<std::string> ids;
  auto check_id = [&](const std::string& id, std::size_t J) {
    if (!ids.insert(id).second) rep.errors.push_back("duplicate utterance_id " + id);
    if (auto it = lengths.find(id); it != lengths.end() && it->second != J)
      rep.errors.push_back("record " + id + ": " + std::to_string(J) + " rows for " +
                           std::to_string(it->second) + " tokens");
  };

  bool embeddings = is_binary_embedding_file(path);
  if (!embeddings) {
    std::ifstream in(path);
    std::string first;
    while (std::getline(in, first) && first.find_first_not_of(" \t\r") == std::string::npos) {
    }
    try {
      json obj = detail::parse_lenient(first);
      embeddings = obj.contains("dim") || obj.contains("vectors");
    } catch (const std::exception&) {
    }
  }
  if (embeddings) {
    EmbeddingStore store = detail::read_embeddings(path, rep);
    for (const auto& r : store.records) {
      detail::check_embedding_record(r, store.dim, rep);
      check_id(r.utterance_id, r.vectors.size());
    }
    rep.records = store.records.size();
  } else {
    auto records = read_annotation_records(path, rep);
    for (const auto& r : records) {
      if (r.pos.size() != r.ner.size())
        rep.errors.push_back("record " + r.utterance_id + ": pos/ner lengths differ");
      if (r.pos.empty()) rep.errors.push_back("record " + r.utterance_id + ": no tags");
      if (!is_ner_tag_valid(r.ner))
        rep.errors.push_back("record " + r.utterance_id + ": NER tags are not valid IOB over PER/GPE/ORG/MISC");
      check_id(r.utterance_id, r.pos.size());
    }
    rep.records = records.size();
  }
  return rep;
}

inline std::string annotations_jsonl(const std::vector<AnnotationRecord>& records) {
  std::string out;
  for (const auto& r : records) out += json{{"id", r.utterance_id}, {"pos", r.pos}, {"ner", r.ner}}.dump() + "\n";
  return out;
}

/// Annotation and embedding records for every utterance and slot description,
/// as produced by `provider`. Description records use description_key ids.
inline std::pair<std::vector<AnnotationRecord>, EmbeddingStore> export_annotations(
    const AnnotationProvider& provider, const std::vector<Utterance>& utterances,
    const std::vector<SlotType>& slot_types) {
  std::vector<AnnotationRecord> tags;
  EmbeddingStore store;
  store.dim = provider.ctx_dim();
  auto add = [&](const std::string& id, const Annotation& a) {
    tags.push_back({id, a.pos, a.ner});
    EmbeddingRecord e{id, {}};
    for (std::size_t j = 0; j < a.ctx.cols(); ++j) {
      std::vector<double> row(a.ctx.rows());
      for (std::size_t k = 0; k < a.ctx.rows(); ++k) row[k] = a.ctx.at(k, j);
      e.vectors.push_back(std::move(row));
    }
    store.records.push_back(std::move(e));
  };
  for (const auto& u : utterances) add(u.id, provider.annotate(u));
  for (const auto& s : slot_types) add(description_key(s), provider.annotate(s));
  return {std::move(tags), std::move(store)};
}

/// Reads precomputed annotations and vectors keyed by id. Lookups of unknown
/// ids fail; there is no silent fallback.
class FileProvider : public AnnotationProvider {
 public:
  FileProvider(const std::filesystem::path& annotations, const std::filesystem::path& embeddings) {
    ValidationReport rep;
    for (auto& r : read_annotation_records(annotations, rep)) {
      const std::string id = r.utterance_id;
      tags_.emplace(id, std::move(r));
    }
    EmbeddingStore store = detail::read_embeddings(embeddings, rep);
    for (const auto& r : store.records) detail::check_embedding_record(r, store.dim, rep);
    if (!rep.ok()) throw ValidationError("invalid annotation input: " + rep.errors.front());
    dim_ = store.dim;
    for (auto& r : store.records) {
      const std::string id = r.utterance_id;
      vectors_.emplace(id, std::move(r.vectors));
    }
  }

  std::size_t ctx_dim() const override { return dim_; }

  Annotation lookup(const std::string& id, const std::vector<std::string>& tokens) const override {
    auto t = tags_.find(id);
    auto v = vectors_.find(id);
    if (t == tags_.end() || v == vectors_.end())
      throw AnnotationLookupError("no annotation record for id " + id);
    const std::size_t J = tokens.size();
    if (v->second.size() != J)
      throw ValidationError("annotation for " + id + " has " + std::to_string(v->second.size()) +
                            " vectors for " + std::to_string(J) + " tokens");
    Annotation a;
    a.pos = t->second.pos;
    a.ner = t->second.ner;
    a.ctx = Tensor(Shape{dim_, J});
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t k = 0; k < dim_; ++k) a.ctx[k * J + j] = v->second[j][k];
    return a;
  }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, AnnotationRecord> tags_;
  std::unordered_map<std::string, std::vector<std::vector<double>>> vectors_;
};

}  // namespace leona
