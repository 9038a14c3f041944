#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace leona {

/// Untyped IOB tag. The numeric order is the CRF tag index.
enum class Tag : std::uint8_t { B = 0, I = 1, O = 2 };

inline constexpr std::size_t kNumTags = 3;

inline std::size_t index_of(Tag t) { return static_cast<std::size_t>(t); }
inline Tag tag_at(std::size_t i) { return static_cast<Tag>(i); }

inline char tag_char(Tag t) {
  switch (t) {
    case Tag::B: return 'B';
    case Tag::I: return 'I';
    case Tag::O: return 'O';
  }
  return '?';
}

inline std::string to_string(const std::vector<Tag>& tags) {
  std::string s;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (i) s += ' ';
    s += tag_char(tags[i]);
  }
  return s;
}

inline std::vector<Tag> parse_tags(std::string_view text) {
  std::vector<Tag> out;
  for (char c : text) {
    if (c == ' ') continue;
    if (c == 'B') out.push_back(Tag::B);
    else if (c == 'I') out.push_back(Tag::I);
    else if (c == 'O') out.push_back(Tag::O);
    else throw std::invalid_argument(std::string("bad tag character '") + c + "'");
  }
  return out;
}

class IobError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A typed label: "O", "B-slot" or "I-slot".
struct TypedLabel {
  Tag tag = Tag::O;
  std::string slot;

  static TypedLabel parse(std::string_view s) {
    if (s == "O") return {Tag::O, {}};
    if (s.size() > 2 && s[1] == '-' && (s[0] == 'B' || s[0] == 'I'))
      return {s[0] == 'B' ? Tag::B : Tag::I, std::string(s.substr(2))};
    throw IobError("malformed IOB label '" + std::string(s) + "'");
  }

  std::string str() const {
    if (tag == Tag::O) return "O";
    return std::string(1, tag_char(tag)) + "-" + slot;
  }
};

/// Position of the first IOB violation, if any.
inline std::optional<std::size_t> first_iob_violation(const std::vector<std::string>& labels) {
  std::string prev_slot;
  Tag prev = Tag::O;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    TypedLabel l;
    try {
      l = TypedLabel::parse(labels[j]);
    } catch (const IobError&) {
      return j;
    }
    if (l.tag == Tag::I && (prev == Tag::O || prev_slot != l.slot)) return j;
    prev = l.tag;
    prev_slot = l.slot;
  }
  return std::nullopt;
}

inline bool is_iob_valid(const std::vector<std::string>& labels) {
  return !first_iob_violation(labels).has_value();
}

inline bool is_iob_valid(const std::vector<Tag>& tags) {
  for (std::size_t j = 0; j < tags.size(); ++j)
    if (tags[j] == Tag::I && (j == 0 || tags[j - 1] == Tag::O)) return false;
  return true;
}

/// Inclusive token range.
struct TokenRange {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t length() const { return end - start + 1; }
  bool overlaps(const TokenRange& o) const { return start <= o.end && o.start <= end; }
  bool operator==(const TokenRange&) const = default;
};

/// Maximal B I* runs of an untyped, IOB-valid tag sequence.
inline std::vector<TokenRange> tag_runs(const std::vector<Tag>& tags) {
  if (!is_iob_valid(tags)) throw IobError("tag sequence is not IOB-valid: " + to_string(tags));
  std::vector<TokenRange> runs;
  for (std::size_t j = 0; j < tags.size(); ++j) {
    if (tags[j] != Tag::B) continue;
    std::size_t e = j;
    while (e + 1 < tags.size() && tags[e + 1] == Tag::I) ++e;
    runs.push_back({j, e});
  }
  return runs;
}

}  // namespace leona
