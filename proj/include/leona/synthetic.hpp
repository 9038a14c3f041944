#pragma once

// Small generated corpora for smoke runs and tests.
//
// toy_corpus:        50 utterances, domains restaurant and music, slot types
//                    restaurant_name, city, artist, playlist.
// zero_shot_corpus:  a source domain with eight slot types and a target domain
//                    with four others. Every value follows the first word of
//                    its slot description ("... the museum Talveri ..."), so a
//                    model can match descriptions to values it has never seen.

#include "leona/annotators.hpp"
#include "leona/corpus.hpp"
#include "leona/rng.hpp"

#include <cctype>

namespace leona::synthetic {

namespace detail {

inline std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Expands "{slot}" placeholders in a template into tokens and typed labels.
inline Utterance fill(const std::string& id, const std::string& domain, const std::string& intent,
                      const std::string& pattern, const std::map<std::string, std::string>& values) {
  Utterance u{id, domain, intent, {}, {}};
  for (const auto& w : words(pattern)) {
    if (w.size() > 2 && w.front() == '{' && w.back() == '}') {
      const std::string slot = w.substr(1, w.size() - 2);
      const auto value = words(values.at(slot));
      for (std::size_t i = 0; i < value.size(); ++i) {
        u.tokens.push_back(value[i]);
        u.labels.push_back((i == 0 ? "B-" : "I-") + slot);
      }
    } else {
      u.tokens.push_back(w);
      u.labels.push_back("O");
    }
  }
  return u;
}

inline std::string made_up_name(SplitMix64& rng) {
  static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "st"};
  static const char* vowels[] = {"a", "e", "i", "o", "u", "ai", "eo"};
  std::string s;
  const std::size_t syllables = 2 + rng.below(2);
  for (std::size_t i = 0; i < syllables; ++i) {
    s += onsets[rng.below(std::size(onsets))];
    s += vowels[rng.below(std::size(vowels))];
  }
  if (rng.below(2)) s += "n";
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

inline SlotType slot(const std::string& name, const std::string& domain) {
  return SlotType{name, tokenize_slot_name(name), {domain}};
}

}  // namespace detail

/// The 14-token booking utterance used in the label-algebra and decoder fixtures.
inline Utterance booking_utterance() {
  return detail::fill("toy-000", "restaurant", "book_restaurant",
                      "I would like to book a table at {restaurant_name} in {city}",
                      {{"restaurant_name", "8 Immortals Restaurant"}, {"city", "San Francisco"}});
}

inline Dataset toy_corpus() {
  Dataset ds;
  ds.name = "toy";
  ds.slot_types = {detail::slot("artist", "music"), detail::slot("city", "restaurant"),
                   detail::slot("playlist", "music"), detail::slot("restaurant_name", "restaurant")};
  ds.slot_types[2].description = {"playlist", "name"};
  ds.slot_types[3].description = {"restaurant", "name"};

  const std::vector<std::string> restaurants = {"Golden Dragon", "Chez Panisse", "Blue Hill",
                                                "Nobu", "The French Laundry", "Sushi Ran",
                                                "Zuni Cafe", "Tartine", "State Bird Provisions",
                                                "Flour and Water", "Kokkari", "Delfina"};
  const std::vector<std::string> cities = {"San Francisco", "Boston", "New York", "Chicago",
                                           "Austin", "Seattle", "Denver", "Portland"};
  const std::vector<std::string> artists = {"Miles Davis", "Adele", "Daft Punk", "Nina Simone",
                                            "Radiohead", "Bob Marley", "Taylor Swift", "Coldplay"};
  const std::vector<std::string> playlists = {"latin dance cardio", "morning coffee", "road trip",
                                              "chill vibes", "workout mix", "jazz classics",
                                              "study beats", "summer hits"};
  const std::vector<std::string> restaurant_patterns = {
      "book a table at {restaurant_name} in {city}",
      "find me a reservation at {restaurant_name} please",
      "is there a good place to eat in {city}",
      "I want to eat at {restaurant_name} in {city} tonight",
      "reserve {restaurant_name} for two people",
      "show restaurants near {city}",
  };
  const std::vector<std::string> music_patterns = {
      "play something by {artist}",
      "add this song to {playlist}",
      "put {artist} on my {playlist} playlist",
      "I want to hear {artist}",
      "start the {playlist} playlist",
      "add a track by {artist} to {playlist}",
  };

  ds.utterances.push_back(booking_utterance());
  for (std::size_t i = 1; i < 25; ++i) {
    const auto& p = restaurant_patterns[i % restaurant_patterns.size()];
    ds.utterances.push_back(detail::fill(
        "toy-" + std::string(i < 10 ? "00" : "0") + std::to_string(i), "restaurant", "book_restaurant", p,
        {{"restaurant_name", restaurants[(i * 5) % restaurants.size()]},
         {"city", cities[(i * 3) % cities.size()]}}));
  }
  for (std::size_t i = 25; i < 50; ++i) {
    const auto& p = music_patterns[i % music_patterns.size()];
    ds.utterances.push_back(detail::fill("toy-0" + std::to_string(i), "music", "play_music", p,
                                         {{"artist", artists[(i * 3) % artists.size()]},
                                          {"playlist", playlists[(i * 5) % playlists.size()]}}));
  }
  return ds;
}

inline const char* kSourceDomain = "errands";
inline const char* kTargetDomain = "outings";

/// Source domain slot types (seen in training) and target domain slot types (unseen).
inline std::vector<std::string> source_slots() {
  return {"album_name", "artist_name", "city_name", "hotel_name",
          "movie_name", "restaurant_name", "street_name", "team_name"};
}
inline std::vector<std::string> target_slots() {
  return {"museum_name", "park_name", "salon_name", "theater_name"};
}

inline Dataset zero_shot_corpus(std::uint64_t seed = 7, std::size_t source_n = 240,
                                std::size_t target_n = 80) {
  Dataset ds;
  ds.name = "zeroshot";
  for (const auto& s : source_slots()) ds.slot_types.push_back(detail::slot(s, kSourceDomain));
  for (const auto& s : target_slots()) ds.slot_types.push_back(detail::slot(s, kTargetDomain));
  sort_slot_types(ds.slot_types);

  const std::vector<std::string> one_slot = {
      "show me the {a} please",
      "I want to go to the {a} today",
      "find the {a} for me",
      "can you look up the {a} now",
      "what about the {a}",
  };
  const std::vector<std::string> two_slots = {
      "find the {a} near the {b}",
      "show me the {a} and then the {b}",
      "I want the {a} not the {b}",
      "is the {a} close to the {b} today",
  };

  SplitMix64 rng(seed);
  auto value = [&] {
    std::string v = detail::made_up_name(rng);
    if (rng.below(3) == 0) v += " " + detail::made_up_name(rng);
    return v;
  };
  auto cue = [](const std::string& slot) { return slot.substr(0, slot.find('_')); };
  auto make = [&](const std::string& id, const std::string& domain, const std::vector<std::string>& slots) {
    const bool pair = rng.below(2) == 0;
    const auto& patterns = pair ? two_slots : one_slot;
    std::string pattern = patterns[rng.below(patterns.size())];
    const std::string a = slots[rng.below(slots.size())];
    std::string b = slots[rng.below(slots.size())];
    while (b == a) b = slots[rng.below(slots.size())];
    std::map<std::string, std::string> values{{a, value()}};
    auto put = [&](const std::string& key, const std::string& slot) {
      const auto at = pattern.find("{" + key + "}");
      pattern.replace(at, key.size() + 2, cue(slot) + " {" + slot + "}");
    };
    put("a", a);
    if (pair) {
      values[b] = value();
      put("b", b);
    }
    return detail::fill(id, domain, domain == kSourceDomain ? "find_errand" : "plan_outing", pattern, values);
  };
  for (std::size_t i = 0; i < source_n; ++i)
    ds.utterances.push_back(make("src-" + std::to_string(1000 + i), kSourceDomain, source_slots()));
  for (std::size_t i = 0; i < target_n; ++i)
    ds.utterances.push_back(make("tgt-" + std::to_string(1000 + i), kTargetDomain, target_slots()));
  return ds;
}

}  // namespace leona::synthetic
