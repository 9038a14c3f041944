#include "leona/corpus.hpp"
#include "leona/synthetic.hpp"

#include <gtest/gtest.h>

using namespace leona;

namespace {

std::string joined(const std::vector<Tag>& tags) {
  std::string out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (i) out += ' ';
    out += tag_char(tags[i]);
  }
  return out;
}

std::vector<std::string> random_labels(SplitMix64& rng, std::size_t J, const std::vector<std::string>& slots) {
  std::vector<std::string> out;
  std::string open;
  for (std::size_t j = 0; j < J; ++j) {
    const auto r = rng.below(3);
    if (r == 0 || (r == 1 && open.empty())) {
      open = slots[rng.below(slots.size())];
      out.push_back("B-" + open);
    } else if (r == 1) {
      out.push_back("I-" + open);
    } else {
      open.clear();
      out.push_back("O");
    }
  }
  return out;
}

}  // namespace

TEST(Labels, BookingUtteranceTagSequences) {
  const Utterance u = synthetic::booking_utterance();
  ASSERT_EQ(u.tokens.size(), 14u);
  EXPECT_EQ(joined(strip_slot_labels(u.labels)), "O O O O O O O O B I I O B I");
  EXPECT_EQ(joined(project_slot_labels(u.labels, "restaurant_name")), "O O O O O O O O B I I O O O");
  EXPECT_EQ(joined(project_slot_labels(u.labels, "city")), "O O O O O O O O O O O O B I");
  EXPECT_EQ(joined(project_slot_labels(u.labels, "salon_name")), "O O O O O O O O O O O O O O");
}

TEST(Labels, TrivialCases) {
  EXPECT_EQ(joined(strip_slot_labels({"O", "O"})), "O O");
  EXPECT_EQ(joined(strip_slot_labels({"B-city"})), "B");
  EXPECT_THROW(strip_slot_labels({"O", "I-city"}), IobError);
  EXPECT_THROW(strip_slot_labels({"B-city", "I-artist"}), IobError);
  EXPECT_THROW(project_slot_labels({"I-city"}, "city"), IobError);
  EXPECT_THROW(strip_slot_labels({"X-city"}), IobError);
}

TEST(Labels, BookingUtteranceExamples) {
  const Utterance u = synthetic::booking_utterance();
  std::vector<SlotType> inventory;
  for (const char* n : {"artist", "city", "cuisine", "phone_number", "restaurant_name", "salon_name"})
    inventory.push_back({n, tokenize_slot_name(n), {"restaurant"}});
  const auto ex = generate_examples(u, inventory, 3, 7);
  ASSERT_EQ(ex.size(), 5u);
  EXPECT_EQ(ex[0].slot_type.name, "restaurant_name");
  EXPECT_EQ(ex[1].slot_type.name, "city");
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(ex[i].polarity, Polarity::positive);
  std::set<std::string> negatives;
  for (std::size_t i = 2; i < 5; ++i) {
    EXPECT_EQ(ex[i].polarity, Polarity::negative);
    EXPECT_EQ(ex[i].y_slot, std::vector<Tag>(14, Tag::O));
    EXPECT_EQ(joined(ex[i].y_indep), "O O O O O O O O B I I O B I");
    negatives.insert(ex[i].slot_type.name);
  }
  EXPECT_EQ(negatives.size(), 3u);
  EXPECT_FALSE(negatives.count("city"));
  EXPECT_FALSE(negatives.count("restaurant_name"));
}

TEST(Labels, ExampleGenerationBoundaries) {
  const Utterance plain{"u", "d", "i", {"hello", "there"}, {"O", "O"}};
  const std::vector<SlotType> inv = {{"a", {"a"}, {}}, {"b", {"b"}, {}}, {"c", {"c"}, {}}, {"d", {"d"}, {}}};
  EXPECT_EQ(generate_examples(plain, inv, 3, 1).size(), 3u);
  const Utterance full{"v", "d", "i", {"x", "y"}, {"B-a", "B-b"}};
  const std::vector<SlotType> exact = {inv[0], inv[1]};
  EXPECT_EQ(generate_examples(full, exact, 3, 1).size(), 2u);
  EXPECT_EQ(generate_examples(full, inv, 5, 1).size(), 4u);
  EXPECT_THROW(generate_examples(plain, {}, 3, 1), std::invalid_argument);
  EXPECT_THROW(generate_examples(full, {inv[0]}, 3, 1), std::invalid_argument);
}

TEST(Labels, ExampleGenerationIsSeeded) {
  const Utterance u = synthetic::booking_utterance();
  std::vector<SlotType> inv;
  for (int i = 0; i < 12; ++i) inv.push_back({"s" + std::to_string(i), {"s"}, {}});
  inv.push_back({"city", {"city"}, {}});
  inv.push_back({"restaurant_name", {"restaurant", "name"}, {}});
  auto names = [](const std::vector<TrainingExample>& ex) {
    std::vector<std::string> out;
    for (const auto& e : ex) out.push_back(e.slot_type.name);
    return out;
  };
  EXPECT_EQ(names(generate_examples(u, inv, 3, 42)), names(generate_examples(u, inv, 3, 42)));
  bool differs = false;
  for (std::uint64_t s = 0; s < 20 && !differs; ++s)
    differs = names(generate_examples(u, inv, 3, s)) != names(generate_examples(u, inv, 3, 42));
  EXPECT_TRUE(differs);
}

TEST(Labels, StripAndProjectAgreeOnEverySlotSpan) {
  SplitMix64 rng(99);
  const std::vector<std::string> slots = {"a", "b", "c"};
  for (int trial = 0; trial < 500; ++trial) {
    const auto labels = random_labels(rng, 1 + rng.below(12), slots);
    ASSERT_TRUE(is_iob_valid(labels));
    const auto indep = strip_slot_labels(labels);
    EXPECT_TRUE(is_iob_valid(indep));
    std::vector<std::string> rebuilt(labels.size(), "O");
    for (const auto& s : slots_present(labels)) {
      const auto proj = project_slot_labels(labels, s);
      EXPECT_TRUE(is_iob_valid(proj));
      for (std::size_t j = 0; j < labels.size(); ++j) {
        if (TypedLabel::parse(labels[j]).slot == s) {
          EXPECT_EQ(proj[j], indep[j]);
          rebuilt[j] = std::string(1, tag_char(proj[j])) + "-" + s;
        } else {
          EXPECT_EQ(proj[j], Tag::O);
        }
      }
    }
    EXPECT_EQ(rebuilt, labels);
  }
}

TEST(Labels, SlotNamesTokenize) {
  EXPECT_EQ(tokenize_slot_name("playlist_owner"), (std::vector<std::string>{"playlist", "owner"}));
  EXPECT_EQ(tokenize_slot_name("city"), (std::vector<std::string>{"city"}));
}
