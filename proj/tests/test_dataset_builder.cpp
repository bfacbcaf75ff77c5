#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "semgate/dataset_builder.hpp"
#include "semgate/errors.hpp"

namespace {

using namespace semgate;

MarketContext ctx(const char* date, const char* briefing = "AAA rallied.") {
  MarketContext c;
  c.date = Date::parse(date);
  c.briefing = briefing;
  return c;
}

TEST(Beliefs, BundledCatalogIsComplete) {
  const auto file = load_beliefs(std::filesystem::path(SEMGATE_SOURCE_DIR) / "data" / "beliefs.json");
  ASSERT_EQ(file.size(), 15u);
  EXPECT_NO_THROW(validate_contiguous_ids(file));
  EXPECT_EQ(file, builtin_beliefs());
  EXPECT_EQ(beliefs_from_json(to_json(builtin_beliefs())), builtin_beliefs());
}

TEST(Beliefs, RejectsBadCatalogs) {
  EXPECT_THROW(beliefs_from_json(nlohmann::json::array()), DomainError);
  EXPECT_THROW(beliefs_from_json(nlohmann::json::parse(R"([{"id":1,"category":"a","description":"x"},{"id":1,"category":"b","description":"y"}])")),
               DomainError);
  const std::vector<Belief> gap{{1, "a", "x"}, {3, "b", "y"}};
  EXPECT_THROW(validate_contiguous_ids(gap), DomainError);
}

TEST(Augment, OneDayFifteenBeliefs) {
  const auto samples = augment(ctx("2025-08-13"), builtin_beliefs());
  ASSERT_EQ(samples.size(), 15u);
  for (const auto& s : samples) {
    EXPECT_NE(s.prompt.find("AAA rallied."), std::string::npos);
    EXPECT_NE(s.prompt.find(s.belief.description), std::string::npos);
  }
}

TEST(Augment, PromptLayoutOrder) {
  const std::vector<Belief> one{{4, "Momentum", "Follows strong trends."}};
  const auto samples = augment(ctx("2025-08-13"), one);
  ASSERT_EQ(samples.size(), 1u);
  const std::string& p = samples[0].prompt;
  const auto task = p.find("<Task>");
  const auto trig = p.find("<Trigger_Time>");
  const auto bg = p.find("<Background_Information>");
  const auto belief = p.find("Follows strong trends.");
  ASSERT_NE(belief, std::string::npos);
  EXPECT_LT(task, trig);
  EXPECT_LT(trig, bg);
  EXPECT_LT(bg, belief);
  EXPECT_NE(p.find("2025-08-13"), std::string::npos);
  EXPECT_EQ(samples[0].key(), "US/2025-08-13/4");
}

TEST(Augment, TwoDaysDistinctKeys) {
  const std::vector<MarketContext> days{ctx("2025-08-13"), ctx("2025-08-14")};
  const auto samples = augment(days, builtin_beliefs());
  ASSERT_EQ(samples.size(), 30u);
  std::set<std::string> keys;
  for (const auto& s : samples) keys.insert(s.key());
  EXPECT_EQ(keys.size(), 30u);
}

TEST(Augment, Errors) {
  EXPECT_THROW(augment(ctx("2025-08-13", ""), builtin_beliefs()), DomainError);
  EXPECT_THROW(augment(ctx("2025-08-13"), std::vector<Belief>{}), DomainError);
}

TEST(Split, Examples) {
  const std::vector<MarketContext> two{ctx("2024-07-01"), ctx("2025-07-01")};
  const auto [train, test] = split_by_time(two, Date::parse("2025-07-01"));
  ASSERT_EQ(train.size(), 1u);
  ASSERT_EQ(test.size(), 1u);
  EXPECT_EQ(train[0].date, Date::parse("2024-07-01"));

  const auto [e1, e2] = split_by_time(std::vector<MarketContext>{}, Date::parse("2025-07-01"));
  EXPECT_TRUE(e1.empty() && e2.empty());

  const std::vector<MarketContext> late{ctx("2025-08-01"), ctx("2025-09-01")};
  EXPECT_TRUE(split_by_time(late, Date::parse("2025-07-01")).first.empty());
}

TEST(Split, PartitionProperty) {
  std::vector<MarketContext> days;
  for (int d = 1; d <= 28; ++d) days.push_back(ctx(("2025-02-" + std::string(d < 10 ? "0" : "") + std::to_string(d)).c_str()));
  for (int b = 1; b <= 28; b += 3) {
    const Date boundary(2025, 2, static_cast<unsigned>(b));
    const auto [train, test] = split_by_time(days, boundary);
    EXPECT_EQ(train.size() + test.size(), days.size());
    for (const auto& c : train) EXPECT_LT(c.date, boundary);
    for (const auto& c : test) EXPECT_GE(c.date, boundary);
  }
}

TEST(Corpus, LoadsAndRejectsDuplicates) {
  const auto dir = std::filesystem::temp_directory_path() / "semgate_corpus_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "ok.jsonl");
    out << R"({"date":"2025-08-13","market":"US","briefing":"AAA rose."})" << "\n\n"
        << R"({"date":"2025-08-13","market":"CN","briefing":"BBB fell.","token_estimate":9})" << "\n";
  }
  const auto corpus = load_corpus(dir / "ok.jsonl");
  ASSERT_EQ(corpus.size(), 2u);
  EXPECT_EQ(corpus[0].token_estimate, 3u);
  EXPECT_EQ(corpus[1].market, Market::CN);
  EXPECT_EQ(corpus[1].token_estimate, 9u);
  {
    std::ofstream out(dir / "dup.jsonl");
    out << R"({"date":"2025-08-13","market":"US","briefing":"a"})" << "\n"
        << R"({"date":"2025-08-13","market":"US","briefing":"b"})" << "\n";
  }
  EXPECT_THROW(load_corpus(dir / "dup.jsonl"), DomainError);
  EXPECT_THROW(load_corpus(dir / "missing.jsonl"), DomainError);
  std::filesystem::remove_all(dir);
}

TEST(Market, Names) {
  EXPECT_EQ(market_from_name("cn"), Market::CN);
  EXPECT_EQ(to_name(Market::US), "US");
  EXPECT_THROW(market_from_name("EU"), DomainError);
}

}  // namespace
