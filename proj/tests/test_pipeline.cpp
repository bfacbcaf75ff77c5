#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "semgate/pipeline.hpp"

namespace {

using namespace semgate;
namespace fs = std::filesystem;

const fs::path kToyDir = fs::path(SEMGATE_SOURCE_DIR) / "data" / "toy";

ExperimentConfig toy() { return ExperimentConfig::load(kToyDir / "experiment.toml"); }

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "semgate_pipeline_test";
  fs::create_directories(dir);
  const auto p = dir / name;
  fs::remove(p);
  return p;
}

// Fails the test on any network use.
class CountingTransport final : public HttpTransport {
 public:
  HttpResponse post_json(const std::string&, const std::string&, const HttpHeaders&,
                         std::chrono::milliseconds) override {
    ++calls;
    throw TransportError("offline runs must not touch the network");
  }
  int calls = 0;
};

// Judge that never produces a score.
class SilentJudge final : public JudgeClient {
 public:
  std::string complete(const JudgeRequest&) override {
    ++calls_;
    return "no idea";
  }
  std::string model_name() const override { return "silent"; }
  std::size_t calls() const override { return calls_; }

 private:
  std::atomic<std::size_t> calls_{0};
};

TEST(Config, ParsesToyFile) {
  const auto c = toy();
  EXPECT_EQ(c.seed, 7u);
  EXPECT_TRUE(c.offline);
  EXPECT_EQ(c.strategy.kind, StrategyKind::Dsr);
  EXPECT_EQ(c.group_size, 2);
  EXPECT_EQ(c.market.tranches, 2);
  EXPECT_EQ(c.market.one_way_cost, 0.001);
  EXPECT_EQ(c.corpus, kToyDir / "corpus.jsonl");
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, RejectsBadInputBeforeAnyWork) {
  const std::string base = "[data]\ncorpus = \"corpus.jsonl\"\nprices = \"prices.csv\"\nrollouts = \"rollouts.jsonl\"\n";
  EXPECT_THROW(ExperimentConfig::parse(base + "[reward]\nstrategy = \"dsr2\"\n", kToyDir), DomainError);
  EXPECT_THROW(ExperimentConfig::parse(base + "[reward]\nstratgy = \"dsr\"\n", kToyDir), DomainError);
  EXPECT_THROW(ExperimentConfig::parse(base + "[extra]\n", kToyDir), DomainError);
  EXPECT_THROW(ExperimentConfig::parse(base + "[grpo]\ngroup_size = \"8\"\n", kToyDir), DomainError);
  EXPECT_THROW(ExperimentConfig::parse("not toml = = =", kToyDir), DomainError);
  auto small = ExperimentConfig::parse(base + "[grpo]\ngroup_size = 1\n", kToyDir);
  EXPECT_THROW(small.validate(), DomainError);
  auto missing = ExperimentConfig::parse(base, kToyDir / "nowhere");
  try {
    missing.validate();
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_EQ(e.field(), "data.corpus");
  }
  auto nolog = ExperimentConfig::parse("[data]\ncorpus = \"corpus.jsonl\"\nprices = \"prices.csv\"\n", kToyDir);
  EXPECT_THROW(nolog.validate(), DomainError);
}

TEST(Pipeline, OfflineRunNeverTouchesTransport) {
  auto transport = std::make_shared<CountingTransport>();
  auto clients = make_clients(toy(), transport);
  const auto rep = run_experiment(toy(), clients);
  EXPECT_EQ(transport->calls, 0);
  EXPECT_EQ(rep.records.size(), 12u);
  EXPECT_EQ(clients.generator->calls(), 6u);
}

TEST(Pipeline, ToyFixtureValues) {
  auto clients = make_clients(toy(), nullptr);
  const auto rep = run_experiment(toy(), clients);
  ASSERT_EQ(rep.records.size(), 12u);

  // Hand-derived from the fixture: r from compounded two-day returns minus benchmark and
  // 2 x 0.1% cost; s from word-overlap coefficients of the three judged pairs.
  const std::vector<double> r{0.0232, 0.0127, 0.0232, 0.0, -0.0121, 0.0072, 0.0, 0.0, -0.00735, 0.01297, 0.04345, 0.04345};
  const std::vector<double> s{2.0 / 3, 0.7, 1.0 / 6, 0.0, 13.0 / 18, 5.0 / 9, 1.0 / 12, 13.0 / 18, 2.0 / 3, 13.0 / 18, 2.0 / 3, 11.0 / 18};
  for (std::size_t i = 0; i < 12; ++i) {
    const auto& rec = rep.records[i];
    EXPECT_NEAR(rec.r, r[i], 1e-12) << i;
    EXPECT_NEAR(rec.s, s[i], 1e-15) << i;
    EXPECT_EQ(rec.gated, gate_of(RewardStrategy{StrategyKind::Dsr}, rec.r, rec.s)) << i;
    EXPECT_TRUE(rec.available);
    ASSERT_TRUE(rec.advantage) << i;
  }
  EXPECT_FALSE(rep.records[3].parse_ok);
  EXPECT_EQ(rep.records[5].hallucinated_symbols, std::vector<std::string>{"ZZZ"});

  // Each group has two members, so advantages are +-x with x = d / (d + eps).
  for (std::size_t i = 0; i < 12; i += 2) {
    const double half = std::abs(rep.records[i + 1].gated - rep.records[i].gated) / 2;
    const double x = half / (half + 1e-8);
    const double sign = rep.records[i + 1].gated > rep.records[i].gated ? 1.0 : -1.0;
    EXPECT_NEAR(*rep.records[i].advantage, -sign * x, 1e-9);
    EXPECT_NEAR(*rep.records[i + 1].advantage, sign * x, 1e-9);
  }

  const auto& a = rep.aggregates;
  EXPECT_EQ(a.parse_failures, 1u);
  EXPECT_EQ(a.profit_count, 7u);
  EXPECT_EQ(a.loss_count, 2u);
  EXPECT_NEAR(a.mean_s, 0.5236111111111111, 1e-15);
  EXPECT_NEAR(a.hallucination_rate, 1.0 / 12, 1e-15);
  EXPECT_NEAR(*a.loss_alignment_incentive, (0.0121 + 0.00735) / 2, 1e-12);

  ASSERT_TRUE(rep.backtest);
  const std::vector<double> nav{0.9995, 1.00899, 1.0180512447849002};
  ASSERT_EQ(rep.backtest->nav.size(), nav.size());
  for (std::size_t i = 0; i < nav.size(); ++i) EXPECT_NEAR(rep.backtest->nav[i], nav[i], 1e-12);
}

TEST(Pipeline, ReportsAreByteIdentical) {
  std::string first;
  for (const int workers : {1, 2, 4}) {
    auto cfg = toy();
    cfg.parallelism = workers;
    cfg.report = scratch("report_" + std::to_string(workers) + ".json");
    auto clients = make_clients(cfg, nullptr);
    run_experiment(cfg, clients);
    const std::string bytes = fixture::read(cfg.report->string());
    ASSERT_FALSE(bytes.empty());
    if (first.empty()) {
      first = bytes;
    } else {
      EXPECT_EQ(bytes, first) << "parallelism " << workers;
    }
    EXPECT_FALSE(fs::exists(cfg.report->string() + ".tmp"));
  }
}

TEST(Pipeline, CacheServesSecondRun) {
  auto cfg = toy();
  cfg.cache = scratch("cache.jsonl");
  auto c1 = make_clients(cfg, nullptr);
  const auto a = run_experiment(cfg, c1);
  EXPECT_GT(c1.judge->calls(), 0u);
  auto c2 = make_clients(cfg, nullptr);
  const auto b = run_experiment(cfg, c2);
  EXPECT_EQ(c2.judge->calls(), 0u);
  EXPECT_EQ(c2.embedder->calls(), 0u);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(Pipeline, UnavailableSamplesAreExcluded) {
  auto cfg = toy();
  auto clients = make_clients(cfg, nullptr);
  clients.judge = std::make_unique<SilentJudge>();
  const auto rep = run_experiment(cfg, clients);
  std::size_t unavailable = 0;
  for (const auto& rec : rep.records) {
    if (!rec.available) {
      ++unavailable;
      EXPECT_FALSE(rec.advantage);
      EXPECT_EQ(rec.s, 0.0);
      EXPECT_NE(rec.unavailable_reason.find("judge"), std::string::npos);
    }
  }
  EXPECT_EQ(unavailable, 11u);  // every parsed rollout needs the judge
  EXPECT_EQ(rep.aggregates.available, 1u);
  EXPECT_FALSE(rep.records[3].advantage);  // its group partner is gone
}

TEST(Pipeline, ReplayExhaustionNamesTheSample) {
  auto cfg = toy();
  cfg.group_size = 3;
  cfg.report = scratch("exhausted.json");
  auto clients = make_clients(cfg, nullptr);
  try {
    run_experiment(cfg, clients);
    FAIL();
  } catch (const SampleError& e) {
    EXPECT_EQ(e.sample_key(), "US/2025-08-11/1");
    EXPECT_NE(std::string(e.what()).find("replay"), std::string::npos);
  }
  EXPECT_TRUE(fs::exists(cfg.report->string() + ".partial.json"));
}

TEST(Pipeline, AblationSigns) {
  auto cfg = toy();
  auto clients = make_clients(cfg, nullptr);
  const std::vector<RewardStrategy> strategies{RewardStrategy::from_name("market_only"), RewardStrategy::from_name("fsr"),
                                               RewardStrategy::from_name("dsr"), RewardStrategy::from_name("naive_multiply")};
  const auto table = ablation_compare(cfg, strategies, clients);
  ASSERT_EQ(table["columns"].size(), 4u);
  std::map<std::string, double> incentive;
  for (const auto& col : table["columns"]) {
    incentive[col["strategy"].get<std::string>()] = col["aggregates"]["loss_alignment_incentive"].get<double>();
    EXPECT_EQ(col["gated"].size(), 12u);
  }
  EXPECT_EQ(incentive["market_only"], 0.0);
  EXPECT_EQ(incentive["fsr"], 2.0);
  EXPECT_GT(incentive["dsr"], 0.0);
  EXPECT_LT(incentive["naive_multiply"], 0.0);
  // Every column is built from the same scored rollouts.
  EXPECT_EQ(clients.generator->calls(), 6u);
  EXPECT_THROW(ablation_compare(cfg, {strategies[0]}, clients), DomainError);
}

}  // namespace
