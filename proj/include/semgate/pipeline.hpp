#pragma once

// End-to-end experiment: corpus + beliefs -> rollouts -> verification -> gating ->
// group advantages -> optional backtest -> JSON report.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "semgate/grpo_advantage.hpp"
#include "semgate/market_env.hpp"
#include "semgate/model_clients.hpp"
#include "semgate/reward_gating.hpp"
#include "semgate/verification.hpp"

namespace semgate {

struct ExperimentConfig {
  // [data]; relative paths in the file are resolved against the file's directory.
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> beliefs;   ///< built-in catalog when absent
  std::optional<std::filesystem::path> rollouts;  ///< replay log; required offline
  std::filesystem::path prices;

  // [reward]
  RewardStrategy strategy;

  // [grpo]
  int group_size = 8;
  double epsilon = 1e-8;
  StdConvention std_convention = StdConvention::Population;
  double temperature = 1.0;

  // [verification]
  VerificationConfig verification;
  int parallelism = 4;
  std::string prompt_version = "v1";
  double judge_scale = 1.0;

  // [market]
  BacktestConfig market;
  bool backtest = true;

  // [clients]
  int embed_dim = 256;

  // [output]
  std::optional<std::filesystem::path> report;
  std::optional<std::filesystem::path> cache;

  std::uint64_t seed = 0;
  bool offline = true;

  /// Checks every field and that referenced files exist. Throws DomainError naming the key.
  void validate() const;
  /// Parses TOML; unknown sections or keys are rejected. Does not call validate().
  static ExperimentConfig load(const std::filesystem::path& path);
  static ExperimentConfig parse(std::string_view toml_text, const std::filesystem::path& base_dir);
};

/// A module error annotated with the sample it occurred on.
class SampleError : public std::runtime_error {
 public:
  SampleError(const std::string& sample_key, int rollout_index, const std::string& what)
      : std::runtime_error(sample_key + " rollout " + std::to_string(rollout_index) + ": " + what),
        sample_key_(sample_key),
        rollout_index_(rollout_index) {}

  const std::string& sample_key() const { return sample_key_; }
  int rollout_index() const { return rollout_index_; }

 private:
  std::string sample_key_;
  int rollout_index_;
};

struct ClientBundle {
  std::unique_ptr<GeneratorClient> generator;
  std::unique_ptr<EmbeddingClient> embedder;
  std::unique_ptr<JudgeClient> judge;
};

/// Offline: replay generator, hashing embedder and overlap judge; the transport is never
/// touched. Online: HTTP adapters configured from GEN_*, EMBED_* and JUDGE_* variables,
/// except that a configured rollout log still drives generation.
ClientBundle make_clients(const ExperimentConfig& config, std::shared_ptr<HttpTransport> transport);

struct SampleRecord {
  std::string date;
  std::string market;
  int belief_id = 0;
  int rollout_index = 0;
  bool parse_ok = false;
  bool available = true;  ///< false when verification could not be completed
  std::string unavailable_reason;
  double r = 0.0;
  double s = 0.0;
  double gated = 0.0;
  std::optional<double> advantage;  ///< absent when fewer than two group members are available
  std::optional<TriangularScores> scores;
  std::vector<std::string> long_symbols;
  std::vector<std::string> hallucinated_symbols;
  std::size_t selected_symbols = 0;
};

struct Aggregates {
  std::size_t records = 0;
  std::size_t available = 0;
  std::size_t parse_failures = 0;
  double mean_r = 0.0;
  double mean_s = 0.0;
  double mean_gated = 0.0;
  double min_gated = 0.0;
  double max_gated = 0.0;
  double hallucination_rate = 0.0;
  std::size_t profit_count = 0;  ///< r > 0
  std::size_t loss_count = 0;    ///< r < 0
  std::optional<double> mean_s_profit;
  std::optional<double> mean_s_loss;
  std::optional<double> loss_alignment_incentive;  ///< mean dG/ds over loss samples
};

/// Aggregates over available records, in record order.
Aggregates aggregate(const std::vector<SampleRecord>& records, const RewardStrategy& strategy);

struct RunReport {
  nlohmann::ordered_json settings;
  std::vector<SampleRecord> records;
  Aggregates aggregates;
  std::optional<BacktestResult> backtest;
};

/// Rollouts with r and s attached, before a strategy is applied.
struct ScoredRollouts {
  std::vector<SampleRecord> records;
  std::vector<std::pair<Date, std::vector<TradingDecision>>> daily_votes;
};

/// Generation, parsing, market reward and verification. Strategy independent.
ScoredRollouts score_rollouts(const ExperimentConfig& config, ClientBundle& clients);

/// Gating, advantages, aggregates and backtest under one strategy.
RunReport assemble_report(const ExperimentConfig& config, const RewardStrategy& strategy,
                          const ScoredRollouts& scored);

RunReport run_experiment(const ExperimentConfig& config, ClientBundle& clients);

/// Scores the rollouts once and assembles one report per strategy.
nlohmann::ordered_json ablation_compare(const ExperimentConfig& config, const std::vector<RewardStrategy>& strategies,
                                        ClientBundle& clients);

nlohmann::ordered_json to_json(const SampleRecord& record);
nlohmann::ordered_json to_json(const Aggregates& aggregates);
nlohmann::ordered_json to_json(const RunReport& report);

/// Writes `j.dump(2)` plus a trailing newline via a temporary file and rename.
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);

}  // namespace semgate
