#include "semgate/reward_gating.hpp"

#include <array>
#include <cmath>

#include "semgate/errors.hpp"

namespace semgate {
namespace {

constexpr std::array<std::pair<StrategyKind, std::string_view>, 4> kNames{{
    {StrategyKind::MarketOnly, "market_only"},
    {StrategyKind::Fsr, "fsr"},
    {StrategyKind::Dsr, "dsr"},
    {StrategyKind::NaiveMultiply, "naive_multiply"},
}};

}  // namespace

std::string_view to_name(StrategyKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) {
      return name;
    }
  }
  return "unknown";
}

std::vector<std::string> strategy_names() {
  std::vector<std::string> out;
  for (const auto& entry : kNames) {
    out.emplace_back(entry.second);
  }
  return out;
}

RewardStrategy RewardStrategy::from_name(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) {
      return RewardStrategy{k, 2.0};
    }
  }
  throw DomainError("reward_strategy",
                    "unknown strategy '" + std::string(name) +
                        "' (expected market_only, fsr, dsr or naive_multiply)");
}

MarketReward::MarketReward(double value) : value_(value) {
  if (!std::isfinite(value)) {
    throw DomainError("r", "market reward must be finite");
  }
}

SemanticScore::SemanticScore(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw DomainError("s", "semantic score must lie in [0, 1], got " + std::to_string(value));
  }
}

GatedReward gate(const RewardStrategy& strategy, MarketReward r, SemanticScore s) {
  if (strategy.kind == StrategyKind::Fsr && !std::isfinite(strategy.fsr_coefficient)) {
    throw DomainError("fsr_coefficient", "must be finite");
  }
  return GatedReward{r, s, strategy, gate_of(strategy, r.value(), s.value())};
}

GatedReward gate(const RewardStrategy& strategy, double r, double s) {
  return gate(strategy, MarketReward{r}, SemanticScore{s});
}

double dsr_gain(MarketReward r, SemanticScore s) { return dsr_gain_of(r.value(), s.value()); }

double dsr_gain(double r, double s) { return dsr_gain(MarketReward{r}, SemanticScore{s}); }

double alignment_incentive(const RewardStrategy& strategy, MarketReward r, SemanticScore /*s*/) {
  return alignment_incentive_of(strategy, r.value());
}

double alignment_incentive(const RewardStrategy& strategy, double r, double s) {
  return alignment_incentive(strategy, MarketReward{r}, SemanticScore{s});
}

}  // namespace semgate
