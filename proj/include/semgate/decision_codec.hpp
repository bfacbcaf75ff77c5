#pragma once

// Parser and serializer for the policy's tagged output:
//
//   <think> ...reasoning... </think>
//   <Output>
//   <signals>
//   <signal>
//   <has_opportunity>true</has_opportunity>
//   <action>buy</action>
//   <symbol_code>WBTN</symbol_code>
//   <symbol_name>Webtoon Entertainment</symbol_name>
//   </signal>
//   ...
//   </signals>
//   </Output>

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "semgate/date.hpp"

namespace semgate {

inline constexpr std::size_t kMaxSignals = 5;

enum class TradeAction { Buy, Sell };

std::string_view to_name(TradeAction action);

struct TradeSignal {
  bool has_opportunity = true;
  TradeAction action = TradeAction::Buy;
  std::string symbol_code;  ///< uppercase ticker
  std::string symbol_name;

  friend bool operator==(const TradeSignal&, const TradeSignal&) = default;
};

struct TradingDecision {
  std::vector<TradeSignal> signals;
  int source_belief = 0;
  std::optional<Date> date;

  /// Tickers of signals that open a long position (buy with an opportunity flagged).
  std::vector<std::string> long_symbols() const;
  std::vector<std::string> symbols() const;

  friend bool operator==(const TradingDecision&, const TradingDecision&) = default;
};

struct ReasoningChain {
  std::string text;
  std::size_t token_estimate = 0;
};

struct ParseDiagnostic {
  enum class Kind {
    MissingSignalsBlock,
    UnterminatedSignalsBlock,
    UnterminatedSignal,
    MalformedSignal,
    DuplicateSymbol,
    Truncated,
    MissingReasoning,
  };
  Kind kind;
  std::string message;
};

struct Rollout {
  ReasoningChain reasoning;
  TradingDecision decision;
  std::string raw;
  /// True when a well-formed signals block was extracted. Whether a think block was
  /// present is reported separately by has_reasoning().
  bool parse_ok = false;
  std::vector<ParseDiagnostic> diagnostics;

  bool has_reasoning() const { return !reasoning.text.empty(); }
};

struct RolloutMeta {
  int belief_id = 0;
  std::optional<Date> date;
};

/// Never throws on malformed text; problems are reported through parse_ok and diagnostics.
Rollout parse_rollout(std::string_view raw, const RolloutMeta& meta = {});

/// Throws DomainError if the decision violates its invariants.
void validate_decision(const TradingDecision& decision);

/// Emits the tagged signals block. parse_rollout(serialize_decision(d)).decision == d
/// when the date and belief are supplied through RolloutMeta.
std::string serialize_decision(const TradingDecision& decision);

/// One line per signal, e.g. "buy WBTN Webtoon Entertainment". Used as judge input.
std::string describe_decision(const TradingDecision& decision);

nlohmann::json to_json(const TradingDecision& decision);
TradingDecision decision_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ParseDiagnostic& diagnostic);

}  // namespace semgate
