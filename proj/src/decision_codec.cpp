#include "semgate/decision_codec.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <variant>

#include "semgate/errors.hpp"
#include "semgate/text.hpp"

namespace semgate {
namespace {

using text::ifind;
constexpr auto npos = std::string_view::npos;

std::string unescape(std::string_view s) {
  static constexpr std::pair<std::string_view, char> kEntities[] = {
      {"&lt;", '<'}, {"&gt;", '>'}, {"&amp;", '&'}, {"&quot;", '"'}, {"&apos;", '\''}};
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    bool replaced = false;
    if (s[i] == '&') {
      for (const auto& [entity, ch] : kEntities) {
        if (s.substr(i, entity.size()) == entity) {
          out.push_back(ch);
          i += entity.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) {
      out.push_back(s[i++]);
    }
  }
  return out;
}

std::string escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

/// Text between <name> and the next </name. The closing '>' is optional because the
/// prompt template itself omits it on symbol_name.
std::optional<std::string_view> tag_value(std::string_view element, std::string_view name) {
  const std::string open = "<" + std::string(name) + ">";
  const std::size_t p = ifind(element, open);
  if (p == npos) {
    return std::nullopt;
  }
  const std::size_t start = p + open.size();
  const std::size_t q = ifind(element, "</" + std::string(name), start);
  if (q == npos) {
    return std::nullopt;
  }
  return element.substr(start, q - start);
}

std::optional<bool> parse_flag(std::string_view v) {
  if (text::iequals(v, "yes") || text::iequals(v, "true")) return true;
  if (text::iequals(v, "no") || text::iequals(v, "false")) return false;
  return std::nullopt;
}

std::optional<TradeAction> parse_action(std::string_view v) {
  if (text::iequals(v, "buy")) return TradeAction::Buy;
  if (text::iequals(v, "sell")) return TradeAction::Sell;
  return std::nullopt;
}

bool valid_code_chars(std::string_view code) {
  return !code.empty() && std::none_of(code.begin(), code.end(), [](unsigned char c) {
    return std::isspace(c) != 0 || c == '<' || c == '>' || c == '&';
  });
}

// Parses one <signal> element body; returns an error message on failure.
std::variant<TradeSignal, std::string> parse_signal(std::string_view element) {
  const auto flag_raw = tag_value(element, "has_opportunity");
  const auto action_raw = tag_value(element, "action");
  const auto code_raw = tag_value(element, "symbol_code");
  const auto name_raw = tag_value(element, "symbol_name");
  if (!flag_raw) return std::string("missing has_opportunity");
  if (!action_raw) return std::string("missing action");
  if (!code_raw) return std::string("missing symbol_code");

  const auto flag = parse_flag(text::trim(*flag_raw));
  if (!flag) return "has_opportunity value '" + std::string(text::trim(*flag_raw)) + "' not recognized";
  const auto action = parse_action(text::trim(*action_raw));
  if (!action) return "action value '" + std::string(text::trim(*action_raw)) + "' not recognized";
  const std::string code = text::to_upper(text::trim(unescape(*code_raw)));
  if (!valid_code_chars(code)) return "symbol_code '" + code + "' is empty or malformed";

  TradeSignal sig;
  sig.has_opportunity = *flag;
  sig.action = *action;
  sig.symbol_code = code;
  if (name_raw) {
    sig.symbol_name = std::string(text::trim(unescape(*name_raw)));
  }
  return sig;
}

}  // namespace

std::string_view to_name(TradeAction action) { return action == TradeAction::Buy ? "buy" : "sell"; }

std::vector<std::string> TradingDecision::long_symbols() const {
  std::vector<std::string> out;
  for (const auto& s : signals) {
    if (s.has_opportunity && s.action == TradeAction::Buy) out.push_back(s.symbol_code);
  }
  return out;
}

std::vector<std::string> TradingDecision::symbols() const {
  std::vector<std::string> out;
  out.reserve(signals.size());
  for (const auto& s : signals) out.push_back(s.symbol_code);
  return out;
}

Rollout parse_rollout(std::string_view raw, const RolloutMeta& meta) {
  Rollout out;
  out.raw = std::string(raw);
  out.decision.source_belief = meta.belief_id;
  out.decision.date = meta.date;
  const auto diag = [&](ParseDiagnostic::Kind kind, std::string msg) {
    out.diagnostics.push_back({kind, std::move(msg)});
  };

  // Reasoning: <think> ... </think>; an unclosed block runs up to the output block.
  std::size_t body_from = 0;
  if (const std::size_t t = ifind(raw, "<think>"); t != npos) {
    const std::size_t start = t + 7;
    std::size_t end = ifind(raw, "</think>", start);
    if (end != npos) {
      body_from = end + 8;
    } else {
      end = std::min(ifind(raw, "<Output>", start), ifind(raw, "<signals>", start));
      if (end == npos) end = raw.size();
      body_from = end;
    }
    out.reasoning.text = std::string(text::trim(raw.substr(start, end - start)));
    out.reasoning.token_estimate = text::token_estimate(out.reasoning.text);
  }
  if (out.reasoning.text.empty()) {
    diag(ParseDiagnostic::Kind::MissingReasoning, "no reasoning block found");
  }

  const std::size_t open = ifind(raw, "<signals>", body_from);
  if (open == npos) {
    diag(ParseDiagnostic::Kind::MissingSignalsBlock, "no <signals> block found");
    return out;
  }
  const std::size_t block_start = open + 9;
  const std::size_t close = ifind(raw, "</signals>", block_start);
  if (close == npos) {
    diag(ParseDiagnostic::Kind::UnterminatedSignalsBlock, "<signals> block is not closed");
    return out;
  }
  out.parse_ok = true;
  const std::string_view block = raw.substr(block_start, close - block_start);

  std::vector<TradeSignal> parsed;
  std::set<std::string> seen;
  std::size_t pos = 0;
  int index = 0;
  while (true) {
    const std::size_t s_open = ifind(block, "<signal>", pos);
    if (s_open == npos) break;
    const std::size_t body = s_open + 8;
    const std::size_t s_close = ifind(block, "</signal>", body);
    const std::size_t next_open = ifind(block, "<signal>", body);
    if (s_close == npos) {
      diag(ParseDiagnostic::Kind::UnterminatedSignal,
           "signal #" + std::to_string(index) + " is not closed");
      break;
    }
    if (next_open != npos && next_open < s_close) {
      diag(ParseDiagnostic::Kind::MalformedSignal,
           "signal #" + std::to_string(index) + " is not closed before the next signal");
      pos = next_open;
      ++index;
      continue;
    }
    auto result = parse_signal(block.substr(body, s_close - body));
    if (auto* err = std::get_if<std::string>(&result)) {
      diag(ParseDiagnostic::Kind::MalformedSignal, "signal #" + std::to_string(index) + ": " + *err);
    } else {
      auto& sig = std::get<TradeSignal>(result);
      if (!seen.insert(sig.symbol_code).second) {
        diag(ParseDiagnostic::Kind::DuplicateSymbol,
             "signal #" + std::to_string(index) + ": duplicate symbol " + sig.symbol_code);
      } else {
        parsed.push_back(std::move(sig));
      }
    }
    pos = s_close + 9;
    ++index;
  }

  if (parsed.size() > kMaxSignals) {
    diag(ParseDiagnostic::Kind::Truncated,
         "kept first " + std::to_string(kMaxSignals) + " of " + std::to_string(parsed.size()) +
             " signals");
    parsed.resize(kMaxSignals);
  }
  out.decision.signals = std::move(parsed);
  return out;
}

void validate_decision(const TradingDecision& decision) {
  if (decision.signals.size() > kMaxSignals) {
    throw DomainError("signals", "at most " + std::to_string(kMaxSignals) + " signals allowed");
  }
  std::set<std::string> seen;
  for (const auto& s : decision.signals) {
    if (!valid_code_chars(s.symbol_code) || s.symbol_code != text::to_upper(s.symbol_code)) {
      throw DomainError("symbol_code", "'" + s.symbol_code + "' must be non-empty uppercase without spaces");
    }
    if (!seen.insert(s.symbol_code).second) {
      throw DomainError("symbol_code", "duplicate symbol " + s.symbol_code);
    }
    if (text::trim(s.symbol_name) != s.symbol_name) {
      throw DomainError("symbol_name", "'" + s.symbol_name + "' has surrounding whitespace");
    }
  }
}

std::string serialize_decision(const TradingDecision& decision) {
  validate_decision(decision);
  if (decision.signals.empty()) {
    return "<Output>\n<signals></signals>\n</Output>";
  }
  std::string out = "<Output>\n<signals>\n";
  for (const auto& s : decision.signals) {
    out += "<signal>\n";
    out += "<has_opportunity>";
    out += s.has_opportunity ? "true" : "false";
    out += "</has_opportunity>\n";
    out += "<action>" + std::string(to_name(s.action)) + "</action>\n";
    out += "<symbol_code>" + s.symbol_code + "</symbol_code>\n";
    out += "<symbol_name>" + escape(s.symbol_name) + "</symbol_name>\n";
    out += "</signal>\n";
  }
  out += "</signals>\n</Output>";
  return out;
}

std::string describe_decision(const TradingDecision& decision) {
  std::string out;
  for (const auto& s : decision.signals) {
    if (!out.empty()) out.push_back('\n');
    out += std::string(to_name(s.action)) + " " + s.symbol_code;
    if (!s.symbol_name.empty()) out += " " + s.symbol_name;
    if (!s.has_opportunity) out += " (no opportunity)";
  }
  return out;
}

nlohmann::json to_json(const TradingDecision& decision) {
  nlohmann::json signals = nlohmann::json::array();
  for (const auto& s : decision.signals) {
    signals.push_back({{"has_opportunity", s.has_opportunity},
                       {"action", to_name(s.action)},
                       {"symbol_code", s.symbol_code},
                       {"symbol_name", s.symbol_name}});
  }
  nlohmann::json j;
  j["date"] = decision.date ? nlohmann::json(decision.date->to_string()) : nlohmann::json(nullptr);
  j["source_belief"] = decision.source_belief;
  j["signals"] = std::move(signals);
  return j;
}

TradingDecision decision_from_json(const nlohmann::json& j) {
  TradingDecision d;
  if (j.contains("date") && j["date"].is_string()) d.date = Date::parse(j["date"].get<std::string>());
  d.source_belief = j.value("source_belief", 0);
  for (const auto& s : j.value("signals", nlohmann::json::array())) {
    TradeSignal sig;
    sig.has_opportunity = s.value("has_opportunity", true);
    const auto action = parse_action(s.value("action", std::string("buy")));
    if (!action) throw DomainError("action", "expected buy or sell");
    sig.action = *action;
    sig.symbol_code = s.at("symbol_code").get<std::string>();
    sig.symbol_name = s.value("symbol_name", std::string());
    d.signals.push_back(std::move(sig));
  }
  validate_decision(d);
  return d;
}

nlohmann::json to_json(const ParseDiagnostic& diagnostic) {
  static constexpr std::string_view kKinds[] = {
      "missing_signals_block", "unterminated_signals_block", "unterminated_signal",
      "malformed_signal",      "duplicate_symbol",           "truncated",
      "missing_reasoning"};
  return {{"kind", kKinds[static_cast<int>(diagnostic.kind)]}, {"message", diagnostic.message}};
}

}  // namespace semgate
