#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "semgate/date.hpp"

namespace semgate {

enum class Market { CN, US };

std::string_view to_name(Market market);
Market market_from_name(std::string_view name);

/// One trading day's textual briefing.
struct MarketContext {
  Date date;
  Market market = Market::US;
  std::string briefing;
  std::size_t token_estimate = 0;
};

struct Belief {
  int id = 0;
  std::string category;
  std::string description;

  friend bool operator==(const Belief&, const Belief&) = default;
};

/// One (context, belief) pair with the assembled policy prompt.
struct AugmentedSample {
  std::shared_ptr<const MarketContext> context;
  Belief belief;
  std::string prompt;

  /// "<market>/<date>/<belief id>", unique within a corpus.
  std::string key() const;
};

/// The 15 investment-style beliefs shipped with the toolkit (catalog version 1).
const std::vector<Belief>& builtin_beliefs();
inline constexpr int kBuiltinCatalogVersion = 1;

/// Accepts either a bare JSON array of {id, category, description} or an object
/// {"version": n, "beliefs": [...]}. Ids must be positive and unique.
std::vector<Belief> load_beliefs(const std::filesystem::path& path);
std::vector<Belief> beliefs_from_json(const nlohmann::json& j);
nlohmann::json to_json(std::span<const Belief> catalog);

/// Catalog check used for the bundled file: ids exactly 1..n without gaps.
void validate_contiguous_ids(std::span<const Belief> catalog);

/// JSON-lines corpus, one context per line:
///   {"date": "2025-08-13", "market": "US", "briefing": "...", "token_estimate": 1234}
/// token_estimate is optional and recomputed when absent. Throws DomainError on an empty
/// briefing or a repeated (market, date).
std::vector<MarketContext> load_corpus(const std::filesystem::path& path);
MarketContext context_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MarketContext& context);

/// Task, trigger time, background information and belief blocks, then the output format.
std::string build_prompt(const MarketContext& context, const Belief& belief);

std::vector<AugmentedSample> augment(const MarketContext& context, std::span<const Belief> catalog);
std::vector<AugmentedSample> augment(std::span<const MarketContext> contexts,
                                     std::span<const Belief> catalog);

/// train: date < boundary; test: date >= boundary. Input order is preserved in each part.
std::pair<std::vector<MarketContext>, std::vector<MarketContext>> split_by_time(
    std::span<const MarketContext> contexts, const Date& boundary);

nlohmann::json to_json(const AugmentedSample& sample);

}  // namespace semgate
