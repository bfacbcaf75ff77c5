#include "semgate/dataset_builder.hpp"

#include <fstream>
#include <set>

#include "semgate/errors.hpp"
#include "semgate/text.hpp"

namespace semgate {

std::string_view to_name(Market market) { return market == Market::CN ? "CN" : "US"; }

Market market_from_name(std::string_view name) {
  if (text::iequals(name, "CN")) return Market::CN;
  if (text::iequals(name, "US")) return Market::US;
  throw DomainError("market", "expected CN or US, got '" + std::string(name) + "'");
}

std::string AugmentedSample::key() const {
  return std::string(to_name(context->market)) + "/" + context->date.to_string() + "/" +
         std::to_string(belief.id);
}

const std::vector<Belief>& builtin_beliefs() {
  static const std::vector<Belief> kCatalog{
      {1, "Dividend Detective",
       "Identifies sustainable high-yield stocks through payout ratio analysis. Tracks dividend "
       "history and management commentary."},
      {2, "Turnaround Specialist",
       "Seeks distressed companies with new management teams. Analyzes restructuring plans via "
       "press releases."},
      {3, "Blue-Chip Quality Analyst",
       "Researches companies with wide economic moats. Emphasizes durable competitive advantages "
       "and consistent ROIC."},
      {4, "Small-Cap Discovery Scout",
       "Finds underfollowed sub-$500M market cap stocks through local news searches."},
      {5, "Sector Rotation Tracker",
       "Times industry moves using economic indicators and relative strength comparisons."},
      {6, "Management Quality Assessor",
       "Studies CEO interviews and compensation structures. Searches for insider buying "
       "patterns."},
      {7, "M&A Rumor Tracker", "Monitors industry consolidation patterns and activist investor moves."},
      {8, "Consumer Trends Spotter",
       "Identifies shifting preferences through search trend data and social media buzz."},
      {9, "Supply Chain Mapper",
       "Researches supplier/customer relationships. Tracks shipping news and port activity."},
      {10, "Cyclical Timing Analyst",
       "Monitors commodity price trends and inventory reports in industrial sectors."},
      {11, "Insider Transaction Tracker",
       "Follows Form 4 filings for unusual patterns. Correlates with earnings dates."},
      {12, "Special Situations Hunter",
       "Searches for spinoffs, restructurings, and post-bankruptcy equities."},
      {13, "Aging Population Thematic",
       "Targets healthcare/services for seniors. Researches demographic shifts."},
      {14, "Energy Transition Tracker",
       "Follows utility company CAPEX plans and renewable energy investments."},
      {15, "Regulatory Change Scout",
       "Tracks FDA approvals and EPA rulings. Analyzes comment letters for policy clues."},
  };
  return kCatalog;
}

std::vector<Belief> beliefs_from_json(const nlohmann::json& j) {
  const nlohmann::json& list = j.is_object() ? j.at("beliefs") : j;
  if (!list.is_array()) {
    throw DomainError("beliefs", "expected an array of beliefs");
  }
  std::vector<Belief> out;
  std::set<int> ids;
  for (const auto& item : list) {
    Belief b{item.at("id").get<int>(), item.at("category").get<std::string>(),
             item.at("description").get<std::string>()};
    if (b.id <= 0) throw DomainError("beliefs.id", "ids must be positive");
    if (!ids.insert(b.id).second) throw DomainError("beliefs.id", "duplicate id " + std::to_string(b.id));
    if (text::trim(b.description).empty()) {
      throw DomainError("beliefs.description", "belief " + std::to_string(b.id) + " has no description");
    }
    out.push_back(std::move(b));
  }
  if (out.empty()) throw DomainError("beliefs", "catalog is empty");
  return out;
}

std::vector<Belief> load_beliefs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("beliefs", "cannot open " + path.string());
  return beliefs_from_json(nlohmann::json::parse(in));
}

nlohmann::json to_json(std::span<const Belief> catalog) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& b : catalog) {
    list.push_back({{"id", b.id}, {"category", b.category}, {"description", b.description}});
  }
  return list;
}

void validate_contiguous_ids(std::span<const Belief> catalog) {
  std::set<int> ids;
  for (const auto& b : catalog) ids.insert(b.id);
  int expected = 1;
  for (const int id : ids) {
    if (id != expected) {
      throw DomainError("beliefs.id", "expected id " + std::to_string(expected) + ", found " + std::to_string(id));
    }
    ++expected;
  }
  if (ids.size() != catalog.size()) throw DomainError("beliefs.id", "duplicate ids");
}

MarketContext context_from_json(const nlohmann::json& j) {
  MarketContext c;
  c.date = Date::parse(j.at("date").get<std::string>());
  c.market = market_from_name(j.value("market", std::string("US")));
  c.briefing = j.at("briefing").get<std::string>();
  if (text::trim(c.briefing).empty()) {
    throw DomainError("briefing", "empty briefing for " + c.date.to_string());
  }
  c.token_estimate = j.contains("token_estimate") ? j["token_estimate"].get<std::size_t>()
                                                  : text::token_estimate(c.briefing);
  return c;
}

nlohmann::json to_json(const MarketContext& context) {
  return {{"date", context.date.to_string()},
          {"market", to_name(context.market)},
          {"briefing", context.briefing},
          {"token_estimate", context.token_estimate}};
}

std::vector<MarketContext> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("corpus", "cannot open " + path.string());
  std::vector<MarketContext> out;
  std::set<std::pair<int, long>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    MarketContext c;
    try {
      c = context_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DomainError("corpus:" + std::to_string(line_no), e.what());
    }
    const auto key = std::make_pair(static_cast<int>(c.market), static_cast<long>(c.date.days().time_since_epoch().count()));
    if (!seen.insert(key).second) {
      throw DomainError("corpus:" + std::to_string(line_no),
                        "duplicate context for " + std::string(to_name(c.market)) + " " + c.date.to_string());
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::string build_prompt(const MarketContext& context, const Belief& belief) {
  std::string p;
  p.reserve(context.briefing.size() + 1024);
  p += "<Task>\nAs a professional researcher with a specific belief, find opportunities in the "
       "market today. Submit up to 5 critical analysis suggestions to the investor.\n</Task>\n\n";
  p += "<Trigger_Time>\n" + context.date.to_string() + " 09:00:00\n</Trigger_Time>\n\n";
  p += "<Background_Information>\n" + context.briefing + "\n</Background_Information>\n\n";
  p += "<Belief>\n" + belief.category + ". " + belief.description + "\n</Belief>\n\n";
  p += "Complete the task using only the information above. Think inside <think></think> first.\n"
       "Your output format should be like this:\n\n"
       "<Output>\n<signals>\n<signal>\n"
       "<has_opportunity>xxx</has_opportunity> # yes or no\n"
       "<action>xxx</action> # buy or sell\n"
       "<symbol_code>xxx</symbol_code>\n"
       "<symbol_name>xxx</symbol_name>\n"
       "</signal>\n"
       "<!-- Repeat <signal>...</signal> block for each opportunity you identify, up to 5 signals -->\n"
       "<!-- Only include signals for genuine opportunities you find in the market -->\n"
       "</signals>\n</Output>";
  return p;
}

std::vector<AugmentedSample> augment(const MarketContext& context, std::span<const Belief> catalog) {
  if (catalog.empty()) throw DomainError("catalog", "belief catalog is empty");
  if (text::trim(context.briefing).empty()) {
    throw DomainError("briefing", "empty briefing for " + context.date.to_string());
  }
  auto shared = std::make_shared<const MarketContext>(context);
  std::vector<AugmentedSample> out;
  out.reserve(catalog.size());
  for (const auto& belief : catalog) {
    out.push_back(AugmentedSample{shared, belief, build_prompt(context, belief)});
  }
  return out;
}

std::vector<AugmentedSample> augment(std::span<const MarketContext> contexts,
                                     std::span<const Belief> catalog) {
  std::vector<AugmentedSample> out;
  out.reserve(contexts.size() * catalog.size());
  for (const auto& c : contexts) {
    auto day = augment(c, catalog);
    std::move(day.begin(), day.end(), std::back_inserter(out));
  }
  return out;
}

std::pair<std::vector<MarketContext>, std::vector<MarketContext>> split_by_time(
    std::span<const MarketContext> contexts, const Date& boundary) {
  std::pair<std::vector<MarketContext>, std::vector<MarketContext>> out;
  for (const auto& c : contexts) {
    (c.date < boundary ? out.first : out.second).push_back(c);
  }
  return out;
}

nlohmann::json to_json(const AugmentedSample& sample) {
  return {{"key", sample.key()},
          {"date", sample.context->date.to_string()},
          {"market", to_name(sample.context->market)},
          {"belief_id", sample.belief.id},
          {"belief_category", sample.belief.category},
          {"token_estimate", sample.context->token_estimate},
          {"prompt", sample.prompt}};
}

}  // namespace semgate
