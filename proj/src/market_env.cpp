#include "semgate/market_env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "semgate/errors.hpp"
#include "semgate/text.hpp"

namespace semgate {
namespace {

PortfolioSnapshot weigh(std::span<const AssetRecord> assets, std::span<const int> votes) {
  PortfolioSnapshot snap;
  if (assets.empty()) return snap;
  snap.date = assets.front().date;
  double total = 0.0;
  std::vector<double> mass(assets.size());
  std::set<std::string> seen;
  for (std::size_t i = 0; i < assets.size(); ++i) {
    assets[i].validate();
    if (!seen.insert(assets[i].symbol).second) {
      throw DomainError("symbol " + assets[i].symbol, "selected twice");
    }
    mass[i] = static_cast<double>(votes[i]) * assets[i].cap;
    total += mass[i];
  }
  for (std::size_t i = 0; i < assets.size(); ++i) {
    snap.holdings.push_back({assets[i].symbol, mass[i] / total, votes[i]});
  }
  return snap;
}

bool parse_flag(std::string_view v, std::size_t line) {
  v = text::trim(v);
  if (v == "1" || text::iequals(v, "true")) return true;
  if (v == "0" || v.empty() || text::iequals(v, "false")) return false;
  throw DomainError("prices:" + std::to_string(line), "bad flag '" + std::string(v) + "'");
}

double parse_number(std::string_view v, const char* what, std::size_t line) {
  const std::string s(text::trim(v));
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(x)) {
    throw DomainError("prices:" + std::to_string(line), std::string("bad ") + what + " '" + s + "'");
  }
  return x;
}

// Capital is kept in sleeve units (each sleeve starts at 1) so that a flat market leaves
// every value bit-identical.
struct Sleeve {
  double cash = 1.0;
  double entry = 0.0;                                      // value at entry, after costs
  std::map<std::string, std::pair<double, double>> legs;  // symbol -> (weight, growth)
  int age = 0;

  bool invested() const { return !legs.empty(); }
  double invested_value() const {
    double num = 0.0;
    double den = 0.0;
    for (const auto& [sym, leg] : legs) {
      num += leg.first * leg.second;
      den += leg.first;
    }
    return entry * (num / den);
  }
  double value() const { return invested() ? cash + invested_value() : cash; }
};

}  // namespace

void AssetRecord::validate() const {
  if (!(cap > 0.0) || !std::isfinite(cap)) throw DomainError("cap " + symbol, "must be positive");
  if (!std::isfinite(forward_return_10d)) throw DomainError("forward_return " + symbol, "must be finite");
}

void BacktestConfig::validate() const {
  if (tranches < 1) throw DomainError("tranches", "must be at least 1");
  if (holding_days < 1) throw DomainError("holding_days", "must be at least 1");
  if (holding_days > tranches) {
    throw DomainError("holding_days", "cannot exceed tranches; a sleeve is rebalanced every `tranches` days");
  }
  if (!(one_way_cost >= 0.0 && one_way_cost < 1.0)) throw DomainError("one_way_cost", "must lie in [0, 1)");
}

std::vector<AssetRecord> filter_universe(std::span<const AssetRecord> records) {
  std::vector<AssetRecord> out;
  for (const auto& r : records) {
    if (r.status.st || r.status.halted || r.status.limit_hit) continue;
    out.push_back(r);
  }
  return out;
}

PortfolioSnapshot cap_weights(std::span<const AssetRecord> selected) {
  const std::vector<int> ones(selected.size(), 1);
  return weigh(selected, ones);
}

PortfolioSnapshot vote_weights(std::span<const std::pair<AssetRecord, int>> selected) {
  std::vector<AssetRecord> assets;
  std::vector<int> votes;
  for (const auto& [rec, v] : selected) {
    if (v < 1) throw DomainError("votes " + rec.symbol, "must be at least 1");
    assets.push_back(rec);
    votes.push_back(v);
  }
  return weigh(assets, votes);
}

double reward_10d(const PortfolioSnapshot& snapshot, const std::map<std::string, double>& returns,
                  double benchmark, double cost) {
  if (snapshot.empty()) return 0.0;
  if (!std::isfinite(benchmark)) throw DomainError("benchmark", "must be finite");
  if (!(cost >= 0.0)) throw DomainError("cost", "must be non-negative");
  double excess = 0.0;
  for (const auto& h : snapshot.holdings) {
    const auto it = returns.find(h.symbol);
    if (it == returns.end()) throw DomainError("symbol " + h.symbol, "no forward return");
    excess += h.weight * (it->second - benchmark);
  }
  return excess - 2.0 * cost;
}

// ---------------------------------------------------------------------------

ReturnTable ReturnTable::from_csv(std::istream& in) {
  ReturnTable t;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (!header) {
      static const std::vector<std::string> kHeader{"date", "symbol", "return", "cap",
                                                    "st", "halted", "limit_hit", "newly_listed"};
      if (cells.size() != kHeader.size() ||
          !std::equal(cells.begin(), cells.end(), kHeader.begin(),
                      [](const std::string& a, const std::string& b) { return text::trim(a) == b; })) {
        throw DomainError("prices:" + std::to_string(line_no),
                          "expected header date,symbol,return,cap,st,halted,limit_hit,newly_listed");
      }
      header = true;
      continue;
    }
    if (cells.size() != 8) {
      throw DomainError("prices:" + std::to_string(line_no), "expected 8 columns");
    }
    Date date;
    try {
      date = Date::parse(text::trim(cells[0]));
    } catch (const DomainError& e) {
      throw DomainError("prices:" + std::to_string(line_no), e.what());
    }
    const std::string symbol = text::to_upper(text::trim(cells[1]));
    if (symbol.empty()) throw DomainError("prices:" + std::to_string(line_no), "empty symbol");
    Row row;
    row.ret = parse_number(cells[2], "return", line_no);
    row.cap = parse_number(cells[3], "cap", line_no);
    row.status = {parse_flag(cells[4], line_no), parse_flag(cells[5], line_no), parse_flag(cells[6], line_no),
                  parse_flag(cells[7], line_no)};
    if (row.ret <= -1.0) throw DomainError("prices:" + std::to_string(line_no), "return must exceed -1");
    if (!(row.cap > 0.0)) throw DomainError("prices:" + std::to_string(line_no), "cap must be positive");
    t.add(date, symbol, row);
  }
  if (!header) throw DomainError("prices", "missing header");
  return t;
}

ReturnTable ReturnTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("prices", "cannot open " + path.string());
  return from_csv(in);
}

void ReturnTable::add(const Date& date, const std::string& symbol, Row row) {
  auto& day = rows_[date];
  if (!day.emplace(symbol, row).second) {
    throw DomainError("prices", "duplicate row for " + symbol + " on " + date.to_string());
  }
  const auto it = std::lower_bound(calendar_.begin(), calendar_.end(), date);
  if (it == calendar_.end() || *it != date) calendar_.insert(it, date);
}

std::optional<ReturnTable::Row> ReturnTable::row(const Date& date, const std::string& symbol) const {
  const auto day = rows_.find(date);
  if (day == rows_.end()) return std::nullopt;
  const auto it = day->second.find(symbol);
  if (it == day->second.end()) return std::nullopt;
  return it->second;
}

std::optional<double> ReturnTable::daily_return(const Date& date, const std::string& symbol) const {
  const auto r = row(date, symbol);
  if (!r) return std::nullopt;
  return r->ret;
}

std::optional<double> ReturnTable::forward_return(const Date& date, const std::string& symbol, int horizon) const {
  const auto it = std::lower_bound(calendar_.begin(), calendar_.end(), date);
  if (it == calendar_.end() || *it != date) return std::nullopt;
  const auto idx = static_cast<std::size_t>(it - calendar_.begin());
  if (horizon < 0 || idx + static_cast<std::size_t>(horizon) >= calendar_.size()) return std::nullopt;
  double growth = 1.0;
  for (int j = 1; j <= horizon; ++j) {
    const auto r = daily_return(calendar_[idx + static_cast<std::size_t>(j)], symbol);
    if (!r) return std::nullopt;
    growth *= 1.0 + *r;
  }
  return growth - 1.0;
}

std::vector<AssetRecord> ReturnTable::records(const Date& date, int horizon, const std::string& benchmark) const {
  const auto day = rows_.find(date);
  if (day == rows_.end()) throw DomainError("date", date.to_string() + " is not a trading day in the price table");
  const auto pos = static_cast<std::size_t>(std::lower_bound(calendar_.begin(), calendar_.end(), date) - calendar_.begin());
  if (pos + static_cast<std::size_t>(std::max(horizon, 0)) >= calendar_.size()) {
    throw DomainError("prices", "no " + std::to_string(horizon) + "-day forward window after " + date.to_string());
  }
  std::vector<AssetRecord> out;
  for (const auto& [symbol, r] : day->second) {
    if (symbol == benchmark) continue;
    const auto fwd = forward_return(date, symbol, horizon);
    if (!fwd) continue;
    out.push_back({symbol, date, r.cap, r.status, *fwd});
  }
  return out;
}

// ---------------------------------------------------------------------------

ScoredPortfolio score_decision(const TradingDecision& decision, const Date& date, const ReturnTable& table,
                               const BacktestConfig& config) {
  config.validate();
  const auto universe = filter_universe(table.records(date, config.holding_days, config.benchmark));
  std::vector<AssetRecord> selected;
  std::set<std::string> taken;
  for (const auto& sym : decision.long_symbols()) {
    if (!taken.insert(sym).second) continue;
    const auto it = std::find_if(universe.begin(), universe.end(), [&](const AssetRecord& r) { return r.symbol == sym; });
    if (it != universe.end()) selected.push_back(*it);
  }
  ScoredPortfolio out;
  out.snapshot = cap_weights(selected);
  out.snapshot.date = date;
  const auto bm = table.forward_return(date, config.benchmark, config.holding_days);
  if (!bm) throw DomainError("benchmark " + config.benchmark, "no forward return after " + date.to_string());
  out.snapshot.benchmark_return_10d = *bm;
  for (const auto& r : selected) out.returns[r.symbol] = r.forward_return_10d;
  out.reward = reward_10d(out.snapshot, out.returns, *bm, config.one_way_cost);
  return out;
}

PortfolioSnapshot vote_snapshot(std::span<const TradingDecision> decisions, const Date& date,
                                const ReturnTable& table, const BacktestConfig& config) {
  std::map<std::string, int> votes;
  for (const auto& d : decisions) {
    const auto longs = d.long_symbols();
    for (const auto& sym : std::set<std::string>(longs.begin(), longs.end())) ++votes[sym];
  }
  std::vector<std::pair<AssetRecord, int>> selected;
  for (const auto& rec : filter_universe(table.records(date, 0, config.benchmark))) {
    const auto it = votes.find(rec.symbol);
    if (it != votes.end()) selected.emplace_back(rec, it->second);
  }
  PortfolioSnapshot snap = vote_weights(selected);
  snap.date = date;
  snap.benchmark_return_10d = table.forward_return(date, config.benchmark, config.holding_days).value_or(0.0);
  return snap;
}

Metrics metrics(std::span<const double> nav) {
  if (nav.size() < 2) throw DomainError("nav", "need at least two points");
  for (std::size_t i = 0; i < nav.size(); ++i) {
    if (!(nav[i] > 0.0) || !std::isfinite(nav[i])) {
      throw DomainError("nav[" + std::to_string(i) + "]", "must be positive and finite");
    }
  }
  Metrics m;
  m.cum_return = nav.back() / nav.front() - 1.0;

  std::vector<double> rets(nav.size() - 1);
  for (std::size_t i = 1; i < nav.size(); ++i) rets[i - 1] = nav[i] / nav[i - 1] - 1.0;
  const double n = static_cast<double>(rets.size());
  double mean = 0.0;
  for (const double r : rets) mean += r;
  mean /= n;
  double ss = 0.0;
  for (const double r : rets) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / n);
  // Rounding noise in a constant-return series is not variance.
  if (sd > 1e-12 * std::abs(mean) && sd > 0.0) m.sharpe = mean / sd * std::sqrt(252.0);

  double peak = nav.front();
  for (const double v : nav) {
    peak = std::max(peak, v);
    m.max_drawdown = std::min(m.max_drawdown, v / peak - 1.0);
  }
  return m;
}

BacktestResult run_backtest(std::span<const PortfolioSnapshot> snapshots, const ReturnTable& table,
                            const BacktestConfig& config) {
  config.validate();
  if (snapshots.empty()) throw DomainError("snapshots", "nothing to backtest");

  const auto& cal = table.calendar();
  std::vector<std::size_t> idx;
  for (std::size_t d = 0; d < snapshots.size(); ++d) {
    const auto it = std::lower_bound(cal.begin(), cal.end(), snapshots[d].date);
    if (it == cal.end() || *it != snapshots[d].date) {
      throw DomainError("snapshots", snapshots[d].date.to_string() + " is not a trading day in the price table");
    }
    idx.push_back(static_cast<std::size_t>(it - cal.begin()));
    if (d > 0 && idx[d] <= idx[d - 1]) throw DomainError("snapshots", "dates must be strictly increasing");
  }
  std::string missing;
  for (std::size_t d = 1; d < idx.size(); ++d) {
    for (std::size_t j = idx[d - 1] + 1; j < idx[d]; ++j) missing += (missing.empty() ? "" : ", ") + cal[j].to_string();
  }
  if (!missing.empty()) throw DomainError("snapshots", "missing trading dates: " + missing);

  const double c = config.one_way_cost;
  const auto tranches = static_cast<std::size_t>(config.tranches);
  const double scale = static_cast<double>(tranches);
  std::vector<Sleeve> sleeves(tranches);

  BacktestResult out;
  double bench = 1.0;
  double fees = 0.0;  // in sleeve units
  const auto liquidate = [&](Sleeve& s) {
    const double v = s.invested_value();
    const double fee = c * v;
    s.cash += v - fee;
    fees += fee;
    s.legs.clear();
    s.entry = 0.0;
    s.age = 0;
  };

  for (std::size_t d = 0; d < snapshots.size(); ++d) {
    const PortfolioSnapshot& snap = snapshots[d];
    if (d > 0) {
      for (auto& s : sleeves) {
        if (!s.invested()) continue;
        for (auto& [sym, leg] : s.legs) {
          const auto r = table.daily_return(snap.date, sym);
          if (!r) throw DomainError("symbol " + sym, "unpriced on " + snap.date.to_string());
          leg.second *= 1.0 + *r;
        }
        ++s.age;
      }
      if (!config.benchmark.empty()) {
        const auto r = table.daily_return(snap.date, config.benchmark);
        if (!r) throw DomainError("benchmark " + config.benchmark, "unpriced on " + snap.date.to_string());
        bench *= 1.0 + *r;
      }
    }
    for (auto& s : sleeves) {
      if (s.invested() && s.age >= config.holding_days) liquidate(s);
    }
    Sleeve& target = sleeves[d % tranches];
    if (target.invested()) liquidate(target);
    if (!snap.empty()) {
      double wsum = 0.0;
      for (const auto& h : snap.holdings) {
        if (!(h.weight > 0.0)) throw DomainError("weight " + h.symbol, "must be positive");
        wsum += h.weight;
      }
      if (std::abs(wsum - 1.0) > 1e-9) throw DomainError("snapshot " + snap.date.to_string(), "weights must sum to 1");
      const double fee = c * target.cash;
      fees += fee;
      target.entry = target.cash - fee;
      for (const auto& h : snap.holdings) target.legs[h.symbol].first += h.weight;
      for (auto& [sym, leg] : target.legs) leg.second = 1.0;
      target.cash = 0.0;
      target.age = 0;
    }
    double units = 0.0;
    for (const auto& s : sleeves) units += s.value();
    out.dates.push_back(snap.date);
    out.nav.push_back(units / scale);
    out.benchmark_nav.push_back(bench);
  }
  out.costs_paid = fees / scale;

  std::vector<double> curve{1.0};
  curve.insert(curve.end(), out.nav.begin(), out.nav.end());
  out.portfolio = metrics(curve);
  std::vector<double> bcurve{1.0};
  bcurve.insert(bcurve.end(), out.benchmark_nav.begin(), out.benchmark_nav.end());
  out.benchmark = metrics(bcurve);
  return out;
}

nlohmann::json to_json(const Metrics& m) {
  nlohmann::json j;
  j["cum_return"] = m.cum_return;
  j["sharpe"] = m.sharpe ? nlohmann::json(*m.sharpe) : nlohmann::json(nullptr);
  j["max_drawdown"] = m.max_drawdown;
  return j;
}

nlohmann::json to_json(const BacktestResult& r) {
  nlohmann::json dates = nlohmann::json::array();
  for (const auto& d : r.dates) dates.push_back(d.to_string());
  return {{"dates", dates},
          {"nav", r.nav},
          {"benchmark_nav", r.benchmark_nav},
          {"costs_paid", r.costs_paid},
          {"metrics", to_json(r.portfolio)},
          {"benchmark_metrics", to_json(r.benchmark)}};
}

nlohmann::json to_json(const PortfolioSnapshot& s) {
  nlohmann::json holdings = nlohmann::json::array();
  for (const auto& h : s.holdings) holdings.push_back({{"symbol", h.symbol}, {"weight", h.weight}, {"votes", h.votes}});
  return {{"date", s.date.to_string()}, {"holdings", holdings}, {"benchmark_return_10d", s.benchmark_return_10d}};
}

}  // namespace semgate
