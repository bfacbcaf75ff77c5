// Prints one PASS/FAIL line per acceptance criterion. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "semgate/content_hash.hpp"
#include "semgate/decision_codec.hpp"
#include "semgate/grpo_advantage.hpp"
#include "semgate/market_env.hpp"
#include "semgate/noise_lab.hpp"
#include "semgate/pipeline.hpp"
#include "semgate/reward_gating.hpp"
#include "semgate/text.hpp"
#include "semgate/verification.hpp"

namespace {

using namespace semgate;
using oracle::hp;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

oracle::Gate oracle_gate(StrategyKind k) {
  switch (k) {
    case StrategyKind::MarketOnly: return oracle::Gate::MarketOnly;
    case StrategyKind::Fsr: return oracle::Gate::Fsr;
    case StrategyKind::Dsr: return oracle::Gate::Dsr;
    case StrategyKind::NaiveMultiply: return oracle::Gate::Naive;
  }
  return oracle::Gate::MarketOnly;
}

void gating(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (const auto kind : {StrategyKind::MarketOnly, StrategyKind::Fsr, StrategyKind::Dsr, StrategyKind::NaiveMultiply}) {
    const RewardStrategy st{kind};
    // 40 x 25 grid over r in [-0.2, 0.2] (including 0) and s in [0, 1].
    for (int i = 0; i < 40; ++i) {
      const double r = -0.2 + 0.4 * i / 39.0;
      for (int j = 0; j < 25; ++j) {
        const double s = j / 24.0;
        const hp want = oracle::gated(oracle_gate(kind), hp(r), hp(s));
        worst = std::max(worst, static_cast<double>(abs(hp(gate_of(st, r, s)) - want)));
      }
    }
    for (int j = 0; j <= 24; ++j) {
      const double s = j / 24.0;
      const double tiny = 1e-300;
      o.require(std::abs(gate_of(st, tiny, s) - gate_of(st, -tiny, s)) < 1e-15 &&
                    std::abs(gate_of(st, 0.0, s) - gate_of(st, tiny, s)) < 1e-15,
                "continuity at r=0 for " + std::string(to_name(kind)));
    }
    const double r0 = 0.0;
    o.require(gate_of(st, r0, 0.3) == gate_of(st, -r0, 0.3), "signed zero");
  }
  const double t = seconds_since(t0);
  o.require(worst <= 1e-12, "max error");
  o.require(t < 1.0, "runtime");
  o.detail << "4 strategies x 1000 points, max |err| " << worst << ", " << t << " s";
}

void variance(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const RewardStrategy dsr{StrategyKind::Dsr};
  const NoiseModel model{0.0, 0.02, 7};
  const auto base = variance_ratio(model, dsr, 0.0, 1'000'000, Regime::PositiveR);
  o.require(base.ratio && std::abs(*base.ratio - 0.25) <= 0.01, "s=0 positive ratio");
  double worst = 0.0;
  for (const double s : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const auto pos = variance_ratio(model, dsr, s, 1'000'000, Regime::PositiveR);
    const auto neg = variance_ratio(model, dsr, s, 1'000'000, Regime::NegativeR);
    const double wp = (0.5 + s) * (0.5 + s);
    const double wn = (2.0 - s) * (2.0 - s);
    worst = std::max({worst, std::abs(*pos.ratio / wp - 1), std::abs(*neg.ratio / wn - 1)});
  }
  o.require(worst <= 0.03, "s-grid relative error");
  const double t = seconds_since(t0);
  o.require(t < 30.0, "runtime");
  o.detail << "s=0 ratio " << *base.ratio << ", worst s-grid rel err " << worst << ", " << t << " s";
}

void amplification(Outcome& o) {
  PopulationSpec grounded;
  grounded.grounded_r_star = 0.02;
  grounded.grounded_s = 1.0;
  grounded.noise_sigma = 0.005;
  grounded.grounded_fraction = 1.0;
  grounded.seed = 3;
  const auto g = snr_compare(grounded, 1'000'000);
  const double ratio = g.grounded_mean_dsr / g.grounded_mean_mkt;
  o.require(std::abs(ratio / 1.5 - 1) <= 0.01, "mean ratio");
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PopulationSpec mixed;
    mixed.seed = seed;
    const auto m = snr_compare(mixed, 100'000);
    if (m.snr_dsr && m.snr_mkt && *m.snr_dsr > *m.snr_mkt) ++wins;
  }
  o.require(wins == 20, "SNR on every seed");
  o.detail << "DSR/MarketOnly mean " << ratio << ", SNR_dsr > SNR_mkt on " << wins << "/20 seeds";
}

void evasion(Outcome& o) {
  std::vector<double> r_grid, s_grid;
  for (int i = -20; i <= 20; ++i) r_grid.push_back(0.005 * i);
  for (int j = 0; j <= 20; ++j) s_grid.push_back(j / 20.0);
  int checked = 0;
  for (const auto kind : {StrategyKind::MarketOnly, StrategyKind::Fsr, StrategyKind::Dsr, StrategyKind::NaiveMultiply}) {
    const RewardStrategy st{kind};
    for (const auto& p : evasion_sweep(st, r_grid, s_grid)) {
      const double inc = alignment_incentive(st, p.r, 0.5);
      ++checked;
      if (inc > 0) {
        o.require(p.argmax_s == 1.0 && !p.tie, std::string(to_name(kind)) + " r=" + std::to_string(p.r));
      } else if (inc < 0) {
        o.require(p.argmax_s == 0.0 && !p.tie, std::string(to_name(kind)) + " r=" + std::to_string(p.r));
      } else {
        o.require(p.tie, std::string(to_name(kind)) + " flat at r=" + std::to_string(p.r));
      }
      if (kind == StrategyKind::NaiveMultiply && p.r < 0) o.require(p.argmax_s == 0.0, "naive evades");
      if ((kind == StrategyKind::Fsr || kind == StrategyKind::Dsr) && p.r != 0.0) {
        o.require(p.argmax_s == 1.0, "grounding maximizes");
      }
    }
  }
  o.detail << checked << " grid points; naive argmax 0 for r<0, DSR/FSR argmax 1 (DSR indifferent only at r=0)";
}

void grpo(Outcome& o) {
  gen::Rng rng(91);
  double worst_mean = 0.0, worst_std = 0.0;
  int wide = 0, exact_shift = 0;
  for (int t = 0; t < 10000; ++t) {
    const int n = rng.integer(2, 16);
    Eigen::VectorXd g(n);
    for (int i = 0; i < n; ++i) g(i) = rng.uniform(-100, 100);
    const Eigen::VectorXd a = group_advantages(g);
    worst_mean = std::max(worst_mean, std::abs(a.mean()));
    const double sd = std::sqrt((g.array() - g.mean()).square().mean());
    if (sd >= 10.0) {
      ++wide;
      worst_std = std::max(worst_std, std::abs(std::sqrt(a.array().square().mean()) - 1.0));
    }
    // Dyadic grid: shifted values are exactly representable.
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d(i) = rng.integer(-4096, 4096) * 0x1.0p-8;
    const double c = rng.integer(-1 << 20, 1 << 20) * 0x1.0p-8;
    const Eigen::VectorXd shifted = (d.array() + c).matrix();
    if (group_advantages(d) == group_advantages(shifted)) ++exact_shift;
  }
  o.require(worst_mean < 1e-9, "mean");
  o.require(worst_std < 1e-9, "std");
  o.require(exact_shift == 10000, "shift invariance");
  o.detail << "10000 groups, max |mean A| " << worst_mean << ", max |std A - 1| " << worst_std << " over " << wide
           << " groups with std >= 10, exact shift " << exact_shift << "/10000";
}

void triangular(Outcome& o) {
  gen::Rng rng(92);
  int exact = 0, symmetric = 0;
  for (int t = 0; t < 10000; ++t) {
    const double a = rng.uniform(0, 1), b = rng.uniform(0, 1), c = rng.uniform(0, 1);
    const double m = TriangularScores::from_components(a, b, c).mean;
    const double want = static_cast<double>((hp(a) + hp(b) + hp(c)) / 3);
    if (m == want) ++exact;
    const double perms[5][3] = {{a, c, b}, {b, a, c}, {b, c, a}, {c, a, b}, {c, b, a}};
    bool same = true;
    for (const auto& p : perms) same = same && TriangularScores::from_components(p[0], p[1], p[2]).mean == m;
    if (same) ++symmetric;
  }
  o.require(exact == 10000 && symmetric == 10000, "exact mean and symmetry");
  o.detail << "correctly rounded " << exact << "/10000, symmetric " << symmetric << "/10000";
}

TradingDecision random_decision(gen::Rng& rng) {
  TradingDecision d;
  const int n = rng.integer(0, 5);
  while (static_cast<int>(d.signals.size()) < n) {
    TradeSignal s{rng.coin(), rng.coin() ? TradeAction::Buy : TradeAction::Sell, rng.ticker(), rng.name()};
    bool dup = false;
    for (const auto& x : d.signals) dup = dup || x.symbol_code == s.symbol_code;
    if (!dup) d.signals.push_back(s);
  }
  d.source_belief = rng.integer(1, 15);
  d.date = Date(2025, static_cast<unsigned>(rng.integer(1, 12)), static_cast<unsigned>(rng.integer(1, 28)));
  return d;
}

void codec(Outcome& o) {
  const Rollout cs = parse_rollout(fixture::read(std::string(SEMGATE_TEST_DATA) + "/case_study_output.txt"));
  const std::vector<std::string> want{"WBTN", "WILC", "ANTA", "CRBU", "CRWV"};
  bool all_buy = cs.decision.signals.size() == 5;
  for (const auto& s : cs.decision.signals) all_buy = all_buy && s.action == TradeAction::Buy;
  o.require(cs.parse_ok && cs.decision.symbols() == want && all_buy, "case study");

  gen::Rng rng(93);
  int round_trips = 0;
  for (int t = 0; t < 10000; ++t) {
    const auto d = random_decision(rng);
    const Rollout r = parse_rollout(serialize_decision(d), {d.source_belief, d.date});
    if (r.parse_ok && r.decision == d) ++round_trips;
  }
  o.require(round_trips == 10000, "round trip");

  int crashes = 0;
  for (int t = 0; t < 100000; ++t) {
    try {
      const Rollout r = parse_rollout(rng.noise(400));
      validate_decision(r.decision);
    } catch (...) {
      ++crashes;
    }
  }
  o.require(crashes == 0, "fuzz");
  std::string listed;
  for (const auto& s : cs.decision.symbols()) listed += (listed.empty() ? "" : ",") + s;
  o.detail << "case study " << listed << ", round trips " << round_trips
           << "/10000, fuzz crashes " << crashes << "/100000";
}

AssetRecord asset(const std::string& sym, double cap) { return {sym, Date(2025, 8, 11), cap, {}, 0.0}; }

PortfolioSnapshot snap(const Date& d, std::vector<Holding> h) {
  PortfolioSnapshot s;
  s.date = d;
  s.holdings = std::move(h);
  return s;
}

void market(Outcome& o) {
  gen::Rng rng(94);
  double worst_sum = 0.0;
  bool unit_exact = true;
  for (int t = 0; t < 5000; ++t) {
    std::vector<AssetRecord> sel;
    std::vector<std::pair<AssetRecord, int>> voted, unit;
    for (int i = rng.integer(1, 30); i > 0; --i) {
      sel.push_back(asset("S" + std::to_string(i), std::exp(rng.uniform(0, 25))));
      voted.emplace_back(sel.back(), rng.integer(1, 30));
      unit.emplace_back(sel.back(), 1);
    }
    const auto cw = cap_weights(sel);
    const auto vw = vote_weights(voted);
    const auto uw = vote_weights(unit);
    hp sc = 0, sv = 0;
    for (const auto& h : cw.holdings) sc += h.weight;
    for (const auto& h : vw.holdings) sv += h.weight;
    worst_sum = std::max({worst_sum, static_cast<double>(abs(sc - 1)), static_cast<double>(abs(sv - 1))});
    for (std::size_t i = 0; i < cw.holdings.size(); ++i) {
      unit_exact = unit_exact && cw.holdings[i].weight == uw.holdings[i].weight;
    }
  }
  o.require(worst_sum <= 1e-12, "weight sums");
  o.require(unit_exact, "unit votes");

  PortfolioSnapshot one, two;
  one.holdings = {{"A", 1.0, 1}};
  two.holdings = {{"A", 0.25, 1}, {"B", 0.75, 1}};
  const double e1 = std::abs(reward_10d(one, {{"A", 0.02}}, 0.01, 0.0015) - 0.007);
  const double e2 = std::abs(reward_10d(two, {{"A", 0.04}, {"B", 0.0}}, 0.01, 0.0015) + 0.003);
  o.require(e1 <= 1e-12 && e2 <= 1e-12, "reward examples");

  const Date d0(2025, 3, 3), d1(2025, 3, 4);
  ReturnTable table;
  for (const auto& [d, s, r] : std::vector<std::tuple<Date, std::string, double>>{
           {d0, "A", 0.0}, {d0, "B", 0.0}, {d1, "A", 0.02}, {d1, "B", -0.01}}) {
    table.add(d, s, {r, 100.0, {}});
  }
  const std::vector<PortfolioSnapshot> days{snap(d0, {{"A", 0.25, 1}, {"B", 0.75, 1}}), snap(d1, {{"A", 1.0, 1}})};
  const auto bt = run_backtest(days, table, BacktestConfig{2, 2, 0.0015, ""});
  const hp c("0.0015"), half("0.5");
  const hp a0 = half * (1 - c) * hp("0.25"), b0 = half * (1 - c) * hp("0.75");
  const hp nav0 = a0 + b0 + half;
  const hp nav1 = a0 * hp("1.02") + b0 * hp("0.99") + half * (1 - c);
  const double ledger = std::max(static_cast<double>(abs(hp(bt.nav.at(0)) - nav0)),
                                 static_cast<double>(abs(hp(bt.nav.at(1)) - nav1)));
  o.require(ledger <= 1e-10, "two-day ledger");

  ReturnTable flat;
  std::vector<PortfolioSnapshot> snaps;
  for (unsigned d = 1; d <= 25; ++d) {
    flat.add(Date(2025, 3, d), "A", {0.0, 100.0, {}});
    flat.add(Date(2025, 3, d), "B", {0.0, 100.0, {}});
    snaps.push_back(snap(Date(2025, 3, d), {{"A", 0.4, 1}, {"B", 0.6, 1}}));
  }
  bool constant = true;
  for (const double v : run_backtest(snaps, flat, BacktestConfig{10, 10, 0.0, ""}).nav) constant = constant && v == 1.0;
  o.require(constant, "flat NAV");
  o.detail << "max weight-sum err " << worst_sum << ", unit votes exact " << (unit_exact ? "yes" : "no")
           << ", reward err " << std::max(e1, e2) << ", ledger err " << ledger << ", flat NAV "
           << (constant ? "constant" : "drifts");
}

void context_reduction(Outcome& o) {
  const std::vector<std::string> syms{"AAA", "BBB", "CCC", "DDD", "EEE"};
  TradingDecision d;
  for (const auto& s : syms) d.signals.push_back({true, TradeAction::Buy, s, ""});
  const Rollout rollout = parse_rollout("<think>weighing AAA BBB CCC</think>\n" + serialize_decision(d));
  HashingEmbedder embedder;
  OverlapJudge client;
  Judge judge(client);
  double worst = 0.0;
  for (std::uint64_t b = 0; b < 20; ++b) {
    gen::Rng rng(1000 + b);
    std::string briefing;
    for (int line = 0; line % 200 != 0 || text::token_estimate(briefing) < 30000; ++line) {
      for (int w = rng.integer(6, 18); w > 0; --w) briefing += "filler" + std::to_string(rng.integer(0, 999)) + " ";
      if (rng.integer(0, 25) == 0) briefing += syms[static_cast<std::size_t>(rng.integer(0, 4))] + " moved. ";
      briefing += "\n";
    }
    const auto out = verify(briefing, rollout, VerificationConfig{}, embedder, judge);
    if (!out.available()) {
      o.require(false, "verification unavailable");
      continue;
    }
    worst = std::max(worst, static_cast<double>(out.report->evidence.total_token_estimate) /
                                static_cast<double>(text::token_estimate(briefing)));
  }
  o.require(worst <= 0.40, "ratio");
  o.detail << "20 briefings, worst evidence/briefing token ratio " << worst;
}

void determinism(Outcome& o) {
  const fs::path toy = fs::path(SEMGATE_SOURCE_DIR) / "data" / "toy";
  const fs::path dir = fs::temp_directory_path() / "semgate_acceptance";
  fs::create_directories(dir);
  std::vector<std::string> reports;
  for (int run = 0; run < 2; ++run) {
    auto cfg = ExperimentConfig::load(toy / "experiment.toml");
    cfg.report = dir / ("report_" + std::to_string(run) + ".json");
    cfg.cache.reset();
    auto clients = make_clients(cfg, nullptr);
    run_experiment(cfg, clients);
    reports.push_back(fixture::read(cfg.report->string()));
  }
  const std::string golden = fixture::read((toy / "expected_report.json").string());
  o.require(!reports[0].empty() && reports[0] == reports[1], "two runs");
  o.require(reports[0] == golden, "golden report");
  o.detail << "two runs identical " << (reports[0] == reports[1] ? "yes" : "no") << ", matches bundled golden "
           << (reports[0] == golden ? "yes" : "no") << ", sha256 " << sha256_hex(reports[0]).substr(0, 16);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"gating exactness", gating},
      {"variance suppression", variance},
      {"signal amplification", amplification},
      {"penalty evasion", evasion},
      {"grpo advantages", grpo},
      {"triangular mean", triangular},
      {"codec", codec},
      {"market environment", market},
      {"context reduction", context_reduction},
      {"end-to-end determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    if (!o.pass) ++failures;
    std::printf("%s %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.str().c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures;
}
