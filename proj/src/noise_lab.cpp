#include "semgate/noise_lab.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "semgate/errors.hpp"
#include "semgate/text.hpp"

namespace semgate {
namespace {

// The s stream must not share draws with the return stream.
constexpr std::uint64_t kScoreStreamSalt = 0x9E3779B97F4A7C15ULL;

bool in_regime(double r, Regime regime) {
  switch (regime) {
    case Regime::PositiveR:
      return r > 0.0;
    case Regime::NegativeR:
      return r <= 0.0;  // matches the DSR loss branch
    case Regime::All:
      return true;
  }
  return true;
}

double pop_variance(const Eigen::ArrayXd& x) {
  const Eigen::ArrayXd c = x - x.mean();
  return c.square().mean();
}

void check_score(double s, const char* field) {
  if (!(s >= 0.0 && s <= 1.0)) throw DomainError(field, "must lie in [0, 1]");
}

Eigen::ArrayXd select(const Eigen::ArrayXd& x, const std::vector<Eigen::Index>& idx) {
  Eigen::ArrayXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = x(idx[i]);
  return out;
}

std::vector<Eigen::Index> regime_index(const Eigen::VectorXd& r, Regime regime) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (in_regime(r(i), regime)) idx.push_back(i);
  }
  if (idx.size() < 2) {
    throw DomainError("regime", "insufficient samples in regime " + std::string(to_name(regime)) + ": " +
                                    std::to_string(idx.size()));
  }
  return idx;
}

}  // namespace

double GaussianStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double GaussianStream::next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

void NoiseModel::validate() const {
  if (!std::isfinite(r_star)) throw DomainError("r_star", "must be finite");
  if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) throw DomainError("noise_sigma", "must be positive");
}

Eigen::VectorXd sample_returns(const NoiseModel& model, std::size_t n) {
  model.validate();
  if (n == 0) throw DomainError("n", "must be at least 1");
  GaussianStream g(model.seed);
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = model.r_star + model.noise_sigma * g.next();
  return out;
}

std::string_view to_name(Regime regime) {
  switch (regime) {
    case Regime::PositiveR:
      return "positive_r";
    case Regime::NegativeR:
      return "negative_r";
    case Regime::All:
      return "all";
  }
  return "all";
}

Regime regime_from_name(std::string_view name) {
  for (const auto r : {Regime::PositiveR, Regime::NegativeR, Regime::All}) {
    if (text::iequals(name, to_name(r))) return r;
  }
  throw DomainError("regime", "expected positive_r, negative_r or all, got '" + std::string(name) + "'");
}

RegimeStats variance_ratio(const NoiseModel& model, const RewardStrategy& strategy, double s, std::size_t n,
                           Regime regime) {
  check_score(s, "s");
  const Eigen::VectorXd r = sample_returns(model, n);
  const auto idx = regime_index(r, regime);
  const Eigen::ArrayXd raw = select(r.array(), idx);
  const Eigen::ArrayXd gated = gate_array(strategy, raw, s);

  RegimeStats st{strategy, regime, s, idx.size(), pop_variance(gated), pop_variance(raw), std::nullopt};
  if (st.var_raw > 0.0) st.ratio = st.var_gated / st.var_raw;
  return st;
}

DistributionalStats variance_ratio_distributional(const NoiseModel& model, const RewardStrategy& strategy,
                                                  double s_lo, double s_hi, std::size_t n, Regime regime) {
  check_score(s_lo, "s_lo");
  check_score(s_hi, "s_hi");
  if (s_lo > s_hi) throw DomainError("s_lo", "must not exceed s_hi");
  const Eigen::VectorXd r = sample_returns(model, n);
  GaussianStream sg(model.seed ^ kScoreStreamSalt);
  Eigen::ArrayXd s(r.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = s_lo + (s_hi - s_lo) * sg.uniform();

  const auto idx = regime_index(r, regime);
  const Eigen::ArrayXd raw = select(r.array(), idx);
  const Eigen::ArrayXd ss = select(s, idx);
  const Eigen::ArrayXd gated = gate_array(strategy, raw, ss);

  DistributionalStats st;
  st.strategy = strategy;
  st.regime = regime;
  st.s_lo = s_lo;
  st.s_hi = s_hi;
  st.sample_count = idx.size();
  st.var_ratio = pop_variance(gated) / pop_variance(raw);
  st.second_moment_ratio = gated.square().mean() / raw.square().mean();
  if (strategy.kind == StrategyKind::Dsr && regime != Regime::All) {
    // E[alpha^2] for alpha = a + sign * s, s uniform; the point value when the interval is empty.
    const double a = regime == Regime::PositiveR ? 0.5 : 2.0;
    const double sign = regime == Regime::PositiveR ? 1.0 : -1.0;
    const double lo = a + sign * s_lo;
    const double hi = a + sign * s_hi;
    st.expected_gain_sq = s_hi == s_lo ? lo * lo : (hi * hi * hi - lo * lo * lo) / (3.0 * (hi - lo));
  }
  return st;
}

void PopulationSpec::validate() const {
  check_score(grounded_s, "grounded_s");
  check_score(spurious_s, "spurious_s");
  if (!std::isfinite(grounded_r_star) || !std::isfinite(spurious_r_star)) {
    throw DomainError("r_star", "must be finite");
  }
  if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) throw DomainError("noise_sigma", "must be positive");
  if (!(grounded_fraction > 0.0 && grounded_fraction <= 1.0)) {
    throw DomainError("grounded_fraction", "must lie in (0, 1]");
  }
}

SnrResult snr_compare(const PopulationSpec& spec, std::size_t n) {
  spec.validate();
  if (n < 2) throw DomainError("n", "must be at least 2");
  const auto grounded = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.grounded_fraction));
  if (grounded == 0) throw DomainError("grounded_fraction", "leaves the grounded class empty");

  GaussianStream g(spec.seed);
  const RewardStrategy dsr{StrategyKind::Dsr};
  const RewardStrategy mkt{StrategyKind::MarketOnly};
  Eigen::ArrayXd gd(static_cast<Eigen::Index>(grounded)), gm(gd.size());
  Eigen::ArrayXd sd(static_cast<Eigen::Index>(n - grounded)), sm(sd.size());
  for (Eigen::Index i = 0; i < gd.size(); ++i) {
    const double r = spec.grounded_r_star + spec.noise_sigma * g.next();
    gd(i) = gate_of(dsr, r, spec.grounded_s);
    gm(i) = gate_of(mkt, r, spec.grounded_s);
  }
  for (Eigen::Index i = 0; i < sd.size(); ++i) {
    const double r = spec.spurious_r_star + spec.noise_sigma * g.next();
    sd(i) = gate_of(dsr, r, spec.spurious_s);
    sm(i) = gate_of(mkt, r, spec.spurious_s);
  }

  SnrResult out;
  out.grounded_count = grounded;
  out.spurious_count = n - grounded;
  out.grounded_mean_dsr = gd.mean();
  out.grounded_mean_mkt = gm.mean();
  if (sd.size() > 0) {
    out.spurious_std_dsr = std::sqrt(pop_variance(sd));
    out.spurious_std_mkt = std::sqrt(pop_variance(sm));
    constexpr double kFloor = 1e-8;
    if (out.spurious_std_dsr >= kFloor) out.snr_dsr = std::abs(out.grounded_mean_dsr) / out.spurious_std_dsr;
    if (out.spurious_std_mkt >= kFloor) out.snr_mkt = std::abs(out.grounded_mean_mkt) / out.spurious_std_mkt;
  }
  return out;
}

std::vector<EvasionPoint> evasion_sweep(const RewardStrategy& strategy, std::span<const double> r_grid,
                                        std::span<const double> s_grid) {
  if (r_grid.empty()) throw DomainError("r_grid", "must not be empty");
  if (s_grid.empty()) throw DomainError("s_grid", "must not be empty");
  for (const double s : s_grid) check_score(s, "s_grid");
  const bool has0 = std::find(s_grid.begin(), s_grid.end(), 0.0) != s_grid.end();
  const bool has1 = std::find(s_grid.begin(), s_grid.end(), 1.0) != s_grid.end();
  if (!has0 || !has1) throw DomainError("s_grid", "must include 0 and 1");
  std::vector<double> ss(s_grid.begin(), s_grid.end());
  std::sort(ss.begin(), ss.end());
  ss.erase(std::unique(ss.begin(), ss.end()), ss.end());

  std::vector<EvasionPoint> out;
  for (const double r : r_grid) {
    if (!std::isfinite(r)) throw DomainError("r_grid", "must be finite");
    EvasionPoint p{r, ss.front(), gate_of(strategy, r, ss.front()), false};
    for (std::size_t i = 1; i < ss.size(); ++i) {
      const double v = gate_of(strategy, r, ss[i]);
      if (v > p.best_value) {
        p.best_value = v;
        p.argmax_s = ss[i];
        p.tie = false;
      } else if (v == p.best_value) {
        p.tie = true;
      }
    }
    out.push_back(p);
  }
  return out;
}

nlohmann::json to_json(const RegimeStats& st) {
  return {{"strategy", st.strategy.name()},
          {"regime", to_name(st.regime)},
          {"s", st.s},
          {"sample_count", st.sample_count},
          {"var_gated", st.var_gated},
          {"var_raw", st.var_raw},
          {"ratio", st.ratio ? nlohmann::json(*st.ratio) : nlohmann::json(nullptr)}};
}

nlohmann::json to_json(const DistributionalStats& st) {
  return {{"strategy", st.strategy.name()},
          {"regime", to_name(st.regime)},
          {"s_lo", st.s_lo},
          {"s_hi", st.s_hi},
          {"sample_count", st.sample_count},
          {"var_ratio", st.var_ratio},
          {"second_moment_ratio", st.second_moment_ratio},
          {"expected_gain_sq", st.expected_gain_sq ? nlohmann::json(*st.expected_gain_sq) : nlohmann::json(nullptr)}};
}

nlohmann::json to_json(const SnrResult& r) {
  const auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"grounded_count", r.grounded_count},     {"spurious_count", r.spurious_count},
          {"grounded_mean_dsr", r.grounded_mean_dsr}, {"grounded_mean_mkt", r.grounded_mean_mkt},
          {"spurious_std_dsr", r.spurious_std_dsr},   {"spurious_std_mkt", r.spurious_std_mkt},
          {"snr_dsr", opt(r.snr_dsr)},                {"snr_mkt", opt(r.snr_mkt)}};
}

nlohmann::json to_json(const EvasionPoint& p) {
  return {{"r", p.r}, {"argmax_s", p.argmax_s}, {"best_value", p.best_value}, {"tie", p.tie}};
}

}  // namespace semgate
