#pragma once

// Semantic-gated reward strategies G(r, s).
//
// Units: `r` is a dimensionless return fraction (0.05 == 5% excess return), never a
// percentage. `s` is a semantic alignment score in [0, 1].

#include <Eigen/Core>

#include <string>
#include <string_view>
#include <vector>

namespace semgate {

enum class StrategyKind { MarketOnly, Fsr, Dsr, NaiveMultiply };

/// Canonical names: market_only, fsr, dsr, naive_multiply.
std::string_view to_name(StrategyKind kind);

struct RewardStrategy {
  StrategyKind kind = StrategyKind::Dsr;
  /// Weight of the additive alignment term in FSR. Ignored by other strategies.
  double fsr_coefficient = 2.0;

  /// Throws DomainError for unknown names.
  static RewardStrategy from_name(std::string_view name);
  std::string name() const { return std::string(to_name(kind)); }

  friend bool operator==(const RewardStrategy&, const RewardStrategy&) = default;
};

/// Market feedback r. Finite by construction.
class MarketReward {
 public:
  explicit MarketReward(double value);
  double value() const { return value_; }

 private:
  double value_;
};

/// Semantic score s in [0, 1] by construction.
class SemanticScore {
 public:
  explicit SemanticScore(double value);
  double value() const { return value_; }

 private:
  double value_;
};

struct GatedReward {
  MarketReward r;
  SemanticScore s;
  RewardStrategy strategy;
  double value;
};

// ---------------------------------------------------------------------------
// Closed forms, unchecked, generic over the scalar type.

/// DSR gain coefficient: 0.5 + s for gains, 2 - s for r <= 0.
template <typename Scalar>
Scalar dsr_gain_of(Scalar r, Scalar s) {
  return r > Scalar(0) ? Scalar(0.5) + s : Scalar(2) - s;
}

template <typename Scalar>
Scalar gate_of(const RewardStrategy& strategy, Scalar r, Scalar s) {
  switch (strategy.kind) {
    case StrategyKind::MarketOnly:
      return r;
    case StrategyKind::Fsr:
      return r + Scalar(strategy.fsr_coefficient) * s;
    case StrategyKind::Dsr:
      return dsr_gain_of(r, s) * r;
    case StrategyKind::NaiveMultiply:
      return r * s;
  }
  return r;
}

/// dG/ds. At r == 0 DSR has zero slope.
template <typename Scalar>
Scalar alignment_incentive_of(const RewardStrategy& strategy, Scalar r) {
  switch (strategy.kind) {
    case StrategyKind::MarketOnly:
      return Scalar(0);
    case StrategyKind::Fsr:
      return Scalar(strategy.fsr_coefficient);
    case StrategyKind::Dsr:
      return r > Scalar(0) ? r : -r;
    case StrategyKind::NaiveMultiply:
      return r;
  }
  return Scalar(0);
}

/// Coefficient-wise gate over arrays of rewards and scores of equal length.
/// Bit-identical to calling gate_of per element.
template <typename DerivedR, typename DerivedS>
Eigen::Array<typename DerivedR::Scalar, Eigen::Dynamic, 1> gate_array(
    const RewardStrategy& strategy, const Eigen::ArrayBase<DerivedR>& r,
    const Eigen::ArrayBase<DerivedS>& s) {
  using Scalar = typename DerivedR::Scalar;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> out(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    out(i) = gate_of<Scalar>(strategy, r(i), s(i));
  }
  return out;
}

/// Same as above with one score applied to every reward.
template <typename DerivedR>
Eigen::Array<typename DerivedR::Scalar, Eigen::Dynamic, 1> gate_array(
    const RewardStrategy& strategy, const Eigen::ArrayBase<DerivedR>& r,
    typename DerivedR::Scalar s) {
  using Scalar = typename DerivedR::Scalar;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> out(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    out(i) = gate_of<Scalar>(strategy, r(i), s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validated entry points. Throw DomainError naming "r" or "s".

GatedReward gate(const RewardStrategy& strategy, MarketReward r, SemanticScore s);
GatedReward gate(const RewardStrategy& strategy, double r, double s);

double dsr_gain(MarketReward r, SemanticScore s);
double dsr_gain(double r, double s);

double alignment_incentive(const RewardStrategy& strategy, MarketReward r, SemanticScore s);
double alignment_incentive(const RewardStrategy& strategy, double r, double s);

std::vector<std::string> strategy_names();

}  // namespace semgate
