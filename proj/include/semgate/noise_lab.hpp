#pragma once

// Monte Carlo checks of how each gate reshapes noisy market rewards r = r* + xi,
// xi ~ N(0, sigma^2). Reward variance at fixed s stands in for gradient variance.

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "semgate/reward_gating.hpp"

namespace semgate {

/// Seeded normal stream: mt19937_64 feeding a Box-Muller transform, both outputs used.
/// Uniforms are the top 53 bits of each engine word, so the stream is identical on
/// every standard library (std::normal_distribution is not).
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double next();
  /// Uniform on [0, 1).
  double uniform();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct NoiseModel {
  double r_star = 0.0;
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

Eigen::VectorXd sample_returns(const NoiseModel& model, std::size_t n);

enum class Regime { PositiveR, NegativeR, All };

std::string_view to_name(Regime regime);
Regime regime_from_name(std::string_view name);

struct RegimeStats {
  RewardStrategy strategy;
  Regime regime = Regime::All;
  double s = 0.0;
  std::size_t sample_count = 0;
  double var_gated = 0.0;
  double var_raw = 0.0;
  std::optional<double> ratio;  ///< var_gated / var_raw when var_raw > 0
};

/// Draws n returns, gates them at fixed s and compares population variances over the
/// regime subset. Throws DomainError when fewer than two draws fall in the regime.
RegimeStats variance_ratio(const NoiseModel& model, const RewardStrategy& strategy, double s, std::size_t n,
                           Regime regime);

/// Variant with s drawn per sample from Uniform[s_lo, s_hi] on an independent stream.
struct DistributionalStats {
  RewardStrategy strategy;
  Regime regime = Regime::All;
  double s_lo = 0.0;
  double s_hi = 1.0;
  std::size_t sample_count = 0;
  double var_ratio = 0.0;            ///< Var(G) / Var(r)
  double second_moment_ratio = 0.0;  ///< E[G^2] / E[r^2]
  /// E[alpha^2] for the DSR gain of the regime; absent for other strategies or Regime::All.
  std::optional<double> expected_gain_sq;
};

DistributionalStats variance_ratio_distributional(const NoiseModel& model, const RewardStrategy& strategy,
                                                  double s_lo, double s_hi, std::size_t n, Regime regime);

/// Grounded class (r* > 0, high s) and spurious class (r* = 0, low s). The first
/// round(n * grounded_fraction) draws are grounded, the rest spurious.
struct PopulationSpec {
  double grounded_r_star = 0.02;
  double grounded_s = 0.95;
  double spurious_r_star = 0.0;
  double spurious_s = 0.05;
  double noise_sigma = 0.02;
  double grounded_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SnrResult {
  std::size_t grounded_count = 0;
  std::size_t spurious_count = 0;
  double grounded_mean_dsr = 0.0;
  double grounded_mean_mkt = 0.0;
  double spurious_std_dsr = 0.0;
  double spurious_std_mkt = 0.0;
  /// |grounded mean| / spurious std; absent when the spurious class is empty or its
  /// std is below 1e-8 (noiseless populations).
  std::optional<double> snr_dsr;
  std::optional<double> snr_mkt;
};

SnrResult snr_compare(const PopulationSpec& spec, std::size_t n);

struct EvasionPoint {
  double r = 0.0;
  double argmax_s = 0.0;
  double best_value = 0.0;
  bool tie = false;  ///< several s reach the maximum; the smallest is reported
};

/// For each r, the s on the grid that maximizes G(r, s). The s grid must lie in [0, 1]
/// and contain both endpoints.
std::vector<EvasionPoint> evasion_sweep(const RewardStrategy& strategy, std::span<const double> r_grid,
                                        std::span<const double> s_grid);

nlohmann::json to_json(const RegimeStats& stats);
nlohmann::json to_json(const DistributionalStats& stats);
nlohmann::json to_json(const SnrResult& result);
nlohmann::json to_json(const EvasionPoint& point);

}  // namespace semgate
