#pragma once

// Group-relative advantages: A_i = (G_i - mean) / (std + epsilon).

#include <Eigen/Core>

#include <cmath>
#include <string>

#include "semgate/errors.hpp"

namespace semgate {

enum class StdConvention {
  Population,  ///< divide by N (default)
  Sample,      ///< divide by N - 1
};

struct RewardGroup {
  Eigen::VectorXd rewards;
  double epsilon = 1e-8;
};

/// Throws DomainError if the group has fewer than two members, a non-finite reward,
/// or a non-positive epsilon.
template <typename Derived>
void validate_group(const Eigen::MatrixBase<Derived>& rewards, typename Derived::Scalar epsilon) {
  if (rewards.size() < 2) {
    throw DomainError("rewards", "group needs at least 2 rewards, got " +
                                     std::to_string(rewards.size()));
  }
  if (!(epsilon > 0) || !std::isfinite(static_cast<double>(epsilon))) {
    throw DomainError("epsilon", "must be a finite positive number");
  }
  for (Eigen::Index i = 0; i < rewards.size(); ++i) {
    if (!std::isfinite(static_cast<double>(rewards(i)))) {
      throw DomainError("rewards[" + std::to_string(i) + "]", "reward must be finite");
    }
  }
}

/// Normalizes one group of gated rewards. Order is preserved.
///
/// The statistics are taken on data shifted by the first reward, so adding a constant to
/// every reward leaves the result bit-identical whenever the shifted inputs are exactly
/// representable, and is otherwise stable against cancellation for large offsets.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> group_advantages(
    const Eigen::MatrixBase<Derived>& rewards, typename Derived::Scalar epsilon = 1e-8,
    StdConvention convention = StdConvention::Population) {
  using Scalar = typename Derived::Scalar;
  validate_group(rewards, epsilon);

  const Eigen::Index n = rewards.size();
  const Scalar pivot = rewards(0);
  const Eigen::Array<Scalar, Eigen::Dynamic, 1> shifted = rewards.array() - pivot;
  const Eigen::Array<Scalar, Eigen::Dynamic, 1> centered = shifted - shifted.mean();
  const Scalar dof = convention == StdConvention::Population ? Scalar(n) : Scalar(n - 1);
  const Scalar stddev = std::sqrt(centered.square().sum() / dof);
  return (centered / (stddev + epsilon)).matrix();
}

inline Eigen::VectorXd group_advantages(const RewardGroup& group,
                                        StdConvention convention = StdConvention::Population) {
  return group_advantages(group.rewards, group.epsilon, convention);
}

}  // namespace semgate
