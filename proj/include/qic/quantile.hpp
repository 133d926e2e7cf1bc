#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace qic {

/// inf{x : P(X <= x) >= omega} over equally weighted samples.
/// Throws std::invalid_argument on an empty sample set or omega outside (0, 1].
double empirical_quantile(std::span<const double> samples, double omega);

/// Same, on samples already sorted ascending.
double empirical_quantile_sorted(std::span<const double> sorted, double omega);

struct WeibullTail {
  double shape = 1.0;      // k
  double scale = 1.0;      // lambda
  double threshold = 0.0;  // u: exceedances x - u are Weibull(k, lambda)
  double tail_mass = 0.2;  // P(X > u)
  std::size_t fit_samples = 0;

  /// Quantile of the fitted tail: u + lambda * (-ln((1 - omega) / tail_mass))^(1/k).
  double quantile(double omega) const;
};

inline constexpr std::size_t kMinQuantileSamples = 30;

/// Method-of-moments fit on the exceedances above the `tail_quantile`
/// empirical quantile. Returns nullopt when the exceedances are degenerate.
std::optional<WeibullTail> fit_weibull_tail(std::span<const double> samples,
                                            double tail_quantile = 0.8);

/// Unshifted method-of-moments fit on all samples (X ~ Weibull(k, lambda)).
std::optional<WeibullTail> fit_weibull(std::span<const double> samples);

/// Quantile of the cumulative cost X: empirical below the tail threshold,
/// fitted Weibull tail at or above it. Needs at least kMinQuantileSamples.
double cumulative_cost_quantile(std::span<const double> samples, double omega,
                                double tail_quantile = 0.8);

}  // namespace qic
