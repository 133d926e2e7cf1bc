#include "qic/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qic {

double empirical_quantile_sorted(std::span<const double> sorted, double omega) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample set");
  if (!(omega > 0.0 && omega <= 1.0))
    throw std::invalid_argument("quantile level must be in (0, 1], got " + std::to_string(omega));
  const double n = double(sorted.size());
  // Smallest k with k/n >= omega; the epsilon keeps omega*n = 9.000000000000002 at 9.
  auto k = std::size_t(std::ceil(omega * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  return sorted[k - 1];
}

double empirical_quantile(std::span<const double> samples, double omega) {
  std::vector<double> v(samples.begin(), samples.end());
  std::sort(v.begin(), v.end());
  return empirical_quantile_sorted(v, omega);
}

namespace {

// Squared coefficient of variation of Weibull(k, .).
double weibull_cv2(double k) {
  const double g1 = std::tgamma(1.0 + 1.0 / k);
  const double g2 = std::tgamma(1.0 + 2.0 / k);
  return g2 / (g1 * g1) - 1.0;
}

std::optional<std::pair<double, double>> moments_fit(std::span<const double> x) {
  if (x.size() < 2) return std::nullopt;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= double(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= double(x.size() - 1);
  if (!(mean > 0.0) || !(var > 0.0) || !std::isfinite(var)) return std::nullopt;
  const double cv2 = var / (mean * mean);

  double lo = 0.05, hi = 200.0;  // cv2 is decreasing in k
  if (cv2 >= weibull_cv2(lo)) hi = lo;
  else if (cv2 <= weibull_cv2(hi)) lo = hi;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (weibull_cv2(mid) > cv2) lo = mid;
    else hi = mid;
  }
  const double k = 0.5 * (lo + hi);
  const double lambda = mean / std::tgamma(1.0 + 1.0 / k);
  return std::make_pair(k, lambda);
}

}  // namespace

double WeibullTail::quantile(double omega) const {
  if (!(omega > 0.0 && omega < 1.0)) throw std::invalid_argument("tail quantile needs omega in (0,1)");
  const double p = (1.0 - omega) / tail_mass;
  if (p >= 1.0) return threshold;
  return threshold + scale * std::pow(-std::log(p), 1.0 / shape);
}

std::optional<WeibullTail> fit_weibull(std::span<const double> samples) {
  auto fit = moments_fit(samples);
  if (!fit) return std::nullopt;
  WeibullTail t;
  t.shape = fit->first;
  t.scale = fit->second;
  t.threshold = 0.0;
  t.tail_mass = 1.0;
  t.fit_samples = samples.size();
  return t;
}

std::optional<WeibullTail> fit_weibull_tail(std::span<const double> samples, double tail_quantile) {
  std::vector<double> v(samples.begin(), samples.end());
  std::sort(v.begin(), v.end());
  if (v.empty()) return std::nullopt;
  const double u = empirical_quantile_sorted(v, tail_quantile);
  std::vector<double> exceed;
  for (double x : v)
    if (x > u) exceed.push_back(x - u);
  auto fit = moments_fit(exceed);
  if (!fit) return std::nullopt;
  WeibullTail t;
  t.shape = fit->first;
  t.scale = fit->second;
  t.threshold = u;
  t.tail_mass = double(exceed.size()) / double(v.size());
  t.fit_samples = exceed.size();
  return t;
}

double cumulative_cost_quantile(std::span<const double> samples, double omega,
                                double tail_quantile) {
  if (samples.size() < kMinQuantileSamples)
    throw std::invalid_argument("cumulative cost quantile needs at least " +
                                std::to_string(kMinQuantileSamples) + " samples, got " +
                                std::to_string(samples.size()));
  std::vector<double> v(samples.begin(), samples.end());
  std::sort(v.begin(), v.end());
  if (omega < tail_quantile || omega >= 1.0) return empirical_quantile_sorted(v, omega);
  auto tail = fit_weibull_tail(v, tail_quantile);
  if (!tail) return empirical_quantile_sorted(v, omega);
  return tail->quantile(omega);
}

}  // namespace qic
