#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cband/errors.hpp"

namespace cband {

// Zero-mean generalized Gaussian parameters: alpha shapes the density
// (alpha=2 Gaussian, alpha=1 Laplacian), sigma is the standard-deviation-like
// scale (sigma^2 = second moment). `clamped` marks fits pinned to the solver
// grid boundary.
struct GGDParams {
  double alpha = 0;
  double sigma = 0;
  bool clamped = false;
};

namespace detail {

// Moment-matching ratio r(alpha) = Gamma(1/a) Gamma(3/a) / Gamma(2/a)^2.
// Strictly decreasing in alpha: heavy tails (small alpha) inflate
// m2 relative to m1^2.
inline double ggd_ratio(double alpha) {
  return std::exp(std::lgamma(1.0 / alpha) + std::lgamma(3.0 / alpha) -
                  2.0 * std::lgamma(2.0 / alpha));
}

constexpr double kGgdAlphaMin = 0.05;
constexpr double kGgdAlphaMax = 10.0;
constexpr double kGgdAlphaStep = 0.001;

struct GgdGrid {
  std::vector<double> alpha;
  std::vector<double> ratio;  // strictly decreasing

  GgdGrid() {
    const auto n = size_t(std::llround((kGgdAlphaMax - kGgdAlphaMin) / kGgdAlphaStep)) + 1;
    alpha.reserve(n);
    ratio.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      const double a = kGgdAlphaMin + double(i) * kGgdAlphaStep;
      alpha.push_back(a);
      ratio.push_back(ggd_ratio(a));
    }
    // Monotonicity underwrites the bracketing search below; check it once.
    for (size_t i = 1; i < ratio.size(); ++i)
      if (!(ratio[i] < ratio[i - 1]))
        throw Error(ErrorKind::InvalidArgument,
                    "GGD ratio grid is not strictly decreasing");
  }
};

inline const GgdGrid& ggd_grid() {
  static const GgdGrid grid;
  return grid;
}

}  // namespace detail

inline double ggd_alpha_min() { return detail::kGgdAlphaMin; }
inline double ggd_alpha_max() { return detail::kGgdAlphaMax; }

// Fits a zero-mean GGD by moment matching: rho = m2/m1^2 is matched against
// r(alpha) on a precomputed grid (nearest bracketing cell via binary search on
// the decreasing ratios), then refined by bisection to |d alpha| < 1e-6.
// sigma = sqrt(m2).
inline GGDParams fit_ggd(const double* samples, size_t n) {
  if (n < 16)
    throw Error(ErrorKind::InvalidArgument,
                "GGD fit needs at least 16 samples, got " + std::to_string(n));
  double m1 = 0, m2 = 0;
  for (size_t i = 0; i < n; ++i) {
    m1 += std::abs(samples[i]);
    m2 += samples[i] * samples[i];
  }
  m1 /= double(n);
  m2 /= double(n);
  if (m1 == 0)
    throw Error(ErrorKind::DegenerateInput, "GGD fit on all-zero samples");

  const double rho = m2 / (m1 * m1);
  const auto& grid = detail::ggd_grid();

  GGDParams out;
  out.sigma = std::sqrt(m2);
  if (rho >= grid.ratio.front()) {
    out.alpha = grid.alpha.front();
    out.clamped = true;
    return out;
  }
  if (rho <= grid.ratio.back()) {
    out.alpha = grid.alpha.back();
    out.clamped = true;
    return out;
  }

  // Bracket: ratio[lo] >= rho > ratio[hi] with hi = lo+1 (ratios decreasing).
  size_t lo = 0, hi = grid.ratio.size() - 1;
  while (hi - lo > 1) {
    const size_t mid = lo + (hi - lo) / 2;
    if (grid.ratio[mid] >= rho)
      lo = mid;
    else
      hi = mid;
  }

  // Bisection on the continuous ratio within the bracketing grid cell.
  double a_lo = grid.alpha[lo], a_hi = grid.alpha[hi];
  while (a_hi - a_lo > 1e-6) {
    const double mid = 0.5 * (a_lo + a_hi);
    if (detail::ggd_ratio(mid) >= rho)
      a_lo = mid;
    else
      a_hi = mid;
  }
  out.alpha = 0.5 * (a_lo + a_hi);
  return out;
}

inline GGDParams fit_ggd(const std::vector<double>& samples) {
  return fit_ggd(samples.data(), samples.size());
}

}  // namespace cband
