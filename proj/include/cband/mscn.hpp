#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cband/errors.hpp"

namespace cband {

// Circularly-symmetric Gaussian weighting window, sampled out to 3 standard
// deviations: sigma = K/3, so the edge taps sit at 3 sigma. Weights are
// normalized to unit sum.
struct GaussianWindow {
  int K = 3;  // half-width (columns run -K..K)
  int L = 3;  // half-height (rows run -L..L)
  double sigma = 1.0;
  std::vector<double> weights;  // (2L+1) x (2K+1), row-major

  double at(int l, int k) const {
    return weights[size_t(l + L) * (2 * K + 1) + size_t(k + K)];
  }
};

// sigma <= 0 selects the default K/3; pass e.g. 7.0/6.0 for the BRISQUE
// convention.
inline GaussianWindow build_window(int K = 3, int L = 3, double sigma = 0.0) {
  if (K < 1 || L < 1)
    throw Error(ErrorKind::InvalidArgument, "window half-sizes must be >= 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw Error(ErrorKind::InvalidArgument, "window sigma must be finite and >= 0");
  GaussianWindow w;
  w.K = K;
  w.L = L;
  w.sigma = sigma > 0.0 ? sigma : double(K) / 3.0;
  w.weights.resize(size_t(2 * L + 1) * (2 * K + 1));
  double sum = 0;
  for (int l = -L; l <= L; ++l)
    for (int k = -K; k <= K; ++k) {
      const double v = std::exp(-(double(k) * k + double(l) * l) / (2.0 * w.sigma * w.sigma));
      w.weights[size_t(l + L) * (2 * K + 1) + size_t(k + K)] = v;
      sum += v;
    }
  for (double& v : w.weights) v /= sum;
  return w;
}

// Mean-subtracted contrast-normalized coefficients of one 2-D map.
struct MSCNMap {
  uint32_t height = 0;
  uint32_t width = 0;
  std::vector<double> coefficients;  // row-major, height*width

  double at(size_t y, size_t x) const { return coefficients[y * width + x]; }
};

namespace detail {

// Symmetric (edge-repeating) index fold: ... 2 1 0 | 0 1 2 ... n-1 | n-1 ...
// Valid for any map size down to 1x1.
inline int64_t mirror_index(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

// Separable windowed convolution with mirror padding. The 2-D Gaussian window
// factors exactly into the outer product of its 1-D marginals, so two 1-D
// passes reproduce the full 2-D weighted sum bit-for-bit in exact arithmetic
// and to rounding error in floating point.
inline std::vector<double> window_filter(const std::vector<double>& img, int64_t h,
                                         int64_t w, const GaussianWindow& win) {
  // 1-D marginals of the normalized window (each sums to 1).
  std::vector<double> kx(size_t(2 * win.K + 1), 0.0), ky(size_t(2 * win.L + 1), 0.0);
  for (int l = -win.L; l <= win.L; ++l)
    for (int k = -win.K; k <= win.K; ++k) {
      kx[size_t(k + win.K)] += win.at(l, k);
      ky[size_t(l + win.L)] += win.at(l, k);
    }

  std::vector<double> tmp(img.size()), out(img.size());
  // Horizontal pass.
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -win.K; k <= win.K; ++k)
        acc += kx[size_t(k + win.K)] * img[size_t(y) * w + size_t(mirror_index(x + k, w))];
      tmp[size_t(y) * w + size_t(x)] = acc;
    }
  // Vertical pass.
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double acc = 0;
      for (int l = -win.L; l <= win.L; ++l)
        acc += ky[size_t(l + win.L)] * tmp[size_t(mirror_index(y + l, h)) * w + size_t(x)];
      out[size_t(y) * w + size_t(x)] = acc;
    }
  return out;
}

}  // namespace detail

// MSCN transform: (I - mu) / (sigma + C1), where mu is the windowed local
// mean and sigma the windowed local (population) standard deviation,
// sigma^2 = E[I^2] - mu^2 under the window, with mirror padding at borders.
inline MSCNMap mscn(const std::vector<double>& map, uint32_t height, uint32_t width,
                    const GaussianWindow& window, double c1 = 1.0) {
  if (height < 1 || width < 1 || map.size() != size_t(height) * width)
    throw Error(ErrorKind::ShapeError, "mscn input dimensions are inconsistent");

  // Exactly constant input: mu equals the value everywhere, so the transform
  // is identically zero. Short-circuiting keeps it exact where the filtered
  // path would leave cancellation residue.
  bool constant = true;
  for (size_t i = 1; i < map.size() && constant; ++i) constant = map[i] == map[0];
  if (constant) {
    MSCNMap zero;
    zero.height = height;
    zero.width = width;
    zero.coefficients.assign(map.size(), 0.0);
    return zero;
  }

  std::vector<double> sq(map.size());
  for (size_t i = 0; i < map.size(); ++i) sq[i] = map[i] * map[i];

  const std::vector<double> mu = detail::window_filter(map, height, width, window);
  const std::vector<double> musq = detail::window_filter(sq, height, width, window);

  MSCNMap out;
  out.height = height;
  out.width = width;
  out.coefficients.resize(map.size());
  for (size_t i = 0; i < map.size(); ++i) {
    // Guard tiny negative variance from floating-point cancellation.
    const double var = musq[i] - mu[i] * mu[i];
    const double sigma = std::sqrt(var > 0 ? var : 0.0);
    out.coefficients[i] = (map[i] - mu[i]) / (sigma + c1);
  }
  return out;
}

}  // namespace cband
