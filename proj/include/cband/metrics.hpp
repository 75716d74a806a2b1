#pragma once

// Correlation metrics and the 4-parameter logistic linearization used by the
// benchmark harness: SROCC (average ranks), KROCC (tau-b), PLCC/RMSE after a
// Nelder-Mead least-squares logistic fit. Rank metrics return an empty
// optional when undefined (constant input).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cband/errors.hpp"

namespace cband {

namespace detail {

inline void check_paired(const std::vector<double>& x, const std::vector<double>& y,
                         size_t min_n, const char* who) {
  if (x.size() != y.size())
    throw Error(ErrorKind::DimensionMismatch,
                std::string(who) + ": input lengths differ (" +
                    std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  if (x.size() < min_n)
    throw Error(ErrorKind::InvalidArgument,
                std::string(who) + ": needs at least " + std::to_string(min_n) +
                    " points, got " + std::to_string(x.size()));
}

// Average ranks (1-based); ties share the mean of their rank range.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t(0));
  std::stable_sort(idx.begin(), idx.end(),
                   [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double shared = 0.5 * double(i + j) + 1.0;  // mean of ranks i+1..j+1
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

inline std::optional<double> pearson(const std::vector<double>& x,
                                     const std::vector<double>& y) {
  detail::check_paired(x, y, 2, "pearson");
  const size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

inline std::optional<double> srocc(const std::vector<double>& x,
                                   const std::vector<double>& y) {
  detail::check_paired(x, y, 3, "srocc");
  return pearson(detail::average_ranks(x), detail::average_ranks(y));
}

// Kendall tau-b by direct pair enumeration (O(n²), fine at benchmark scale).
inline std::optional<double> krocc(const std::vector<double>& x,
                                   const std::vector<double>& y) {
  detail::check_paired(x, y, 3, "krocc");
  const size_t n = x.size();
  int64_t concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0.0 && dy == 0.0) {
        ++ties_x;
        ++ties_y;
      } else if (dx == 0.0) {
        ++ties_x;
      } else if (dy == 0.0) {
        ++ties_y;
      } else if ((dx > 0.0) == (dy > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const int64_t n0 = int64_t(n) * (int64_t(n) - 1) / 2;
  const double denom =
      std::sqrt(double(n0 - ties_x)) * std::sqrt(double(n0 - ties_y));
  if (denom == 0.0) return std::nullopt;
  return double(concordant - discordant) / denom;
}

// --- Nelder-Mead -------------------------------------------------------------

struct NelderMeadOptions {
  int max_iterations = 2000;
  double diameter_tolerance = 1e-8;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Downhill simplex with the classic coefficients: reflection 1, expansion 2,
// contraction 0.5, shrink 0.5. Convergence when the simplex max-norm
// diameter falls below the tolerance.
inline NelderMeadResult nelder_mead(
    const std::function<double(const std::vector<double>&)>& objective,
    std::vector<double> start, const NelderMeadOptions& opt = {}) {
  const size_t dim = start.size();
  if (dim == 0)
    throw Error(ErrorKind::InvalidArgument, "nelder_mead: empty start point");

  auto safe_eval = [&](const std::vector<double>& p) {
    const double v = objective(p);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };

  std::vector<std::vector<double>> simplex(dim + 1, start);
  for (size_t i = 0; i < dim; ++i) {
    // fminsearch-style initial displacements.
    simplex[i + 1][i] += start[i] != 0.0 ? 0.05 * std::abs(start[i]) : 0.00025;
  }
  std::vector<double> values(dim + 1);
  for (size_t i = 0; i <= dim; ++i) values[i] = safe_eval(simplex[i]);

  NelderMeadResult result;
  int iter = 0;
  for (; iter < opt.max_iterations; ++iter) {
    std::vector<size_t> order(dim + 1);
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return values[a] < values[b]; });

    double diameter = 0.0;
    for (size_t i = 1; i <= dim; ++i)
      for (size_t d = 0; d < dim; ++d)
        diameter = std::max(diameter, std::abs(simplex[order[i]][d] -
                                               simplex[order[0]][d]));
    if (diameter < opt.diameter_tolerance) {
      result.converged = true;
      break;
    }

    const size_t best = order[0], worst = order[dim], second_worst = order[dim - 1];
    std::vector<double> centroid(dim, 0.0);
    for (size_t i = 0; i <= dim; ++i) {
      if (i == worst) continue;
      for (size_t d = 0; d < dim; ++d) centroid[d] += simplex[i][d];
    }
    for (double& c : centroid) c /= double(dim);

    auto blend = [&](double t) {
      std::vector<double> p(dim);
      for (size_t d = 0; d < dim; ++d)
        p[d] = centroid[d] + t * (simplex[worst][d] - centroid[d]);
      return p;
    };

    const std::vector<double> reflected = blend(-1.0);
    const double f_reflected = safe_eval(reflected);
    if (f_reflected < values[best]) {
      const std::vector<double> expanded = blend(-2.0);
      const double f_expanded = safe_eval(expanded);
      if (f_expanded < f_reflected) {
        simplex[worst] = expanded;
        values[worst] = f_expanded;
      } else {
        simplex[worst] = reflected;
        values[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < values[second_worst]) {
      simplex[worst] = reflected;
      values[worst] = f_reflected;
      continue;
    }
    // Contraction: outside if the reflection improved on the worst point.
    const std::vector<double> contracted =
        blend(f_reflected < values[worst] ? -0.5 : 0.5);
    const double f_contracted = safe_eval(contracted);
    if (f_contracted < std::min(values[worst], f_reflected)) {
      simplex[worst] = contracted;
      values[worst] = f_contracted;
      continue;
    }
    // Shrink toward the best vertex.
    for (size_t i = 0; i <= dim; ++i) {
      if (i == best) continue;
      for (size_t d = 0; d < dim; ++d)
        simplex[i][d] = simplex[best][d] + 0.5 * (simplex[i][d] - simplex[best][d]);
      values[i] = safe_eval(simplex[i]);
    }
  }

  size_t best = 0;
  for (size_t i = 1; i <= dim; ++i)
    if (values[i] < values[best]) best = i;
  result.x = simplex[best];
  result.value = values[best];
  result.iterations = iter;
  return result;
}

// --- 4-parameter logistic ------------------------------------------------------

struct LogisticParams {
  double beta1 = 0.0;
  double beta2 = 0.0;
  double beta3 = 0.0;
  double beta4 = 0.0;
};

// Two exponent groupings are shipped: Standard is the conventional
// -(x - β3)/|β4|; Printed follows the alternative grouping -x + β3/|β4|.
enum class LogisticForm { Standard, Printed };

inline double logistic4(double x, const LogisticParams& p,
                        LogisticForm form = LogisticForm::Standard) {
  const double abs_b4 = std::abs(p.beta4) > 0.0 ? std::abs(p.beta4) : 1e-300;
  const double arg = form == LogisticForm::Standard
                         ? -(x - p.beta3) / abs_b4
                         : -x + p.beta3 / abs_b4;
  return p.beta2 + (p.beta1 - p.beta2) / (1.0 + std::exp(arg));
}

struct LogisticFit {
  LogisticParams params;
  LogisticForm form = LogisticForm::Standard;
  bool converged = false;
  int iterations = 0;
  double rmse = 0.0;
};

inline LogisticFit fit_logistic4(const std::vector<double>& pred,
                                 const std::vector<double>& mos,
                                 LogisticForm form = LogisticForm::Standard) {
  detail::check_paired(pred, mos, 8, "fit_logistic4");
  const size_t n = pred.size();
  double mean = 0.0;
  for (double v : pred) mean += v;
  mean /= double(n);
  double var = 0.0;
  bool constant = true;
  for (double v : pred) {
    var += (v - mean) * (v - mean);
    constant &= v == pred[0];
  }
  if (constant)
    throw Error(ErrorKind::DegenerateInput,
                "fit_logistic4: predictions are constant");
  var /= double(n);

  auto sse = [&](const std::vector<double>& beta) {
    LogisticParams p{beta[0], beta[1], beta[2], beta[3]};
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double r = logistic4(pred[i], p, form) - mos[i];
      acc += r * r;
    }
    return acc;
  };

  const double b1 = *std::max_element(mos.begin(), mos.end());
  const double b2 = *std::min_element(mos.begin(), mos.end());
  NelderMeadResult nm = nelder_mead(sse, {b1, b2, mean, std::sqrt(var)});

  LogisticFit fit;
  fit.params = {nm.x[0], nm.x[1], nm.x[2], nm.x[3]};
  fit.form = form;
  fit.converged = nm.converged;
  fit.iterations = nm.iterations;
  fit.rmse = std::sqrt(nm.value / double(n));
  return fit;
}

struct PlccRmse {
  std::optional<double> plcc;
  double rmse = 0.0;
};

inline PlccRmse plcc_rmse(const std::vector<double>& pred,
                          const std::vector<double>& mos,
                          const LogisticParams& params,
                          LogisticForm form = LogisticForm::Standard) {
  detail::check_paired(pred, mos, 2, "plcc_rmse");
  std::vector<double> mapped(pred.size());
  double sse = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    mapped[i] = logistic4(pred[i], params, form);
    const double r = mapped[i] - mos[i];
    sse += r * r;
  }
  PlccRmse out;
  out.plcc = pearson(mapped, mos);
  out.rmse = std::sqrt(sse / double(pred.size()));
  return out;
}

}  // namespace cband
