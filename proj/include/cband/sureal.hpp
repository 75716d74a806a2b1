#pragma once

// Maximum-likelihood recovery of subjective scores from a raw opinion table.
// Each rating of stimulus e by subject s is modeled as
//
//   Q_{e,s} ~ N(q_e + b_s, v_s^2 + a_c^2)
//
// where q_e is the stimulus's true quality, b_s the subject's bias, v_s the
// subject's inconsistency, and a_c the ambiguity of the content c the
// stimulus belongs to. Estimation alternates closed-form weighted-mean
// updates for (q_e, b_s) with 1-D Newton updates on the variance scale for
// (v_s^2, a_c^2); every variance step is backtracked against its local
// likelihood so the total log-likelihood never decreases. The model is
// invariant to moving a constant between q and b, so the gauge sum_s b_s = 0
// is enforced after each sweep; planted-value comparisons must use the same
// gauge.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cband/errors.hpp"

namespace cband {

struct Rating {
  std::string subject_id;
  std::string stimulus_id;
  int64_t content_id = 0;
  double score = 0.0;
};

struct RatingsTable {
  std::vector<Rating> entries;
};

struct SurealConfig {
  uint32_t max_iter = 500;
  double tol = 1e-8;
  double v_floor = 1e-3;
  bool with_ambiguity = true;
};

// Estimates are reported against the sorted-unique id lists; ci95 entries
// are half-widths (1.96 times the standard error from the observed-
// information diagonal at the final iterate).
struct MOSEstimate {
  std::vector<std::string> stimulus_ids;
  std::vector<std::string> subject_ids;
  std::vector<int64_t> content_ids;
  std::vector<double> q_e, q_e_ci95;
  std::vector<double> b_s, b_s_ci95;
  std::vector<double> v_s, v_s_ci95;
  std::vector<double> a_c, a_c_ci95;
  double loglik = 0.0;
  std::vector<double> loglik_history;  // one entry per completed sweep
  uint32_t iterations = 0;
  bool converged = false;
  bool numerics_flagged = false;
};

inline std::map<std::string, double> plain_mos(const RatingsTable& ratings) {
  if (ratings.entries.empty())
    throw Error(ErrorKind::EmptyInput, "plain_mos: no ratings");
  std::map<std::string, double> sum;
  std::map<std::string, size_t> count;
  for (const auto& r : ratings.entries) {
    sum[r.stimulus_id] += r.score;
    ++count[r.stimulus_id];
  }
  for (auto& [id, s] : sum) s /= double(count[id]);
  return sum;
}

namespace detail {

struct IndexedRating {
  size_t e = 0;  // stimulus index
  size_t s = 0;  // subject index
  size_t c = 0;  // content index
  double x = 0.0;
};

struct RatingIndex {
  std::vector<std::string> stimulus_ids;
  std::vector<std::string> subject_ids;
  std::vector<int64_t> content_ids;
  std::vector<size_t> stim_content;  // stimulus index -> content index
  std::vector<IndexedRating> ratings;
  std::vector<std::vector<size_t>> by_stimulus;
  std::vector<std::vector<size_t>> by_subject;
  std::vector<std::vector<size_t>> by_content;
};

inline RatingIndex build_rating_index(const RatingsTable& table) {
  if (table.entries.empty())
    throw Error(ErrorKind::EmptyInput, "sureal: no ratings");

  RatingIndex idx;
  for (const auto& r : table.entries) {
    if (!std::isfinite(r.score))
      throw Error(ErrorKind::DataIntegrityError,
                  "sureal: non-finite score for stimulus '" + r.stimulus_id +
                      "' by subject '" + r.subject_id + "'");
    idx.stimulus_ids.push_back(r.stimulus_id);
    idx.subject_ids.push_back(r.subject_id);
    idx.content_ids.push_back(r.content_id);
  }
  auto sort_unique = [](auto& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  sort_unique(idx.stimulus_ids);
  sort_unique(idx.subject_ids);
  sort_unique(idx.content_ids);

  std::unordered_map<std::string, size_t> stim_of, subj_of;
  std::unordered_map<int64_t, size_t> cont_of;
  for (size_t i = 0; i < idx.stimulus_ids.size(); ++i) stim_of[idx.stimulus_ids[i]] = i;
  for (size_t i = 0; i < idx.subject_ids.size(); ++i) subj_of[idx.subject_ids[i]] = i;
  for (size_t i = 0; i < idx.content_ids.size(); ++i) cont_of[idx.content_ids[i]] = i;

  idx.stim_content.assign(idx.stimulus_ids.size(), size_t(-1));
  idx.by_stimulus.resize(idx.stimulus_ids.size());
  idx.by_subject.resize(idx.subject_ids.size());
  idx.by_content.resize(idx.content_ids.size());

  std::set<std::pair<size_t, size_t>> seen_pairs;
  for (const auto& r : table.entries) {
    IndexedRating ir;
    ir.e = stim_of.at(r.stimulus_id);
    ir.s = subj_of.at(r.subject_id);
    ir.c = cont_of.at(r.content_id);
    ir.x = r.score;
    if (!seen_pairs.insert({ir.s, ir.e}).second)
      throw Error(ErrorKind::DataIntegrityError,
                  "sureal: duplicate rating of stimulus '" + r.stimulus_id +
                      "' by subject '" + r.subject_id + "'");
    if (idx.stim_content[ir.e] == size_t(-1)) {
      idx.stim_content[ir.e] = ir.c;
    } else if (idx.stim_content[ir.e] != ir.c) {
      throw Error(ErrorKind::DataIntegrityError,
                  "sureal: stimulus '" + r.stimulus_id +
                      "' is mapped to more than one content");
    }
    const size_t k = idx.ratings.size();
    idx.ratings.push_back(ir);
    idx.by_stimulus[ir.e].push_back(k);
    idx.by_subject[ir.s].push_back(k);
    idx.by_content[ir.c].push_back(k);
  }

  for (size_t s = 0; s < idx.by_subject.size(); ++s)
    if (idx.by_subject[s].size() < 2)
      throw Error(ErrorKind::UnderdeterminedError,
                  "sureal: subject '" + idx.subject_ids[s] +
                      "' rated fewer than 2 stimuli");
  for (size_t e = 0; e < idx.by_stimulus.size(); ++e)
    if (idx.by_stimulus[e].size() < 2)
      throw Error(ErrorKind::UnderdeterminedError,
                  "sureal: stimulus '" + idx.stimulus_ids[e] +
                      "' has fewer than 2 ratings");
  return idx;
}

}  // namespace detail

inline MOSEstimate estimate(const RatingsTable& table,
                            const SurealConfig& cfg = {}) {
  const detail::RatingIndex idx = detail::build_rating_index(table);
  const size_t n_stim = idx.stimulus_ids.size();
  const size_t n_subj = idx.subject_ids.size();
  const size_t n_cont = idx.content_ids.size();
  const double s_floor = cfg.v_floor * cfg.v_floor;

  std::vector<double> q(n_stim, 0.0), b(n_subj, 0.0);
  std::vector<double> sv(n_subj, 1.0);  // v_s^2
  std::vector<double> ta(n_cont, 0.0);  // a_c^2

  // Variance of a single rating, given current parameters.
  auto var_of = [&](const detail::IndexedRating& r) {
    return sv[r.s] + ta[r.c];
  };
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  auto loglik_of = [&]() {
    double ll = 0.0;
    for (const auto& r : idx.ratings) {
      const double var = var_of(r);
      const double d = r.x - q[r.e] - b[r.s];
      ll += -0.5 * (std::log(kTwoPi * var) + d * d / var);
    }
    return ll;
  };

  // Init: plain per-stimulus means, then per-subject residual means and
  // residual variances.
  for (size_t e = 0; e < n_stim; ++e) {
    double sum = 0.0;
    for (size_t k : idx.by_stimulus[e]) sum += idx.ratings[k].x;
    q[e] = sum / double(idx.by_stimulus[e].size());
  }
  for (size_t s = 0; s < n_subj; ++s) {
    double sum = 0.0;
    for (size_t k : idx.by_subject[s]) sum += idx.ratings[k].x - q[idx.ratings[k].e];
    b[s] = sum / double(idx.by_subject[s].size());
  }
  for (size_t s = 0; s < n_subj; ++s) {
    double ss = 0.0;
    for (size_t k : idx.by_subject[s]) {
      const double d = idx.ratings[k].x - q[idx.ratings[k].e] - b[s];
      ss += d * d;
    }
    sv[s] = std::max(ss / double(idx.by_subject[s].size()), s_floor);
  }

  // One backtracked Newton step on a variance component. `local_ll`
  // evaluates the affected likelihood terms as a function of the candidate
  // value; `g` and `h` are the first and second derivatives of that local
  // likelihood with respect to the variance. Returns the accepted value.
  auto variance_step = [](double cur, double floor_val, double g, double h,
                          const std::function<double(double)>& local_ll) {
    double prop;
    if (std::isfinite(h) && h < -1e-300) {
      prop = cur - g / h;
    } else {
      prop = g > 0.0 ? cur * 2.0 : cur * 0.5;  // bracket in ascent direction
    }
    if (!std::isfinite(prop)) prop = cur;
    prop = std::max(prop, floor_val);
    const double base = local_ll(cur);
    for (int halvings = 0; halvings < 60; ++halvings) {
      if (local_ll(prop) >= base - 1e-12) return prop;
      prop = cur + (prop - cur) * 0.5;
    }
    return cur;
  };

  MOSEstimate out;
  out.stimulus_ids = idx.stimulus_ids;
  out.subject_ids = idx.subject_ids;
  out.content_ids = idx.content_ids;

  double best_ll = -std::numeric_limits<double>::infinity();
  std::vector<double> best_q = q, best_b = b, best_sv = sv, best_ta = ta;

  for (uint32_t it = 0; it < cfg.max_iter; ++it) {
    double max_delta = 0.0;
    auto track = [&](double before, double after) {
      max_delta = std::max(max_delta, std::abs(after - before));
    };

    // q_e: exact weighted-mean maximizer given (b, v, a).
    for (size_t e = 0; e < n_stim; ++e) {
      double wsum = 0.0, wx = 0.0;
      for (size_t k : idx.by_stimulus[e]) {
        const auto& r = idx.ratings[k];
        const double w = 1.0 / var_of(r);
        wsum += w;
        wx += w * (r.x - b[r.s]);
      }
      const double next = wx / wsum;
      track(q[e], next);
      q[e] = next;
    }

    // b_s: exact weighted-mean maximizer given (q, v, a).
    for (size_t s = 0; s < n_subj; ++s) {
      double wsum = 0.0, wx = 0.0;
      for (size_t k : idx.by_subject[s]) {
        const auto& r = idx.ratings[k];
        const double w = 1.0 / var_of(r);
        wsum += w;
        wx += w * (r.x - q[r.e]);
      }
      const double next = wx / wsum;
      track(b[s], next);
      b[s] = next;
    }

    // Gauge: sum_s b_s = 0. Shifting the mean from b onto q leaves every
    // fitted mean q_e + b_s (and hence the likelihood) unchanged.
    double mu = 0.0;
    for (double v : b) mu += v / double(n_subj);
    for (double& v : b) v -= mu;
    for (double& v : q) v += mu;

    // v_s^2: damped Newton on the subject's local likelihood.
    for (size_t s = 0; s < n_subj; ++s) {
      double g = 0.0, h = 0.0;
      for (size_t k : idx.by_subject[s]) {
        const auto& r = idx.ratings[k];
        const double var = var_of(r);
        const double d = r.x - q[r.e] - b[r.s];
        const double d2 = d * d;
        g += (d2 - var) / (2.0 * var * var);
        h += (var - 2.0 * d2) / (2.0 * var * var * var);
      }
      auto local_ll = [&](double cand) {
        double ll = 0.0;
        for (size_t k : idx.by_subject[s]) {
          const auto& r = idx.ratings[k];
          const double var = cand + ta[r.c];
          const double d = r.x - q[r.e] - b[r.s];
          ll += -0.5 * (std::log(var) + d * d / var);
        }
        return ll;
      };
      const double next = variance_step(sv[s], s_floor, g, h, local_ll);
      track(std::sqrt(sv[s]), std::sqrt(next));
      sv[s] = next;
    }

    // a_c^2: same scheme per content, floored at zero.
    if (cfg.with_ambiguity) {
      for (size_t c = 0; c < n_cont; ++c) {
        double g = 0.0, h = 0.0;
        for (size_t k : idx.by_content[c]) {
          const auto& r = idx.ratings[k];
          const double var = var_of(r);
          const double d = r.x - q[r.e] - b[r.s];
          const double d2 = d * d;
          g += (d2 - var) / (2.0 * var * var);
          h += (var - 2.0 * d2) / (2.0 * var * var * var);
        }
        auto local_ll = [&](double cand) {
          double ll = 0.0;
          for (size_t k : idx.by_content[c]) {
            const auto& r = idx.ratings[k];
            const double var = sv[r.s] + cand;
            const double d = r.x - q[r.e] - b[r.s];
            ll += -0.5 * (std::log(var) + d * d / var);
          }
          return ll;
        };
        const double next = variance_step(ta[c], 0.0, g, h, local_ll);
        track(std::sqrt(ta[c]), std::sqrt(next));
        ta[c] = next;
      }
    }

    const double ll = loglik_of();
    out.loglik_history.push_back(ll);
    out.iterations = it + 1;

    if (ll >= best_ll) {
      best_ll = ll;
      best_q = q;
      best_b = b;
      best_sv = sv;
      best_ta = ta;
    }
    if (out.loglik_history.size() >= 2 &&
        ll < out.loglik_history[out.loglik_history.size() - 2] - 1e-9) {
      // Should be unreachable given the per-step safeguards; flag and keep
      // the best iterate rather than walking downhill.
      out.numerics_flagged = true;
      break;
    }
    if (max_delta < cfg.tol) {
      out.converged = true;
      break;
    }
  }

  q = best_q;
  b = best_b;
  sv = best_sv;
  ta = best_ta;
  out.loglik = best_ll;

  out.q_e = q;
  out.b_s = b;
  out.v_s.resize(n_subj);
  for (size_t s = 0; s < n_subj; ++s) out.v_s[s] = std::sqrt(sv[s]);
  out.a_c.resize(n_cont);
  for (size_t c = 0; c < n_cont; ++c) out.a_c[c] = std::sqrt(ta[c]);

  // 95% CIs from the observed-information diagonal. For the means the
  // information is the sum of precision weights; for the standard
  // deviations it is the negated second derivative of the likelihood in
  // that scale, guarded so flat directions produce wide-but-finite bands.
  const double z = 1.96;
  const double info_floor = 1e-12;
  out.q_e_ci95.resize(n_stim);
  for (size_t e = 0; e < n_stim; ++e) {
    double wsum = 0.0;
    for (size_t k : idx.by_stimulus[e]) wsum += 1.0 / var_of(idx.ratings[k]);
    out.q_e_ci95[e] = z / std::sqrt(std::max(wsum, info_floor));
  }
  out.b_s_ci95.resize(n_subj);
  for (size_t s = 0; s < n_subj; ++s) {
    double wsum = 0.0;
    for (size_t k : idx.by_subject[s]) wsum += 1.0 / var_of(idx.ratings[k]);
    out.b_s_ci95[s] = z / std::sqrt(std::max(wsum, info_floor));
  }
  auto sd_ci = [&](const std::vector<size_t>& keys, double sd, double other) {
    // d2/d(sd)2 of the local likelihood at variance sd^2 + other terms.
    double hess = 0.0;
    for (size_t k : keys) {
      const auto& r = idx.ratings[k];
      const double var = var_of(r);
      const double d2 = (r.x - q[r.e] - b[r.s]) * (r.x - q[r.e] - b[r.s]);
      const double sd2 = sd * sd;
      hess += (d2 - var) / (var * var) - 2.0 * sd2 / (var * var) -
              4.0 * sd2 * (d2 - var) / (var * var * var);
    }
    (void)other;
    return z / std::sqrt(std::max(-hess, info_floor));
  };
  out.v_s_ci95.resize(n_subj);
  for (size_t s = 0; s < n_subj; ++s)
    out.v_s_ci95[s] = sd_ci(idx.by_subject[s], out.v_s[s], 0.0);
  out.a_c_ci95.resize(n_cont);
  for (size_t c = 0; c < n_cont; ++c)
    out.a_c_ci95[c] = sd_ci(idx.by_content[c], out.a_c[c], 0.0);

  return out;
}

// --- CSV / JSON adapters ---------------------------------------------------------

inline RatingsTable parse_ratings_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  RatingsTable table;
  auto strip_cr = [](std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  };
  if (!std::getline(in, line))
    throw Error(ErrorKind::ParseError, "ratings csv: empty input");
  ++line_no;
  strip_cr(line);
  if (line != "subject_id,stimulus_id,content_id,score")
    throw Error(ErrorKind::ParseError,
                "ratings csv: expected header "
                "'subject_id,stimulus_id,content_id,score', got '" +
                    line + "'");
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 4)
      throw Error(ErrorKind::ParseError,
                  "ratings csv: line " + std::to_string(line_no) +
                      ": expected 4 fields, got " +
                      std::to_string(fields.size()));
    Rating r;
    r.subject_id = fields[0];
    r.stimulus_id = fields[1];
    try {
      size_t used = 0;
      r.content_id = std::stoll(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing");
      r.score = std::stod(fields[3], &used);
      if (used != fields[3].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseError,
                  "ratings csv: line " + std::to_string(line_no) +
                      ": malformed numeric field");
    }
    table.entries.push_back(std::move(r));
  }
  if (table.entries.empty())
    throw Error(ErrorKind::ParseError, "ratings csv: no data rows");
  return table;
}

inline nlohmann::json mos_estimate_json(const MOSEstimate& est) {
  nlohmann::json stimuli = nlohmann::json::array();
  for (size_t e = 0; e < est.stimulus_ids.size(); ++e)
    stimuli.push_back({{"stimulus_id", est.stimulus_ids[e]},
                       {"q_e", est.q_e[e]},
                       {"ci95", est.q_e_ci95[e]}});
  nlohmann::json subjects = nlohmann::json::array();
  for (size_t s = 0; s < est.subject_ids.size(); ++s)
    subjects.push_back({{"subject_id", est.subject_ids[s]},
                        {"b_s", est.b_s[s]},
                        {"b_s_ci95", est.b_s_ci95[s]},
                        {"v_s", est.v_s[s]},
                        {"v_s_ci95", est.v_s_ci95[s]}});
  nlohmann::json contents = nlohmann::json::array();
  for (size_t c = 0; c < est.content_ids.size(); ++c)
    contents.push_back({{"content_id", est.content_ids[c]},
                        {"a_c", est.a_c[c]},
                        {"a_c_ci95", est.a_c_ci95[c]}});
  return nlohmann::json{{"stimuli", stimuli},
                        {"subjects", subjects},
                        {"contents", contents},
                        {"loglik", est.loglik},
                        {"loglik_history", est.loglik_history},
                        {"iterations", est.iterations},
                        {"converged", est.converged},
                        {"numerics_flagged", est.numerics_flagged}};
}

}  // namespace cband
