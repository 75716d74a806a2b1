#pragma once

// Shared fixtures used by both the unit tests and the acceptance suite.

#include <cstdint>
#include <vector>

#include "cband/mlp.hpp"
#include "cband/rng.hpp"

namespace fixtures {

// Overfit-sanity data: D-dimensional features with targets exactly linear in
// the features, scaled so an untrained net starts at L1 loss well above 5
// yet can close the gap within 200 epochs at the stock learning rate.
inline std::vector<cband::LabeledFeatureRow> linear_target_rows(
    size_t n_rows, uint32_t dim, uint64_t seed) {
  cband::Rng rng(seed);
  std::vector<double> coeff(dim);
  for (double& c : coeff) c = rng.uniform(-0.1, 0.1);
  std::vector<cband::LabeledFeatureRow> rows(n_rows);
  for (size_t i = 0; i < n_rows; ++i) {
    rows[i].content_id = int64_t(i);
    rows[i].frame_index = int64_t(i);
    rows[i].features.resize(dim);
    double dot = 0.0;
    for (uint32_t j = 0; j < dim; ++j) {
      rows[i].features[j] = rng.uniform(0.0, 4.0);
      dot += coeff[j] * rows[i].features[j];
    }
    rows[i].target = 10.0 + dot;
  }
  return rows;
}

// Training-set L1 of a model in inference mode.
inline double eval_l1(const cband::MLPModel& model,
                      const std::vector<cband::LabeledFeatureRow>& rows) {
  double sum = 0.0;
  for (const auto& row : rows)
    sum += std::abs(cband::mlp_forward(model, row.features) - row.target);
  return sum / double(rows.size());
}

}  // namespace fixtures
