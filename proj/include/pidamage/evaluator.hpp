#pragma once

// Fleet-level accuracy metrics and the training-set size / distribution sweeps.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "pidamage/damage_cell.hpp"
#include "pidamage/error.hpp"
#include "pidamage/fleet.hpp"
#include "pidamage/trainer.hpp"

namespace pidamage {

struct ScatterPoint {
  double actual = 0.0;
  double predicted = 0.0;
};

// "MAE" has two common readings; both the maximum and the mean absolute error
// are reported.
struct EvalSummary {
  double mse = 0.0;
  double max_abs_error = 0.0;
  double mean_abs_error = 0.0;
  double ratio_min = 0.0;
  double ratio_max = 0.0;
  std::size_t n_planes = 0;
  std::vector<ScatterPoint> scatter;

  // Share of planes whose predicted/actual ratio lies within [1 - tol, 1 + tol].
  double fraction_within(double tol) const {
    if (scatter.empty()) return 0.0;
    std::size_t k = 0;
    for (const auto& p : scatter) k += std::abs(p.predicted / p.actual - 1.0) <= tol ? 1 : 0;
    return static_cast<double>(k) / static_cast<double>(scatter.size());
  }

  friend bool operator==(const EvalSummary& a, const EvalSummary& b) {
    if (a.scatter.size() != b.scatter.size()) return false;
    for (std::size_t i = 0; i < a.scatter.size(); ++i)
      if (a.scatter[i].actual != b.scatter[i].actual ||
          a.scatter[i].predicted != b.scatter[i].predicted)
        return false;
    return a.mse == b.mse && a.max_abs_error == b.max_abs_error &&
           a.mean_abs_error == b.mean_abs_error && a.ratio_min == b.ratio_min &&
           a.ratio_max == b.ratio_max && a.n_planes == b.n_planes;
  }
};

inline EvalSummary evaluate(std::span<const double> predicted, std::span<const double> actual) {
  require(!actual.empty(), "evaluate: need at least one plane");
  require(predicted.size() == actual.size(), "evaluate: length mismatch");
  EvalSummary s;
  s.n_planes = actual.size();
  s.ratio_min = std::numeric_limits<double>::infinity();
  s.ratio_max = -std::numeric_limits<double>::infinity();
  double sq = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    require(actual[i] > 0.0, "evaluate: actual crack lengths must be positive");
    const double e = predicted[i] - actual[i];
    sq += e * e;
    ab += std::abs(e);
    s.max_abs_error = std::max(s.max_abs_error, std::abs(e));
    const double r = predicted[i] / actual[i];
    s.ratio_min = std::min(s.ratio_min, r);
    s.ratio_max = std::max(s.ratio_max, r);
    s.scatter.push_back({actual[i], predicted[i]});
  }
  s.mse = sq / static_cast<double>(actual.size());
  s.mean_abs_error = ab / static_cast<double>(actual.size());
  return s;
}

struct RatioBand {
  std::vector<double> min;  // per cycle, over the fleet
  std::vector<double> max;
};

inline RatioBand ratio_band(std::span<const std::vector<double>> predicted,
                            std::span<const std::vector<double>> actual) {
  require(!actual.empty() && predicted.size() == actual.size(),
          "ratio_band: trajectory sets must be aligned and non-empty");
  const std::size_t len = actual.front().size();
  RatioBand band{std::vector<double>(len, std::numeric_limits<double>::infinity()),
                 std::vector<double>(len, -std::numeric_limits<double>::infinity())};
  for (std::size_t p = 0; p < actual.size(); ++p) {
    require(actual[p].size() == len && predicted[p].size() == len,
            "ratio_band: trajectories must share a length");
    for (std::size_t c = 0; c < len; ++c) {
      const double r = predicted[p][c] / actual[p][c];
      band.min[c] = std::min(band.min[c], r);
      band.max[c] = std::max(band.max[c], r);
    }
  }
  return band;
}

// Share of (plane, cycle) pairs whose ratio lies within [1 - tol, 1 + tol].
inline double trajectory_fraction_within(std::span<const std::vector<double>> predicted,
                                         std::span<const std::vector<double>> actual, double tol) {
  require(!actual.empty() && predicted.size() == actual.size(),
          "trajectory_fraction_within: trajectory sets must be aligned and non-empty");
  std::size_t inside = 0, total = 0;
  for (std::size_t p = 0; p < actual.size(); ++p) {
    require(actual[p].size() == predicted[p].size(),
            "trajectory_fraction_within: trajectories must share a length");
    for (std::size_t c = 0; c < actual[p].size(); ++c) {
      inside += std::abs(predicted[p][c] / actual[p][c] - 1.0) <= tol ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(inside) / static_cast<double>(total);
}

// Trains on `observations` and scores the whole fleet at the inspection time.
inline EvalSummary fit_and_score(const FleetDataset& fleet, std::span<const Inspection> observations,
                                 const HybridSetup& setup, const EpochLogger& log = {}) {
  const FitOutcome fit = fit_hybrid(fleet.histories, observations, setup, log);
  const auto cell = make_hybrid_cell(fit.trained, setup.paris);
  const auto predicted = predict_at(cell, fleet.histories, setup.a0, setup.inspection_cycles);
  return evaluate(predicted, crack_at(fleet.true_crack, setup.inspection_cycles));
}

struct SizeSweepPoint {
  std::size_t n_train = 0;
  double fleet_mse = 0.0;
  EvalSummary summary;
};

// One model per size, each trained on a representative sample drawn from the
// same frozen fleet with the same sampling seed.
inline std::vector<SizeSweepPoint> sweep_train_size(std::span<const std::size_t> sizes,
                                                    const FleetDataset& fleet,
                                                    const HybridSetup& setup,
                                                    std::uint64_t sample_seed,
                                                    const EpochLogger& log = {}) {
  const auto truth = crack_at(fleet.true_crack, setup.inspection_cycles);
  for (std::size_t n : sizes)
    require(n >= 1 && n <= truth.size(), "sweep_train_size: sizes must lie in [1, fleet size]");
  std::vector<SizeSweepPoint> out;
  for (std::size_t n : sizes) {
    const auto obs = sample_inspection(truth, n, InspectionStrategy::Representative, sample_seed);
    EvalSummary s = fit_and_score(fleet, obs, setup, log);
    out.push_back({n, s.mse, std::move(s)});
  }
  return out;
}

struct DistributionSweepPoint {
  InspectionStrategy strategy{};
  EvalSummary summary;
};

inline std::vector<DistributionSweepPoint> sweep_distribution(
    std::size_t n, std::span<const InspectionStrategy> strategies, const FleetDataset& fleet,
    const HybridSetup& setup, std::uint64_t sample_seed, const EpochLogger& log = {}) {
  require(n >= 2, "sweep_distribution: need at least two observations");
  const auto truth = crack_at(fleet.true_crack, setup.inspection_cycles);
  require(n <= truth.size(), "sweep_distribution: n exceeds fleet size");
  std::vector<DistributionSweepPoint> out;
  for (auto st : strategies) {
    const auto obs = sample_inspection(truth, n, st, sample_seed);
    out.push_back({st, fit_and_score(fleet, obs, setup, log)});
  }
  return out;
}

}  // namespace pidamage
