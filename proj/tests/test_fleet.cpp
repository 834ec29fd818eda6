#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "pidamage/fleet.hpp"

using namespace pidamage;

namespace {

FleetOptions small_options(std::size_t per_mix = 10, std::size_t years = 1) {
  FleetOptions o;
  o.spec.planes_per_mix = per_mix;
  o.years = years;
  o.inspection_year = years;
  o.inspection_count = 5;
  o.seed = 7;
  return o;
}

// Percentile by nearest rank on a sorted copy.
double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[k == 0 ? 0 : k - 1];
}

}  // namespace

TEST(Fleet, DefaultFleetHasThreeCohortsOfOneHundred) {
  const auto planes = build_fleet(0);
  ASSERT_EQ(planes.size(), 300u);
  for (std::size_t i = 0; i < planes.size(); ++i) {
    EXPECT_EQ(planes[i].id, i);
    EXPECT_EQ(planes[i].mix, i / 100);
  }
  EXPECT_EQ(planes[0].fraction, 0.0);
  EXPECT_EQ(planes[99].fraction, 1.0);
  EXPECT_DOUBLE_EQ(planes[33].fraction, 33.0 / 99.0);
}

TEST(Fleet, MissionTableMatchesDefaults) {
  const FleetSpec spec;
  EXPECT_EQ(spec.stress_of(0), 92.5);
  EXPECT_EQ(spec.stress_of(1), 100.0);
  EXPECT_EQ(spec.stress_of(2), 110.0);
  EXPECT_EQ(spec.stress_of(3), 130.0);
  EXPECT_THROW(spec.stress_of(9), ContractViolation);
}

TEST(Fleet, OneYearIs1460Cycles) {
  EXPECT_EQ(cycles_for(1, 4), 1460u);
  EXPECT_EQ(cycles_for(5, 4), 7300u);
}

TEST(Fleet, HistoriesOnlyUseTheirMixStresses) {
  const FleetSpec spec;
  const auto planes = build_fleet(0, spec);
  const auto hist = generate_histories(planes, spec, 1, 4, 3);
  for (const auto& p : planes) {
    const auto& mix = spec.mixes[p.mix];
    const std::set<double> allowed{spec.stress_of(mix.missions[0]), spec.stress_of(mix.missions[1])};
    ASSERT_EQ(hist[p.id].size(), 1460u);
    for (double s : hist[p.id]) ASSERT_TRUE(allowed.count(s)) << "plane " << p.id;
  }
}

TEST(Fleet, EndpointFractionsGiveConstantHistories) {
  const FleetSpec spec;
  const auto planes = build_fleet(0, spec);
  const auto hist = generate_histories(planes, spec, 1, 4, 3);
  for (double s : hist[0]) EXPECT_EQ(s, 130.0);   // fraction 0: second mission only
  for (double s : hist[99]) EXPECT_EQ(s, 92.5);   // fraction 1: first mission only
}

TEST(Fleet, MissionShareTracksFraction) {
  const FleetSpec spec;
  const auto planes = build_fleet(0, spec);
  const auto h = generate_history(planes[150], spec, 5, 4, 11);
  const double share =
      static_cast<double>(std::count(h.begin(), h.end(), 100.0)) / static_cast<double>(h.size());
  const double f = planes[150].fraction;
  EXPECT_NEAR(share, f, 4.0 * std::sqrt(f * (1 - f) / static_cast<double>(h.size())));
}

TEST(Fleet, SeedsDetermineHistories) {
  const FleetSpec spec;
  const auto planes = build_fleet(0, spec);
  EXPECT_EQ(generate_histories(planes, spec, 1, 4, 5), generate_histories(planes, spec, 1, 4, 5));
  EXPECT_NE(generate_histories(planes, spec, 1, 4, 5), generate_histories(planes, spec, 1, 4, 6));
}

TEST(Fleet, TruthMatchesIndependentLoop) {
  const auto d = make_fleet_dataset(small_options());
  for (std::size_t p : {0u, 7u, 15u, 29u}) {
    double a = d.a0;
    for (std::size_t t = 0; t < d.histories[p].size(); ++t) {
      a += 1.5e-11 * std::pow(oracle::stress_intensity<double>(1.0, d.histories[p][t], a), 3.8);
      ASSERT_NEAR(d.true_crack[p][t], a, 1e-15) << "plane " << p << " cycle " << t;
    }
  }
}

TEST(Fleet, FiveYearCracksStayBelowCriticalLength) {
  const auto d = make_fleet_dataset(FleetOptions{});
  const auto truth = d.inspection_truth();
  ASSERT_EQ(truth.size(), 300u);
  for (double a : truth) {
    EXPECT_GT(a, d.a0);
    EXPECT_LT(a, d.a_max);
  }
  // All-130 MPa is the most damaging history in the fleet.
  EXPECT_EQ(*std::max_element(truth.begin(), truth.end()), truth[0]);
}

TEST(Inspection, LowBiasedTakesSmallestCracks) {
  const auto d = make_fleet_dataset(FleetOptions{});
  const auto truth = d.inspection_truth();
  const auto obs = sample_inspection(truth, 15, InspectionStrategy::LowBiased, 1);
  ASSERT_EQ(obs.size(), 15u);
  const double p5 = percentile(truth, 0.05);
  for (const auto& o : obs) EXPECT_LE(o.crack, p5);
}

TEST(Inspection, HighBiasedTakesLargestCracks) {
  const auto d = make_fleet_dataset(FleetOptions{});
  const auto truth = d.inspection_truth();
  const auto obs = sample_inspection(truth, 15, InspectionStrategy::HighBiased, 1);
  const double p95 = percentile(truth, 0.95);
  for (const auto& o : obs) EXPECT_GE(o.crack, p95);
}

TEST(Inspection, RepresentativeHasOnePerQuantileBin) {
  const auto d = make_fleet_dataset(FleetOptions{});
  const auto truth = d.inspection_truth();
  std::vector<double> sorted = truth;
  std::sort(sorted.begin(), sorted.end());
  const auto obs = sample_inspection(truth, 60, InspectionStrategy::Representative, 3);
  std::vector<int> bins(60, 0);
  for (const auto& o : obs) {
    const auto rank = static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), o.crack) - sorted.begin());
    ++bins[rank * 60 / 300];
  }
  for (int b : bins) EXPECT_EQ(b, 1);
}

TEST(Inspection, WideSpreadIncludesExtremes) {
  const auto d = make_fleet_dataset(FleetOptions{});
  const auto truth = d.inspection_truth();
  const auto obs = sample_inspection(truth, 15, InspectionStrategy::WideSpread, 1);
  double lo = 1.0, hi = 0.0;
  for (const auto& o : obs) {
    lo = std::min(lo, o.crack);
    hi = std::max(hi, o.crack);
  }
  EXPECT_EQ(lo, *std::min_element(truth.begin(), truth.end()));
  EXPECT_EQ(hi, *std::max_element(truth.begin(), truth.end()));
}

TEST(Inspection, WholeFleetMakesAllStrategiesIdentical) {
  const auto d = make_fleet_dataset(FleetOptions{});
  const auto truth = d.inspection_truth();
  const auto ref = sample_inspection(truth, 300, InspectionStrategy::Representative, 1);
  for (auto st : kAllStrategies) {
    const auto obs = sample_inspection(truth, 300, st, 99);
    ASSERT_EQ(obs.size(), ref.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
      EXPECT_EQ(obs[i].plane_id, ref[i].plane_id);
      EXPECT_EQ(obs[i].crack, ref[i].crack);
    }
  }
}

TEST(Inspection, ObservationsAreDistinctSortedAndExact) {
  const auto d = make_fleet_dataset(FleetOptions{});
  const auto truth = d.inspection_truth();
  for (auto st : kAllStrategies) {
    const auto obs = sample_inspection(truth, 45, st, 4);
    for (std::size_t i = 0; i < obs.size(); ++i) {
      EXPECT_EQ(obs[i].crack, truth[obs[i].plane_id]);
      if (i > 0) {
        EXPECT_LT(obs[i - 1].plane_id, obs[i].plane_id);
      }
    }
  }
}

TEST(Inspection, OutOfRangeCountIsAContractViolation) {
  const std::vector<double> c{0.01, 0.02};
  EXPECT_THROW(sample_inspection(c, 0, InspectionStrategy::LowBiased, 0), ContractViolation);
  EXPECT_THROW(sample_inspection(c, 3, InspectionStrategy::LowBiased, 0), ContractViolation);
}

TEST(Inspection, StrategyNamesRoundTrip) {
  for (auto st : kAllStrategies) EXPECT_EQ(parse_strategy(to_string(st)), st);
  EXPECT_THROW(parse_strategy("uniform"), ConfigError);
}

TEST(Unreliability, CurveIsMonotoneAndBounded) {
  const auto d = make_fleet_dataset(FleetOptions{});
  const auto curve = unreliability_curve(d.true_crack, 0.02);
  ASSERT_EQ(curve.size(), 7300u);
  for (std::size_t c = 0; c < curve.size(); ++c) {
    EXPECT_GE(curve[c], 0.0);
    EXPECT_LE(curve[c], 1.0);
    if (c > 0) {
      EXPECT_GE(curve[c], curve[c - 1]);
    }
  }
  EXPECT_EQ(curve.front(), 0.0);
}

TEST(Unreliability, ThresholdAtInitialCrackCountsEveryPlane) {
  const std::vector<std::vector<double>> t{{0.01, 0.02}, {0.005, 0.006}};
  const auto curve = unreliability_curve(t, 0.01);
  EXPECT_EQ(curve, (std::vector<double>{0.5, 0.5}));
}

TEST(Dataset, SameOptionsGiveIdenticalDatasets) {
  const auto a = make_fleet_dataset(small_options());
  const auto b = make_fleet_dataset(small_options());
  EXPECT_EQ(a.histories, b.histories);
  EXPECT_EQ(a.true_crack, b.true_crack);
  ASSERT_EQ(a.inspections.size(), b.inspections.size());
  for (std::size_t i = 0; i < a.inspections.size(); ++i)
    EXPECT_EQ(a.inspections[i].plane_id, b.inspections[i].plane_id);
}

TEST(Dataset, InspectionYearMustBeSimulated) {
  FleetOptions o = small_options();
  o.inspection_year = 2;
  EXPECT_THROW(make_fleet_dataset(o), ContractViolation);
}
