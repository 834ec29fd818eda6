#pragma once

// Synthetic fleet: mission mixes, per-flight stress histories, ground-truth
// crack trajectories from the physics cell, and inspection subsets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pidamage/damage_cell.hpp"
#include "pidamage/error.hpp"
#include "pidamage/random.hpp"

namespace pidamage {

inline constexpr std::size_t kDaysPerYear = 365;

struct Mission {
  int id = 0;
  double delta_s = 0.0;  // MPa
};

struct MissionMix {
  int id = 0;
  std::array<int, 2> missions{};  // first mission is flown with probability `fraction`
};

struct FleetSpec {
  std::vector<Mission> missions{{0, 92.5}, {1, 100.0}, {2, 110.0}, {3, 130.0}};
  std::vector<MissionMix> mixes{{0, {0, 3}}, {1, {1, 2}}, {2, {1, 3}}};
  std::size_t planes_per_mix = 100;

  double stress_of(int mission) const {
    for (const auto& m : missions)
      if (m.id == mission) return m.delta_s;
    throw ContractViolation("FleetSpec: unknown mission id " + std::to_string(mission));
  }

  void validate() const {
    require(!missions.empty() && !mixes.empty(), "FleetSpec: missions and mixes required");
    require(planes_per_mix >= 1, "FleetSpec: at least one plane per mix");
    for (const auto& m : missions)
      require(std::isfinite(m.delta_s) && m.delta_s >= 0.0, "FleetSpec: stress ranges must be >= 0");
    for (const auto& mix : mixes)
      for (int id : mix.missions) (void)stress_of(id);
  }

  std::size_t fleet_size() const { return planes_per_mix * mixes.size(); }
};

struct Airplane {
  std::size_t id = 0;
  std::size_t mix = 0;
  double fraction = 0.0;  // share of flights on the mix's first mission
};

struct Inspection {
  std::size_t plane_id = 0;
  double crack = 0.0;  // m
};

enum class InspectionStrategy { Representative, LowBiased, WideSpread, HighBiased };

inline constexpr std::array<InspectionStrategy, 4> kAllStrategies{
    InspectionStrategy::LowBiased, InspectionStrategy::Representative,
    InspectionStrategy::WideSpread, InspectionStrategy::HighBiased};

inline std::string_view to_string(InspectionStrategy s) {
  switch (s) {
    case InspectionStrategy::Representative: return "representative";
    case InspectionStrategy::LowBiased: return "low_biased";
    case InspectionStrategy::WideSpread: return "wide_spread";
    case InspectionStrategy::HighBiased: return "high_biased";
  }
  return "?";
}

inline InspectionStrategy parse_strategy(std::string_view s) {
  for (auto st : kAllStrategies)
    if (to_string(st) == s) return st;
  throw ConfigError("unknown inspection strategy '" + std::string(s) + "'");
}

// Cohorts of planes_per_mix planes per mix; within a cohort the first-mission
// share runs over an even grid from 0 to 1 inclusive. The seed is accepted for
// interface symmetry only: the grid itself is deterministic.
inline std::vector<Airplane> build_fleet(std::uint64_t /*seed*/, const FleetSpec& spec = {}) {
  spec.validate();
  std::vector<Airplane> planes;
  planes.reserve(spec.fleet_size());
  const std::size_t n = spec.planes_per_mix;
  for (std::size_t mix = 0; mix < spec.mixes.size(); ++mix)
    for (std::size_t k = 0; k < n; ++k) {
      const double fraction = n == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n - 1);
      planes.push_back({planes.size(), mix, fraction});
    }
  return planes;
}

inline std::size_t cycles_for(std::size_t years, std::size_t flights_per_day) {
  return flights_per_day * kDaysPerYear * years;
}

// Each flight independently flies the mix's first mission with probability
// `fraction`, else the second.
inline std::vector<double> generate_history(const Airplane& plane, const FleetSpec& spec,
                                            std::size_t years, std::size_t flights_per_day,
                                            std::uint64_t seed) {
  require(years >= 1, "generate_history: years must be >= 1");
  require(flights_per_day >= 1, "generate_history: flights_per_day must be >= 1");
  require(plane.mix < spec.mixes.size(), "generate_history: unknown mission mix");
  const auto& mix = spec.mixes[plane.mix];
  const double first = spec.stress_of(mix.missions[0]);
  const double second = spec.stress_of(mix.missions[1]);
  Rng rng(seed);
  std::vector<double> h(cycles_for(years, flights_per_day));
  for (double& s : h) s = rng.bernoulli(plane.fraction) ? first : second;
  return h;
}

inline std::uint64_t plane_seed(std::uint64_t master, std::size_t plane_id) {
  return mix_seed(master, plane_id);
}

inline std::vector<std::vector<double>> generate_histories(std::span<const Airplane> planes,
                                                           const FleetSpec& spec, std::size_t years,
                                                           std::size_t flights_per_day,
                                                           std::uint64_t master_seed) {
  std::vector<std::vector<double>> out;
  out.reserve(planes.size());
  for (const auto& p : planes)
    out.push_back(generate_history(p, spec, years, flights_per_day, plane_seed(master_seed, p.id)));
  return out;
}

// Ground truth: the physics cell unrolled over each history. Entry t of a
// trajectory is the crack length after cycle t.
inline std::vector<std::vector<double>> simulate_truth(
    std::span<const std::vector<double>> histories, const ParisParams& p, double a0) {
  require(!histories.empty(), "simulate_truth: no histories");
  const auto cell = make_physics_cell(p);
  std::vector<std::vector<double>> out;
  out.reserve(histories.size());
  for (const auto& h : histories) {
    std::vector<double> traj;
    traj.reserve(h.size());
    for (const auto& s : cell.unroll(a0, h)) traj.push_back(s.a);
    if (!traj.empty() && !std::isfinite(traj.back()))
      throw NumericalError("simulate_truth: crack growth diverged for plane " +
                           std::to_string(out.size()));
    out.push_back(std::move(traj));
  }
  return out;
}

// Crack length of every plane after `cycles` cycles.
inline std::vector<double> crack_at(std::span<const std::vector<double>> trajectories,
                                    std::size_t cycles) {
  require(cycles >= 1, "crack_at: cycles must be >= 1");
  std::vector<double> out;
  out.reserve(trajectories.size());
  for (const auto& t : trajectories) {
    require(t.size() >= cycles, "crack_at: trajectory shorter than requested cycle");
    out.push_back(t[cycles - 1]);
  }
  return out;
}

// Rank-based selection over the planes' true inspection-time cracks. Returned
// inspections are ordered by plane id.
inline std::vector<Inspection> sample_inspection(std::span<const double> cracks, std::size_t n,
                                                 InspectionStrategy strategy, std::uint64_t seed) {
  const std::size_t total = cracks.size();
  require(n >= 1 && n <= total, "sample_inspection: n must be in [1, fleet size]");
  std::vector<std::size_t> rank(total);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::stable_sort(rank.begin(), rank.end(),
                   [&](std::size_t a, std::size_t b) { return cracks[a] < cracks[b]; });

  std::vector<std::size_t> picked;
  picked.reserve(n);
  switch (strategy) {
    case InspectionStrategy::LowBiased:
      picked.assign(rank.begin(), rank.begin() + static_cast<std::ptrdiff_t>(n));
      break;
    case InspectionStrategy::HighBiased:
      picked.assign(rank.end() - static_cast<std::ptrdiff_t>(n), rank.end());
      break;
    case InspectionStrategy::WideSpread:
      if (n == 1) {
        picked.push_back(rank[(total - 1) / 2]);
      } else {
        for (std::size_t i = 0; i < n; ++i) {
          const double pos = static_cast<double>(i) * static_cast<double>(total - 1) /
                             static_cast<double>(n - 1);
          picked.push_back(rank[static_cast<std::size_t>(std::llround(pos))]);
        }
      }
      break;
    case InspectionStrategy::Representative: {
      Rng rng(seed);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i * total / n;
        const std::size_t hi = (i + 1) * total / n;
        picked.push_back(rank[lo + rng.below(hi - lo)]);
      }
      break;
    }
  }
  std::sort(picked.begin(), picked.end());
  std::vector<Inspection> out;
  out.reserve(n);
  for (std::size_t id : picked) out.push_back({id, cracks[id]});
  return out;
}

// Proportion of the fleet with crack >= a_th after each cycle.
inline std::vector<double> unreliability_curve(std::span<const std::vector<double>> trajectories,
                                               double a_th) {
  require(!trajectories.empty(), "unreliability_curve: no trajectories");
  const std::size_t len = trajectories.front().size();
  for (const auto& t : trajectories)
    require(t.size() == len, "unreliability_curve: trajectories must share a length");
  std::vector<double> out(len, 0.0);
  for (std::size_t c = 0; c < len; ++c) {
    std::size_t count = 0;
    for (const auto& t : trajectories) count += t[c] >= a_th ? 1 : 0;
    out[c] = static_cast<double>(count) / static_cast<double>(trajectories.size());
  }
  return out;
}

struct FleetDataset {
  FleetSpec spec;
  std::uint64_t seed = 0;
  std::size_t years = 5;
  std::size_t flights_per_day = 4;
  ParisParams paris;
  double a0 = 0.005;
  double a_max = 0.05;
  std::size_t inspection_year = 5;
  InspectionStrategy strategy = InspectionStrategy::Representative;

  std::vector<Airplane> airplanes;
  std::vector<std::vector<double>> histories;
  std::vector<std::vector<double>> true_crack;
  std::vector<Inspection> inspections;

  std::size_t inspection_cycles() const { return cycles_for(inspection_year, flights_per_day); }
  std::vector<double> inspection_truth() const { return crack_at(true_crack, inspection_cycles()); }
};

struct FleetOptions {
  FleetSpec spec;
  std::uint64_t seed = 0;
  std::size_t years = 5;
  std::size_t flights_per_day = 4;
  ParisParams paris;
  double a0 = 0.005;
  double a_max = 0.05;
  std::size_t inspection_year = 5;
  std::size_t inspection_count = 60;
  InspectionStrategy strategy = InspectionStrategy::Representative;
};

// Everything downstream of the master seed: per-plane histories use
// plane_seed(seed, id) and the inspection draw uses a separate stream.
inline FleetDataset make_fleet_dataset(const FleetOptions& o) {
  o.paris.validate();
  require(o.a0 > 0.0 && o.a0 < o.a_max, "make_fleet_dataset: need 0 < a0 < a_max");
  require(o.inspection_year >= 1 && o.inspection_year <= o.years,
          "make_fleet_dataset: inspection year must lie within the simulated years");
  FleetDataset d;
  d.spec = o.spec;
  d.seed = o.seed;
  d.years = o.years;
  d.flights_per_day = o.flights_per_day;
  d.paris = o.paris;
  d.a0 = o.a0;
  d.a_max = o.a_max;
  d.inspection_year = o.inspection_year;
  d.strategy = o.strategy;
  d.airplanes = build_fleet(o.seed, o.spec);
  d.histories = generate_histories(d.airplanes, o.spec, o.years, o.flights_per_day, o.seed);
  d.true_crack = simulate_truth(d.histories, o.paris, o.a0);
  d.inspections = sample_inspection(d.inspection_truth(), o.inspection_count, o.strategy,
                                    mix_seed(o.seed, std::numeric_limits<std::uint32_t>::max()));
  return d;
}

}  // namespace pidamage
