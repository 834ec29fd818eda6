#pragma once

// Experiment configuration: one JSON document, every field optional, unknown
// keys rejected. The resolved form is written next to every output.

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pidamage/error.hpp"
#include "pidamage/fleet.hpp"
#include "pidamage/io.hpp"
#include "pidamage/trainer.hpp"

namespace pidamage {

struct InspectionConfig {
  std::size_t n = 60;
  InspectionStrategy strategy = InspectionStrategy::Representative;
  std::size_t year = 5;
};

struct SweepConfig {
  std::vector<std::size_t> sizes{5, 15, 30, 45, 60};
  std::size_t distribution_n = 15;
  std::uint64_t sample_seed = 1;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t years = 5;
  std::size_t flights_per_day = 4;
  FleetSpec fleet;
  ParisParams paris;
  double a0 = 0.005;
  double a_max = 0.05;
  InspectionConfig inspection;
  TrainingConfig training;
  std::uint64_t init_seed = 0;
  bool calibrate_output = true;
  WarmStart warm_start;
  SweepConfig sweep;
  std::string output_dir;

  void validate() const {
    auto check = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError(what);
    };
    check(years >= 1, "years must be >= 1");
    check(flights_per_day >= 1, "flights_per_day must be >= 1");
    check(std::isfinite(a0) && a0 > 0.0, "a0 must be positive");
    check(std::isfinite(a_max) && a_max > a0, "a_max must exceed a0");
    check(paris.c > 0.0 && paris.m > 0.0 && paris.f > 0.0, "Paris constants must be positive");
    check(inspection.year >= 1 && inspection.year <= years,
          "inspection.year must lie in [1, years]");
    check(inspection.n >= 1, "inspection.n must be >= 1");
    check(fleet.planes_per_mix >= 1 && !fleet.mixes.empty(), "fleet must contain planes");
    check(inspection.n <= fleet.fleet_size(), "inspection.n exceeds the fleet size");
    for (const auto& m : fleet.missions)
      check(std::isfinite(m.delta_s) && m.delta_s > 0.0, "mission stress ranges must be positive");
    try {
      fleet.validate();
      training.validate();
    } catch (const ContractViolation& e) {
      throw ConfigError(e.what());
    }
    check(warm_start.grid >= 2, "warm_start.grid must be >= 2");
    // Upper bounds depend on the dataset a sweep runs on; see check_sweep().
    for (std::size_t s : sweep.sizes) check(s >= 1, "sweep.sizes must be >= 1");
    check(sweep.distribution_n >= 2, "sweep.distribution_n must be >= 2");
  }

  void check_sweep(std::size_t fleet_size) const {
    for (std::size_t s : sweep.sizes)
      if (s > fleet_size)
        throw ConfigError("sweep size " + std::to_string(s) + " exceeds the dataset's " +
                          std::to_string(fleet_size) + " planes");
    if (sweep.distribution_n > fleet_size)
      throw ConfigError("sweep.distribution_n exceeds the dataset's fleet size");
  }

  FleetOptions fleet_options() const {
    FleetOptions o;
    o.spec = fleet;
    o.seed = seed;
    o.years = years;
    o.flights_per_day = flights_per_day;
    o.paris = paris;
    o.a0 = a0;
    o.a_max = a_max;
    o.inspection_year = inspection.year;
    o.inspection_count = inspection.n;
    o.strategy = inspection.strategy;
    return o;
  }

  // Physical constants come from the dataset so a model is always trained
  // against the physics that generated its data.
  HybridSetup hybrid_setup(const FleetDataset& d) const {
    HybridSetup s;
    s.paris = d.paris;
    s.a0 = d.a0;
    s.a_max = d.a_max;
    s.inspection_cycles = d.inspection_cycles();
    s.init_seed = init_seed;
    s.calibrate_output = calibrate_output;
    s.warm_start = warm_start;
    s.training = training;
    return s;
  }
};

inline nlohmann::json to_json(const TrainingConfig& t) {
  return {{"epochs", t.epochs},
          {"learning_rate", t.learning_rate},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"epsilon", t.epsilon},
          {"seed", t.seed},
          {"log_every", t.log_every},
          {"clip_norm", t.clip_norm},
          {"early_stop_window", t.early_stop_window},
          {"early_stop_tolerance", t.early_stop_tolerance},
          {"threads", t.threads}};
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"seed", c.seed},
          {"years", c.years},
          {"flights_per_day", c.flights_per_day},
          {"fleet", to_json(c.fleet)},
          {"paris", to_json(c.paris)},
          {"a0", c.a0},
          {"a_max", c.a_max},
          {"inspection",
           {{"n", c.inspection.n},
            {"strategy", std::string(to_string(c.inspection.strategy))},
            {"year", c.inspection.year}}},
          {"training", to_json(c.training)},
          {"init_seed", c.init_seed},
          {"calibrate_output", c.calibrate_output},
          {"warm_start",
           {{"enabled", c.warm_start.enabled},
            {"surface_iterations", c.warm_start.surface_iterations},
            {"grid", c.warm_start.grid},
            {"regression_iterations", c.warm_start.regression_iterations}}},
          {"sweep",
           {{"sizes", c.sweep.sizes},
            {"distribution_n", c.sweep.distribution_n},
            {"sample_seed", c.sweep.sample_seed}}},
          {"output_dir", c.output_dir}};
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                           const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::read_if;
  ExperimentConfig c;
  try {
    detail::reject_unknown(j,
                           {"seed", "years", "flights_per_day", "fleet", "paris", "a0", "a_max",
                            "inspection", "training", "init_seed", "calibrate_output",
                            "warm_start", "sweep", "output_dir"},
                           "config");
    read_if(j, "seed", c.seed);
    read_if(j, "years", c.years);
    read_if(j, "flights_per_day", c.flights_per_day);
    if (j.contains("fleet")) {
      detail::reject_unknown(j["fleet"], {"missions", "mixes", "planes_per_mix"}, "fleet");
      FleetSpec merged = c.fleet;
      if (j["fleet"].contains("missions") || j["fleet"].contains("mixes")) {
        nlohmann::json full = to_json(c.fleet);
        full.update(j["fleet"]);
        merged = fleet_spec_from_json(full);
      }
      read_if(j["fleet"], "planes_per_mix", merged.planes_per_mix);
      c.fleet = merged;
    }
    if (j.contains("paris")) {
      const auto& p = j["paris"];
      detail::reject_unknown(p, {"c", "m", "f", "trainable"}, "paris");
      read_if(p, "c", c.paris.c);
      read_if(p, "m", c.paris.m);
      read_if(p, "f", c.paris.f);
      read_if(p, "trainable", c.paris.trainable);
    }
    read_if(j, "a0", c.a0);
    read_if(j, "a_max", c.a_max);
    if (j.contains("inspection")) {
      const auto& i = j["inspection"];
      detail::reject_unknown(i, {"n", "strategy", "year"}, "inspection");
      read_if(i, "n", c.inspection.n);
      read_if(i, "year", c.inspection.year);
      if (i.contains("strategy")) c.inspection.strategy = parse_strategy(i["strategy"].get<std::string>());
    }
    if (j.contains("training")) {
      const auto& t = j["training"];
      detail::reject_unknown(t,
                             {"epochs", "learning_rate", "beta1", "beta2", "epsilon", "seed",
                              "log_every", "clip_norm", "early_stop_window",
                              "early_stop_tolerance", "threads"},
                             "training");
      read_if(t, "epochs", c.training.epochs);
      read_if(t, "learning_rate", c.training.learning_rate);
      read_if(t, "beta1", c.training.beta1);
      read_if(t, "beta2", c.training.beta2);
      read_if(t, "epsilon", c.training.epsilon);
      read_if(t, "seed", c.training.seed);
      read_if(t, "log_every", c.training.log_every);
      read_if(t, "clip_norm", c.training.clip_norm);
      read_if(t, "early_stop_window", c.training.early_stop_window);
      read_if(t, "early_stop_tolerance", c.training.early_stop_tolerance);
      read_if(t, "threads", c.training.threads);
    }
    read_if(j, "init_seed", c.init_seed);
    read_if(j, "calibrate_output", c.calibrate_output);
    if (j.contains("warm_start")) {
      const auto& w = j["warm_start"];
      detail::reject_unknown(w, {"enabled", "surface_iterations", "grid", "regression_iterations"},
                             "warm_start");
      read_if(w, "enabled", c.warm_start.enabled);
      read_if(w, "surface_iterations", c.warm_start.surface_iterations);
      read_if(w, "grid", c.warm_start.grid);
      read_if(w, "regression_iterations", c.warm_start.regression_iterations);
    }
    if (j.contains("sweep")) {
      const auto& s = j["sweep"];
      detail::reject_unknown(s, {"sizes", "distribution_n", "sample_seed"}, "sweep");
      read_if(s, "sizes", c.sweep.sizes);
      read_if(s, "distribution_n", c.sweep.distribution_n);
      read_if(s, "sample_seed", c.sweep.sample_seed);
    }
    read_if(j, "output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  // The training seed and the initialization seed are one knob.
  c.training.seed = c.init_seed;
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
  return config_from_json(read_json<ConfigError>(path));
}

}  // namespace pidamage
