// pidamage: generate a synthetic fleet, train the hybrid cell on its
// inspections, and emit evaluation tables.
//
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical failure.
// PIDAMAGE_LOG=0|1|2 sets stderr verbosity (default 1).

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pidamage/pidamage.hpp"

namespace {

using namespace pidamage;

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4 };

int verbosity() {
  const char* v = std::getenv("PIDAMAGE_LOG");
  return v ? std::atoi(v) : 1;
}

template <class... Args>
void info(const char* fmt, Args... args) {
  if (verbosity() >= 1) {
    std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
  }
}

EpochLogger epoch_logger() {
  if (verbosity() < 2) return {};
  return [](std::size_t epoch, double loss, double gnorm) {
    std::fprintf(stderr, "  epoch %zu  loss %.6e  |g| %.3e\n", epoch, loss, gnorm);
  };
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

// Flags shared by every subcommand; set only when given on the command line.
struct Overrides {
  std::optional<std::uint64_t> seed, init_seed;
  std::optional<std::size_t> years, inspections, epochs, threads, planes_per_mix, n;
  std::optional<double> learning_rate;
  std::optional<std::string> strategy;
  std::vector<std::size_t> sizes;
};

template <class T>
void flag(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

ExperimentConfig resolve(const std::string& config_path, const Overrides& o) {
  ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
  nlohmann::json j = to_json(c);
  if (o.seed) j["seed"] = *o.seed;
  if (o.init_seed) j["init_seed"] = *o.init_seed;
  if (o.years) j["years"] = *o.years;
  if (o.inspections) j["inspection"]["n"] = *o.inspections;
  if (o.strategy) j["inspection"]["strategy"] = *o.strategy;
  if (o.planes_per_mix) j["fleet"]["planes_per_mix"] = *o.planes_per_mix;
  if (o.epochs) j["training"]["epochs"] = *o.epochs;
  if (o.learning_rate) j["training"]["learning_rate"] = *o.learning_rate;
  if (o.threads) j["training"]["threads"] = *o.threads;
  if (o.n) j["sweep"]["distribution_n"] = *o.n;
  if (!o.sizes.empty()) j["sweep"]["sizes"] = o.sizes;
  return config_from_json(j);
}

void echo_config(const ExperimentConfig& c, const fs::path& dir) {
  write_json(dir / "config.json", to_json(c));
}

int cmd_generate(const std::string& config_path, const fs::path& out, const Overrides& o) {
  ExperimentConfig c = resolve(config_path, o);
  c.output_dir = out.string();
  ensure_dir(out);
  const FleetDataset d = make_fleet_dataset(c.fleet_options());
  save_dataset(d, out);
  echo_config(c, out);
  info("generated %zu planes x %zu cycles, %zu inspections -> %s", d.histories.size(),
       d.histories.front().size(), d.inspections.size(), out.string().c_str());
  return kOk;
}

nlohmann::json report_json(const TrainReport& r, const ExperimentConfig& c, const std::string& hash,
                           double final_loss) {
  return {{"loss_history", r.loss_history},
          {"grad_norm_history", r.grad_norm_history},
          {"epochs_run", r.loss_history.size()},
          {"clip_events", r.clip_events},
          {"early_stopped", r.early_stopped},
          {"final_training_mse", final_loss},
          {"seed", c.init_seed},
          {"manifest_hash", hash},
          {"config", to_json(c)}};
}

int cmd_train(const std::string& config_path, const fs::path& data, const fs::path& out,
              const Overrides& o) {
  ExperimentConfig c = resolve(config_path, o);
  c.output_dir = out.string();
  const FleetDataset d = load_dataset(data);
  const std::string hash = manifest_hash(manifest_json(d));
  ensure_dir(out);
  const HybridSetup setup = c.hybrid_setup(d);
  info("training on %zu inspections, %zu epochs", d.inspections.size(), c.training.epochs);
  const FitOutcome fit = fit_hybrid(d.histories, d.inspections, setup, epoch_logger());

  const auto cell = make_hybrid_cell(fit.trained, setup.paris);
  std::vector<double> observed;
  for (const auto& i : d.inspections) observed.push_back(i.crack);
  const auto samples = training_samples(d.histories, d.inspections, setup.inspection_cycles);
  std::vector<double> predicted;
  for (const auto& s : samples) predicted.push_back(cell.final_crack(setup.a0, s.history));
  const double final_loss = mse_loss(predicted, observed);

  write_json(out / "checkpoint.json", checkpoint_json(fit.trained, hash));
  write_json(out / "checkpoint_initial.json", checkpoint_json(fit.initial, hash));
  write_json(out / "checkpoint_untrained.json", checkpoint_json(fit.untrained, hash));
  write_json(out / "report.json", report_json(fit.report, c, hash, final_loss));
  echo_config(c, out);
  info("trained: %zu epochs, training mse %.4e m^2 (%.1f s)", fit.report.loss_history.size(),
       final_loss, fit.report.wall_time);
  return kOk;
}

Checkpoint checked_checkpoint(const fs::path& path, const FleetDataset& d) {
  Checkpoint ck = load_checkpoint(path);
  const std::string hash = manifest_hash(manifest_json(d));
  if (!ck.manifest_hash.empty() && ck.manifest_hash != hash)
    throw DataError("manifest mismatch: checkpoint was trained on " + ck.manifest_hash +
                    ", dataset is " + hash);
  return ck;
}

void log_summary(const char* tag, const EvalSummary& s) {
  info("%s: mse %.4e m^2, max |err| %.4e m, mean |err| %.4e m, ratio [%.4f, %.4f], within 15%% %.3f",
       tag, s.mse, s.max_abs_error, s.mean_abs_error, s.ratio_min, s.ratio_max,
       s.fraction_within(0.15));
}

nlohmann::json metrics_json(const EvalSummary& s) {
  return {{"mse", s.mse},
          {"max_abs_error", s.max_abs_error},
          {"mean_abs_error", s.mean_abs_error},
          {"ratio_min", s.ratio_min},
          {"ratio_max", s.ratio_max},
          {"n_planes", s.n_planes},
          {"fraction_within_15pct", s.fraction_within(0.15)}};
}

void figure_scatter(const Checkpoint& ck, const fs::path& ck_path, const FleetDataset& d,
                    const fs::path& out) {
  const auto truth = d.inspection_truth();
  auto score = [&](const MlpNetwork& net) {
    const auto cell = make_hybrid_cell(net, d.paris);
    return evaluate(predict_at(cell, d.histories, d.a0, d.inspection_cycles()), truth);
  };
  const EvalSummary after = score(ck.network);
  log_summary("after training", after);
  nlohmann::json metrics = {{"after", metrics_json(after)}};
  std::optional<EvalSummary> before;
  const fs::path untrained = ck_path.parent_path() / "checkpoint_untrained.json";
  if (fs::exists(untrained) && fs::absolute(untrained) != fs::absolute(ck_path)) {
    before = score(checked_checkpoint(untrained, d).network);
    log_summary("before training", *before);
    metrics["before"] = metrics_json(*before);
  }
  write_scatter(out / "scatter.csv", before ? &*before : nullptr, after);
  write_json(out / "metrics.json", metrics);
  update_index(out, "scatter", "scatter.csv");
  update_index(out, "metrics", "metrics.json");
}

void figure_ratio(const Checkpoint& ck, const FleetDataset& d, const fs::path& out) {
  const auto cell = make_hybrid_cell(ck.network, d.paris);
  const auto pred = predict_fleet(cell, d.histories, d.a0);
  write_ratio_band(out / "ratio.csv", ratio_band(pred, d.true_crack));
  info("ratio band: %.4f of (plane, cycle) pairs within 15%%",
       trajectory_fraction_within(pred, d.true_crack, 0.15));
  update_index(out, "ratio", "ratio.csv");
}

void figure_unreliability(const Checkpoint& ck, const FleetDataset& d,
                          const std::vector<double>& thresholds, const fs::path& out) {
  const auto cell = make_hybrid_cell(ck.network, d.paris);
  const auto pred = predict_fleet(cell, d.histories, d.a0);
  std::vector<UnreliabilitySeries> predicted, actual;
  for (double a_th : thresholds) {
    if (!(a_th > 0.0)) throw ConfigError("--a-th must be positive");
    predicted.push_back({a_th, unreliability_curve(pred, a_th)});
    actual.push_back({a_th, unreliability_curve(d.true_crack, a_th)});
  }
  write_unreliability(out / "unreliability.csv", predicted);
  write_unreliability(out / "unreliability_truth.csv", actual);
  update_index(out, "unreliability", "unreliability.csv");
  update_index(out, "unreliability_truth", "unreliability_truth.csv");
}

void figure_size_sweep(const ExperimentConfig& c, const FleetDataset& d, const fs::path& out) {
  c.check_sweep(d.airplanes.size());
  const auto pts = sweep_train_size(c.sweep.sizes, d, c.hybrid_setup(d), c.sweep.sample_seed,
                                    epoch_logger());
  for (const auto& p : pts) info("n=%zu: fleet mse %.4e", p.n_train, p.fleet_mse);
  write_size_sweep(out / "size_sweep.csv", pts);
  update_index(out, "size_sweep", "size_sweep.csv");
}

void figure_distribution_sweep(const ExperimentConfig& c, const FleetDataset& d,
                               const fs::path& out) {
  c.check_sweep(d.airplanes.size());
  const auto pts = sweep_distribution(c.sweep.distribution_n, kAllStrategies, d,
                                      c.hybrid_setup(d), c.sweep.sample_seed, epoch_logger());
  for (const auto& p : pts)
    info("%s: fleet mse %.4e", std::string(to_string(p.strategy)).c_str(), p.summary.mse);
  write_distribution_sweep(out / "distribution_sweep.csv", pts);
  update_index(out, "distribution_sweep", "distribution_sweep.csv");
}

int cmd_evaluate(const fs::path& ck_path, const fs::path& data, const std::string& figure,
                 const std::vector<double>& thresholds, fs::path out, const std::string& config_path,
                 const Overrides& o) {
  ExperimentConfig c = resolve(config_path, o);
  const FleetDataset d = load_dataset(data);
  const Checkpoint ck = checked_checkpoint(ck_path, d);
  if (out.empty()) out = ck_path.parent_path().empty() ? fs::path(".") : ck_path.parent_path();
  c.output_dir = out.string();
  ensure_dir(out);
  const std::vector<double> a_th = thresholds.empty() ? std::vector<double>{d.a_max} : thresholds;

  if (figure == "scatter") {
    figure_scatter(ck, ck_path, d, out);
  } else if (figure == "ratio") {
    figure_ratio(ck, d, out);
  } else if (figure == "unreliability") {
    figure_unreliability(ck, d, a_th, out);
  } else if (figure == "size_sweep") {
    figure_size_sweep(c, d, out);
  } else if (figure == "distribution_sweep") {
    figure_distribution_sweep(c, d, out);
  } else if (figure == "all") {
    figure_scatter(ck, ck_path, d, out);
    figure_ratio(ck, d, out);
    figure_unreliability(ck, d, a_th, out);
  } else {
    throw ConfigError("unknown figure '" + figure +
                      "' (scatter, ratio, unreliability, size_sweep, distribution_sweep, all)");
  }
  echo_config(c, out);
  return kOk;
}

int cmd_sweep(const std::string& kind, const std::string& config_path, const fs::path& data,
              const fs::path& out, const Overrides& o) {
  ExperimentConfig c = resolve(config_path, o);
  c.output_dir = out.string();
  const FleetDataset d = load_dataset(data);
  ensure_dir(out);
  if (kind == "size") {
    figure_size_sweep(c, d, out);
  } else if (kind == "distribution") {
    figure_distribution_sweep(c, d, out);
  } else {
    throw ConfigError("unknown sweep kind '" + kind + "' (size, distribution)");
  }
  echo_config(c, out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-informed recurrent model of fleet fatigue crack growth"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, checkpoint, figure, kind;
  std::vector<double> thresholds;
  Overrides o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
    flag(sub, "--seed", o.seed, "master seed");
    flag(sub, "--init-seed", o.init_seed, "network initialization seed");
    flag(sub, "--years", o.years, "simulated years");
    flag(sub, "--inspections", o.inspections, "number of inspected planes");
    flag(sub, "--strategy", o.strategy, "inspection strategy");
    flag(sub, "--planes-per-mix", o.planes_per_mix, "planes per mission mix");
    flag(sub, "--epochs", o.epochs, "training epochs");
    flag(sub, "--lr", o.learning_rate, "learning rate");
    flag(sub, "--threads", o.threads, "worker threads for training");
    flag(sub, "--n", o.n, "observations per distribution-sweep case");
    sub->add_option("--sizes", o.sizes, "training-set sizes for the size sweep")->delimiter(',');
  };

  auto* gen = app.add_subcommand("generate", "simulate a fleet and its inspections");
  common(gen);
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* trn = app.add_subcommand("train", "train the hybrid cell on a dataset");
  common(trn);
  trn->add_option("--data", data_dir, "dataset directory")->required();
  trn->add_option("--out", out_dir, "output directory")->required();

  auto* ev = app.add_subcommand("evaluate", "emit evaluation tables for a checkpoint");
  common(ev);
  ev->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required();
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--figure", figure, "scatter|ratio|unreliability|size_sweep|distribution_sweep|all")
      ->required();
  ev->add_option("--a-th", thresholds, "crack-length thresholds (m)")->delimiter(',');
  ev->add_option("--out", out_dir, "output directory (default: the checkpoint's)");

  auto* sw = app.add_subcommand("sweep", "training-set size or distribution sweep");
  common(sw);
  sw->add_option("--kind", kind, "size|distribution")->required();
  sw->add_option("--data", data_dir, "dataset directory")->required();
  sw->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) return cmd_generate(config_path, out_dir, o);
    if (*trn) return cmd_train(config_path, data_dir, out_dir, o);
    if (*ev) return cmd_evaluate(checkpoint, data_dir, figure, thresholds, out_dir, config_path, o);
    if (*sw) return cmd_sweep(kind, config_path, data_dir, out_dir, o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const ContractViolation& e) {
    std::cerr << "invalid request: " << e.what() << '\n';
    return kConfig;
  }
  return kOk;
}
