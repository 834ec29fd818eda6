#pragma once

// Full-batch training of the hybrid cell from terminal crack observations,
// with backpropagation through every cycle of every training history.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pidamage/damage_cell.hpp"
#include "pidamage/error.hpp"
#include "pidamage/fleet.hpp"
#include "pidamage/numerics.hpp"
#include "pidamage/stress_mlp.hpp"

namespace pidamage {

struct TrainingConfig {
  std::size_t epochs = 500;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::size_t log_every = 50;
  double clip_norm = 1e3;
  std::size_t early_stop_window = 50;
  double early_stop_tolerance = 1e-12;  // m²
  unsigned threads = 1;

  void validate() const {
    require(learning_rate > 0.0 && std::isfinite(learning_rate),
            "TrainingConfig: learning_rate must be positive");
    require(beta1 > 0.0 && beta1 < 1.0, "TrainingConfig: beta1 must lie in (0, 1)");
    require(beta2 > 0.0 && beta2 < 1.0, "TrainingConfig: beta2 must lie in (0, 1)");
    require(epsilon > 0.0, "TrainingConfig: epsilon must be positive");
    require(clip_norm > 0.0, "TrainingConfig: clip_norm must be positive");
    require(threads >= 1, "TrainingConfig: threads must be >= 1");
  }
};

struct TrainReport {
  std::vector<double> loss_history;       // MSE (m²) before each epoch's update
  std::vector<double> grad_norm_history;  // pre-clipping global norm
  std::size_t clip_events = 0;
  bool early_stopped = false;
  double wall_time = 0.0;  // seconds; not part of any written artifact
};

struct TrainingSample {
  std::size_t plane_id = 0;
  std::span<const double> history;  // stress ranges up to the inspection
  double observed = 0.0;            // crack at inspection, m
};

inline double mse_loss(std::span<const double> predicted, std::span<const double> observed) {
  require(!predicted.empty(), "mse_loss: need at least one value");
  require(predicted.size() == observed.size(), "mse_loss: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double r = predicted[i] - observed[i];
    s += r * r;
  }
  return s / static_cast<double>(predicted.size());
}

// Adaptive-moment update restricted to blocks that carry a gradient entry.
class AdamOptimizer {
 public:
  AdamOptimizer(const ParameterSet& params, const TrainingConfig& cfg)
      : cfg_(cfg), first_(params), second_(params) {}

  void step(ParameterSet& params, const Gradients& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t b = 0; b < params.size(); ++b) {
      if (!grads.has(b)) continue;
      auto value = params[b].value.data();
      auto g = grads[b];
      auto m = first_[b];
      auto v = second_[b];
      for (std::size_t i = 0; i < value.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        value[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }

 private:
  TrainingConfig cfg_;
  Gradients first_;
  Gradients second_;
  std::size_t t_ = 0;
};

struct EpochResult {
  double loss = 0.0;
  std::vector<double> predicted;
  Gradients grads;
};

// One forward/backward sweep over all samples. Per-plane gradients are reduced
// in sample order regardless of thread count.
template <StressIntensity Model>
EpochResult loss_and_gradient(const DamageCell<Model>& cell, std::span<const TrainingSample> samples,
                              double a0, unsigned threads = 1) {
  require(!samples.empty(), "loss_and_gradient: no training samples");
  const std::size_t n = samples.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> predicted(n);
  std::vector<Gradients> per_plane(n);

  auto work = [&](std::size_t begin, std::size_t end) {
    Tape tape(cell.parameters());
    for (std::size_t i = begin; i < end; ++i) {
      tape.clear();
      Var a = cell.unroll(tape, a0, samples[i].history);
      predicted[i] = tape.scalar(a);
      const double r = predicted[i] - samples[i].observed;
      per_plane[i] = Gradients(cell.parameters());
      // A non-finite residual surfaces through the loss; train() reports it.
      if (std::isfinite(r)) tape.backward(a, 2.0 * r * inv_n, per_plane[i]);
    }
  };

  const unsigned nt = std::min<unsigned>(threads, static_cast<unsigned>(n));
  if (nt <= 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nt; ++t)
      pool.emplace_back(work, t * n / nt, (t + 1) * n / nt);
    for (auto& th : pool) th.join();
  }

  EpochResult out{0.0, std::move(predicted), Gradients(cell.parameters())};
  for (std::size_t i = 0; i < n; ++i) {
    const double r = out.predicted[i] - samples[i].observed;
    out.loss += r * r;
    out.grads += per_plane[i];
  }
  out.loss *= inv_n;
  return out;
}

using EpochLogger = std::function<void(std::size_t epoch, double loss, double grad_norm)>;

template <StressIntensity Model>
TrainReport train(DamageCell<Model>& cell, std::span<const TrainingSample> samples, double a0,
                  const TrainingConfig& cfg, const EpochLogger& log = {}) {
  cfg.validate();
  require(!samples.empty(), "train: no training samples");
  for (const auto& s : samples)
    require(!s.history.empty(), "train: every inspected plane needs a load history");

  TrainReport report;
  const auto started = std::chrono::steady_clock::now();
  AdamOptimizer adam(cell.parameters(), cfg);
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best_so_far;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochResult r = loss_and_gradient(cell, samples, a0, cfg.threads);
    const double gnorm = r.grads.norm();
    if (!std::isfinite(r.loss) || !r.grads.all_finite()) {
      std::ostringstream msg;
      msg << "non-finite loss or gradient at epoch " << epoch << " (loss " << r.loss
          << ", planes";
      for (std::size_t i = 0; i < samples.size(); ++i)
        if (!std::isfinite(r.predicted[i])) msg << ' ' << samples[i].plane_id;
      double pn = 0.0;
      for (double v : cell.parameters().flatten_trainable()) pn += v * v;
      msg << ", parameter norm " << std::sqrt(pn) << ")";
      throw NumericalError(msg.str());
    }
    report.loss_history.push_back(r.loss);
    report.grad_norm_history.push_back(gnorm);
    if (log && (cfg.log_every > 0) && (epoch % cfg.log_every == 0 || epoch + 1 == cfg.epochs))
      log(epoch, r.loss, gnorm);

    best_loss = std::min(best_loss, r.loss);
    best_so_far.push_back(best_loss);
    const std::size_t w = cfg.early_stop_window;
    if (w > 0 && epoch >= w && best_so_far[epoch - w] - best_loss < cfg.early_stop_tolerance) {
      report.early_stopped = true;
      break;
    }

    if (gnorm > cfg.clip_norm) {
      r.grads.scale(cfg.clip_norm / gnorm);
      ++report.clip_events;
    }
    adam.step(cell.parameters(), r.grads);
  }
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

template <StressIntensity Model>
std::vector<std::vector<double>> predict_fleet(const DamageCell<Model>& cell,
                                               std::span<const std::vector<double>> histories,
                                               double a0) {
  std::vector<std::vector<double>> out;
  out.reserve(histories.size());
  for (const auto& h : histories) {
    std::vector<double> traj;
    traj.reserve(h.size());
    for (const auto& s : cell.unroll(a0, h)) traj.push_back(s.a);
    out.push_back(std::move(traj));
  }
  return out;
}

template <StressIntensity Model>
std::vector<double> predict_at(const DamageCell<Model>& cell,
                               std::span<const std::vector<double>> histories, double a0,
                               std::size_t cycles) {
  std::vector<double> out;
  out.reserve(histories.size());
  for (const auto& h : histories) {
    require(h.size() >= cycles, "predict_at: history shorter than requested cycle");
    out.push_back(cell.final_crack(a0, std::span<const double>(h).first(cycles)));
  }
  return out;
}

// Constant ΔK that makes the Paris layer reproduce the mean observed growth
// over `cycles` cycles. Uses only the observations and the fixed Paris layer.
inline double constant_stress_intensity_fit(std::span<const double> observed, double a0,
                                            std::size_t cycles, const ParisParams& p) {
  require(!observed.empty() && cycles > 0, "constant_stress_intensity_fit: empty input");
  double mean = 0.0;
  for (double a : observed) mean += a;
  mean /= static_cast<double>(observed.size());
  const double growth = std::max(mean - a0, 1e-12);
  return std::pow(growth / (static_cast<double>(cycles) * p.c), 1.0 / p.m);
}

// Second-order response surface in the standardized inputs (s, α):
// ΔK = softplus(k0 + k·(s, s², α, sα, α²)). A six-coefficient stand-in for
// the MLP, used to find a starting point for it. Softplus keeps ΔK positive
// without a clamp whose flat side would stall the fit.
struct SurfaceStressIntensity {
  Normalizer norm;
  std::size_t weight = 0, bias = 0;

  std::array<double, 5> features(double delta_s, double a_prev) const {
    const double s = (delta_s - norm.mean[0]) / norm.std[0];
    const double al = (a_prev - norm.mean[1]) / norm.std[1];
    return {s, s * s, al, s * al, al * al};
  }

  double evaluate(const ParameterSet& p, double delta_s, double a_prev) const {
    const auto z = features(delta_s, a_prev);
    double out;
    detail::affine_kernel(p[weight].value.data().data(), p[bias].value.data().data(), z.data(),
                          &out, 1, 5);
    return softplus(out);
  }

  Var record(Tape& t, double delta_s, Var a_prev) const {
    const double s = (delta_s - norm.mean[0]) / norm.std[0];
    const double lead[2] = {s, s * s};
    Var al = t.add(t.scale(a_prev, 1.0 / norm.std[1]), t.constant(-norm.mean[1] / norm.std[1]));
    Var z = t.concat(t.concat(t.constant(std::span<const double>(lead, 2)), al),
                     t.concat(t.scale(al, s), t.mul(al, al)));
    return t.softplus(t.affine(z, weight, bias));
  }
};
inline DamageCell<SurfaceStressIntensity> make_surface_cell(const Normalizer& norm, double level,
                                                            const ParisParams& paris) {
  norm.validate();
  ParameterSet params;
  SurfaceStressIntensity m{norm};
  m.weight = params.add("surface/weights", Matrix(1, 5, 0.0), true);
  m.bias = params.add("surface/bias", Matrix(1, 1, level), true);
  ParisParams fixed = paris;
  fixed.trainable = false;
  auto [c, mm] = append_paris_blocks(params, fixed);
  return DamageCell<SurfaceStressIntensity>(std::move(params), m, c, mm);
}

// Levenberg-Marquardt on the trainable coefficients of a small cell. Each
// residual's Jacobian row comes from one backward pass through the unrolled
// history. Returns the final training MSE.
template <StressIntensity Model>
double fit_levenberg_marquardt(DamageCell<Model>& cell, std::span<const TrainingSample> samples,
                               double a0, std::size_t iterations) {
  require(!samples.empty(), "fit_levenberg_marquardt: no samples");
  auto& params = cell.parameters();
  const std::size_t k = params.trainable_count();
  auto sse = [&] {
    double s = 0.0;
    for (const auto& x : samples) {
      const double r = cell.final_crack(a0, x.history) - x.observed;
      s += r * r;
    }
    return s;
  };

  double lambda = 1e-3;
  double current = sse();
  Tape tape(params);
  for (std::size_t it = 0; it < iterations; ++it) {
    Matrix jtj(k, k);
    std::vector<double> jtr(k, 0.0);
    for (const auto& x : samples) {
      tape.clear();
      Var a = cell.unroll(tape, a0, x.history);
      const double r = tape.scalar(a) - x.observed;
      const std::vector<double> row = tape.backward(a, 1.0).flatten();
      for (std::size_t i = 0; i < k; ++i) {
        jtr[i] += row[i] * r;
        for (std::size_t j = 0; j < k; ++j) jtj(i, j) += row[i] * row[j];
      }
    }
    double trace = 0.0;
    for (std::size_t i = 0; i < k; ++i) trace += jtj(i, i);
    const double floor = 1e-12 * trace / static_cast<double>(k) + 1e-300;
    const std::vector<double> base = params.flatten_trainable();
    bool accepted = false;
    for (int attempt = 0; attempt < 20 && !accepted; ++attempt) {
      Matrix m = jtj;
      for (std::size_t i = 0; i < k; ++i) m(i, i) += lambda * (jtj(i, i) + floor);
      std::vector<double> delta;
      try {
        delta = solve_spd(m, jtr);
      } catch (const NumericalError&) {
        lambda *= 4.0;
        continue;
      }
      std::vector<double> trial = base;
      for (std::size_t i = 0; i < k; ++i) trial[i] -= delta[i];
      params.assign_trainable(trial);
      const double candidate = sse();
      if (std::isfinite(candidate) && candidate < current) {
        current = candidate;
        lambda = std::max(lambda / 3.0, 1e-9);
        accepted = true;
      } else {
        params.assign_trainable(base);
        lambda *= 4.0;
      }
    }
    if (!accepted) break;
  }
  return current / static_cast<double>(samples.size());
}


// Least-squares regression of the network onto `target` over a grid of
// inputs. Damped Gauss-Newton in its minimum-norm form: with J the residual
// Jacobian, each step is -Jᵀ (J Jᵀ + λI)⁻¹ r. Returns the final RMS error.
template <class Target>
double regress_network(MlpNetwork& net, Target&& target, std::array<double, 2> ds_range,
                       std::array<double, 2> a_range, std::size_t grid, std::size_t iterations) {
  require(grid >= 2, "regress_network: grid needs at least two points per axis");
  std::vector<std::array<double, 3>> points;
  for (std::size_t i = 0; i < grid; ++i)
    for (std::size_t j = 0; j < grid; ++j) {
      const double u = static_cast<double>(i) / static_cast<double>(grid - 1);
      const double v = static_cast<double>(j) / static_cast<double>(grid - 1);
      const double ds = ds_range[0] + (ds_range[1] - ds_range[0]) * u;
      const double a = a_range[0] + (a_range[1] - a_range[0]) * v;
      points.push_back({ds, a, target(ds, a)});
    }
  const std::size_t n = points.size();
  auto residuals = [&] {
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = net.forward(points[i][0], points[i][1]) - points[i][2];
    return r;
  };
  auto sum_sq = [](const std::vector<double>& r) {
    double s = 0.0;
    for (double x : r) s += x * x;
    return s;
  };

  std::vector<double> r = residuals();
  double current = sum_sq(r);
  double lambda = 1e-3;
  Tape tape(net.parameters());
  for (std::size_t it = 0; it < iterations; ++it) {
    std::vector<std::vector<double>> jac(n);
    for (std::size_t i = 0; i < n; ++i) {
      tape.clear();
      const double in[2] = {points[i][0], points[i][1]};
      Var out = net.record(tape, tape.constant(std::span<const double>(in, 2)));
      jac[i] = tape.backward(out, 1.0).flatten();
    }
    Matrix jjt(n, n);
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k <= i; ++k) {
        double d = 0.0;
        for (std::size_t q = 0; q < jac[i].size(); ++q) d += jac[i][q] * jac[k][q];
        jjt(i, k) = jjt(k, i) = d;
        if (i == k) trace += d;
      }
    const double scale = trace / static_cast<double>(n);
    const std::vector<double> base = net.parameters().flatten_trainable();
    bool accepted = false;
    for (int attempt = 0; attempt < 20 && !accepted; ++attempt) {
      Matrix damped = jjt;
      for (std::size_t i = 0; i < n; ++i) damped(i, i) += lambda * scale;
      std::vector<double> y;
      try {
        y = solve_spd(damped, r);
      } catch (const NumericalError&) {
        lambda *= 4.0;
        continue;
      }
      std::vector<double> trial = base;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t q = 0; q < trial.size(); ++q) trial[q] -= jac[i][q] * y[i];
      net.parameters().assign_trainable(trial);
      std::vector<double> rt = residuals();
      const double candidate = sum_sq(rt);
      if (std::isfinite(candidate) && candidate < current) {
        current = candidate;
        r = std::move(rt);
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
      } else {
        net.parameters().assign_trainable(base);
        lambda *= 4.0;
      }
    }
    if (!accepted) break;
  }
  return std::sqrt(current / static_cast<double>(n));
}

struct WarmStart {
  bool enabled = true;
  std::size_t surface_iterations = 20;
  std::size_t grid = 21;
  std::size_t regression_iterations = 30;
};

struct HybridSetup {
  ParisParams paris;
  double a0 = 0.005;
  double a_max = 0.05;
  std::size_t inspection_cycles = 7300;
  std::uint64_t init_seed = 0;
  bool calibrate_output = true;
  WarmStart warm_start;
  TrainingConfig training;
};

struct FitOutcome {
  MlpNetwork untrained;
  MlpNetwork initial;
  MlpNetwork trained;
  TrainReport report;
};

// Histories of the inspected planes, cut at the inspection cycle.
inline std::vector<std::vector<double>> inspected_histories(
    std::span<const std::vector<double>> histories, std::span<const Inspection> observations,
    std::size_t cycles) {
  require(!observations.empty(), "inspected_histories: no observations");
  std::vector<std::vector<double>> out;
  for (const auto& obs : observations) {
    require(obs.plane_id < histories.size(), "inspected_histories: inspected plane has no history");
    const auto& h = histories[obs.plane_id];
    require(h.size() >= cycles, "inspected_histories: history shorter than inspection");
    out.emplace_back(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(cycles));
  }
  return out;
}

// Freshly initialized network with the normalizer frozen from the training
// histories; no information from the observed cracks.
inline MlpNetwork untrained_network(std::span<const std::vector<double>> histories,
                                    std::span<const Inspection> observations,
                                    const HybridSetup& setup) {
  const auto train_hist = inspected_histories(histories, observations, setup.inspection_cycles);
  return build_stress_mlp(fit_normalizer(train_hist, setup.a0, setup.a_max), setup.init_seed);
}

// Starting point for gradient training: the untrained network, its output
// bias calibrated to the constant ΔK matching the mean observed growth, then
// (optionally) regressed onto a response surface fitted through the Paris
// layer by Levenberg-Marquardt.
inline MlpNetwork initial_network(std::span<const std::vector<double>> histories,
                                  std::span<const Inspection> observations,
                                  const HybridSetup& setup) {
  const auto train_hist = inspected_histories(histories, observations, setup.inspection_cycles);
  std::vector<double> observed;
  for (const auto& obs : observations) observed.push_back(obs.crack);
  const Normalizer norm = fit_normalizer(train_hist, setup.a0, setup.a_max);
  MlpNetwork net = build_stress_mlp(norm, setup.init_seed);
  const double level =
      constant_stress_intensity_fit(observed, setup.a0, setup.inspection_cycles, setup.paris);
  if (setup.calibrate_output) net.set_output_at_mean(level);
  if (setup.warm_start.enabled) {
    const auto& ws = setup.warm_start;
    auto surface = make_surface_cell(norm, level, setup.paris);
    std::vector<TrainingSample> samples;
    for (std::size_t i = 0; i < train_hist.size(); ++i)
      samples.push_back({observations[i].plane_id, train_hist[i], observed[i]});
    fit_levenberg_marquardt(surface, samples, setup.a0, ws.surface_iterations);
    double ds_lo = std::numeric_limits<double>::infinity(), ds_hi = -ds_lo;
    // The loading of every plane is known; only cracks are unobserved.
    for (const auto& h : histories)
      for (double s : h) {
        ds_lo = std::min(ds_lo, s);
        ds_hi = std::max(ds_hi, s);
      }
    regress_network(
        net, [&](double ds, double a) { return surface.model().evaluate(surface.parameters(), ds, a); },
        {ds_lo, ds_hi}, {setup.a0, setup.a_max}, ws.grid, ws.regression_iterations);
  }
  return net;
}

inline std::vector<TrainingSample> training_samples(std::span<const std::vector<double>> histories,
                                                    std::span<const Inspection> observations,
                                                    std::size_t cycles) {
  std::vector<TrainingSample> samples;
  for (const auto& obs : observations) {
    require(obs.plane_id < histories.size(), "training_samples: inspected plane has no history");
    const auto& h = histories[obs.plane_id];
    require(h.size() >= cycles, "training_samples: history shorter than inspection");
    samples.push_back({obs.plane_id, std::span<const double>(h).first(cycles), obs.crack});
  }
  return samples;
}

inline FitOutcome fit_hybrid(std::span<const std::vector<double>> histories,
                             std::span<const Inspection> observations, const HybridSetup& setup,
                             const EpochLogger& log = {}) {
  MlpNetwork initial = initial_network(histories, observations, setup);
  auto cell = make_hybrid_cell(initial, setup.paris);
  const auto samples = training_samples(histories, observations, setup.inspection_cycles);
  TrainReport report = train(cell, samples, setup.a0, setup.training, log);
  return {untrained_network(histories, observations, setup), std::move(initial),
          extract_network(cell), std::move(report)};
}

}  // namespace pidamage
