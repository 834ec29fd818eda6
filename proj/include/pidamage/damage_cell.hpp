#pragma once

// Cumulative-damage recurrent cell: a_t = a_{t-1} + C ΔK_t^m, where ΔK_t comes
// from a stress-intensity sub-model (closed-form physics or the learned MLP).

#include <cmath>
#include <concepts>
#include <numbers>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "pidamage/error.hpp"
#include "pidamage/numerics.hpp"
#include "pidamage/stress_mlp.hpp"

namespace pidamage {

struct ParisParams {
  double c = 1.5e-11;  // da in m/cycle for ΔK in MPa·√m
  double m = 3.8;
  double f = 1.0;      // geometry factor
  bool trainable = false;

  void validate() const {
    require(std::isfinite(c) && c > 0.0, "ParisParams: C must be positive");
    require(std::isfinite(m) && m > 0.0, "ParisParams: m must be positive");
    require(std::isfinite(f) && f > 0.0, "ParisParams: F must be positive");
  }
};

struct CellState {
  double a = 0.0;  // crack length, m
};

// ΔK = F ΔS √(π a)
inline double stress_intensity_physics(const ParisParams& p, double delta_s, double a_prev) {
  require(a_prev > 0.0, "stress_intensity_physics: crack length must be positive");
  require(delta_s >= 0.0, "stress_intensity_physics: stress range must be non-negative");
  return (p.f * delta_s) * std::sqrt(std::numbers::pi * a_prev);
}

// Δa = C ΔK^m
inline double paris_increment(const ParisParams& p, double delta_k) {
  require(delta_k >= 0.0, "paris_increment: stress intensity range must be non-negative");
  return p.c * std::pow(delta_k, p.m);
}

// A stress-intensity sub-model evaluates ΔK both on plain doubles and on a
// tape, with identical arithmetic on both paths.
template <class M>
concept StressIntensity = requires(const M& m, const ParameterSet& p, Tape& t, Var a, double x) {
  { m.evaluate(p, x, x) } -> std::convertible_to<double>;
  { m.record(t, x, a) } -> std::same_as<Var>;
};

struct PhysicsStressIntensity {
  std::size_t geometry_block = 0;

  double evaluate(const ParameterSet& p, double delta_s, double a_prev) const {
    const double f = p[geometry_block].value.data()[0];
    return (f * delta_s) * std::sqrt(std::numbers::pi * a_prev);
  }

  Var record(Tape& t, double delta_s, Var a_prev) const {
    Var fs = t.scale(t.parameter(geometry_block), delta_s);
    return t.mul(fs, t.sqrt(t.scale(a_prev, std::numbers::pi)));
  }
};

// MLP estimate, clamped at zero before the power law.
struct LearnedStressIntensity {
  MlpLayout layout;
  Normalizer normalizer;

  double evaluate(const ParameterSet& p, double delta_s, double a_prev) const {
    const double dk = mlp_forward(p, layout, delta_s, a_prev);
    return dk > 0.0 ? dk : 0.0;
  }

  Var record(Tape& t, double delta_s, Var a_prev) const {
    Var x = t.concat(t.constant(delta_s), a_prev);
    return t.clamp_nonnegative(mlp_record(t, layout, x));
  }
};

class StressIntensityModel {
 public:
  using Variant = std::variant<PhysicsStressIntensity, LearnedStressIntensity>;

  StressIntensityModel(PhysicsStressIntensity m) : v_(m) {}
  StressIntensityModel(LearnedStressIntensity m) : v_(std::move(m)) {}

  double evaluate(const ParameterSet& p, double delta_s, double a_prev) const {
    return std::visit([&](const auto& m) { return m.evaluate(p, delta_s, a_prev); }, v_);
  }
  Var record(Tape& t, double delta_s, Var a_prev) const {
    return std::visit([&](const auto& m) { return m.record(t, delta_s, a_prev); }, v_);
  }

  bool is_learned() const { return std::holds_alternative<LearnedStressIntensity>(v_); }
  const Variant& variant() const { return v_; }

 private:
  Variant v_;
};

template <StressIntensity Model = StressIntensityModel>
class DamageCell {
 public:
  DamageCell(ParameterSet params, Model model, std::size_t c_block, std::size_t m_block)
      : params_(std::move(params)), model_(std::move(model)), c_block_(c_block), m_block_(m_block) {}

  double paris_c() const { return params_[c_block_].value.data()[0]; }
  double paris_m() const { return params_[m_block_].value.data()[0]; }

  CellState step(CellState state, double delta_s) const {
    const double dk = model_.evaluate(params_, delta_s, state.a);
    return {state.a + paris_c() * std::pow(dk, paris_m())};
  }

  Var step(Tape& t, Var a_prev, double delta_s) const {
    Var dk = model_.record(t, delta_s, a_prev);
    Var da = t.mul(t.parameter(c_block_), t.pow(dk, t.parameter(m_block_)));
    return t.add(a_prev, da);
  }

  std::vector<CellState> unroll(double a0, std::span<const double> history) const {
    require(a0 > 0.0, "unroll: initial crack length must be positive");
    std::vector<CellState> out;
    out.reserve(history.size());
    CellState s{a0};
    for (double ds : history) {
      s = step(s, ds);
      out.push_back(s);
    }
    return out;
  }

  // Final state only; avoids materializing the trajectory.
  double final_crack(double a0, std::span<const double> history) const {
    require(a0 > 0.0, "unroll: initial crack length must be positive");
    CellState s{a0};
    for (double ds : history) s = step(s, ds);
    return s.a;
  }

  // Records every step on the tape (full BPTT) and returns the final state node.
  Var unroll(Tape& t, double a0, std::span<const double> history) const {
    require(a0 > 0.0, "unroll: initial crack length must be positive");
    Var a = t.constant(a0);
    for (double ds : history) a = step(t, a, ds);
    return a;
  }

  const ParameterSet& parameters() const { return params_; }
  ParameterSet& parameters() { return params_; }
  const Model& model() const { return model_; }

 private:
  ParameterSet params_;
  Model model_;
  std::size_t c_block_;
  std::size_t m_block_;
};

inline std::pair<std::size_t, std::size_t> append_paris_blocks(ParameterSet& params,
                                                               const ParisParams& p) {
  const std::size_t c = params.add("paris/c", Matrix(1, 1, p.c), p.trainable);
  const std::size_t m = params.add("paris/m", Matrix(1, 1, p.m), p.trainable);
  return {c, m};
}

inline DamageCell<> make_physics_cell(const ParisParams& p) {
  p.validate();
  ParameterSet params;
  const std::size_t f = params.add("geometry/f", Matrix(1, 1, p.f), p.trainable);
  auto [c, m] = append_paris_blocks(params, p);
  return DamageCell<>(std::move(params), StressIntensityModel(PhysicsStressIntensity{f}), c, m);
}

// Hybrid cell: the MLP's blocks followed by the (non-trainable by default)
// Paris constants.
inline DamageCell<> make_hybrid_cell(const MlpNetwork& net, const ParisParams& p) {
  p.validate();
  ParameterSet params;
  MlpLayout layout = append_mlp_blocks(params, net.parameters(), net.layout());
  auto [c, m] = append_paris_blocks(params, p);
  return DamageCell<>(std::move(params),
                      StressIntensityModel(LearnedStressIntensity{layout, net.normalizer()}), c, m);
}

// Recovers the network (with current parameter values) from a hybrid cell.
inline MlpNetwork extract_network(const DamageCell<>& cell) {
  const auto* learned = std::get_if<LearnedStressIntensity>(&cell.model().variant());
  require(learned != nullptr, "extract_network: cell has no learned sub-model");
  ParameterSet params;
  MlpLayout layout = append_mlp_blocks(params, cell.parameters(), learned->layout);
  return MlpNetwork(learned->normalizer, std::move(params), layout);
}

}  // namespace pidamage
