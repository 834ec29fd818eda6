#pragma once

// Trainable stress-intensity-range estimator: (ΔS, a) -> ΔK through
//   scale(2) -> dense(40)+sigmoid -> dense(20)+sigmoid -> dense(10)+sigmoid
//   -> dense(5)+sigmoid -> dense(1) -> prelu
// The scale layer standardizes the inputs and is never trained.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pidamage/error.hpp"
#include "pidamage/numerics.hpp"
#include "pidamage/random.hpp"

namespace pidamage {

inline constexpr double kStdFloor = 1e-8;

struct Normalizer {
  std::array<double, 2> mean{0.0, 0.0};  // (MPa, m)
  std::array<double, 2> std{1.0, 1.0};

  void validate() const {
    for (int i = 0; i < 2; ++i) {
      require(std::isfinite(mean[i]), "Normalizer: mean must be finite");
      require(std::isfinite(this->std[i]) && this->std[i] > 0.0,
              "Normalizer: standard deviations must be strictly positive");
    }
  }

  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

// Stress statistics are empirical over every cycle of every history. Crack
// length is unobserved before training, so its statistics are those of the
// uniform distribution on [a0, a_max].
inline Normalizer fit_normalizer(std::span<const std::vector<double>> histories, double a0,
                                 double a_max) {
  require(!histories.empty(), "fit_normalizer: at least one history required");
  require(a0 < a_max, "fit_normalizer: a0 must be below a_max");
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& h : histories) {
    for (double s : h) sum += s;
    count += h.size();
  }
  require(count > 0, "fit_normalizer: histories contain no cycles");
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (const auto& h : histories)
    for (double s : h) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / static_cast<double>(count));

  Normalizer n;
  n.mean = {mean, 0.5 * (a0 + a_max)};
  n.std = {std::max(sd, kStdFloor), std::max((a_max - a0) / std::sqrt(12.0), kStdFloor)};
  return n;
}

inline constexpr std::array<std::size_t, 7> kLayerWidths{2, 40, 20, 10, 5, 1, 1};
inline constexpr std::size_t kDenseLayers = 6;

// Block indices of the network's parameters inside some ParameterSet.
struct MlpLayout {
  std::array<std::size_t, kDenseLayers> weight{};
  std::array<std::size_t, kDenseLayers> bias{};
  std::size_t alpha = 0;
};

inline std::string dense_name(std::size_t layer) { return "dense_" + std::to_string(layer); }

// Output of the last dense layer, before the PReLU.
inline double mlp_preactivation(const ParameterSet& params, const MlpLayout& layout,
                                double delta_s, double a_prev) {
  std::array<double, 40> buf_a{};
  std::array<double, 40> buf_b{};
  buf_a[0] = delta_s;
  buf_a[1] = a_prev;
  double* in = buf_a.data();
  double* out = buf_b.data();
  for (std::size_t l = 0; l < kDenseLayers; ++l) {
    const Matrix& w = params[layout.weight[l]].value;
    const Matrix& b = params[layout.bias[l]].value;
    detail::affine_kernel(w.data().data(), b.data().data(), in, out, w.rows(), w.cols());
    if (l >= 1 && l <= 4)
      for (std::size_t i = 0; i < w.rows(); ++i) out[i] = sigmoid(out[i]);
    std::swap(in, out);
  }
  return in[0];
}

// Forward pass on plain doubles. Arithmetic matches mlp_record exactly.
inline double mlp_forward(const ParameterSet& params, const MlpLayout& layout, double delta_s,
                          double a_prev) {
  return prelu(mlp_preactivation(params, layout, delta_s, a_prev),
               params[layout.alpha].value.data()[0]);
}

// Records the network on a tape; `input` is the width-2 node (ΔS, a).
inline Var mlp_record(Tape& tape, const MlpLayout& layout, Var input) {
  Var h = input;
  for (std::size_t l = 0; l < kDenseLayers; ++l) {
    h = tape.affine(h, layout.weight[l], layout.bias[l]);
    if (l >= 1 && l <= 4) h = tape.sigmoid(h);
  }
  return tape.prelu(h, layout.alpha);
}

// Copies the network blocks into `dst` and returns their new indices.
inline MlpLayout append_mlp_blocks(ParameterSet& dst, const ParameterSet& src,
                                   const MlpLayout& layout) {
  MlpLayout out;
  for (std::size_t l = 0; l < kDenseLayers; ++l) {
    const auto& w = src[layout.weight[l]];
    const auto& b = src[layout.bias[l]];
    out.weight[l] = dst.add(w.name, w.value, w.trainable);
    out.bias[l] = dst.add(b.name, b.value, b.trainable);
  }
  const auto& a = src[layout.alpha];
  out.alpha = dst.add(a.name, a.value, a.trainable);
  return out;
}

class MlpNetwork {
 public:
  MlpNetwork(Normalizer norm, ParameterSet params, MlpLayout layout)
      : norm_(norm), params_(std::move(params)), layout_(layout) {}

  double forward(double delta_s, double a_prev) const {
    return mlp_forward(params_, layout_, delta_s, a_prev);
  }

  std::vector<double> forward(std::span<const std::array<double, 2>> inputs) const {
    std::vector<double> out;
    out.reserve(inputs.size());
    for (const auto& x : inputs) out.push_back(forward(x[0], x[1]));
    return out;
  }

  Var record(Tape& tape, Var input) const { return mlp_record(tape, layout_, input); }

  std::size_t total_count() const { return params_.total_count(); }
  std::size_t trainable_count() const { return params_.trainable_count(); }

  // Parameter count per layer: dense_0..dense_5 then prelu.
  std::array<std::size_t, 7> layer_counts() const {
    std::array<std::size_t, 7> c{};
    for (std::size_t l = 0; l < kDenseLayers; ++l)
      c[l] = params_[layout_.weight[l]].value.size() + params_[layout_.bias[l]].value.size();
    c[6] = params_[layout_.alpha].value.size();
    return c;
  }

  const Normalizer& normalizer() const { return norm_; }
  const ParameterSet& parameters() const { return params_; }
  ParameterSet& parameters() { return params_; }
  const MlpLayout& layout() const { return layout_; }

  // Shifts the output bias so the network emits `target` >= 0 at the input
  // mean, where the PReLU is then the identity.
  void set_output_at_mean(double target) {
    require(target >= 0.0, "set_output_at_mean: target must be non-negative");
    auto bias = params_[layout_.bias[kDenseLayers - 1]].value.data();
    bias[0] += target - mlp_preactivation(params_, layout_, norm_.mean[0], norm_.mean[1]);
  }

  friend bool operator==(const MlpNetwork& a, const MlpNetwork& b) {
    return a.norm_ == b.norm_ && a.params_ == b.params_;
  }

 private:
  Normalizer norm_;
  ParameterSet params_;
  MlpLayout layout_;
};

// Builds the network with Glorot-uniform weights, zero biases and alpha = 0.25.
inline MlpNetwork build_stress_mlp(const Normalizer& norm, std::uint64_t seed) {
  norm.validate();
  Rng rng(seed);
  ParameterSet params;
  MlpLayout layout;

  Matrix w0(2, 2, 0.0);
  Matrix b0(2, 1, 0.0);
  for (int i = 0; i < 2; ++i) {
    w0(i, i) = 1.0 / norm.std[i];
    b0(i, 0) = -norm.mean[i] / norm.std[i];
  }
  layout.weight[0] = params.add(dense_name(0) + "/weights", w0, false);
  layout.bias[0] = params.add(dense_name(0) + "/bias", b0, false);

  for (std::size_t l = 1; l < kDenseLayers; ++l) {
    const std::size_t fan_in = kLayerWidths[l - 1];
    const std::size_t fan_out = kLayerWidths[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (double& v : w.data()) v = rng.uniform(-limit, limit);
    layout.weight[l] = params.add(dense_name(l) + "/weights", w, true);
    layout.bias[l] = params.add(dense_name(l) + "/bias", Matrix(fan_out, 1, 0.0), true);
  }
  layout.alpha = params.add("prelu/alpha", Matrix(1, 1, 0.25), true);
  return MlpNetwork(norm, std::move(params), layout);
}

// Checkpoint: {dense_k: {weights: [[...]], bias: [...]}, alpha: x, normalizer: {...}}.
// nlohmann::json objects are key-sorted, so dumps are deterministic.
inline nlohmann::json to_json(const MlpNetwork& net) {
  nlohmann::json j = nlohmann::json::object();
  const auto& p = net.parameters();
  const auto& layout = net.layout();
  for (std::size_t l = 0; l < kDenseLayers; ++l) {
    const Matrix& w = p[layout.weight[l]].value;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < w.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t c = 0; c < w.cols(); ++c) row.push_back(w(r, c));
      rows.push_back(std::move(row));
    }
    const auto b = p[layout.bias[l]].value.data();
    j[dense_name(l)] = {{"weights", std::move(rows)},
                        {"bias", std::vector<double>(b.begin(), b.end())}};
  }
  j["alpha"] = p[layout.alpha].value.data()[0];
  const auto& n = net.normalizer();
  j["normalizer"] = {{"mean", n.mean}, {"std", n.std}};
  return j;
}

inline MlpNetwork mlp_from_json(const nlohmann::json& j) {
  try {
    Normalizer norm;
    norm.mean = j.at("normalizer").at("mean").get<std::array<double, 2>>();
    norm.std = j.at("normalizer").at("std").get<std::array<double, 2>>();
    norm.validate();
    MlpNetwork net = build_stress_mlp(norm, 0);
    auto& p = net.parameters();
    const auto& layout = net.layout();
    for (std::size_t l = 0; l < kDenseLayers; ++l) {
      const auto& layer = j.at(dense_name(l));
      Matrix& w = p[layout.weight[l]].value;
      const auto rows = layer.at("weights").get<std::vector<std::vector<double>>>();
      const auto bias = layer.at("bias").get<std::vector<double>>();
      if (rows.size() != w.rows() || bias.size() != w.rows())
        throw DataError("checkpoint: " + dense_name(l) + " has wrong shape");
      std::vector<double> flat;
      for (const auto& r : rows) {
        if (r.size() != w.cols()) throw DataError("checkpoint: " + dense_name(l) + " has wrong shape");
        flat.insert(flat.end(), r.begin(), r.end());
      }
      w = Matrix(w.rows(), w.cols(), std::move(flat));
      p[layout.bias[l]].value = Matrix(bias.size(), 1, bias);
    }
    p[layout.alpha].value = Matrix(1, 1, std::vector<double>{j.at("alpha").get<double>()});
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  } catch (const ContractViolation& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace pidamage
