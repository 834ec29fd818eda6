#pragma once

// Dense linear algebra and a small reverse-mode tape, just enough for the
// stress-intensity MLP and backpropagation through time over the damage cell.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pidamage/error.hpp"

namespace pidamage {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "Matrix: data length must equal rows * cols");
    for (double v : data_) require(std::isfinite(v), "Matrix: entries must be finite");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {

// y = W x + b. Shared by the value path and the tape so both produce
// bit-identical results. Rows go four at a time to break the accumulation
// dependency chain; each row is still summed left to right.
inline void affine_kernel(const double* w, const double* b, const double* x, double* y,
                          std::size_t rows, std::size_t cols) {
  std::size_t i = 0;
  for (; i + 4 <= rows; i += 4) {
    const double* r0 = w + i * cols;
    const double* r1 = r0 + cols;
    const double* r2 = r1 + cols;
    const double* r3 = r2 + cols;
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double xj = x[j];
      a0 += r0[j] * xj;
      a1 += r1[j] * xj;
      a2 += r2[j] * xj;
      a3 += r3[j] * xj;
    }
    y[i] = a0 + b[i];
    y[i + 1] = a1 + b[i + 1];
    y[i + 2] = a2 + b[i + 2];
    y[i + 3] = a3 + b[i + 3];
  }
  for (; i < rows; ++i) {
    const double* row = w + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] = acc + b[i];
  }
}

}  // namespace detail

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::vector<double> sigmoid(std::span<const double> x) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double prelu(double x, double alpha) { return x >= 0.0 ? x : alpha * x; }

inline std::vector<double> affine_forward(std::span<const double> x, const Matrix& w,
                                          std::span<const double> b) {
  require(x.size() == w.cols(), "affine_forward: dim(x) must equal W.cols");
  require(b.size() == w.rows(), "affine_forward: dim(b) must equal W.rows");
  std::vector<double> y(w.rows());
  detail::affine_kernel(w.data().data(), b.data(), x.data(), y.data(), w.rows(), w.cols());
  return y;
}

struct ParameterBlock {
  std::string name;
  Matrix value;
  bool trainable = true;
};

// Ordered collection of named parameter blocks. Indices are stable once added.
class ParameterSet {
 public:
  std::size_t add(std::string name, Matrix value, bool trainable) {
    for (const auto& b : blocks_)
      require(b.name != name, "ParameterSet: duplicate block name '" + name + "'");
    blocks_.push_back({std::move(name), std::move(value), trainable});
    return blocks_.size() - 1;
  }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      if (blocks_[i].name == name) return i;
    throw ContractViolation("ParameterSet: no block named '" + name + "'");
  }

  std::size_t size() const { return blocks_.size(); }
  const ParameterBlock& operator[](std::size_t i) const { return blocks_[i]; }
  ParameterBlock& operator[](std::size_t i) { return blocks_[i]; }
  const std::vector<ParameterBlock>& blocks() const { return blocks_; }

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.value.size();
    return n;
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks_)
      if (b.trainable) n += b.value.size();
    return n;
  }

  std::vector<double> flatten_trainable() const {
    std::vector<double> out;
    out.reserve(trainable_count());
    for (const auto& b : blocks_)
      if (b.trainable) out.insert(out.end(), b.value.data().begin(), b.value.data().end());
    return out;
  }

  void assign_trainable(std::span<const double> theta) {
    require(theta.size() == trainable_count(), "ParameterSet: trainable vector length mismatch");
    std::size_t k = 0;
    for (auto& b : blocks_) {
      if (!b.trainable) continue;
      for (double& v : b.value.data()) v = theta[k++];
    }
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.blocks_.size() != b.blocks_.size()) return false;
    for (std::size_t i = 0; i < a.blocks_.size(); ++i) {
      const auto& x = a.blocks_[i];
      const auto& y = b.blocks_[i];
      if (x.name != y.name || x.trainable != y.trainable || !(x.value == y.value)) return false;
    }
    return true;
  }

 private:
  std::vector<ParameterBlock> blocks_;
};

// Gradient map aligned with a ParameterSet. Non-trainable blocks have no entry
// (an empty vector).
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet& params) : blocks_(params.size()) {
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].trainable) blocks_[i].assign(params[i].value.size(), 0.0);
  }

  bool has(std::size_t block) const { return block < blocks_.size() && !blocks_[block].empty(); }
  std::span<double> operator[](std::size_t block) { return blocks_[block]; }
  std::span<const double> operator[](std::size_t block) const { return blocks_[block]; }
  std::size_t size() const { return blocks_.size(); }

  std::vector<double> flatten() const {
    std::vector<double> out;
    for (const auto& b : blocks_) out.insert(out.end(), b.begin(), b.end());
    return out;
  }

  double norm() const {
    double s = 0.0;
    for (const auto& b : blocks_)
      for (double g : b) s += g * g;
    return std::sqrt(s);
  }

  void scale(double k) {
    for (auto& b : blocks_)
      for (double& g : b) g *= k;
  }

  void set_zero() {
    for (auto& b : blocks_) std::fill(b.begin(), b.end(), 0.0);
  }

  Gradients& operator+=(const Gradients& other) {
    require(other.blocks_.size() == blocks_.size(), "Gradients: block count mismatch");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      require(other.blocks_[i].size() == blocks_[i].size(), "Gradients: block size mismatch");
      for (std::size_t j = 0; j < blocks_[i].size(); ++j) blocks_[i][j] += other.blocks_[i][j];
    }
    return *this;
  }

  bool all_finite() const {
    for (const auto& b : blocks_)
      for (double g : b)
        if (!std::isfinite(g)) return false;
    return true;
  }

 private:
  std::vector<std::vector<double>> blocks_;
};

struct Var {
  std::uint32_t index = 0;
};

// Reverse-mode tape of coarse primitives with cached forward values. Values
// live in one flat arena; each node owns a contiguous slice of it.
class Tape {
 public:
  explicit Tape(const ParameterSet& params) : params_(&params) {}

  void clear() {
    nodes_.clear();
    values_.clear();
  }

  bool empty() const { return nodes_.empty(); }
  std::size_t node_count() const { return nodes_.size(); }

  std::span<const double> value(Var v) const {
    const Node& n = node(v);
    return {values_.data() + n.offset, n.size};
  }
  double scalar(Var v) const { return value(v)[0]; }

  Var constant(double x) {
    Var v = push(Op::Constant, 1, false);
    values_[nodes_[v.index].offset] = x;
    return v;
  }

  Var constant(std::span<const double> x) {
    Var v = push(Op::Constant, x.size(), false);
    std::copy(x.begin(), x.end(), values_.begin() + nodes_[v.index].offset);
    return v;
  }

  // Leaf holding a copy of a parameter block's current values.
  Var parameter(std::size_t block) {
    const auto& p = param_block(block);
    Var v = push(Op::Parameter, p.value.size(), p.trainable);
    nodes_[v.index].block0 = static_cast<std::uint32_t>(block);
    std::copy(p.value.data().begin(), p.value.data().end(),
              values_.begin() + nodes_[v.index].offset);
    return v;
  }

  Var concat(Var a, Var b) {
    const std::size_t na = node(a).size, nb = node(b).size;
    Var v = push(Op::Concat, na + nb, needs(a) || needs(b));
    set_inputs(v, a, b);
    double* out = values_.data() + nodes_[v.index].offset;
    const double* pa = values_.data() + nodes_[a.index].offset;
    const double* pb = values_.data() + nodes_[b.index].offset;
    std::copy(pa, pa + na, out);
    std::copy(pb, pb + nb, out + na);
    return v;
  }

  Var affine(Var x, std::size_t weight_block, std::size_t bias_block) {
    const auto& w = param_block(weight_block);
    const auto& b = param_block(bias_block);
    require(node(x).size == w.value.cols(), "Tape::affine: dim(x) must equal W.cols");
    require(b.value.size() == w.value.rows(), "Tape::affine: dim(b) must equal W.rows");
    Var v = push(Op::Affine, w.value.rows(), needs(x) || w.trainable || b.trainable);
    set_inputs(v, x, x);
    nodes_[v.index].block0 = static_cast<std::uint32_t>(weight_block);
    nodes_[v.index].block1 = static_cast<std::uint32_t>(bias_block);
    detail::affine_kernel(w.value.data().data(), b.value.data().data(),
                          values_.data() + nodes_[x.index].offset,
                          values_.data() + nodes_[v.index].offset, w.value.rows(), w.value.cols());
    return v;
  }

  Var sigmoid(Var x) {
    return unary(Op::Sigmoid, x, [](double u) { return pidamage::sigmoid(u); });
  }

  Var prelu(Var x, std::size_t alpha_block) {
    const auto& a = param_block(alpha_block);
    require(a.value.size() == node(x).size, "Tape::prelu: alpha must match input width");
    Var v = push(Op::PRelu, node(x).size, needs(x) || a.trainable);
    set_inputs(v, x, x);
    nodes_[v.index].block0 = static_cast<std::uint32_t>(alpha_block);
    const double* in = values_.data() + nodes_[x.index].offset;
    double* out = values_.data() + nodes_[v.index].offset;
    for (std::size_t i = 0; i < nodes_[v.index].size; ++i)
      out[i] = pidamage::prelu(in[i], a.value.data()[i]);
    return v;
  }

  Var scale(Var x, double k) {
    Var v = unary(Op::Scale, x, [k](double u) { return k * u; });
    nodes_[v.index].k = k;
    return v;
  }

  Var sqrt(Var x) {
    return unary(Op::Sqrt, x, [](double u) { return std::sqrt(u); });
  }

  // log(1 + e^x), evaluated without overflow.
  Var softplus(Var x) {
    return unary(Op::Softplus, x, [](double u) { return pidamage::softplus(u); });
  }

  // max(x, 0); the clamped branch passes no gradient.
  Var clamp_nonnegative(Var x) {
    return unary(Op::ClampMin0, x, [](double u) { return u > 0.0 ? u : 0.0; });
  }

  // Elementwise base^exponent; exponent must be a scalar node.
  Var pow(Var base, Var exponent) {
    require(node(exponent).size == 1, "Tape::pow: exponent must be scalar");
    Var v = push(Op::Pow, node(base).size, needs(base) || needs(exponent));
    set_inputs(v, base, exponent);
    const double e = values_[nodes_[exponent.index].offset];
    const double* in = values_.data() + nodes_[base.index].offset;
    double* out = values_.data() + nodes_[v.index].offset;
    for (std::size_t i = 0; i < nodes_[v.index].size; ++i) out[i] = std::pow(in[i], e);
    return v;
  }

  Var mul(Var a, Var b) {
    return binary(Op::Mul, a, b, [](double x, double y) { return x * y; });
  }

  Var add(Var a, Var b) {
    return binary(Op::Add, a, b, [](double x, double y) { return x + y; });
  }

  // Reverse sweep from `out` seeded with `seed`, accumulating into `grads`.
  void backward(Var out, double seed, Gradients& grads) const {
    require(!nodes_.empty(), "Tape::backward: nothing recorded (forward pass missing)");
    require(out.index < nodes_.size(), "Tape::backward: output node not on this tape");
    require(std::isfinite(seed), "Tape::backward: seed gradient must be finite");
    require(grads.size() == params_->size(), "Tape::backward: gradient map does not match parameters");

    adjoint_.assign(values_.size(), 0.0);
    const Node& root = nodes_[out.index];
    for (std::size_t i = 0; i < root.size; ++i) adjoint_[root.offset + i] = seed;

    for (std::size_t idx = out.index + 1; idx-- > 0;) {
      const Node& n = nodes_[idx];
      if (!n.needs_grad) continue;
      const double* g = adjoint_.data() + n.offset;
      const double* y = values_.data() + n.offset;
      switch (n.op) {
        case Op::Constant:
          break;
        case Op::Parameter: {
          auto gb = grads[n.block0];
          for (std::size_t i = 0; i < n.size; ++i) gb[i] += g[i];
          break;
        }
        case Op::Concat: {
          const Node& a = nodes_[n.in0];
          const Node& b = nodes_[n.in1];
          if (a.needs_grad)
            for (std::size_t i = 0; i < a.size; ++i) adjoint_[a.offset + i] += g[i];
          if (b.needs_grad)
            for (std::size_t i = 0; i < b.size; ++i) adjoint_[b.offset + i] += g[a.size + i];
          break;
        }
        case Op::Affine: {
          const Node& xn = nodes_[n.in0];
          const auto& w = (*params_)[n.block0];
          const auto& b = (*params_)[n.block1];
          const std::size_t rows = w.value.rows(), cols = w.value.cols();
          const double* x = values_.data() + xn.offset;
          const double* wd = w.value.data().data();
          if (w.trainable) {
            auto gw = grads[n.block0];
            for (std::size_t i = 0; i < rows; ++i)
              for (std::size_t j = 0; j < cols; ++j) gw[i * cols + j] += g[i] * x[j];
          }
          if (b.trainable) {
            auto gb = grads[n.block1];
            for (std::size_t i = 0; i < rows; ++i) gb[i] += g[i];
          }
          if (xn.needs_grad) {
            double* gx = adjoint_.data() + xn.offset;
            for (std::size_t i = 0; i < rows; ++i) {
              const double gi = g[i];
              const double* row = wd + i * cols;
              for (std::size_t j = 0; j < cols; ++j) gx[j] += row[j] * gi;
            }
          }
          break;
        }
        case Op::Sigmoid: {
          double* gx = adjoint_.data() + nodes_[n.in0].offset;
          for (std::size_t i = 0; i < n.size; ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
          break;
        }
        case Op::PRelu: {
          const Node& xn = nodes_[n.in0];
          const auto& a = (*params_)[n.block0];
          const double* x = values_.data() + xn.offset;
          if (xn.needs_grad) {
            double* gx = adjoint_.data() + xn.offset;
            for (std::size_t i = 0; i < n.size; ++i)
              gx[i] += g[i] * (x[i] >= 0.0 ? 1.0 : a.value.data()[i]);
          }
          if (a.trainable) {
            auto ga = grads[n.block0];
            for (std::size_t i = 0; i < n.size; ++i)
              if (x[i] < 0.0) ga[i] += g[i] * x[i];
          }
          break;
        }
        case Op::Scale: {
          double* gx = adjoint_.data() + nodes_[n.in0].offset;
          for (std::size_t i = 0; i < n.size; ++i) gx[i] += g[i] * n.k;
          break;
        }
        case Op::Sqrt: {
          double* gx = adjoint_.data() + nodes_[n.in0].offset;
          for (std::size_t i = 0; i < n.size; ++i)
            if (y[i] > 0.0) gx[i] += g[i] * 0.5 / y[i];
          break;
        }
        case Op::Softplus: {
          const Node& xn = nodes_[n.in0];
          const double* x = values_.data() + xn.offset;
          double* gx = adjoint_.data() + xn.offset;
          for (std::size_t i = 0; i < n.size; ++i) gx[i] += g[i] * pidamage::sigmoid(x[i]);
          break;
        }
        case Op::ClampMin0: {
          const Node& xn = nodes_[n.in0];
          const double* x = values_.data() + xn.offset;
          double* gx = adjoint_.data() + xn.offset;
          for (std::size_t i = 0; i < n.size; ++i)
            if (x[i] > 0.0) gx[i] += g[i];
          break;
        }
        case Op::Pow: {
          const Node& bn = nodes_[n.in0];
          const Node& en = nodes_[n.in1];
          const double* base = values_.data() + bn.offset;
          const double e = values_[en.offset];
          if (bn.needs_grad) {
            double* gx = adjoint_.data() + bn.offset;
            for (std::size_t i = 0; i < n.size; ++i)
              if (base[i] != 0.0) gx[i] += g[i] * e * (y[i] / base[i]);
          }
          if (en.needs_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n.size; ++i)
              if (base[i] > 0.0) acc += g[i] * y[i] * std::log(base[i]);
            adjoint_[en.offset] += acc;
          }
          break;
        }
        case Op::Mul:
        case Op::Add: {
          const Node& an = nodes_[n.in0];
          const Node& bn = nodes_[n.in1];
          const double* av = values_.data() + an.offset;
          const double* bv = values_.data() + bn.offset;
          const bool is_mul = n.op == Op::Mul;
          for (std::size_t i = 0; i < n.size; ++i) {
            const std::size_t ia = an.size == 1 ? 0 : i;
            const std::size_t ib = bn.size == 1 ? 0 : i;
            if (an.needs_grad) adjoint_[an.offset + ia] += g[i] * (is_mul ? bv[ib] : 1.0);
            if (bn.needs_grad) adjoint_[bn.offset + ib] += g[i] * (is_mul ? av[ia] : 1.0);
          }
          break;
        }
      }
    }
  }

  Gradients backward(Var out, double seed) const {
    Gradients grads(*params_);
    backward(out, seed, grads);
    return grads;
  }

  const ParameterSet& parameters() const { return *params_; }

 private:
  enum class Op : std::uint8_t {
    Constant,
    Parameter,
    Concat,
    Affine,
    Sigmoid,
    PRelu,
    Scale,
    Sqrt,
    Softplus,
    ClampMin0,
    Pow,
    Mul,
    Add,
  };

  struct Node {
    Op op;
    bool needs_grad;
    std::uint32_t in0 = 0, in1 = 0;
    std::uint32_t block0 = 0, block1 = 0;
    std::uint32_t offset = 0, size = 0;
    double k = 0.0;
  };

  const Node& node(Var v) const {
    require(v.index < nodes_.size(), "Tape: variable does not belong to this tape");
    return nodes_[v.index];
  }
  bool needs(Var v) const { return nodes_[v.index].needs_grad; }

  const ParameterBlock& param_block(std::size_t i) const {
    require(i < params_->size(), "Tape: parameter block index out of range");
    return (*params_)[i];
  }

  Var push(Op op, std::size_t size, bool needs_grad) {
    Node n{};
    n.op = op;
    n.needs_grad = needs_grad;
    n.offset = static_cast<std::uint32_t>(values_.size());
    n.size = static_cast<std::uint32_t>(size);
    values_.resize(values_.size() + size);
    nodes_.push_back(n);
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  void set_inputs(Var v, Var a, Var b) {
    nodes_[v.index].in0 = a.index;
    nodes_[v.index].in1 = b.index;
  }

  template <class F>
  Var unary(Op op, Var x, F f) {
    const std::size_t n = node(x).size;
    Var v = push(op, n, needs(x));
    set_inputs(v, x, x);
    const double* in = values_.data() + nodes_[x.index].offset;
    double* out = values_.data() + nodes_[v.index].offset;
    for (std::size_t i = 0; i < n; ++i) out[i] = f(in[i]);
    return v;
  }

  template <class F>
  Var binary(Op op, Var a, Var b, F f) {
    const std::size_t na = node(a).size, nb = node(b).size;
    require(na == nb || na == 1 || nb == 1, "Tape: operand widths must match or be scalar");
    const std::size_t n = std::max(na, nb);
    Var v = push(op, n, needs(a) || needs(b));
    set_inputs(v, a, b);
    const double* pa = values_.data() + nodes_[a.index].offset;
    const double* pb = values_.data() + nodes_[b.index].offset;
    double* out = values_.data() + nodes_[v.index].offset;
    for (std::size_t i = 0; i < n; ++i) out[i] = f(pa[na == 1 ? 0 : i], pb[nb == 1 ? 0 : i]);
    return v;
  }

  const ParameterSet* params_;
  std::vector<Node> nodes_;
  std::vector<double> values_;
  mutable std::vector<double> adjoint_;
};

// Solves A x = b for symmetric positive definite A by Cholesky factorization.
inline std::vector<double> solve_spd(Matrix a, std::vector<double> b) {
  const std::size_t n = a.rows();
  require(a.cols() == n && b.size() == n, "solve_spd: dimension mismatch");
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > 0.0)) throw NumericalError("solve_spd: matrix is not positive definite");
    const double l = std::sqrt(d);
    a(j, j) = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= a(i, k) * a(j, k);
      a(i, j) = v / l;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= a(i, k) * b[k];
    b[i] = v / a(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    double v = b[i];
    for (std::size_t k = i + 1; k < n; ++k) v -= a(k, i) * b[k];
    b[i] = v / a(i, i);
  }
  return b;
}

// Central differences (f(θ + h eᵢ) − f(θ − h eᵢ)) / 2h. Templated on the scalar
// so test oracles can run in extended precision.
template <class Real, class F>
std::vector<Real> finite_difference_gradient(F&& f, std::vector<Real> theta, Real h) {
  std::vector<Real> grad(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const Real saved = theta[i];
    theta[i] = saved + h;
    const Real fp = f(theta);
    theta[i] = saved - h;
    const Real fm = f(theta);
    theta[i] = saved;
    grad[i] = (fp - fm) / (Real(2) * h);
  }
  return grad;
}

}  // namespace pidamage
