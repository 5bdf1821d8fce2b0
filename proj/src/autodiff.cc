/* Copyright 2026 The DET Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "det/autodiff.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "det/errors.h"

namespace det::ad {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

thread_local Tape* g_tape = nullptr;
std::atomic<bool> g_strict{true};

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw ShapeError(fmt::format("{}: {}", op, detail));
}

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (g_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void record(const Tensor& out, Tape::BackwardFn fn) {
  if (out.requires_grad()) g_tape->record(out, std::move(fn));
}

enum class Broadcast { kSame, kRow };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  require(b.rows() == 1 && b.cols() == a.cols(), op,
          fmt::format("cannot combine {} with {}", a.shape().str(), b.shape().str()));
  return Broadcast::kRow;
}

}  // namespace

std::string Shape::str() const { return fmt::format("[{}x{}]", rows, cols); }

Tensor make_result(Shape shape, std::vector<double> value, bool track) {
  if (g_strict.load(std::memory_order_relaxed)) {
    for (double v : value) {
      if (!std::isfinite(v)) throw NumericError("non-finite value in op output");
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(value);
  node->requires_grad = track;
  if (track) node->grad.assign(node->value.size(), 0.0);
  return Tensor(std::move(node));
}

NodePtr node_of(const Tensor& t) { return t.node_; }

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return from(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value) {
  return from(rows, cols, std::vector<double>(rows * cols, value));
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values,
                    bool requires_grad) {
  if (values.size() != rows * cols) {
    throw ShapeError(fmt::format("tensor: {} values for shape [{}x{}]", values.size(), rows, cols));
  }
  auto node = std::make_shared<Node>();
  node->shape = {rows, cols};
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), 0.0);
  return Tensor(std::move(node));
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from(1, n, std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value) { return from(1, 1, {value}); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor " + shape().str() + " is not a scalar");
  return node_->value[0];
}

std::vector<double> Tensor::row_values(std::size_t r) const {
  auto begin = node_->value.begin() + static_cast<std::ptrdiff_t>(r * cols());
  return {begin, begin + static_cast<std::ptrdiff_t>(cols())};
}

void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on) {
    node_->grad.assign(node_->value.size(), 0.0);
  } else {
    node_->grad.clear();
  }
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return from(rows(), cols(), node_->value); }

// ---------------------------------------------------------------------------
// Tape

void Tape::record(const Tensor& output, BackwardFn fn) {
  if (consumed_) throw ContractError("tape: recording onto a consumed tape");
  records_.push_back({output.node_, std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw ContractError("backward: tape already consumed; re-run the forward pass");
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got " + loss.shape().str());
  }
  consumed_ = true;
  if (!loss.requires_grad()) {
    records_.clear();
    return;
  }
  loss.node_->grad[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    it->fn(it->output->grad);
  }
  records_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_tape) { g_tape = &tape; }
TapeScope::~TapeScope() { g_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_tape) { g_tape = nullptr; }
NoGradScope::~NoGradScope() { g_tape = previous_; }

Tape* active_tape() { return g_tape; }

void set_strict_numerics(bool on) { g_strict.store(on); }
bool strict_numerics() { return g_strict.load(); }

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul",
          fmt::format("{} x {}", a.shape().str(), b.shape().str()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  Tensor result = make_result({m, n}, std::move(out), any_requires_grad({&a, &b}));
  record(result, [an = node_of(a), bn = node_of(b), m, k, n](std::span<const double> g) {
    if (an->requires_grad) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bn->value[p * n + j];
          an->grad[i * k + p] += acc;
        }
      }
    }
    if (bn->requires_grad) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = an->value[i * k + p];
          for (std::size_t j = 0; j < n; ++j) bn->grad[p * n + j] += aip * g[i * n + j];
        }
      }
    }
  });
  return result;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.cols(), "matmul_nt",
          fmt::format("{} x {}^T", a.shape().str(), b.shape().str()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[j * k + p];
      out[i * n + j] = acc;
    }
  }
  Tensor result = make_result({m, n}, std::move(out), any_requires_grad({&a, &b}));
  record(result, [an = node_of(a), bn = node_of(b), m, k, n](std::span<const double> g) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double gij = g[i * n + j];
        if (gij == 0.0) continue;
        if (an->requires_grad) {
          for (std::size_t p = 0; p < k; ++p) an->grad[i * k + p] += gij * bn->value[j * k + p];
        }
        if (bn->requires_grad) {
          for (std::size_t p = 0; p < k; ++p) bn->grad[j * k + p] += gij * an->value[i * k + p];
        }
      }
    }
  });
  return result;
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
  }
  Tensor result = make_result({n, m}, std::move(out), any_requires_grad({&a}));
  record(result, [an = node_of(a), m, n](std::span<const double> g) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += g[j * m + i];
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

template <typename Fwd, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, DA da, DB db) {
  const Broadcast kind = broadcast_kind(a, b, name);
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<double> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t bi = kind == Broadcast::kSame ? i * cols + j : j;
      out[i * cols + j] = fwd(av[i * cols + j], bv[bi]);
    }
  }
  Tensor result = make_result(a.shape(), std::move(out), any_requires_grad({&a, &b}));
  record(result, [an = node_of(a), bn = node_of(b), kind, rows, cols, da,
                  db](std::span<const double> g) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t ai = i * cols + j;
        const std::size_t bi = kind == Broadcast::kSame ? ai : j;
        if (an->requires_grad) an->grad[ai] += g[ai] * da(an->value[ai], bn->value[bi]);
        if (bn->requires_grad) bn->grad[bi] += g[ai] * db(an->value[ai], bn->value[bi]);
      }
    }
  });
  return result;
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  Tensor result = make_result(a.shape(), std::move(out), any_requires_grad({&a}));
  // deriv(x, y) receives the input and the output value.
  record(result, [an = node_of(a), on = node_of(result), deriv](std::span<const double> g) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      an->grad[i] += g[i] * deriv(an->value[i], on->value[i]);
    }
  });
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scalar_mul(const Tensor& a, double s) {
  return unary(
      a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor natural_log(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) throw DomainError(fmt::format("natural_log: non-positive input {}", v));
  }
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor clamped_log(const Tensor& a, double eps) { return natural_log(clamp(a, eps, 1.0 - eps)); }

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  Tensor result = make_result({1, 1}, {acc}, any_requires_grad({&a}));
  record(result, [an = node_of(a)](std::span<const double> g) {
    for (double& d : an->grad) d += g[0];
  });
  return result;
}

Tensor mean(const Tensor& a) {
  require(a.size() > 0, "mean", "empty tensor");
  const double n = static_cast<double>(a.size());
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  Tensor result = make_result({1, 1}, {acc / n}, any_requires_grad({&a}));
  record(result, [an = node_of(a), n](std::span<const double> g) {
    for (double& d : an->grad) d += g[0] / n;
  });
  return result;
}

Tensor mean_rows(const Tensor& a) {
  require(a.rows() > 0, "mean_rows", "empty tensor");
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<double> out(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j] += a.values()[i * cols + j];
  }
  for (double& v : out) v /= static_cast<double>(rows);
  Tensor result = make_result({1, cols}, std::move(out), any_requires_grad({&a}));
  record(result, [an = node_of(a), rows, cols](std::span<const double> g) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        an->grad[i * cols + j] += g[j] / static_cast<double>(rows);
      }
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// Softmax

Tensor row_softmax(const Tensor& x, const std::optional<Tensor>& bias, const AttentionMask* mask) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (bias) {
    require(bias->shape() == x.shape(), "row_softmax",
            fmt::format("bias {} for logits {}", bias->shape().str(), x.shape().str()));
  }
  if (mask != nullptr) {
    require(mask->size() == x.size(), "row_softmax",
            fmt::format("mask of {} entries for logits {}", mask->size(), x.shape().str()));
  }
  const auto xv = x.values();
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t k = i * cols + j;
      if (mask != nullptr && (*mask)[k]) continue;
      const double z = xv[k] + (bias ? bias->values()[k] : 0.0);
      out[k] = z;
      max = std::max(max, z);
    }
    if (max == -std::numeric_limits<double>::infinity()) {
      throw ContractError(fmt::format("row_softmax: row {} is fully masked", i));
    }
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t k = i * cols + j;
      if (mask != nullptr && (*mask)[k]) continue;
      out[k] = std::exp(out[k] - max);
      total += out[k];
    }
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] /= total;
  }
  const Tensor* bias_ptr = bias ? &*bias : nullptr;
  Tensor result = make_result(x.shape(), std::move(out),
                              any_requires_grad({&x, bias_ptr ? bias_ptr : &x}));
  record(result, [xn = node_of(x), bn = bias ? node_of(*bias) : NodePtr{}, on = node_of(result),
                  rows, cols](std::span<const double> g) {
    const auto& s = on->value;
    for (std::size_t i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[i * cols + j] * s[i * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t k = i * cols + j;
        const double d = s[k] * (g[k] - dot);
        if (xn->requires_grad) xn->grad[k] += d;
        if (bn && bn->requires_grad) bn->grad[k] += d;
      }
    }
  });
  return result;
}

Tensor row_log_softmax(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  const auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < rows; ++i) {
    double max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) max = std::max(max, xv[i * cols + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) total += std::exp(xv[i * cols + j] - max);
    const double lse = max + std::log(total);
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = xv[i * cols + j] - lse;
  }
  Tensor result = make_result(x.shape(), std::move(out), any_requires_grad({&x}));
  record(result, [xn = node_of(x), on = node_of(result), rows, cols](std::span<const double> g) {
    for (std::size_t i = 0; i < rows; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gsum += g[i * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t k = i * cols + j;
        xn->grad[k] += g[k] - std::exp(on->value[k]) * gsum;
      }
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// Reshaping

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows", "no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  bool track = false;
  for (const Tensor& p : parts) {
    require(p.cols() == cols, "concat_rows",
            fmt::format("width {} vs {}", p.cols(), cols));
    rows += p.rows();
    track = track || any_requires_grad({&p});
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  Tensor result = make_result({rows, cols}, std::move(out), track);
  std::vector<NodePtr> nodes;
  for (const Tensor& p : parts) nodes.push_back(node_of(p));
  record(result, [nodes = std::move(nodes)](std::span<const double> g) {
    std::size_t offset = 0;
    for (const NodePtr& n : nodes) {
      if (n->requires_grad) {
        for (std::size_t i = 0; i < n->value.size(); ++i) n->grad[i] += g[offset + i];
      }
      offset += n->value.size();
    }
  });
  return result;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  bool track = false;
  for (const Tensor& p : parts) {
    require(p.rows() == rows, "concat_cols", fmt::format("height {} vs {}", p.rows(), rows));
    cols += p.cols();
    track = track || any_requires_grad({&p});
  }
  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < p.cols(); ++j) out[i * cols + offset + j] = p.at(i, j);
    }
    offset += p.cols();
  }
  Tensor result = make_result({rows, cols}, std::move(out), track);
  std::vector<NodePtr> nodes;
  for (const Tensor& p : parts) nodes.push_back(node_of(p));
  record(result, [nodes = std::move(nodes), rows, cols](std::span<const double> g) {
    std::size_t offset = 0;
    for (const NodePtr& n : nodes) {
      const std::size_t w = n->shape.cols;
      if (n->requires_grad) {
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < w; ++j) n->grad[i * w + j] += g[i * cols + offset + j];
        }
      }
      offset += w;
    }
  });
  return result;
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
  require(start + count <= a.rows(), "slice_rows",
          fmt::format("rows [{}, {}) of {}", start, start + count, a.shape().str()));
  const std::size_t cols = a.cols();
  const auto first = a.values().begin() + static_cast<std::ptrdiff_t>(start * cols);
  std::vector<double> out(first, first + static_cast<std::ptrdiff_t>(count * cols));
  Tensor result = make_result({count, cols}, std::move(out), any_requires_grad({&a}));
  record(result, [an = node_of(a), start, cols](std::span<const double> g) {
    for (std::size_t i = 0; i < g.size(); ++i) an->grad[start * cols + i] += g[i];
  });
  return result;
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  require(start + count <= a.cols(), "slice_cols",
          fmt::format("cols [{}, {}) of {}", start, start + count, a.shape().str()));
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<double> out(rows * count);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = a.values()[i * cols + start + j];
  }
  Tensor result = make_result({rows, count}, std::move(out), any_requires_grad({&a}));
  record(result, [an = node_of(a), start, count, rows, cols](std::span<const double> g) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < count; ++j) an->grad[i * cols + start + j] += g[i * count + j];
    }
  });
  return result;
}

Tensor select_row(const Tensor& a, std::size_t r) { return slice_rows(a, r, 1); }

Tensor pick(const Tensor& a, std::span<const std::size_t> index) {
  require(index.size() == a.rows(), "pick",
          fmt::format("{} indices for {}", index.size(), a.shape().str()));
  const std::size_t cols = a.cols();
  std::vector<double> out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    require(index[i] < cols, "pick", fmt::format("column {} out of range", index[i]));
    out[i] = a.values()[i * cols + index[i]];
  }
  Tensor result = make_result({a.rows(), 1}, std::move(out), any_requires_grad({&a}));
  record(result, [an = node_of(a), idx = std::vector<std::size_t>(index.begin(), index.end()),
                  cols](std::span<const double> g) {
    for (std::size_t i = 0; i < idx.size(); ++i) an->grad[i * cols + idx[i]] += g[i];
  });
  return result;
}

// ---------------------------------------------------------------------------
// Layers

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t rows = x.rows(), cols = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == cols && beta.shape() == gamma.shape(), "layer_norm",
          fmt::format("gamma {} beta {} for input {}", gamma.shape().str(), beta.shape().str(),
                      x.shape().str()));
  std::vector<double> xhat(x.size()), inv(rows), out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < rows; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += xv[i * cols + j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = xv[i * cols + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    inv[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t k = i * cols + j;
      xhat[k] = (xv[k] - mu) * inv[i];
      out[k] = gamma.values()[j] * xhat[k] + beta.values()[j];
    }
  }
  Tensor result = make_result(x.shape(), std::move(out), any_requires_grad({&x, &gamma, &beta}));
  record(result, [xn = node_of(x), gn = node_of(gamma), bn = node_of(beta), xhat = std::move(xhat),
                  inv = std::move(inv), rows, cols](std::span<const double> g) {
    const double n = static_cast<double>(cols);
    std::vector<double> dxhat(cols);
    for (std::size_t i = 0; i < rows; ++i) {
      double sum_d = 0.0, sum_dx = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t k = i * cols + j;
        if (gn->requires_grad) gn->grad[j] += g[k] * xhat[k];
        if (bn->requires_grad) bn->grad[j] += g[k];
        dxhat[j] = g[k] * gn->value[j];
        sum_d += dxhat[j];
        sum_dx += dxhat[j] * xhat[k];
      }
      if (!xn->requires_grad) continue;
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t k = i * cols + j;
        xn->grad[k] += inv[i] / n * (n * dxhat[j] - sum_d - xhat[k] * sum_dx);
      }
    }
  });
  return result;
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids) {
  const std::size_t cols = table.cols();
  std::vector<double> out(ids.size() * cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] < table.rows(), "embedding_lookup",
            fmt::format("id {} outside table {}", ids[i], table.shape().str()));
    std::copy_n(table.values().begin() + static_cast<std::ptrdiff_t>(ids[i] * cols), cols,
                out.begin() + static_cast<std::ptrdiff_t>(i * cols));
  }
  Tensor result = make_result({ids.size(), cols}, std::move(out), any_requires_grad({&table}));
  record(result, [tn = node_of(table), ids = std::vector<std::size_t>(ids.begin(), ids.end()),
                  cols](std::span<const double> g) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = 0; j < cols; ++j) tn->grad[ids[i] * cols + j] += g[i * cols + j];
    }
  });
  return result;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(b.rows() == 1 && b.cols() == w.cols(), "affine",
          fmt::format("bias {} for weight {}", b.shape().str(), w.shape().str()));
  return add(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// Pairwise semantic logits

namespace {

template <bool kAbsolute>
Tensor pairwise_logits(const Tensor& x, const Tensor& w, const Tensor& b, const char* name) {
  const std::size_t n = x.rows(), h = x.cols();
  require(w.rows() == 1 && w.cols() == h && b.size() == 1, name,
          fmt::format("x {} w {} b {}", x.shape().str(), w.shape().str(), b.shape().str()));
  const auto xv = x.values();
  const auto wv = w.values();
  const double bias = b.values()[0];
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double z = 0.0;
      for (std::size_t c = 0; c < h; ++c) {
        const double d = xv[i * h + c] - xv[j * h + c];
        z += wv[c] * (kAbsolute ? std::fabs(d) : d);
      }
      out[i * n + j] = z + bias;
    }
  }
  Tensor result = make_result({n, n}, std::move(out), any_requires_grad({&x, &w, &b}));
  record(result, [xn = node_of(x), wn = node_of(w), bn = node_of(b), n,
                  h](std::span<const double> g) {
    const auto& xs = xn->value;
    const auto& ws = wn->value;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double gij = g[i * n + j];
        if (bn->requires_grad) bn->grad[0] += gij;
        if (gij == 0.0) continue;
        for (std::size_t c = 0; c < h; ++c) {
          const double d = xs[i * h + c] - xs[j * h + c];
          if constexpr (kAbsolute) {
            const double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
            if (wn->requires_grad) wn->grad[c] += gij * std::fabs(d);
            if (xn->requires_grad) {
              xn->grad[i * h + c] += gij * ws[c] * s;
              xn->grad[j * h + c] -= gij * ws[c] * s;
            }
          } else {
            if (wn->requires_grad) wn->grad[c] += gij * d;
            if (xn->requires_grad) {
              xn->grad[i * h + c] += gij * ws[c];
              xn->grad[j * h + c] -= gij * ws[c];
            }
          }
        }
      }
    }
  });
  return result;
}

}  // namespace

Tensor pairwise_difference_logits(const Tensor& x, const Tensor& w, const Tensor& b) {
  return pairwise_logits<false>(x, w, b, "pairwise_difference_logits");
}

Tensor pairwise_l1_logits(const Tensor& x, const Tensor& w, const Tensor& b) {
  return pairwise_logits<true>(x, w, b, "pairwise_l1_logits");
}

// ---------------------------------------------------------------------------
// Relative-position helpers

Tensor gather_pairs(const Tensor& m, std::span<const std::size_t> index) {
  const std::size_t n = m.rows(), buckets = m.cols();
  require(index.size() == n * n, "gather_pairs",
          fmt::format("{} indices for {} rows", index.size(), n));
  std::vector<double> out(n * n);
  for (std::size_t k = 0; k < n * n; ++k) {
    require(index[k] < buckets, "gather_pairs", fmt::format("bucket {} >= {}", index[k], buckets));
    out[k] = m.values()[(k / n) * buckets + index[k]];
  }
  Tensor result = make_result({n, n}, std::move(out), any_requires_grad({&m}));
  record(result, [mn = node_of(m), idx = std::vector<std::size_t>(index.begin(), index.end()), n,
                  buckets](std::span<const double> g) {
    for (std::size_t k = 0; k < n * n; ++k) mn->grad[(k / n) * buckets + idx[k]] += g[k];
  });
  return result;
}

Tensor bucket_sum(const Tensor& a, std::span<const std::size_t> index, std::size_t buckets) {
  const std::size_t n = a.rows();
  require(a.cols() == n && index.size() == n * n, "bucket_sum",
          fmt::format("{} indices for {}", index.size(), a.shape().str()));
  std::vector<double> out(n * buckets, 0.0);
  for (std::size_t k = 0; k < n * n; ++k) {
    require(index[k] < buckets, "bucket_sum", fmt::format("bucket {} >= {}", index[k], buckets));
    out[(k / n) * buckets + index[k]] += a.values()[k];
  }
  Tensor result = make_result({n, buckets}, std::move(out), any_requires_grad({&a}));
  record(result, [an = node_of(a), idx = std::vector<std::size_t>(index.begin(), index.end()), n,
                  buckets](std::span<const double> g) {
    for (std::size_t k = 0; k < n * n; ++k) an->grad[k] += g[(k / n) * buckets + idx[k]];
  });
  return result;
}

Tensor dropout(const Tensor& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw ContractError("dropout: rate must be below 1");
  std::vector<double> keep(a.size());
  for (double& k : keep) k = rng.uniform() < p ? 0.0 : 1.0 / (1.0 - p);
  return mul(a, Tensor::from(a.rows(), a.cols(), std::move(keep)));
}

}  // namespace det::ad
