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

// Dense row-major matrices with a define-by-run gradient tape.
//
// Every value is a 2-D matrix (vectors are 1 x h rows, scalars 1 x 1).
// Operations record onto the tape installed by the innermost TapeScope on
// the calling thread; with no active tape they only compute values, which is
// how inference runs. A tape supports exactly one backward pass.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "det/rng.h"

namespace det::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized iff requires_grad
  bool requires_grad = false;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, double value);
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.rows; }
  std::size_t cols() const { return node_->shape.cols; }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  // Direct write access; only for parameters outside a recorded forward pass.
  std::span<double> mutable_values() { return node_->value; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  double item() const;
  std::vector<double> row_values(std::size_t r) const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on);
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  void zero_grad();

  // Copy of the values with no gradient tracking.
  Tensor detach() const;
  bool same_as(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend class Tape;
  friend Tensor make_result(Shape, std::vector<double>, bool);
  friend std::shared_ptr<detail::Node> node_of(const Tensor&);
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const Tensor& output, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and walks the records in reverse, visiting each
  // once. Gradients accumulate into every requires_grad tensor. The tape is
  // consumed afterwards.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Record {
    std::shared_ptr<detail::Node> output;
    BackwardFn fn;
  };
  std::vector<Record> records_;
  bool consumed_ = false;
};

// Installs a tape as the active recording target for this thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Suspends recording for the current thread (inference passes).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// When enabled (default), any non-finite op output throws NumericError.
void set_strict_numerics(bool on);
bool strict_numerics();

inline constexpr double kLogClampEpsilon = 1e-7;

// n x n mask, row-major; nonzero marks an excluded (minus infinity) logit.
using AttentionMask = std::vector<std::uint8_t>;

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise; b may also be a 1 x cols row broadcast over the rows of a.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor abs(const Tensor& a);
// Throws DomainError on any non-positive entry.
Tensor natural_log(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
// clamp(a, eps, 1 - eps) followed by natural_log.
Tensor clamped_log(const Tensor& a, double eps = kLogClampEpsilon);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// 1 x cols mean over rows.
Tensor mean_rows(const Tensor& a);

// Softmax over each row of (x + bias); masked entries are exactly zero.
Tensor row_softmax(const Tensor& x, const std::optional<Tensor>& bias = std::nullopt,
                   const AttentionMask* mask = nullptr);
Tensor row_log_softmax(const Tensor& x);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
Tensor select_row(const Tensor& a, std::size_t r);
// out[i] = a[i, index[i]], shape rows x 1.
Tensor pick(const Tensor& a, std::span<const std::size_t> index);

// Per-row normalization to zero mean / unit variance, then gamma * x + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-10);
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids);
// x * W + b with b a 1 x out row.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

// z[i][j] = w . (x_i - x_j) + b for x (n x h), w (1 x h), b (1 x 1).
Tensor pairwise_difference_logits(const Tensor& x, const Tensor& w, const Tensor& b);
// z[i][j] = w . |x_i - x_j| + b.
Tensor pairwise_l1_logits(const Tensor& x, const Tensor& w, const Tensor& b);

// out[i][j] = m[i][index[i*n + j]] for m (n x buckets), index (n x n).
Tensor gather_pairs(const Tensor& m, std::span<const std::size_t> index);
// out[i][b] = sum over j with index[i*n + j] == b of a[i][j].
Tensor bucket_sum(const Tensor& a, std::span<const std::size_t> index, std::size_t buckets);

// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& a, double p, Rng& rng);

}  // namespace det::ad
