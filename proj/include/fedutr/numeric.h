/*
 * Copyright 2026 The FedUTR Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
// Dense storage and the handful of differentiable building blocks used by
// the client model: affine map, ReLU, sigmoid, layer normalization and
// elementwise combinations, each with an explicit backward pass.
//
// Forward functions that need state for their backward return a cache
// object alongside the output. Backward functions accumulate (`+=`) into
// caller-owned gradient buffers so that a sum over many items can be formed
// without temporaries.
#ifndef FEDUTR_NUMERIC_H_
#define FEDUTR_NUMERIC_H_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fedutr {

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}
  explicit Vector(std::span<const double> values)
      : data_(values.begin(), values.end()) {}

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  operator std::span<const double>() const { return data_; }  // NOLINT

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  const std::vector<double>& values() const { return data_; }

  void fill(double value);

  bool operator==(const Vector& other) const = default;

 private:
  std::vector<double> data_;
};

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix Identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void fill(double value);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// --- shape and finiteness guards -------------------------------------------

// Throws ShapeError naming `what` when `a != b`.
void CheckSameSize(std::size_t a, std::size_t b, const char* what);
// Throws NonFiniteError when any entry is NaN or Inf.
void CheckFinite(std::span<const double> values, const char* what);
bool AllFinite(std::span<const double> values);

// --- elementwise helpers ----------------------------------------------------

double Dot(std::span<const double> a, std::span<const double> b);
double Norm2(std::span<const double> a);
// Cosine similarity; 0 when either side is the zero vector.
double Cosine(std::span<const double> a, std::span<const double> b);
Vector Add(std::span<const double> a, std::span<const double> b);
Vector Hadamard(std::span<const double> a, std::span<const double> b);
// y += alpha * x
void Axpy(double alpha, std::span<const double> x, std::span<double> y);
void Scale(double alpha, std::span<double> x);

// Backward of c = a + b (both inputs receive grad_out) and c = a ⊙ b.
void AddBackward(std::span<const double> grad_out, std::span<double> grad_a,
                 std::span<double> grad_b);
void HadamardBackward(std::span<const double> a, std::span<const double> b,
                      std::span<const double> grad_out,
                      std::span<double> grad_a, std::span<double> grad_b);
// Backward of s = a · b for a scalar upstream gradient.
void DotBackward(std::span<const double> a, std::span<const double> b,
                 double grad_out, std::span<double> grad_a,
                 std::span<double> grad_b);

// --- affine map ---------------------------------------------------------------

// Returns W x + b.
Vector AffineForward(const Matrix& w, std::span<const double> b,
                     std::span<const double> x);

// Accumulates dL/dW += g xᵀ, dL/db += g, dL/dx += Wᵀ g. `grad_x` may be
// empty when the input gradient is not needed.
void AffineBackward(const Matrix& w, std::span<const double> x,
                    std::span<const double> grad_out, Matrix& grad_w,
                    std::span<double> grad_b, std::span<double> grad_x);

// --- activations ---------------------------------------------------------------

double Sigmoid(double x);
// log(1 + e^x) without overflow.
double Softplus(double x);

Vector Relu(std::span<const double> x);
Vector Sigmoid(std::span<const double> x);

// Gradient through ReLU given its pre-activation input. The subgradient at
// exactly zero is 0.
Vector ReluBackward(std::span<const double> pre_activation,
                    std::span<const double> grad_out);
// Gradient through sigmoid given its forward output s: g * s * (1 - s).
Vector SigmoidBackward(std::span<const double> output,
                       std::span<const double> grad_out);

// --- layer normalization --------------------------------------------------

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  Vector normalized;  // (x - mean) / sqrt(var + eps)
  double inv_std = 0.0;
  bool valid() const { return !normalized.empty(); }
};

struct LayerNormOutput {
  Vector value;
  LayerNormCache cache;
};

// gamma ⊙ (x - mean(x)) / sqrt(var(x) + eps) + beta with the population
// (1/d) variance. Requires d >= 2 and eps > 0.
LayerNormOutput LayerNormForward(std::span<const double> x,
                                 std::span<const double> gamma,
                                 std::span<const double> beta,
                                 double eps = kLayerNormEps);

// Accumulates parameter gradients and returns dL/dx. Throws
// std::logic_error on an empty cache.
Vector LayerNormBackward(const LayerNormCache& cache,
                         std::span<const double> gamma,
                         std::span<const double> grad_out,
                         std::span<double> grad_gamma,
                         std::span<double> grad_beta);

// --- finite-difference gradient checking -----------------------------------

struct GradCheckReport {
  std::vector<double> numeric;
  std::vector<double> relative_error;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = false;

  std::string Summary() const;
};

using ScalarFunction = std::function<double(std::span<const double>)>;

// Compares central differences of `f` at `x` against `analytic`. The relative
// error of coordinate j is |num_j - ana_j| / max(|num_j|, |ana_j|, floor) so
// that vanishing gradients are compared absolutely at the `floor` scale.
GradCheckReport FiniteDiffCheck(const ScalarFunction& f,
                                std::span<const double> x,
                                std::span<const double> analytic,
                                double step = 1e-6, double tol = 1e-4,
                                double floor = 1e-3);

}  // namespace fedutr

#endif  // FEDUTR_NUMERIC_H_
