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
#include "fedutr/numeric.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fedutr/errors.h"

namespace fedutr {

void Vector::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  CheckSameSize(data_.size(), rows * cols, "Matrix values");
}

Matrix Matrix::Identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void CheckSameSize(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    std::ostringstream msg;
    msg << what << ": size mismatch (" << a << " vs " << b << ")";
    throw ShapeError(msg.str());
  }
}

bool AllFinite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

void CheckFinite(std::span<const double> values, const char* what) {
  if (!AllFinite(values)) {
    throw NonFiniteError(std::string(what) + ": non-finite value");
  }
}

double Dot(std::span<const double> a, std::span<const double> b) {
  CheckSameSize(a.size(), b.size(), "Dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double Norm2(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

double Cosine(std::span<const double> a, std::span<const double> b) {
  const double na = Norm2(a);
  const double nb = Norm2(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return Dot(a, b) / (na * nb);
}

Vector Add(std::span<const double> a, std::span<const double> b) {
  CheckSameSize(a.size(), b.size(), "Add");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vector Hadamard(std::span<const double> a, std::span<const double> b) {
  CheckSameSize(a.size(), b.size(), "Hadamard");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

void Axpy(double alpha, std::span<const double> x, std::span<double> y) {
  CheckSameSize(x.size(), y.size(), "Axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void Scale(double alpha, std::span<double> x) {
  for (double& v : x) v *= alpha;
}

void AddBackward(std::span<const double> grad_out, std::span<double> grad_a,
                 std::span<double> grad_b) {
  Axpy(1.0, grad_out, grad_a);
  Axpy(1.0, grad_out, grad_b);
}

void HadamardBackward(std::span<const double> a, std::span<const double> b,
                      std::span<const double> grad_out,
                      std::span<double> grad_a, std::span<double> grad_b) {
  CheckSameSize(a.size(), b.size(), "HadamardBackward");
  CheckSameSize(a.size(), grad_out.size(), "HadamardBackward grad");
  CheckSameSize(grad_a.size(), a.size(), "HadamardBackward grad_a");
  CheckSameSize(grad_b.size(), b.size(), "HadamardBackward grad_b");
  for (std::size_t i = 0; i < a.size(); ++i) {
    grad_a[i] += grad_out[i] * b[i];
    grad_b[i] += grad_out[i] * a[i];
  }
}

void DotBackward(std::span<const double> a, std::span<const double> b,
                 double grad_out, std::span<double> grad_a,
                 std::span<double> grad_b) {
  CheckSameSize(a.size(), b.size(), "DotBackward");
  Axpy(grad_out, b, grad_a);
  Axpy(grad_out, a, grad_b);
}

Vector AffineForward(const Matrix& w, std::span<const double> b,
                     std::span<const double> x) {
  CheckSameSize(w.cols(), x.size(), "AffineForward input");
  CheckSameSize(w.rows(), b.size(), "AffineForward bias");
  Vector out(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto row = w.row(r);
    double s = b[r];
    for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * x[c];
    out[r] = s;
  }
  return out;
}

void AffineBackward(const Matrix& w, std::span<const double> x,
                    std::span<const double> grad_out, Matrix& grad_w,
                    std::span<double> grad_b, std::span<double> grad_x) {
  CheckSameSize(w.cols(), x.size(), "AffineBackward input");
  CheckSameSize(w.rows(), grad_out.size(), "AffineBackward grad");
  CheckSameSize(grad_w.rows(), w.rows(), "AffineBackward grad_w rows");
  CheckSameSize(grad_w.cols(), w.cols(), "AffineBackward grad_w cols");
  CheckSameSize(grad_b.size(), w.rows(), "AffineBackward grad_b");
  const bool want_x = !grad_x.empty();
  if (want_x) CheckSameSize(grad_x.size(), w.cols(), "AffineBackward grad_x");
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double g = grad_out[r];
    if (g == 0.0) continue;
    grad_b[r] += g;
    auto gw = grad_w.row(r);
    const auto wr = w.row(r);
    for (std::size_t c = 0; c < x.size(); ++c) {
      gw[c] += g * x[c];
      if (want_x) grad_x[c] += g * wr[c];
    }
  }
}

double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double Softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

Vector Relu(std::span<const double> x) {
  CheckFinite(x, "Relu");
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Vector Sigmoid(std::span<const double> x) {
  CheckFinite(x, "Sigmoid");
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = Sigmoid(x[i]);
  return out;
}

Vector ReluBackward(std::span<const double> pre_activation,
                    std::span<const double> grad_out) {
  CheckSameSize(pre_activation.size(), grad_out.size(), "ReluBackward");
  Vector out(grad_out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = pre_activation[i] > 0.0 ? grad_out[i] : 0.0;
  }
  return out;
}

Vector SigmoidBackward(std::span<const double> output,
                       std::span<const double> grad_out) {
  CheckSameSize(output.size(), grad_out.size(), "SigmoidBackward");
  Vector out(output.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = grad_out[i] * output[i] * (1.0 - output[i]);
  }
  return out;
}

LayerNormOutput LayerNormForward(std::span<const double> x,
                                 std::span<const double> gamma,
                                 std::span<const double> beta, double eps) {
  const std::size_t d = x.size();
  if (d < 2) throw ShapeError("LayerNormForward: dimension must be >= 2");
  if (!(eps > 0.0)) throw std::invalid_argument("LayerNormForward: eps <= 0");
  CheckSameSize(gamma.size(), d, "LayerNormForward gamma");
  CheckSameSize(beta.size(), d, "LayerNormForward beta");

  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);

  LayerNormOutput out;
  out.cache.inv_std = 1.0 / std::sqrt(var + eps);
  out.cache.normalized = Vector(d);
  out.value = Vector(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double n = (x[i] - mean) * out.cache.inv_std;
    out.cache.normalized[i] = n;
    out.value[i] = gamma[i] * n + beta[i];
  }
  return out;
}

Vector LayerNormBackward(const LayerNormCache& cache,
                         std::span<const double> gamma,
                         std::span<const double> grad_out,
                         std::span<double> grad_gamma,
                         std::span<double> grad_beta) {
  if (!cache.valid()) {
    throw std::logic_error("LayerNormBackward: missing forward cache");
  }
  const std::size_t d = cache.normalized.size();
  CheckSameSize(gamma.size(), d, "LayerNormBackward gamma");
  CheckSameSize(grad_out.size(), d, "LayerNormBackward grad");
  CheckSameSize(grad_gamma.size(), d, "LayerNormBackward grad_gamma");
  CheckSameSize(grad_beta.size(), d, "LayerNormBackward grad_beta");

  Vector g_norm(d);
  double mean_g = 0.0;
  double mean_gn = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    grad_gamma[i] += grad_out[i] * cache.normalized[i];
    grad_beta[i] += grad_out[i];
    g_norm[i] = grad_out[i] * gamma[i];
    mean_g += g_norm[i];
    mean_gn += g_norm[i] * cache.normalized[i];
  }
  mean_g /= static_cast<double>(d);
  mean_gn /= static_cast<double>(d);

  Vector grad_x(d);
  for (std::size_t i = 0; i < d; ++i) {
    grad_x[i] = cache.inv_std *
                (g_norm[i] - mean_g - cache.normalized[i] * mean_gn);
  }
  return grad_x;
}

std::string GradCheckReport::Summary() const {
  std::ostringstream s;
  s << (passed ? "PASS" : "FAIL") << " max_rel_err=" << max_relative_error
    << " at index " << worst_index << " of " << relative_error.size();
  return s.str();
}

GradCheckReport FiniteDiffCheck(const ScalarFunction& f,
                                std::span<const double> x,
                                std::span<const double> analytic, double step,
                                double tol, double floor) {
  CheckSameSize(x.size(), analytic.size(), "FiniteDiffCheck");
  GradCheckReport report;
  report.numeric.resize(x.size());
  report.relative_error.resize(x.size());
  std::vector<double> probe(x.begin(), x.end());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double saved = probe[j];
    probe[j] = saved + step;
    const double up = f(probe);
    probe[j] = saved - step;
    const double down = f(probe);
    probe[j] = saved;
    const double num = (up - down) / (2.0 * step);
    const double denom =
        std::max({std::abs(num), std::abs(analytic[j]), floor});
    const double rel = std::abs(num - analytic[j]) / denom;
    report.numeric[j] = num;
    report.relative_error[j] = rel;
    if (rel > report.max_relative_error || !std::isfinite(rel)) {
      report.max_relative_error = rel;
      report.worst_index = j;
    }
  }
  report.passed = std::isfinite(report.max_relative_error) &&
                  report.max_relative_error <= tol;
  return report;
}

}  // namespace fedutr
