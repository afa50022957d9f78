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
#include "fedutr/rng.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fedutr {

std::uint64_t Mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::Fork(std::uint64_t stream) const {
  return Rng(Mix64(seed_ ^ Mix64(stream)));
}

double Rng::Uniform() {
  // 53 random mantissa bits, shifted by half an ulp so 0 is never produced.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t Rng::UniformInt(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::UniformInt: n == 0");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::Gaussian(double mean, double stddev) {
  const double u1 = Uniform();
  const double u2 = Uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::Laplace(double scale) {
  const double u = Uniform() - 0.5;
  const double magnitude = -scale * std::log(1.0 - 2.0 * std::abs(u));
  return u < 0.0 ? -magnitude : magnitude;
}

Vector SampleLaplace(Rng& rng, double scale, std::size_t n) {
  Vector out(n);
  AddLaplaceNoise(rng, scale, out.span());
  return out;
}

void AddLaplaceNoise(Rng& rng, double scale, std::span<double> values) {
  if (scale < 0.0 || !std::isfinite(scale)) {
    throw std::invalid_argument("Laplace scale must be finite and >= 0");
  }
  if (scale == 0.0) return;
  for (double& v : values) v += rng.Laplace(scale);
}

Vector SampleGaussian(Rng& rng, double mean, double stddev, std::size_t n) {
  Vector out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = rng.Gaussian(mean, stddev);
  return out;
}

}  // namespace fedutr
