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
#ifndef FEDUTR_RNG_H_
#define FEDUTR_RNG_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fedutr/numeric.h"

namespace fedutr {

// SplitMix64 finalizer; a bijection on 64-bit words.
std::uint64_t Mix64(std::uint64_t x);

// Seedable generator built on std::mt19937_64, whose output sequence is fixed
// by the C++ standard. Real-valued draws are derived from the raw 64-bit
// stream by hand (not by <random> distributions, whose algorithms differ
// between standard libraries) so samples are identical across platforms.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Independent child stream: seed' = Mix64(seed ^ Mix64(stream)). Depends
  // only on (seed, stream), never on how much of this stream was consumed.
  Rng Fork(std::uint64_t stream) const;

  std::uint64_t NextU64() { return engine_(); }
  // Uniform on the open interval (0, 1).
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t UniformInt(std::uint64_t n);
  double Gaussian(double mean = 0.0, double stddev = 1.0);
  // Zero-mean Laplace with the given scale (mean absolute deviation).
  double Laplace(double scale);
  bool Bernoulli(double p) { return Uniform() < p; }

  template <typename T>
  void Shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = UniformInt(i);
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// i.i.d. Laplace(0, scale) samples. scale == 0 yields exact zeros; a negative
// scale throws std::invalid_argument.
Vector SampleLaplace(Rng& rng, double scale, std::size_t n);
void AddLaplaceNoise(Rng& rng, double scale, std::span<double> values);

Vector SampleGaussian(Rng& rng, double mean, double stddev, std::size_t n);

}  // namespace fedutr

#endif  // FEDUTR_RNG_H_
