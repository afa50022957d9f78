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
// Federated SGD on strongly convex quadratics, where the optimum is known
// exactly and the optimality gap of every round can be measured.
//
//   F(θ) = (1/n) Σ_u ½ (θ - c_u)ᵀ A_u (θ - c_u) + λ ||θ||_1
#ifndef FEDUTR_CONVERGENCE_H_
#define FEDUTR_CONVERGENCE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fedutr {

struct ConvexTestbedSpec {
  std::size_t n_clients = 10;
  std::size_t dim = 20;
  double mu = 0.5;              // smallest eigenvalue of every A_u
  double smoothness = 2.0;      // largest eigenvalue (L)
  double lambda_l1 = 0.0;
  std::size_t local_epochs = 5;
  double noise_std = 0.1;       // σ of the additive gradient noise
  double heterogeneity = 1.0;   // std of the client centres c_u
  std::uint64_t seed = 1;

  // Throws std::invalid_argument on mu <= 0, L < mu or empty shapes.
  void Validate() const;
};

struct ConvexTestbed {
  ConvexTestbedSpec spec;
  std::vector<Eigen::MatrixXd> a;  // symmetric, spectrum in [mu, L]
  std::vector<Eigen::VectorXd> c;
};

// Random orthogonal eigenbases with eigenvalues spread over [mu, L]
// (both endpoints included).
ConvexTestbed MakeTestbed(const ConvexTestbedSpec& spec);

// Builds a testbed from explicit matrices; used for hand-checked cases.
ConvexTestbed MakeTestbed(const ConvexTestbedSpec& spec,
                          std::vector<Eigen::MatrixXd> a,
                          std::vector<Eigen::VectorXd> c);

double Objective(const ConvexTestbed& tb, const Eigen::VectorXd& theta);

struct Optimum {
  Eigen::VectorXd theta;
  double value = 0.0;
  std::size_t iterations = 0;  // proximal-gradient iterations (0 when closed form)
};

// Linear solve when lambda_l1 == 0, otherwise proximal gradient iterated
// until successive iterates differ by < 1e-12.
Optimum ClosedFormOptimum(const ConvexTestbed& tb);

enum class FedVariant { kPlain, kL1Prox, kLam };
std::string ToString(FedVariant v);
FedVariant ParseFedVariant(const std::string& name);

struct FedRunOptions {
  FedVariant variant = FedVariant::kPlain;
  std::size_t rounds = 2000;
  std::size_t replicates = 1;              // noise replicates averaged into e_t
  std::optional<Eigen::VectorXd> init;     // zeros when absent
  double lam_rho = 0.5;                    // gate value for kLam
  std::uint64_t noise_seed = 7;
};

struct FedRunResult {
  std::vector<double> gap;       // e_t for t = 1..T, replicate mean
  std::vector<double> drift;     // per round max_u ||θ_u - θ_g|| (replicate 0)
  double max_drift = 0.0;
  Eigen::VectorXd theta;         // final global iterate of replicate 0
  double final_value = 0.0;
  double optimum_value = 0.0;
};

// η_t = 2 / (μ (γ + t)) with γ = max(8L/μ, E) - 1, t counting local steps.
double StepSize(const ConvexTestbedSpec& spec, std::size_t t);

// kLam contracts every local iterate toward the round's global model by a
// gate ρ clamped to [0.01, 0.99]; kL1Prox and kLam soft-threshold after
// each step when lambda_l1 > 0. Throws std::runtime_error naming the
// config if the gap becomes non-finite.
FedRunResult RunFedAvgQuadratic(const ConvexTestbed& tb, const FedRunOptions& options);

struct RateFitResult {
  std::vector<double> gap;
  std::size_t burn_in = 0;
  double slope = 0.0;       // of 1/e_t against t
  double intercept = 0.0;
  double c = 0.0;           // e_t ≈ C / (γ + t)
  double gamma = 0.0;
  double r_squared = 0.0;
  bool passed = false;      // R² >= 0.95 and slope > 0
  double envelope_ratio = 0.0;  // max / median of e_t (γ + t) after burn-in
};

inline constexpr double kRateFitMinR2 = 0.95;

// Least squares of 1/e_t on t over the rounds after `burn_in` (t is
// 1-based). Gaps are clipped at 1e-15. Throws std::invalid_argument when
// fewer than 200 points remain.
RateFitResult FitRate(const std::vector<double>& gap, std::size_t burn_in);

void WriteGapCsv(const std::filesystem::path& path, const std::vector<double>& gap);
std::string RateFitToJson(const RateFitResult& fit);

}  // namespace fedutr

#endif  // FEDUTR_CONVERGENCE_H_
