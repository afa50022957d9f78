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
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <string>

#include "fedutr/convergence.h"
#include "json.hpp"
#include "test_util.h"

namespace fedutr {
namespace {

ConvexTestbed Scalar(std::vector<double> centres, double lambda) {
  ConvexTestbedSpec spec;
  spec.n_clients = centres.size();
  spec.dim = 1;
  spec.mu = 1.0;
  spec.smoothness = 1.0;
  spec.lambda_l1 = lambda;
  std::vector<Eigen::MatrixXd> a;
  std::vector<Eigen::VectorXd> c;
  for (double x : centres) {
    a.push_back(Eigen::MatrixXd::Identity(1, 1));
    c.push_back(Eigen::VectorXd::Constant(1, x));
  }
  return MakeTestbed(spec, a, c);
}

TEST(Optimum, HandCheckedCases) {
  ConvexTestbedSpec spec;
  spec.n_clients = 1;
  spec.dim = 2;
  spec.mu = spec.smoothness = 1.0;
  const auto one = MakeTestbed(spec, {Eigen::MatrixXd::Identity(2, 2)},
                               {Eigen::Vector2d(1.0, 2.0)});
  const Optimum o1 = ClosedFormOptimum(one);
  EXPECT_NEAR(o1.theta[0], 1.0, 1e-12);
  EXPECT_NEAR(o1.theta[1], 2.0, 1e-12);
  EXPECT_NEAR(o1.value, 0.0, 1e-15);

  // ½·½(1-0)² + ½·½(1-2)²
  const Optimum o2 = ClosedFormOptimum(Scalar({0.0, 2.0}, 0.0));
  EXPECT_NEAR(o2.theta[0], 1.0, 1e-12);
  EXPECT_NEAR(o2.value, 0.5, 1e-12);

  // Soft threshold of 3 by λ = 1, then by a λ past the centre.
  const Optimum o3 = ClosedFormOptimum(Scalar({3.0}, 1.0));
  EXPECT_NEAR(o3.theta[0], 2.0, 1e-10);
  EXPECT_NEAR(o3.value, 0.5 + 2.0, 1e-10);
  const Optimum o4 = ClosedFormOptimum(Scalar({3.0}, 4.0));
  EXPECT_NEAR(o4.theta[0], 0.0, 1e-10);
  EXPECT_NEAR(o4.value, 4.5, 1e-10);
}

TEST(Testbed, SpectrumWithinBounds) {
  ConvexTestbedSpec spec;
  spec.dim = 6;
  const ConvexTestbed tb = MakeTestbed(spec);
  ASSERT_EQ(tb.a.size(), spec.n_clients);
  for (const auto& a : tb.a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    EXPECT_NEAR(es.eigenvalues().minCoeff(), spec.mu, 1e-9);
    EXPECT_NEAR(es.eigenvalues().maxCoeff(), spec.smoothness, 1e-9);
    EXPECT_NEAR((a - a.transpose()).norm(), 0.0, 1e-12);
  }
  spec.mu = 0;
  EXPECT_THROW(spec.Validate(), std::invalid_argument);
}

TEST(StepSize, Formula) {
  ConvexTestbedSpec spec;  // μ 0.5, L 2, E 5: γ = 31
  EXPECT_DOUBLE_EQ(StepSize(spec, 1), 2.0 / (0.5 * 32));
  EXPECT_DOUBLE_EQ(StepSize(spec, 100), 2.0 / (0.5 * 131));
  spec.mu = 2.0;
  spec.local_epochs = 40;  // E dominates 8L/μ = 8
  EXPECT_DOUBLE_EQ(StepSize(spec, 1), 2.0 / (2.0 * 40));
}

TEST(FedAvg, NoiselessSingleClientIsMonotone) {
  ConvexTestbedSpec spec;
  spec.n_clients = 1;
  spec.local_epochs = 1;
  spec.noise_std = 0.0;
  spec.dim = 5;
  const ConvexTestbed tb = MakeTestbed(spec);
  FedRunOptions opt;
  opt.rounds = 300;
  const FedRunResult r = RunFedAvgQuadratic(tb, opt);
  ASSERT_EQ(r.gap.size(), 300u);
  for (std::size_t t = 1; t < r.gap.size(); ++t) ASSERT_LE(r.gap[t], r.gap[t - 1]);
}

TEST(FedAvg, SharedNoiseForgetsTheInitialPoint) {
  ConvexTestbedSpec spec;
  spec.dim = 4;
  const ConvexTestbed tb = MakeTestbed(spec);
  FedRunOptions opt;
  opt.rounds = 400;
  const FedRunResult a = RunFedAvgQuadratic(tb, opt);
  opt.init = Eigen::VectorXd::Constant(4, 10.0);
  const FedRunResult b = RunFedAvgQuadratic(tb, opt);
  EXPECT_GT(b.gap[0], a.gap[0]);
  EXPECT_LT((a.theta - b.theta).norm(), 1e-3 * std::sqrt(4 * 100.0));
}

TEST(FedAvgProperty, LamGateNeverDriftsFurther) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ConvexTestbedSpec spec;
    spec.dim = 5;
    spec.seed = seed;
    const ConvexTestbed tb = MakeTestbed(spec);
    FedRunOptions opt;
    opt.rounds = 100;
    opt.noise_seed = seed + 10;
    const double plain = RunFedAvgQuadratic(tb, opt).max_drift;
    opt.variant = FedVariant::kLam;
    const FedRunResult lam = RunFedAvgQuadratic(tb, opt);
    EXPECT_LE(lam.max_drift, plain) << "seed " << seed;
    for (double g : lam.gap) ASSERT_GE(g, -1e-12);
  }
}

TEST(RateFit, RecoversHyperbola) {
  std::vector<double> gap;
  for (int t = 1; t <= 500; ++t) gap.push_back(5.0 / (3.0 + t));
  for (std::size_t burn : {0u, 50u}) {
    const RateFitResult f = FitRate(gap, burn);
    EXPECT_NEAR(f.c, 5.0, 1e-8);
    EXPECT_NEAR(f.gamma, 3.0, 1e-6);
    EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
    EXPECT_NEAR(f.envelope_ratio, 1.0, 1e-9);
    EXPECT_TRUE(f.passed);
  }
}

TEST(RateFit, ExponentialDecayIsNotAHyperbola) {
  std::vector<double> gap;
  for (int t = 1; t <= 300; ++t) gap.push_back(std::exp(-0.05 * t));
  const RateFitResult f = FitRate(gap, 0);
  EXPECT_LT(f.r_squared, kRateFitMinR2);
  EXPECT_FALSE(f.passed);
  EXPECT_THROW(FitRate(std::vector<double>(250, 1.0), 60), std::invalid_argument);
}

TEST(Outputs, CsvAndJson) {
  const auto dir = testing::TempDir("conv");
  WriteGapCsv(dir / "g.csv", {0.5, 0.25});
  std::ifstream in(dir / "g.csv");
  std::string a, b, c;
  std::getline(in, a);
  std::getline(in, b);
  std::getline(in, c);
  EXPECT_EQ(a, "round,gap");
  EXPECT_EQ(b, "1,0.5");
  EXPECT_EQ(c, "2,0.25");

  std::vector<double> gap;
  for (int t = 1; t <= 300; ++t) gap.push_back(1.0 / t);
  const auto j = nlohmann::json::parse(RateFitToJson(FitRate(gap, 0)));
  EXPECT_EQ(j["points"], 300);
  EXPECT_EQ(j["passed"], true);
  EXPECT_NEAR(j["gamma"].get<double>(), 0.0, 1e-8);
}

}  // namespace
}  // namespace fedutr
