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

#include "fedutr/errors.h"
#include "fedutr/model.h"
#include "test_util.h"

namespace fedutr {
namespace {

// Straight-line recomputation, written without the library's ops.
std::vector<double> FuseOracle(const CifmParams& p, const std::vector<double>& e, double alpha,
                               bool gated) {
  const std::size_t d = e.size();
  std::vector<double> h(d);
  for (std::size_t r = 0; r < d; ++r) {
    double z = p.b[r];
    for (std::size_t c = 0; c < d; ++c) z += p.w(r, c) * e[c];
    z = z > 0 ? z : 0;
    h[r] = gated ? alpha * z + (1 - alpha) * e[r] : z + e[r];
  }
  double mean = 0;
  for (double v : h) mean += v;
  mean /= d;
  double var = 0;
  for (double v : h) var += (v - mean) * (v - mean);
  var /= d;
  std::vector<double> out(d);
  for (std::size_t r = 0; r < d; ++r) {
    out[r] = p.gamma[r] * (h[r] - mean) / std::sqrt(var + 1e-5) + p.beta[r];
  }
  return out;
}

std::vector<double> Vec(std::span<const double> s) { return {s.begin(), s.end()}; }

TEST(Cifm, ZeroMlpIsLayerNormOfInput) {
  const std::size_t d = 4;
  CifmParams p = CifmParams::Identity(d);
  const Vector e{0.3, -1, 2, 0.5};
  const Vector out = CifmForward(p, e);
  const auto ln = LayerNormForward(e, Vector(d, 1.0), Vector(d, 0.0));
  for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(out[i], ln.value[i], 1e-15);
  p.gamma.fill(0.0);
  p.beta = Vector{1, 2, 3, 4};
  EXPECT_EQ(CifmForward(p, e), (Vector{1, 2, 3, 4}));
  EXPECT_EQ(p.parameter_count(), 16u + 12u);
}

TEST(Cifm, RandomMatchesOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ClientModel cm = testing::RandomModel(ModelMode::kFedUtr, 6, 3, seed);
    const auto e = Vec(cm.items.row(1));
    const Vector got = CifmForward(cm.cifm, e);
    const auto want = FuseOracle(cm.cifm, e, 0, false);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Sar, GateValuesAndLimits) {
  const ClientModel cm = testing::RandomModel(ModelMode::kFedUtrSar, 5, 2, 4);
  const auto e = Vec(cm.items.row(0));
  const Vector half = SarForward(cm.cifm, SarParams{0, 0}, e, 7);
  const auto want = FuseOracle(cm.cifm, e, 0.5, true);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(half[i], want[i], 1e-12);

  EXPECT_EQ(SarGate({50.0, 0.3}, 0.0), Sigmoid(0.3));
  EXPECT_NEAR(SarGate({2.0, -1.0}, 3.0), Sigmoid(2.0 * std::log(4.0) - 1.0), 1e-15);

  const Vector closed = SarForward(cm.cifm, SarParams{0, -20}, e, 3);
  const Vector direct = LayerNormForward(e, cm.cifm.gamma, cm.cifm.beta).value;
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(closed[i], direct[i], 1e-6);
  EXPECT_THROW(SarForward(cm.cifm, SarParams{}, e, -1), std::invalid_argument);
}

TEST(SarProperty, GateIncreasesWithActivity) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const SarParams sar{0.01 + rng.Uniform() * 3, rng.Gaussian(0, 2)};
    double prev = SarGate(sar, 0);
    for (int n = 1; n < 200; ++n) {
      const double a = SarGate(sar, n);
      ASSERT_GT(a, prev);
      prev = a;
    }
  }
}

TEST(Predict, ClosedForms) {
  ClientModel cm;
  cm.mode = ModelMode::kFcfBaseline;
  cm.user_vec = Vector{1, 0};
  cm.items = Matrix(2, 2, {0, 1, std::log(3.0), 0});
  EXPECT_EQ(Predict(cm, 0), 0.5);
  EXPECT_NEAR(Predict(cm, 1), 0.75, 1e-15);
  EXPECT_THROW(Predict(cm, 2), std::out_of_range);
}

TEST(ModeProperty, NoCifmEqualsFcfOnSameParameters) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ClientModel a = testing::RandomModel(ModelMode::kNoCifm, 8, 10, seed);
    ClientModel b = a;
    b.mode = ModelMode::kFcfBaseline;
    for (ItemId i = 0; i < 10; ++i) {
      ASSERT_EQ(Predict(a, i), Predict(b, i));
      ASSERT_EQ(Predict(a, i), Sigmoid(Dot(a.user_vec, a.items.row(i))));
    }
  }
}

TEST(Loss, TwoItemsAtOneHalfAndL1Arithmetic) {
  ClientModel cm;
  cm.mode = ModelMode::kFcfBaseline;
  cm.user_vec = Vector{0, 0};
  cm.items = Matrix(2, 2, 0.3);
  const std::vector<ItemId> pos{0}, neg{1};
  const auto lg = ComputeLossAndGrads(cm, pos, neg, 0.0);
  EXPECT_NEAR(lg.loss.rec_loss, 2 * std::log(2.0), 1e-15);

  ClientModel f = testing::RandomModel(ModelMode::kFedUtr, 2, 2, 1);
  for (double& v : f.cifm.w.flat()) v = 0.1;
  f.cifm.b.fill(0.1);
  f.cifm.gamma.fill(0.1);
  f.cifm.beta.fill(0.1);
  const auto l = ComputeLossAndGrads(f, pos, neg, 1.0);
  EXPECT_NEAR(l.loss.l1_penalty, 1.0, 1e-15);
  EXPECT_NEAR(l.loss.total, l.loss.rec_loss + 1.0, 1e-12);
  EXPECT_THROW(ComputeLossAndGrads(f, {}, neg, 0.0), std::invalid_argument);
}

TEST(LossProperty, BoundsOnPredictionsAndLoss) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    for (ModelMode mode : {ModelMode::kFedUtr, ModelMode::kFedUtrSar, ModelMode::kFcfBaseline,
                           ModelMode::kNoCifm}) {
      const ClientModel cm = testing::RandomModel(mode, 6, 12, seed);
      for (ItemId i = 0; i < 12; ++i) {
        const double p = Predict(cm, i);
        ASSERT_GT(p, 0.0);
        ASSERT_LT(p, 1.0);
      }
      ASSERT_GE(RecLoss(cm, std::vector<ItemId>{1, 2}, std::vector<ItemId>{3, 4, 5}), 0.0);
    }
  }
}

TEST(GradientsProperty, AllModesAllBlocks) {
  // 5-item toy, with a repeated positive so touched rows accumulate.
  const std::vector<ItemId> pos{1, 3, 3}, neg{0, 2, 4};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (ModelMode mode : {ModelMode::kFedUtr, ModelMode::kFedUtrSar, ModelMode::kFcfBaseline,
                           ModelMode::kNoCifm}) {
      const ClientModel cm = testing::RandomModel(mode, 6, 5, seed);
      for (const auto& c : testing::CheckAllBlocks(cm, pos, neg)) {
        EXPECT_TRUE(c.report.passed)
            << ToString(mode) << " seed " << seed << " " << c.block << ": " << c.report.Summary();
      }
    }
  }
}

TEST(Gradients, SupportIsTouchedRowsOnly) {
  const ClientModel cm = testing::RandomModel(ModelMode::kFedUtr, 4, 9, 2);
  const auto lg = ComputeLossAndGrads(cm, std::vector<ItemId>{5}, std::vector<ItemId>{0, 7, 8, 2}, 0);
  EXPECT_EQ(lg.grads.item_ids, (std::vector<ItemId>{0, 2, 5, 7, 8}));
  EXPECT_EQ(lg.grads.item_rows.rows(), 5u);
}

TEST(ParameterCount, FcfCellsAndOurArchitecture) {
  EXPECT_EQ(ParameterBytes(ModelMode::kFcfBaseline, 5370, 32), 687488u);
  EXPECT_EQ(ParameterBytes(ModelMode::kFcfBaseline, 1579, 32), 202240u);
  EXPECT_EQ(ParameterBytes(ModelMode::kFcfBaseline, 2307, 32), 295424u);
  EXPECT_EQ(ParameterBytes(ModelMode::kFcfBaseline, 3509, 32), 449280u);
  // d² + 3d = 1120 for the CIFM and three gate vectors of that size.
  EXPECT_EQ(ParameterBytes(ModelMode::kFedUtr, 5370, 32), 687488u + 4 * 1120 + 4 * 3360);
  EXPECT_EQ(ParameterBytes(ModelMode::kFedUtrSar, 5370, 32),
            ParameterBytes(ModelMode::kFedUtr, 5370, 32) + 8);
  EXPECT_EQ(ParameterCount(ModelMode::kFcfBaseline, 10, 4, false), 40u);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = testing::TempDir("ckpt");
  const ClientModel cm = testing::RandomModel(ModelMode::kFedUtrSar, 5, 7, 3);
  SaveCheckpoint(dir, cm, 99, 12);
  CheckpointInfo info;
  const ClientModel back = LoadCheckpoint(dir, &info);
  EXPECT_EQ(info.seed, 99u);
  EXPECT_EQ(info.round, 12u);
  EXPECT_EQ(info.d, 5u);
  EXPECT_EQ(info.m, 7u);
  EXPECT_EQ(back.user_vec, cm.user_vec);
  EXPECT_EQ(back.items, cm.items);
  EXPECT_EQ(back.cifm, cm.cifm);
  EXPECT_EQ(back.sar, cm.sar);
  EXPECT_THROW(LoadCheckpoint(dir / "nope"), DataError);
}

}  // namespace
}  // namespace fedutr
