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
#include <numeric>

#include "fedutr/errors.h"
#include "fedutr/evaluation.h"
#include "fedutr/numeric.h"
#include "fedutr/rng.h"

namespace fedutr {
namespace {

TEST(Ndcg, ClosedForms) {
  EXPECT_EQ(NdcgAt(1, 10), 1.0);
  EXPECT_NEAR(NdcgAt(2, 10), 1.0 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(NdcgAt(10, 10), 1.0 / std::log2(11.0), 1e-15);
  EXPECT_EQ(NdcgAt(11, 10), 0.0);
}

TEST(Rank, PositionAndTies) {
  const std::vector<ItemId> items{5, 1, 9, 7};
  EXPECT_EQ(RankOfPositive(items, std::vector<double>{0.9, 0.1, 0.2, 0.3}), 1u);
  EXPECT_EQ(RankOfPositive(items, std::vector<double>{0.2, 0.1, 0.5, 0.3}), 3u);
  // Equal scores: item 1 outranks the positive (5), items 7 and 9 do not.
  EXPECT_EQ(RankOfPositive(items, std::vector<double>{0.4, 0.4, 0.4, 0.4}), 2u);
  const std::vector<ItemId> low{0, 3, 4};
  EXPECT_EQ(RankOfPositive(low, std::vector<double>{1, 1, 1}), 1u);
}

TEST(Summary, HitRateAndMeanNdcg) {
  const RankingResult r = SummarizeRanks({1, 2, 11, 50}, 10);
  EXPECT_DOUBLE_EQ(r.hr, 0.5);
  EXPECT_NEAR(r.ndcg, (1.0 + 1.0 / std::log2(3.0)) / 4, 1e-15);
}

SplitSpec FakeSplit(std::size_t users, std::size_t m, Rng& rng) {
  SplitSpec s;
  s.train.resize(users);
  for (std::size_t u = 0; u < users; ++u) {
    const ItemId pos = static_cast<ItemId>(rng.UniformInt(m));
    s.test_item.push_back(pos);
    s.eval_negatives.push_back(SampleNegatives(std::vector<ItemId>{pos}, m, 99, rng));
  }
  return s;
}

TEST(RankAndScore, PerfectAndRandomScorers) {
  Rng rng(8);
  const SplitSpec split = FakeSplit(20000, 400, rng);
  const auto perfect = RankAndScore(
      [&](UserId u, std::span<const ItemId> items, std::span<double> out) {
        for (std::size_t j = 0; j < items.size(); ++j) out[j] = items[j] == split.test_item[u];
      },
      split);
  EXPECT_EQ(perfect.hr, 1.0);
  EXPECT_EQ(perfect.ndcg, 1.0);

  Rng noise(9);
  const auto random = RankAndScore(
      [&](UserId, std::span<const ItemId>, std::span<double> out) {
        for (double& v : out) v = noise.Uniform();
      },
      split);
  const double se = RandomScorerHrStdErr(10, 100, 20000);
  EXPECT_NEAR(random.hr, 0.1, 4 * se);
  EXPECT_FALSE(BeatsRandomScorer(random.hr, 20000));
  EXPECT_GE(random.ndcg, 0.0);
  EXPECT_LE(random.ndcg, random.hr);
}

TEST(RankAndScore, MissingNegativesIsAnError) {
  SplitSpec s;
  s.train.resize(1);
  s.test_item = {0};
  s.eval_negatives = {{}};
  EXPECT_THROW(RankAndScore([](UserId, std::span<const ItemId>, std::span<double>) {}, s),
               DataError);
}

TEST(RandomScorer, ThresholdArithmetic) {
  EXPECT_DOUBLE_EQ(RandomScorerHr(10, 100), 0.1);
  EXPECT_NEAR(RandomScorerHrStdErr(10, 100, 2034), std::sqrt(0.09 / 2034), 1e-15);
  const double thr = 0.1 + 3 * std::sqrt(0.09 / 1000);
  EXPECT_TRUE(BeatsRandomScorer(thr + 1e-9, 1000));
  EXPECT_FALSE(BeatsRandomScorer(thr - 1e-9, 1000));
}

SparsityGroups Groups(std::vector<std::vector<UserId>> members) {
  SparsityGroups g;
  std::size_t n = 0;
  for (const auto& m : members) n += m.size();
  g.group_of.resize(n);
  for (std::size_t k = 0; k < members.size(); ++k) {
    for (UserId u : members[k]) g.group_of[u] = k;
    g.sparsity.push_back(0.9 + 0.01 * k);
    g.mean_interactions.push_back(5.0 - k);
  }
  g.members = std::move(members);
  return g;
}

TEST(GroupProperty, WeightedMeanOfGroupsIsOverall) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::size_t n = 10 + rng.UniformInt(200);
    std::vector<std::size_t> ranks(n);
    for (auto& r : ranks) r = 1 + rng.UniformInt(100);
    std::vector<UserId> perm(n);
    std::iota(perm.begin(), perm.end(), UserId{0});
    rng.Shuffle(perm);
    const std::size_t k = 1 + rng.UniformInt(5);
    std::vector<std::vector<UserId>> members(k);
    for (std::size_t i = 0; i < n; ++i) members[i * k / n].push_back(perm[i]);
    const auto reports = EvaluateByGroup(ranks, Groups(members));
    const RankingResult all = SummarizeRanks(ranks, 10);
    double hr = 0, ndcg = 0;
    for (const auto& g : reports) {
      ASSERT_GE(g.hr, 0.0);
      ASSERT_LE(g.hr, 1.0);
      ASSERT_LE(g.ndcg, g.hr);
      hr += g.hr * g.n_users;
      ndcg += g.ndcg * g.n_users;
    }
    ASSERT_NEAR(hr / n, all.hr, 1e-12);
    ASSERT_NEAR(ndcg / n, all.ndcg, 1e-12);
    if (k == 1) {
      ASSERT_EQ(reports[0].hr, all.hr);
    }
  }
}

TEST(Groups, EmptyGroupOrShortRanksThrow) {
  const auto g = Groups({{0, 1}, {}});
  EXPECT_THROW(EvaluateByGroup(std::vector<std::size_t>{1, 2}, g), std::invalid_argument);
  EXPECT_THROW(EvaluateByGroup(std::vector<std::size_t>{1}, Groups({{0, 1}})), ShapeError);
}

TEST(Cosine, IdentityOrthogonalAndAccumulator) {
  EXPECT_NEAR(Cosine(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}), 1.0, 1e-15);
  EXPECT_EQ(Cosine(std::vector<double>{1, 0}, std::vector<double>{0, 5}), 0.0);
  EXPECT_EQ(Cosine(std::vector<double>{0, 0}, std::vector<double>{0, 5}), 0.0);

  CosineAccumulator acc;
  acc.AddUser(std::vector<double>{1.0, 0.0}, std::vector<double>{0.2}, {}, {});
  acc.AddUser(std::vector<double>{0.0}, std::vector<double>{0.4, 0.6}, {}, {});
  const CosineTrace t = acc.Result();
  EXPECT_DOUBLE_EQ(t.universal_interacted, 0.25);
  EXPECT_DOUBLE_EQ(t.universal_non_interacted, 0.35);
  EXPECT_EQ(t.fused_interacted, 0.0);
}

}  // namespace
}  // namespace fedutr
