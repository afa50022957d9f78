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
// Top-K ranking metrics over the 1-positive + 99-negative candidate lists,
// per-sparsity-group reports and representation cosine traces.
#ifndef FEDUTR_EVALUATION_H_
#define FEDUTR_EVALUATION_H_

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedutr/datasets.h"

namespace fedutr {

inline constexpr std::size_t kDefaultTopK = 10;

// 1-based rank of candidates[0] (the held-out positive) among all
// candidates. Ties are broken toward the lower item id.
std::size_t RankOfPositive(std::span<const ItemId> candidates,
                           std::span<const double> scores);

// 1/log2(rank + 1) inside the cut-off, 0 outside.
double NdcgAt(std::size_t rank, std::size_t k);

struct RankingResult {
  std::size_t k = kDefaultTopK;
  double hr = 0.0;
  double ndcg = 0.0;
  std::vector<std::size_t> ranks;  // per user
};

RankingResult SummarizeRanks(std::vector<std::size_t> ranks, std::size_t k);

// Candidate list of a user: held-out positive first, then its negatives.
std::vector<ItemId> Candidates(const SplitSpec& split, UserId user);

// Fills `scores` for the given candidate items of `user`.
using Scorer = std::function<void(UserId user, std::span<const ItemId> items,
                                  std::span<double> scores)>;

// Throws DataError when a user has no evaluation negatives.
RankingResult RankAndScore(const Scorer& scorer, const SplitSpec& split,
                           std::size_t k = kDefaultTopK);

struct GroupReport {
  std::size_t group = 0;
  double sparsity = 0.0;
  std::string label;  // "τ=99.12%"
  double hr = 0.0;
  double ndcg = 0.0;
  std::size_t n_users = 0;
};

// One report per sparsity group. Throws std::invalid_argument on an empty
// group or a rank vector that does not cover every user.
std::vector<GroupReport> EvaluateByGroup(std::span<const std::size_t> ranks,
                                         const SparsityGroups& groups,
                                         std::size_t k = kDefaultTopK);

// Mean cosine between a user vector and item representations, split by
// interacted / non-interacted items and by representation space.
struct CosineTrace {
  double universal_interacted = 0.0;
  double universal_non_interacted = 0.0;
  double fused_interacted = 0.0;
  double fused_non_interacted = 0.0;
};

// Averages per-user means. Users contributing no items to a series are
// skipped for that series.
class CosineAccumulator {
 public:
  void AddUser(std::span<const double> universal_interacted,
               std::span<const double> universal_non_interacted,
               std::span<const double> fused_interacted,
               std::span<const double> fused_non_interacted);
  CosineTrace Result() const;

 private:
  double sums_[4] = {0, 0, 0, 0};
  std::size_t counts_[4] = {0, 0, 0, 0};
};

// Random scorer baseline: expected HR@K = K / n_candidates.
double RandomScorerHr(std::size_t k, std::size_t n_candidates);
// Binomial standard error of the random-scorer HR over `n_users`.
double RandomScorerHrStdErr(std::size_t k, std::size_t n_candidates,
                            std::size_t n_users);
// hr > K/n + z * stderr.
bool BeatsRandomScorer(double hr, std::size_t n_users, std::size_t k = 10,
                       std::size_t n_candidates = 100, double z = 3.0);

}  // namespace fedutr

#endif  // FEDUTR_EVALUATION_H_
