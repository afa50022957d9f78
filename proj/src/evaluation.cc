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
#include "fedutr/evaluation.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedutr/errors.h"
#include "fedutr/numeric.h"

namespace fedutr {

std::size_t RankOfPositive(std::span<const ItemId> candidates,
                           std::span<const double> scores) {
  CheckSameSize(candidates.size(), scores.size(), "RankOfPositive");
  if (candidates.empty()) throw std::invalid_argument("no candidates");
  const double pos = scores[0];
  const ItemId pos_id = candidates[0];
  std::size_t rank = 1;
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    if (scores[k] > pos || (scores[k] == pos && candidates[k] < pos_id)) ++rank;
  }
  return rank;
}

double NdcgAt(std::size_t rank, std::size_t k) {
  if (rank == 0 || rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

RankingResult SummarizeRanks(std::vector<std::size_t> ranks, std::size_t k) {
  RankingResult r;
  r.k = k;
  r.ranks = std::move(ranks);
  if (r.ranks.empty()) return r;
  double hits = 0.0;
  double ndcg = 0.0;
  for (std::size_t rank : r.ranks) {
    if (rank <= k) hits += 1.0;
    ndcg += NdcgAt(rank, k);
  }
  const auto n = static_cast<double>(r.ranks.size());
  r.hr = hits / n;
  r.ndcg = ndcg / n;
  return r;
}

std::vector<ItemId> Candidates(const SplitSpec& split, UserId user) {
  std::vector<ItemId> c;
  c.reserve(1 + split.eval_negatives[user].size());
  c.push_back(split.test_item[user]);
  c.insert(c.end(), split.eval_negatives[user].begin(),
           split.eval_negatives[user].end());
  return c;
}

RankingResult RankAndScore(const Scorer& scorer, const SplitSpec& split,
                           std::size_t k) {
  std::vector<std::size_t> ranks(split.num_users());
  std::vector<double> scores;
  for (UserId u = 0; u < split.num_users(); ++u) {
    if (split.eval_negatives[u].empty()) {
      throw DataError("user " + std::to_string(u) + " has no eval candidates");
    }
    const auto cand = Candidates(split, u);
    scores.assign(cand.size(), 0.0);
    scorer(u, cand, scores);
    ranks[u] = RankOfPositive(cand, scores);
  }
  return SummarizeRanks(std::move(ranks), k);
}

std::vector<GroupReport> EvaluateByGroup(std::span<const std::size_t> ranks,
                                         const SparsityGroups& groups,
                                         std::size_t k) {
  CheckSameSize(ranks.size(), groups.group_of.size(), "EvaluateByGroup");
  std::vector<GroupReport> reports;
  for (std::size_t g = 0; g < groups.num_groups(); ++g) {
    const auto& members = groups.members[g];
    if (members.empty()) {
      throw std::invalid_argument("sparsity group " + std::to_string(g) +
                                  " is empty");
    }
    std::vector<std::size_t> group_ranks;
    group_ranks.reserve(members.size());
    for (UserId u : members) group_ranks.push_back(ranks[u]);
    const RankingResult r = SummarizeRanks(std::move(group_ranks), k);
    reports.push_back({g, groups.sparsity[g], groups.Label(g), r.hr, r.ndcg,
                       members.size()});
  }
  return reports;
}

void CosineAccumulator::AddUser(std::span<const double> universal_interacted,
                                std::span<const double> universal_non_interacted,
                                std::span<const double> fused_interacted,
                                std::span<const double> fused_non_interacted) {
  const std::span<const double> series[4] = {
      universal_interacted, universal_non_interacted, fused_interacted,
      fused_non_interacted};
  for (int s = 0; s < 4; ++s) {
    if (series[s].empty()) continue;
    double mean = 0.0;
    for (double v : series[s]) mean += v;
    sums_[s] += mean / static_cast<double>(series[s].size());
    ++counts_[s];
  }
}

CosineTrace CosineAccumulator::Result() const {
  double v[4];
  for (int s = 0; s < 4; ++s) {
    v[s] = counts_[s] ? sums_[s] / static_cast<double>(counts_[s]) : 0.0;
  }
  return {v[0], v[1], v[2], v[3]};
}

double RandomScorerHr(std::size_t k, std::size_t n_candidates) {
  return std::min(1.0, static_cast<double>(k) / static_cast<double>(n_candidates));
}

double RandomScorerHrStdErr(std::size_t k, std::size_t n_candidates,
                            std::size_t n_users) {
  const double p = RandomScorerHr(k, n_candidates);
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n_users));
}

bool BeatsRandomScorer(double hr, std::size_t n_users, std::size_t k,
                       std::size_t n_candidates, double z) {
  return hr > RandomScorerHr(k, n_candidates) +
                  z * RandomScorerHrStdErr(k, n_candidates, n_users);
}

}  // namespace fedutr
