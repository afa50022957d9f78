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
// Implicit-feedback interaction data: loading, statistics, leave-one-out
// splitting, negative sampling, sparsity grouping and a latent-factor
// synthetic generator whose item texts carry the latent structure.
#ifndef FEDUTR_DATASETS_H_
#define FEDUTR_DATASETS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedutr/numeric.h"
#include "fedutr/rng.h"

namespace fedutr {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  std::optional<std::int64_t> timestamp;
};

// Binary user-item interactions with dense ids. Each user's item list is
// sorted ascending and duplicate-free.
class InteractionDataset {
 public:
  InteractionDataset() = default;

  // Deduplicates (u, i) pairs, keeping the latest timestamp. Timestamps are
  // retained only when every interaction carries one. Throws DataError on
  // ids outside [0, n_users) / [0, m_items).
  static InteractionDataset FromInteractions(
      std::size_t n_users, std::size_t m_items,
      std::span<const Interaction> interactions);

  std::size_t num_users() const { return items_.size(); }
  std::size_t num_items() const { return m_items_; }
  std::size_t num_interactions() const { return num_interactions_; }
  bool has_timestamps() const { return has_timestamps_; }

  std::span<const ItemId> items_of(UserId u) const { return items_[u]; }
  // Parallel to items_of(u); empty when the dataset has no timestamps.
  std::span<const std::int64_t> timestamps_of(UserId u) const {
    return has_timestamps_ ? std::span<const std::int64_t>(timestamps_[u])
                           : std::span<const std::int64_t>();
  }
  bool Contains(UserId u, ItemId i) const;

  // Keeps users with at least `min_count` interactions, re-indexing them
  // densely in their original order. `kept` receives old ids of survivors.
  InteractionDataset FilterUsers(std::size_t min_count,
                                 std::vector<UserId>* kept = nullptr) const;

 private:
  std::size_t m_items_ = 0;
  std::size_t num_interactions_ = 0;
  bool has_timestamps_ = false;
  std::vector<std::vector<ItemId>> items_;
  std::vector<std::vector<std::int64_t>> timestamps_;
};

// Item id -> free text. Always covers every item; missing texts are "".
struct ItemCorpus {
  std::vector<std::string> texts;
  std::size_t size() const { return texts.size(); }
};

// Dense index -> raw identifier as it appeared in the source file.
struct IdRemap {
  std::vector<std::string> raw_ids;
  std::optional<std::uint32_t> Find(const std::string& raw) const;
};

struct LoadedInteractions {
  InteractionDataset dataset;
  IdRemap users;
  IdRemap items;
  std::size_t duplicate_lines = 0;
  std::size_t dropped_users = 0;
};

// Reads `user<TAB>item[<TAB>unix_ts]` lines; `#` comments and blank lines are
// skipped. Users with fewer than `min_interactions` distinct items are
// dropped and counted. Throws DataError naming the line on malformed input
// or when nothing survives.
LoadedInteractions LoadInteractions(const std::filesystem::path& path,
                                    std::size_t min_interactions = 2);

// Reads `item<TAB>free text` lines keyed by raw item id. Texts for ids absent
// from `items` are ignored; `ignored` (optional) receives their count.
ItemCorpus LoadItemCorpus(const std::filesystem::path& path,
                          const IdRemap& items,
                          std::size_t* ignored = nullptr);

void WriteIdRemap(const std::filesystem::path& path, const IdRemap& remap);
void WriteInteractionsTsv(const std::filesystem::path& path,
                          const InteractionDataset& ds);
void WriteItemCorpusTsv(const std::filesystem::path& path,
                        const ItemCorpus& corpus);

// --- statistics ----------------------------------------------------------------

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  double avg_interactions = 0.0;  // interactions / users
  double sparsity = 0.0;          // 1 - interactions / (users * items)

  std::string ToJson() const;
};

DatasetStats ComputeStats(const InteractionDataset& ds);
DatasetStats StatsFromCounts(std::size_t users, std::size_t items,
                             std::size_t interactions);

// "99.83%" style label with two decimals.
std::string FormatPercent(double fraction);
std::string FormatFixed(double value, int decimals);

// --- leave-one-out split ------------------------------------------------------

inline constexpr std::size_t kEvalNegatives = 99;
inline constexpr const char* kEvalProtocol =
    "leave-one-out; 1 held-out positive vs 99 sampled negatives";

struct SplitSpec {
  std::vector<std::vector<ItemId>> train;    // sorted per user
  std::vector<ItemId> test_item;             // one per user
  std::vector<std::vector<ItemId>> eval_negatives;  // distinct, ∉ I_u

  std::size_t num_users() const { return test_item.size(); }
};

// Holds out the latest interaction per user (random when the dataset has no
// timestamps; ties broken toward the larger item id) and draws up to 99
// distinct non-interacted evaluation negatives per user.
SplitSpec LeaveOneOutSplit(const InteractionDataset& ds, const Rng& rng);

// `count` distinct items from [0, m) outside the sorted `excluded` list,
// clamped to the size of the eligible pool.
std::vector<ItemId> SampleNegatives(std::span<const ItemId> excluded,
                                    std::size_t m_items, std::size_t count,
                                    Rng& rng);

// ratio × |I_u| training negatives for one user (one local epoch's worth).
std::vector<ItemId> SampleTrainNegatives(const InteractionDataset& ds,
                                         UserId user, std::size_t ratio,
                                         Rng& rng);

// --- sparsity groups -------------------------------------------------------------

struct SparsityGroups {
  std::vector<std::size_t> group_of;              // user -> group
  std::vector<std::vector<UserId>> members;       // group -> users
  std::vector<double> sparsity;                   // group τ
  std::vector<double> mean_interactions;          // group mean |I_u|

  std::size_t num_groups() const { return members.size(); }
  // "τ=89.28%"
  std::string Label(std::size_t group) const;
};

// Users ordered by |I_u| descending (ties by id) split into `n_groups`
// contiguous groups whose sizes differ by at most one. Group 0 is the
// densest.
SparsityGroups GroupUsersBySparsity(const InteractionDataset& ds,
                                    std::size_t n_groups = 5);

// --- synthetic corpora ---------------------------------------------------------------

struct SyntheticSpec {
  std::size_t n_users = 200;
  std::size_t m_items = 300;
  std::size_t latent_dim = 8;
  double target_avg_interactions = 5.0;
  std::size_t text_vocab = 6;       // words per topic
  std::size_t words_per_item = 8;
  double noise = 0.1;               // probability a text token is filler
  double affinity_scale = 3.0;      // multiplies u·v inside the sigmoid
  double popularity_std = 0.5;
  // Shape of the per-user activity tail beyond the two-interaction floor:
  // 0 draws it from an exponential, a value > 1 from a Lomax (Pareto II)
  // with that shape, both with mean target_avg_interactions - 2.
  double activity_tail = 0.0;
  double max_activity = 60.0;       // cap on a user's expected count
};

struct SyntheticGroundTruth {
  Matrix user_factors;             // n × latent_dim
  Matrix item_factors;             // m × latent_dim
  std::vector<std::size_t> primary_topic;
  std::vector<std::size_t> secondary_topic;
  Vector item_popularity;
  Vector user_target_counts;
};

struct SyntheticCorpus {
  InteractionDataset dataset;
  ItemCorpus corpus;
  SyntheticGroundTruth truth;
};

// Throws DataError when the spec cannot yield >= 2 interactions per user.
SyntheticCorpus GenerateSynthetic(const SyntheticSpec& spec, const Rng& rng);

}  // namespace fedutr

#endif  // FEDUTR_DATASETS_H_
