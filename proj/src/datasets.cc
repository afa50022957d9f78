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
#include "fedutr/datasets.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "fedutr/errors.h"
#include "json.hpp"

namespace fedutr {
namespace {

std::vector<std::string_view> SplitTabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::string_view StripCr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

bool IsBlankOrComment(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  return first == std::string_view::npos || s[first] == '#';
}

[[noreturn]] void ThrowLine(const std::filesystem::path& path,
                            std::size_t line_no, const std::string& what) {
  std::ostringstream msg;
  msg << path.string() << ":" << line_no << ": " << what;
  throw DataError(msg.str());
}

std::uint32_t Intern(std::unordered_map<std::string, std::uint32_t>& index,
                     IdRemap& remap, std::string_view raw) {
  auto [it, inserted] = index.try_emplace(
      std::string(raw), static_cast<std::uint32_t>(remap.raw_ids.size()));
  if (inserted) remap.raw_ids.emplace_back(raw);
  return it->second;
}

std::ofstream OpenForWrite(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  return out;
}

}  // namespace

// --- InteractionDataset ---------------------------------------------------------

InteractionDataset InteractionDataset::FromInteractions(
    std::size_t n_users, std::size_t m_items,
    std::span<const Interaction> interactions) {
  InteractionDataset ds;
  ds.m_items_ = m_items;
  ds.has_timestamps_ =
      !interactions.empty() &&
      std::all_of(interactions.begin(), interactions.end(),
                  [](const Interaction& x) { return x.timestamp.has_value(); });

  std::vector<std::vector<std::pair<ItemId, std::int64_t>>> rows(n_users);
  for (const Interaction& x : interactions) {
    if (x.user >= n_users || x.item >= m_items) {
      std::ostringstream msg;
      msg << "interaction (" << x.user << ", " << x.item
          << ") outside [0, " << n_users << ") x [0, " << m_items << ")";
      throw DataError(msg.str());
    }
    rows[x.user].emplace_back(x.item, x.timestamp.value_or(0));
  }

  ds.items_.resize(n_users);
  if (ds.has_timestamps_) ds.timestamps_.resize(n_users);
  for (std::size_t u = 0; u < n_users; ++u) {
    auto& row = rows[u];
    // Sort by item, latest timestamp first, so unique() keeps the latest.
    std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first < b.first : a.second > b.second;
    });
    row.erase(std::unique(row.begin(), row.end(),
                          [](const auto& a, const auto& b) {
                            return a.first == b.first;
                          }),
              row.end());
    ds.items_[u].reserve(row.size());
    for (const auto& [item, ts] : row) {
      ds.items_[u].push_back(item);
      if (ds.has_timestamps_) ds.timestamps_[u].push_back(ts);
    }
    ds.num_interactions_ += row.size();
  }
  return ds;
}

bool InteractionDataset::Contains(UserId u, ItemId i) const {
  const auto& row = items_.at(u);
  return std::binary_search(row.begin(), row.end(), i);
}

InteractionDataset InteractionDataset::FilterUsers(
    std::size_t min_count, std::vector<UserId>* kept) const {
  InteractionDataset out;
  out.m_items_ = m_items_;
  out.has_timestamps_ = has_timestamps_;
  if (kept) kept->clear();
  for (std::size_t u = 0; u < items_.size(); ++u) {
    if (items_[u].size() < min_count) continue;
    out.items_.push_back(items_[u]);
    if (has_timestamps_) out.timestamps_.push_back(timestamps_[u]);
    out.num_interactions_ += items_[u].size();
    if (kept) kept->push_back(static_cast<UserId>(u));
  }
  return out;
}

std::optional<std::uint32_t> IdRemap::Find(const std::string& raw) const {
  const auto it = std::find(raw_ids.begin(), raw_ids.end(), raw);
  if (it == raw_ids.end()) return std::nullopt;
  return static_cast<std::uint32_t>(it - raw_ids.begin());
}

// --- file I/O -------------------------------------------------------------------

LoadedInteractions LoadInteractions(const std::filesystem::path& path,
                                    std::size_t min_interactions) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open interactions file: " + path.string());

  LoadedInteractions result;
  IdRemap all_users;
  std::unordered_map<std::string, std::uint32_t> user_index;
  std::unordered_map<std::string, std::uint32_t> item_index;
  std::vector<Interaction> interactions;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = StripCr(line);
    if (IsBlankOrComment(view)) continue;
    const auto fields = SplitTabs(view);
    if (fields.size() < 2 || fields.size() > 3) {
      ThrowLine(path, line_no, "expected user<TAB>item[<TAB>timestamp]");
    }
    if (fields[0].empty() || fields[1].empty()) {
      ThrowLine(path, line_no, "empty user or item id");
    }
    Interaction x;
    x.user = Intern(user_index, all_users, fields[0]);
    x.item = Intern(item_index, result.items, fields[1]);
    if (fields.size() == 3) {
      std::int64_t ts = 0;
      const auto f = fields[2];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), ts);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        ThrowLine(path, line_no, "malformed timestamp '" + std::string(f) + "'");
      }
      x.timestamp = ts;
    }
    interactions.push_back(x);
  }
  if (interactions.empty()) {
    throw DataError("no interactions in " + path.string());
  }

  const auto full = InteractionDataset::FromInteractions(
      all_users.raw_ids.size(), result.items.raw_ids.size(), interactions);
  result.duplicate_lines = interactions.size() - full.num_interactions();

  std::vector<UserId> kept;
  result.dataset = full.FilterUsers(min_interactions, &kept);
  result.dropped_users = full.num_users() - kept.size();
  for (UserId u : kept) result.users.raw_ids.push_back(all_users.raw_ids[u]);
  if (result.dataset.num_users() == 0) {
    throw DataError("no user in " + path.string() + " has at least " +
                    std::to_string(min_interactions) + " interactions");
  }
  return result;
}

ItemCorpus LoadItemCorpus(const std::filesystem::path& path,
                          const IdRemap& items, std::size_t* ignored) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open item text file: " + path.string());
  std::unordered_map<std::string, std::uint32_t> index;
  for (std::size_t i = 0; i < items.raw_ids.size(); ++i) {
    index.emplace(items.raw_ids[i], static_cast<std::uint32_t>(i));
  }
  ItemCorpus corpus;
  corpus.texts.assign(items.raw_ids.size(), "");
  std::size_t skipped = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = StripCr(line);
    if (IsBlankOrComment(view)) continue;
    const auto tab = view.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      ThrowLine(path, line_no, "expected item<TAB>text");
    }
    const std::string_view text = view.substr(tab + 1);
    if (text.find('\t') != std::string_view::npos) {
      ThrowLine(path, line_no, "tab inside item text");
    }
    const auto it = index.find(std::string(view.substr(0, tab)));
    if (it == index.end()) {
      ++skipped;
      continue;
    }
    corpus.texts[it->second] = std::string(text);
  }
  if (ignored) *ignored = skipped;
  return corpus;
}

void WriteIdRemap(const std::filesystem::path& path, const IdRemap& remap) {
  auto out = OpenForWrite(path);
  out << "# dense_id\traw_id\n";
  for (std::size_t i = 0; i < remap.raw_ids.size(); ++i) {
    out << i << '\t' << remap.raw_ids[i] << '\n';
  }
}

void WriteInteractionsTsv(const std::filesystem::path& path,
                          const InteractionDataset& ds) {
  auto out = OpenForWrite(path);
  for (UserId u = 0; u < ds.num_users(); ++u) {
    const auto items = ds.items_of(u);
    const auto ts = ds.timestamps_of(u);
    for (std::size_t k = 0; k < items.size(); ++k) {
      out << u << '\t' << items[k];
      if (!ts.empty()) out << '\t' << ts[k];
      out << '\n';
    }
  }
}

void WriteItemCorpusTsv(const std::filesystem::path& path,
                        const ItemCorpus& corpus) {
  auto out = OpenForWrite(path);
  for (std::size_t i = 0; i < corpus.texts.size(); ++i) {
    out << i << '\t' << corpus.texts[i] << '\n';
  }
}

// --- statistics ------------------------------------------------------------------

std::string DatasetStats::ToJson() const {
  nlohmann::ordered_json j;
  j["users"] = users;
  j["items"] = items;
  j["interactions"] = interactions;
  j["avg_i"] = avg_interactions;
  j["sparsity"] = sparsity;
  return j.dump();
}

DatasetStats StatsFromCounts(std::size_t users, std::size_t items,
                             std::size_t interactions) {
  if (users == 0 || items == 0) {
    throw DataError("statistics of an empty dataset are undefined");
  }
  DatasetStats s;
  s.users = users;
  s.items = items;
  s.interactions = interactions;
  s.avg_interactions =
      static_cast<double>(interactions) / static_cast<double>(users);
  s.sparsity = 1.0 - static_cast<double>(interactions) /
                         (static_cast<double>(users) * static_cast<double>(items));
  return s;
}

DatasetStats ComputeStats(const InteractionDataset& ds) {
  return StatsFromCounts(ds.num_users(), ds.num_items(), ds.num_interactions());
}

std::string FormatFixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

std::string FormatPercent(double fraction) {
  return FormatFixed(100.0 * fraction, 2) + "%";
}

// --- splitting and negatives --------------------------------------------------------

std::vector<ItemId> SampleNegatives(std::span<const ItemId> excluded,
                                    std::size_t m_items, std::size_t count,
                                    Rng& rng) {
  const std::size_t pool = m_items - std::min(m_items, excluded.size());
  const auto is_excluded = [&](ItemId i) {
    return std::binary_search(excluded.begin(), excluded.end(), i);
  };
  std::vector<ItemId> out;
  if (count == 0 || pool == 0) return out;

  if (count >= pool || 2 * count > pool) {
    std::vector<ItemId> eligible;
    eligible.reserve(pool);
    for (ItemId i = 0; i < m_items; ++i) {
      if (!is_excluded(i)) eligible.push_back(i);
    }
    if (count >= eligible.size()) return eligible;
    // Partial Fisher-Yates: the first `count` slots are a uniform sample.
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t j = k + rng.UniformInt(eligible.size() - k);
      std::swap(eligible[k], eligible[j]);
    }
    eligible.resize(count);
    return eligible;
  }

  out.reserve(count);
  while (out.size() < count) {
    const auto i = static_cast<ItemId>(rng.UniformInt(m_items));
    if (is_excluded(i)) continue;
    if (std::find(out.begin(), out.end(), i) != out.end()) continue;
    out.push_back(i);
  }
  return out;
}

std::vector<ItemId> SampleTrainNegatives(const InteractionDataset& ds,
                                         UserId user, std::size_t ratio,
                                         Rng& rng) {
  if (ratio < 1) throw std::invalid_argument("negative ratio must be >= 1");
  const auto items = ds.items_of(user);
  return SampleNegatives(items, ds.num_items(), ratio * items.size(), rng);
}

SplitSpec LeaveOneOutSplit(const InteractionDataset& ds, const Rng& rng) {
  SplitSpec split;
  const std::size_t n = ds.num_users();
  split.train.resize(n);
  split.test_item.resize(n);
  split.eval_negatives.resize(n);
  for (UserId u = 0; u < n; ++u) {
    const auto items = ds.items_of(u);
    if (items.size() < 2) {
      throw DataError("user " + std::to_string(u) +
                      " has fewer than 2 interactions; cannot hold one out");
    }
    Rng user_rng = rng.Fork(u);
    std::size_t held = 0;
    if (ds.has_timestamps()) {
      const auto ts = ds.timestamps_of(u);
      for (std::size_t k = 1; k < items.size(); ++k) {
        if (ts[k] >= ts[held]) held = k;
      }
    } else {
      held = user_rng.UniformInt(items.size());
    }
    split.test_item[u] = items[held];
    for (std::size_t k = 0; k < items.size(); ++k) {
      if (k != held) split.train[u].push_back(items[k]);
    }
    split.eval_negatives[u] =
        SampleNegatives(items, ds.num_items(), kEvalNegatives, user_rng);
  }
  return split;
}

// --- sparsity groups ------------------------------------------------------------------

std::string SparsityGroups::Label(std::size_t group) const {
  return "τ=" + FormatPercent(sparsity.at(group));
}

SparsityGroups GroupUsersBySparsity(const InteractionDataset& ds,
                                    std::size_t n_groups) {
  if (n_groups < 2) throw std::invalid_argument("n_groups must be >= 2");
  const std::size_t n = ds.num_users();
  if (n_groups > n) {
    throw std::invalid_argument("n_groups (" + std::to_string(n_groups) +
                                ") exceeds number of users (" +
                                std::to_string(n) + ")");
  }
  std::vector<UserId> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](UserId a, UserId b) {
    return ds.items_of(a).size() > ds.items_of(b).size();
  });

  SparsityGroups g;
  g.group_of.assign(n, 0);
  g.members.resize(n_groups);
  g.sparsity.resize(n_groups);
  g.mean_interactions.resize(n_groups);
  const std::size_t base = n / n_groups;
  const std::size_t extra = n % n_groups;
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < n_groups; ++k) {
    const std::size_t size = base + (k < extra ? 1 : 0);
    std::size_t count = 0;
    for (std::size_t j = 0; j < size; ++j, ++cursor) {
      const UserId u = order[cursor];
      g.group_of[u] = k;
      g.members[k].push_back(u);
      count += ds.items_of(u).size();
    }
    const auto stats = StatsFromCounts(size, ds.num_items(), count);
    g.sparsity[k] = stats.sparsity;
    g.mean_interactions[k] = stats.avg_interactions;
  }
  return g;
}

// --- synthetic generator ------------------------------------------------------------------

namespace {

constexpr const char* kConsonants = "bcdfghjklmnprstvwz";
constexpr const char* kVowels = "aeiou";

// Deterministic pronounceable pseudo-word; distinct tags give words whose
// character trigrams rarely overlap.
std::string PseudoWord(std::uint64_t tag) {
  Rng rng(Mix64(tag ^ 0x7e57c0de5eedULL));
  const std::size_t length = 5 + rng.UniformInt(4);
  std::string word;
  for (std::size_t k = 0; k < length; ++k) {
    word.push_back(k % 2 == 0 ? kConsonants[rng.UniformInt(18)]
                              : kVowels[rng.UniformInt(5)]);
  }
  return word;
}

std::string TopicWord(std::size_t topic, std::size_t index) {
  return PseudoWord((static_cast<std::uint64_t>(topic) << 20) | index);
}

std::string FillerWord(std::size_t index) {
  return PseudoWord((std::uint64_t{1} << 40) | index);
}

constexpr std::size_t kFillerVocab = 64;

// Solves Σ_i sigmoid(score_i + c) = target for c by bisection.
double CalibrateOffset(std::span<const double> scores, double target) {
  double lo = -60.0;
  double hi = 60.0;
  for (int iter = 0; iter < 80; ++iter) {
    const double mid = 0.5 * (lo + hi);
    double expected = 0.0;
    for (double s : scores) expected += Sigmoid(s + mid);
    (expected < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SyntheticCorpus GenerateSynthetic(const SyntheticSpec& spec, const Rng& rng) {
  const std::size_t n = spec.n_users;
  const std::size_t m = spec.m_items;
  const std::size_t k = spec.latent_dim;
  if (spec.target_avg_interactions < 2.0) {
    throw DataError("infeasible synthetic spec: target_avg_interactions < 2");
  }
  if (n == 0 || m < 3 || k < 2) {
    throw DataError("infeasible synthetic spec: need n>0, m>=3, latent_dim>=2");
  }
  if (spec.target_avg_interactions > 0.5 * static_cast<double>(m)) {
    throw DataError("infeasible synthetic spec: target_avg_interactions > m/2");
  }
  if (spec.activity_tail != 0.0 && !(spec.activity_tail > 1.0)) {
    throw DataError("synthetic spec: activity_tail must be 0 or > 1");
  }
  if (!(spec.max_activity >= 2.0)) {
    throw DataError("synthetic spec: max_activity must be >= 2");
  }
  if (spec.text_vocab == 0 || spec.words_per_item < 2) {
    throw DataError("synthetic spec needs text_vocab >= 1, words_per_item >= 2");
  }

  SyntheticCorpus out;
  SyntheticGroundTruth& truth = out.truth;
  truth.item_factors = Matrix(m, k);
  truth.user_factors = Matrix(n, k);
  truth.primary_topic.resize(m);
  truth.secondary_topic.resize(m);
  truth.item_popularity = Vector(m);
  truth.user_target_counts = Vector(n);

  Rng item_rng = rng.Fork(1);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t p = item_rng.UniformInt(k);
    std::size_t s = item_rng.UniformInt(k - 1);
    if (s >= p) ++s;
    truth.primary_topic[i] = p;
    truth.secondary_topic[i] = s;
    auto row = truth.item_factors.row(i);
    for (double& v : row) v = item_rng.Gaussian(0.0, 0.15);
    row[p] += 1.0;
    row[s] += 0.5;
    truth.item_popularity[i] = item_rng.Gaussian(0.0, spec.popularity_std);
  }

  Rng user_rng = rng.Fork(2);
  const double extra_mean = spec.target_avg_interactions - 2.0;
  for (std::size_t u = 0; u < n; ++u) {
    const std::size_t a = user_rng.UniformInt(k);
    std::size_t b = user_rng.UniformInt(k - 1);
    if (b >= a) ++b;
    auto row = truth.user_factors.row(u);
    for (double& v : row) v = user_rng.Gaussian(0.0, 0.3);
    row[a] += 1.0;
    row[b] += 0.5;
    // 2 + a unit-mean tail draw scaled to avg - 2.
    const double uni = user_rng.Uniform();
    const double tail =
        spec.activity_tail > 1.0
            ? (std::pow(uni, -1.0 / spec.activity_tail) - 1.0) * (spec.activity_tail - 1.0)
            : -std::log(uni);
    truth.user_target_counts[u] = std::min(
        {2.0 + extra_mean * tail, spec.max_activity, 0.5 * static_cast<double>(m)});
  }

  Rng draw_rng = rng.Fork(3);
  std::vector<Interaction> interactions;
  std::vector<double> scores(m);
  std::vector<double> probs(m);
  for (std::size_t u = 0; u < n; ++u) {
    const auto uf = truth.user_factors.row(u);
    for (std::size_t i = 0; i < m; ++i) {
      scores[i] = spec.affinity_scale * Dot(uf, truth.item_factors.row(i)) +
                  truth.item_popularity[i];
    }
    const double offset = CalibrateOffset(scores, truth.user_target_counts[u]);
    std::vector<ItemId> chosen;
    for (std::size_t i = 0; i < m; ++i) {
      probs[i] = Sigmoid(scores[i] + offset);
      if (draw_rng.Bernoulli(probs[i])) chosen.push_back(static_cast<ItemId>(i));
    }
    // Top up to the two interactions every user needs, drawing in
    // proportion to the interaction probabilities.
    while (chosen.size() < 2) {
      double total = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) {
          total += probs[i];
        }
      }
      double target = draw_rng.Uniform() * total;
      ItemId pick = 0;
      for (std::size_t i = 0; i < m; ++i) {
        if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
        pick = static_cast<ItemId>(i);
        target -= probs[i];
        if (target <= 0.0) break;
      }
      chosen.push_back(pick);
    }
    for (ItemId i : chosen) {
      interactions.push_back({static_cast<UserId>(u), i, std::nullopt});
    }
  }
  out.dataset = InteractionDataset::FromInteractions(n, m, interactions);

  // Text: the leading slots name the primary topic, the rest the secondary
  // one; each slot is independently replaced by filler with prob `noise`.
  Rng text_rng = rng.Fork(4);
  const std::size_t primary_slots = (spec.words_per_item * 5 + 7) / 8;
  out.corpus.texts.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::string text;
    for (std::size_t slot = 0; slot < spec.words_per_item; ++slot) {
      std::string word;
      if (spec.noise > 0.0 && text_rng.Bernoulli(spec.noise)) {
        word = FillerWord(text_rng.UniformInt(kFillerVocab));
      } else if (slot < primary_slots) {
        word = TopicWord(truth.primary_topic[i], slot % spec.text_vocab);
      } else {
        word = TopicWord(truth.secondary_topic[i],
                         (slot - primary_slots) % spec.text_vocab);
      }
      if (!text.empty()) text.push_back(' ');
      text += word;
    }
    out.corpus.texts[i] = std::move(text);
  }
  return out;
}

}  // namespace fedutr
