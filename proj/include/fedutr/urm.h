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
// Universal item representations: the initial item table E handed to every
// client. Text encoders are outside this project; providers either load
// vectors produced elsewhere, derive them from item text by feature hashing,
// or draw them at random (the representation-free ablation).
#ifndef FEDUTR_URM_H_
#define FEDUTR_URM_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "fedutr/datasets.h"
#include "fedutr/numeric.h"
#include "fedutr/rng.h"

namespace fedutr {

enum class ProviderKind { kPrecomputed, kHashedNgram, kRandom };

std::string ToString(ProviderKind kind);
// Accepts "precomputed", "hashed_ngram" (or "hashed"), "random".
ProviderKind ParseProviderKind(std::string_view name);

struct ProviderConfig {
  ProviderKind kind = ProviderKind::kHashedNgram;
  std::size_t dim = 32;
  bool word_unigrams = true;
  std::vector<std::size_t> char_ngrams = {3};
  bool normalize = true;
  std::uint64_t seed = 0;         // random provider only
  double random_std = 0.1;        // random provider only
  std::filesystem::path path;     // precomputed provider only
};

class UniversalProvider {
 public:
  virtual ~UniversalProvider() = default;

  virtual std::size_t dim() const = 0;
  virtual std::string name() const = 0;
  // One row per item of `corpus`. Deterministic for a fixed configuration.
  virtual Matrix Embed(const ItemCorpus& corpus) const = 0;
};

// Throws std::invalid_argument on dim == 0.
std::unique_ptr<UniversalProvider> MakeProvider(const ProviderConfig& config);

// Scales every nonzero row to unit L2 norm; zero rows stay zero.
void NormalizeRows(Matrix& m);

// 64-bit FNV-1a over the bytes with a fixed non-zero key folded into the
// offset basis, followed by the SplitMix64 finalizer so low bits are usable
// for `h mod d`.
std::uint64_t StableHash64(std::string_view bytes);

// Lowercases ASCII and splits on whitespace.
std::vector<std::string> Tokenize(std::string_view text);

Matrix HashedNgramEmbed(const ItemCorpus& corpus, const ProviderConfig& config);

// i.i.d. Gaussian(0, stddev) entries.
Matrix RandomInit(std::size_t m, std::size_t d, Rng& rng, double stddev = 0.1);

// Reads either the text format
//   #dim=<d> count=<m>
//   <item_id>\t<v1> <v2> ... <vd>
// or a raw little-endian float32 blob with a sidecar `<path>.json`
// {"dim": d, "count": m, "order": "by_item_id"}. Throws DataError naming the
// expected and found shape on mismatch, or on non-finite values.
Matrix LoadPrecomputed(const std::filesystem::path& path,
                       std::size_t expected_m, std::size_t expected_d,
                       bool normalize = false);

void SavePrecomputedText(const std::filesystem::path& path, const Matrix& e);
void SavePrecomputedBinary(const std::filesystem::path& path, const Matrix& e);

// Johnson-Lindenstrauss style Gaussian projection from the input width to
// `d_out` columns, for feature files produced at a larger width.
Matrix RandomProject(const Matrix& e, std::size_t d_out, Rng& rng);

}  // namespace fedutr

#endif  // FEDUTR_URM_H_
