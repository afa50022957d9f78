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
#include "fedutr/urm.h"

#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fedutr/errors.h"
#include "json.hpp"

namespace fedutr {
namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;
constexpr std::uint64_t kHashKey = 0x5552'4d2d'7631'0000ULL;  // "URM-v1"

class HashedNgramProvider final : public UniversalProvider {
 public:
  explicit HashedNgramProvider(ProviderConfig config)
      : config_(std::move(config)) {}
  std::size_t dim() const override { return config_.dim; }
  std::string name() const override { return "hashed_ngram"; }
  Matrix Embed(const ItemCorpus& corpus) const override {
    return HashedNgramEmbed(corpus, config_);
  }

 private:
  ProviderConfig config_;
};

class RandomProvider final : public UniversalProvider {
 public:
  explicit RandomProvider(ProviderConfig config) : config_(std::move(config)) {}
  std::size_t dim() const override { return config_.dim; }
  std::string name() const override { return "random"; }
  Matrix Embed(const ItemCorpus& corpus) const override {
    Rng rng(config_.seed);
    return RandomInit(corpus.size(), config_.dim, rng, config_.random_std);
  }

 private:
  ProviderConfig config_;
};

class PrecomputedProvider final : public UniversalProvider {
 public:
  explicit PrecomputedProvider(ProviderConfig config)
      : config_(std::move(config)) {}
  std::size_t dim() const override { return config_.dim; }
  std::string name() const override { return "precomputed"; }
  Matrix Embed(const ItemCorpus& corpus) const override {
    return LoadPrecomputed(config_.path, corpus.size(), config_.dim,
                           config_.normalize);
  }

 private:
  ProviderConfig config_;
};

std::string ShapeMessage(const std::filesystem::path& path, const char* what,
                         std::size_t expected, std::size_t found) {
  std::ostringstream msg;
  msg << path.string() << ": " << what << " mismatch: expected " << expected
      << ", found " << found;
  return msg.str();
}

Matrix LoadText(const std::filesystem::path& path, std::size_t expected_m,
                std::size_t expected_d) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  std::size_t dim = 0;
  std::size_t count = 0;
  if (std::sscanf(line.c_str(), "#dim=%zu count=%zu", &dim, &count) != 2) {
    throw DataError(path.string() + ": header must be '#dim=<d> count=<m>'");
  }
  if (dim != expected_d) throw DataError(ShapeMessage(path, "dim", expected_d, dim));
  if (count != expected_m) {
    throw DataError(ShapeMessage(path, "count", expected_m, count));
  }
  Matrix e(count, dim);
  std::vector<bool> seen(count, false);
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    std::size_t id = 0;
    const auto [p, ec] = std::from_chars(line.data(), line.data() + tab, id);
    if (tab == std::string::npos || ec != std::errc() || p != line.data() + tab) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected <item_id>\\t<values>");
    }
    if (id >= count || seen[id]) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": item id out of range or repeated");
    }
    seen[id] = true;
    ++rows;
    std::istringstream values(line.substr(tab + 1));
    std::size_t found = 0;
    double v = 0.0;
    auto row = e.row(id);
    while (values >> v) {
      if (found < dim) row[found] = v;
      ++found;
    }
    if (found != dim) {
      throw DataError(ShapeMessage(path, "row dim", dim, found) + " (line " +
                      std::to_string(line_no) + ")");
    }
  }
  if (rows != count) throw DataError(ShapeMessage(path, "row count", count, rows));
  return e;
}

Matrix LoadBinary(const std::filesystem::path& path,
                  const std::filesystem::path& sidecar, std::size_t expected_m,
                  std::size_t expected_d) {
  std::ifstream meta_in(sidecar);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(sidecar.string() + ": " + e.what());
  }
  const auto dim = meta.value("dim", std::size_t{0});
  const auto count = meta.value("count", std::size_t{0});
  if (meta.value("order", std::string()) != "by_item_id") {
    throw DataError(sidecar.string() + ": order must be \"by_item_id\"");
  }
  if (dim != expected_d) throw DataError(ShapeMessage(path, "dim", expected_d, dim));
  if (count != expected_m) {
    throw DataError(ShapeMessage(path, "count", expected_m, count));
  }
  const std::size_t bytes = dim * count * sizeof(float);
  const auto size = std::filesystem::file_size(path);
  if (size != bytes) throw DataError(ShapeMessage(path, "byte size", bytes, size));
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> raw(bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  Matrix e(count, dim);
  auto flat = e.flat();
  for (std::size_t k = 0; k < flat.size(); ++k) {
    std::uint32_t word = 0;
    for (int b = 3; b >= 0; --b) word = (word << 8) | raw[4 * k + b];
    flat[k] = static_cast<double>(std::bit_cast<float>(word));
  }
  return e;
}

}  // namespace

std::string ToString(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::kPrecomputed:
      return "precomputed";
    case ProviderKind::kHashedNgram:
      return "hashed_ngram";
    case ProviderKind::kRandom:
      return "random";
  }
  return "unknown";
}

ProviderKind ParseProviderKind(std::string_view name) {
  if (name == "precomputed") return ProviderKind::kPrecomputed;
  if (name == "hashed_ngram" || name == "hashed") return ProviderKind::kHashedNgram;
  if (name == "random") return ProviderKind::kRandom;
  throw std::invalid_argument("unknown provider kind '" + std::string(name) + "'");
}

std::unique_ptr<UniversalProvider> MakeProvider(const ProviderConfig& config) {
  if (config.dim == 0) throw std::invalid_argument("provider dim must be > 0");
  switch (config.kind) {
    case ProviderKind::kPrecomputed:
      return std::make_unique<PrecomputedProvider>(config);
    case ProviderKind::kHashedNgram:
      return std::make_unique<HashedNgramProvider>(config);
    case ProviderKind::kRandom:
      return std::make_unique<RandomProvider>(config);
  }
  throw std::invalid_argument("unknown provider kind");
}

void NormalizeRows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double norm = Norm2(row);
    if (norm > 0.0) Scale(1.0 / norm, row);
  }
}

std::uint64_t StableHash64(std::string_view bytes) {
  std::uint64_t h = kFnvOffset ^ kHashKey;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return Mix64(h);
}

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Matrix HashedNgramEmbed(const ItemCorpus& corpus, const ProviderConfig& config) {
  const std::size_t d = config.dim;
  if (d == 0) throw std::invalid_argument("hashed embedding dim must be > 0");
  Matrix e(corpus.size(), d);
  const auto add = [&](std::span<double> row, const std::string& feature) {
    const std::uint64_t h = StableHash64(feature);
    row[h % d] += (h >> 63) ? -1.0 : 1.0;
  };
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto row = e.row(i);
    for (const std::string& token : Tokenize(corpus.texts[i])) {
      if (config.word_unigrams) add(row, "w:" + token);
      const std::string padded = "<" + token + ">";
      for (std::size_t n : config.char_ngrams) {
        if (n == 0 || padded.size() < n) continue;
        const std::string prefix = "c" + std::to_string(n) + ":";
        for (std::size_t k = 0; k + n <= padded.size(); ++k) {
          add(row, prefix + padded.substr(k, n));
        }
      }
    }
  }
  if (config.normalize) NormalizeRows(e);
  return e;
}

Matrix RandomInit(std::size_t m, std::size_t d, Rng& rng, double stddev) {
  Matrix e(m, d);
  for (double& v : e.flat()) v = rng.Gaussian(0.0, stddev);
  return e;
}

Matrix LoadPrecomputed(const std::filesystem::path& path,
                       std::size_t expected_m, std::size_t expected_d,
                       bool normalize) {
  if (!std::filesystem::exists(path)) {
    throw DataError("embedding file not found: " + path.string());
  }
  std::filesystem::path sidecar = path;
  sidecar += ".json";
  std::ifstream probe(path, std::ios::binary);
  char head[5] = {};
  probe.read(head, 5);
  Matrix e;
  if (probe.gcount() == 5 && std::memcmp(head, "#dim=", 5) == 0) {
    e = LoadText(path, expected_m, expected_d);
  } else if (std::filesystem::exists(sidecar)) {
    e = LoadBinary(path, sidecar, expected_m, expected_d);
  } else {
    throw DataError(path.string() +
                    ": neither a '#dim=' text file nor a blob with a .json "
                    "sidecar");
  }
  if (!AllFinite(e.flat())) {
    throw DataError(path.string() + ": non-finite embedding value");
  }
  if (normalize) NormalizeRows(e);
  return e;
}

void SavePrecomputedText(const std::filesystem::path& path, const Matrix& e) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.precision(17);
  out << "#dim=" << e.cols() << " count=" << e.rows() << "\n";
  for (std::size_t r = 0; r < e.rows(); ++r) {
    out << r << '\t';
    const auto row = e.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ' ';
      out << row[c];
    }
    out << '\n';
  }
}

void SavePrecomputedBinary(const std::filesystem::path& path, const Matrix& e) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  for (double v : e.flat()) {
    const auto word = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    const unsigned char bytes[4] = {
        static_cast<unsigned char>(word), static_cast<unsigned char>(word >> 8),
        static_cast<unsigned char>(word >> 16),
        static_cast<unsigned char>(word >> 24)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
  std::filesystem::path sidecar = path;
  sidecar += ".json";
  std::ofstream meta(sidecar);
  meta << nlohmann::ordered_json{
              {"dim", e.cols()}, {"count", e.rows()}, {"order", "by_item_id"}}
              .dump()
       << "\n";
}

Matrix RandomProject(const Matrix& e, std::size_t d_out, Rng& rng) {
  if (d_out == 0) throw std::invalid_argument("projection width must be > 0");
  const std::size_t d_in = e.cols();
  Matrix proj(d_in, d_out);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d_out));
  for (double& v : proj.flat()) v = rng.Gaussian(0.0, stddev);
  Matrix out(e.rows(), d_out);
  for (std::size_t r = 0; r < e.rows(); ++r) {
    const auto src = e.row(r);
    auto dst = out.row(r);
    for (std::size_t k = 0; k < d_in; ++k) {
      if (src[k] == 0.0) continue;
      const auto p = proj.row(k);
      for (std::size_t c = 0; c < d_out; ++c) dst[c] += src[k] * p[c];
    }
  }
  return out;
}

}  // namespace fedutr
