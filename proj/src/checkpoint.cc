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
#include <bit>
#include <fstream>

#include "fedutr/errors.h"
#include "fedutr/model.h"
#include "json.hpp"

namespace fedutr {

void WriteFloat64Blob(const std::filesystem::path& path,
                      std::span<const double> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  unsigned char bytes[8];
  for (double v : values) {
    auto word = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b, word >>= 8) {
      bytes[b] = static_cast<unsigned char>(word & 0xff);
    }
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

std::vector<double> ReadFloat64Blob(const std::filesystem::path& path,
                                    std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open blob: " + path.string());
  const auto size = std::filesystem::file_size(path);
  if (size != expected_count * 8) {
    throw DataError(path.string() + ": expected " +
                    std::to_string(expected_count * 8) + " bytes, found " +
                    std::to_string(size));
  }
  std::vector<double> values(expected_count);
  unsigned char bytes[8];
  for (double& v : values) {
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t word = 0;
    for (int b = 7; b >= 0; --b) word = (word << 8) | bytes[b];
    v = std::bit_cast<double>(word);
  }
  return values;
}

void SaveCheckpoint(const std::filesystem::path& dir, const ClientModel& model,
                    std::uint64_t seed, std::size_t round) {
  std::filesystem::create_directories(dir);
  const std::size_t d = model.dim();
  nlohmann::ordered_json manifest;
  manifest["mode"] = ToString(model.mode);
  manifest["d"] = d;
  manifest["m"] = model.num_items();
  manifest["seed"] = seed;
  manifest["round"] = round;
  manifest["n_interactions"] = model.n_interactions;
  manifest["encoding"] = "float64 little-endian, row-major";
  auto blocks = nlohmann::ordered_json::array();
  const auto write = [&](const std::string& name, std::span<const double> v,
                         std::vector<std::size_t> shape) {
    WriteFloat64Blob(dir / (name + ".f64"), v);
    blocks.push_back({{"name", name}, {"file", name + ".f64"}, {"shape", shape}});
  };
  write("user_vec", model.user_vec, {d});
  write("items", model.items.flat(), {model.items.rows(), model.items.cols()});
  if (UsesCifm(model.mode)) {
    write("cifm_w", model.cifm.w.flat(), {d, d});
    write("cifm_b", model.cifm.b, {d});
    write("cifm_gamma", model.cifm.gamma, {d});
    write("cifm_beta", model.cifm.beta, {d});
  }
  if (model.mode == ModelMode::kFedUtrSar) {
    const double sar[2] = {model.sar.w_s, model.sar.b_s};
    write("sar", sar, {2});
  }
  manifest["blocks"] = blocks;
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

ClientModel LoadCheckpoint(const std::filesystem::path& dir,
                           CheckpointInfo* info) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("missing checkpoint manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(dir.string() + "/manifest.json: " + e.what());
  }
  CheckpointInfo meta;
  meta.mode = ParseModelMode(manifest.at("mode").get<std::string>());
  meta.d = manifest.at("d").get<std::size_t>();
  meta.m = manifest.at("m").get<std::size_t>();
  meta.seed = manifest.at("seed").get<std::uint64_t>();
  meta.round = manifest.at("round").get<std::size_t>();
  const std::size_t d = meta.d;

  ClientModel model;
  model.mode = meta.mode;
  model.n_interactions = manifest.value("n_interactions", 0.0);
  model.user_vec = Vector(ReadFloat64Blob(dir / "user_vec.f64", d));
  model.items = Matrix(meta.m, d, ReadFloat64Blob(dir / "items.f64", meta.m * d));
  if (UsesCifm(meta.mode)) {
    model.cifm.w = Matrix(d, d, ReadFloat64Blob(dir / "cifm_w.f64", d * d));
    model.cifm.b = Vector(ReadFloat64Blob(dir / "cifm_b.f64", d));
    model.cifm.gamma = Vector(ReadFloat64Blob(dir / "cifm_gamma.f64", d));
    model.cifm.beta = Vector(ReadFloat64Blob(dir / "cifm_beta.f64", d));
  }
  if (meta.mode == ModelMode::kFedUtrSar) {
    const auto sar = ReadFloat64Blob(dir / "sar.f64", 2);
    model.sar = {sar[0], sar[1]};
  }
  if (info) *info = meta;
  return model;
}

}  // namespace fedutr
