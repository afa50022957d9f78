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
// Client-side scoring model.
//
// An item's universal embedding e is turned into a fused embedding f by the
// collaborative information fusion module (CIFM):
//
//   f = LayerNorm(relu(W e + b) + e; gamma, beta)                  (fedutr)
//   f = LayerNorm(a relu(W e + b) + (1 - a) e; gamma, beta)        (fedutr_sar)
//       a = sigmoid(w_s ln(1 + n_u) + b_s),  n_u = |I_u|
//   f = e                                          (fcf_baseline, no_cifm)
//
// and scored as r = sigmoid(<user_vec, f>). Training minimizes the summed
// binary cross-entropy over positives and sampled negatives; the L1 penalty
// on the CIFM parameters is reported but not differentiated (the trainer
// applies it as a proximal step).
#ifndef FEDUTR_MODEL_H_
#define FEDUTR_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedutr/datasets.h"
#include "fedutr/numeric.h"
#include "fedutr/rng.h"

namespace fedutr {

enum class ModelMode { kFedUtr, kFedUtrSar, kFcfBaseline, kNoCifm };

std::string ToString(ModelMode mode);
ModelMode ParseModelMode(std::string_view name);
inline bool UsesCifm(ModelMode mode) {
  return mode == ModelMode::kFedUtr || mode == ModelMode::kFedUtrSar;
}

// Number of scalars in a d-dimensional CIFM: W (d×d), b, gamma, beta.
constexpr std::size_t CifmParameterCount(std::size_t d) { return d * d + 3 * d; }
// The client-local gate has three coefficient vectors over the flattened
// CIFM parameters.
constexpr std::size_t LamParameterCount(std::size_t d) {
  return 3 * CifmParameterCount(d);
}
inline constexpr std::size_t kSarParameterCount = 2;

struct CifmParams {
  Matrix w;
  Vector b;
  Vector gamma;
  Vector beta;

  // W = 0, b = 0, gamma = 1, beta = 0: a pure residual pass-through.
  static CifmParams Identity(std::size_t d);
  // Identity with W ~ N(0, w_std²).
  static CifmParams Random(std::size_t d, Rng& rng, double w_std);
  static CifmParams Zeros(std::size_t d);

  std::size_t dim() const { return b.size(); }
  std::size_t parameter_count() const { return CifmParameterCount(dim()); }

  // Layout: W row-major, then b, gamma, beta.
  std::vector<double> Flatten() const;
  void Assign(std::span<const double> flat);
  static CifmParams Unflatten(std::size_t d, std::span<const double> flat);

  double L1Norm() const;
  bool AllFinite() const;

  bool operator==(const CifmParams&) const = default;
};

struct SarParams {
  double w_s = 0.0;
  double b_s = 0.0;
  bool operator==(const SarParams&) const = default;
};

// Residual mixing weight a = sigmoid(w_s ln(1 + n) + b_s).
double SarGate(const SarParams& sar, double n_interactions);

Vector CifmForward(const CifmParams& cifm, std::span<const double> e);
Vector SarForward(const CifmParams& cifm, const SarParams& sar,
                  std::span<const double> e, double n_interactions);

// Fused embedding of `e` under `mode`.
Vector FuseItem(ModelMode mode, const CifmParams& cifm, const SarParams& sar,
                double n_interactions, std::span<const double> e);

struct ClientModel {
  ModelMode mode = ModelMode::kFedUtr;
  Vector user_vec;
  Matrix items;        // local copy of E
  CifmParams cifm;     // unused unless UsesCifm(mode)
  SarParams sar;       // used only by fedutr_sar
  double n_interactions = 0.0;  // |I_u| seen by the sparsity gate

  std::size_t dim() const { return user_vec.size(); }
  std::size_t num_items() const { return items.rows(); }
};

// Throws std::out_of_range on an item id >= m.
Vector FusedItem(const ClientModel& model, ItemId item);
double Score(const ClientModel& model, ItemId item);
double Predict(const ClientModel& model, ItemId item);

struct LossBreakdown {
  double rec_loss = 0.0;
  double l1_penalty = 0.0;  // ||θ_CIFM||_1, zero for CIFM-free modes
  double lambda = 0.0;
  double total = 0.0;       // rec_loss + lambda * l1_penalty
};

struct ModelGrads {
  Vector user_vec;
  std::vector<ItemId> item_ids;  // unique touched items, ascending
  Matrix item_rows;              // row k is dL/dE[item_ids[k]]
  CifmParams cifm;               // zero for CIFM-free modes
  SarParams sar;                 // zero unless fedutr_sar
};

struct LossAndGrads {
  LossBreakdown loss;
  ModelGrads grads;
};

// Smooth loss -Σ_pos log r - Σ_neg log(1 - r) with exact gradients for every
// parameter block. Duplicate ids contribute once per occurrence. Throws
// std::invalid_argument when `positives` is empty.
LossAndGrads ComputeLossAndGrads(const ClientModel& model,
                                 std::span<const ItemId> positives,
                                 std::span<const ItemId> negatives,
                                 double lambda);

// Recommendation loss only; no gradients.
double RecLoss(const ClientModel& model, std::span<const ItemId> positives,
               std::span<const ItemId> negatives);

// Trainable parameters of one client's model for an m-item catalogue at
// width d. FCF: item table + user vector. FedUTR additionally counts the
// CIFM and the client-local gate; FedUTR-SAR adds the two gate scalars.
std::size_t ParameterCount(ModelMode mode, std::size_t m, std::size_t d,
                           bool include_user = true);
std::size_t ParameterBytes(ModelMode mode, std::size_t m, std::size_t d,
                           bool include_user = true,
                           std::size_t bytes_per_param = 4);

// --- checkpoints -------------------------------------------------------------

struct CheckpointInfo {
  ModelMode mode = ModelMode::kFedUtr;
  std::size_t d = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  std::size_t round = 0;
};

// Writes manifest.json plus one raw little-endian float64 blob per parameter
// block into `dir` (created if missing).
void SaveCheckpoint(const std::filesystem::path& dir, const ClientModel& model,
                    std::uint64_t seed, std::size_t round);
ClientModel LoadCheckpoint(const std::filesystem::path& dir,
                           CheckpointInfo* info = nullptr);

void WriteFloat64Blob(const std::filesystem::path& path,
                      std::span<const double> values);
std::vector<double> ReadFloat64Blob(const std::filesystem::path& path,
                                    std::size_t expected_count);

}  // namespace fedutr

#endif  // FEDUTR_MODEL_H_
