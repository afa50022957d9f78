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
// Shared fixtures for the unit and acceptance tests.
#ifndef FEDUTR_TESTS_TEST_UTIL_H_
#define FEDUTR_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "fedutr/model.h"
#include "fedutr/numeric.h"
#include "fedutr/rng.h"

namespace fedutr::testing {

inline std::filesystem::path SourceDir() { return FEDUTR_SOURCE_DIR; }

inline std::filesystem::path TempDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fedutr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// A model with every parameter block away from its initial value, so no
// gradient is trivially zero.
inline ClientModel RandomModel(ModelMode mode, std::size_t d, std::size_t m,
                               std::uint64_t seed) {
  Rng rng(seed);
  ClientModel cm;
  cm.mode = mode;
  cm.user_vec = SampleGaussian(rng, 0.0, 0.5, d);
  cm.items = Matrix(m, d);
  for (double& v : cm.items.flat()) v = rng.Gaussian(0.0, 0.5);
  cm.cifm = CifmParams::Random(d, rng, 0.3);
  for (double& v : cm.cifm.b) v = rng.Gaussian(0.0, 0.2);
  for (double& v : cm.cifm.gamma) v += rng.Gaussian(0.0, 0.2);
  for (double& v : cm.cifm.beta) v = rng.Gaussian(0.0, 0.2);
  cm.sar = {rng.Gaussian(0.0, 0.5), rng.Gaussian(0.0, 0.5)};
  cm.n_interactions = static_cast<double>(1 + rng.UniformInt(20));
  return cm;
}

struct BlockCheck {
  std::string block;
  GradCheckReport report;
};

// Finite-difference check of every parameter block that the loss touches in
// `cm.mode`: user vector, each touched item row, CIFM and SAR.
inline std::vector<BlockCheck> CheckAllBlocks(const ClientModel& cm,
                                              const std::vector<ItemId>& pos,
                                              const std::vector<ItemId>& neg,
                                              double tol = 1e-4) {
  const LossAndGrads lg = ComputeLossAndGrads(cm, pos, neg, 0.0);
  std::vector<BlockCheck> out;
  const auto loss_with = [&](auto mutate) {
    return [&, mutate](std::span<const double> x) {
      ClientModel c = cm;
      mutate(c, x);
      return RecLoss(c, pos, neg);
    };
  };

  out.push_back({"user_vec", FiniteDiffCheck(loss_with([](ClientModel& c, std::span<const double> x) {
                                               std::copy(x.begin(), x.end(), c.user_vec.begin());
                                             }),
                                             cm.user_vec, lg.grads.user_vec, 1e-6, tol)});
  for (std::size_t k = 0; k < lg.grads.item_ids.size(); ++k) {
    const ItemId item = lg.grads.item_ids[k];
    out.push_back({"item_row_" + std::to_string(item),
                   FiniteDiffCheck(loss_with([item](ClientModel& c, std::span<const double> x) {
                                     std::copy(x.begin(), x.end(), c.items.row(item).begin());
                                   }),
                                   cm.items.row(item), lg.grads.item_rows.row(k), 1e-6, tol)});
  }
  if (UsesCifm(cm.mode)) {
    const auto flat = cm.cifm.Flatten();
    out.push_back({"cifm", FiniteDiffCheck(loss_with([](ClientModel& c, std::span<const double> x) {
                                             c.cifm.Assign(x);
                                           }),
                                           flat, lg.grads.cifm.Flatten(), 1e-6, tol)});
  }
  if (cm.mode == ModelMode::kFedUtrSar) {
    const std::vector<double> sar{cm.sar.w_s, cm.sar.b_s};
    const std::vector<double> grad{lg.grads.sar.w_s, lg.grads.sar.b_s};
    out.push_back({"sar", FiniteDiffCheck(loss_with([](ClientModel& c, std::span<const double> x) {
                                            c.sar = {x[0], x[1]};
                                          }),
                                          sar, grad, 1e-6, tol)});
  }
  return out;
}

}  // namespace fedutr::testing

#endif  // FEDUTR_TESTS_TEST_UTIL_H_
