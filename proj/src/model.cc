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
#include "fedutr/model.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedutr/errors.h"

namespace fedutr {

std::string ToString(ModelMode mode) {
  switch (mode) {
    case ModelMode::kFedUtr:
      return "fedutr";
    case ModelMode::kFedUtrSar:
      return "fedutr_sar";
    case ModelMode::kFcfBaseline:
      return "fcf_baseline";
    case ModelMode::kNoCifm:
      return "no_cifm";
  }
  return "unknown";
}

ModelMode ParseModelMode(std::string_view name) {
  if (name == "fedutr") return ModelMode::kFedUtr;
  if (name == "fedutr_sar") return ModelMode::kFedUtrSar;
  if (name == "fcf_baseline" || name == "fcf") return ModelMode::kFcfBaseline;
  if (name == "no_cifm") return ModelMode::kNoCifm;
  throw std::invalid_argument("unknown model mode '" + std::string(name) + "'");
}

// --- CifmParams ---------------------------------------------------------------------

CifmParams CifmParams::Zeros(std::size_t d) {
  return CifmParams{Matrix(d, d), Vector(d), Vector(d), Vector(d)};
}

CifmParams CifmParams::Identity(std::size_t d) {
  CifmParams p = Zeros(d);
  p.gamma.fill(1.0);
  return p;
}

CifmParams CifmParams::Random(std::size_t d, Rng& rng, double w_std) {
  CifmParams p = Identity(d);
  for (double& v : p.w.flat()) v = rng.Gaussian(0.0, w_std);
  return p;
}

std::vector<double> CifmParams::Flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  flat.insert(flat.end(), w.flat().begin(), w.flat().end());
  flat.insert(flat.end(), b.begin(), b.end());
  flat.insert(flat.end(), gamma.begin(), gamma.end());
  flat.insert(flat.end(), beta.begin(), beta.end());
  return flat;
}

void CifmParams::Assign(std::span<const double> flat) {
  const std::size_t d = dim();
  CheckSameSize(flat.size(), CifmParameterCount(d), "CifmParams::Assign");
  auto src = flat.begin();
  std::copy_n(src, d * d, w.flat().begin());
  src += static_cast<std::ptrdiff_t>(d * d);
  for (Vector* v : {&b, &gamma, &beta}) {
    std::copy_n(src, d, v->begin());
    src += static_cast<std::ptrdiff_t>(d);
  }
}

CifmParams CifmParams::Unflatten(std::size_t d, std::span<const double> flat) {
  CifmParams p = Zeros(d);
  p.Assign(flat);
  return p;
}

double CifmParams::L1Norm() const {
  double s = 0.0;
  for (double v : w.flat()) s += std::abs(v);
  for (const Vector* v : {&b, &gamma, &beta}) {
    for (double x : *v) s += std::abs(x);
  }
  return s;
}

bool CifmParams::AllFinite() const {
  return fedutr::AllFinite(w.flat()) && fedutr::AllFinite(b.span()) &&
         fedutr::AllFinite(gamma.span()) && fedutr::AllFinite(beta.span());
}

// --- forward passes -------------------------------------------------------------------

double SarGate(const SarParams& sar, double n_interactions) {
  return Sigmoid(sar.w_s * std::log1p(n_interactions) + sar.b_s);
}

Vector CifmForward(const CifmParams& cifm, std::span<const double> e) {
  const Vector hidden = Relu(AffineForward(cifm.w, cifm.b, e));
  return LayerNormForward(Add(hidden, e), cifm.gamma, cifm.beta).value;
}

Vector SarForward(const CifmParams& cifm, const SarParams& sar,
                  std::span<const double> e, double n_interactions) {
  if (n_interactions < 0.0) {
    throw std::invalid_argument("SarForward: negative interaction count");
  }
  const double a = SarGate(sar, n_interactions);
  const Vector hidden = Relu(AffineForward(cifm.w, cifm.b, e));
  Vector mixed(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) {
    mixed[k] = a * hidden[k] + (1.0 - a) * e[k];
  }
  return LayerNormForward(mixed, cifm.gamma, cifm.beta).value;
}

Vector FuseItem(ModelMode mode, const CifmParams& cifm, const SarParams& sar,
                double n_interactions, std::span<const double> e) {
  switch (mode) {
    case ModelMode::kFedUtr:
      return CifmForward(cifm, e);
    case ModelMode::kFedUtrSar:
      return SarForward(cifm, sar, e, n_interactions);
    case ModelMode::kFcfBaseline:
    case ModelMode::kNoCifm:
      return Vector(e);
  }
  throw std::logic_error("FuseItem: unknown mode");
}

namespace {

void CheckItem(const ClientModel& model, ItemId item) {
  if (item >= model.num_items()) {
    throw std::out_of_range("item id " + std::to_string(item) +
                            " out of range [0, " +
                            std::to_string(model.num_items()) + ")");
  }
}

}  // namespace

Vector FusedItem(const ClientModel& model, ItemId item) {
  CheckItem(model, item);
  return FuseItem(model.mode, model.cifm, model.sar, model.n_interactions,
                  model.items.row(item));
}

double Score(const ClientModel& model, ItemId item) {
  return Dot(model.user_vec, FusedItem(model, item));
}

double Predict(const ClientModel& model, ItemId item) {
  return Sigmoid(Score(model, item));
}

// --- loss and gradients -------------------------------------------------------------

namespace {

// Accumulates one item's gradient contribution and returns its loss term.
// `grad_sar_logit` collects dL/d(gate pre-activation).
double AccumulateItem(const ClientModel& model, ItemId item, bool positive,
                      double sar_gate, ModelGrads& grads,
                      std::span<double> item_grad, double& grad_sar_logit) {
  const auto e = model.items.row(item);
  const std::size_t d = e.size();

  if (!UsesCifm(model.mode)) {
    const double s = Dot(model.user_vec, e);
    const double r = Sigmoid(s);
    const double g = positive ? r - 1.0 : r;
    DotBackward(model.user_vec, e, g, grads.user_vec.span(), item_grad);
    return positive ? Softplus(-s) : Softplus(s);
  }

  const CifmParams& c = model.cifm;
  const Vector pre = AffineForward(c.w, c.b, e);
  const Vector hidden = Relu(pre);
  const bool sar = model.mode == ModelMode::kFedUtrSar;
  const double a = sar ? sar_gate : 1.0;
  const double keep = sar ? 1.0 - sar_gate : 1.0;
  Vector mixed(d);
  for (std::size_t k = 0; k < d; ++k) mixed[k] = a * hidden[k] + keep * e[k];
  const LayerNormOutput ln = LayerNormForward(mixed, c.gamma, c.beta);
  const Vector& fused = ln.value;

  const double s = Dot(model.user_vec, fused);
  const double r = Sigmoid(s);
  const double g = positive ? r - 1.0 : r;

  Vector grad_fused(d);
  DotBackward(model.user_vec, fused, g, grads.user_vec.span(),
              grad_fused.span());
  const Vector grad_mixed = LayerNormBackward(
      ln.cache, c.gamma, grad_fused, grads.cifm.gamma.span(),
      grads.cifm.beta.span());

  Vector grad_hidden(d);
  for (std::size_t k = 0; k < d; ++k) {
    grad_hidden[k] = a * grad_mixed[k];
    item_grad[k] += keep * grad_mixed[k];
  }
  if (sar) {
    // d mixed / d a = hidden - e; a = sigmoid(w_s log(1+n) + b_s).
    double grad_gate = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      grad_gate += grad_mixed[k] * (hidden[k] - e[k]);
    }
    grad_sar_logit += grad_gate * sar_gate * (1.0 - sar_gate);
  }
  const Vector grad_pre = ReluBackward(pre, grad_hidden);
  AffineBackward(c.w, e, grad_pre, grads.cifm.w, grads.cifm.b.span(),
                 item_grad);
  return positive ? Softplus(-s) : Softplus(s);
}

}  // namespace

LossAndGrads ComputeLossAndGrads(const ClientModel& model,
                                 std::span<const ItemId> positives,
                                 std::span<const ItemId> negatives,
                                 double lambda) {
  if (positives.empty()) {
    throw std::invalid_argument("ComputeLossAndGrads: empty positive set");
  }
  const std::size_t d = model.dim();
  CheckSameSize(model.items.cols(), d, "ClientModel item width");

  LossAndGrads out;
  ModelGrads& grads = out.grads;
  grads.user_vec = Vector(d);
  grads.cifm = CifmParams::Zeros(UsesCifm(model.mode) ? d : 0);
  if (UsesCifm(model.mode)) CheckSameSize(model.cifm.dim(), d, "CIFM width");

  grads.item_ids.assign(positives.begin(), positives.end());
  grads.item_ids.insert(grads.item_ids.end(), negatives.begin(), negatives.end());
  for (ItemId i : grads.item_ids) CheckItem(model, i);
  std::sort(grads.item_ids.begin(), grads.item_ids.end());
  grads.item_ids.erase(std::unique(grads.item_ids.begin(), grads.item_ids.end()),
                       grads.item_ids.end());
  grads.item_rows = Matrix(grads.item_ids.size(), d);
  const auto row_of = [&](ItemId i) {
    const auto it =
        std::lower_bound(grads.item_ids.begin(), grads.item_ids.end(), i);
    return grads.item_rows.row(static_cast<std::size_t>(it - grads.item_ids.begin()));
  };

  const double log_n = std::log1p(model.n_interactions);
  const double gate = SarGate(model.sar, model.n_interactions);
  double grad_sar_logit = 0.0;
  double rec = 0.0;
  for (ItemId i : positives) {
    rec += AccumulateItem(model, i, true, gate, grads, row_of(i),
                          grad_sar_logit);
  }
  for (ItemId i : negatives) {
    rec += AccumulateItem(model, i, false, gate, grads, row_of(i),
                          grad_sar_logit);
  }
  if (model.mode == ModelMode::kFedUtrSar) {
    grads.sar.w_s = grad_sar_logit * log_n;
    grads.sar.b_s = grad_sar_logit;
  }

  out.loss.rec_loss = rec;
  out.loss.lambda = lambda;
  out.loss.l1_penalty = UsesCifm(model.mode) ? model.cifm.L1Norm() : 0.0;
  out.loss.total = rec + lambda * out.loss.l1_penalty;
  return out;
}

double RecLoss(const ClientModel& model, std::span<const ItemId> positives,
               std::span<const ItemId> negatives) {
  double rec = 0.0;
  for (ItemId i : positives) rec += Softplus(-Score(model, i));
  for (ItemId i : negatives) rec += Softplus(Score(model, i));
  return rec;
}

// --- parameter accounting ------------------------------------------------------------

std::size_t ParameterCount(ModelMode mode, std::size_t m, std::size_t d,
                           bool include_user) {
  std::size_t count = m * d + (include_user ? d : 0);
  if (UsesCifm(mode)) count += CifmParameterCount(d) + LamParameterCount(d);
  if (mode == ModelMode::kFedUtrSar) count += kSarParameterCount;
  return count;
}

std::size_t ParameterBytes(ModelMode mode, std::size_t m, std::size_t d,
                           bool include_user, std::size_t bytes_per_param) {
  return ParameterCount(mode, m, d, include_user) * bytes_per_param;
}

}  // namespace fedutr
