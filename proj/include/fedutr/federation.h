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
// Synchronous federated training rounds.
//
// Each round the server ships (E, θ_g) to the participating clients. A client
// first blends θ_g with its own previous CIFM through the local adaptation
// gate
//
//   ρ = sigmoid(a_g ⊙ θ_g + a_l ⊙ θ_prev + c),   θ = ρ ⊙ θ_g + (1 - ρ) ⊙ θ_prev
//
// then runs proximal SGD on its private data (soft-thresholding the CIFM
// after every step) and uploads its full item table and CIFM. Uploads are
// optionally perturbed with Laplace noise and averaged uniformly. The user
// vector, the gate coefficients and the SAR scalars never leave the client.
#ifndef FEDUTR_FEDERATION_H_
#define FEDUTR_FEDERATION_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedutr/datasets.h"
#include "fedutr/evaluation.h"
#include "fedutr/model.h"
#include "fedutr/numeric.h"
#include "fedutr/rng.h"
#include "fedutr/urm.h"

namespace fedutr {

// --- local adaptation gate ---------------------------------------------------------

struct LamParams {
  Vector a_g;
  Vector a_l;
  Vector c;

  // All-zero coefficients: ρ = 0.5 everywhere.
  static LamParams Zeros(std::size_t p);
  std::size_t size() const { return c.size(); }
  bool AllFinite() const;
};

// ρ_j = sigmoid(a_g,j θ_g,j + a_l,j θ_u,j + c_j).
Vector LamGate(const LamParams& lam, std::span<const double> theta_global,
               std::span<const double> theta_local);

// ρ ⊙ θ_g + (1 - ρ) ⊙ θ_u.
Vector GatedCombine(std::span<const double> rho,
                    std::span<const double> theta_global,
                    std::span<const double> theta_local);

// Blends the server CIFM with the client's previous CIFM. `rho_out`, when
// given, receives the gate values. Throws ShapeError on mismatched widths.
CifmParams LamFuse(const LamParams& lam, const CifmParams& theta_global,
                   const CifmParams& theta_prev_local,
                   Vector* rho_out = nullptr);

// --- proximal operator ------------------------------------------------------------------

// argmin_z ½(z - x)² + tau |z|.
double SoftThreshold(double x, double tau);
void SoftThresholdInPlace(std::span<double> values, double tau);

// --- configuration -------------------------------------------------------------------

struct AblationFlags {
  bool no_urm = false;      // item table from the random provider
  bool no_cifm = false;     // score against the raw item table
  bool no_lam = false;      // clients adopt θ_g verbatim
  bool no_regular = false;  // skip the proximal L1 step
};

struct TrainConfig {
  ModelMode mode = ModelMode::kFedUtr;
  std::size_t dim = 32;
  std::size_t rounds = 40;
  std::size_t local_epochs = 2;
  std::size_t batch_size = 1;       // positives per local SGD step; 0 = all of them
  double learning_rate = 0.05;
  double lr_decay = 1.0;            // per-round multiplicative decay
  double lambda = 0.001;            // L1 strength on the CIFM
  std::size_t negative_ratio = 4;
  double participation = 1.0;
  double ldp_scale = 0.0;           // Laplace scale δ on uploaded items
  AblationFlags ablation;
  std::uint64_t seed = 42;
  std::size_t eval_k = kDefaultTopK;
  std::size_t sparsity_groups = 5;
  double user_init_std = 0.1;
  double cifm_init_std = 0.05;
  std::size_t threads = 1;
  std::size_t eval_every = 1;       // evaluate every k rounds; the last round always

  // Throws ConfigError naming the offending field.
  void Validate() const;
  // Mode after applying the no_cifm ablation.
  ModelMode EffectiveMode() const;
  bool UsesLam() const { return UsesCifm(EffectiveMode()) && !ablation.no_lam; }
  bool UsesProximal() const {
    return UsesCifm(EffectiveMode()) && !ablation.no_regular && lambda > 0.0;
  }
  double LearningRateAt(std::size_t round) const;
};

// --- client and server state --------------------------------------------------------------

struct ClientState {
  UserId user = 0;
  Vector user_vec;
  LamParams lam;
  CifmParams prev_cifm;  // θ_{u,t-1}; equals the initial θ_g before round 1
  SarParams sar;
  Rng rng{0};
  std::size_t rounds_completed = 0;
};

struct ServerState {
  Matrix items;       // global E
  CifmParams cifm;    // θ_g
  std::size_t round = 0;
};

// What a client sends to the server: nothing else is ever serialized.
struct Upload {
  Matrix items;
  std::optional<CifmParams> cifm;

  static std::vector<std::string> FieldNames() {
    return {"item_embeddings", "cifm"};
  }
};

// Little-endian byte serialization of an upload, as it would travel on the
// wire: tag, shape, float64 payload per field.
std::vector<unsigned char> SerializeUpload(const Upload& upload);

struct ClientRoundMetrics {
  double rec_loss = 0.0;   // summed smooth loss over the last local epoch
  double l1 = 0.0;         // ||θ_CIFM||_1 after the round
};

struct ClientRoundResult {
  Upload upload;
  ClientRoundMetrics metrics;
};

// The training view of a client's data.
struct ClientData {
  std::span<const ItemId> train;      // positives, sorted
  std::span<const ItemId> interacted; // full I_u (excluded from negatives)
};

ClientState InitClient(UserId user, const TrainConfig& cfg, std::size_t p,
                       const CifmParams& initial_global);

// One local round: LAM blend, `local_epochs` passes of proximal SGD over the
// client's positives (minibatches of `batch_size`, each with its share of the
// epoch's freshly sampled negatives), then the upload (before LDP). Throws NonFiniteError
// when any parameter becomes NaN/Inf; the client state is left untouched in
// that case.
ClientRoundResult ClientLocalRound(ClientState& state, const ServerState& server,
                                   const ClientData& data,
                                   std::size_t n_items,
                                   const TrainConfig& cfg);

// Adds Laplace(0, δ) noise to every uploaded item-embedding entry. The CIFM
// is left unperturbed.
void ApplyLdp(Upload& upload, double scale, Rng& rng);

// Streaming uniform mean of uploads.
class Aggregator {
 public:
  explicit Aggregator(const ServerState& shape);
  void Add(const Upload& upload);
  std::size_t count() const { return count_; }
  // Writes the mean into `server` and increments its round counter. Throws
  // std::logic_error when nothing was added.
  void Finish(ServerState& server);

 private:
  Matrix items_;
  std::vector<double> cifm_;
  bool has_cifm_ = false;
  std::size_t count_ = 0;
};

// Unweighted elementwise mean over `uploads`; throws on an empty list or
// mismatched shapes.
void ServerAggregate(std::span<const Upload> uploads, ServerState& server);

// ⌈fraction · n⌉ distinct clients, ascending.
std::vector<UserId> SampleParticipants(std::size_t n_clients, double fraction,
                                       Rng& rng);

// --- experiment orchestration --------------------------------------------------------------

struct ExperimentData {
  InteractionDataset dataset;
  ItemCorpus corpus;
  SplitSpec split;
  SparsityGroups groups;
};

// Leave-one-out split and sparsity groups for a dataset; the split depends
// only on `split_seed`.
ExperimentData PrepareExperimentData(InteractionDataset dataset,
                                     ItemCorpus corpus,
                                     std::uint64_t split_seed,
                                     std::size_t n_groups = 5);

struct RoundMetrics {
  std::size_t round = 0;
  double hr = 0.0;
  double ndcg = 0.0;
  double mean_rec_loss = 0.0;
  double mean_l1 = 0.0;
  double cifm_zero_fraction = 0.0;
  double wall_ms = 0.0;
  std::vector<GroupReport> per_group;
  CosineTrace cosine;
};

// JSON object for one round. `wall_ms` is included only on request, which
// keeps the default stream a pure function of the inputs.
std::string RoundMetricsToJson(const RoundMetrics& m, std::size_t k,
                               bool include_wall_time = false);

struct ExperimentResult {
  RoundMetrics initial;              // the untrained model (round 0)
  std::vector<RoundMetrics> rounds;  // evaluated rounds, ascending
  ServerState server;
  std::vector<ClientState> clients;
  RankingResult final_ranking;
};

using RoundCallback = std::function<void(const RoundMetrics&)>;

// Initializes E from the provider (or from a random provider when
// cfg.ablation.no_urm), evaluates the untrained model, then runs cfg.rounds
// rounds of distribute → local training → LDP → aggregate → evaluate.
// `on_round` sees every evaluated round except the initial one.
ExperimentResult RunExperiment(const TrainConfig& cfg,
                               const ExperimentData& data,
                               const UniversalProvider& provider,
                               const RoundCallback& on_round = {});

// Evaluates every user with its personalized view of the current server
// state (LAM-blended CIFM, private user vector and SAR gate). The cosine
// trace compares against `universal` (the provider's table before any
// training); nullptr falls back to the current server table.
RoundMetrics EvaluateRound(const TrainConfig& cfg, const ExperimentData& data,
                           const ServerState& server,
                           std::span<const ClientState> clients,
                           std::vector<std::size_t>* ranks = nullptr,
                           const Matrix* universal = nullptr);

// The CIFM a client would score with right now.
CifmParams PersonalizedCifm(const TrainConfig& cfg, const ServerState& server,
                            const ClientState& client);

}  // namespace fedutr

#endif  // FEDUTR_FEDERATION_H_
