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
#include "fedutr/federation.h"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "fedutr/errors.h"
#include "json.hpp"

namespace fedutr {
namespace {

// Stream tags forked off the experiment seed.
constexpr std::uint64_t kClientStream = 0xC11E;
constexpr std::uint64_t kCifmInitStream = 0xC1F3;
constexpr std::uint64_t kRandomItemStream = 0x17E3;
constexpr std::uint64_t kParticipationStream = 0x9A27;
constexpr std::uint64_t kLdpStream = 0x1D90;

}  // namespace

// --- LAM ------------------------------------------------------------------------------

LamParams LamParams::Zeros(std::size_t p) {
  return LamParams{Vector(p), Vector(p), Vector(p)};
}

bool LamParams::AllFinite() const {
  return fedutr::AllFinite(a_g.span()) && fedutr::AllFinite(a_l.span()) &&
         fedutr::AllFinite(c.span());
}

Vector LamGate(const LamParams& lam, std::span<const double> theta_global,
               std::span<const double> theta_local) {
  const std::size_t p = lam.size();
  CheckSameSize(theta_global.size(), p, "LamGate global");
  CheckSameSize(theta_local.size(), p, "LamGate local");
  CheckSameSize(lam.a_g.size(), p, "LamGate a_g");
  CheckSameSize(lam.a_l.size(), p, "LamGate a_l");
  Vector rho(p);
  for (std::size_t j = 0; j < p; ++j) {
    rho[j] = Sigmoid(lam.a_g[j] * theta_global[j] +
                     lam.a_l[j] * theta_local[j] + lam.c[j]);
  }
  return rho;
}

Vector GatedCombine(std::span<const double> rho,
                    std::span<const double> theta_global,
                    std::span<const double> theta_local) {
  CheckSameSize(rho.size(), theta_global.size(), "GatedCombine global");
  CheckSameSize(rho.size(), theta_local.size(), "GatedCombine local");
  Vector out(rho.size());
  for (std::size_t j = 0; j < rho.size(); ++j) {
    out[j] = rho[j] * theta_global[j] + (1.0 - rho[j]) * theta_local[j];
  }
  return out;
}

CifmParams LamFuse(const LamParams& lam, const CifmParams& theta_global,
                   const CifmParams& theta_prev_local, Vector* rho_out) {
  CheckSameSize(theta_global.dim(), theta_prev_local.dim(), "LamFuse");
  const auto g = theta_global.Flatten();
  const auto l = theta_prev_local.Flatten();
  Vector rho = LamGate(lam, g, l);
  const Vector fused = GatedCombine(rho, g, l);
  if (rho_out) *rho_out = std::move(rho);
  return CifmParams::Unflatten(theta_global.dim(), fused);
}

// --- proximal step -----------------------------------------------------------------------

double SoftThreshold(double x, double tau) {
  if (x > tau) return x - tau;
  if (x < -tau) return x + tau;
  return 0.0;
}

void SoftThresholdInPlace(std::span<double> values, double tau) {
  for (double& v : values) v = SoftThreshold(v, tau);
}

// --- configuration --------------------------------------------------------------------

void TrainConfig::Validate() const {
  if (dim < 2) throw ConfigError("dim", "must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate", "must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
    throw ConfigError("lr_decay", "must be in (0, 1]");
  }
  if (!(lambda >= 0.0)) throw ConfigError("lambda", "must be >= 0");
  if (!(ldp_scale >= 0.0)) throw ConfigError("ldp_scale", "must be >= 0");
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw ConfigError("participation", "must be in (0, 1]");
  }
  if (negative_ratio < 1) throw ConfigError("negative_ratio", "must be >= 1");
  if (local_epochs < 1) throw ConfigError("local_epochs", "must be >= 1");
  if (eval_k < 1) throw ConfigError("eval_k", "must be >= 1");
  if (sparsity_groups < 2) throw ConfigError("sparsity_groups", "must be >= 2");
  if (threads < 1) throw ConfigError("threads", "must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every", "must be >= 1");
  if (!(user_init_std >= 0.0)) throw ConfigError("user_init_std", "must be >= 0");
  if (!(cifm_init_std >= 0.0)) throw ConfigError("cifm_init_std", "must be >= 0");
}

ModelMode TrainConfig::EffectiveMode() const {
  return ablation.no_cifm && UsesCifm(mode) ? ModelMode::kNoCifm : mode;
}

double TrainConfig::LearningRateAt(std::size_t round) const {
  return learning_rate * std::pow(lr_decay, static_cast<double>(round));
}

// --- client ---------------------------------------------------------------------------------

ClientState InitClient(UserId user, const TrainConfig& cfg, std::size_t p,
                       const CifmParams& initial_global) {
  ClientState s;
  s.user = user;
  s.rng = Rng(cfg.seed).Fork(kClientStream).Fork(user);
  Rng init = s.rng.Fork(0);
  s.user_vec = SampleGaussian(init, 0.0, cfg.user_init_std, cfg.dim);
  s.lam = LamParams::Zeros(p);
  s.prev_cifm = initial_global;
  return s;
}

namespace {

void RequireFinite(std::span<const double> v, const char* what, UserId user) {
  if (!AllFinite(v)) {
    throw NonFiniteError("client " + std::to_string(user) + ": non-finite " +
                         what + " after local update");
  }
}

}  // namespace

ClientRoundResult ClientLocalRound(ClientState& state, const ServerState& server,
                                   const ClientData& data, std::size_t n_items,
                                   const TrainConfig& cfg) {
  const ModelMode mode = cfg.EffectiveMode();
  const bool with_cifm = UsesCifm(mode);
  const bool with_lam = cfg.UsesLam();
  const bool with_prox = cfg.UsesProximal();
  const std::size_t d = cfg.dim;
  CheckSameSize(server.items.cols(), d, "server item width");
  CheckSameSize(server.items.rows(), n_items, "server item count");
  if (data.train.empty()) {
    throw DataError("client " + std::to_string(state.user) +
                    " has no training positives");
  }

  ClientState next = state;
  ClientModel model;
  model.mode = mode;
  model.user_vec = next.user_vec;
  model.items = server.items;
  model.sar = next.sar;
  model.n_interactions = static_cast<double>(data.train.size());

  std::vector<double> theta_g;
  std::vector<double> theta_prev;
  std::vector<double> delta;
  Vector rho;  // gate at the current LAM coefficients
  if (with_cifm) {
    CheckSameSize(server.cifm.dim(), d, "server CIFM width");
    theta_g = server.cifm.Flatten();
    theta_prev = next.prev_cifm.Flatten();
    model.cifm = with_lam ? LamFuse(next.lam, server.cifm, next.prev_cifm, &rho)
                          : server.cifm;
    delta.assign(theta_g.size(), 0.0);
  }

  const double eta = cfg.LearningRateAt(server.round);
  const double shrink = eta * cfg.lambda;
  ClientRoundResult result;
  const auto step = [&](std::span<const ItemId> positives,
                        std::span<const ItemId> negatives) {
    const LossAndGrads lg =
        ComputeLossAndGrads(model, positives, negatives, cfg.lambda);
    const ModelGrads& g = lg.grads;

    Axpy(-eta, g.user_vec, model.user_vec.span());
    for (std::size_t k = 0; k < g.item_ids.size(); ++k) {
      Axpy(-eta, g.item_rows.row(k), model.items.row(g.item_ids[k]));
    }
    if (mode == ModelMode::kFedUtrSar) {
      model.sar.w_s -= eta * g.sar.w_s;
      model.sar.b_s -= eta * g.sar.b_s;
    }
    if (with_cifm) {
      const auto grad_theta = g.cifm.Flatten();
      std::vector<double> theta;
      if (with_lam) {
        // θ = gate(θ_g, θ_prev) + Δ: the gate coefficients receive the chain
        // rule through ρ, the residual Δ receives the plain gradient.
        for (std::size_t j = 0; j < grad_theta.size(); ++j) {
          const double gl = grad_theta[j] * (theta_g[j] - theta_prev[j]) *
                            rho[j] * (1.0 - rho[j]);
          next.lam.a_g[j] -= eta * gl * theta_g[j];
          next.lam.a_l[j] -= eta * gl * theta_prev[j];
          next.lam.c[j] -= eta * gl;
          delta[j] -= eta * grad_theta[j];
        }
        rho = LamGate(next.lam, theta_g, theta_prev);
        const Vector base = GatedCombine(rho, theta_g, theta_prev);
        theta.resize(base.size());
        for (std::size_t j = 0; j < theta.size(); ++j) theta[j] = base[j] + delta[j];
        if (with_prox) {
          SoftThresholdInPlace(theta, shrink);
          for (std::size_t j = 0; j < theta.size(); ++j) delta[j] = theta[j] - base[j];
        }
      } else {
        theta = model.cifm.Flatten();
        Axpy(-eta, grad_theta, theta);
        if (with_prox) SoftThresholdInPlace(theta, shrink);
      }
      RequireFinite(theta, "CIFM", state.user);
      model.cifm.Assign(theta);
    }

    RequireFinite(model.user_vec.span(), "user vector", state.user);
    for (ItemId i : g.item_ids) RequireFinite(model.items.row(i), "item row", state.user);
    if (!next.lam.AllFinite()) {
      throw NonFiniteError("client " + std::to_string(state.user) +
                           ": non-finite LAM gate after local update");
    }
    const double sar[2] = {model.sar.w_s, model.sar.b_s};
    RequireFinite(sar, "SAR gate", state.user);
    return lg.loss.rec_loss;
  };

  const std::size_t n_pos = data.train.size();
  const std::size_t batch = cfg.batch_size == 0 ? n_pos : std::min(cfg.batch_size, n_pos);
  std::vector<ItemId> order(data.train.begin(), data.train.end());
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    const auto negatives = SampleNegatives(data.interacted, n_items,
                                           cfg.negative_ratio * n_pos, next.rng);
    if (batch < n_pos) next.rng.Shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < n_pos; begin += batch) {
      const std::size_t end = std::min(n_pos, begin + batch);
      // Negatives are split in proportion to the positives of the batch.
      const std::size_t neg_begin = negatives.size() * begin / n_pos;
      const std::size_t neg_end = negatives.size() * end / n_pos;
      epoch_loss += step(std::span(order).subspan(begin, end - begin),
                         std::span(negatives).subspan(neg_begin, neg_end - neg_begin));
    }
    result.metrics.rec_loss = epoch_loss;
  }

  next.user_vec = model.user_vec;
  next.sar = model.sar;
  ++next.rounds_completed;
  if (with_cifm) {
    next.prev_cifm = model.cifm;
    result.metrics.l1 = model.cifm.L1Norm();
    result.upload.cifm = model.cifm;
  }
  result.upload.items = std::move(model.items);
  state = std::move(next);
  return result;
}

void ApplyLdp(Upload& upload, double scale, Rng& rng) {
  AddLaplaceNoise(rng, scale, upload.items.flat());
}

std::vector<unsigned char> SerializeUpload(const Upload& upload) {
  std::vector<unsigned char> bytes;
  const auto put_u64 = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b, v >>= 8) bytes.push_back(static_cast<unsigned char>(v));
  };
  const auto put_field = [&](const std::string& tag,
                             std::span<const double> values,
                             std::uint64_t rows, std::uint64_t cols) {
    put_u64(tag.size());
    bytes.insert(bytes.end(), tag.begin(), tag.end());
    put_u64(rows);
    put_u64(cols);
    for (double v : values) put_u64(std::bit_cast<std::uint64_t>(v));
  };
  put_field("item_embeddings", upload.items.flat(), upload.items.rows(),
            upload.items.cols());
  if (upload.cifm) {
    const auto flat = upload.cifm->Flatten();
    put_field("cifm", flat, 1, flat.size());
  }
  return bytes;
}

// --- server ---------------------------------------------------------------------------------

Aggregator::Aggregator(const ServerState& shape)
    : items_(shape.items.rows(), shape.items.cols()),
      cifm_(shape.cifm.parameter_count(), 0.0) {}

void Aggregator::Add(const Upload& upload) {
  CheckSameSize(upload.items.rows(), items_.rows(), "upload item rows");
  CheckSameSize(upload.items.cols(), items_.cols(), "upload item cols");
  Axpy(1.0, upload.items.flat(), items_.flat());
  if (upload.cifm) {
    const auto flat = upload.cifm->Flatten();
    CheckSameSize(flat.size(), cifm_.size(), "upload CIFM");
    if (count_ > 0 && !has_cifm_) {
      throw ShapeError("uploads disagree on carrying a CIFM");
    }
    Axpy(1.0, flat, cifm_);
    has_cifm_ = true;
  } else if (has_cifm_) {
    throw ShapeError("uploads disagree on carrying a CIFM");
  }
  ++count_;
}

void Aggregator::Finish(ServerState& server) {
  if (count_ == 0) throw std::logic_error("Aggregator::Finish with no uploads");
  const double inv = 1.0 / static_cast<double>(count_);
  Scale(inv, items_.flat());
  server.items = std::move(items_);
  if (has_cifm_) {
    Scale(inv, cifm_);
    server.cifm.Assign(cifm_);
  }
  CheckFinite(server.items.flat(), "aggregated item table");
  ++server.round;
  items_ = Matrix(server.items.rows(), server.items.cols());
  std::fill(cifm_.begin(), cifm_.end(), 0.0);
  has_cifm_ = false;
  count_ = 0;
}

void ServerAggregate(std::span<const Upload> uploads, ServerState& server) {
  if (uploads.empty()) throw std::invalid_argument("ServerAggregate: no uploads");
  Aggregator agg(server);
  for (const Upload& u : uploads) agg.Add(u);
  agg.Finish(server);
}

std::vector<UserId> SampleParticipants(std::size_t n_clients, double fraction,
                                       Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("participation fraction must be in (0, 1]");
  }
  const auto count = std::min<std::size_t>(
      n_clients,
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n_clients) - 1e-9)));
  std::vector<UserId> ids(n_clients);
  for (std::size_t u = 0; u < n_clients; ++u) ids[u] = static_cast<UserId>(u);
  if (count < n_clients) {
    for (std::size_t k = 0; k < count; ++k) {
      std::swap(ids[k], ids[k + rng.UniformInt(n_clients - k)]);
    }
    ids.resize(count);
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

// --- orchestration --------------------------------------------------------------------------

ExperimentData PrepareExperimentData(InteractionDataset dataset,
                                     ItemCorpus corpus,
                                     std::uint64_t split_seed,
                                     std::size_t n_groups) {
  if (corpus.size() != dataset.num_items()) {
    throw DataError("item corpus covers " + std::to_string(corpus.size()) +
                    " items but the dataset has " +
                    std::to_string(dataset.num_items()));
  }
  ExperimentData data;
  data.split = LeaveOneOutSplit(dataset, Rng(split_seed));
  data.groups = GroupUsersBySparsity(dataset, n_groups);
  data.dataset = std::move(dataset);
  data.corpus = std::move(corpus);
  return data;
}

CifmParams PersonalizedCifm(const TrainConfig& cfg, const ServerState& server,
                            const ClientState& client) {
  if (!UsesCifm(cfg.EffectiveMode())) return server.cifm;
  if (!cfg.UsesLam()) return server.cifm;
  return LamFuse(client.lam, server.cifm, client.prev_cifm);
}

RoundMetrics EvaluateRound(const TrainConfig& cfg, const ExperimentData& data,
                           const ServerState& server,
                           std::span<const ClientState> clients,
                           std::vector<std::size_t>* ranks_out,
                           const Matrix* universal) {
  const Matrix& base = universal ? *universal : server.items;
  CheckSameSize(base.rows(), server.items.rows(), "universal table rows");
  const ModelMode mode = cfg.EffectiveMode();
  const SplitSpec& split = data.split;
  CheckSameSize(clients.size(), split.num_users(), "EvaluateRound clients");
  std::vector<std::size_t> ranks(split.num_users());
  CosineAccumulator cosine;
  std::vector<double> scores;
  std::vector<double> cu_pos, cu_neg, cf_pos, cf_neg;
  for (UserId u = 0; u < split.num_users(); ++u) {
    const ClientState& client = clients[u];
    const CifmParams cifm = PersonalizedCifm(cfg, server, client);
    const double n = static_cast<double>(split.train[u].size());
    const auto fuse = [&](ItemId i) {
      return FuseItem(mode, cifm, client.sar, n, server.items.row(i));
    };
    const auto cand = Candidates(split, u);
    scores.resize(cand.size());
    cu_neg.clear();
    cf_neg.clear();
    for (std::size_t k = 0; k < cand.size(); ++k) {
      const Vector f = fuse(cand[k]);
      scores[k] = Dot(client.user_vec, f);
      if (k > 0) {
        cu_neg.push_back(Cosine(client.user_vec, base.row(cand[k])));
        cf_neg.push_back(Cosine(client.user_vec, f));
      }
    }
    ranks[u] = RankOfPositive(cand, scores);
    cu_pos.clear();
    cf_pos.clear();
    for (ItemId i : split.train[u]) {
      cu_pos.push_back(Cosine(client.user_vec, base.row(i)));
      cf_pos.push_back(Cosine(client.user_vec, fuse(i)));
    }
    cosine.AddUser(cu_pos, cu_neg, cf_pos, cf_neg);
  }
  RoundMetrics m;
  m.round = server.round;
  const RankingResult overall = SummarizeRanks(ranks, cfg.eval_k);
  m.hr = overall.hr;
  m.ndcg = overall.ndcg;
  m.per_group = EvaluateByGroup(ranks, data.groups, cfg.eval_k);
  m.cosine = cosine.Result();
  if (ranks_out) *ranks_out = std::move(ranks);
  return m;
}

std::string RoundMetricsToJson(const RoundMetrics& m, std::size_t k,
                               bool include_wall_time) {
  const std::string ks = std::to_string(k);
  nlohmann::ordered_json j;
  j["round"] = m.round;
  j["hr" + ks] = m.hr;
  j["ndcg" + ks] = m.ndcg;
  j["mean_rec_loss"] = m.mean_rec_loss;
  j["mean_l1"] = m.mean_l1;
  j["cifm_zero_fraction"] = m.cifm_zero_fraction;
  if (include_wall_time) j["wall_ms"] = m.wall_ms;
  auto groups = nlohmann::ordered_json::array();
  for (const GroupReport& g : m.per_group) {
    groups.push_back({{"group", g.group + 1},
                      {"sparsity", g.sparsity},
                      {"label", g.label},
                      {"n_users", g.n_users},
                      {"hr" + ks, g.hr},
                      {"ndcg" + ks, g.ndcg}});
  }
  j["per_group"] = groups;
  j["cosine"] = {{"universal_interacted", m.cosine.universal_interacted},
                 {"universal_non_interacted", m.cosine.universal_non_interacted},
                 {"fused_interacted", m.cosine.fused_interacted},
                 {"fused_non_interacted", m.cosine.fused_non_interacted}};
  return j.dump();
}

namespace {

double ZeroFraction(const CifmParams& p) {
  const auto flat = p.Flatten();
  if (flat.empty()) return 0.0;
  const auto zeros = std::count(flat.begin(), flat.end(), 0.0);
  return static_cast<double>(zeros) / static_cast<double>(flat.size());
}

}  // namespace

ExperimentResult RunExperiment(const TrainConfig& cfg, const ExperimentData& data,
                               const UniversalProvider& provider,
                               const RoundCallback& on_round) {
  using Clock = std::chrono::steady_clock;
  cfg.Validate();
  const ModelMode mode = cfg.EffectiveMode();
  const std::size_t n = data.dataset.num_users();
  const std::size_t m = data.dataset.num_items();
  const std::size_t d = cfg.dim;
  const Rng root(cfg.seed);

  std::unique_ptr<UniversalProvider> replacement;
  const UniversalProvider* source = &provider;
  if (cfg.ablation.no_urm) {
    ProviderConfig pc;
    pc.kind = ProviderKind::kRandom;
    pc.dim = d;
    pc.seed = root.Fork(kRandomItemStream).seed();
    replacement = MakeProvider(pc);
    source = replacement.get();
  }
  if (source->dim() != d) {
    throw ConfigError("dim", "provider produces d=" +
                                 std::to_string(source->dim()) +
                                 " but the config has dim=" + std::to_string(d));
  }

  ExperimentResult result;
  ServerState& server = result.server;
  auto start = Clock::now();
  server.items = source->Embed(data.corpus);
  CheckSameSize(server.items.rows(), m, "provider rows");
  CheckFinite(server.items.flat(), "initial item table");
  const Matrix universal = server.items;
  if (UsesCifm(mode)) {
    Rng cifm_rng = root.Fork(kCifmInitStream);
    server.cifm = CifmParams::Random(d, cifm_rng, cfg.cifm_init_std);
  } else {
    server.cifm = CifmParams::Zeros(0);
  }
  const std::size_t p = UsesCifm(mode) ? CifmParameterCount(d) : 0;

  auto& clients = result.clients;
  clients.reserve(n);
  for (UserId u = 0; u < n; ++u) clients.push_back(InitClient(u, cfg, p, server.cifm));

  std::vector<std::size_t> ranks;
  result.initial = EvaluateRound(cfg, data, server, clients, &ranks, &universal);
  result.initial.wall_ms =
      std::chrono::duration<double, std::milli>(Clock::now() - start).count();

  Aggregator aggregator(server);
  const std::size_t batch = cfg.threads;
  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    Rng part_rng = root.Fork(kParticipationStream).Fork(t);
    const auto participants = SampleParticipants(n, cfg.participation, part_rng);
    const Rng ldp_root = root.Fork(kLdpStream).Fork(t);

    double loss_sum = 0.0;
    double l1_sum = 0.0;
    double zero_sum = 0.0;
    std::vector<std::optional<ClientRoundResult>> slots(batch);
    std::vector<std::exception_ptr> errors(batch);
    for (std::size_t begin = 0; begin < participants.size(); begin += batch) {
      const std::size_t end = std::min(participants.size(), begin + batch);
      const auto work = [&](std::size_t slot) {
        const UserId u = participants[begin + slot];
        try {
          ClientData cd{data.split.train[u], data.dataset.items_of(u)};
          ClientRoundResult r = ClientLocalRound(clients[u], server, cd, m, cfg);
          if (cfg.ldp_scale > 0.0) {
            Rng ldp_rng = ldp_root.Fork(u);
            ApplyLdp(r.upload, cfg.ldp_scale, ldp_rng);
          }
          slots[slot] = std::move(r);
        } catch (...) {
          errors[slot] = std::current_exception();
        }
      };
      if (end - begin == 1) {
        work(0);
      } else {
        std::vector<std::jthread> pool;
        for (std::size_t s = 0; s < end - begin; ++s) pool.emplace_back(work, s);
      }
      // Fixed (ascending id) accumulation order keeps the sum bit-stable
      // regardless of which client finished first.
      for (std::size_t s = 0; s < end - begin; ++s) {
        if (errors[s]) std::rethrow_exception(errors[s]);
        const ClientRoundResult& r = *slots[s];
        aggregator.Add(r.upload);
        loss_sum += r.metrics.rec_loss;
        l1_sum += r.metrics.l1;
        if (r.upload.cifm) zero_sum += ZeroFraction(*r.upload.cifm);
        slots[s].reset();
      }
    }
    aggregator.Finish(server);
    server.round = t;
    if (t % cfg.eval_every != 0 && t != cfg.rounds) continue;

    RoundMetrics metrics = EvaluateRound(cfg, data, server, clients, &ranks, &universal);
    const auto count = static_cast<double>(participants.size());
    metrics.mean_rec_loss = loss_sum / count;
    metrics.mean_l1 = l1_sum / count;
    metrics.cifm_zero_fraction = zero_sum / count;
    metrics.wall_ms =
        std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    start = Clock::now();
    if (on_round) on_round(metrics);
    result.rounds.push_back(std::move(metrics));
  }
  result.final_ranking = SummarizeRanks(ranks, cfg.eval_k);
  return result;
}

}  // namespace fedutr
