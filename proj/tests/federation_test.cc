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
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fedutr/errors.h"
#include "fedutr/federation.h"
#include "fedutr/urm.h"
#include "json.hpp"
#include "test_util.h"

namespace fedutr {
namespace {

CifmParams RandomCifm(std::size_t d, Rng& rng) {
  CifmParams p = CifmParams::Random(d, rng, 0.5);
  for (double& v : p.b) v = rng.Gaussian();
  for (double& v : p.gamma) v = rng.Gaussian();
  for (double& v : p.beta) v = rng.Gaussian();
  return p;
}

LamParams RandomLam(std::size_t p, Rng& rng) {
  LamParams lam = LamParams::Zeros(p);
  for (auto* v : {&lam.a_g, &lam.a_l, &lam.c}) {
    for (double& x : *v) x = rng.Gaussian(0, 2);
  }
  return lam;
}

TEST(Lam, ZeroGateAveragesAndFixedPoint) {
  Rng rng(1);
  const CifmParams g = RandomCifm(3, rng), u = RandomCifm(3, rng);
  Vector rho;
  const CifmParams mean = LamFuse(LamParams::Zeros(g.parameter_count()), g, u, &rho);
  for (double r : rho) EXPECT_EQ(r, 0.5);
  const auto fg = g.Flatten(), fu = u.Flatten(), fm = mean.Flatten();
  for (std::size_t j = 0; j < fg.size(); ++j) EXPECT_NEAR(fm[j], 0.5 * (fg[j] + fu[j]), 1e-15);
  // ρθ + (1-ρ)θ rounds, so only to within an ulp or two.
  const auto fs = LamFuse(RandomLam(g.parameter_count(), rng), g, g).Flatten();
  for (std::size_t j = 0; j < fg.size(); ++j) {
    EXPECT_NEAR(fs[j], fg[j], 4e-16 * (1 + std::abs(fg[j])));
  }
  EXPECT_THROW(LamFuse(LamParams::Zeros(3), g, u), ShapeError);
}

TEST(LamProperty, PerCoordinateContractionIdentity) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    const std::size_t d = 2 + rng.UniformInt(5);
    const CifmParams g = RandomCifm(d, rng), u = RandomCifm(d, rng);
    const LamParams lam = RandomLam(g.parameter_count(), rng);
    Vector rho;
    const auto fused = LamFuse(lam, g, u, &rho).Flatten();
    const auto fg = g.Flatten(), fu = u.Flatten();
    const double rho_min = *std::min_element(rho.begin(), rho.end());
    for (std::size_t j = 0; j < fg.size(); ++j) {
      ASSERT_GT(rho[j], 0.0);
      ASSERT_LT(rho[j], 1.0);
      const double lhs = std::abs(fused[j] - fg[j]);
      const double rhs = (1 - rho[j]) * std::abs(fu[j] - fg[j]);
      ASSERT_LE(std::abs(lhs - rhs), 1e-12) << seed << " " << j;
      ASSERT_LE(lhs, (1 - rho_min) * std::abs(fu[j] - fg[j]) + 1e-12);
    }
  }
}

TEST(Prox, SoftThresholdDefinition) {
  EXPECT_EQ(SoftThreshold(0.05, 0.1), 0.0);
  EXPECT_EQ(SoftThreshold(-0.05, 0.1), 0.0);
  EXPECT_NEAR(SoftThreshold(0.3, 0.1), 0.2, 1e-16);
  EXPECT_NEAR(SoftThreshold(-0.3, 0.1), -0.2, 1e-16);
  EXPECT_EQ(SoftThreshold(0.3, 0.0), 0.3);
}

// Against argmin_z ½(z - x)² + τ|z| by grid search at resolution 1e-4.
TEST(ProxProperty, MatchesGridSearch) {
  Rng rng(77);
  for (int k = 0; k < 1000; ++k) {
    const double x = rng.Uniform(-2, 2), tau = rng.Uniform(0, 1);
    double best = 0, best_val = 1e300;
    for (int i = -25000; i <= 25000; ++i) {
      const double z = i * 1e-4;
      const double v = 0.5 * (z - x) * (z - x) + tau * std::abs(z);
      if (v < best_val) {
        best_val = v;
        best = z;
      }
    }
    ASSERT_NEAR(SoftThreshold(x, tau), best, 1e-4) << x << " " << tau;
  }
}

TEST(Config, ValidationNamesKey) {
  TrainConfig cfg;
  cfg.learning_rate = 0;
  try {
    cfg.Validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "learning_rate");
  }
  cfg = TrainConfig{};
  cfg.participation = 1.5;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.ldp_scale = -1;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.ablation.no_cifm = true;
  EXPECT_EQ(cfg.EffectiveMode(), ModelMode::kNoCifm);
  EXPECT_FALSE(cfg.UsesLam());
}

struct Toy {
  InteractionDataset ds;
  ServerState server;
  TrainConfig cfg;
};

Toy MakeToy(std::size_t d, std::size_t m) {
  Toy t;
  std::vector<Interaction> xs{{0, 1, {}}, {0, 4, {}}, {1, 2, {}}, {1, 3, {}}, {1, 5, {}},
                              {2, 0, {}}, {2, 6, {}}};
  t.ds = InteractionDataset::FromInteractions(3, m, xs);
  t.cfg.dim = d;
  t.cfg.lambda = 0.0;
  t.cfg.local_epochs = 1;
  Rng rng(5);
  t.server.items = Matrix(m, d);
  for (double& v : t.server.items.flat()) v = rng.Gaussian(0, 0.3);
  t.server.cifm = CifmParams::Random(d, rng, 0.1);
  return t;
}

TEST(ClientRound, UpdatesOnlyTouchedRows) {
  Toy t = MakeToy(4, 40);
  const std::vector<ItemId> train{7};
  const std::vector<ItemId> interacted{7, 9};
  // The gate only sees a gradient once the local and global CIFM differ.
  Rng other(11);
  const CifmParams stale = CifmParams::Random(4, other, 0.1);
  ClientState s = InitClient(0, t.cfg, stale.parameter_count(), stale);
  const ClientState before = s;
  const auto r = ClientLocalRound(s, t.server, ClientData{train, interacted}, 40, t.cfg);
  std::size_t changed = 0;
  for (ItemId i = 0; i < 40; ++i) {
    const bool same = std::ranges::equal(r.upload.items.row(i), t.server.items.row(i));
    if (!same) ++changed;
    if (i == 9) EXPECT_TRUE(same);  // held out of training, never a negative
  }
  EXPECT_EQ(changed, 5u);  // one positive + four negatives
  EXPECT_NE(s.user_vec, before.user_vec);
  EXPECT_NE(s.prev_cifm, before.prev_cifm);
  EXPECT_NE(s.lam.c, before.lam.c);
  ASSERT_TRUE(r.upload.cifm.has_value());
  EXPECT_EQ(*r.upload.cifm, s.prev_cifm);
}

TEST(ClientRound, NoLamAdoptsGlobalAndProxZeroesWeights) {
  Toy t = MakeToy(4, 20);
  t.cfg.ablation.no_lam = true;
  t.cfg.lambda = 5.0;  // η·λ = 0.25 wipes out most of a 0.1-scale CIFM
  const std::vector<ItemId> train{1, 2};
  ClientState s = InitClient(0, t.cfg, t.server.cifm.parameter_count(), t.server.cifm);
  const auto r = ClientLocalRound(s, t.server, ClientData{train, train}, 20, t.cfg);
  const auto flat = r.upload.cifm->Flatten();
  const auto zeros = std::count(flat.begin(), flat.end(), 0.0);
  EXPECT_GT(zeros, static_cast<long>(flat.size() / 2));
  EXPECT_EQ(s.lam.c, LamParams::Zeros(flat.size()).c);
}

TEST(ClientRound, DivergenceReportsNonFinite) {
  Toy t = MakeToy(4, 20);
  t.cfg.learning_rate = 1e200;
  t.cfg.local_epochs = 3;
  t.cfg.mode = ModelMode::kFcfBaseline;
  const std::vector<ItemId> train{1, 2, 3};
  ClientState s = InitClient(0, t.cfg, t.server.cifm.parameter_count(), t.server.cifm);
  const ClientState before = s;
  EXPECT_THROW(ClientLocalRound(s, t.server, ClientData{train, train}, 20, t.cfg),
               NonFiniteError);
  EXPECT_EQ(s.user_vec, before.user_vec);  // state untouched by an aborted round
}

double MeanLoss(const Toy& t, const std::vector<ClientState>& clients) {
  double total = 0;
  for (UserId u = 0; u < 3; ++u) {
    ClientModel m;
    m.mode = t.cfg.EffectiveMode();
    m.user_vec = clients[u].user_vec;
    m.items = t.server.items;
    m.cifm = PersonalizedCifm(t.cfg, t.server, clients[u]);
    m.n_interactions = static_cast<double>(t.ds.items_of(u).size());
    std::vector<ItemId> neg;
    for (ItemId i = 7; i < 12; ++i) neg.push_back(i);
    const auto pos = t.ds.items_of(u);
    total += RecLoss(m, std::vector<ItemId>(pos.begin(), pos.end()), neg);
  }
  return total / 3;
}

TEST(ClientRound, OneRoundDescendsOnToy) {
  for (ModelMode mode : {ModelMode::kFedUtr, ModelMode::kFedUtrSar, ModelMode::kFcfBaseline}) {
    Toy t = MakeToy(6, 12);
    t.cfg.mode = mode;
    t.cfg.learning_rate = 0.01;
    t.cfg.batch_size = 0;
    t.cfg.negative_ratio = 1;
    std::vector<ClientState> clients;
    for (UserId u = 0; u < 3; ++u) {
      clients.push_back(InitClient(u, t.cfg, t.server.cifm.parameter_count(), t.server.cifm));
    }
    // The fixed evaluation negatives 7..11 are also the only training
    // negatives available once interacted items are excluded.
    const double before = MeanLoss(t, clients);
    std::vector<Upload> uploads;
    for (UserId u = 0; u < 3; ++u) {
      const auto items = t.ds.items_of(u);
      std::vector<ItemId> excl(items.begin(), items.end());
      for (ItemId i = 0; i < 7; ++i) excl.push_back(i);
      std::sort(excl.begin(), excl.end());
      excl.erase(std::unique(excl.begin(), excl.end()), excl.end());
      uploads.push_back(
          ClientLocalRound(clients[u], t.server, ClientData{items, excl}, 12, t.cfg).upload);
    }
    ServerAggregate(uploads, t.server);
    EXPECT_LT(MeanLoss(t, clients), before) << ToString(mode);
  }
}

TEST(Ldp, ZeroIsIdentityAndScaleMatchesMad) {
  Upload up;
  up.items = Matrix(100, 1000, 0.25);
  up.cifm = CifmParams::Identity(3);
  Rng rng(1);
  Upload same = up;
  ApplyLdp(same, 0.0, rng);
  EXPECT_EQ(same.items, up.items);
  Upload noisy = up;
  ApplyLdp(noisy, 0.3, rng);
  double mad = 0;
  for (std::size_t k = 0; k < up.items.size(); ++k) {
    mad += std::abs(noisy.items.flat()[k] - up.items.flat()[k]);
  }
  mad /= up.items.size();
  EXPECT_NEAR(mad, 0.3, 0.009);
  EXPECT_EQ(*noisy.cifm, *up.cifm);  // CIFM payload stays clean
}

TEST(Aggregate, MeanOracleAndLinearity) {
  ServerState server;
  server.items = Matrix(2, 2);
  server.cifm = CifmParams::Zeros(2);
  Upload x;
  x.items = Matrix(2, 2, {1, -2, 3, 0.5});
  x.cifm = CifmParams::Identity(2);
  ServerAggregate(std::vector<Upload>{x}, server);
  EXPECT_EQ(server.items, x.items);
  EXPECT_EQ(server.cifm, *x.cifm);
  EXPECT_EQ(server.round, 1u);

  Upload neg = x;
  for (double& v : neg.items.flat()) v = -v;
  ServerAggregate(std::vector<Upload>{x, neg}, server);
  for (double v : server.items.flat()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(server.round, 2u);

  Rng rng(3);
  std::vector<Upload> three(3);
  for (auto& u : three) {
    u.items = Matrix(2, 2);
    for (double& v : u.items.flat()) v = rng.Gaussian();
    u.cifm = CifmParams::Random(2, rng, 1.0);
  }
  ServerAggregate(three, server);
  for (std::size_t k = 0; k < 4; ++k) {
    const double want = (three[0].items.flat()[k] + three[1].items.flat()[k] +
                         three[2].items.flat()[k]) / 3.0;
    EXPECT_NEAR(server.items.flat()[k], want, 1e-15);
  }

  std::vector<Upload> copies(7, three[1]);
  ServerAggregate(copies, server);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(server.items.flat()[k], three[1].items.flat()[k], 1e-15);
  }

  Upload bad;
  bad.items = Matrix(3, 2);
  EXPECT_THROW(ServerAggregate(std::vector<Upload>{bad}, server), ShapeError);
  EXPECT_THROW(ServerAggregate(std::vector<Upload>{}, server), std::invalid_argument);
}

TEST(Participants, CountsAndDeterminism) {
  Rng rng(1);
  const auto all = SampleParticipants(10, 1.0, rng);
  EXPECT_EQ(all.size(), 10u);
  Rng a(9), b(9);
  const auto half = SampleParticipants(10, 0.5, a);
  EXPECT_EQ(half.size(), 5u);
  EXPECT_EQ(std::set<UserId>(half.begin(), half.end()).size(), 5u);
  EXPECT_EQ(half, SampleParticipants(10, 0.5, b));
  Rng c(2);
  EXPECT_EQ(SampleParticipants(1000, 0.1, c).size(), 100u);
  Rng d(2);
  EXPECT_EQ(SampleParticipants(7, 0.01, d).size(), 1u);  // ⌈0.07⌉
}

TEST(Privacy, PayloadCarriesOnlyItemsAndCifm) {
  Toy t = MakeToy(4, 10);
  const std::vector<ItemId> train{1, 2};
  ClientState s = InitClient(0, t.cfg, t.server.cifm.parameter_count(), t.server.cifm);
  const auto r = ClientLocalRound(s, t.server, ClientData{train, train}, 10, t.cfg);
  const auto bytes = SerializeUpload(r.upload);
  EXPECT_EQ(Upload::FieldNames(), (std::vector<std::string>{"item_embeddings", "cifm"}));
  const std::size_t header = 2 * (8 + 8 + 8) + std::string("item_embeddings").size() + 4;
  EXPECT_EQ(bytes.size(), header + 8 * (10 * 4 + t.server.cifm.parameter_count()));
  const auto contains = [&](std::span<const double> values) {
    const auto* p = reinterpret_cast<const unsigned char*>(values.data());
    return std::search(bytes.begin(), bytes.end(), p, p + 8 * values.size()) != bytes.end();
  };
  EXPECT_FALSE(contains(s.user_vec.span()));
  EXPECT_FALSE(contains(s.lam.a_g.span()));
  EXPECT_FALSE(contains(s.lam.c.span()));
}

ExperimentData ToyData(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_users = 40;
  spec.m_items = 60;
  spec.target_avg_interactions = 6;
  auto syn = GenerateSynthetic(spec, Rng(seed));
  return PrepareExperimentData(std::move(syn.dataset), std::move(syn.corpus), seed, 4);
}

std::vector<std::string> Stream(const TrainConfig& cfg, const ExperimentData& data,
                                const UniversalProvider& provider) {
  std::vector<std::string> lines;
  RunExperiment(cfg, data, provider, [&](const RoundMetrics& m) {
    lines.push_back(RoundMetricsToJson(m, cfg.eval_k));
  });
  return lines;
}

TEST(Experiment, ZeroRoundsEvaluatesInitialModelOnly) {
  const auto data = ToyData(1);
  TrainConfig cfg;
  cfg.dim = 8;
  cfg.rounds = 0;
  const auto provider = MakeProvider(ProviderConfig{.dim = 8});
  const auto r = RunExperiment(cfg, data, *provider);
  EXPECT_TRUE(r.rounds.empty());
  EXPECT_EQ(r.initial.round, 0u);
  EXPECT_GE(r.initial.hr, 0.0);
  EXPECT_EQ(r.final_ranking.ranks.size(), 40u);
}

TEST(Experiment, DeterministicAcrossRunsAndThreads) {
  const auto data = ToyData(2);
  TrainConfig cfg;
  cfg.dim = 8;
  cfg.rounds = 4;
  cfg.participation = 0.5;
  cfg.ldp_scale = 0.1;
  const auto provider = MakeProvider(ProviderConfig{.dim = 8});
  const auto a = Stream(cfg, data, *provider);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a, Stream(cfg, data, *provider));
  cfg.threads = 3;
  EXPECT_EQ(a, Stream(cfg, data, *provider));
  cfg.threads = 1;
  cfg.seed += 1;
  EXPECT_NE(a, Stream(cfg, data, *provider));
}

TEST(Experiment, EvalEveryKeepsFinalRound) {
  const auto data = ToyData(3);
  TrainConfig cfg;
  cfg.dim = 8;
  cfg.rounds = 5;
  cfg.eval_every = 2;
  const auto provider = MakeProvider(ProviderConfig{.dim = 8});
  const auto r = RunExperiment(cfg, data, *provider);
  std::vector<std::size_t> rounds;
  for (const auto& m : r.rounds) rounds.push_back(m.round);
  EXPECT_EQ(rounds, (std::vector<std::size_t>{2, 4, 5}));
}

TEST(Experiment, JsonlSchema) {
  const auto data = ToyData(4);
  TrainConfig cfg;
  cfg.dim = 8;
  cfg.rounds = 1;
  const auto provider = MakeProvider(ProviderConfig{.dim = 8});
  const auto lines = Stream(cfg, data, *provider);
  const auto j = nlohmann::json::parse(lines.at(0));
  for (const char* key : {"round", "hr10", "ndcg10", "mean_rec_loss", "mean_l1", "per_group",
                          "cosine"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_FALSE(j.contains("wall_ms"));
  EXPECT_EQ(j["per_group"].size(), 4u);
  EXPECT_TRUE(nlohmann::json::parse(RoundMetricsToJson(RoundMetrics{}, 10, true))
                  .contains("wall_ms"));
}

TEST(Experiment, RunsUnderEveryProvider) {
  const auto data = ToyData(5);
  const auto dir = testing::TempDir("providers");
  SavePrecomputedText(dir / "e.tsv", HashedNgramEmbed(data.corpus, ProviderConfig{.dim = 8}));
  for (ProviderKind kind : {ProviderKind::kHashedNgram, ProviderKind::kRandom,
                            ProviderKind::kPrecomputed}) {
    TrainConfig cfg;
    cfg.dim = 8;
    cfg.rounds = 2;
    ProviderConfig pc{.kind = kind, .dim = 8};
    pc.path = dir / "e.tsv";
    const auto r = RunExperiment(cfg, data, *MakeProvider(pc));
    EXPECT_EQ(r.rounds.size(), 2u) << ToString(kind);
  }
  TrainConfig cfg;
  cfg.dim = 16;
  EXPECT_THROW(RunExperiment(cfg, data, *MakeProvider(ProviderConfig{.dim = 8})), ConfigError);
}

TEST(ExperimentProperty, ZeroFractionGrowsWithLambda) {
  const auto data = ToyData(6);
  const auto provider = MakeProvider(ProviderConfig{.dim = 8});
  double prev = -1;
  for (double lambda : {0.001, 0.1, 1.0}) {
    TrainConfig cfg;
    cfg.dim = 8;
    cfg.rounds = 3;
    cfg.lambda = lambda;
    const auto r = RunExperiment(cfg, data, *provider);
    const double z = r.rounds.back().cifm_zero_fraction;
    EXPECT_GE(z, prev) << lambda;
    prev = z;
  }
  EXPECT_GT(prev, 0.5);
}

}  // namespace
}  // namespace fedutr
