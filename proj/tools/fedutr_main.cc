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
// fedutr: command line driver.
//
//   fedutr run --config exp.cfg --out results/exp
//   fedutr plug-and-play --config exp.cfg --out results/pnp
//   fedutr harness [--config h.cfg] --out results/harness
//   fedutr stats data/interactions.tsv
//   fedutr generate --config synth.cfg --out data/mine
//
// Exit codes: 0 ok, 1 configuration error, 2 runtime error.
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "fedutr/datasets.h"
#include "fedutr/errors.h"
#include "fedutr/experiment.h"
#include "fedutr/rng.h"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

void AddCommon(CLI::App* cmd, CommonFlags* flags, bool config_required) {
  auto* opt = cmd->add_option("--config", flags->config, "experiment config (key = value)");
  if (config_required) opt->required();
  cmd->add_option("--out", flags->out, "output directory")->required();
  cmd->add_option("--seed", flags->seed, "overrides seed and seeds from the config");
  cmd->add_option("--threads", flags->threads, "worker threads");
}

fedutr::ExperimentConfig Resolve(const CommonFlags& flags) {
  fedutr::ExperimentConfig cfg =
      flags.config.empty() ? fedutr::ExperimentConfig{} : fedutr::LoadConfig(flags.config);
  if (flags.seed) {
    cfg.train.seed = *flags.seed;
    cfg.seeds = {*flags.seed};
    cfg.harness.spec.seed = *flags.seed;
  }
  if (flags.threads) {
    if (*flags.threads == 0) throw fedutr::ConfigError("--threads", "must be >= 1");
    cfg.train.threads = *flags.threads;
  }
  return cfg;
}

int Stats(const std::string& path, const std::string& counts, const std::string& config,
          std::size_t min_interactions) {
  fedutr::DatasetStats stats;
  if (!counts.empty()) {
    std::size_t u = 0, i = 0, n = 0;
    char c1 = 0, c2 = 0;
    std::istringstream in(counts);
    if (!(in >> u >> c1 >> i >> c2 >> n) || c1 != ',' || c2 != ',' || !in.eof()) {
      throw fedutr::ConfigError("--counts", "expected users,items,interactions");
    }
    stats = fedutr::StatsFromCounts(u, i, n);
  } else if (!config.empty()) {
    const auto cfg = fedutr::LoadConfig(config);
    stats = fedutr::PrepareData(cfg, cfg.EffectiveSeeds().front()).stats;
  } else if (!path.empty()) {
    stats = fedutr::ComputeStats(fedutr::LoadInteractions(path, min_interactions).dataset);
  } else {
    throw fedutr::ConfigError("stats", "give a dataset path, --counts or --config");
  }
  std::cout << stats.ToJson() << "\n";
  std::cerr << "sparsity " << fedutr::FormatPercent(stats.sparsity) << ", avg interactions "
            << fedutr::FormatFixed(stats.avg_interactions, 2) << "\n";
  return 0;
}

void Generate(const fedutr::ExperimentConfig& cfg, const std::filesystem::path& out) {
  const std::uint64_t seed = cfg.EffectiveSeeds().front();
  const auto syn =
      fedutr::GenerateSynthetic(cfg.data.spec, fedutr::Rng(fedutr::DataSeed(seed)));
  std::filesystem::create_directories(out);
  fedutr::WriteInteractionsTsv(out / "interactions.tsv", syn.dataset);
  fedutr::WriteItemCorpusTsv(out / "items.tsv", syn.corpus);
  std::cout << fedutr::ComputeStats(syn.dataset).ToJson() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated recommendation simulator"};
  app.set_version_flag("--version", std::string(fedutr::kToolVersion));
  app.require_subcommand(1);

  CommonFlags run_flags, pnp_flags, harness_flags, gen_flags;
  auto* run = app.add_subcommand("run", "run the experiment kind named in the config");
  AddCommon(run, &run_flags, true);
  auto* pnp = app.add_subcommand("plug-and-play", "FCF with random vs text-derived item tables");
  AddCommon(pnp, &pnp_flags, true);
  auto* harness = app.add_subcommand("harness", "convergence check on convex quadratics");
  AddCommon(harness, &harness_flags, false);
  auto* gen = app.add_subcommand("generate", "write a synthetic corpus as TSV files");
  AddCommon(gen, &gen_flags, true);

  std::string stats_path, stats_counts, stats_config;
  std::size_t min_interactions = 2;
  auto* stats = app.add_subcommand("stats", "dataset statistics as JSON");
  stats->add_option("dataset", stats_path, "interactions TSV (user, item[, ts])");
  stats->add_option("--counts", stats_counts, "users,items,interactions");
  stats->add_option("--config", stats_config, "synthetic or file data from a config");
  stats->add_option("--min-interactions", min_interactions, "drop users below this count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (stats->parsed()) return Stats(stats_path, stats_counts, stats_config, min_interactions);
    if (gen->parsed()) {
      Generate(Resolve(gen_flags), gen_flags.out);
      return 0;
    }
    CommonFlags* flags = run->parsed() ? &run_flags : pnp->parsed() ? &pnp_flags : &harness_flags;
    fedutr::ExperimentConfig cfg = Resolve(*flags);
    if (pnp->parsed()) cfg.kind = fedutr::ExperimentKind::kPlugAndPlay;
    if (harness->parsed()) cfg.kind = fedutr::ExperimentKind::kConvexHarness;
    fedutr::RunKind(cfg, flags->out, std::cerr);
    std::cerr << "wrote " << flags->out << "\n";
    return 0;
  } catch (const fedutr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
