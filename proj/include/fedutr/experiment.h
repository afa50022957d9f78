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
// Experiment configs (flat key = value files) and the drivers behind each
// experiment kind: single runs, ablations, sweeps, group reports, the
// plug-and-play comparison and the convex harness.
#ifndef FEDUTR_EXPERIMENT_H_
#define FEDUTR_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "fedutr/convergence.h"
#include "fedutr/datasets.h"
#include "fedutr/federation.h"
#include "fedutr/urm.h"

namespace fedutr {

inline constexpr const char* kToolVersion = "0.1.0";

enum class ExperimentKind {
  kSingle,
  kAblationSuite,
  kLdpSweep,
  kLambdaSweep,
  kDimSweep,
  kGroupEval,
  kPlugAndPlay,
  kConvexHarness,
};
std::string ToString(ExperimentKind kind);
ExperimentKind ParseExperimentKind(std::string_view name);

struct DataSource {
  bool synthetic = true;
  SyntheticSpec spec;
  std::filesystem::path interactions;
  std::filesystem::path items;
  std::size_t min_interactions = 2;
};

struct HarnessConfig {
  ConvexTestbedSpec spec;
  std::size_t rounds = 2000;
  std::size_t replicates = 32;
  std::size_t burn_in = 100;
  std::size_t drift_seeds = 10;
  double lam_rho = 0.5;
  double prox_lambda = 0.01;  // λ used by the with_l1_prox variant
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kSingle;
  TrainConfig train;
  DataSource data;
  ProviderConfig provider;          // dim and seed are filled per run
  bool log_wall_time = false;       // add wall_ms to metrics.jsonl
  std::vector<std::uint64_t> seeds;  // sweeps; empty means {train.seed}
  std::vector<double> ldp_values{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> lambda_values{1.0, 0.1, 0.01, 0.001, 0.0001};
  std::vector<std::size_t> dim_values{8, 16, 32, 64};
  double baseline_learning_rate = 0.0;  // FCF baseline in group_eval; 0 = learning_rate
  HarnessConfig harness;

  std::vector<std::uint64_t> EffectiveSeeds() const;
};

// Parses `key = value` lines; `#` starts a comment. Throws ConfigError
// naming the key for unknown keys, duplicates and malformed values.
ExperimentConfig ParseConfig(std::string_view text);
ExperimentConfig LoadConfig(const std::filesystem::path& path);
// Every key with its resolved value, in a form ParseConfig accepts.
std::string ConfigToText(const ExperimentConfig& cfg);
std::vector<std::string> ConfigKeys();

// Seeds derived from the experiment seed for data generation and the
// leave-one-out split.
std::uint64_t DataSeed(std::uint64_t seed);
std::uint64_t SplitSeed(std::uint64_t seed);

struct PreparedData {
  ExperimentData data;
  DatasetStats stats;
  std::string fingerprint;  // hex digest of interactions + item texts
  std::size_t duplicate_lines = 0;
  std::size_t dropped_users = 0;
  IdRemap user_ids;         // empty for synthetic data
  IdRemap item_ids;
};

PreparedData PrepareData(const ExperimentConfig& cfg, std::uint64_t seed);
std::string DataFingerprint(const InteractionDataset& ds, const ItemCorpus& corpus);

// One configured training run.
struct NamedRun {
  std::string name;
  TrainConfig train;
  ProviderConfig provider;
};

// FedUTR, w/o URM, w/o CIFM, w/o LAM, w/o Regular.
std::vector<NamedRun> AblationRuns(const ExperimentConfig& cfg);
// FedUTR (as configured) and the FCF baseline (random item table).
std::vector<NamedRun> GroupEvalRuns(const ExperimentConfig& cfg);
// FCF with a random item table, and FCF initialized from the configured provider.
std::vector<NamedRun> PlugAndPlayRuns(const ExperimentConfig& cfg);
std::vector<NamedRun> LdpRuns(const ExperimentConfig& cfg);
std::vector<NamedRun> LambdaRuns(const ExperimentConfig& cfg);
std::vector<NamedRun> DimRuns(const ExperimentConfig& cfg);

struct RunSummary {
  std::string name;
  std::uint64_t seed = 0;
  double hr = 0.0;
  double ndcg = 0.0;
  double mean_l1 = 0.0;
  double cifm_zero_fraction = 0.0;
  std::vector<GroupReport> groups;
  CosineTrace cosine;
  std::vector<std::string> jsonl;  // one line per evaluated round
  std::vector<double> wall_ms;     // per evaluated round
};

// Trains `run` with seed `seed` on `data` (the seed overrides run.train.seed).
RunSummary ExecuteRun(const NamedRun& run, const ExperimentData& data,
                      std::uint64_t seed, bool log_wall_time = false);

// Every (run, seed) pair, seeds outermost. Each seed prepares its own data.
// Independent runs fan out over `workers` threads; result order is fixed.
std::vector<RunSummary> RunGrid(const ExperimentConfig& cfg,
                                const std::vector<NamedRun>& runs,
                                const std::vector<std::uint64_t>& seeds,
                                std::size_t workers = 1);

struct RetentionRow {
  double delta = 0.0;
  double hr = 0.0;    // mean over seeds
  double ndcg = 0.0;
  double hr_retention = 0.0;
  double ndcg_retention = 0.0;
};
// `summaries` as produced by RunGrid over LdpRuns: retention of the
// seed-mean metric relative to the δ = 0 row.
std::vector<RetentionRow> Retention(const std::vector<double>& deltas,
                                    const std::vector<RunSummary>& summaries);

// Full harness pass: gap series and fits for the three variants plus the
// paired drift comparison.
struct HarnessReport {
  std::vector<FedVariant> variants;
  std::vector<RateFitResult> fits;
  std::vector<FedRunResult> runs;
  std::size_t drift_pairs = 0;
  std::size_t drift_wins = 0;     // pairs with LAM drift <= plain drift
  std::vector<double> plain_drift;
  std::vector<double> lam_drift;
};
HarnessReport RunHarness(const HarnessConfig& cfg);

// Executes cfg.kind and writes every artifact into `out_dir`. Progress goes
// to `log`. Throws ConfigError / DataError / std::runtime_error.
void RunKind(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
             std::ostream& log);

}  // namespace fedutr

#endif  // FEDUTR_EXPERIMENT_H_
