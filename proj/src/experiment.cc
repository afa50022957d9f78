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
#include "fedutr/experiment.h"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "fedutr/errors.h"
#include "json.hpp"

namespace fedutr {
namespace {

using Clock = std::chrono::steady_clock;

double MsSince(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Shortest text that parses back to the same double.
std::string FormatDouble(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double ParseDouble(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError(key, "expected a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t ParseUnsigned(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw ConfigError(key, "expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool ParseBool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key, "expected true/false, got '" + text + "'");
}

std::vector<std::string> SplitList(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = Trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T, typename F>
std::string JoinList(const std::vector<T>& values, F format) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += format(values[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

std::vector<Field> Bind(ExperimentConfig& c) {
  std::vector<Field> f;
  const auto num = [&f](std::string key, double* target) {
    f.push_back({key, [key, target](const std::string& v) { *target = ParseDouble(key, v); },
                 [target] { return FormatDouble(*target); }});
  };
  const auto count = [&f](std::string key, std::size_t* target) {
    f.push_back({key,
                 [key, target](const std::string& v) {
                   *target = static_cast<std::size_t>(ParseUnsigned(key, v));
                 },
                 [target] { return std::to_string(*target); }});
  };
  const auto u64 = [&f](std::string key, std::uint64_t* target) {
    f.push_back({key, [key, target](const std::string& v) { *target = ParseUnsigned(key, v); },
                 [target] { return std::to_string(*target); }});
  };
  const auto flag = [&f](std::string key, bool* target) {
    f.push_back({key, [key, target](const std::string& v) { *target = ParseBool(key, v); },
                 [target] { return std::string(*target ? "true" : "false"); }});
  };
  const auto path = [&f](std::string key, std::filesystem::path* target) {
    f.push_back({key, [target](const std::string& v) { *target = v; },
                 [target] { return target->string(); }});
  };

  TrainConfig& t = c.train;
  f.push_back({"kind", [&c](const std::string& v) {
                 try {
                   c.kind = ParseExperimentKind(v);
                 } catch (const std::invalid_argument& e) {
                   throw ConfigError("kind", e.what());
                 }
               },
               [&c] { return ToString(c.kind); }});
  u64("seed", &t.seed);
  f.push_back({"seeds",
               [&c](const std::string& v) {
                 c.seeds.clear();
                 for (const auto& s : SplitList(v)) c.seeds.push_back(ParseUnsigned("seeds", s));
               },
               [&c] { return JoinList(c.seeds, [](std::uint64_t s) { return std::to_string(s); }); }});
  f.push_back({"mode",
               [&t](const std::string& v) {
                 try {
                   t.mode = ParseModelMode(v);
                 } catch (const std::invalid_argument& e) {
                   throw ConfigError("mode", e.what());
                 }
               },
               [&t] { return ToString(t.mode); }});
  count("dim", &t.dim);
  count("rounds", &t.rounds);
  count("local_epochs", &t.local_epochs);
  count("batch_size", &t.batch_size);
  num("learning_rate", &t.learning_rate);
  num("lr_decay", &t.lr_decay);
  num("lambda", &t.lambda);
  count("negative_ratio", &t.negative_ratio);
  num("participation", &t.participation);
  num("ldp_scale", &t.ldp_scale);
  flag("no_urm", &t.ablation.no_urm);
  flag("no_cifm", &t.ablation.no_cifm);
  flag("no_lam", &t.ablation.no_lam);
  flag("no_regular", &t.ablation.no_regular);
  count("eval_k", &t.eval_k);
  count("eval_every", &t.eval_every);
  count("sparsity_groups", &t.sparsity_groups);
  num("user_init_std", &t.user_init_std);
  num("cifm_init_std", &t.cifm_init_std);
  count("threads", &t.threads);
  flag("log_wall_time", &c.log_wall_time);
  num("baseline_learning_rate", &c.baseline_learning_rate);
  f.push_back({"ldp_values",
               [&c](const std::string& v) {
                 c.ldp_values.clear();
                 for (const auto& s : SplitList(v)) c.ldp_values.push_back(ParseDouble("ldp_values", s));
               },
               [&c] { return JoinList(c.ldp_values, FormatDouble); }});
  f.push_back({"lambda_values",
               [&c](const std::string& v) {
                 c.lambda_values.clear();
                 for (const auto& s : SplitList(v)) {
                   c.lambda_values.push_back(ParseDouble("lambda_values", s));
                 }
               },
               [&c] { return JoinList(c.lambda_values, FormatDouble); }});
  f.push_back({"dim_values",
               [&c](const std::string& v) {
                 c.dim_values.clear();
                 for (const auto& s : SplitList(v)) {
                   c.dim_values.push_back(static_cast<std::size_t>(ParseUnsigned("dim_values", s)));
                 }
               },
               [&c] { return JoinList(c.dim_values, [](std::size_t d) { return std::to_string(d); }); }});

  DataSource& d = c.data;
  f.push_back({"data.source",
               [&d](const std::string& v) {
                 if (v == "synthetic") {
                   d.synthetic = true;
                 } else if (v == "files") {
                   d.synthetic = false;
                 } else {
                   throw ConfigError("data.source", "expected synthetic or files, got '" + v + "'");
                 }
               },
               [&d] { return std::string(d.synthetic ? "synthetic" : "files"); }});
  path("data.interactions", &d.interactions);
  path("data.items", &d.items);
  count("data.min_interactions", &d.min_interactions);
  SyntheticSpec& s = d.spec;
  count("synthetic.users", &s.n_users);
  count("synthetic.items", &s.m_items);
  count("synthetic.latent_dim", &s.latent_dim);
  num("synthetic.avg_interactions", &s.target_avg_interactions);
  count("synthetic.text_vocab", &s.text_vocab);
  count("synthetic.words_per_item", &s.words_per_item);
  num("synthetic.noise", &s.noise);
  num("synthetic.affinity_scale", &s.affinity_scale);
  num("synthetic.popularity_std", &s.popularity_std);
  num("synthetic.activity_tail", &s.activity_tail);
  num("synthetic.max_activity", &s.max_activity);

  ProviderConfig& p = c.provider;
  f.push_back({"provider.kind",
               [&p](const std::string& v) {
                 try {
                   p.kind = ParseProviderKind(v);
                 } catch (const std::invalid_argument& e) {
                   throw ConfigError("provider.kind", e.what());
                 }
               },
               [&p] { return ToString(p.kind); }});
  path("provider.path", &p.path);
  flag("provider.normalize", &p.normalize);
  flag("provider.word_unigrams", &p.word_unigrams);
  f.push_back({"provider.char_ngrams",
               [&p](const std::string& v) {
                 p.char_ngrams.clear();
                 for (const auto& s : SplitList(v)) {
                   p.char_ngrams.push_back(
                       static_cast<std::size_t>(ParseUnsigned("provider.char_ngrams", s)));
                 }
               },
               [&p] { return JoinList(p.char_ngrams, [](std::size_t n) { return std::to_string(n); }); }});
  num("provider.random_std", &p.random_std);

  HarnessConfig& h = c.harness;
  count("harness.clients", &h.spec.n_clients);
  count("harness.dim", &h.spec.dim);
  num("harness.mu", &h.spec.mu);
  num("harness.smoothness", &h.spec.smoothness);
  count("harness.local_epochs", &h.spec.local_epochs);
  num("harness.noise", &h.spec.noise_std);
  num("harness.heterogeneity", &h.spec.heterogeneity);
  u64("harness.seed", &h.spec.seed);
  count("harness.rounds", &h.rounds);
  count("harness.replicates", &h.replicates);
  count("harness.burn_in", &h.burn_in);
  count("harness.drift_seeds", &h.drift_seeds);
  num("harness.lam_rho", &h.lam_rho);
  num("harness.prox_lambda", &h.prox_lambda);
  return f;
}

void ValidateExperiment(const ExperimentConfig& c) {
  c.train.Validate();
  if (!c.data.synthetic && (c.data.interactions.empty() || c.data.items.empty())) {
    throw ConfigError("data.interactions", "data.source=files needs data.interactions and data.items");
  }
  if (c.provider.kind == ProviderKind::kPrecomputed && c.provider.path.empty()) {
    throw ConfigError("provider.path", "precomputed provider needs a path");
  }
  if (c.data.min_interactions < 2) {
    throw ConfigError("data.min_interactions", "leave-one-out needs at least 2");
  }
  for (double v : c.ldp_values) {
    if (v < 0.0) throw ConfigError("ldp_values", "noise scales must be >= 0");
  }
  for (double v : c.lambda_values) {
    if (v < 0.0) throw ConfigError("lambda_values", "lambda must be >= 0");
  }
  for (std::size_t v : c.dim_values) {
    if (v < 2) throw ConfigError("dim_values", "dims must be >= 2");
  }
  if (c.baseline_learning_rate < 0.0) {
    throw ConfigError("baseline_learning_rate", "must be >= 0");
  }
  if (c.harness.lam_rho <= 0.0 || c.harness.lam_rho >= 1.0) {
    throw ConfigError("harness.lam_rho", "must be in (0, 1)");
  }
  try {
    c.harness.spec.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("harness", e.what());
  }
}

std::string Slug(const std::string& name) {
  std::string out;
  for (char ch : name) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!out.empty() && out.back() != '-') {
      out.push_back('-');
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out;
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string ProtocolComment() {
  return std::string("# eval_protocol: ") + kEvalProtocol + "\n";
}

std::string Fixed(double v, int decimals = 6) { return FormatFixed(v, decimals); }

}  // namespace

std::string ToString(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kSingle: return "single";
    case ExperimentKind::kAblationSuite: return "ablation_suite";
    case ExperimentKind::kLdpSweep: return "ldp_sweep";
    case ExperimentKind::kLambdaSweep: return "lambda_sweep";
    case ExperimentKind::kDimSweep: return "dim_sweep";
    case ExperimentKind::kGroupEval: return "group_eval";
    case ExperimentKind::kPlugAndPlay: return "plug_and_play";
    case ExperimentKind::kConvexHarness: return "convex_harness";
  }
  return "?";
}

ExperimentKind ParseExperimentKind(std::string_view name) {
  for (auto k : {ExperimentKind::kSingle, ExperimentKind::kAblationSuite,
                 ExperimentKind::kLdpSweep, ExperimentKind::kLambdaSweep,
                 ExperimentKind::kDimSweep, ExperimentKind::kGroupEval,
                 ExperimentKind::kPlugAndPlay, ExperimentKind::kConvexHarness}) {
    if (ToString(k) == name) return k;
  }
  throw std::invalid_argument("unknown experiment kind '" + std::string(name) + "'");
}

std::vector<std::uint64_t> ExperimentConfig::EffectiveSeeds() const {
  return seeds.empty() ? std::vector<std::uint64_t>{train.seed} : seeds;
}

// --- config files ------------------------------------------------------------------

std::vector<std::string> ConfigKeys() {
  ExperimentConfig scratch;
  std::vector<std::string> keys;
  for (const Field& f : Bind(scratch)) keys.push_back(f.key);
  return keys;
}

ExperimentConfig ParseConfig(std::string_view text) {
  ExperimentConfig cfg;
  auto fields = Bind(cfg);
  std::map<std::string, Field*> by_key;
  for (Field& f : fields) by_key[f.key] = &f;
  std::map<std::string, std::size_t> seen;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = Trim(raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(line, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) {
      throw ConfigError(key, "line " + std::to_string(line_no) + ": unknown key");
    }
    if (seen.count(key)) {
      throw ConfigError(key, "line " + std::to_string(line_no) + ": duplicate key (first on line " +
                                 std::to_string(seen[key]) + ")");
    }
    seen[key] = line_no;
    it->second->set(value);
  }
  ValidateExperiment(cfg);
  return cfg;
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg = ParseConfig(ss.str());
  // Relative data paths are relative to the config file.
  const auto base = path.parent_path();
  for (auto* p : {&cfg.data.interactions, &cfg.data.items, &cfg.provider.path}) {
    if (!p->empty() && p->is_relative()) {
      *p = std::filesystem::absolute(base / *p).lexically_normal();
    }
  }
  return cfg;
}

std::string ConfigToText(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  std::string out;
  for (const Field& f : Bind(copy)) out += f.key + " = " + f.get() + "\n";
  return out;
}

// --- data ------------------------------------------------------------------------------

std::uint64_t DataSeed(std::uint64_t seed) { return Rng(seed).Fork(0xDA7A).seed(); }
std::uint64_t SplitSeed(std::uint64_t seed) { return Rng(seed).Fork(0x5B17).seed(); }

std::string DataFingerprint(const InteractionDataset& ds, const ItemCorpus& corpus) {
  std::string blob;
  for (UserId u = 0; u < ds.num_users(); ++u) {
    for (ItemId i : ds.items_of(u)) {
      blob += std::to_string(u) + '\t' + std::to_string(i) + '\n';
    }
  }
  for (const auto& t : corpus.texts) blob += t + '\n';
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << StableHash64(blob);
  return os.str();
}

PreparedData PrepareData(const ExperimentConfig& cfg, std::uint64_t seed) {
  PreparedData out;
  InteractionDataset dataset;
  ItemCorpus corpus;
  if (cfg.data.synthetic) {
    SyntheticCorpus syn = GenerateSynthetic(cfg.data.spec, Rng(DataSeed(seed)));
    dataset = std::move(syn.dataset);
    corpus = std::move(syn.corpus);
  } else {
    LoadedInteractions loaded = LoadInteractions(cfg.data.interactions, cfg.data.min_interactions);
    corpus = LoadItemCorpus(cfg.data.items, loaded.items);
    dataset = std::move(loaded.dataset);
    out.duplicate_lines = loaded.duplicate_lines;
    out.dropped_users = loaded.dropped_users;
    out.user_ids = std::move(loaded.users);
    out.item_ids = std::move(loaded.items);
  }
  out.stats = ComputeStats(dataset);
  out.fingerprint = DataFingerprint(dataset, corpus);
  out.data = PrepareExperimentData(std::move(dataset), std::move(corpus), SplitSeed(seed),
                                   cfg.train.sparsity_groups);
  return out;
}

// --- named runs --------------------------------------------------------------------------

namespace {

NamedRun BaseRun(const ExperimentConfig& cfg, std::string name) {
  return NamedRun{std::move(name), cfg.train, cfg.provider};
}

}  // namespace

std::vector<NamedRun> AblationRuns(const ExperimentConfig& cfg) {
  std::vector<NamedRun> runs;
  runs.push_back(BaseRun(cfg, "FedUTR"));
  runs.push_back(BaseRun(cfg, "w/o URM"));
  runs.back().train.ablation.no_urm = true;
  runs.push_back(BaseRun(cfg, "w/o CIFM"));
  runs.back().train.ablation.no_cifm = true;
  runs.push_back(BaseRun(cfg, "w/o LAM"));
  runs.back().train.ablation.no_lam = true;
  runs.push_back(BaseRun(cfg, "w/o Regular"));
  runs.back().train.ablation.no_regular = true;
  return runs;
}

std::vector<NamedRun> GroupEvalRuns(const ExperimentConfig& cfg) {
  std::vector<NamedRun> runs;
  runs.push_back(BaseRun(cfg, "FedUTR"));
  NamedRun fcf = BaseRun(cfg, "FCF");
  fcf.train.mode = ModelMode::kFcfBaseline;
  fcf.train.ablation = {};
  if (cfg.baseline_learning_rate > 0.0) fcf.train.learning_rate = cfg.baseline_learning_rate;
  fcf.provider.kind = ProviderKind::kRandom;
  runs.push_back(fcf);
  return runs;
}

std::vector<NamedRun> PlugAndPlayRuns(const ExperimentConfig& cfg) {
  NamedRun plain = BaseRun(cfg, "FCF");
  plain.train.mode = ModelMode::kFcfBaseline;
  plain.train.ablation = {};
  NamedRun urm = plain;
  urm.name = "FCF w/ URM";
  plain.provider.kind = ProviderKind::kRandom;
  if (urm.provider.kind == ProviderKind::kRandom) urm.provider.kind = ProviderKind::kHashedNgram;
  return {plain, urm};
}

std::vector<NamedRun> LdpRuns(const ExperimentConfig& cfg) {
  std::vector<NamedRun> runs;
  for (double delta : cfg.ldp_values) {
    NamedRun r = BaseRun(cfg, "delta=" + FormatDouble(delta));
    r.train.ldp_scale = delta;
    runs.push_back(r);
  }
  return runs;
}

std::vector<NamedRun> LambdaRuns(const ExperimentConfig& cfg) {
  std::vector<NamedRun> runs;
  for (double lambda : cfg.lambda_values) {
    NamedRun r = BaseRun(cfg, "lambda=" + FormatDouble(lambda));
    r.train.lambda = lambda;
    runs.push_back(r);
  }
  return runs;
}

std::vector<NamedRun> DimRuns(const ExperimentConfig& cfg) {
  std::vector<NamedRun> runs;
  for (std::size_t d : cfg.dim_values) {
    NamedRun r = BaseRun(cfg, "dim=" + std::to_string(d));
    r.train.dim = d;
    runs.push_back(r);
  }
  return runs;
}

RunSummary ExecuteRun(const NamedRun& run, const ExperimentData& data,
                      std::uint64_t seed, bool log_wall_time) {
  TrainConfig train = run.train;
  train.seed = seed;
  ProviderConfig pc = run.provider;
  pc.dim = train.dim;
  pc.seed = Rng(seed).Fork(0xE0E0).seed();
  const auto provider = MakeProvider(pc);

  RunSummary s;
  s.name = run.name;
  s.seed = seed;
  ExperimentResult result;
  try {
    result = RunExperiment(train, data, *provider, [&](const RoundMetrics& m) {
      s.jsonl.push_back(RoundMetricsToJson(m, train.eval_k, log_wall_time));
      s.wall_ms.push_back(m.wall_ms);
    });
  } catch (const DataError& e) {
    const std::string what = e.what();
    if (pc.kind == ProviderKind::kPrecomputed && what.find("dim mismatch") != std::string::npos) {
      throw ConfigError("provider.path", what + " (config dim = " + std::to_string(train.dim) + ")");
    }
    throw;
  }
  const RoundMetrics& last = result.rounds.empty() ? result.initial : result.rounds.back();
  s.hr = last.hr;
  s.ndcg = last.ndcg;
  s.mean_l1 = last.mean_l1;
  s.cifm_zero_fraction = last.cifm_zero_fraction;
  s.groups = last.per_group;
  s.cosine = last.cosine;
  return s;
}

std::vector<RunSummary> RunGrid(const ExperimentConfig& cfg, const std::vector<NamedRun>& runs,
                                const std::vector<std::uint64_t>& seeds, std::size_t workers) {
  std::vector<RunSummary> out(runs.size() * seeds.size());
  for (std::size_t si = 0; si < seeds.size(); ++si) {
    const PreparedData prepared = PrepareData(cfg, seeds[si]);
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(runs.size());
    const auto work = [&] {
      for (std::size_t k = next++; k < runs.size(); k = next++) {
        try {
          NamedRun r = runs[k];
          if (workers > 1) r.train.threads = 1;
          out[si * runs.size() + k] =
              ExecuteRun(r, prepared.data, seeds[si], cfg.log_wall_time);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    };
    const std::size_t n_threads = std::min(std::max<std::size_t>(workers, 1), runs.size());
    if (n_threads <= 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return out;
}

std::vector<RetentionRow> Retention(const std::vector<double>& deltas,
                                    const std::vector<RunSummary>& summaries) {
  if (deltas.empty() || summaries.size() % deltas.size() != 0) {
    throw std::invalid_argument("retention needs one summary per (seed, delta)");
  }
  const std::size_t n_seeds = summaries.size() / deltas.size();
  std::vector<RetentionRow> rows(deltas.size());
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    rows[k].delta = deltas[k];
    for (std::size_t s = 0; s < n_seeds; ++s) {
      rows[k].hr += summaries[s * deltas.size() + k].hr / static_cast<double>(n_seeds);
      rows[k].ndcg += summaries[s * deltas.size() + k].ndcg / static_cast<double>(n_seeds);
    }
  }
  const auto base = std::find_if(rows.begin(), rows.end(),
                                 [](const RetentionRow& r) { return r.delta == 0.0; });
  if (base == rows.end()) throw std::invalid_argument("retention needs a delta = 0 row");
  const RetentionRow ref = *base;
  for (RetentionRow& r : rows) {
    r.hr_retention = ref.hr > 0.0 ? r.hr / ref.hr : 0.0;
    r.ndcg_retention = ref.ndcg > 0.0 ? r.ndcg / ref.ndcg : 0.0;
  }
  return rows;
}

HarnessReport RunHarness(const HarnessConfig& cfg) {
  HarnessReport report;
  for (FedVariant v : {FedVariant::kPlain, FedVariant::kL1Prox, FedVariant::kLam}) {
    ConvexTestbedSpec spec = cfg.spec;
    if (v == FedVariant::kL1Prox) spec.lambda_l1 = cfg.prox_lambda;
    const ConvexTestbed tb = MakeTestbed(spec);
    FedRunOptions opt;
    opt.variant = v;
    opt.rounds = cfg.rounds;
    opt.replicates = cfg.replicates;
    opt.lam_rho = cfg.lam_rho;
    FedRunResult run = RunFedAvgQuadratic(tb, opt);
    report.fits.push_back(FitRate(run.gap, cfg.burn_in));
    report.runs.push_back(std::move(run));
    report.variants.push_back(v);
  }
  for (std::size_t k = 0; k < cfg.drift_seeds; ++k) {
    ConvexTestbedSpec spec = cfg.spec;
    spec.seed = cfg.spec.seed + 1000 + k;
    const ConvexTestbed tb = MakeTestbed(spec);
    FedRunOptions opt;
    opt.rounds = std::min<std::size_t>(cfg.rounds, 200);
    opt.noise_seed = 5000 + k;
    const double plain = RunFedAvgQuadratic(tb, opt).max_drift;
    opt.variant = FedVariant::kLam;
    opt.lam_rho = cfg.lam_rho;
    const double lam = RunFedAvgQuadratic(tb, opt).max_drift;
    report.plain_drift.push_back(plain);
    report.lam_drift.push_back(lam);
    ++report.drift_pairs;
    if (lam <= plain) ++report.drift_wins;
  }
  return report;
}

// --- kind drivers ----------------------------------------------------------------------

namespace {

struct OutputSink {
  std::filesystem::path dir;
  std::vector<std::string> files;

  void Text(const std::string& rel, const std::string& text) {
    const auto path = dir / rel;
    std::filesystem::create_directories(path.parent_path());
    WriteText(path, text);
    files.push_back(rel);
  }
};

std::string JsonlText(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::string TimingText(const RunSummary& s) {
  std::string out;
  for (std::size_t k = 0; k < s.wall_ms.size(); ++k) {
    nlohmann::ordered_json j;
    j["run"] = s.name;
    j["seed"] = s.seed;
    j["eval_index"] = k;
    j["wall_ms"] = s.wall_ms[k];
    out += j.dump() + "\n";
  }
  return out;
}

void WriteRunLogs(OutputSink& sink, const RunSummary& s, bool multi) {
  const std::string prefix =
      multi ? "runs/" + Slug(s.name) + "/seed-" + std::to_string(s.seed) + "/" : "";
  sink.Text(prefix + "metrics.jsonl", JsonlText(s.jsonl));
  sink.Text(prefix + "timing.jsonl", TimingText(s));
}

std::string RunTable(const std::vector<RunSummary>& runs, std::size_t k) {
  const std::string ks = std::to_string(k);
  std::ostringstream os;
  os << ProtocolComment() << "run,seed,hr" << ks << ",ndcg" << ks
     << ",mean_l1,cifm_zero_fraction\n";
  for (const auto& r : runs) {
    os << '"' << r.name << "\"," << r.seed << ',' << Fixed(r.hr) << ',' << Fixed(r.ndcg) << ','
       << Fixed(r.mean_l1) << ',' << Fixed(r.cifm_zero_fraction) << '\n';
  }
  return os.str();
}

// Mean of hr/ndcg per run name over seeds, in first-seen order.
std::vector<std::pair<std::string, std::pair<double, double>>> MeanByName(
    const std::vector<RunSummary>& runs) {
  std::vector<std::pair<std::string, std::pair<double, double>>> out;
  std::vector<std::size_t> counts;
  for (const auto& r : runs) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& e) { return e.first == r.name; });
    if (it == out.end()) {
      out.push_back({r.name, {0.0, 0.0}});
      counts.push_back(0);
      it = out.end() - 1;
    }
    it->second.first += r.hr;
    it->second.second += r.ndcg;
    ++counts[static_cast<std::size_t>(it - out.begin())];
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].second.first /= static_cast<double>(counts[i]);
    out[i].second.second /= static_cast<double>(counts[i]);
  }
  return out;
}

std::string MeanTable(const std::vector<RunSummary>& runs, std::size_t k) {
  const std::string ks = std::to_string(k);
  std::ostringstream os;
  os << ProtocolComment() << "run,hr" << ks << ",ndcg" << ks << "\n";
  for (const auto& [name, m] : MeanByName(runs)) {
    os << '"' << name << "\"," << Fixed(m.first) << ',' << Fixed(m.second) << '\n';
  }
  return os.str();
}

std::string GroupTable(const std::vector<RunSummary>& runs, std::size_t k) {
  const std::string ks = std::to_string(k);
  std::ostringstream os;
  os << ProtocolComment() << "run,seed,group,label,n_users,hr" << ks << ",ndcg" << ks << "\n";
  for (const auto& r : runs) {
    for (const auto& g : r.groups) {
      os << '"' << r.name << "\"," << r.seed << ',' << (g.group + 1) << ',' << g.label << ','
         << g.n_users << ',' << Fixed(g.hr) << ',' << Fixed(g.ndcg) << '\n';
    }
  }
  return os.str();
}

std::string Percent(double ratio) { return FormatFixed(100.0 * ratio, 2) + "%"; }

}  // namespace

void RunKind(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
             std::ostream& log) {
  ValidateExperiment(cfg);
  const auto start = Clock::now();
  std::filesystem::create_directories(out_dir);
  OutputSink sink{out_dir, {}};
  sink.Text("config.resolved", ConfigToText(cfg));

  nlohmann::ordered_json manifest;
  manifest["tool"] = "fedutr";
  manifest["version"] = kToolVersion;
  manifest["kind"] = ToString(cfg.kind);
  manifest["seeds"] = cfg.EffectiveSeeds();
  manifest["rng"] = Rng::kAlgorithm;
  manifest["compiler"] = __VERSION__;
  manifest["cxx_standard"] = static_cast<long>(__cplusplus);
  manifest["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                      std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION);
  manifest["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  manifest["eval_protocol"] = kEvalProtocol;
  auto datasets = nlohmann::ordered_json::array();

  const auto describe_data = [&](std::uint64_t seed) {
    PreparedData p = PrepareData(cfg, seed);
    nlohmann::ordered_json d;
    d["seed"] = seed;
    d["source"] = cfg.data.synthetic ? "synthetic" : "files";
    if (!cfg.data.synthetic) {
      d["interactions"] = cfg.data.interactions.string();
      d["items"] = cfg.data.items.string();
      d["duplicate_lines"] = p.duplicate_lines;
      d["dropped_users"] = p.dropped_users;
    }
    d["fingerprint"] = p.fingerprint;
    d["stats"] = nlohmann::json::parse(p.stats.ToJson());
    datasets.push_back(d);
    return p;
  };

  const std::size_t k = cfg.train.eval_k;
  const auto seeds = cfg.EffectiveSeeds();
  const std::size_t workers = cfg.train.threads;
  const auto grid = [&](const std::vector<NamedRun>& runs) {
    for (std::uint64_t s : seeds) describe_data(s);
    log << ToString(cfg.kind) << ": " << runs.size() << " run(s) x " << seeds.size()
        << " seed(s)\n";
    auto out = RunGrid(cfg, runs, seeds, workers);
    for (const auto& r : out) {
      log << "  " << r.name << " seed=" << r.seed << " hr" << k << "=" << Fixed(r.hr, 4)
          << " ndcg" << k << "=" << Fixed(r.ndcg, 4) << "\n";
      WriteRunLogs(sink, r, true);
    }
    return out;
  };

  switch (cfg.kind) {
    case ExperimentKind::kSingle: {
      const std::uint64_t seed = seeds.front();
      PreparedData p = describe_data(seed);
      if (!cfg.data.synthetic) {
        WriteIdRemap(out_dir / "user_ids.tsv", p.user_ids);
        WriteIdRemap(out_dir / "item_ids.tsv", p.item_ids);
        sink.files.push_back("user_ids.tsv");
        sink.files.push_back("item_ids.tsv");
      }
      NamedRun run = BaseRun(cfg, "FedUTR");
      const RunSummary s = ExecuteRun(run, p.data, seed, cfg.log_wall_time);
      WriteRunLogs(sink, s, false);
      std::ostringstream os;
      os << ProtocolComment() << "scope,label,n_users,hr" << k << ",ndcg" << k << "\n";
      os << "overall,all," << p.stats.users << ',' << Fixed(s.hr) << ',' << Fixed(s.ndcg) << '\n';
      for (const auto& g : s.groups) {
        os << "group" << (g.group + 1) << ',' << g.label << ',' << g.n_users << ','
           << Fixed(g.hr) << ',' << Fixed(g.ndcg) << '\n';
      }
      sink.Text("summary.csv", os.str());
      log << "single: hr" << k << "=" << Fixed(s.hr, 4) << " ndcg" << k << "="
          << Fixed(s.ndcg, 4) << " (" << s.jsonl.size() << " rounds logged)\n";
      break;
    }
    case ExperimentKind::kAblationSuite: {
      const auto out = grid(AblationRuns(cfg));
      sink.Text("ablation.csv", RunTable(out, k));
      sink.Text("summary.csv", MeanTable(out, k));
      break;
    }
    case ExperimentKind::kLambdaSweep:
    case ExperimentKind::kDimSweep: {
      const bool lambda = cfg.kind == ExperimentKind::kLambdaSweep;
      const auto out = grid(lambda ? LambdaRuns(cfg) : DimRuns(cfg));
      sink.Text("sweep.csv", RunTable(out, k));
      sink.Text("summary.csv", MeanTable(out, k));
      break;
    }
    case ExperimentKind::kLdpSweep: {
      const auto out = grid(LdpRuns(cfg));
      const auto rows = Retention(cfg.ldp_values, out);
      std::ostringstream os;
      os << ProtocolComment() << "delta,hr" << k << ",ndcg" << k
         << ",hr_retention,ndcg_retention\n";
      for (const auto& r : rows) {
        os << FormatDouble(r.delta) << ',' << Fixed(r.hr) << ',' << Fixed(r.ndcg) << ','
           << Fixed(r.hr_retention) << ',' << Fixed(r.ndcg_retention) << '\n';
      }
      sink.Text("ldp.csv", RunTable(out, k));
      sink.Text("summary.csv", os.str());
      break;
    }
    case ExperimentKind::kGroupEval: {
      const auto out = grid(GroupEvalRuns(cfg));
      sink.Text("groups.csv", GroupTable(out, k));
      std::ostringstream os;
      os << ProtocolComment()
         << "seed,overall_margin,densest_margin,sparsest_margin,sparse_gain_larger\n";
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        const RunSummary& ours = out[s * 2];
        const RunSummary& base = out[s * 2 + 1];
        const auto margin = [](double a, double b) { return b > 0.0 ? a / b - 1.0 : 0.0; };
        const double dense = margin(ours.groups.front().hr, base.groups.front().hr);
        const double sparse = margin(ours.groups.back().hr, base.groups.back().hr);
        os << seeds[s] << ',' << Fixed(margin(ours.hr, base.hr)) << ',' << Fixed(dense) << ','
           << Fixed(sparse) << ',' << (sparse > dense ? "true" : "false") << '\n';
      }
      sink.Text("summary.csv", os.str());
      break;
    }
    case ExperimentKind::kPlugAndPlay: {
      const auto out = grid(PlugAndPlayRuns(cfg));
      const auto means = MeanByName(out);
      const auto& base = means[0].second;
      const auto& urm = means[1].second;
      std::ostringstream os;
      os << ProtocolComment() << "model,hr" << k << ",ndcg" << k << "\n";
      os << "\"FCF\"," << Fixed(base.first, 4) << ',' << Fixed(base.second, 4) << '\n';
      os << "\"FCF w/ URM\"," << Fixed(urm.first, 4) << ',' << Fixed(urm.second, 4) << '\n';
      os << "\"Improvement\"," << Percent(base.first > 0 ? urm.first / base.first - 1.0 : 0.0)
         << ',' << Percent(base.second > 0 ? urm.second / base.second - 1.0 : 0.0) << '\n';
      sink.Text("plug_and_play.csv", os.str());
      sink.Text("summary.csv", RunTable(out, k));
      break;
    }
    case ExperimentKind::kConvexHarness: {
      log << "convex_harness: " << cfg.harness.rounds << " rounds, " << cfg.harness.replicates
          << " replicates\n";
      const HarnessReport report = RunHarness(cfg.harness);
      std::ostringstream os;
      os << "variant,r_squared,slope,C,gamma,envelope_ratio,passed,final_gap,max_drift\n";
      for (std::size_t v = 0; v < report.variants.size(); ++v) {
        const std::string name = ToString(report.variants[v]);
        const auto& fit = report.fits[v];
        WriteGapCsv(out_dir / ("gap_" + name + ".csv"), report.runs[v].gap);
        sink.files.push_back("gap_" + name + ".csv");
        sink.Text("fit_" + name + ".json", RateFitToJson(fit) + "\n");
        os << name << ',' << Fixed(fit.r_squared) << ',' << FormatDouble(fit.slope) << ','
           << FormatDouble(fit.c) << ',' << FormatDouble(fit.gamma) << ','
           << Fixed(fit.envelope_ratio) << ',' << (fit.passed ? "true" : "false") << ','
           << FormatDouble(report.runs[v].gap.back()) << ','
           << FormatDouble(report.runs[v].max_drift) << '\n';
        log << "  " << name << ": R^2=" << Fixed(fit.r_squared, 4)
            << (fit.passed ? " pass" : " FAIL") << "\n";
      }
      std::ostringstream drift;
      drift << "pair,plain_max_drift,lam_max_drift\n";
      for (std::size_t i = 0; i < report.drift_pairs; ++i) {
        drift << i << ',' << FormatDouble(report.plain_drift[i]) << ','
              << FormatDouble(report.lam_drift[i]) << '\n';
      }
      sink.Text("drift.csv", drift.str());
      sink.Text("summary.csv", os.str());
      log << "  drift: LAM <= plain in " << report.drift_wins << "/" << report.drift_pairs
          << " pairs\n";
      break;
    }
  }

  manifest["data"] = datasets;
  manifest["wall_ms"] = MsSince(start);
  sink.files.push_back("MANIFEST.json");
  manifest["outputs"] = sink.files;
  WriteText(out_dir / "MANIFEST.json", manifest.dump(2) + "\n");
}

}  // namespace fedutr
