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
#include "fedutr/convergence.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fedutr/rng.h"
#include "json.hpp"

namespace fedutr {
namespace {

Eigen::VectorXd Gaussian(Rng& rng, std::size_t n, double std) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.Gaussian(0.0, std);
  return v;
}

void SoftThreshold(Eigen::VectorXd& v, double tau) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double x = v[i];
    v[i] = x > tau ? x - tau : (x < -tau ? x + tau : 0.0);
  }
}

std::string Describe(const ConvexTestbedSpec& s, FedVariant v) {
  std::ostringstream os;
  os << "variant=" << ToString(v) << " n=" << s.n_clients << " p=" << s.dim
     << " mu=" << s.mu << " L=" << s.smoothness << " E=" << s.local_epochs
     << " sigma=" << s.noise_std << " lambda=" << s.lambda_l1;
  return os.str();
}

}  // namespace

void ConvexTestbedSpec::Validate() const {
  if (n_clients == 0 || dim == 0 || local_epochs == 0) {
    throw std::invalid_argument("convex testbed needs n, p, E > 0");
  }
  if (!(mu > 0.0)) throw std::invalid_argument("convex testbed needs mu > 0");
  if (!(smoothness >= mu)) throw std::invalid_argument("convex testbed needs L >= mu");
  if (!(lambda_l1 >= 0.0) || !(noise_std >= 0.0)) {
    throw std::invalid_argument("convex testbed needs lambda, sigma >= 0");
  }
}

ConvexTestbed MakeTestbed(const ConvexTestbedSpec& spec) {
  spec.Validate();
  Rng rng(spec.seed);
  const auto p = static_cast<Eigen::Index>(spec.dim);
  std::vector<Eigen::MatrixXd> a;
  std::vector<Eigen::VectorXd> c;
  for (std::size_t u = 0; u < spec.n_clients; ++u) {
    Rng client = rng.Fork(u);
    Eigen::MatrixXd g(p, p);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = client.Gaussian();
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    Eigen::VectorXd eig(p);
    for (Eigen::Index i = 0; i < p; ++i) {
      eig[i] = client.Uniform(spec.mu, spec.smoothness);
    }
    eig[0] = spec.mu;
    if (p > 1) eig[p - 1] = spec.smoothness;
    Eigen::MatrixXd au = q * eig.asDiagonal() * q.transpose();
    a.push_back(0.5 * (au + au.transpose()));
    c.push_back(Gaussian(client, spec.dim, spec.heterogeneity));
  }
  return MakeTestbed(spec, std::move(a), std::move(c));
}

ConvexTestbed MakeTestbed(const ConvexTestbedSpec& spec,
                          std::vector<Eigen::MatrixXd> a,
                          std::vector<Eigen::VectorXd> c) {
  spec.Validate();
  const auto p = static_cast<Eigen::Index>(spec.dim);
  if (a.size() != spec.n_clients || c.size() != spec.n_clients) {
    throw std::invalid_argument("testbed needs one (A_u, c_u) per client");
  }
  for (std::size_t u = 0; u < a.size(); ++u) {
    if (a[u].rows() != p || a[u].cols() != p || c[u].size() != p) {
      throw std::invalid_argument("testbed matrices do not match dim");
    }
  }
  return ConvexTestbed{spec, std::move(a), std::move(c)};
}

double Objective(const ConvexTestbed& tb, const Eigen::VectorXd& theta) {
  double f = 0.0;
  for (std::size_t u = 0; u < tb.a.size(); ++u) {
    const Eigen::VectorXd r = theta - tb.c[u];
    f += 0.5 * r.dot(tb.a[u] * r);
  }
  f /= static_cast<double>(tb.a.size());
  return f + tb.spec.lambda_l1 * theta.lpNorm<1>();
}

Optimum ClosedFormOptimum(const ConvexTestbed& tb) {
  const auto p = static_cast<Eigen::Index>(tb.spec.dim);
  const double inv_n = 1.0 / static_cast<double>(tb.a.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  for (std::size_t u = 0; u < tb.a.size(); ++u) {
    h += inv_n * tb.a[u];
    rhs += inv_n * (tb.a[u] * tb.c[u]);
  }
  Optimum opt;
  opt.theta = h.ldlt().solve(rhs);
  if (tb.spec.lambda_l1 > 0.0) {
    // Proximal gradient on the averaged quadratic, step 1/L_h.
    const double lh =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues().maxCoeff();
    const double step = 1.0 / lh;
    Eigen::VectorXd theta = opt.theta;
    for (std::size_t it = 1; it <= 1000000; ++it) {
      Eigen::VectorXd next = theta - step * (h * theta - rhs);
      SoftThreshold(next, step * tb.spec.lambda_l1);
      const double moved = (next - theta).lpNorm<Eigen::Infinity>();
      theta = std::move(next);
      opt.iterations = it;
      if (moved < 1e-12) break;
    }
    opt.theta = theta;
  }
  opt.value = Objective(tb, opt.theta);
  return opt;
}

std::string ToString(FedVariant v) {
  switch (v) {
    case FedVariant::kPlain: return "plain";
    case FedVariant::kL1Prox: return "with_l1_prox";
    case FedVariant::kLam: return "with_lam";
  }
  return "?";
}

FedVariant ParseFedVariant(const std::string& name) {
  if (name == "plain") return FedVariant::kPlain;
  if (name == "with_l1_prox") return FedVariant::kL1Prox;
  if (name == "with_lam") return FedVariant::kLam;
  throw std::invalid_argument("unknown harness variant: " + name);
}

double StepSize(const ConvexTestbedSpec& spec, std::size_t t) {
  const double gamma =
      std::max(8.0 * spec.smoothness / spec.mu, static_cast<double>(spec.local_epochs)) - 1.0;
  return 2.0 / (spec.mu * (gamma + static_cast<double>(t)));
}

FedRunResult RunFedAvgQuadratic(const ConvexTestbed& tb, const FedRunOptions& options) {
  const ConvexTestbedSpec& spec = tb.spec;
  const auto p = static_cast<Eigen::Index>(spec.dim);
  const std::size_t n = tb.a.size();
  const bool prox = options.variant != FedVariant::kPlain && spec.lambda_l1 > 0.0;
  const bool lam = options.variant == FedVariant::kLam;
  const double rho = std::clamp(options.lam_rho, 0.01, 0.99);
  if (options.replicates == 0) throw std::invalid_argument("replicates must be > 0");
  if (options.init && options.init->size() != p) {
    throw std::invalid_argument("initial point does not match dim");
  }

  const Optimum opt = ClosedFormOptimum(tb);
  FedRunResult result;
  result.optimum_value = opt.value;
  result.gap.assign(options.rounds, 0.0);
  result.drift.assign(options.rounds, 0.0);
  const Rng noise_root(options.noise_seed);

  for (std::size_t r = 0; r < options.replicates; ++r) {
    Eigen::VectorXd global = options.init ? *options.init : Eigen::VectorXd::Zero(p);
    std::vector<Rng> noise;
    for (std::size_t u = 0; u < n; ++u) noise.push_back(noise_root.Fork(r).Fork(u));
    Eigen::VectorXd sum(p);
    Eigen::VectorXd local(p);
    std::size_t t = 0;
    for (std::size_t round = 0; round < options.rounds; ++round) {
      sum.setZero();
      double round_drift = 0.0;
      for (std::size_t u = 0; u < n; ++u) {
        local = global;
        for (std::size_t k = 0; k < spec.local_epochs; ++k) {
          const double eta = StepSize(spec, t + k);
          Eigen::VectorXd grad = tb.a[u] * (local - tb.c[u]);
          if (spec.noise_std > 0.0) {
            for (Eigen::Index i = 0; i < p; ++i) {
              grad[i] += noise[u].Gaussian(0.0, spec.noise_std);
            }
          }
          local -= eta * grad;
          if (prox) SoftThreshold(local, eta * spec.lambda_l1);
          if (lam) local = global + (1.0 - rho) * (local - global);
          round_drift = std::max(round_drift, (local - global).norm());
        }
        sum += local;
      }
      t += spec.local_epochs;
      global = sum / static_cast<double>(n);
      const double gap = Objective(tb, global) - opt.value;
      if (!std::isfinite(gap)) {
        throw std::runtime_error("harness diverged at round " +
                                 std::to_string(round + 1) + " (" +
                                 Describe(spec, options.variant) + ")");
      }
      result.gap[round] += gap / static_cast<double>(options.replicates);
      if (r == 0) {
        result.drift[round] = round_drift;
        result.max_drift = std::max(result.max_drift, round_drift);
      }
    }
    if (r == 0) {
      result.theta = global;
      result.final_value = Objective(tb, global);
    }
  }
  return result;
}

RateFitResult FitRate(const std::vector<double>& gap, std::size_t burn_in) {
  if (gap.size() < burn_in + 200) {
    throw std::invalid_argument("rate fit needs >= 200 points after burn-in");
  }
  RateFitResult fit;
  fit.gap = gap;
  fit.burn_in = burn_in;
  std::vector<double> x;
  std::vector<double> y;
  for (std::size_t i = burn_in; i < gap.size(); ++i) {
    x.push_back(static_cast<double>(i + 1));
    y.push_back(1.0 / std::max(gap[i], 1e-15));
  }
  const auto count = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= count;
  my /= count;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  if (fit.slope != 0.0) {
    fit.c = 1.0 / fit.slope;
    fit.gamma = fit.intercept / fit.slope;
  }
  fit.passed = fit.r_squared >= kRateFitMinR2 && fit.slope > 0.0;

  std::vector<double> envelope;
  for (std::size_t i = 0; i < x.size(); ++i) {
    envelope.push_back(std::max(gap[burn_in + i], 1e-15) * (fit.gamma + x[i]));
  }
  std::vector<double> sorted = envelope;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  fit.envelope_ratio = *std::max_element(envelope.begin(), envelope.end()) / median;
  return fit;
}

void WriteGapCsv(const std::filesystem::path& path, const std::vector<double>& gap) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "round,gap\n";
  for (std::size_t i = 0; i < gap.size(); ++i) out << (i + 1) << ',' << gap[i] << '\n';
}

std::string RateFitToJson(const RateFitResult& fit) {
  nlohmann::ordered_json j;
  j["burn_in"] = fit.burn_in;
  j["points"] = fit.gap.size() - fit.burn_in;
  j["slope"] = fit.slope;
  j["intercept"] = fit.intercept;
  j["C"] = fit.c;
  j["gamma"] = fit.gamma;
  j["r_squared"] = fit.r_squared;
  j["min_r_squared"] = kRateFitMinR2;
  j["passed"] = fit.passed;
  j["envelope_ratio"] = fit.envelope_ratio;
  return j.dump(2);
}

}  // namespace fedutr
