#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "lcirt/config.hpp"
#include "lcirt/data.hpp"
#include "lcirt/error.hpp"
#include "lcirt/lc.hpp"
#include "lcirt/matrix.hpp"
#include "lcirt/parallel.hpp"
#include "lcirt/patterns.hpp"
#include "lcirt/rng.hpp"
#include "lcirt/stats.hpp"

namespace lcirt {

// Internal saturation bound on abilities; keeps the Newton updates finite on
// degenerate class/dimension cells while staying far outside any plausible
// estimate.
inline constexpr double kThetaCap = 35.0;
inline constexpr double kGammaMin = 1e-8;

// Constrained reparametrization of the latent class model: the success logit
// of item j in class c is gamma_j * (theta_{c,d(j)} - beta_j), with one
// anchor item per dimension fixed at gamma = 1, beta = 0.
struct TwoPlParams {
  int k = 0;
  int s = 0;
  std::vector<double> weights;  // k
  std::vector<double> gamma;    // J, positive
  std::vector<double> beta;     // J
  Matrix theta;                 // k x s
  DimensionPartition partition;
  std::vector<int> anchors;  // per dimension, 1-based item index

  std::size_t item_count() const { return gamma.size(); }

  double eta(std::size_t j, std::size_t c) const {
    const std::size_t d = static_cast<std::size_t>(partition.group_of(j + 1) - 1);
    return gamma[j] * (theta(c, d) - beta[j]);
  }

  void validate(double gamma_max, double beta_max) const {
    if (k < 2) throw_usage("2PL model needs k >= 2 (abilities are class contrasts)");
    if (s < 1 || partition.group_count() != s) throw_usage("2PL dimension count mismatch");
    const std::size_t j_count = gamma.size();
    if (beta.size() != j_count || partition.item_count() != j_count) {
      throw_usage("2PL parameter dimensions are inconsistent");
    }
    if (theta.rows() != static_cast<std::size_t>(k) ||
        theta.cols() != static_cast<std::size_t>(s)) {
      throw_usage("2PL ability matrix must be k x s");
    }
    if (static_cast<int>(anchors.size()) != s) throw_usage("one anchor per dimension required");
    for (int d = 0; d < s; ++d) {
      const std::size_t a = static_cast<std::size_t>(anchors[static_cast<std::size_t>(d)] - 1);
      if (partition.group_of(a + 1) != d + 1) throw_usage("anchor item not in its dimension");
      if (gamma[a] != 1.0 || beta[a] != 0.0) {
        throw_numeric("anchor item must have gamma = 1 and beta = 0 exactly");
      }
    }
    for (std::size_t j = 0; j < j_count; ++j) {
      if (!(gamma[j] > 0.0) || gamma[j] > gamma_max) {
        throw_numeric("discrimination outside (0, gamma_max] for item " + std::to_string(j + 1));
      }
      if (std::fabs(beta[j]) > beta_max) {
        throw_numeric("difficulty outside [-beta_max, beta_max] for item " + std::to_string(j + 1));
      }
    }
  }
};

struct TwoPlFit {
  TwoPlParams params;
  double loglik = 0.0;
  int n_params = 0;
  double bic = 0.0;
  Matrix posteriors;  // n x k
  int n_iterations = 0;
  bool converged = false;
  std::vector<int> class_order;
  int winning_start = -1;
  std::uint64_t winning_seed = 0;
  std::vector<StartInfo> starts;
  std::size_t n = 0;
};

// Free item parameters net of anchors, plus abilities and weights.
inline int twopl_param_count(int k, int s, std::size_t j) {
  return (k - 1) + k * s + 2 * (static_cast<int>(j) - s);
}

// Anchor of each dimension: its lowest-index item.
inline std::vector<int> anchor_items(const DimensionPartition& partition) {
  std::vector<int> anchors(static_cast<std::size_t>(partition.group_count()), 0);
  for (std::size_t j = partition.item_count(); j >= 1; --j) {
    anchors[static_cast<std::size_t>(partition.group_of(j) - 1)] = static_cast<int>(j);
  }
  return anchors;
}

// Success probability of one item at one ability level.
inline double twopl_prob(double gamma, double beta, double theta) {
  if (!(gamma > 0.0)) throw_usage("twopl_prob: gamma must be positive");
  return logistic(gamma * (theta - beta));
}

// J x k matrix of success probabilities implied by the parametrization.
inline Matrix implied_lambda(const TwoPlParams& params) {
  Matrix lam(params.item_count(), static_cast<std::size_t>(params.k));
  for (std::size_t j = 0; j < params.item_count(); ++j) {
    for (std::size_t c = 0; c < static_cast<std::size_t>(params.k); ++c) {
      lam(j, c) = logistic(params.eta(j, c));
    }
  }
  return lam;
}

namespace detail {

inline void twopl_log_probs(const TwoPlParams& params, Matrix& log_p1, Matrix& log_p0) {
  const std::size_t k = static_cast<std::size_t>(params.k);
  for (std::size_t j = 0; j < params.item_count(); ++j) {
    for (std::size_t c = 0; c < k; ++c) {
      const double eta = params.eta(j, c);
      log_p1(j, c) = -log1pexp(-eta);
      log_p0(j, c) = -log1pexp(eta);
    }
  }
}

inline EStepResult twopl_e_step(const TwoPlParams& params, const CollapsedData& cd) {
  const std::size_t k = static_cast<std::size_t>(params.k);
  Matrix log_p1(cd.j, k), log_p0(cd.j, k);
  twopl_log_probs(params, log_p1, log_p0);
  return bernoulli_mixture_e_step(log_p1, log_p0, params.weights, cd);
}

}  // namespace detail

// Expected counts under the posterior: class mass W_c and per-item success
// mass R_jc. These are the complete-data sufficient statistics.
struct SuffStats {
  std::vector<double> class_mass;  // k
  Matrix success_mass;             // J x k
};

namespace detail {

inline SuffStats accumulate_stats(const Matrix& pattern_posteriors, const CollapsedData& cd) {
  const std::size_t k = pattern_posteriors.cols();
  SuffStats st;
  st.class_mass.assign(k, 0.0);
  st.success_mass = Matrix(cd.j, k, 0.0);
  for (std::size_t g = 0; g < cd.pattern_count(); ++g) {
    const std::uint8_t* y = cd.row(g);
    for (std::size_t c = 0; c < k; ++c) {
      const double w = cd.weights[g] * pattern_posteriors(g, c);
      if (w == 0.0) continue;
      st.class_mass[c] += w;
      for (std::size_t j = 0; j < cd.j; ++j) {
        if (y[j]) st.success_mass(j, c) += w;
      }
    }
  }
  return st;
}

}  // namespace detail

// Item part of the expected complete-data log-likelihood,
//   sum_jc R_jc log lambda_jc + (W_c - R_jc) log(1 - lambda_jc),
// evaluated stably through the logits.
inline double expected_item_loglik(const TwoPlParams& params, const SuffStats& stats) {
  double q = 0.0;
  for (std::size_t j = 0; j < params.item_count(); ++j) {
    for (std::size_t c = 0; c < static_cast<std::size_t>(params.k); ++c) {
      const double eta = params.eta(j, c);
      const double r = stats.success_mass(j, c);
      const double w = stats.class_mass[c];
      q += r * (-log1pexp(-eta)) + (w - r) * (-log1pexp(eta));
    }
  }
  return q;
}

// Gradient of expected_item_loglik over the free parameters, ordered as
// (gamma_j, beta_j) for every non-anchor item in index order, then theta
// cells row-major (class-major, dimension-minor).
inline std::vector<double> expected_item_score(const TwoPlParams& params,
                                               const SuffStats& stats) {
  const std::size_t k = static_cast<std::size_t>(params.k);
  std::vector<bool> is_anchor(params.item_count(), false);
  for (int a : params.anchors) is_anchor[static_cast<std::size_t>(a - 1)] = true;

  std::vector<double> score;
  for (std::size_t j = 0; j < params.item_count(); ++j) {
    if (is_anchor[j]) continue;
    const std::size_t d = static_cast<std::size_t>(params.partition.group_of(j + 1) - 1);
    double g_gamma = 0.0, g_beta = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double lam = logistic(params.eta(j, c));
      const double resid = stats.success_mass(j, c) - stats.class_mass[c] * lam;
      g_gamma += resid * (params.theta(c, d) - params.beta[j]);
      g_beta += resid * (-params.gamma[j]);
    }
    score.push_back(g_gamma);
    score.push_back(g_beta);
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t d = 0; d < static_cast<std::size_t>(params.s); ++d) {
      double g_theta = 0.0;
      for (std::size_t j = 0; j < params.item_count(); ++j) {
        if (static_cast<std::size_t>(params.partition.group_of(j + 1) - 1) != d) continue;
        const double lam = logistic(params.eta(j, c));
        const double resid = stats.success_mass(j, c) - stats.class_mass[c] * lam;
        g_theta += resid * params.gamma[j];
      }
      score.push_back(g_theta);
    }
  }
  return score;
}

// Observed-data log-likelihood of the constrained model.
inline double twopl_loglik(const TwoPlParams& params, const ResponseMatrix& data) {
  if (params.item_count() != data.item_count()) {
    throw_usage("twopl_loglik: parameter/item dimension mismatch");
  }
  const auto cd = detail::collapse(data);
  return detail::twopl_e_step(params, cd).loglik;
}

namespace detail {

// Block objective for one item: terms of the expected complete-data
// log-likelihood that involve (gamma_j, beta_j).
inline double item_block_obj(double gamma, double beta, const std::vector<double>& theta_col,
                             const double* r_row, const std::vector<double>& w) {
  double q = 0.0;
  for (std::size_t c = 0; c < w.size(); ++c) {
    const double eta = gamma * (theta_col[c] - beta);
    q += r_row[c] * (-log1pexp(-eta)) + (w[c] - r_row[c]) * (-log1pexp(eta));
  }
  return q;
}

struct TwoPlWork {
  const CollapsedData* cd = nullptr;
  const FitConfig* config = nullptr;
  std::vector<std::size_t> dim_of;        // item -> 0-based dimension
  std::vector<bool> is_anchor;            // item -> anchored flag
  std::vector<std::vector<std::size_t>> items_of_dim;
};

// Projected, safeguarded Newton update of one item's (gamma, beta); mutates
// params in place and returns the objective gain.
inline double newton_item_block(TwoPlParams& params, const SuffStats& stats,
                                const TwoPlWork& work, std::size_t j, int max_steps) {
  const FitConfig& config = *work.config;
  const std::size_t k = static_cast<std::size_t>(params.k);
  const std::size_t d = work.dim_of[j];
  std::vector<double> theta_col(k);
  for (std::size_t c = 0; c < k; ++c) theta_col[c] = params.theta(c, d);
  const double* r_row = stats.success_mass.row_ptr(j);

  double gamma = params.gamma[j];
  double beta = params.beta[j];
  double q0 = item_block_obj(gamma, beta, theta_col, r_row, stats.class_mass);
  const double q_init = q0;

  for (int step = 0; step < max_steps; ++step) {
    double gg = 0.0, gb = 0.0, hgg = 0.0, hbb = 0.0, hgb = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double x = theta_col[c] - beta;
      const double lam = logistic(gamma * x);
      const double resid = r_row[c] - stats.class_mass[c] * lam;
      const double curv = -stats.class_mass[c] * lam * (1.0 - lam);
      gg += resid * x;
      gb += resid * (-gamma);
      hgg += curv * x * x;
      hbb += curv * gamma * gamma;
      hgb += curv * x * (-gamma) - resid;
    }
    if (std::fabs(gg) < 1e-13 && std::fabs(gb) < 1e-13) break;

    double dg, db;
    const double det = hgg * hbb - hgb * hgb;
    if (det > 0.0 && hgg < 0.0) {
      dg = (-gg * hbb + gb * hgb) / det;
      db = (-gb * hgg + gg * hgb) / det;
    } else {
      // Hessian not usable; scaled ascent direction.
      const double scale = 1.0 / (1.0 + std::fabs(hgg) + std::fabs(hbb));
      dg = gg * scale;
      db = gb * scale;
    }
    if (!std::isfinite(dg) || !std::isfinite(db)) {
      // Damped retry along the gradient before giving up on the start.
      const double scale = 1.0 / (1.0 + std::fabs(gg) + std::fabs(gb));
      dg = gg * scale;
      db = gb * scale;
      if (!std::isfinite(dg) || !std::isfinite(db)) {
        throw StartAbort{"non-finite Newton step for item " + std::to_string(j + 1)};
      }
    }

    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 30; ++halving) {
      const double cand_g = std::clamp(gamma + t * dg, kGammaMin, config.gamma_max);
      const double cand_b = std::clamp(beta + t * db, -config.beta_max, config.beta_max);
      const double q = item_block_obj(cand_g, cand_b, theta_col, r_row, stats.class_mass);
      if (q > q0) {
        gamma = cand_g;
        beta = cand_b;
        q0 = q;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
  }
  params.gamma[j] = gamma;
  params.beta[j] = beta;
  return q0 - q_init;
}

// Projected, safeguarded Newton update of one ability cell theta(c, d).
inline double newton_theta_cell(TwoPlParams& params, const SuffStats& stats,
                                const TwoPlWork& work, std::size_t c, std::size_t d,
                                int max_steps) {
  const auto& items = work.items_of_dim[d];
  const double w = stats.class_mass[c];
  double theta = params.theta(c, d);

  auto obj = [&](double th) {
    double q = 0.0;
    for (std::size_t j : items) {
      const double eta = params.gamma[j] * (th - params.beta[j]);
      const double r = stats.success_mass(j, c);
      q += r * (-log1pexp(-eta)) + (w - r) * (-log1pexp(eta));
    }
    return q;
  };

  double q0 = obj(theta);
  const double q_init = q0;
  for (int step = 0; step < max_steps; ++step) {
    double g = 0.0, h = 0.0;
    for (std::size_t j : items) {
      const double lam = logistic(params.gamma[j] * (theta - params.beta[j]));
      const double resid = stats.success_mass(j, c) - w * lam;
      g += resid * params.gamma[j];
      h -= w * lam * (1.0 - lam) * params.gamma[j] * params.gamma[j];
    }
    if (std::fabs(g) < 1e-13) break;
    double dt = (h < 0.0) ? -g / h : g / (1.0 + std::fabs(h));
    if (!std::isfinite(dt)) {
      dt = g / (1.0 + std::fabs(g));
      if (!std::isfinite(dt)) {
        throw StartAbort{"non-finite Newton step for an ability cell"};
      }
    }
    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 30; ++halving) {
      const double cand = std::clamp(theta + t * dt, -kThetaCap, kThetaCap);
      const double q = obj(cand);
      if (q > q0) {
        theta = cand;
        q0 = q;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
  }
  params.theta(c, d) = theta;
  return q0 - q_init;
}

struct TwoPlRunResult {
  TwoPlParams params;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
  Matrix pattern_posteriors;
};

inline TwoPlRunResult twopl_em_run(TwoPlParams params, const TwoPlWork& work) {
  const CollapsedData& cd = *work.cd;
  const FitConfig& config = *work.config;
  const std::size_t k = static_cast<std::size_t>(params.k);
  const double n = static_cast<double>(cd.n);

  TwoPlRunResult run;
  double prev = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    EStepResult e = twopl_e_step(params, cd);
    if (!std::isfinite(e.loglik)) {
      throw StartAbort{"non-finite log-likelihood at iteration " + std::to_string(iter + 1)};
    }
    run.trace.push_back(e.loglik);
    run.iterations = iter + 1;
    if (iter > 0 && std::fabs(e.loglik - prev) < config.tolerance) {
      run.converged = true;
      run.loglik = e.loglik;
      run.pattern_posteriors = std::move(e.posteriors);
      break;
    }
    prev = e.loglik;

    SuffStats stats = accumulate_stats(e.posteriors, cd);
    for (std::size_t c = 0; c < k; ++c) {
      if (stats.class_mass[c] / n < 1e-10) {
        throw StartAbort{"class " + std::to_string(c + 1) + " collapsed at iteration " +
                         std::to_string(iter + 1)};
      }
      params.weights[c] = stats.class_mass[c] / n;
    }

    // Blockwise ascent of the expected complete-data log-likelihood: cycle
    // per-item 2x2 Newton blocks and per-cell 1-D Newton steps until the
    // cycle gain drops below the inner tolerance. The per-block step budget
    // keeps each block at no more than 48 Newton iterations per outer pass.
    const int cycles = 8;
    const int steps_per_cycle = 6;
    for (int cycle = 0; cycle < cycles; ++cycle) {
      double gain = 0.0;
      for (std::size_t j = 0; j < cd.j; ++j) {
        if (work.is_anchor[j]) continue;
        gain += newton_item_block(params, stats, work, j, steps_per_cycle);
      }
      for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t d = 0; d < static_cast<std::size_t>(params.s); ++d) {
          gain += newton_theta_cell(params, stats, work, c, d, steps_per_cycle);
        }
      }
      if (gain < config.inner_tolerance) break;
    }

    if (iter + 1 == config.max_iterations) {
      EStepResult last = twopl_e_step(params, cd);
      run.trace.push_back(last.loglik);
      run.loglik = last.loglik;
      run.pattern_posteriors = std::move(last.posteriors);
    }
  }
  if (run.trace.empty()) {
    EStepResult e = twopl_e_step(params, cd);
    run.trace.push_back(e.loglik);
    run.loglik = e.loglik;
    run.pattern_posteriors = std::move(e.posteriors);
  }
  run.params = std::move(params);
  return run;
}

// Class-conditional success probabilities from a short unconstrained
// pre-fit; used to warm the deterministic start.
struct LcPreFit {
  Matrix lambda;                // J x k
  std::vector<double> weights;  // k
};

inline LcPreFit lc_pre_fit(const ResponseMatrix& data, int k, const FitConfig& config) {
  FitConfig pre = config;
  pre.tolerance = std::max(config.tolerance, 1e-7);
  pre.max_iterations = std::min(config.max_iterations, 300);
  pre.n_random_starts = std::min(config.n_random_starts, 2);
  pre.seed = stream_key(config.seed, 0x7072656669744c43ULL);  // independent substream
  LcFit fit = em_fit_lc(data, k, pre);
  return LcPreFit{fit.params.success_probs, fit.params.weights};
}

inline TwoPlParams twopl_skeleton(const DimensionPartition& partition, int k) {
  TwoPlParams p;
  p.k = k;
  p.s = partition.group_count();
  p.partition = partition;
  p.anchors = anchor_items(partition);
  p.weights.assign(static_cast<std::size_t>(k), 1.0 / k);
  p.gamma.assign(partition.item_count(), 1.0);
  p.beta.assign(partition.item_count(), 0.0);
  p.theta = Matrix(static_cast<std::size_t>(k), static_cast<std::size_t>(p.s), 0.0);
  return p;
}

inline TwoPlParams twopl_deterministic_start(const DimensionPartition& partition, int k,
                                             const LcPreFit& pre, double epsilon) {
  TwoPlParams p = twopl_skeleton(partition, k);
  p.weights = pre.weights;
  for (int d = 1; d <= p.s; ++d) {
    const auto items = partition.items_in_group(d);
    for (int c = 0; c < k; ++c) {
      double mean = 0.0;
      for (int j : items) mean += pre.lambda(static_cast<std::size_t>(j - 1),
                                             static_cast<std::size_t>(c));
      mean /= static_cast<double>(items.size());
      mean = std::clamp(mean, epsilon, 1.0 - epsilon);
      p.theta(static_cast<std::size_t>(c), static_cast<std::size_t>(d - 1)) =
          std::log(mean / (1.0 - mean));
    }
  }
  return p;
}

inline TwoPlParams twopl_random_start(const DimensionPartition& partition, int k,
                                      Xoshiro256ss& rng) {
  TwoPlParams p = twopl_skeleton(partition, k);
  double sum = 0.0;
  for (auto& w : p.weights) {
    w = rng.uniform(0.5, 1.5);
    sum += w;
  }
  for (auto& w : p.weights) w /= sum;
  for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
    for (std::size_t d = 0; d < static_cast<std::size_t>(p.s); ++d) {
      p.theta(c, d) = rng.uniform(-3.0, 3.0);
    }
  }
  return p;
}

}  // namespace detail

// EM fit of the constrained model. When `warm` is given (dimension-merge
// refits), the start set is exactly {warm, deterministic}; otherwise one
// deterministic start plus config.n_random_starts random ones.
inline TwoPlFit em_fit_2pl(const ResponseMatrix& data, const DimensionPartition& partition,
                           int k, const FitConfig& config,
                           const TwoPlParams* warm = nullptr,
                           const detail::LcPreFit* prefit = nullptr) {
  config.validate();
  if (k < 2) throw_usage("em_fit_2pl: k must be >= 2 (abilities are class contrasts)");
  if (static_cast<std::size_t>(k) > data.n()) {
    throw_usage("em_fit_2pl: k exceeds the number of subjects");
  }
  if (partition.item_count() != data.item_count()) {
    throw_usage("em_fit_2pl: partition does not cover the data's items");
  }

  const auto cd = detail::collapse(data);

  detail::TwoPlWork work;
  work.cd = &cd;
  work.config = &config;
  work.dim_of.resize(cd.j);
  work.is_anchor.assign(cd.j, false);
  work.items_of_dim.assign(static_cast<std::size_t>(partition.group_count()), {});
  for (std::size_t j = 0; j < cd.j; ++j) {
    const std::size_t d = static_cast<std::size_t>(partition.group_of(j + 1) - 1);
    work.dim_of[j] = d;
    work.items_of_dim[d].push_back(j);
  }
  for (int a : anchor_items(partition)) {
    work.is_anchor[static_cast<std::size_t>(a - 1)] = true;
  }

  detail::LcPreFit local_prefit;
  if (prefit == nullptr) {
    local_prefit = detail::lc_pre_fit(data, k, config);
    prefit = &local_prefit;
  }

  std::vector<TwoPlParams> start_params;
  if (warm != nullptr) {
    TwoPlParams w = *warm;
    w.validate(config.gamma_max, config.beta_max);
    if (!(w.partition == partition) || w.k != k) {
      throw_usage("em_fit_2pl: warm start does not match the requested model");
    }
    start_params.push_back(std::move(w));
    start_params.push_back(detail::twopl_deterministic_start(partition, k, *prefit,
                                                             config.epsilon));
  } else {
    start_params.push_back(detail::twopl_deterministic_start(partition, k, *prefit,
                                                             config.epsilon));
    for (int r = 1; r <= config.n_random_starts; ++r) {
      Xoshiro256ss rng(stream_key(config.seed, static_cast<std::uint64_t>(r)));
      start_params.push_back(detail::twopl_random_start(partition, k, rng));
    }
  }

  const std::size_t n_starts = start_params.size();
  std::vector<StartInfo> infos(n_starts);
  std::vector<detail::TwoPlRunResult> runs(n_starts);
  detail::parallel_for_indexed(n_starts, config.threads, [&](std::size_t s) {
    StartInfo& info = infos[s];
    info.index = static_cast<int>(s);
    info.seed = stream_key(config.seed, s);
    try {
      runs[s] = detail::twopl_em_run(start_params[s], work);
      info.converged = runs[s].converged;
      info.iterations = runs[s].iterations;
      info.loglik = runs[s].loglik;
      info.trace = runs[s].trace;
    } catch (const detail::StartAbort& abort) {
      info.aborted = true;
      info.message = abort.message;
    }
  });

  int best = -1;
  for (std::size_t s = 0; s < n_starts; ++s) {
    if (infos[s].aborted) continue;
    if (best < 0 || infos[s].loglik > infos[static_cast<std::size_t>(best)].loglik) {
      best = static_cast<int>(s);
    }
  }
  if (best < 0) {
    throw_numeric("em_fit_2pl: every start failed; first diagnostic: " + infos[0].message);
  }

  detail::TwoPlRunResult& win = runs[static_cast<std::size_t>(best)];
  const Matrix lambda = implied_lambda(win.params);
  const auto order = detail::class_order_by_first_item(lambda);

  TwoPlFit fit;
  fit.params = win.params;
  for (int c = 0; c < k; ++c) {
    const auto src = static_cast<std::size_t>(order[static_cast<std::size_t>(c)]);
    fit.params.weights[static_cast<std::size_t>(c)] = win.params.weights[src];
    for (std::size_t d = 0; d < static_cast<std::size_t>(fit.params.s); ++d) {
      fit.params.theta(static_cast<std::size_t>(c), d) = win.params.theta(src, d);
    }
  }
  fit.class_order = order;
  fit.loglik = win.loglik;
  fit.n = data.n();
  fit.n_params = twopl_param_count(k, fit.params.s, cd.j);
  fit.bic = bic_value(fit.loglik, fit.n_params, data.n());
  fit.n_iterations = win.iterations;
  fit.converged = win.converged;
  fit.winning_start = best;
  fit.winning_seed = infos[static_cast<std::size_t>(best)].seed;
  fit.starts = std::move(infos);

  fit.posteriors = Matrix(data.n(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < data.n(); ++i) {
    const std::size_t g = cd.subject_map[i];
    for (int c = 0; c < k; ++c) {
      fit.posteriors(i, static_cast<std::size_t>(c)) =
          win.pattern_posteriors(g, static_cast<std::size_t>(order[static_cast<std::size_t>(c)]));
    }
  }
  return fit;
}

// Sufficient statistics at the fit's own parameters (one extra E-step);
// exposes the fixed point the score check is run at.
inline SuffStats suff_stats_at(const TwoPlFit& fit, const ResponseMatrix& data) {
  const auto cd = detail::collapse(data);
  const auto e = detail::twopl_e_step(fit.params, cd);
  return detail::accumulate_stats(e.posteriors, cd);
}

// Weighted Pearson correlations between ability columns, with class weights
// as the probability measure.
struct AbilityCorrelations {
  Matrix rho;                            // s x s, NaN where undefined
  std::vector<std::uint8_t> degenerate;  // per dimension: 1 if weighted variance ~ 0
};

inline AbilityCorrelations ability_correlations(const Matrix& theta,
                                                const std::vector<double>& weights) {
  const std::size_t k = theta.rows();
  const std::size_t s = theta.cols();
  if (weights.size() != k) throw_usage("ability_correlations: weight/ability mismatch");
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (!(wsum > 0.0)) throw_usage("ability_correlations: weights must have positive mass");

  std::vector<double> mean(s, 0.0);
  for (std::size_t d = 0; d < s; ++d) {
    for (std::size_t c = 0; c < k; ++c) mean[d] += theta(c, d) * weights[c];
    mean[d] /= wsum;
  }
  std::vector<double> var(s, 0.0);
  for (std::size_t d = 0; d < s; ++d) {
    for (std::size_t c = 0; c < k; ++c) {
      const double dev = theta(c, d) - mean[d];
      var[d] += dev * dev * weights[c];
    }
    var[d] /= wsum;
  }

  AbilityCorrelations out;
  out.rho = Matrix(s, s, std::numeric_limits<double>::quiet_NaN());
  out.degenerate.assign(s, 0);
  for (std::size_t d = 0; d < s; ++d) {
    if (var[d] < 1e-14) out.degenerate[d] = 1;
  }
  for (std::size_t d1 = 0; d1 < s; ++d1) {
    for (std::size_t d2 = 0; d2 <= d1; ++d2) {
      if (out.degenerate[d1] || out.degenerate[d2]) continue;
      if (d1 == d2) {
        out.rho(d1, d2) = 1.0;
        continue;
      }
      double cov = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        cov += (theta(c, d1) - mean[d1]) * (theta(c, d2) - mean[d2]) * weights[c];
      }
      cov /= wsum;
      const double rho = cov / std::sqrt(var[d1] * var[d2]);
      out.rho(d1, d2) = rho;
      out.rho(d2, d1) = rho;
    }
  }
  return out;
}

inline AbilityCorrelations ability_correlations(const TwoPlFit& fit) {
  return ability_correlations(fit.params.theta, fit.params.weights);
}

// The constrained model is nested in the unconstrained one, so its maximized
// log-likelihood can never exceed the latter (up to optimizer slack).
struct NestingReport {
  double lc_loglik = 0.0;
  double twopl_loglik = 0.0;
  double gap = 0.0;  // lc - twopl
  bool ok = false;
  std::string message;
};

inline NestingReport nested_loglik_bound(const LcFit& lc, const TwoPlFit& pl) {
  if (lc.params.k != pl.params.k) {
    throw_usage("nested_loglik_bound: class counts differ");
  }
  if (lc.n != pl.n || lc.params.item_count() != pl.params.item_count()) {
    throw_usage("nested_loglik_bound: fits come from different data shapes");
  }
  NestingReport rep;
  rep.lc_loglik = lc.loglik;
  rep.twopl_loglik = pl.loglik;
  rep.gap = lc.loglik - pl.loglik;
  rep.ok = pl.loglik <= lc.loglik + 1e-6;
  rep.message = rep.ok ? "nesting bound holds"
                       : "constrained log-likelihood exceeds the unconstrained one; optimizer failure";
  return rep;
}

}  // namespace lcirt
