#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "lcirt/config.hpp"
#include "lcirt/data.hpp"
#include "lcirt/error.hpp"
#include "lcirt/matrix.hpp"
#include "lcirt/parallel.hpp"
#include "lcirt/patterns.hpp"
#include "lcirt/rng.hpp"
#include "lcirt/stats.hpp"

namespace lcirt {

// Unconstrained latent class parameters: class weights and per-class item
// success probabilities.
struct LcParams {
  int k = 0;
  std::vector<double> weights;  // length k, sums to 1
  Matrix success_probs;         // J x k

  std::size_t item_count() const { return success_probs.rows(); }

  void validate(double epsilon) const {
    if (k < 1) throw_usage("latent class count must be >= 1");
    if (static_cast<int>(weights.size()) != k || success_probs.cols() != static_cast<std::size_t>(k)) {
      throw_usage("latent class parameter dimensions are inconsistent");
    }
    double sum = 0.0;
    for (double w : weights) {
      if (!(w > 0.0) || w > 1.0) throw_numeric("class weight outside (0, 1]");
      sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-12) throw_numeric("class weights do not sum to 1");
    for (std::size_t j = 0; j < success_probs.rows(); ++j) {
      for (std::size_t c = 0; c < success_probs.cols(); ++c) {
        const double p = success_probs(j, c);
        if (!(p >= epsilon) || !(p <= 1.0 - epsilon)) {
          throw_numeric("success probability outside the clamped range");
        }
      }
    }
  }
};

// Per-start diagnostics kept for audit: every EM run records its whole
// log-likelihood trace.
struct StartInfo {
  int index = -1;
  std::uint64_t seed = 0;
  bool aborted = false;
  bool converged = false;
  int iterations = 0;
  double loglik = -std::numeric_limits<double>::infinity();
  std::string message;
  std::vector<double> trace;
};

struct LcFit {
  LcParams params;
  double loglik = 0.0;
  int n_params = 0;
  double bic = 0.0;
  Matrix posteriors;  // n x k, rows sum to 1
  int n_iterations = 0;
  bool converged = false;
  std::vector<int> class_order;  // new position -> start-order class index
  int winning_start = -1;
  std::uint64_t winning_seed = 0;
  std::vector<StartInfo> starts;
  std::size_t n = 0;  // subjects the fit was computed on
};

inline int lc_param_count(int k, std::size_t j) {
  return k * static_cast<int>(j) + (k - 1);
}

inline double bic_value(double loglik, int n_params, std::size_t n) {
  return -2.0 * loglik + static_cast<double>(n_params) * std::log(static_cast<double>(n));
}

namespace detail {

struct EStepResult {
  double loglik = 0.0;
  Matrix posteriors;  // pattern-major, G x k
};

// Shared E-step of a Bernoulli mixture over collapsed patterns, given the
// per-(item, class) log success/failure probabilities.
inline EStepResult bernoulli_mixture_e_step(const Matrix& log_p1, const Matrix& log_p0,
                                            const std::vector<double>& weights,
                                            const CollapsedData& cd) {
  const std::size_t k = weights.size();
  std::vector<double> logw(k);
  for (std::size_t c = 0; c < k; ++c) logw[c] = std::log(weights[c]);

  EStepResult res;
  res.posteriors = Matrix(cd.pattern_count(), k, 0.0);
  std::vector<double> terms(k);
  for (std::size_t g = 0; g < cd.pattern_count(); ++g) {
    const std::uint8_t* y = cd.row(g);
    for (std::size_t c = 0; c < k; ++c) {
      double acc = logw[c];
      for (std::size_t j = 0; j < cd.j; ++j) {
        acc += y[j] ? log_p1(j, c) : log_p0(j, c);
      }
      terms[c] = acc;
    }
    const double lse = log_sum_exp(terms);
    res.loglik += cd.weights[g] * lse;
    double norm = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double p = std::exp(terms[c] - lse);
      res.posteriors(g, c) = p;
      norm += p;
    }
    for (std::size_t c = 0; c < k; ++c) res.posteriors(g, c) /= norm;
  }
  return res;
}

inline EStepResult lc_e_step(const LcParams& params, const CollapsedData& cd) {
  const std::size_t k = static_cast<std::size_t>(params.k);
  Matrix log_p1(cd.j, k), log_p0(cd.j, k);
  for (std::size_t j = 0; j < cd.j; ++j) {
    for (std::size_t c = 0; c < k; ++c) {
      const double lam = params.success_probs(j, c);
      log_p1(j, c) = std::log(lam);
      log_p0(j, c) = std::log1p(-lam);
    }
  }
  return bernoulli_mixture_e_step(log_p1, log_p0, params.weights, cd);
}

// Internal signal that a single start went bad; other starts keep running.
struct StartAbort {
  std::string message;
};

struct EmRunResult {
  LcParams params;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
  Matrix pattern_posteriors;
};

inline EmRunResult lc_em_run(LcParams params, const CollapsedData& cd,
                             const FitConfig& config) {
  const std::size_t k = static_cast<std::size_t>(params.k);
  const double n = static_cast<double>(cd.n);
  EmRunResult run;
  double prev = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    EStepResult e = lc_e_step(params, cd);
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

    // M-step: weights from mean posterior mass, success probabilities from
    // posterior-weighted means, clamped to [eps, 1-eps].
    std::vector<double> class_mass(k, 0.0);
    for (std::size_t g = 0; g < cd.pattern_count(); ++g) {
      for (std::size_t c = 0; c < k; ++c) class_mass[c] += cd.weights[g] * e.posteriors(g, c);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (class_mass[c] / n < 1e-10) {
        throw StartAbort{"class " + std::to_string(c + 1) + " collapsed (weight < 1e-10) at iteration " +
                         std::to_string(iter + 1)};
      }
    }
    Matrix weighted_success(cd.j, k, 0.0);
    for (std::size_t g = 0; g < cd.pattern_count(); ++g) {
      const std::uint8_t* y = cd.row(g);
      for (std::size_t c = 0; c < k; ++c) {
        const double w = cd.weights[g] * e.posteriors(g, c);
        if (w == 0.0) continue;
        for (std::size_t j = 0; j < cd.j; ++j) {
          if (y[j]) weighted_success(j, c) += w;
        }
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      params.weights[c] = class_mass[c] / n;
      for (std::size_t j = 0; j < cd.j; ++j) {
        const double lam = weighted_success(j, c) / class_mass[c];
        params.success_probs(j, c) =
            std::clamp(lam, config.epsilon, 1.0 - config.epsilon);
      }
    }

    if (iter + 1 == config.max_iterations) {
      // Out of budget: report the last evaluated state.
      EStepResult last = lc_e_step(params, cd);
      run.trace.push_back(last.loglik);
      run.loglik = last.loglik;
      run.pattern_posteriors = std::move(last.posteriors);
      run.iterations = iter + 1;
    }
  }
  if (run.trace.empty()) {
    EStepResult e = lc_e_step(params, cd);
    run.trace.push_back(e.loglik);
    run.loglik = e.loglik;
    run.pattern_posteriors = std::move(e.posteriors);
  }
  run.params = std::move(params);
  return run;
}

inline LcParams lc_deterministic_start(const CollapsedData& cd, int k, double epsilon) {
  LcParams p;
  p.k = k;
  p.weights.assign(static_cast<std::size_t>(k), 1.0 / k);
  p.success_probs = Matrix(cd.j, static_cast<std::size_t>(k), 0.5);
  std::vector<double> means(cd.j, 0.0);
  for (std::size_t g = 0; g < cd.pattern_count(); ++g) {
    const std::uint8_t* y = cd.row(g);
    for (std::size_t j = 0; j < cd.j; ++j) means[j] += cd.weights[g] * y[j];
  }
  for (auto& m : means) m /= static_cast<double>(cd.n);
  // Column means shifted by a symmetric per-class offset; zero offset for k=1.
  for (int c = 0; c < k; ++c) {
    const double offset = 0.9 * static_cast<double>(2 * c + 1 - k) / (2.0 * k);
    for (std::size_t j = 0; j < cd.j; ++j) {
      p.success_probs(j, static_cast<std::size_t>(c)) =
          std::clamp(means[j] + offset, epsilon, 1.0 - epsilon);
    }
  }
  return p;
}

inline LcParams lc_random_start(const CollapsedData& cd, int k, Xoshiro256ss& rng) {
  LcParams p;
  p.k = k;
  p.weights.resize(static_cast<std::size_t>(k));
  double sum = 0.0;
  for (auto& w : p.weights) {
    w = rng.uniform(0.5, 1.5);
    sum += w;
  }
  for (auto& w : p.weights) w /= sum;
  p.success_probs = Matrix(cd.j, static_cast<std::size_t>(k));
  for (std::size_t j = 0; j < cd.j; ++j) {
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      p.success_probs(j, c) = rng.uniform(0.05, 0.95);
    }
  }
  return p;
}

// Sorts classes so the first item's success probability is increasing;
// resolves label switching the same way in reports and fits.
inline std::vector<int> class_order_by_first_item(const Matrix& success_probs) {
  std::vector<int> order(success_probs.cols());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return success_probs(0, static_cast<std::size_t>(a)) <
           success_probs(0, static_cast<std::size_t>(b));
  });
  return order;
}

}  // namespace detail

// Value of the observed-data log-likelihood at the given parameters,
// accumulated in log space with a per-subject log-sum-exp over classes.
inline double lc_loglik(const LcParams& params, const ResponseMatrix& data) {
  if (params.item_count() != data.item_count()) {
    throw_usage("lc_loglik: parameter/item dimension mismatch");
  }
  const auto cd = detail::collapse(data);
  return detail::lc_e_step(params, cd).loglik;
}

// Posterior class probabilities for one response vector.
inline std::vector<double> posterior_assign(const LcParams& params,
                                            const std::vector<std::uint8_t>& y) {
  if (y.size() != params.item_count()) {
    throw_usage("posterior_assign: response length does not match item count");
  }
  const std::size_t k = static_cast<std::size_t>(params.k);
  std::vector<double> terms(k);
  for (std::size_t c = 0; c < k; ++c) {
    double acc = std::log(params.weights[c]);
    for (std::size_t j = 0; j < y.size(); ++j) {
      const double lam = params.success_probs(j, c);
      acc += y[j] ? std::log(lam) : std::log1p(-lam);
    }
    terms[c] = acc;
  }
  const double lse = log_sum_exp(terms);
  std::vector<double> post(k);
  double norm = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    post[c] = std::exp(terms[c] - lse);
    norm += post[c];
  }
  for (auto& p : post) p /= norm;
  return post;
}

inline std::vector<double> posterior_assign(const LcFit& fit,
                                            const std::vector<std::uint8_t>& y) {
  return posterior_assign(fit.params, y);
}

// EM fit of the k-class model: multi-start (one deterministic start plus
// config.n_random_starts seeded random starts), best final log-likelihood
// wins, classes reordered on the first item's success probability.
inline LcFit em_fit_lc(const ResponseMatrix& data, int k, const FitConfig& config) {
  config.validate();
  if (k < 1) throw_usage("em_fit_lc: k must be >= 1");
  if (static_cast<std::size_t>(k) > data.n()) {
    throw_usage("em_fit_lc: k = " + std::to_string(k) + " exceeds the number of subjects " +
                std::to_string(data.n()));
  }
  const auto cd = detail::collapse(data);

  const int n_starts = 1 + config.n_random_starts;
  std::vector<StartInfo> infos(static_cast<std::size_t>(n_starts));
  std::vector<detail::EmRunResult> runs(static_cast<std::size_t>(n_starts));

  detail::parallel_for_indexed(static_cast<std::size_t>(n_starts), config.threads,
                               [&](std::size_t s) {
    StartInfo& info = infos[s];
    info.index = static_cast<int>(s);
    info.seed = stream_key(config.seed, s);
    LcParams start;
    if (s == 0) {
      start = detail::lc_deterministic_start(cd, k, config.epsilon);
    } else {
      Xoshiro256ss rng(info.seed);
      start = detail::lc_random_start(cd, k, rng);
    }
    try {
      runs[s] = detail::lc_em_run(std::move(start), cd, config);
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
  for (int s = 0; s < n_starts; ++s) {
    if (infos[static_cast<std::size_t>(s)].aborted) continue;
    if (best < 0 || infos[static_cast<std::size_t>(s)].loglik >
                        infos[static_cast<std::size_t>(best)].loglik) {
      best = s;
    }
  }
  if (best < 0) {
    throw_numeric("em_fit_lc: every start failed; first diagnostic: " + infos[0].message);
  }

  detail::EmRunResult& win = runs[static_cast<std::size_t>(best)];
  const auto order = detail::class_order_by_first_item(win.params.success_probs);

  LcFit fit;
  fit.params.k = k;
  fit.params.weights.resize(static_cast<std::size_t>(k));
  fit.params.success_probs = Matrix(cd.j, static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    const auto src = static_cast<std::size_t>(order[static_cast<std::size_t>(c)]);
    fit.params.weights[static_cast<std::size_t>(c)] = win.params.weights[src];
    for (std::size_t j = 0; j < cd.j; ++j) {
      fit.params.success_probs(j, static_cast<std::size_t>(c)) = win.params.success_probs(j, src);
    }
  }
  fit.class_order = order;
  fit.loglik = win.loglik;
  fit.n = data.n();
  fit.n_params = lc_param_count(k, cd.j);
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

struct BicRow {
  int k = 0;
  double loglik = 0.0;
  int n_params = 0;
  double bic = 0.0;
};

struct SelectKResult {
  std::vector<BicRow> table;
  std::vector<LcFit> fits;  // aligned with table
  int chosen_k = 0;
};

// Fits every class count in [k_min, k_max] and picks the BIC minimizer;
// ties go to the smaller k.
inline SelectKResult select_k(const ResponseMatrix& data, int k_min, int k_max,
                              const FitConfig& config) {
  if (k_min < 1 || k_max < k_min) throw_usage("select_k: invalid class-count range");
  SelectKResult res;
  for (int k = k_min; k <= k_max; ++k) {
    try {
      LcFit fit = em_fit_lc(data, k, config);
      res.table.push_back(BicRow{k, fit.loglik, fit.n_params, fit.bic});
      res.fits.push_back(std::move(fit));
    } catch (const Error& e) {
      throw Error(e.kind(), "select_k: fit with k = " + std::to_string(k) +
                                " failed: " + e.what());
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < res.table.size(); ++i) {
    if (res.table[i].bic < res.table[best].bic) best = i;
  }
  res.chosen_k = res.table[best].k;
  return res;
}

}  // namespace lcirt
