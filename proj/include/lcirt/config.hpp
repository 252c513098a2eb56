#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "lcirt/error.hpp"

namespace lcirt {

// Estimation settings shared by every fit. Defaults are the declared ones;
// reports echo the resolved config so runs are reproducible from the bundle
// alone.
struct FitConfig {
  double tolerance = 1e-8;        // |delta loglik| stopping rule
  int max_iterations = 5000;      // EM outer iterations
  int n_random_starts = 19;       // on top of one deterministic start
  std::uint64_t seed = 1;         // master seed; every substream derives from it
  double epsilon = 1e-6;          // clamp for estimated success probabilities
  double alpha = 0.05;            // significance level for dimension merging
  double gamma_max = 20.0;        // discrimination cap
  double beta_max = 10.0;         // |difficulty| cap
  double inner_tolerance = 1e-9;  // M-step block-cycling stopping rule
  int threads = 1;                // worker cap for independent starts / merges

  void validate() const {
    if (tolerance <= 0) throw_usage("config: tolerance must be positive");
    if (max_iterations < 1) throw_usage("config: max_iterations must be >= 1");
    if (n_random_starts < 0) throw_usage("config: n_random_starts must be >= 0");
    if (epsilon <= 0 || epsilon >= 0.5) throw_usage("config: epsilon must be in (0, 0.5)");
    if (alpha <= 0 || alpha >= 1) throw_usage("config: alpha must be in (0, 1)");
    if (gamma_max <= 0) throw_usage("config: gamma_max must be positive");
    if (beta_max <= 0) throw_usage("config: beta_max must be positive");
    if (inner_tolerance <= 0) throw_usage("config: inner_tolerance must be positive");
    if (threads < 1) throw_usage("config: threads must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const FitConfig& c) {
  j = nlohmann::json{{"tolerance", c.tolerance},
                     {"max_iterations", c.max_iterations},
                     {"n_random_starts", c.n_random_starts},
                     {"seed", c.seed},
                     {"epsilon", c.epsilon},
                     {"alpha", c.alpha},
                     {"gamma_max", c.gamma_max},
                     {"beta_max", c.beta_max},
                     {"inner_tolerance", c.inner_tolerance},
                     {"threads", c.threads},
                     {"rng", "xoshiro256** seeded via splitmix64"}};
}

inline void from_json(const nlohmann::json& j, FitConfig& c) {
  c = FitConfig{};
  if (j.contains("tolerance")) j.at("tolerance").get_to(c.tolerance);
  if (j.contains("max_iterations")) j.at("max_iterations").get_to(c.max_iterations);
  if (j.contains("n_random_starts")) j.at("n_random_starts").get_to(c.n_random_starts);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("epsilon")) j.at("epsilon").get_to(c.epsilon);
  if (j.contains("alpha")) j.at("alpha").get_to(c.alpha);
  if (j.contains("gamma_max")) j.at("gamma_max").get_to(c.gamma_max);
  if (j.contains("beta_max")) j.at("beta_max").get_to(c.beta_max);
  if (j.contains("inner_tolerance")) j.at("inner_tolerance").get_to(c.inner_tolerance);
  if (j.contains("threads")) j.at("threads").get_to(c.threads);
  c.validate();
}

}  // namespace lcirt
