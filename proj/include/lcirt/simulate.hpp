#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcirt/data.hpp"
#include "lcirt/error.hpp"
#include "lcirt/lc.hpp"
#include "lcirt/patterns.hpp"
#include "lcirt/rng.hpp"
#include "lcirt/twopl.hpp"

namespace lcirt {

enum class GeneratorKind { latent_class, twopl };

// Everything needed to draw a synthetic dataset: the true parameters, the
// sample size, and the seed (which fully determines the output).
struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::latent_class;
  LcParams lc;        // used when kind == latent_class
  TwoPlParams twopl;  // used when kind == twopl
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> codes;  // optional; defaults to V1..VJ

  std::size_t item_count() const {
    return kind == GeneratorKind::latent_class ? lc.item_count() : twopl.item_count();
  }
};

struct SimResult {
  ResponseMatrix data;
  std::vector<int> classes;  // true class label per subject, 1-based
};

// Draws class membership from the weights and item responses as independent
// Bernoulli variables given the class. Each subject gets its own keyed
// substream, so generation may be split across workers without changing the
// output.
inline SimResult simulate(const GeneratorSpec& spec) {
  if (spec.n < 1) throw_usage("simulate: n must be >= 1");
  const std::size_t j_count = spec.item_count();
  if (j_count == 0) throw_usage("simulate: generator has no items");

  Matrix lambda;  // J x k success probabilities
  std::vector<double> weights;
  if (spec.kind == GeneratorKind::latent_class) {
    lambda = spec.lc.success_probs;
    weights = spec.lc.weights;
  } else {
    lambda = implied_lambda(spec.twopl);
    weights = spec.twopl.weights;
  }
  const std::size_t k = weights.size();
  if (k == 0 || lambda.cols() != k) throw_usage("simulate: inconsistent generator parameters");
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw_usage("simulate: negative class weight");
    wsum += w;
  }
  if (std::fabs(wsum - 1.0) > 1e-9) throw_usage("simulate: class weights must sum to 1");

  std::vector<double> cum(k);
  double acc = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    acc += weights[c];
    cum[c] = acc;
  }
  cum[k - 1] = 1.0;

  std::vector<std::uint8_t> values(spec.n * j_count);
  std::vector<int> classes(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    Xoshiro256ss rng(stream_key(spec.seed, i));
    const double u = rng.u01();
    std::size_t c = 0;
    while (c + 1 < k && u >= cum[c]) ++c;
    classes[i] = static_cast<int>(c) + 1;
    for (std::size_t j = 0; j < j_count; ++j) {
      values[i * j_count + j] = rng.u01() < lambda(j, c) ? 1 : 0;
    }
  }

  std::vector<ItemMeta> items(j_count);
  for (std::size_t j = 0; j < j_count; ++j) {
    items[j].index = static_cast<int>(j) + 1;
    items[j].code = j < spec.codes.size() ? spec.codes[j] : "V" + std::to_string(j + 1);
    if (spec.kind == GeneratorKind::twopl) {
      items[j].initial_dimension = spec.twopl.partition.group_of(j + 1);
    }
  }
  return SimResult{ResponseMatrix(std::move(values), spec.n, std::move(items)),
                   std::move(classes)};
}

inline GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
  GeneratorSpec spec;
  const std::string model = j.at("model").get<std::string>();
  spec.n = j.at("n").get<std::size_t>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("codes")) spec.codes = j.at("codes").get<std::vector<std::string>>();

  if (model == "lc") {
    spec.kind = GeneratorKind::latent_class;
    spec.lc.weights = j.at("weights").get<std::vector<double>>();
    spec.lc.k = static_cast<int>(spec.lc.weights.size());
    const auto probs = j.at("success_probs").get<std::vector<std::vector<double>>>();
    if (probs.empty()) throw_data("generator spec: success_probs must be a J x k matrix");
    spec.lc.success_probs = Matrix(probs.size(), probs[0].size());
    for (std::size_t row = 0; row < probs.size(); ++row) {
      if (probs[row].size() != probs[0].size()) {
        throw_data("generator spec: ragged success_probs");
      }
      for (std::size_t c = 0; c < probs[row].size(); ++c) {
        spec.lc.success_probs(row, c) = probs[row][c];
      }
    }
    if (spec.lc.success_probs.cols() != spec.lc.weights.size()) {
      throw_data("generator spec: success_probs columns must match weights length");
    }
  } else if (model == "2pl") {
    spec.kind = GeneratorKind::twopl;
    spec.twopl.weights = j.at("weights").get<std::vector<double>>();
    spec.twopl.k = static_cast<int>(spec.twopl.weights.size());
    spec.twopl.gamma = j.at("gamma").get<std::vector<double>>();
    spec.twopl.beta = j.at("beta").get<std::vector<double>>();
    if (spec.twopl.gamma.size() != spec.twopl.beta.size()) {
      throw_data("generator spec: gamma and beta lengths differ");
    }
    const auto assignment = j.at("assignment").get<std::vector<int>>();
    if (assignment.size() != spec.twopl.gamma.size()) {
      throw_data("generator spec: assignment length must match item count");
    }
    int s = 0;
    for (int g : assignment) s = std::max(s, g);
    spec.twopl.partition = DimensionPartition(s, assignment);
    spec.twopl.s = s;
    spec.twopl.anchors = anchor_items(spec.twopl.partition);
    const auto theta = j.at("theta").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(theta.size()) != spec.twopl.k) {
      throw_data("generator spec: theta must have k rows");
    }
    spec.twopl.theta = Matrix(theta.size(), static_cast<std::size_t>(s));
    for (std::size_t c = 0; c < theta.size(); ++c) {
      if (static_cast<int>(theta[c].size()) != s) throw_data("generator spec: ragged theta");
      for (int d = 0; d < s; ++d) {
        spec.twopl.theta(c, static_cast<std::size_t>(d)) = theta[c][static_cast<std::size_t>(d)];
      }
    }
    for (double g : spec.twopl.gamma) {
      if (!(g > 0.0)) throw_data("generator spec: gamma entries must be positive");
    }
  } else {
    throw_data("generator spec: model must be 'lc' or '2pl'");
  }
  return spec;
}

inline nlohmann::json generator_spec_to_json(const GeneratorSpec& spec) {
  nlohmann::json j;
  j["n"] = spec.n;
  j["seed"] = spec.seed;
  if (!spec.codes.empty()) j["codes"] = spec.codes;
  if (spec.kind == GeneratorKind::latent_class) {
    j["model"] = "lc";
    j["weights"] = spec.lc.weights;
    std::vector<std::vector<double>> probs(spec.lc.success_probs.rows());
    for (std::size_t row = 0; row < probs.size(); ++row) {
      probs[row].resize(spec.lc.success_probs.cols());
      for (std::size_t c = 0; c < probs[row].size(); ++c) {
        probs[row][c] = spec.lc.success_probs(row, c);
      }
    }
    j["success_probs"] = probs;
  } else {
    j["model"] = "2pl";
    j["weights"] = spec.twopl.weights;
    j["gamma"] = spec.twopl.gamma;
    j["beta"] = spec.twopl.beta;
    j["assignment"] = spec.twopl.partition.assignment();
    std::vector<std::vector<double>> theta(spec.twopl.theta.rows());
    for (std::size_t c = 0; c < theta.size(); ++c) {
      theta[c].resize(spec.twopl.theta.cols());
      for (std::size_t d = 0; d < theta[c].size(); ++d) theta[c][d] = spec.twopl.theta(c, d);
    }
    j["theta"] = theta;
  }
  return j;
}

}  // namespace lcirt
