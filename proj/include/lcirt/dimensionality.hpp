#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lcirt/config.hpp"
#include "lcirt/data.hpp"
#include "lcirt/error.hpp"
#include "lcirt/parallel.hpp"
#include "lcirt/patterns.hpp"
#include "lcirt/stats.hpp"
#include "lcirt/twopl.hpp"

namespace lcirt {

struct LrTestResult {
  double lr = 0.0;          // 2 * (full - reduced) log-likelihood
  double pattern_lr = 0.0;  // same statistic from the observed-pattern sum
  int df = 0;
  double p_value = 1.0;
  DimensionPartition full_partition;
  DimensionPartition reduced_partition;
  double full_loglik = 0.0;
  double reduced_loglik = 0.0;
};

namespace detail {

// True when `reduced` arises from `full` by collapsing exactly two groups.
inline bool is_two_group_merge(const DimensionPartition& full,
                               const DimensionPartition& reduced) {
  if (full.item_count() != reduced.item_count()) return false;
  if (reduced.group_count() != full.group_count() - 1) return false;
  // Each full group must land in exactly one reduced group.
  std::vector<int> image(static_cast<std::size_t>(full.group_count()), 0);
  for (std::size_t j = 1; j <= full.item_count(); ++j) {
    const int f = full.group_of(j);
    const int r = reduced.group_of(j);
    auto& slot = image[static_cast<std::size_t>(f - 1)];
    if (slot == 0) {
      slot = r;
    } else if (slot != r) {
      return false;
    }
  }
  return true;
}

// Log-probability of each observed pattern under the fitted parameters.
inline std::vector<double> pattern_logprobs(const TwoPlParams& params,
                                            const CollapsedData& cd) {
  const std::size_t k = static_cast<std::size_t>(params.k);
  Matrix log_p1(cd.j, k), log_p0(cd.j, k);
  twopl_log_probs(params, log_p1, log_p0);
  std::vector<double> logw(k);
  for (std::size_t c = 0; c < k; ++c) logw[c] = std::log(params.weights[c]);
  std::vector<double> out(cd.pattern_count());
  std::vector<double> terms(k);
  for (std::size_t g = 0; g < cd.pattern_count(); ++g) {
    const std::uint8_t* y = cd.row(g);
    for (std::size_t c = 0; c < k; ++c) {
      double acc = logw[c];
      for (std::size_t j = 0; j < cd.j; ++j) acc += y[j] ? log_p1(j, c) : log_p0(j, c);
      terms[c] = acc;
    }
    out[g] = log_sum_exp(terms);
  }
  return out;
}

}  // namespace detail

// Likelihood ratio test of a collapsed-dimension hypothesis. The statistic
// is reported as twice the log-likelihood difference and cross-checked
// against the sum over observed configurations
//   2 * sum_y n(y) log(p_full(y) / p_reduced(y)),
// which must agree to 1e-8. Degrees of freedom: k - 2.
inline LrTestResult lr_test(const ResponseMatrix& data, const TwoPlFit& full,
                            const TwoPlFit& reduced) {
  if (full.n != data.n() || reduced.n != data.n() ||
      full.params.item_count() != data.item_count() ||
      reduced.params.item_count() != data.item_count()) {
    throw_usage("lr_test: fits do not match the supplied data");
  }
  if (full.params.k != reduced.params.k) throw_usage("lr_test: class counts differ");
  const bool same_partition = full.params.partition == reduced.params.partition;
  if (!same_partition &&
      !detail::is_two_group_merge(full.params.partition, reduced.params.partition)) {
    throw_usage("lr_test: reduced partition must merge exactly two groups of the full one");
  }
  const int df = full.params.k - 2;
  if (df < 1) {
    throw_usage("lr_test: k = " + std::to_string(full.params.k) +
                " leaves zero degrees of freedom; the chi-squared reference is degenerate");
  }

  LrTestResult res;
  res.full_partition = full.params.partition;
  res.reduced_partition = reduced.params.partition;
  res.full_loglik = full.loglik;
  res.reduced_loglik = reduced.loglik;
  res.lr = 2.0 * (full.loglik - reduced.loglik);
  res.df = df;

  const auto cd = detail::collapse(data);
  const auto lp_full = detail::pattern_logprobs(full.params, cd);
  const auto lp_red = detail::pattern_logprobs(reduced.params, cd);
  double sum = 0.0;
  for (std::size_t g = 0; g < cd.pattern_count(); ++g) {
    sum += cd.weights[g] * (lp_full[g] - lp_red[g]);
  }
  res.pattern_lr = 2.0 * sum;
  if (std::fabs(res.pattern_lr - res.lr) > 1e-8) {
    throw_numeric("lr_test: pattern-sum statistic disagrees with the log-likelihood "
                  "difference (" + std::to_string(res.pattern_lr) + " vs " +
                  std::to_string(res.lr) + ")");
  }
  if (res.lr < -1e-6) {
    throw_numeric("lr_test: negative statistic " + std::to_string(res.lr) +
                  "; the reduced fit beat the full one (optimizer failure)");
  }
  res.p_value = chi2_sf(std::max(res.lr, 0.0), df);
  return res;
}

// One agglomeration step: which clusters merged and what the test said.
struct MergeStep {
  int h = 0;        // 1-based step number
  int s_after = 0;  // group count after the merge
  std::vector<int> merged_left;             // original-group label sets
  std::vector<int> merged_right;
  std::vector<std::vector<int>> clusters;   // all label sets after the merge
  DimensionPartition partition;             // partition after the merge
  double lr = 0.0;
  double p_value = 0.0;
  double height = 0.0;  // cumulative statistic, for dendrogram rendering
  double loglik = 0.0;  // refit log-likelihood after the merge
};

struct DendrogramPath {
  int initial_s = 0;
  std::vector<MergeStep> steps;
  // Index of the last accepted merge; -1 keeps the initial partition.
  int selected_step = -1;
};

struct ClusterResult {
  DendrogramPath path;
  DimensionPartition selected;
  TwoPlFit initial_fit;
  std::optional<TwoPlFit> selected_fit;  // refit at the selected partition (if any merge chosen)
};

namespace detail {

// Partition whose groups are the given clusters of original groups, numbered
// by ascending smallest original label.
inline DimensionPartition partition_from_clusters(const DimensionPartition& initial,
                                                  const std::vector<std::vector<int>>& clusters) {
  std::vector<std::size_t> order(clusters.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return clusters[a].front() < clusters[b].front();
  });
  std::vector<int> group_to_new(static_cast<std::size_t>(initial.group_count()) + 1, 0);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    for (int g : clusters[order[pos]]) {
      group_to_new[static_cast<std::size_t>(g)] = static_cast<int>(pos) + 1;
    }
  }
  std::vector<int> assignment(initial.item_count(), 0);
  for (std::size_t j = 1; j <= initial.item_count(); ++j) {
    assignment[j - 1] = group_to_new[static_cast<std::size_t>(initial.group_of(j))];
  }
  return DimensionPartition(static_cast<int>(clusters.size()), std::move(assignment));
}

// Warm parameters for a candidate merge: keep every item's (gamma, beta)
// (the absorbed anchor becomes a free item at its identity values) and merge
// the two ability columns into their plain mean.
inline TwoPlParams warm_merge_params(const TwoPlParams& parent,
                                     const DimensionPartition& initial,
                                     const std::vector<std::vector<int>>& clusters_after,
                                     const DimensionPartition& merged_partition) {
  TwoPlParams p = twopl_skeleton(merged_partition, parent.k);
  p.weights = parent.weights;
  p.gamma = parent.gamma;
  p.beta = parent.beta;
  for (int a : p.anchors) {
    p.gamma[static_cast<std::size_t>(a - 1)] = 1.0;
    p.beta[static_cast<std::size_t>(a - 1)] = 0.0;
  }
  // New dimensions are the clusters ordered by smallest original label
  // (matching partition_from_clusters); each new ability column starts at
  // the mean of the parent columns it absorbs.
  std::vector<std::size_t> order(clusters_after.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return clusters_after[a].front() < clusters_after[b].front();
  });
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    std::vector<std::size_t> parents;
    for (int g : clusters_after[order[pos]]) {
      const int item = initial.items_in_group(g).front();
      parents.push_back(static_cast<std::size_t>(
          parent.partition.group_of(static_cast<std::size_t>(item)) - 1));
    }
    std::sort(parents.begin(), parents.end());
    parents.erase(std::unique(parents.begin(), parents.end()), parents.end());
    for (std::size_t c = 0; c < static_cast<std::size_t>(p.k); ++c) {
      double acc = 0.0;
      for (std::size_t pd : parents) acc += parent.theta(c, pd);
      p.theta(c, pos) =
          std::clamp(acc / static_cast<double>(parents.size()), -kThetaCap, kThetaCap);
    }
  }
  return p;
}

}  // namespace detail

// Agglomerative search for the smallest adequate number of dimensions.
// Starting from the given partition, every pairwise merge of the current
// groups is refit; the merge with the smallest likelihood-ratio statistic is
// recorded and adopted, down to a single dimension. The selected partition
// is the one in force just before the first merge whose test rejects at
// level alpha (the whole path is returned for audit).
inline ClusterResult cluster_dimensions(const ResponseMatrix& data,
                                        const DimensionPartition& initial, int k,
                                        double alpha, const FitConfig& config) {
  if (initial.group_count() < 2) throw_usage("cluster_dimensions: need at least two groups");
  if (alpha <= 0.0 || alpha >= 1.0) throw_usage("cluster_dimensions: alpha must be in (0, 1)");
  if (k < 3) {
    throw_usage("cluster_dimensions: k must be >= 3 so the test has positive degrees of freedom");
  }

  ClusterResult result;
  result.path.initial_s = initial.group_count();

  const auto prefit = detail::lc_pre_fit(data, k, config);
  TwoPlFit current = em_fit_2pl(data, initial, k, config, nullptr, &prefit);
  result.initial_fit = current;

  std::vector<std::vector<int>> clusters;
  for (int d = 1; d <= initial.group_count(); ++d) clusters.push_back({d});

  double height = 0.0;
  int h = 0;
  while (static_cast<int>(clusters.size()) > 1) {
    ++h;
    struct Candidate {
      std::size_t a, b;
      DimensionPartition partition;
      std::vector<std::vector<int>> clusters_after;
    };
    std::vector<Candidate> candidates;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        std::vector<std::vector<int>> merged = clusters;
        std::vector<int> join = merged[a];
        join.insert(join.end(), merged[b].begin(), merged[b].end());
        std::sort(join.begin(), join.end());
        merged[a] = std::move(join);
        merged.erase(merged.begin() + static_cast<std::ptrdiff_t>(b));
        Candidate cand;
        cand.a = a;
        cand.b = b;
        cand.partition = detail::partition_from_clusters(initial, merged);
        cand.clusters_after = std::move(merged);
        candidates.push_back(std::move(cand));
      }
    }

    std::vector<TwoPlFit> fits(candidates.size());
    std::vector<std::string> failures(candidates.size());
    detail::parallel_for_indexed(candidates.size(), config.threads, [&](std::size_t i) {
      const auto warm = detail::warm_merge_params(current.params, initial,
                                                  candidates[i].clusters_after,
                                                  candidates[i].partition);
      try {
        fits[i] = em_fit_2pl(data, candidates[i].partition, k, config, &warm, &prefit);
      } catch (const Error& e) {
        failures[i] = e.what();
      }
    });

    int best = -1;
    double best_lr = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (!failures[i].empty()) {
        throw Error(ErrorKind::numeric, "cluster_dimensions: refit failed at step " +
                                            std::to_string(h) + ": " + failures[i]);
      }
      const double lr = 2.0 * (current.loglik - fits[i].loglik);
      // Ties resolved on the lexicographically smallest pair of label sets;
      // candidate enumeration already visits pairs in that order.
      if (best < 0 || lr < best_lr) {
        best = static_cast<int>(i);
        best_lr = lr;
      }
    }

    Candidate& chosen = candidates[static_cast<std::size_t>(best)];
    TwoPlFit& merged_fit = fits[static_cast<std::size_t>(best)];
    // Full test for the adopted merge, including the pattern-sum identity
    // check and the negative-statistic guard.
    const LrTestResult test = lr_test(data, current, merged_fit);

    MergeStep step;
    step.h = h;
    step.s_after = static_cast<int>(chosen.clusters_after.size());
    step.merged_left = clusters[chosen.a];
    step.merged_right = clusters[chosen.b];
    step.clusters = chosen.clusters_after;
    step.partition = chosen.partition;
    step.lr = std::max(test.lr, 0.0);
    step.p_value = test.p_value;
    height += step.lr;
    step.height = height;
    step.loglik = merged_fit.loglik;
    result.path.steps.push_back(step);

    clusters = chosen.clusters_after;
    current = std::move(merged_fit);
  }

  // Scan the merge path in order and stop just before the first rejection;
  // if no merge is rejected the single-dimension model is selected.
  int selected = -1;
  for (std::size_t i = 0; i < result.path.steps.size(); ++i) {
    if (result.path.steps[i].p_value < alpha) break;
    selected = static_cast<int>(i);
  }
  result.path.selected_step = selected;
  if (selected < 0) {
    result.selected = initial;
  } else {
    result.selected = result.path.steps[static_cast<std::size_t>(selected)].partition;
    // Refit at the selected structure so downstream reports (abilities,
    // correlations) come from a clean fit.
    result.selected_fit = em_fit_2pl(data, result.selected, k, config, nullptr, &prefit);
  }
  return result;
}

namespace detail {

inline std::string cluster_label(const std::vector<int>& cluster) {
  std::string out = "{";
  for (std::size_t i = 0; i < cluster.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(cluster[i]);
  }
  out += "}";
  return out;
}

inline std::string format_fixed(double x, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
  return buf;
}

}  // namespace detail

// Plain-text merge listing; fully parseable, so the sequence can be
// reconstructed from the emitted document.
inline std::string emit_dendrogram_text(const DendrogramPath& path) {
  std::ostringstream out;
  out << "dendrogram leaves=" << path.initial_s << "\n";
  for (const auto& step : path.steps) {
    out << "step h=" << step.h << " s=" << step.s_after << " merge="
        << detail::cluster_label(step.merged_left) << "+"
        << detail::cluster_label(step.merged_right)
        << " lr=" << detail::format_fixed(step.lr)
        << " p=" << detail::format_fixed(step.p_value)
        << " height=" << detail::format_fixed(step.height) << " clusters=";
    for (std::size_t i = 0; i < step.clusters.size(); ++i) {
      if (i) out << ";";
      out << detail::cluster_label(step.clusters[i]);
    }
    out << "\n";
  }
  out << "selected s="
      << (path.selected_step < 0
              ? path.initial_s
              : path.steps[static_cast<std::size_t>(path.selected_step)].s_after)
      << "\n";
  return out.str();
}

// Graph-description output (DOT) for external rendering; merge heights are
// the cumulative statistics.
inline std::string emit_dendrogram_dot(const DendrogramPath& path) {
  std::ostringstream out;
  out << "graph dendrogram {\n  node [shape=box];\n";
  for (int d = 1; d <= path.initial_s; ++d) {
    out << "  leaf_" << d << " [label=\"{" << d << "}\"];\n";
  }
  // Track the node currently representing each cluster (keyed by label).
  std::vector<std::pair<std::string, std::string>> rep;  // cluster label -> node id
  for (int d = 1; d <= path.initial_s; ++d) {
    rep.emplace_back(detail::cluster_label({d}), "leaf_" + std::to_string(d));
  }
  auto find_rep = [&](const std::string& label) {
    for (auto& [l, node] : rep) {
      if (l == label) return node;
    }
    throw_numeric("emit_dendrogram_dot: unknown cluster label " + label);
  };
  for (const auto& step : path.steps) {
    const std::string id = "merge_" + std::to_string(step.h);
    out << "  " << id << " [label=\"h=" << step.h
        << " LR=" << detail::format_fixed(step.lr, 3)
        << " p=" << detail::format_fixed(step.p_value, 3)
        << " height=" << detail::format_fixed(step.height, 3) << "\"];\n";
    const std::string left = detail::cluster_label(step.merged_left);
    const std::string right = detail::cluster_label(step.merged_right);
    out << "  " << id << " -- " << find_rep(left) << ";\n";
    out << "  " << id << " -- " << find_rep(right) << ";\n";
    std::vector<int> joined = step.merged_left;
    joined.insert(joined.end(), step.merged_right.begin(), step.merged_right.end());
    std::sort(joined.begin(), joined.end());
    std::erase_if(rep, [&](const auto& p) { return p.first == left || p.first == right; });
    rep.emplace_back(detail::cluster_label(joined), id);
  }
  out << "}\n";
  return out.str();
}

inline std::string emit_dendrogram(const DendrogramPath& path, const std::string& format) {
  if (format == "text") return emit_dendrogram_text(path);
  if (format == "dot") return emit_dendrogram_dot(path);
  throw_usage("emit_dendrogram: unknown format '" + format + "' (expected text or dot)");
}

// Parsed-back view of the text format: the merge sequence only.
struct ParsedDendrogram {
  int leaves = 0;
  struct Step {
    int h = 0;
    int s_after = 0;
    std::vector<int> left, right;
    double lr = 0.0, p = 0.0, height = 0.0;
  };
  std::vector<Step> steps;
  int selected_s = 0;
};

namespace detail {

inline std::vector<int> parse_cluster_label(const std::string& text) {
  if (text.size() < 2 || text.front() != '{' || text.back() != '}') {
    throw_data("malformed cluster label '" + text + "'");
  }
  std::vector<int> out;
  std::stringstream ss(text.substr(1, text.size() - 2));
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

}  // namespace detail

inline ParsedDendrogram parse_dendrogram_text(const std::string& text) {
  ParsedDendrogram parsed;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "dendrogram") {
      std::string kv;
      ls >> kv;
      parsed.leaves = std::stoi(kv.substr(kv.find('=') + 1));
    } else if (tag == "step") {
      ParsedDendrogram::Step step;
      std::string kv;
      while (ls >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        if (key == "h") {
          step.h = std::stoi(val);
        } else if (key == "s") {
          step.s_after = std::stoi(val);
        } else if (key == "merge") {
          const auto plus = val.find("}+{");
          step.left = detail::parse_cluster_label(val.substr(0, plus + 1));
          step.right = detail::parse_cluster_label(val.substr(plus + 2));
        } else if (key == "lr") {
          step.lr = std::stod(val);
        } else if (key == "p") {
          step.p = std::stod(val);
        } else if (key == "height") {
          step.height = std::stod(val);
        }
      }
      parsed.steps.push_back(std::move(step));
    } else if (tag == "selected") {
      std::string kv;
      ls >> kv;
      parsed.selected_s = std::stoi(kv.substr(kv.find('=') + 1));
    }
  }
  if (parsed.leaves == 0) throw_data("parse_dendrogram_text: missing header line");
  return parsed;
}

}  // namespace lcirt
