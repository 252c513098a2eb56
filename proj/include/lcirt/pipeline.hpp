#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcirt/config.hpp"
#include "lcirt/data.hpp"
#include "lcirt/dimensionality.hpp"
#include "lcirt/lc.hpp"
#include "lcirt/report.hpp"
#include "lcirt/selection.hpp"
#include "lcirt/twopl.hpp"

namespace lcirt {

struct PipelineOptions {
  int k_min = 1;
  int k_max = 7;
  double threshold = 0.5;  // relative discriminant score cutoff
  double alpha = 0.05;     // level for the dimension-merge tests
  std::string out_dir;
  FitConfig config;
};

struct PipelineResult {
  int chosen_k = 0;
  int items_retained = 0;
  int selected_dimensions = 0;
  std::vector<std::string> artifacts;  // files written, in order
};

// End-to-end batch run: class-count selection, discriminant screening under
// both models, item selection at the threshold, restricted refit, dimension
// clustering, and ability correlations. Artifacts are written as each stage
// completes, so a failing stage leaves the earlier tables on disk.
inline PipelineResult run_pipeline(const ResponseMatrix& data,
                                   const DimensionPartition& partition,
                                   const PipelineOptions& opts) {
  namespace fs = std::filesystem;
  opts.config.validate();
  if (opts.threshold < 0.0 || opts.threshold > 1.0) {
    throw_usage("pipeline: threshold must be in [0, 1]");
  }
  if (opts.out_dir.empty()) throw_usage("pipeline: output directory required");
  fs::create_directories(opts.out_dir);

  PipelineResult result;
  const auto emit = [&](const std::string& name, auto&& writer) {
    const std::string path = (fs::path(opts.out_dir) / name).string();
    write_csv_file(path, writer);
    result.artifacts.push_back(name);
  };
  const auto emit_json = [&](const std::string& name, const nlohmann::json& j) {
    const std::string path = (fs::path(opts.out_dir) / name).string();
    write_json_file(path, j);
    result.artifacts.push_back(name);
  };
  const auto emit_text = [&](const std::string& name, const std::string& content) {
    const std::string path = (fs::path(opts.out_dir) / name).string();
    write_text_file(path, content);
    result.artifacts.push_back(name);
  };

  // Resolved settings first, so even a partial bundle documents its run.
  {
    nlohmann::json j;
    j["config"] = opts.config;
    j["k_range"] = {opts.k_min, opts.k_max};
    j["threshold"] = opts.threshold;
    j["alpha"] = opts.alpha;
    emit_json("config.json", j);
  }

  // Stage 1: class-count selection.
  SelectKResult selk = select_k(data, opts.k_min, opts.k_max, opts.config);
  emit("bic_table.csv", [&](std::ostream& out) { write_bic_csv(selk, out); });
  result.chosen_k = selk.chosen_k;
  const LcFit* lc_fit = nullptr;
  for (std::size_t i = 0; i < selk.table.size(); ++i) {
    if (selk.table[i].k == selk.chosen_k) lc_fit = &selk.fits[i];
  }
  emit_json("lc_fit.json", lc_fit_to_json(*lc_fit, data.items()));

  // Stage 2: discriminant screening under the unconstrained model.
  DiscriminantReport lc_report = discriminant_lc(*lc_fit, partition);
  attach_codes(lc_report, data.items());
  emit("lc_discriminant.csv", [&](std::ostream& out) { write_discriminant_csv(lc_report, out); });
  emit("lc_threshold_sweep.csv", [&](std::ostream& out) {
    write_sweep_csv(threshold_sweep(lc_report, default_threshold_grid()), out);
  });

  // Stage 3: constrained fit on the full item set.
  TwoPlFit full_fit = em_fit_2pl(data, partition, selk.chosen_k, opts.config);
  emit_json("twopl_fit.json", twopl_fit_to_json(full_fit, data.items()));
  DiscriminantReport pl_report = discriminant_2pl(full_fit);
  attach_codes(pl_report, data.items());
  emit("twopl_discriminant.csv",
       [&](std::ostream& out) { write_discriminant_csv(pl_report, out); });
  emit("twopl_threshold_sweep.csv", [&](std::ostream& out) {
    write_sweep_csv(threshold_sweep(pl_report, default_threshold_grid()), out);
  });

  // Stage 4: item selection at the requested threshold.
  Selection selection = apply_threshold(pl_report, opts.threshold);
  result.items_retained = selection.overall;
  emit("selected_items.csv",
       [&](std::ostream& out) { write_selection_csv(selection, pl_report, out); });
  emit("selected_item_counts.csv",
       [&](std::ostream& out) { write_selection_counts_csv(selection, out); });

  // Stage 5: restricted refit on the retained items.
  ResponseMatrix reduced = restrict(data, selection.kept);
  DimensionPartition reduced_partition = restrict_partition(partition, selection.kept);
  TwoPlFit reduced_fit =
      em_fit_2pl(reduced, reduced_partition, selk.chosen_k, opts.config);
  emit_json("twopl_selected_fit.json", twopl_fit_to_json(reduced_fit, reduced.items()));

  // Stage 6: dimensionality clustering on the retained items.
  ClusterResult cluster =
      cluster_dimensions(reduced, reduced_partition, selk.chosen_k, opts.alpha, opts.config);
  emit("cluster_path.csv", [&](std::ostream& out) { write_path_csv(cluster.path, out); });
  emit_text("dendrogram.txt", emit_dendrogram_text(cluster.path));
  emit_text("dendrogram.dot", emit_dendrogram_dot(cluster.path));
  emit("selected_partition.csv", [&](std::ostream& out) {
    save_partition_csv(cluster.selected, reduced.items(), out);
  });
  result.selected_dimensions = cluster.selected.group_count();

  // Stage 7: abilities and their correlations at the selected structure.
  const TwoPlFit& final_fit =
      cluster.selected_fit.has_value() ? *cluster.selected_fit : cluster.initial_fit;
  emit_json("final_fit.json", twopl_fit_to_json(final_fit, reduced.items()));
  emit("ability_correlations.csv", [&](std::ostream& out) {
    write_correlation_csv(ability_correlations(final_fit), out);
  });

  {
    nlohmann::json j;
    j["chosen_k"] = result.chosen_k;
    j["items_retained"] = result.items_retained;
    j["selected_dimensions"] = result.selected_dimensions;
    j["full_loglik"] = full_fit.loglik;
    j["reduced_loglik"] = reduced_fit.loglik;
    j["final_loglik"] = final_fit.loglik;
    emit_json("summary.json", j);
  }
  return result;
}

}  // namespace lcirt
