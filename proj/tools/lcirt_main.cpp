// Batch front end: class-count selection, model fits, item screening,
// dimensionality clustering, correlation reports, data simulation, and the
// end-to-end pipeline. Logs go to stderr; data artifacts go to files or
// stdout, so runs are scriptable. Exit codes: 0 success, 1 usage error,
// 2 data validation error, 3 numerical failure.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lcirt/lcirt.hpp"

namespace {

struct GlobalOpts {
  std::string config_path;
  std::optional<double> tolerance;
  std::optional<int> max_iterations;
  std::optional<int> starts;
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::optional<double> alpha;
  std::optional<double> gamma_max;
  std::optional<double> beta_max;
  std::optional<int> threads;

  lcirt::FitConfig resolve() const {
    lcirt::FitConfig config;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) lcirt::throw_usage("cannot open config file '" + config_path + "'");
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        lcirt::throw_usage("config file '" + config_path + "' is not valid JSON: " + e.what());
      }
      config = j.get<lcirt::FitConfig>();
    }
    if (tolerance) config.tolerance = *tolerance;
    if (max_iterations) config.max_iterations = *max_iterations;
    if (starts) config.n_random_starts = *starts;
    if (seed) config.seed = *seed;
    if (epsilon) config.epsilon = *epsilon;
    if (alpha) config.alpha = *alpha;
    if (gamma_max) config.gamma_max = *gamma_max;
    if (beta_max) config.beta_max = *beta_max;
    if (threads) config.threads = *threads;
    config.validate();
    return config;
  }
};

void add_config_flags(CLI::App* cmd, GlobalOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file with fit settings");
  cmd->add_option("--tol", opts.tolerance, "EM convergence tolerance on |delta loglik|");
  cmd->add_option("--max-iter", opts.max_iterations, "maximum EM iterations");
  cmd->add_option("--starts", opts.starts, "number of random starts on top of the deterministic one");
  cmd->add_option("--seed", opts.seed, "master seed");
  cmd->add_option("--epsilon", opts.epsilon, "clamp for estimated success probabilities");
  cmd->add_option("--alpha", opts.alpha, "significance level for dimension merging");
  cmd->add_option("--gamma-max", opts.gamma_max, "discrimination cap");
  cmd->add_option("--beta-max", opts.beta_max, "difficulty cap (absolute value)");
  cmd->add_option("--threads", opts.threads, "worker cap for independent starts and merges");
}

std::pair<int, int> parse_k_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      const int k = std::stoi(text);
      return {k, k};
    }
    const int lo = std::stoi(text.substr(0, dots));
    const int hi = std::stoi(text.substr(dots + 2));
    if (lo < 1 || hi < lo) lcirt::throw_usage("invalid class-count range '" + text + "'");
    return {lo, hi};
  } catch (const lcirt::Error&) {
    throw;
  } catch (const std::exception&) {
    lcirt::throw_usage("cannot parse class-count range '" + text + "' (expected e.g. 1..7)");
  }
}

void write_stream_or_file(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    lcirt::write_text_file(path, content);
  }
}

template <typename Writer>
std::string render_csv(Writer&& writer) {
  std::ostringstream out;
  writer(out);
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-class / multidimensional 2PL item analysis toolkit"};
  app.require_subcommand(1);

  GlobalOpts opts;

  // select-k
  auto* cmd_select_k = app.add_subcommand("select-k", "fit a range of class counts and pick the BIC minimizer");
  std::string sk_data, sk_range = "1..7", sk_out;
  cmd_select_k->add_option("--data", sk_data, "response CSV")->required();
  cmd_select_k->add_option("--k", sk_range, "class-count range, e.g. 1..7");
  cmd_select_k->add_option("--out", sk_out, "BIC table CSV (default: stdout)");
  add_config_flags(cmd_select_k, opts);

  // fit-lc
  auto* cmd_fit_lc = app.add_subcommand("fit-lc", "fit the unconstrained latent class model");
  std::string lc_data, lc_partition, lc_out_json, lc_out_report, lc_out_sweep;
  int lc_k = 0;
  cmd_fit_lc->add_option("--data", lc_data, "response CSV")->required();
  cmd_fit_lc->add_option("--k", lc_k, "class count")->required();
  cmd_fit_lc->add_option("--partition", lc_partition, "partition CSV (enables the discriminant report)");
  cmd_fit_lc->add_option("--out-json", lc_out_json, "fit document (default: stdout)");
  cmd_fit_lc->add_option("--out-report", lc_out_report, "discriminant report CSV");
  cmd_fit_lc->add_option("--out-sweep", lc_out_sweep, "threshold sweep CSV");
  add_config_flags(cmd_fit_lc, opts);

  // fit-2pl
  auto* cmd_fit_2pl = app.add_subcommand("fit-2pl", "fit the constrained multidimensional 2PL model");
  std::string pl_data, pl_partition, pl_out_json, pl_out_report, pl_out_sweep;
  int pl_k = 0;
  cmd_fit_2pl->add_option("--data", pl_data, "response CSV")->required();
  cmd_fit_2pl->add_option("--partition", pl_partition, "partition CSV")->required();
  cmd_fit_2pl->add_option("--k", pl_k, "class count")->required();
  cmd_fit_2pl->add_option("--out-json", pl_out_json, "fit document (default: stdout)");
  cmd_fit_2pl->add_option("--out-report", pl_out_report, "discriminant report CSV");
  cmd_fit_2pl->add_option("--out-sweep", pl_out_sweep, "threshold sweep CSV");
  add_config_flags(cmd_fit_2pl, opts);

  // select-items
  auto* cmd_select_items = app.add_subcommand("select-items", "apply a threshold to a discriminant report");
  std::string si_report, si_out_items, si_out_counts;
  double si_threshold = 0.5;
  cmd_select_items->add_option("--report", si_report, "discriminant report CSV")->required();
  cmd_select_items->add_option("--threshold", si_threshold, "relative score cutoff in [0, 1]");
  cmd_select_items->add_option("--out-items", si_out_items, "retained items CSV (default: stdout)");
  cmd_select_items->add_option("--out-counts", si_out_counts, "per-dimension count CSV");

  // cluster-dims
  auto* cmd_cluster = app.add_subcommand("cluster-dims", "hierarchical merge of item groups by likelihood ratio");
  std::string cl_data, cl_partition, cl_out_path, cl_out_text, cl_out_dot, cl_out_partition;
  int cl_k = 0;
  double cl_alpha = -1.0;  // < 0: fall back to the config's alpha
  cmd_cluster->add_option("--data", cl_data, "response CSV")->required();
  cmd_cluster->add_option("--partition", cl_partition, "initial partition CSV")->required();
  cmd_cluster->add_option("--k", cl_k, "class count")->required();
  cmd_cluster->add_option("--merge-alpha", cl_alpha,
                          "stopping level for the merge tests (default: config alpha)");
  cmd_cluster->add_option("--out-path", cl_out_path, "merge path CSV (default: stdout)");
  cmd_cluster->add_option("--out-text", cl_out_text, "dendrogram text file");
  cmd_cluster->add_option("--out-dot", cl_out_dot, "dendrogram graph-description file");
  cmd_cluster->add_option("--out-partition", cl_out_partition, "selected partition CSV");
  add_config_flags(cmd_cluster, opts);

  // correlations
  auto* cmd_corr = app.add_subcommand("correlations", "ability correlation matrix from a 2PL fit document");
  std::string co_fit, co_out;
  cmd_corr->add_option("--fit", co_fit, "2PL fit JSON")->required();
  cmd_corr->add_option("--out", co_out, "correlation CSV (default: stdout)");

  // simulate
  auto* cmd_sim = app.add_subcommand("simulate", "draw a synthetic dataset from a generator spec");
  std::string sm_spec, sm_out, sm_out_labels;
  cmd_sim->add_option("--spec", sm_spec, "generator spec JSON")->required();
  cmd_sim->add_option("--out", sm_out, "response CSV (default: stdout)");
  cmd_sim->add_option("--out-labels", sm_out_labels, "true class labels CSV");

  // pipeline
  auto* cmd_pipe = app.add_subcommand("pipeline", "full analysis bundle into a directory");
  std::string pp_data, pp_partition, pp_range = "1..7", pp_out_dir;
  double pp_threshold = 0.5, pp_alpha = -1.0;
  cmd_pipe->add_option("--data", pp_data, "response CSV")->required();
  cmd_pipe->add_option("--partition", pp_partition, "partition CSV")->required();
  cmd_pipe->add_option("--k-range", pp_range, "class-count range, e.g. 1..7");
  cmd_pipe->add_option("--threshold", pp_threshold, "item selection cutoff");
  cmd_pipe->add_option("--merge-alpha", pp_alpha,
                       "stopping level for the merge tests (default: config alpha)");
  cmd_pipe->add_option("--out-dir", pp_out_dir, "bundle directory")->required();
  add_config_flags(cmd_pipe, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*cmd_select_k) {
      const auto config = opts.resolve();
      const auto [k_lo, k_hi] = parse_k_range(sk_range);
      const auto data = lcirt::load_response_csv(sk_data);
      std::cerr << "select-k: n=" << data.n() << " J=" << data.item_count() << " k=" << k_lo
                << ".." << k_hi << "\n";
      const auto result = lcirt::select_k(data, k_lo, k_hi, config);
      write_stream_or_file(sk_out,
                           render_csv([&](std::ostream& o) { lcirt::write_bic_csv(result, o); }));
      std::cout << "selected: " << result.chosen_k << "\n";
    } else if (*cmd_fit_lc) {
      const auto config = opts.resolve();
      const auto data = lcirt::load_response_csv(lc_data);
      const auto fit = lcirt::em_fit_lc(data, lc_k, config);
      std::cerr << "fit-lc: loglik=" << fit.loglik << " bic=" << fit.bic
                << " iterations=" << fit.n_iterations << "\n";
      write_stream_or_file(lc_out_json, lcirt::lc_fit_to_json(fit, data.items()).dump(2) + "\n");
      if (!lc_partition.empty()) {
        const auto partition = lcirt::load_partition_csv(lc_partition, data.items());
        auto report = lcirt::discriminant_lc(fit, partition);
        lcirt::attach_codes(report, data.items());
        if (!lc_out_report.empty()) {
          write_stream_or_file(lc_out_report, render_csv([&](std::ostream& o) {
                                 lcirt::write_discriminant_csv(report, o);
                               }));
        }
        if (!lc_out_sweep.empty()) {
          const auto sweep = lcirt::threshold_sweep(report, lcirt::default_threshold_grid());
          write_stream_or_file(lc_out_sweep, render_csv([&](std::ostream& o) {
                                 lcirt::write_sweep_csv(sweep, o);
                               }));
        }
      } else if (!lc_out_report.empty() || !lc_out_sweep.empty()) {
        lcirt::throw_usage("fit-lc: --out-report/--out-sweep need --partition");
      }
    } else if (*cmd_fit_2pl) {
      const auto config = opts.resolve();
      const auto data = lcirt::load_response_csv(pl_data);
      const auto partition = lcirt::load_partition_csv(pl_partition, data.items());
      const auto fit = lcirt::em_fit_2pl(data, partition, pl_k, config);
      std::cerr << "fit-2pl: loglik=" << fit.loglik << " bic=" << fit.bic
                << " iterations=" << fit.n_iterations << "\n";
      write_stream_or_file(pl_out_json, lcirt::twopl_fit_to_json(fit, data.items()).dump(2) + "\n");
      auto report = lcirt::discriminant_2pl(fit);
      lcirt::attach_codes(report, data.items());
      if (!pl_out_report.empty()) {
        write_stream_or_file(pl_out_report, render_csv([&](std::ostream& o) {
                               lcirt::write_discriminant_csv(report, o);
                             }));
      }
      if (!pl_out_sweep.empty()) {
        const auto sweep = lcirt::threshold_sweep(report, lcirt::default_threshold_grid());
        write_stream_or_file(pl_out_sweep, render_csv([&](std::ostream& o) {
                               lcirt::write_sweep_csv(sweep, o);
                             }));
      }
    } else if (*cmd_select_items) {
      // The report CSV is self-contained: index, code, dimension, score.
      std::ifstream in(si_report);
      if (!in) lcirt::throw_data("cannot open report '" + si_report + "'");
      std::string header;
      std::getline(in, header);
      lcirt::DiscriminantReport report;
      const bool is_lc = header.rfind("j,item,d,", 0) == 0;
      const bool is_pl = header.rfind("d,j,item,", 0) == 0;
      if (!is_lc && !is_pl) lcirt::throw_data("unrecognized discriminant report header");
      report.source = is_lc ? lcirt::DiscriminantSource::latent_class
                            : lcirt::DiscriminantSource::twopl;
      std::string line;
      int max_dim = 0;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 6) lcirt::throw_data("short row in discriminant report");
        lcirt::DiscriminantRow row;
        if (is_lc) {
          row.index = std::stoi(cells[0]);
          row.code = cells[1];
          row.dimension = std::stoi(cells[2]);
        } else {
          row.dimension = std::stoi(cells[0]);
          row.index = std::stoi(cells[1]);
          row.code = cells[2];
        }
        row.score = std::stod(cells.back());
        max_dim = std::max(max_dim, row.dimension);
        report.rows.push_back(std::move(row));
      }
      report.dimension_count = max_dim;
      const auto selection = lcirt::apply_threshold(report, si_threshold);
      write_stream_or_file(si_out_items, render_csv([&](std::ostream& o) {
                             lcirt::write_selection_csv(selection, report, o);
                           }));
      if (!si_out_counts.empty()) {
        write_stream_or_file(si_out_counts, render_csv([&](std::ostream& o) {
                               lcirt::write_selection_counts_csv(selection, o);
                             }));
      }
      std::cerr << "select-items: retained " << selection.overall << " of "
                << report.rows.size() << " at threshold " << si_threshold << "\n";
    } else if (*cmd_cluster) {
      const auto config = opts.resolve();
      const auto data = lcirt::load_response_csv(cl_data);
      const auto partition = lcirt::load_partition_csv(cl_partition, data.items());
      const double merge_alpha = cl_alpha < 0.0 ? config.alpha : cl_alpha;
      const auto result = lcirt::cluster_dimensions(data, partition, cl_k, merge_alpha, config);
      write_stream_or_file(cl_out_path, render_csv([&](std::ostream& o) {
                             lcirt::write_path_csv(result.path, o);
                           }));
      if (!cl_out_text.empty()) {
        lcirt::write_text_file(cl_out_text, lcirt::emit_dendrogram_text(result.path));
      }
      if (!cl_out_dot.empty()) {
        lcirt::write_text_file(cl_out_dot, lcirt::emit_dendrogram_dot(result.path));
      }
      if (!cl_out_partition.empty()) {
        lcirt::write_text_file(cl_out_partition, render_csv([&](std::ostream& o) {
                                 lcirt::save_partition_csv(result.selected, data.items(), o);
                               }));
      }
      std::cout << "selected dimensions: " << result.selected.group_count() << "\n";
    } else if (*cmd_corr) {
      std::ifstream in(co_fit);
      if (!in) lcirt::throw_data("cannot open fit document '" + co_fit + "'");
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        lcirt::throw_data("fit document is not valid JSON: " + std::string(e.what()));
      }
      const auto fit = lcirt::twopl_fit_summary_from_json(j);
      const auto corr = lcirt::ability_correlations(fit.theta, fit.weights);
      write_stream_or_file(co_out, render_csv([&](std::ostream& o) {
                             lcirt::write_correlation_csv(corr, o);
                           }));
    } else if (*cmd_sim) {
      std::ifstream in(sm_spec);
      if (!in) lcirt::throw_data("cannot open generator spec '" + sm_spec + "'");
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        lcirt::throw_data("generator spec is not valid JSON: " + std::string(e.what()));
      }
      const auto spec = lcirt::generator_spec_from_json(j);
      const auto sim = lcirt::simulate(spec);
      write_stream_or_file(sm_out, render_csv([&](std::ostream& o) {
                             lcirt::save_response_csv(sim.data, o);
                           }));
      if (!sm_out_labels.empty()) {
        std::ostringstream labels;
        labels << "subject,class\n";
        for (std::size_t i = 0; i < sim.classes.size(); ++i) {
          labels << (i + 1) << ',' << sim.classes[i] << '\n';
        }
        lcirt::write_text_file(sm_out_labels, labels.str());
      }
      std::cerr << "simulate: n=" << sim.data.n() << " J=" << sim.data.item_count() << "\n";
    } else if (*cmd_pipe) {
      lcirt::PipelineOptions popts;
      popts.config = opts.resolve();
      const auto [k_lo, k_hi] = parse_k_range(pp_range);
      popts.k_min = k_lo;
      popts.k_max = k_hi;
      popts.threshold = pp_threshold;
      popts.alpha = pp_alpha < 0.0 ? popts.config.alpha : pp_alpha;
      popts.out_dir = pp_out_dir;
      const auto data = lcirt::load_response_csv(pp_data);
      const auto partition = lcirt::load_partition_csv(pp_partition, data.items());
      const auto result = lcirt::run_pipeline(data, partition, popts);
      std::cout << "chosen k: " << result.chosen_k << "\n"
                << "items retained: " << result.items_retained << "\n"
                << "selected dimensions: " << result.selected_dimensions << "\n";
    }
  } catch (const lcirt::Error& e) {
    nlohmann::json err{{"error", {{"kind", e.kind_name()}, {"message", e.what()}}}};
    std::cout << err.dump(2) << "\n";
    std::cerr << "error (" << e.kind_name() << "): " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", {{"kind", "numerical"}, {"message", e.what()}}}};
    std::cout << err.dump(2) << "\n";
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
