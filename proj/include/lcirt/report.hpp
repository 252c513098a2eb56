#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcirt/data.hpp"
#include "lcirt/dimensionality.hpp"
#include "lcirt/error.hpp"
#include "lcirt/lc.hpp"
#include "lcirt/selection.hpp"
#include "lcirt/twopl.hpp"

namespace lcirt {

namespace detail {

inline std::string fixed6(double x) { return format_fixed(x, 6); }

}  // namespace detail

// ---- CSV tables ------------------------------------------------------------

inline void write_bic_csv(const SelectKResult& result, std::ostream& out) {
  out << "k,loglik,m,bic\n";
  for (const auto& row : result.table) {
    out << row.k << ',' << detail::fixed6(row.loglik) << ',' << row.n_params << ','
        << detail::fixed6(row.bic) << '\n';
  }
}

inline void write_discriminant_csv(const DiscriminantReport& report, std::ostream& out) {
  if (report.source == DiscriminantSource::latent_class) {
    out << "j,item,d,mean,std,M,D\n";
    for (const auto& r : report.rows) {
      out << r.index << ',' << r.code << ',' << r.dimension << ',' << detail::fixed6(r.mean)
          << ',' << detail::fixed6(r.sd) << ',' << detail::fixed6(r.raw) << ','
          << detail::fixed6(r.score) << '\n';
    }
  } else {
    out << "d,j,item,gamma,beta,D_star\n";
    for (const auto& r : report.rows) {
      out << r.dimension << ',' << r.index << ',' << r.code << ',' << detail::fixed6(r.raw)
          << ',' << detail::fixed6(r.beta) << ',' << detail::fixed6(r.score) << '\n';
    }
  }
}

inline void write_sweep_csv(const SweepTable& table, std::ostream& out) {
  out << "threshold";
  for (int d = 1; d <= table.dimension_count; ++d) out << ',' << d;
  out << ",overall\n";
  for (std::size_t i = 0; i < table.thresholds.size(); ++i) {
    out << detail::format_fixed(table.thresholds[i], 1);
    for (int c : table.per_dimension[i]) out << ',' << c;
    out << ',' << table.overall[i] << '\n';
  }
}

inline void write_correlation_csv(const AbilityCorrelations& corr, std::ostream& out) {
  const std::size_t s = corr.rho.rows();
  out << "d";
  for (std::size_t d = 1; d <= s; ++d) out << ',' << d;
  out << '\n';
  for (std::size_t d1 = 0; d1 < s; ++d1) {
    out << (d1 + 1);
    for (std::size_t d2 = 0; d2 <= d1; ++d2) {
      out << ',';
      if (corr.degenerate[d1] || corr.degenerate[d2]) {
        out << "undefined";
      } else {
        out << detail::fixed6(corr.rho(d1, d2));
      }
    }
    out << '\n';
  }
}

inline void write_path_csv(const DendrogramPath& path, std::ostream& out) {
  out << "h,s,clusters,lr,p_value\n";
  for (const auto& step : path.steps) {
    out << step.h << ',' << step.s_after << ",\"";
    for (std::size_t i = 0; i < step.clusters.size(); ++i) {
      if (i) out << ',';
      out << detail::cluster_label(step.clusters[i]);
    }
    out << "\"," << detail::fixed6(step.lr) << ',' << detail::fixed6(step.p_value) << '\n';
  }
}

// Retained items in the partition-compatible two-column layout, so the list
// can be fed straight back as a partition for a restricted refit.
inline void write_selection_csv(const Selection& selection, const DiscriminantReport& report,
                                std::ostream& out) {
  out << "item_code,group_index\n";
  for (int idx : selection.kept) {
    const auto& row = report.rows[static_cast<std::size_t>(idx - 1)];
    out << row.code << ',' << row.dimension << '\n';
  }
}

inline void write_selection_counts_csv(const Selection& selection, std::ostream& out) {
  out << "dimension,retained\n";
  for (std::size_t d = 0; d < selection.per_dimension.size(); ++d) {
    out << (d + 1) << ',' << selection.per_dimension[d] << '\n';
  }
  out << "overall," << selection.overall << '\n';
}

// ---- JSON fit documents ----------------------------------------------------

inline nlohmann::json lc_fit_to_json(const LcFit& fit, const std::vector<ItemMeta>& items) {
  nlohmann::json j;
  j["model"] = "lc";
  j["k"] = fit.params.k;
  j["n"] = fit.n;
  j["weights"] = fit.params.weights;
  std::vector<nlohmann::json> item_entries;
  for (std::size_t row = 0; row < fit.params.item_count(); ++row) {
    std::vector<double> probs(fit.params.success_probs.cols());
    for (std::size_t c = 0; c < probs.size(); ++c) probs[c] = fit.params.success_probs(row, c);
    item_entries.push_back({{"code", items[row].code}, {"success_probs", probs}});
  }
  j["items"] = item_entries;
  j["loglik"] = fit.loglik;
  j["n_params"] = fit.n_params;
  j["bic"] = fit.bic;
  j["n_iterations"] = fit.n_iterations;
  j["converged"] = fit.converged;
  j["winning_start"] = fit.winning_start;
  j["winning_seed"] = fit.winning_seed;
  return j;
}

inline nlohmann::json twopl_fit_to_json(const TwoPlFit& fit,
                                        const std::vector<ItemMeta>& items) {
  nlohmann::json j;
  j["model"] = "2pl";
  j["k"] = fit.params.k;
  j["s"] = fit.params.s;
  j["n"] = fit.n;
  std::vector<nlohmann::json> item_entries;
  for (std::size_t row = 0; row < fit.params.item_count(); ++row) {
    item_entries.push_back({{"code", items[row].code},
                            {"dimension", fit.params.partition.group_of(row + 1)},
                            {"gamma", fit.params.gamma[row]},
                            {"beta", fit.params.beta[row]}});
  }
  j["items"] = item_entries;
  std::vector<nlohmann::json> class_entries;
  for (std::size_t c = 0; c < static_cast<std::size_t>(fit.params.k); ++c) {
    std::vector<double> theta_row(fit.params.theta.cols());
    for (std::size_t d = 0; d < theta_row.size(); ++d) theta_row[d] = fit.params.theta(c, d);
    class_entries.push_back({{"weight", fit.params.weights[c]}, {"theta", theta_row}});
  }
  j["classes"] = class_entries;
  j["anchors"] = fit.params.anchors;
  j["loglik"] = fit.loglik;
  j["n_params"] = fit.n_params;
  j["bic"] = fit.bic;
  j["n_iterations"] = fit.n_iterations;
  j["converged"] = fit.converged;
  j["winning_start"] = fit.winning_start;
  j["winning_seed"] = fit.winning_seed;
  return j;
}

// Reads back the pieces of a 2PL fit document that the correlation report
// needs (abilities and class weights).
struct TwoPlFitSummary {
  int k = 0;
  int s = 0;
  Matrix theta;
  std::vector<double> weights;
};

inline TwoPlFitSummary twopl_fit_summary_from_json(const nlohmann::json& j) {
  if (!j.contains("model") || j.at("model").get<std::string>() != "2pl") {
    throw_data("fit document is not a 2pl fit");
  }
  TwoPlFitSummary out;
  out.k = j.at("k").get<int>();
  out.s = j.at("s").get<int>();
  const auto& classes = j.at("classes");
  if (static_cast<int>(classes.size()) != out.k) throw_data("fit document: class count mismatch");
  out.theta = Matrix(static_cast<std::size_t>(out.k), static_cast<std::size_t>(out.s));
  out.weights.resize(static_cast<std::size_t>(out.k));
  for (std::size_t c = 0; c < classes.size(); ++c) {
    out.weights[c] = classes[c].at("weight").get<double>();
    const auto theta_row = classes[c].at("theta").get<std::vector<double>>();
    if (static_cast<int>(theta_row.size()) != out.s) throw_data("fit document: ragged theta");
    for (int d = 0; d < out.s; ++d) {
      out.theta(c, static_cast<std::size_t>(d)) = theta_row[static_cast<std::size_t>(d)];
    }
  }
  return out;
}

// ---- file helpers ------------------------------------------------------------

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_data("cannot write '" + path + "'");
  out << content;
}

template <typename Fn>
void write_csv_file(const std::string& path, Fn&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_data("cannot write '" + path + "'");
  writer(out);
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_data("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace lcirt
