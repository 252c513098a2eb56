#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lcirt/data.hpp"
#include "lcirt/error.hpp"
#include "lcirt/lc.hpp"
#include "lcirt/twopl.hpp"

namespace lcirt {

enum class DiscriminantSource { latent_class, twopl };

struct DiscriminantRow {
  int index = 0;       // 1-based item position
  std::string code;
  int dimension = 0;   // 1-based group
  double raw = 0.0;    // probability range M_j, or estimated discrimination
  double score = 0.0;  // within-dimension relative score in [0, 1]
  double mean = std::numeric_limits<double>::quiet_NaN();  // weighted mean (LC only)
  double sd = std::numeric_limits<double>::quiet_NaN();    // weighted std (LC only)
  double beta = std::numeric_limits<double>::quiet_NaN();  // difficulty (2PL only)
  bool at_max = false;      // attains the dimension maximum (score exactly 1)
  bool tied_max = false;    // shares the maximum with another item
  bool degenerate = false;  // whole dimension has zero raw range
};

struct DiscriminantReport {
  DiscriminantSource source = DiscriminantSource::latent_class;
  std::vector<DiscriminantRow> rows;  // item order
  int dimension_count = 0;
};

namespace detail {

inline void fill_relative_scores(DiscriminantReport& report) {
  std::vector<double> dim_max(static_cast<std::size_t>(report.dimension_count),
                              -std::numeric_limits<double>::infinity());
  for (const auto& r : report.rows) {
    auto& m = dim_max[static_cast<std::size_t>(r.dimension - 1)];
    m = std::max(m, r.raw);
  }
  std::vector<int> max_count(static_cast<std::size_t>(report.dimension_count), 0);
  for (auto& r : report.rows) {
    const double m = dim_max[static_cast<std::size_t>(r.dimension - 1)];
    if (m <= 0.0) {
      // No item separates the classes in this dimension; the ratio is
      // undefined and reported as 0 with the degeneracy flag set.
      r.score = 0.0;
      r.degenerate = true;
      continue;
    }
    r.score = r.raw / m;
    if (r.raw == m) {
      r.score = 1.0;
      r.at_max = true;
      ++max_count[static_cast<std::size_t>(r.dimension - 1)];
    }
  }
  for (auto& r : report.rows) {
    if (r.at_max && max_count[static_cast<std::size_t>(r.dimension - 1)] > 1) {
      r.tied_max = true;
    }
  }
}

}  // namespace detail

// Discriminant power from an unconstrained fit: the range of the estimated
// success probabilities across classes, relative to the strongest item of
// the same dimension. Also carries the weighted mean/std of the success
// probabilities under the class weights.
inline DiscriminantReport discriminant_lc(const LcFit& fit, const DimensionPartition& partition) {
  if (partition.item_count() != fit.params.item_count()) {
    throw_usage("discriminant_lc: partition does not cover the fitted items");
  }
  DiscriminantReport report;
  report.source = DiscriminantSource::latent_class;
  report.dimension_count = partition.group_count();
  const auto& lambda = fit.params.success_probs;
  const auto& weights = fit.params.weights;
  const std::size_t k = static_cast<std::size_t>(fit.params.k);

  for (std::size_t j = 0; j < fit.params.item_count(); ++j) {
    DiscriminantRow row;
    row.index = static_cast<int>(j) + 1;
    row.dimension = partition.group_of(j + 1);
    double lo = lambda(j, 0), hi = lambda(j, 0);
    double mean = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      lo = std::min(lo, lambda(j, c));
      hi = std::max(hi, lambda(j, c));
      mean += lambda(j, c) * weights[c];
    }
    double var = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double dev = lambda(j, c) - mean;
      var += dev * dev * weights[c];
    }
    row.raw = hi - lo;
    row.mean = mean;
    row.sd = std::sqrt(var);
    report.rows.push_back(std::move(row));
  }
  detail::fill_relative_scores(report);
  return report;
}

// Discriminant power from the constrained fit: the estimated discrimination
// relative to the strongest item of the same dimension.
inline DiscriminantReport discriminant_2pl(const TwoPlFit& fit) {
  DiscriminantReport report;
  report.source = DiscriminantSource::twopl;
  report.dimension_count = fit.params.s;
  for (std::size_t j = 0; j < fit.params.item_count(); ++j) {
    DiscriminantRow row;
    row.index = static_cast<int>(j) + 1;
    row.dimension = fit.params.partition.group_of(j + 1);
    row.raw = fit.params.gamma[j];
    row.beta = fit.params.beta[j];
    report.rows.push_back(std::move(row));
  }
  detail::fill_relative_scores(report);
  return report;
}

inline void attach_codes(DiscriminantReport& report, const std::vector<ItemMeta>& items) {
  if (items.size() != report.rows.size()) {
    throw_usage("attach_codes: item metadata does not match the report");
  }
  for (std::size_t j = 0; j < items.size(); ++j) report.rows[j].code = items[j].code;
}

struct Selection {
  double threshold = 0.0;
  std::vector<int> kept;               // 1-based indices, ascending
  std::vector<int> per_dimension;      // counts, index d-1
  int overall = 0;
};

// Retains every item whose relative score is >= t; the boundary is
// inclusive so t = 1 keeps exactly the per-dimension maxima.
inline Selection apply_threshold(const DiscriminantReport& report, double t) {
  if (t < 0.0 || t > 1.0) throw_usage("apply_threshold: threshold must be in [0, 1]");
  Selection sel;
  sel.threshold = t;
  sel.per_dimension.assign(static_cast<std::size_t>(report.dimension_count), 0);
  for (const auto& r : report.rows) {
    if (r.score >= t) {
      sel.kept.push_back(r.index);
      ++sel.per_dimension[static_cast<std::size_t>(r.dimension - 1)];
      ++sel.overall;
    }
  }
  return sel;
}

struct SweepTable {
  std::vector<double> thresholds;
  std::vector<std::vector<int>> per_dimension;  // row per threshold
  std::vector<int> overall;
  int dimension_count = 0;
};

inline SweepTable threshold_sweep(const DiscriminantReport& report,
                                  const std::vector<double>& grid) {
  SweepTable table;
  table.dimension_count = report.dimension_count;
  for (double t : grid) {
    const Selection sel = apply_threshold(report, t);
    table.thresholds.push_back(t);
    table.per_dimension.push_back(sel.per_dimension);
    table.overall.push_back(sel.overall);
  }
  return table;
}

inline std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(static_cast<double>(i) / 10.0);
  return grid;
}

}  // namespace lcirt
