#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lcirt/error.hpp"
#include "lcirt/matrix.hpp"

namespace lcirt {

struct ItemMeta {
  int index = 0;              // 1-based position within the current matrix
  std::string code;           // short stable label, e.g. "CC1"
  std::string description;    // free text, optional
  int initial_dimension = 0;  // 1-based group index; 0 until a partition is attached
};

// Immutable n x J matrix of binary responses plus item metadata. All
// estimators share const references to one instance.
class ResponseMatrix {
 public:
  ResponseMatrix() = default;

  ResponseMatrix(std::vector<std::uint8_t> values, std::size_t n,
                 std::vector<ItemMeta> items)
      : n_(n), items_(std::move(items)), values_(std::move(values)) {
    j_ = items_.size();
    if (n_ < 1 || j_ < 1) throw_data("response matrix must have n >= 1 and J >= 1");
    if (values_.size() != n_ * j_) throw_data("response matrix storage size mismatch");
    for (std::size_t p = 0; p < values_.size(); ++p) {
      if (values_[p] > 1) {
        throw_data("response value out of {0,1} at row " +
                   std::to_string(p / j_ + 1) + ", column " + std::to_string(p % j_ + 1));
      }
    }
    std::set<std::string> codes;
    for (std::size_t j = 0; j < j_; ++j) {
      if (items_[j].index != static_cast<int>(j) + 1) {
        throw_data("item indices must be contiguous 1..J");
      }
      if (items_[j].code.empty()) throw_data("item code must be non-empty");
      if (!codes.insert(items_[j].code).second) {
        throw_data("duplicate item code '" + items_[j].code + "'");
      }
    }
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t item_count() const noexcept { return j_; }

  int at(std::size_t i, std::size_t j) const { return values_[i * j_ + j]; }
  const std::uint8_t* row(std::size_t i) const { return values_.data() + i * j_; }

  const std::vector<ItemMeta>& items() const noexcept { return items_; }
  const std::vector<std::uint8_t>& values() const noexcept { return values_; }

  double column_mean(std::size_t j) const {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) s += at(i, j);
    return s / static_cast<double>(n_);
  }

  bool operator==(const ResponseMatrix& o) const {
    if (n_ != o.n_ || j_ != o.j_ || values_ != o.values_) return false;
    for (std::size_t j = 0; j < j_; ++j) {
      if (items_[j].code != o.items_[j].code) return false;
    }
    return true;
  }

 private:
  std::size_t n_ = 0, j_ = 0;
  std::vector<ItemMeta> items_;
  std::vector<std::uint8_t> values_;  // row-major
};

// Assignment of each item to exactly one of s groups (1-based on both sides).
class DimensionPartition {
 public:
  DimensionPartition() = default;

  DimensionPartition(int s, std::vector<int> assignment)
      : s_(s), assignment_(std::move(assignment)) {
    if (s_ < 1) throw_data("partition needs at least one group");
    std::vector<int> count(static_cast<std::size_t>(s_), 0);
    for (std::size_t j = 0; j < assignment_.size(); ++j) {
      const int d = assignment_[j];
      if (d < 1 || d > s_) {
        throw_data("item " + std::to_string(j + 1) + " assigned to group " +
                   std::to_string(d) + " outside 1.." + std::to_string(s_));
      }
      ++count[static_cast<std::size_t>(d - 1)];
    }
    for (int d = 1; d <= s_; ++d) {
      if (count[static_cast<std::size_t>(d - 1)] == 0) {
        throw_data("group " + std::to_string(d) + " has no items");
      }
    }
  }

  int group_count() const noexcept { return s_; }
  std::size_t item_count() const noexcept { return assignment_.size(); }

  // 1-based item index -> 1-based group index.
  int group_of(std::size_t item_index1) const {
    return assignment_[item_index1 - 1];
  }

  const std::vector<int>& assignment() const noexcept { return assignment_; }

  std::vector<int> items_in_group(int d) const {
    std::vector<int> out;
    for (std::size_t j = 0; j < assignment_.size(); ++j) {
      if (assignment_[j] == d) out.push_back(static_cast<int>(j) + 1);
    }
    return out;
  }

  // J x s dummy matrix: delta(j,d) = 1 iff item j belongs to group d.
  Matrix to_delta() const {
    Matrix delta(assignment_.size(), static_cast<std::size_t>(s_), 0.0);
    for (std::size_t j = 0; j < assignment_.size(); ++j) {
      delta(j, static_cast<std::size_t>(assignment_[j] - 1)) = 1.0;
    }
    return delta;
  }

  static DimensionPartition from_delta(const Matrix& delta) {
    std::vector<int> assignment(delta.rows(), 0);
    for (std::size_t j = 0; j < delta.rows(); ++j) {
      int hit = 0;
      for (std::size_t d = 0; d < delta.cols(); ++d) {
        if (delta(j, d) == 1.0) {
          assignment[j] = static_cast<int>(d) + 1;
          ++hit;
        } else if (delta(j, d) != 0.0) {
          throw_data("dummy matrix entries must be 0 or 1");
        }
      }
      if (hit != 1) throw_data("each dummy-matrix row must contain exactly one 1");
    }
    return DimensionPartition(static_cast<int>(delta.cols()), std::move(assignment));
  }

  bool operator==(const DimensionPartition& o) const {
    return s_ == o.s_ && assignment_ == o.assignment_;
  }

 private:
  int s_ = 0;
  std::vector<int> assignment_;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace detail

// Response CSV: first row is item codes, one subject per following row,
// cells strictly "0" or "1".
inline ResponseMatrix load_response_csv(const std::string& path,
                                        const std::vector<std::string>& expected_codes = {}) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open response file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw_data("empty response file '" + path + "'");
  const auto codes = detail::split_csv_line(line);
  if (codes.empty()) throw_data("response file '" + path + "' has an empty header");
  if (!expected_codes.empty() && codes != expected_codes) {
    throw_data("response file '" + path + "' header does not match the expected item codes");
  }
  std::vector<ItemMeta> items(codes.size());
  for (std::size_t j = 0; j < codes.size(); ++j) {
    items[j].index = static_cast<int>(j) + 1;
    items[j].code = codes[j];
  }

  std::vector<std::uint8_t> values;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    ++n;
    if (cells.size() != codes.size()) {
      throw_data("row " + std::to_string(n) + " has " + std::to_string(cells.size()) +
                 " cells, expected " + std::to_string(codes.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      // Strict integer 0/1; no truthy coercion.
      if (cells[j] == "0") {
        values.push_back(0);
      } else if (cells[j] == "1") {
        values.push_back(1);
      } else {
        throw_data("non-binary cell '" + cells[j] + "' at row " + std::to_string(n) +
                   ", column " + std::to_string(j + 1) + " (item " + codes[j] + ")");
      }
    }
  }
  if (n == 0) throw_data("response file '" + path + "' has no subject rows");
  return ResponseMatrix(std::move(values), n, std::move(items));
}

inline void save_response_csv(const ResponseMatrix& data, std::ostream& out) {
  for (std::size_t j = 0; j < data.item_count(); ++j) {
    out << (j ? "," : "") << data.items()[j].code;
  }
  out << '\n';
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (std::size_t j = 0; j < data.item_count(); ++j) {
      out << (j ? "," : "") << data.at(i, j);
    }
    out << '\n';
  }
}

inline void save_response_csv(const ResponseMatrix& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw_data("cannot write '" + path + "'");
  save_response_csv(data, out);
}

// Partition CSV: header "item_code,group_index", one row per item.
inline DimensionPartition load_partition_csv(const std::string& path,
                                             const std::vector<ItemMeta>& items) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open partition file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw_data("empty partition file '" + path + "'");
  if (detail::trim(line) != "item_code,group_index") {
    throw_data("partition file must start with the header 'item_code,group_index'");
  }

  std::map<std::string, std::size_t> by_code;
  for (std::size_t j = 0; j < items.size(); ++j) by_code[items[j].code] = j;

  std::vector<int> assignment(items.size(), 0);
  std::size_t row = 1;
  int max_group = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 2) {
      throw_data("partition row " + std::to_string(row) + " must have exactly two cells");
    }
    const auto it = by_code.find(cells[0]);
    if (it == by_code.end()) {
      throw_data("partition row " + std::to_string(row) + " names unknown item '" +
                 cells[0] + "'");
    }
    int g = 0;
    try {
      std::size_t pos = 0;
      g = std::stoi(cells[1], &pos);
      if (pos != cells[1].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw_data("partition row " + std::to_string(row) + " has a non-integer group '" +
                 cells[1] + "'");
    }
    if (g < 1) throw_data("group indices must be >= 1 (row " + std::to_string(row) + ")");
    if (assignment[it->second] != 0) {
      throw_data("item '" + cells[0] + "' assigned more than once");
    }
    assignment[it->second] = g;
    max_group = std::max(max_group, g);
  }
  for (std::size_t j = 0; j < items.size(); ++j) {
    if (assignment[j] == 0) {
      throw_data("item '" + items[j].code + "' received no group assignment");
    }
  }
  // The constructor rejects any empty group in 1..max_group.
  return DimensionPartition(max_group, std::move(assignment));
}

inline void save_partition_csv(const DimensionPartition& partition,
                               const std::vector<ItemMeta>& items, std::ostream& out) {
  out << "item_code,group_index\n";
  for (std::size_t j = 0; j < items.size(); ++j) {
    out << items[j].code << ',' << partition.group_of(j + 1) << '\n';
  }
}

// Copies group assignments into the item metadata.
inline std::vector<ItemMeta> annotate_dimensions(std::vector<ItemMeta> items,
                                                 const DimensionPartition& partition) {
  if (items.size() != partition.item_count()) {
    throw_data("partition covers " + std::to_string(partition.item_count()) +
               " items, metadata has " + std::to_string(items.size()));
  }
  for (std::size_t j = 0; j < items.size(); ++j) {
    items[j].initial_dimension = partition.group_of(j + 1);
  }
  return items;
}

// Column subset. `keep` holds 1-based item indices; output columns are in
// ascending original order, items renumbered 1..J', codes preserved.
inline ResponseMatrix restrict(const ResponseMatrix& data, std::vector<int> keep) {
  if (keep.empty()) throw_data("restrict: keep set must be nonempty");
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  for (int j : keep) {
    if (j < 1 || j > static_cast<int>(data.item_count())) {
      throw_data("restrict: item index " + std::to_string(j) + " out of range 1.." +
                 std::to_string(data.item_count()));
    }
  }
  std::vector<ItemMeta> items;
  items.reserve(keep.size());
  for (std::size_t p = 0; p < keep.size(); ++p) {
    ItemMeta m = data.items()[static_cast<std::size_t>(keep[p] - 1)];
    m.index = static_cast<int>(p) + 1;
    items.push_back(std::move(m));
  }
  std::vector<std::uint8_t> values;
  values.reserve(data.n() * keep.size());
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (int j : keep) {
      values.push_back(static_cast<std::uint8_t>(data.at(i, static_cast<std::size_t>(j - 1))));
    }
  }
  return ResponseMatrix(std::move(values), data.n(), std::move(items));
}

// Partition restricted to a kept-item subset. Groups left empty by the
// restriction are dropped and the remaining ones renumbered in order.
inline DimensionPartition restrict_partition(const DimensionPartition& partition,
                                             const std::vector<int>& keep_sorted) {
  std::vector<int> groups;
  for (int j : keep_sorted) groups.push_back(partition.group_of(static_cast<std::size_t>(j)));
  std::vector<int> present = groups;
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());
  std::map<int, int> renum;
  for (std::size_t i = 0; i < present.size(); ++i) renum[present[i]] = static_cast<int>(i) + 1;
  for (auto& g : groups) g = renum[g];
  return DimensionPartition(static_cast<int>(present.size()), std::move(groups));
}

}  // namespace lcirt
