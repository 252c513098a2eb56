#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "lcirt/data.hpp"

namespace lcirt {

// Observed response configurations with their frequencies. Deterministic
// (lexicographic) ordering.
using PatternTable = std::map<std::vector<std::uint8_t>, long long>;

inline PatternTable pattern_table(const ResponseMatrix& data) {
  PatternTable table;
  if (data.item_count() <= 64) {
    // Dense variant: pack each row into one word before grouping.
    std::map<std::uint64_t, long long> packed;
    for (std::size_t i = 0; i < data.n(); ++i) {
      std::uint64_t key = 0;
      for (std::size_t j = 0; j < data.item_count(); ++j) {
        key |= static_cast<std::uint64_t>(data.at(i, j)) << j;
      }
      ++packed[key];
    }
    for (const auto& [key, count] : packed) {
      std::vector<std::uint8_t> row(data.item_count());
      for (std::size_t j = 0; j < data.item_count(); ++j) {
        row[j] = static_cast<std::uint8_t>((key >> j) & 1u);
      }
      table.emplace(std::move(row), count);
    }
  } else {
    for (std::size_t i = 0; i < data.n(); ++i) {
      std::vector<std::uint8_t> row(data.row(i), data.row(i) + data.item_count());
      ++table[row];
    }
  }
  return table;
}

namespace detail {

// Data collapsed to unique patterns; EM cost then scales with the number of
// distinct configurations rather than with n.
struct CollapsedData {
  std::size_t n = 0;
  std::size_t j = 0;
  std::vector<std::uint8_t> patterns;    // g-major, g in 0..g_count-1
  std::vector<double> weights;           // observed frequency per pattern
  std::vector<std::size_t> subject_map;  // subject -> pattern row

  std::size_t pattern_count() const { return weights.size(); }
  const std::uint8_t* row(std::size_t g) const { return patterns.data() + g * j; }
};

inline CollapsedData collapse(const ResponseMatrix& data) {
  CollapsedData out;
  out.n = data.n();
  out.j = data.item_count();
  std::map<std::vector<std::uint8_t>, std::size_t> index;
  out.subject_map.resize(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    std::vector<std::uint8_t> row(data.row(i), data.row(i) + out.j);
    auto [it, inserted] = index.emplace(std::move(row), index.size());
    if (inserted) {
      out.patterns.insert(out.patterns.end(), data.row(i), data.row(i) + out.j);
      out.weights.push_back(0.0);
    }
    out.subject_map[i] = it->second;
    out.weights[it->second] += 1.0;
  }
  return out;
}

}  // namespace detail
}  // namespace lcirt
