#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <cstddef>
#include <vector>

#include "hcbm/datagen.hpp"

namespace hcbm::testing {

struct ChiSquareResult {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

/// Pearson chi-square test of independence between concept bit `bit` and
/// the class label over `records`.
inline ChiSquareResult concept_class_independence(
    const std::vector<datagen::SampleRecord>& records, std::size_t bit, int num_classes) {
  std::vector<std::array<double, 2>> table(static_cast<std::size_t>(num_classes), {0.0, 0.0});
  for (const auto& r : records) {
    table[static_cast<std::size_t>(r.class_index)][r.concepts[bit] ? 1 : 0] += 1.0;
  }
  const double n = static_cast<double>(records.size());
  std::array<double, 2> col{0.0, 0.0};
  std::vector<double> row(table.size(), 0.0);
  for (std::size_t c = 0; c < table.size(); ++c) {
    for (int v = 0; v < 2; ++v) {
      row[c] += table[c][static_cast<std::size_t>(v)];
      col[static_cast<std::size_t>(v)] += table[c][static_cast<std::size_t>(v)];
    }
  }
  ChiSquareResult res;
  for (std::size_t c = 0; c < table.size(); ++c) {
    for (std::size_t v = 0; v < 2; ++v) {
      const double expected = row[c] * col[v] / n;
      if (expected > 0.0) {
        const double d = table[c][v] - expected;
        res.statistic += d * d / expected;
      }
    }
  }
  res.dof = static_cast<double>(num_classes - 1);
  boost::math::chi_squared dist(res.dof);
  res.p_value = boost::math::cdf(boost::math::complement(dist, res.statistic));
  return res;
}

}  // namespace hcbm::testing
