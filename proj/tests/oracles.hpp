#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <vector>

namespace cotig::test {

/// Selection computed from first principles: k* is the smallest subset size
/// whose best subset reaches tau (M when none does); a segment is in the
/// prefix when fewer than k* segments outrank it.
inline std::set<std::size_t> brute_force_selection(const std::vector<double>& normalized,
                                                   const std::vector<double>& consistency, double tau, double beta,
                                                   bool boundaries, std::size_t* k_star_out = nullptr) {
  const std::size_t m = normalized.size();
  std::size_t k_star = m;
  for (std::size_t k = 1; k <= m && k_star == m; ++k) {
    for (unsigned mask = 0; mask < (1u << m); ++mask) {
      if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
      std::vector<double> chosen;
      for (std::size_t i = 0; i < m; ++i) {
        if (mask & (1u << i)) chosen.push_back(normalized[i]);
      }
      std::sort(chosen.rbegin(), chosen.rend());
      double sum = 0.0;
      for (double v : chosen) sum += v;
      if (sum >= tau) {
        k_star = k;
        break;
      }
    }
  }
  if (k_star_out) *k_star_out = k_star;
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t outranked_by = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (normalized[j] > normalized[i] || (normalized[j] == normalized[i] && j < i)) ++outranked_by;
    }
    if (outranked_by < k_star && consistency[i] <= beta) out.insert(i);
  }
  if (boundaries) {
    out.insert(0);
    out.insert(m - 1);
  }
  return out;
}

}  // namespace cotig::test
