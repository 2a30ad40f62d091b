#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "omt/error.hpp"

namespace omt {

// ceil(fraction * n) that ignores representation noise in the product
// (0.1 * 3000 is not exactly 300 in binary floating point).
inline std::int64_t ceil_fraction(double fraction, std::int64_t n) {
  const long double p = static_cast<long double>(fraction) * static_cast<long double>(n);
  const long double nearest = std::round(p);
  if (std::abs(p - nearest) <= 1e-9L * std::max<long double>(1.0L, std::abs(p))) {
    return static_cast<std::int64_t>(nearest);
  }
  return static_cast<std::int64_t>(std::ceil(p));
}

// Integer apportionment of total by fractions: floors first, then the
// leftover units go to the largest fractional parts (lower index on ties).
// The result always sums to total.
inline std::vector<std::int64_t> largest_remainder(const std::vector<double>& fractions, std::int64_t total) {
  detail::require_input(total >= 0, "apportionment total must be non-negative");
  std::vector<std::int64_t> out(fractions.size());
  std::vector<long double> rem(fractions.size());
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const long double exact = static_cast<long double>(fractions[i]) * static_cast<long double>(total);
    out[i] = static_cast<std::int64_t>(std::floor(exact));
    rem[i] = exact - static_cast<long double>(out[i]);
    assigned += out[i];
  }
  std::vector<std::size_t> order(fractions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  std::int64_t left = total - assigned;
  for (std::size_t i = 0; left > 0 && !order.empty(); i = (i + 1) % order.size(), --left) ++out[order[i]];
  for (std::size_t i = 0; left < 0; i = (i + 1) % order.size()) {
    // Only reachable when fractions sum above 1 by rounding noise.
    const std::size_t j = order[order.size() - 1 - i];
    if (out[j] > 0) {
      --out[j];
      ++left;
    }
  }
  return out;
}

}  // namespace omt
