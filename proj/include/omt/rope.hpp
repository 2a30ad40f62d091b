#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "omt/error.hpp"
#include "omt/matrix.hpp"

namespace omt {

struct RopeConfig {
  double theta = 5.0e7;
  std::size_t head_dim = 0;

  void validate() const {
    detail::require_config(theta > 0.0 && std::isfinite(theta), "rope theta must be positive");
    detail::require_config(head_dim > 0 && head_dim % 2 == 0, "rope head_dim must be even and positive");
  }
};

inline std::vector<double> rope_inverse_frequencies(const RopeConfig& cfg) {
  cfg.validate();
  std::vector<double> inv(cfg.head_dim / 2);
  for (std::size_t i = 0; i < inv.size(); ++i) {
    inv[i] = std::pow(cfg.theta, -2.0 * static_cast<double>(i) / static_cast<double>(cfg.head_dim));
  }
  return inv;
}

// Rotates each pair (x[2i], x[2i+1]) of row r by positions[r] * theta^(-2i/d).
inline Matrix apply_rope(const Matrix& x, std::span<const std::int64_t> positions, const RopeConfig& cfg) {
  detail::require_config(x.cols == cfg.head_dim, "matrix width does not match rope head_dim");
  detail::require_input(positions.size() == x.rows, "need one position per row");
  const auto inv = rope_inverse_frequencies(cfg);
  Matrix out(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    detail::require_input(positions[r] >= 0, "positions must be non-negative");
    const double pos = static_cast<double>(positions[r]);
    for (std::size_t i = 0; i < inv.size(); ++i) {
      const double angle = pos * inv[i];
      const double c = std::cos(angle), s = std::sin(angle);
      const double a = x(r, 2 * i), b = x(r, 2 * i + 1);
      out(r, 2 * i) = a * c - b * s;
      out(r, 2 * i + 1) = a * s + b * c;
    }
  }
  return out;
}

}  // namespace omt
