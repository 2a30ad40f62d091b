#pragma once

// Float64 matrix files: raw little-endian doubles, row-major, plus a JSON
// sidecar (<file>.json) carrying shape, dtype and the generating seed.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "omt/error.hpp"
#include "omt/matrix.hpp"

namespace omt::io {

struct Golden {
  nlohmann::json meta;
  Matrix matrix;
};

inline std::filesystem::path sidecar_of(const std::filesystem::path& p) {
  auto s = p;
  s += ".json";
  return s;
}

inline void write_golden(const std::filesystem::path& path, const Matrix& m, nlohmann::json meta) {
  static_assert(std::endian::native == std::endian::little, "golden files assume a little-endian host");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(m.data.data()), static_cast<std::streamsize>(m.data.size() * sizeof(double)));
  meta["shape"] = {m.rows, m.cols};
  meta["dtype"] = "float64-le";
  std::ofstream side(sidecar_of(path));
  side << meta.dump(2) << '\n';
}

inline Golden read_golden(const std::filesystem::path& path) {
  std::ifstream side(sidecar_of(path));
  detail::require_input(static_cast<bool>(side), "missing sidecar for " + path.string());
  Golden g;
  g.meta = nlohmann::json::parse(side);
  detail::require_input(g.meta.value("dtype", "") == "float64-le", "unsupported golden dtype");
  const auto rows = g.meta.at("shape").at(0).get<std::size_t>(), cols = g.meta.at("shape").at(1).get<std::size_t>();
  g.matrix = Matrix(rows, cols);
  std::ifstream in(path, std::ios::binary);
  detail::require_input(static_cast<bool>(in), "cannot read " + path.string());
  in.read(reinterpret_cast<char*>(g.matrix.data.data()), static_cast<std::streamsize>(rows * cols * sizeof(double)));
  detail::require_input(in.gcount() == static_cast<std::streamsize>(rows * cols * sizeof(double)), "golden file truncated");
  return g;
}

}  // namespace omt::io
