#include "aid_dti/pgm.hpp"

#include "aid_dti/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <vector>

namespace aid_dti {

PgmRange write_pgm(const std::string& path, std::span<const double> values, std::size_t rows, std::size_t cols) {
  if (values.size() != rows * cols || values.empty()) throw ValidationError("pgm: size mismatch");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  PgmRange r{*lo, *hi};
  std::vector<std::uint8_t> px(values.size(), 0);
  if (r.max > r.min)
    for (std::size_t i = 0; i < values.size(); ++i)
      px[i] = static_cast<std::uint8_t>(std::lround(255.0 * (values[i] - r.min) / (r.max - r.min)));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << cols << ' ' << rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!out) throw IoError("write failed: " + path);
  return r;
}

PgmRange write_pgm_with_range(const std::string& path, std::span<const double> values, std::size_t rows,
                              std::size_t cols) {
  const PgmRange r = write_pgm(path, values, rows, cols);
  std::ofstream side(path + ".range.txt", std::ios::trunc);
  if (!side) throw IoError("cannot write " + path + ".range.txt");
  char buf[128];
  std::snprintf(buf, sizeof buf, "min %.9g\nmax %.9g\n", r.min, r.max);
  side << buf;
  return r;
}

} // namespace aid_dti
