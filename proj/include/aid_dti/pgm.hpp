#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace aid_dti {

struct PgmRange {
  double min = 0.0, max = 0.0;
};

/// Binary P5 image, maxval 255, row-major. Values are mapped linearly from
/// [min, max] of the data onto 0..255; a constant image maps to all zeros.
/// Returns the range used.
PgmRange write_pgm(const std::string& path, std::span<const double> values, std::size_t rows, std::size_t cols);

/// write_pgm plus `<path>.range.txt` holding "min <v>\nmax <v>\n".
PgmRange write_pgm_with_range(const std::string& path, std::span<const double> values, std::size_t rows,
                              std::size_t cols);

} // namespace aid_dti
