#pragma once

#include <cmath>

#include "motionrag/nn.hpp"

namespace motionrag {

// Classic transformer sinusoid: row p, column 2i  -> sin(p / base^(2i/d)),
// column 2i+1 -> cos with the same wavelength.
template <class S>
nn::Mat<S> sinusoid_table(int n_pos, int d, double base = 10000.0) {
  nn::Mat<S> t(n_pos, d);
  for (int p = 0; p < n_pos; ++p) {
    for (int i = 0; i < d; i += 2) {
      const double w = std::pow(base, -static_cast<double>(i) / d);
      t(p, i) = static_cast<S>(std::sin(p * w));
      if (i + 1 < d) t(p, i + 1) = static_cast<S>(std::cos(p * w));
    }
  }
  return t;
}

// Writes the encoding of `pos` into row `row`, columns [col0, col0+width).
template <class S>
void add_sinusoid_slice(nn::Mat<S>& m, int row, int col0, int width, int pos,
                        double base = 10000.0) {
  for (int i = 0; i < width; i += 2) {
    const double w = std::pow(base, -static_cast<double>(i) / width);
    m(row, col0 + i) += static_cast<S>(std::sin(pos * w));
    if (i + 1 < width) m(row, col0 + i + 1) += static_cast<S>(std::cos(pos * w));
  }
}

}  // namespace motionrag
