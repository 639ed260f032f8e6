#pragma once

#include <cstddef>
#include <vector>

#include "ciuseq/rng.hpp"

namespace ciuseq {

// Minimal dense row-major matrix; just enough for the desk-scale encoder.
template <typename S>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<S> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), S{0}) {}

  S& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  const S& operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  const S* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
  S* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }

  std::size_t size() const { return a.size(); }

  void fill(S v) { a.assign(a.size(), v); }

  static Mat randn(int r, int c, double stddev, Rng& rng) {
    Mat m(r, c);
    for (auto& v : m.a) v = static_cast<S>(rng.normal() * stddev);
    return m;
  }

  friend bool operator==(const Mat&, const Mat&) = default;
};

// y += M x  (M: rows x cols, x: cols, y: rows)
template <typename S>
void matvec_add(const Mat<S>& m, const S* x, S* y) {
  for (int r = 0; r < m.rows; ++r) {
    S acc{0};
    const S* row = m.row(r);
    for (int c = 0; c < m.cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

// y += M^T x  (x: rows, y: cols)
template <typename S>
void matvec_transpose_add(const Mat<S>& m, const S* x, S* y) {
  for (int r = 0; r < m.rows; ++r) {
    const S* row = m.row(r);
    const S xr = x[r];
    for (int c = 0; c < m.cols; ++c) y[c] += row[c] * xr;
  }
}

}  // namespace ciuseq
