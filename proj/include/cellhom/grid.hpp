#ifndef CELLHOM_GRID_HPP
#define CELLHOM_GRID_HPP

#include "cellhom/common.hpp"

#include <cstdint>
#include <vector>

namespace cellhom {

// Uniform n^d grid over the period-1 torus; cell i covers
// [i/n, (i+1)/n) in each direction, centers at (i+1/2)/n.
struct GridShape {
  int d = 0;
  int n = 0;

  std::size_t cell_count() const {
    std::size_t c = 1;
    for (int i = 0; i < d; ++i) c *= static_cast<std::size_t>(n);
    return c;
  }

  std::size_t flatten(const std::vector<int>& idx) const {
    std::size_t f = 0;
    for (int i = 0; i < d; ++i) f = f * static_cast<std::size_t>(n) + static_cast<std::size_t>(idx[i]);
    return f;
  }

  std::vector<int> unflatten(std::size_t f) const {
    std::vector<int> idx(d);
    for (int i = d - 1; i >= 0; --i) {
      idx[i] = static_cast<int>(f % static_cast<std::size_t>(n));
      f /= static_cast<std::size_t>(n);
    }
    return idx;
  }

  Vec center(std::size_t f) const {
    auto idx = unflatten(f);
    Vec x(d);
    for (int i = 0; i < d; ++i) x[i] = (idx[i] + 0.5) / n;
    return x;
  }

  std::size_t cell_of(const Vec& y) const {
    std::vector<int> idx(d);
    for (int i = 0; i < d; ++i) {
      int c = static_cast<int>(std::floor(wrap01(y[i]) * n));
      if (c == n) c = 0;  // wrap01 can return values that round up at 1-ulp
      idx[i] = c;
    }
    return flatten(idx);
  }

  bool operator==(const GridShape& o) const { return d == o.d && n == o.n; }
};

struct BoolGrid {
  GridShape shape;
  std::vector<std::uint8_t> cells;  // 0/1

  explicit BoolGrid(GridShape s = {}) : shape(s), cells(s.cell_count(), 0) {}
  bool test(std::size_t i) const { return cells[i] != 0; }
  void set(std::size_t i, bool v) { cells[i] = v ? 1 : 0; }
  std::size_t count() const {
    std::size_t c = 0;
    for (auto v : cells) c += v;
    return c;
  }
  bool subset_of(const BoolGrid& other) const {
    if (!(shape == other.shape)) return false;
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (cells[i] && !other.cells[i]) return false;
    return true;
  }
};

}  // namespace cellhom

#endif
