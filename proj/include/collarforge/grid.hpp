#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "collarforge/errors.hpp"

namespace collarforge {

// Coordinates and metric coefficients for dimensions n <= 3. Bounded dynamic
// sizes keep everything on the stack while staying generic in n.
using VecN = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using MatN = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

using MultiIndex = std::vector<int>;

// Regular node lattice over an axis-aligned box. Nodes are inclusive of both
// box ends: node_i = lo + i * (hi - lo) / (res - 1).
struct GridLayout {
  VecN lo;
  VecN hi;
  std::vector<int> res;

  int dim() const { return static_cast<int>(res.size()); }

  double spacing(int axis) const {
    return (hi[axis] - lo[axis]) / (res[axis] - 1);
  }

  double min_spacing() const {
    double h = spacing(0);
    for (int a = 1; a < dim(); ++a) h = std::min(h, spacing(a));
    return h;
  }

  std::size_t size() const {
    std::size_t s = 1;
    for (int r : res) s *= static_cast<std::size_t>(r);
    return s;
  }

  std::size_t flat(const MultiIndex& idx) const {
    std::size_t f = 0;
    for (int a = 0; a < dim(); ++a) f = f * res[a] + idx[a];
    return f;
  }

  MultiIndex unflat(std::size_t f) const {
    MultiIndex idx(res.size());
    for (int a = dim() - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(f % res[a]);
      f /= res[a];
    }
    return idx;
  }

  VecN node(const MultiIndex& idx) const {
    VecN x(dim());
    for (int a = 0; a < dim(); ++a) x[a] = lo[a] + idx[a] * spacing(a);
    return x;
  }

  bool contains(const VecN& x, double pad = 0.0) const {
    for (int a = 0; a < dim(); ++a)
      if (x[a] < lo[a] - pad || x[a] > hi[a] + pad) return false;
    return true;
  }

  // Distance to the nearest box face, in units of that axis' spacing.
  // Negative once outside.
  double margin(const VecN& x) const {
    double m = std::numeric_limits<double>::infinity();
    for (int a = 0; a < dim(); ++a) {
      double h = spacing(a);
      m = std::min(m, std::min(x[a] - lo[a], hi[a] - x[a]) / h);
    }
    return m;
  }

  MultiIndex nearest_node(const VecN& x) const {
    MultiIndex idx(res.size());
    for (int a = 0; a < dim(); ++a) {
      int i = static_cast<int>(std::lround((x[a] - lo[a]) / spacing(a)));
      idx[a] = std::clamp(i, 0, res[a] - 1);
    }
    return idx;
  }
};

inline void for_each_node(const GridLayout& layout,
                          const std::function<void(const MultiIndex&)>& fn) {
  MultiIndex idx(layout.res.size(), 0);
  const int d = layout.dim();
  while (true) {
    fn(idx);
    int a = d - 1;
    while (a >= 0 && ++idx[a] == layout.res[a]) idx[a--] = 0;
    if (a < 0) break;
  }
}

// Sampled field of T over a GridLayout, with multilinear interpolation
// between nodes. T needs scalar multiplication and addition.
template <class T>
struct GridField {
  GridLayout layout;
  std::vector<T> values;

  GridField() = default;
  explicit GridField(GridLayout l) : layout(std::move(l)) {
    values.resize(layout.size());
  }

  const T& at(const MultiIndex& idx) const { return values[layout.flat(idx)]; }
  T& at(const MultiIndex& idx) { return values[layout.flat(idx)]; }

  T interpolate(const VecN& x) const {
    const int d = layout.dim();
    MultiIndex base(d);
    double w[3];
    for (int a = 0; a < d; ++a) {
      double u = (x[a] - layout.lo[a]) / layout.spacing(a);
      int i = static_cast<int>(std::floor(u));
      i = std::clamp(i, 0, layout.res[a] - 2);
      base[a] = i;
      w[a] = std::clamp(u - i, 0.0, 1.0);
    }
    T acc{};
    bool first = true;
    MultiIndex corner(d);
    const int corners = 1 << d;
    for (int c = 0; c < corners; ++c) {
      double wt = 1.0;
      for (int a = 0; a < d; ++a) {
        int bit = (c >> a) & 1;
        corner[a] = base[a] + bit;
        wt *= bit ? w[a] : (1.0 - w[a]);
      }
      if (wt == 0.0) continue;
      T term = at(corner);
      term = term * wt;
      if (first) {
        acc = term;
        first = false;
      } else {
        acc = acc + term;
      }
    }
    return acc;
  }
};

// Flat-storage tensor of arbitrary rank over indices 0..n-1. Rank stays small
// (<= 4 + derivative order) so sizes are tiny.
struct Tensor {
  int n = 0;
  int rank = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int n_, int rank_) : n(n_), rank(rank_) {
    std::size_t s = 1;
    for (int r = 0; r < rank; ++r) s *= static_cast<std::size_t>(n);
    v.assign(s, 0.0);
  }

  std::size_t flat(const MultiIndex& idx) const {
    std::size_t f = 0;
    for (int r = 0; r < rank; ++r) f = f * n + idx[r];
    return f;
  }
  double operator()(const MultiIndex& idx) const { return v[flat(idx)]; }
  double& operator()(const MultiIndex& idx) { return v[flat(idx)]; }
};

inline void for_each_tensor_index(int n, int rank,
                                  const std::function<void(const MultiIndex&)>& fn) {
  MultiIndex idx(rank, 0);
  if (rank == 0) {
    fn(idx);
    return;
  }
  while (true) {
    fn(idx);
    int r = rank - 1;
    while (r >= 0 && ++idx[r] == n) idx[r--] = 0;
    if (r < 0) break;
  }
}

}  // namespace collarforge
