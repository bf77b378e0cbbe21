#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <queue>
#include <sstream>

#include "collarforge/manifold.hpp"

namespace collarforge {

// ---------------------------------------------------------------------------
// Christoffel symbols stored per node, interpolated between nodes.
// ---------------------------------------------------------------------------

struct ChrisVal {
  int n = 0;
  std::array<double, 27> v{};  // Gamma^i_{jk}, strides n^2, n, 1

  double at(int i, int j, int k) const { return v[(i * n + j) * n + k]; }
  double& at(int i, int j, int k) { return v[(i * n + j) * n + k]; }

  ChrisVal operator*(double s) const {
    ChrisVal r = *this;
    for (auto& x : r.v) x *= s;
    return r;
  }
  ChrisVal operator+(const ChrisVal& o) const {
    ChrisVal r = *this;
    for (std::size_t i = 0; i < v.size(); ++i) r.v[i] += o.v[i];
    return r;
  }
  VecN apply(const VecN& a, const VecN& b) const {
    VecN out = VecN::Zero(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) out[i] += at(i, j, k) * a[j] * b[k];
    return out;
  }
};

namespace fd {

// Scalar-field derivative along one axis at a node: second-order central
// inside, second-order one-sided at the grid edge.
inline double scalar_daxis(const GridField<double>& f, const MultiIndex& idx,
                           int axis) {
  const GridLayout& L = f.layout;
  double h = L.spacing(axis);
  MultiIndex a = idx, b = idx;
  if (idx[axis] == 0) {
    MultiIndex c = idx;
    a[axis] = 1;
    c[axis] = 2;
    return (-3.0 * f.at(idx) + 4.0 * f.at(a) - f.at(c)) / (2.0 * h);
  }
  if (idx[axis] == L.res[axis] - 1) {
    MultiIndex c = idx;
    a[axis] = idx[axis] - 1;
    c[axis] = idx[axis] - 2;
    return (3.0 * f.at(idx) - 4.0 * f.at(a) + f.at(c)) / (2.0 * h);
  }
  a[axis] = idx[axis] + 1;
  b[axis] = idx[axis] - 1;
  return (f.at(a) - f.at(b)) / (2.0 * h);
}

// Coordinate gradient of a sampled scalar field at a node.
inline VecN scalar_gradient(const GridField<double>& f, const MultiIndex& idx) {
  const int n = f.layout.dim();
  VecN g(n);
  for (int a = 0; a < n; ++a) g[a] = scalar_daxis(f, idx, a);
  return g;
}

// Metric derivative along one axis at a node: second-order central inside,
// second-order one-sided at the grid edge.
inline MatN metric_daxis(const GridField<MatN>& g, const MultiIndex& idx,
                         int axis) {
  const GridLayout& L = g.layout;
  double h = L.spacing(axis);
  MultiIndex a = idx, b = idx;
  if (idx[axis] == 0) {
    MultiIndex c = idx;
    a[axis] = 1;
    c[axis] = 2;
    return (-3.0 * g.at(idx) + 4.0 * g.at(a) - g.at(c)) / (2.0 * h);
  }
  if (idx[axis] == L.res[axis] - 1) {
    MultiIndex c = idx;
    a[axis] = idx[axis] - 1;
    c[axis] = idx[axis] - 2;
    return (3.0 * g.at(idx) - 4.0 * g.at(a) + g.at(c)) / (2.0 * h);
  }
  a[axis] = idx[axis] + 1;
  b[axis] = idx[axis] - 1;
  return (g.at(a) - g.at(b)) / (2.0 * h);
}

inline ChrisVal christoffel_at_node(const GridField<MatN>& g,
                                    const MultiIndex& idx) {
  const int n = g.layout.dim();
  MatN ginv = g.at(idx).inverse();
  std::vector<MatN> dg(n);
  for (int a = 0; a < n; ++a) dg[a] = metric_daxis(g, idx, a);
  ChrisVal c;
  c.n = n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        double s = 0.0;
        for (int l = 0; l < n; ++l)
          s += ginv(i, l) * (dg[j](l, k) + dg[k](j, l) - dg[l](j, k));
        c.at(i, j, k) = 0.5 * s;
      }
  return c;
}

}  // namespace fd

// ---------------------------------------------------------------------------
// Curvature reports
// ---------------------------------------------------------------------------

struct CurvatureReport {
  VecN point;                          // node the stencil was centred on
  ChrisVal christoffel;                // Gamma^i_{jk}
  Tensor rm;                           // R_{ijkl}, all indices lowered
  std::vector<double> nabla_rm_norms;  // |nabla^l Rm|_g for l = 0..k
  double stencil_spacing = 0.0;
};

struct SecondFundamentalForm {
  VecN point;
  MatN ii;                             // (n-1)x(n-1), inward-normal convention
  std::vector<double> nabla_ii_norms;  // |nabla^l II| for l = 0..k
  VecN inward_normal;                  // unit g-norm, positive collar component
};

namespace detail {

using NodeTensorFn = std::function<Tensor(const MultiIndex&)>;

// Covariant derivative of a lowered tensor field given as a node evaluator.
// The derivative index is appended last: (nabla T)_{I,m}.
inline Tensor covariant_derivative(const GridField<MatN>& g,
                                   const NodeTensorFn& base, int rank,
                                   const MultiIndex& idx) {
  const int n = g.layout.dim();
  Tensor out(n, rank + 1);
  Tensor center = base(idx);
  ChrisVal gamma = fd::christoffel_at_node(g, idx);
  for (int m = 0; m < n; ++m) {
    MultiIndex up = idx, dn = idx;
    up[m] += 1;
    dn[m] -= 1;
    Tensor tu = base(up), td = base(dn);
    double h2 = 2.0 * g.layout.spacing(m);
    for_each_tensor_index(n, rank, [&](const MultiIndex& I) {
      double val = (tu(I) - td(I)) / h2;
      // -Gamma^p_{m i_s} T_{.. p ..} for each slot s
      for (int s = 0; s < rank; ++s) {
        MultiIndex J = I;
        for (int p = 0; p < n; ++p) {
          J[s] = p;
          val -= gamma.at(p, m, I[s]) * center(J);
        }
        J[s] = I[s];
      }
      MultiIndex O = I;
      O.push_back(m);
      out(O) = val;
    });
  }
  return out;
}

// Riemann tensor, all indices lowered, at a node (2-wide stencil).
inline Tensor riemann_at_node(const GridField<MatN>& g, const MultiIndex& idx) {
  const int n = g.layout.dim();
  ChrisVal gamma = fd::christoffel_at_node(g, idx);
  // dGamma[m] = d_m Gamma at idx (central differences of nodal Gamma)
  std::vector<ChrisVal> dgamma(n);
  for (int m = 0; m < n; ++m) {
    MultiIndex up = idx, dn = idx;
    up[m] += 1;
    dn[m] -= 1;
    ChrisVal cu = fd::christoffel_at_node(g, up);
    ChrisVal cd = fd::christoffel_at_node(g, dn);
    dgamma[m] = (cu + cd * (-1.0)) * (1.0 / (2.0 * g.layout.spacing(m)));
  }
  const MatN& gm = g.at(idx);
  Tensor rm(n, 4);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          // R^m_{jkl} = d_k Gamma^m_{lj} - d_l Gamma^m_{kj}
          //           + Gamma^m_{kp} Gamma^p_{lj} - Gamma^m_{lp} Gamma^p_{kj}
          double val = 0.0;
          for (int m2 = 0; m2 < n; ++m2) {
            double r = dgamma[k].at(m2, l, j) - dgamma[l].at(m2, k, j);
            for (int p = 0; p < n; ++p)
              r += gamma.at(m2, k, p) * gamma.at(p, l, j) -
                   gamma.at(m2, l, p) * gamma.at(p, k, j);
            val += gm(i, m2) * r;
          }
          rm({i, j, k, l}) = val;
        }
  return rm;
}

// Norm of a fully lowered tensor: raise every index with g^{-1} and contract.
inline double tensor_norm(const Tensor& t, const MatN& g) {
  const int n = t.n;
  MatN gi = g.inverse();
  Tensor cur = t;
  for (int slot = 0; slot < t.rank; ++slot) {
    Tensor next(n, t.rank);
    for_each_tensor_index(n, t.rank, [&](const MultiIndex& I) {
      double s = 0.0;
      MultiIndex J = I;
      for (int p = 0; p < n; ++p) {
        J[slot] = p;
        s += gi(I[slot], p) * cur(J);
      }
      next(I) = s;
    });
    cur = next;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < t.v.size(); ++i) s += cur.v[i] * t.v[i];
  return std::sqrt(std::max(0.0, s));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Boundary atlas: the (n-1)-dimensional manifold (dM, dg) assembled from the
// t = 0 faces of the boundary-collar charts.
// ---------------------------------------------------------------------------

struct BoundaryAtlas {
  PointedManifold manifold;        // dimension n-1, no boundary
  std::vector<int> parent_chart;   // boundary chart -> full-atlas chart
  std::vector<int> face_chart;     // full-atlas chart -> boundary chart or -1
};

inline BoundaryAtlas boundary_atlas(const PointedManifold& m) {
  if (!m.has_boundary)
    fail(ErrorKind::Domain, "manifold has no boundary");
  BoundaryAtlas ba;
  ba.face_chart.assign(m.charts.size(), -1);
  PointedManifold& bm = ba.manifold;
  bm.dimension = m.dimension - 1;
  bm.has_boundary = false;
  bm.constants = m.constants;
  const int nb = m.dimension - 1;
  for (std::size_t c = 0; c < m.charts.size(); ++c) {
    const Chart& ch = m.charts[c];
    if (ch.role != ChartRole::BoundaryCollar) continue;
    Chart face;
    face.id = ch.id;
    face.role = ChartRole::Interior;
    face.grid.lo = ch.grid.lo.head(nb);
    face.grid.hi = ch.grid.hi.head(nb);
    face.grid.res.assign(ch.grid.res.begin(), ch.grid.res.end() - 1);
    face.metric = GridField<MatN>(face.grid);
    for_each_node(face.grid, [&](const MultiIndex& idx) {
      MultiIndex full = idx;
      full.push_back(0);  // t = 0 face
      face.metric.at(idx) = m.charts[c].metric.at(full).topLeftCorner(nb, nb);
    });
    if (ch.analytic) {
      MetricFn parent = ch.analytic;
      face.analytic = [parent, nb](const VecN& v) {
        VecN full(nb + 1);
        full.head(nb) = v;
        full[nb] = 0.0;
        return MatN(parent(full).topLeftCorner(nb, nb));
      };
    }
    ba.face_chart[c] = static_cast<int>(bm.charts.size());
    ba.parent_chart.push_back(static_cast<int>(c));
    bm.charts.push_back(std::move(face));
  }
  if (bm.charts.empty())
    fail(ErrorKind::Domain, "manifold declares a boundary but has no collar charts");
  // Restrict collar-to-collar transitions to the t = 0 faces.
  for (const Transition& t : m.transitions) {
    int src = m.chart_index(t.source), tgt = m.chart_index(t.target);
    if (ba.face_chart[src] < 0 || ba.face_chart[tgt] < 0) continue;
    const GridLayout& ov = t.overlap();
    if (ov.lo[nb] > 1e-12) continue;  // overlap misses the boundary face
    Transition ft;
    ft.source = t.source;
    ft.target = t.target;
    GridLayout fov;
    fov.lo = ov.lo.head(nb);
    fov.hi = ov.hi.head(nb);
    fov.res.assign(ov.res.begin(), ov.res.end() - 1);
    auto face_map = [&t, nb](const VecN& v) {
      VecN full(nb + 1);
      full.head(nb) = v;
      full[nb] = 0.0;
      return VecN(t.apply(full).head(nb));
    };
    auto face_jac = [&t, nb](const VecN& v) {
      VecN full(nb + 1);
      full.head(nb) = v;
      full[nb] = 0.0;
      return MatN(t.jacobian_at(full).topLeftCorner(nb, nb));
    };
    if (t.analytic_map) {
      MapFn pm = t.analytic_map;
      JacFn pj = t.analytic_jac;
      ft.analytic_map = [pm, nb](const VecN& v) {
        VecN full(nb + 1);
        full.head(nb) = v;
        full[nb] = 0.0;
        return VecN(pm(full).head(nb));
      };
      ft.analytic_jac = [pj, nb](const VecN& v) {
        VecN full(nb + 1);
        full.head(nb) = v;
        full[nb] = 0.0;
        return MatN(pj(full).topLeftCorner(nb, nb));
      };
    }
    ft.map_samples = GridField<VecN>(fov);
    ft.jacobian_samples = GridField<MatN>(fov);
    for_each_node(fov, [&](const MultiIndex& idx) {
      VecN v = fov.node(idx);
      ft.map_samples.at(idx) = face_map(v);
      ft.jacobian_samples.at(idx) = face_jac(v);
    });
    bm.transitions.push_back(std::move(ft));
  }
  bm.base.chart = bm.charts.front().id;
  VecN c0 = 0.5 * (bm.charts.front().grid.lo + bm.charts.front().grid.hi);
  bm.base.coords = c0;
  return ba;
}

// ---------------------------------------------------------------------------
// TensorOps: finite-difference Riemannian kernels over one manifold.
// Caches per-chart Christoffel grids and the node graph; the manifold itself
// stays immutable.
// ---------------------------------------------------------------------------

class TensorOps {
 public:
  explicit TensorOps(const PointedManifold& m) : m_(m) {
    gamma_.reserve(m.charts.size());
    for (const Chart& c : m.charts) {
      GridField<ChrisVal> g(c.grid);
      for_each_node(c.grid, [&](const MultiIndex& idx) {
        g.at(idx) = fd::christoffel_at_node(c.metric, idx);
      });
      gamma_.push_back(std::move(g));
    }
  }

  const PointedManifold& manifold() const { return m_; }

  ChrisVal christoffel(int chart, const VecN& x) const {
    return gamma_[chart].interpolate(x);
  }

  // --- curvature -----------------------------------------------------------

  CurvatureReport curvature_report(int chart, const VecN& point, int k) const {
    const Chart& c = m_.charts[chart];
    MultiIndex idx = c.grid.nearest_node(point);
    for (int a = 0; a < c.dim(); ++a)
      if (idx[a] < k + 2 || idx[a] >= c.grid.res[a] - (k + 2))
        fail(ErrorKind::Stencil,
             "curvature stencil of order " + std::to_string(k) +
                 " exceeds the grid of chart '" + c.id + "'");
    CurvatureReport rep;
    rep.point = c.grid.node(idx);
    rep.stencil_spacing = c.grid.min_spacing();
    rep.christoffel = fd::christoffel_at_node(c.metric, idx);
    rep.rm = detail::riemann_at_node(c.metric, idx);
    MatN g = c.metric.at(idx);
    rep.nabla_rm_norms.push_back(detail::tensor_norm(rep.rm, g));
    // nabla^l Rm by recursive covariant differentiation of node evaluators
    detail::NodeTensorFn level = [&](const MultiIndex& i) {
      return detail::riemann_at_node(c.metric, i);
    };
    int rank = 4;
    for (int l = 1; l <= k; ++l) {
      detail::NodeTensorFn prev = level;
      int prev_rank = rank;
      level = [this, chart, prev, prev_rank](const MultiIndex& i) {
        return detail::covariant_derivative(m_.charts[chart].metric, prev,
                                            prev_rank, i);
      };
      rank += 1;
      rep.nabla_rm_norms.push_back(detail::tensor_norm(level(idx), g));
    }
    return rep;
  }

  // Sectional curvature of the plane spanned by u, v at a chart point.
  double sectional_curvature(int chart, const VecN& point, const VecN& u,
                             const VecN& v) const {
    CurvatureReport rep = curvature_report(chart, point, 0);
    const Chart& c = m_.charts[chart];
    MatN g = c.metric.at(c.grid.nearest_node(point));
    const int n = c.dim();
    double num = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l)
            num += rep.rm({i, j, k, l}) * u[i] * v[j] * u[k] * v[l];
    double uu = u.dot(g * u), vv = v.dot(g * v), uv = u.dot(g * v);
    return num / (uu * vv - uv * uv);
  }

  // --- geodesics ------------------------------------------------------------

  // Geodesic flow from (chart, x) with initial velocity v for unit parameter
  // time; arc length equals |v|_g. Switches charts through transitions.
  // `trace`, when given, receives every accepted state.
  PointRef flow(PointRef p, VecN v,
                std::vector<std::pair<PointRef, VecN>>* trace = nullptr) const {
    double speed = std::sqrt(v.dot(m_.charts[p.chart].metric_at(p.x) * v));
    if (speed == 0.0) return p;
    double length = speed;  // parameter time 1 at speed |v|
    double traveled = 0.0;
    PointRef cur = p;
    VecN vel = v;
    if (trace) trace->push_back({cur, vel});
    int guard = 0;
    while (traveled < length - 1e-15) {
      const Chart& c = m_.charts[cur.chart];
      double h = 0.25 * c.grid.min_spacing();
      double sp = std::sqrt(vel.dot(c.metric_at(cur.x) * vel));
      double dt = std::min(h / sp, (length - traveled) / sp);
      rk4_step(cur.chart, cur.x, vel, dt);
      traveled += dt * sp;  // speed is constant along the exact flow
      maybe_switch_chart(cur, vel);
      if (trace) trace->push_back({cur, vel});
      if (++guard > 2000000)
        fail(ErrorKind::Tolerance, "geodesic integration failed to terminate");
    }
    return cur;
  }

  // exp map: travel the stated arc length in direction v.
  PointRef exp_map(PointRef p, VecN v, double length,
                   std::vector<std::pair<PointRef, VecN>>* trace = nullptr) const {
    if (length == 0.0) return p;
    if (length < 0.0) fail(ErrorKind::Domain, "exp_map: negative length");
    double speed = std::sqrt(v.dot(m_.charts[p.chart].metric_at(p.x) * v));
    if (speed <= 0.0) fail(ErrorKind::Domain, "exp_map: zero velocity");
    return flow(p, VecN(v * (length / speed)), trace);
  }

  // --- distances ------------------------------------------------------------

  double geodesic_distance(PointRef p, PointRef q) const {
    if (p.chart == q.chart && (p.x - q.x).norm() == 0.0) return 0.0;
    if (auto alias = m_.map_to_chart(q.chart, q.x, p.chart)) {
      if ((alias->x - p.x).norm() == 0.0) return 0.0;
    }
    // canonical order makes d symmetric by construction
    bool swap = q.chart < p.chart;
    if (p.chart == q.chart)
      for (int a = 0; a < p.x.size(); ++a) {
        if (q.x[a] < p.x[a] - 1e-15) { swap = true; break; }
        if (q.x[a] > p.x[a] + 1e-15) break;
      }
    if (swap) std::swap(p, q);
    GraphPath seed = graph_path(p, q);
    if (!seed.found)
      fail(ErrorKind::Unreachable,
           "no path between the given points at sample resolution");
    return refine_from_seed(p, q, seed);
  }

  // Lower bound on the length of the shortest geodesic loop through p at
  // graph resolution; infinity when none found within the search radius.
  double shortest_loop_through(PointRef p, double radius) const;

  // First conjugate distance along the geodesic from p in the given
  // direction, from the normal Jacobi system J'' + R(J,T)T = 0 integrated
  // alongside the flow; rmax when no zero of det J occurs before rmax, and
  // the escape distance when the geodesic leaves the atlas first.
  double conjugate_distance(PointRef p, const VecN& direction, double rmax) const;

  // Distance field from a point over the whole node graph (graph metric).
  std::vector<double> graph_distances(PointRef p) const;

  // --- boundary geometry ----------------------------------------------------

  SecondFundamentalForm second_fundamental_form(PointRef bp, int k) const;

  // kappa(v, t): boundary exponential in (dM, dg) followed by the inward
  // normal geodesic for arc length t.
  PointRef normal_collar(PointRef bp, const VecN& v, double t) const;

  const BoundaryAtlas& boundary() const {
    if (!boundary_) boundary_ = std::make_shared<BoundaryAtlas>(boundary_atlas(m_));
    return *boundary_;
  }
  TensorOps& boundary_ops() const {
    if (!boundary_ops_)
      boundary_ops_ = std::make_shared<TensorOps>(boundary().manifold);
    return *boundary_ops_;
  }

  // Inward unit normal at a boundary point of a collar chart, in chart coords.
  VecN inward_normal(int chart, const VecN& x) const {
    const Chart& c = m_.charts[chart];
    const int n = c.dim();
    MatN gi = c.metric_at(x).inverse();
    VecN nu(n);
    for (int i = 0; i < n; ++i) nu[i] = gi(i, n - 1);
    return VecN(nu / std::sqrt(gi(n - 1, n - 1)));
  }

  // --- node graph (shared with nets, certification, height machinery) -------

  struct GraphNode {
    int chart;
    MultiIndex idx;
  };

  std::size_t graph_size() const {
    ensure_graph();
    return offsets_.back();
  }
  std::size_t node_id(int chart, const MultiIndex& idx) const {
    ensure_graph();
    return offsets_[chart] + m_.charts[chart].grid.flat(idx);
  }
  GraphNode graph_node(std::size_t id) const {
    ensure_graph();
    int chart = 0;
    while (offsets_[chart + 1] <= id) ++chart;
    return {chart, m_.charts[chart].grid.unflat(id - offsets_[chart])};
  }
  PointRef node_point(std::size_t id) const {
    GraphNode gn = graph_node(id);
    return {gn.chart, m_.charts[gn.chart].grid.node(gn.idx)};
  }

  // Neighbour expansion used by every Dijkstra pass.
  void for_each_edge(std::size_t id,
                     const std::function<void(std::size_t, double)>& fn) const;

  double segment_length(int chart, const VecN& a, const VecN& b) const {
    // 3-point Simpson quadrature of |b-a|_g along the straight chart segment
    const Chart& c = m_.charts[chart];
    VecN d = b - a;
    VecN mid = 0.5 * (a + b);
    double la = std::sqrt(d.dot(c.metric_at(a) * d));
    double lm = std::sqrt(d.dot(c.metric_at(mid) * d));
    double lb = std::sqrt(d.dot(c.metric_at(b) * d));
    return (la + 4.0 * lm + lb) / 6.0;
  }

  struct GraphPath {
    bool found = false;
    double length = 0.0;
    std::vector<PointRef> points;  // p ... q
  };
  GraphPath graph_path(PointRef p, PointRef q) const;

  // Reusable single-source field: distances + parents over the node graph.
  struct GraphField {
    PointRef source;
    std::vector<double> dist;
    std::vector<std::size_t> parent;
  };
  GraphField compute_field(PointRef p) const;
  GraphPath extract_path(const GraphField& f, PointRef q) const;

  // Refined distance through a precomputed field (shooting + fallback).
  double refine_distance(PointRef p, PointRef q, const GraphField& f) const {
    GraphPath seed = extract_path(f, q);
    if (!seed.found)
      fail(ErrorKind::Unreachable,
           "no path between the given points at sample resolution");
    return refine_from_seed(p, q, seed);
  }

  double refine_from_seed(PointRef p, PointRef q, const GraphPath& seed) const {
    double refined = shoot_distance(p, q, seed);
    if (refined >= 0.0) return std::min(refined, seed.length);
    GraphPath rev = seed;
    std::reverse(rev.points.begin(), rev.points.end());
    refined = shoot_distance(q, p, rev);
    if (refined >= 0.0) return std::min(refined, seed.length);
    return relax_distance(p, q, seed);
  }

 private:
  void rk4_step(int chart, VecN& x, VecN& v, double dt) const {
    auto acc = [&](const VecN& xx, const VecN& vv) {
      return VecN(-christoffel(chart, xx).apply(vv, vv));
    };
    VecN k1x = v, k1v = acc(x, v);
    VecN k2x = v + 0.5 * dt * k1v, k2v = acc(x + 0.5 * dt * k1x, k2x);
    VecN k3x = v + 0.5 * dt * k2v, k3v = acc(x + 0.5 * dt * k2x, k3x);
    VecN k4x = v + dt * k3v, k4v = acc(x + dt * k3x, k4x);
    x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  }

  void maybe_switch_chart(PointRef& p, VecN& v) const {
    const Chart& c = m_.charts[p.chart];
    double mg = c.grid.margin(p.x);
    if (mg > 2.5) return;
    int best = -1;
    VecN bx, bv;
    double best_mg = mg;
    for (const Transition* t : m_.transitions_from(p.chart)) {
      if (!t->covers(p.x, 1e-9)) continue;
      VecN y = t->apply(p.x);
      int tgt = m_.chart_index(t->target);
      double tm = m_.charts[tgt].grid.margin(y);
      if (tm > best_mg + 0.5) {
        best = tgt;
        bx = y;
        bv = t->jacobian_at(p.x) * v;
        best_mg = tm;
      }
    }
    if (best >= 0) {
      p = {best, bx};
      v = bv;
      return;
    }
    if (mg < 0.0) {
      std::ostringstream os;
      os << "trajectory left the atlas in chart '" << c.id << "' at (";
      for (int i = 0; i < p.x.size(); ++i) os << (i ? ", " : "") << p.x[i];
      os << ")";
      fail(ErrorKind::Escape, os.str());
    }
  }

  void ensure_graph() const {
    if (!offsets_.empty()) return;
    offsets_.push_back(0);
    for (const Chart& c : m_.charts)
      offsets_.push_back(offsets_.back() + c.grid.size());
  }

  void seed_cells(const PointRef& pt,
                  std::vector<std::pair<std::size_t, double>>& out) const;
  double shoot_distance(PointRef p, PointRef q, const GraphPath& seed) const;
  double relax_distance(PointRef p, PointRef q, const GraphPath& seed) const;

  struct RmVal {
    int n = 0;
    std::array<double, 81> v{};  // R_{ijkl}, strides n^3, n^2, n, 1
    double at(int i, int j, int k, int l) const {
      return v[((i * n + j) * n + k) * n + l];
    }
    RmVal operator*(double s) const {
      RmVal r = *this;
      for (auto& x : r.v) x *= s;
      return r;
    }
    RmVal operator+(const RmVal& o) const {
      RmVal r = *this;
      for (std::size_t i = 0; i < v.size(); ++i) r.v[i] += o.v[i];
      return r;
    }
  };

  const GridField<RmVal>& riemann_grid(int chart) const {
    ensure_graph();
    if (rm_.empty()) rm_.resize(m_.charts.size());
    if (!rm_[chart]) {
      const Chart& c = m_.charts[chart];
      auto grid = std::make_shared<GridField<RmVal>>(c.grid);
      const int n = c.dim();
      for_each_node(c.grid, [&](const MultiIndex& idx) {
        Tensor t = detail::riemann_at_node(c.metric, idx);
        RmVal rv;
        rv.n = n;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
              for (int l = 0; l < n; ++l)
                rv.v[((i * n + j) * n + k) * n + l] = t({i, j, k, l});
        grid->at(idx) = rv;
      });
      rm_[chart] = grid;
    }
    return *rm_[chart];
  }

  const PointedManifold& m_;
  std::vector<GridField<ChrisVal>> gamma_;
  mutable std::vector<std::size_t> offsets_;
  mutable std::shared_ptr<BoundaryAtlas> boundary_;
  mutable std::shared_ptr<TensorOps> boundary_ops_;
  mutable std::vector<std::shared_ptr<GridField<RmVal>>> rm_;
};

// ---------------------------------------------------------------------------
// Graph expansion, Dijkstra passes
// ---------------------------------------------------------------------------

inline void TensorOps::for_each_edge(
    std::size_t id, const std::function<void(std::size_t, double)>& fn) const {
  GraphNode gn = graph_node(id);
  const Chart& c = m_.charts[gn.chart];
  VecN x = c.grid.node(gn.idx);
  const int n = c.dim();
  // in-chart neighbours: all 3^n - 1 offsets
  MultiIndex off(n, -1);
  while (true) {
    bool zero = true;
    for (int a = 0; a < n; ++a)
      if (off[a] != 0) zero = false;
    if (!zero) {
      MultiIndex nb = gn.idx;
      bool ok = true;
      for (int a = 0; a < n; ++a) {
        nb[a] += off[a];
        if (nb[a] < 0 || nb[a] >= c.grid.res[a]) ok = false;
      }
      if (ok) {
        VecN y = c.grid.node(nb);
        fn(node_id(gn.chart, nb), segment_length(gn.chart, x, y));
      }
    }
    int a = n - 1;
    while (a >= 0 && ++off[a] == 2) off[a--] = -1;
    if (a < 0) break;
  }
  // cross-chart stitches: connect to the corners of the cell containing the
  // alias point
  for (const Transition* t : m_.transitions_from(gn.chart)) {
    if (!t->covers(x)) continue;
    VecN y = t->apply(x);
    int tgt = m_.chart_index(t->target);
    const Chart& tc = m_.charts[tgt];
    if (!tc.grid.contains(y, 1e-12)) continue;
    MultiIndex base(n);
    for (int a = 0; a < n; ++a) {
      double u = (y[a] - tc.grid.lo[a]) / tc.grid.spacing(a);
      base[a] = std::clamp(static_cast<int>(std::floor(u)), 0, tc.grid.res[a] - 2);
    }
    const int corners = 1 << n;
    for (int cc = 0; cc < corners; ++cc) {
      MultiIndex corner = base;
      for (int a = 0; a < n; ++a) corner[a] += (cc >> a) & 1;
      VecN yc = tc.grid.node(corner);
      fn(node_id(tgt, corner), segment_length(tgt, y, yc));
    }
  }
}

inline std::vector<double> TensorOps::graph_distances(PointRef p) const {
  ensure_graph();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(graph_size(), inf);
  using QE = std::pair<double, std::size_t>;
  std::priority_queue<QE, std::vector<QE>, std::greater<>> pq;
  // seed: corners of the cell containing p (in every alias chart)
  for (const auto& al : m_.aliases(p.chart, p.x)) {
    const Chart& c = m_.charts[al.chart];
    MultiIndex base(c.dim());
    for (int a = 0; a < c.dim(); ++a) {
      double u = (al.x[a] - c.grid.lo[a]) / c.grid.spacing(a);
      base[a] = std::clamp(static_cast<int>(std::floor(u)), 0, c.grid.res[a] - 2);
    }
    const int corners = 1 << c.dim();
    for (int cc = 0; cc < corners; ++cc) {
      MultiIndex corner = base;
      for (int a = 0; a < c.dim(); ++a) corner[a] += (cc >> a) & 1;
      std::size_t id = node_id(al.chart, corner);
      double w = segment_length(al.chart, al.x, c.grid.node(corner));
      if (w < dist[id]) {
        dist[id] = w;
        pq.push({w, id});
      }
    }
  }
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    for_each_edge(u, [&](std::size_t v, double w) {
      if (d + w < dist[v] - 1e-15) {
        dist[v] = d + w;
        pq.push({d + w, v});
      }
    });
  }
  return dist;
}

inline void TensorOps::seed_cells(
    const PointRef& pt, std::vector<std::pair<std::size_t, double>>& out) const {
  for (const auto& al : m_.aliases(pt.chart, pt.x)) {
    const Chart& c = m_.charts[al.chart];
    MultiIndex base(c.dim());
    for (int a = 0; a < c.dim(); ++a) {
      double u = (al.x[a] - c.grid.lo[a]) / c.grid.spacing(a);
      base[a] = std::clamp(static_cast<int>(std::floor(u)), 0, c.grid.res[a] - 2);
    }
    const int corners = 1 << c.dim();
    for (int cc = 0; cc < corners; ++cc) {
      MultiIndex corner = base;
      for (int a = 0; a < c.dim(); ++a) corner[a] += (cc >> a) & 1;
      out.push_back({node_id(al.chart, corner),
                     segment_length(al.chart, al.x, c.grid.node(corner))});
    }
  }
}

inline TensorOps::GraphField TensorOps::compute_field(PointRef p) const {
  ensure_graph();
  const double inf = std::numeric_limits<double>::infinity();
  GraphField f;
  f.source = p;
  f.dist.assign(graph_size(), inf);
  f.parent.assign(graph_size(), std::numeric_limits<std::size_t>::max());
  using QE = std::pair<double, std::size_t>;
  std::priority_queue<QE, std::vector<QE>, std::greater<>> pq;
  std::vector<std::pair<std::size_t, double>> sources;
  seed_cells(p, sources);
  for (auto [id, w] : sources) {
    if (w < f.dist[id]) {
      f.dist[id] = w;
      pq.push({w, id});
    }
  }
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > f.dist[u]) continue;
    for_each_edge(u, [&](std::size_t v, double w) {
      if (d + w < f.dist[v] - 1e-15) {
        f.dist[v] = d + w;
        f.parent[v] = u;
        pq.push({d + w, v});
      }
    });
  }
  return f;
}

inline TensorOps::GraphPath TensorOps::extract_path(const GraphField& f,
                                                    PointRef q) const {
  GraphPath gp;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::pair<std::size_t, double>> targets;
  seed_cells(q, targets);
  double best = inf;
  std::size_t best_id = 0;
  for (auto [id, w] : targets) {
    if (f.dist[id] + w < best) {
      best = f.dist[id] + w;
      best_id = id;
    }
  }
  if (!std::isfinite(best)) return gp;
  gp.found = true;
  gp.length = best;
  std::vector<PointRef> rev;
  rev.push_back(q);
  for (std::size_t cur = best_id;
       cur != std::numeric_limits<std::size_t>::max();) {
    rev.push_back(node_point(cur));
    cur = f.parent[cur];
  }
  rev.push_back(f.source);
  gp.points.assign(rev.rbegin(), rev.rend());
  return gp;
}

inline TensorOps::GraphPath TensorOps::graph_path(PointRef p, PointRef q) const {
  return extract_path(compute_field(p), q);
}

inline double TensorOps::shortest_loop_through(PointRef p, double radius) const {
  ensure_graph();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(graph_size(), inf);
  std::vector<int> branch(graph_size(), -1);
  using QE = std::pair<double, std::size_t>;
  std::priority_queue<QE, std::vector<QE>, std::greater<>> pq;
  // seed from the nearest node to p; branches are its outgoing edges
  const Chart& c = m_.charts[p.chart];
  std::size_t root = node_id(p.chart, c.grid.nearest_node(p.x));
  dist[root] = 0.0;
  int nb = 0;
  for_each_edge(root, [&](std::size_t v, double w) {
    if (w < dist[v]) {
      dist[v] = w;
      branch[v] = nb;
      pq.push({w, v});
    }
    ++nb;
  });
  double best_loop = inf;
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u] || d > radius) continue;
    for_each_edge(u, [&](std::size_t v, double w) {
      if (v == root) return;
      if (d + w < dist[v] - 1e-15) {
        dist[v] = d + w;
        branch[v] = branch[u];
        pq.push({d + w, v});
      } else if (branch[v] >= 0 && branch[v] != branch[u] &&
                 std::isfinite(dist[v])) {
        best_loop = std::min(best_loop, d + w + dist[v]);
      }
    });
  }
  return best_loop;
}

inline double TensorOps::conjugate_distance(PointRef p, const VecN& direction,
                                            double rmax) const {
  const int n = m_.charts[p.chart].dim();
  const int nb = n - 1;
  if (nb == 0) return rmax;  // one-dimensional manifolds have no normal Jacobi
  MatN g0 = m_.charts[p.chart].metric_at(p.x);
  double sp = std::sqrt(direction.dot(g0 * direction));
  if (sp <= 0.0) fail(ErrorKind::Domain, "conjugate_distance: zero direction");
  VecN T = direction / sp;

  // orthonormal frame normal to T at p (Gram-Schmidt over coordinate axes)
  std::vector<VecN> frame;
  for (int a = 0; a < n && static_cast<int>(frame.size()) < nb; ++a) {
    VecN e = VecN::Zero(n);
    e[a] = 1.0;
    e -= T * T.dot(g0 * e);
    for (const VecN& f : frame) e -= f * f.dot(g0 * e);
    double nr = std::sqrt(e.dot(g0 * e));
    if (nr < 1e-8) continue;
    frame.push_back(VecN(e / nr));
  }
  if (static_cast<int>(frame.size()) != nb) return rmax;

  // state: x, v, frame vectors, u (nb x nb), du (nb x nb)
  struct State {
    VecN x, v;
    std::vector<VecN> e;
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2, 2> u, du;
  };
  State s;
  s.x = p.x;
  s.v = T;
  s.e = frame;
  s.u.setZero(nb, nb);
  s.du.setIdentity(nb, nb);
  int chart = p.chart;

  auto deriv = [&](int ch, const State& st, State& d) {
    ChrisVal gm = christoffel(ch, st.x);
    d.x = st.v;
    d.v = -gm.apply(st.v, st.v);
    d.e.resize(nb);
    for (int a = 0; a < nb; ++a) d.e[a] = -gm.apply(st.v, st.e[a]);
    const RmVal& rm = riemann_grid(ch).interpolate(st.x);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2, 2> M(nb, nb);
    for (int a = 0; a < nb; ++a)
      for (int b = 0; b < nb; ++b) {
        double val = 0.0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
              for (int l = 0; l < n; ++l)
                val += rm.at(i, j, k, l) * st.e[a][i] * st.v[j] * st.e[b][k] *
                       st.v[l];
        M(a, b) = val;
      }
    d.u = st.du;
    d.du = -M * st.u;
  };
  auto axpy = [&](const State& a, double h, const State& b) {
    State r = a;
    r.x += h * b.x;
    r.v += h * b.v;
    for (int i = 0; i < nb; ++i) r.e[i] += h * b.e[i];
    r.u += h * b.u;
    r.du += h * b.du;
    return r;
  };

  double traveled = 0.0;
  double det_prev = 0.0;  // det u at s=0 (u=0) treated as start
  bool started = false;
  int guard = 0;
  while (traveled < rmax) {
    const Chart& c = m_.charts[chart];
    double dt = std::min(0.25 * c.grid.min_spacing(), rmax - traveled);
    State k1, k2, k3, k4;
    deriv(chart, s, k1);
    deriv(chart, axpy(s, 0.5 * dt, k1), k2);
    deriv(chart, axpy(s, 0.5 * dt, k2), k3);
    deriv(chart, axpy(s, dt, k3), k4);
    State next = s;
    next.x += dt / 6.0 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x);
    next.v += dt / 6.0 * (k1.v + 2 * k2.v + 2 * k3.v + k4.v);
    for (int i = 0; i < nb; ++i)
      next.e[i] += dt / 6.0 * (k1.e[i] + 2 * k2.e[i] + 2 * k3.e[i] + k4.e[i]);
    next.u += dt / 6.0 * (k1.u + 2 * k2.u + 2 * k3.u + k4.u);
    next.du += dt / 6.0 * (k1.du + 2 * k2.du + 2 * k3.du + k4.du);
    double det = next.u.determinant();
    if (started && det_prev > 0.0 && det <= 0.0) {
      double frac = det_prev / (det_prev - det);
      return traveled + frac * dt;
    }
    if (!started && det > 0.0) started = true;
    det_prev = det;
    s = next;
    traveled += dt;
    // chart switching: transform every state vector
    const Chart& cc = m_.charts[chart];
    if (cc.grid.margin(s.x) < 2.5) {
      int best = -1;
      double best_mg = cc.grid.margin(s.x);
      const Transition* chosen = nullptr;
      for (const Transition* t : m_.transitions_from(chart)) {
        if (!t->covers(s.x, 1e-9)) continue;
        VecN y = t->apply(s.x);
        int tgt = m_.chart_index(t->target);
        double tm = m_.charts[tgt].grid.margin(y);
        if (tm > best_mg + 0.5) {
          best = tgt;
          best_mg = tm;
          chosen = t;
        }
      }
      if (best >= 0) {
        MatN J = chosen->jacobian_at(s.x);
        VecN y = chosen->apply(s.x);
        s.v = J * s.v;
        for (int i = 0; i < nb; ++i) s.e[i] = J * s.e[i];
        s.x = y;
        chart = best;
      } else if (cc.grid.margin(s.x) < 0.0) {
        return rmax;  // left the atlas before a conjugate point: nothing found
      }
    }
    if (++guard > 2000000)
      fail(ErrorKind::Tolerance, "jacobi integration failed to terminate");
  }
  return rmax;
}

// ---------------------------------------------------------------------------
// Distance refinement: Newton shooting seeded by the graph path, with a
// discrete-geodesic relaxation fallback.
// ---------------------------------------------------------------------------

inline double TensorOps::shoot_distance(PointRef p, PointRef q,
                                        const GraphPath& seed) const {
  const Chart& pc = m_.charts[p.chart];
  const int n = pc.dim();
  // initial velocity: direction of the early seed path, scaled to seed length
  VecN dir = VecN::Zero(n);
  for (std::size_t i = 1; i < seed.points.size(); ++i) {
    auto al = m_.map_to_chart(seed.points[i].chart, seed.points[i].x, p.chart);
    if (!al) break;
    dir = al->x - p.x;
    if (dir.norm() > 0.25 * pc.grid.min_spacing() || i + 1 == seed.points.size())
      break;
  }
  if (dir.norm() == 0.0) return -1.0;
  double sp = std::sqrt(dir.dot(pc.metric_at(p.x) * dir));
  VecN v = dir * (seed.length / sp);
  double tol = 1e-10 * std::max(1.0, seed.length);
  for (int iter = 0; iter < 24; ++iter) {
    PointRef end;
    try {
      end = flow(p, v);
    } catch (const Error&) {
      return -1.0;
    }
    auto qa = m_.map_to_chart(q.chart, q.x, end.chart);
    if (!qa) return -1.0;
    VecN r = qa->x - end.x;
    if (r.norm() < tol) {
      return std::sqrt(v.dot(pc.metric_at(p.x) * v));
    }
    // finite-difference Jacobian of end(v)
    MatN J(n, n);
    double hv = std::max(1e-7, 1e-7 * v.norm());
    bool ok = true;
    for (int j = 0; j < n && ok; ++j) {
      VecN vp = v;
      vp[j] += hv;
      try {
        PointRef ep = flow(p, vp);
        auto ea = m_.map_to_chart(ep.chart, ep.x, end.chart);
        if (!ea) {
          ok = false;
          break;
        }
        J.col(j) = (ea->x - end.x) / hv;
      } catch (const Error&) {
        ok = false;
      }
    }
    if (!ok) return -1.0;
    Eigen::FullPivLU<MatN> lu(J);
    if (!lu.isInvertible()) return -1.0;
    VecN dv = lu.solve(r);
    // damped update keeps the iteration inside the atlas
    double scale = 1.0;
    double dvn = dv.norm(), vn = v.norm();
    if (dvn > 0.5 * vn) scale = 0.5 * vn / dvn;
    v += scale * dv;
  }
  return -1.0;
}

inline double TensorOps::relax_distance(PointRef p, PointRef q,
                                        const GraphPath& seed) const {
  // Coarse-to-fine discrete geodesic relaxation of the seed polyline.
  std::vector<PointRef> path = seed.points;
  auto resample = [&](const std::vector<PointRef>& in, int N) {
    // arc-length resample by chart-coordinate distances
    std::vector<double> cum(in.size(), 0.0);
    for (std::size_t i = 1; i < in.size(); ++i) {
      auto al = m_.map_to_chart(in[i].chart, in[i].x, in[i - 1].chart);
      cum[i] = cum[i - 1] + (al ? (al->x - in[i - 1].x).norm() : 0.0);
    }
    std::vector<PointRef> out;
    out.push_back(in.front());
    for (int s = 1; s < N; ++s) {
      double target = cum.back() * s / N;
      std::size_t i = 1;
      while (i + 1 < in.size() && cum[i] < target) ++i;
      double t = (target - cum[i - 1]) / std::max(1e-300, cum[i] - cum[i - 1]);
      auto al = m_.map_to_chart(in[i].chart, in[i].x, in[i - 1].chart);
      VecN x = al ? VecN((1 - t) * in[i - 1].x + t * al->x) : in[i].x;
      out.push_back({in[i - 1].chart, x});
    }
    out.push_back(in.back());
    return out;
  };
  auto sweep = [&](std::vector<PointRef>& pts) {
    double move = 0.0;
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
      auto prev = m_.map_to_chart(pts[i - 1].chart, pts[i - 1].x, pts[i].chart);
      auto next = m_.map_to_chart(pts[i + 1].chart, pts[i + 1].x, pts[i].chart);
      if (!prev || !next) continue;
      VecN delta = 0.5 * (next->x - prev->x);
      VecN target = 0.5 * (prev->x + next->x) +
                    0.5 * christoffel(pts[i].chart, pts[i].x).apply(delta, delta);
      move = std::max(move, (target - pts[i].x).norm());
      pts[i].x = target;
      // keep the point inside a chart
      const Chart& c = m_.charts[pts[i].chart];
      if (c.grid.margin(pts[i].x) < 1.0) {
        double bm = c.grid.margin(pts[i].x);
        for (const auto& al : m_.aliases(pts[i].chart, pts[i].x, 1e-9)) {
          double mg = m_.charts[al.chart].grid.margin(al.x);
          if (mg > bm + 0.5) {
            pts[i] = al;
            bm = mg;
          }
        }
      }
    }
    return move;
  };
  double scale = std::max(1e-12, seed.length);
  for (int N = 32; N <= 256; N *= 2) {
    path = resample(path, N);
    for (int it = 0; it < 1200; ++it)
      if (sweep(path) < 1e-12 * scale) break;
  }
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    auto al = m_.map_to_chart(path[i].chart, path[i].x, path[i - 1].chart);
    if (al)
      len += segment_length(path[i - 1].chart, path[i - 1].x, al->x);
    else
      len += segment_length(path[i].chart, path[i].x, path[i].x);
  }
  return len;
}

// ---------------------------------------------------------------------------
// Second fundamental form and normal collar coordinates
// ---------------------------------------------------------------------------

inline SecondFundamentalForm TensorOps::second_fundamental_form(PointRef bp,
                                                                int k) const {
  const Chart& c = m_.charts[bp.chart];
  if (c.role != ChartRole::BoundaryCollar)
    fail(ErrorKind::Domain, "second fundamental form requires a boundary-collar chart");
  const int n = c.dim(), nb = n - 1;
  if (std::abs(bp.x[nb]) > 0.5 * c.grid.spacing(nb))
    fail(ErrorKind::Domain, "interior point supplied; II lives on the t = 0 face");

  const BoundaryAtlas& ba = boundary();
  int fchart = ba.face_chart[bp.chart];
  const Chart& face = ba.manifold.charts[fchart];
  MultiIndex fidx = face.grid.nearest_node(VecN(bp.x.head(nb)));

  // inward unit normal as a field on face nodes
  auto nu_at = [&](const MultiIndex& fi) {
    MultiIndex full = fi;
    full.push_back(0);
    VecN x = c.grid.node(full);
    return inward_normal(bp.chart, x);
  };
  // II_{ab} = -g(nabla_a nu, b) evaluated with full-chart Christoffels at the
  // face node (one-sided differences supply the t-derivatives of g).
  MultiIndex full = fidx;
  full.push_back(0);
  ChrisVal gamma = fd::christoffel_at_node(c.metric, full);
  MatN g = c.metric.at(full);
  VecN nu = nu_at(fidx);
  MatN ii(nb, nb);
  for (int a = 0; a < nb; ++a) {
    // d_a nu via tangential central/one-sided differences
    VecN dnu;
    double h = face.grid.spacing(a);
    if (fidx[a] == 0) {
      MultiIndex u1 = fidx, u2 = fidx;
      u1[a] = 1;
      u2[a] = 2;
      dnu = (-3.0 * nu_at(fidx) + 4.0 * nu_at(u1) - nu_at(u2)) / (2.0 * h);
    } else if (fidx[a] == face.grid.res[a] - 1) {
      MultiIndex u1 = fidx, u2 = fidx;
      u1[a] = fidx[a] - 1;
      u2[a] = fidx[a] - 2;
      dnu = (3.0 * nu_at(fidx) - 4.0 * nu_at(u1) + nu_at(u2)) / (2.0 * h);
    } else {
      MultiIndex up = fidx, dn = fidx;
      up[a] += 1;
      dn[a] -= 1;
      dnu = (nu_at(up) - nu_at(dn)) / (2.0 * h);
    }
    VecN cov = dnu;
    for (int i = 0; i < n; ++i)
      for (int c2 = 0; c2 < n; ++c2) cov[i] += gamma.at(i, a, c2) * nu[c2];
    for (int b = 0; b < nb; ++b) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += g(b, i) * cov[i];
      ii(a, b) = -s;
    }
  }
  ii = 0.5 * (ii + ii.transpose().eval());

  SecondFundamentalForm out;
  out.point = c.grid.node(full);
  out.ii = ii;
  out.inward_normal = nu;

  // |nabla^l II| with boundary Christoffels over the face grid
  const GridField<MatN>& fg = face.metric;
  auto ii_node = [&, this](const MultiIndex& fi) {
    MultiIndex fl = fi;
    fl.push_back(0);
    ChrisVal gm = fd::christoffel_at_node(c.metric, fl);
    MatN gg = c.metric.at(fl);
    VecN nn = nu_at(fi);
    Tensor t(nb, 2);
    for (int a = 0; a < nb; ++a) {
      VecN dnu;
      double h = face.grid.spacing(a);
      if (fi[a] == 0) {
        MultiIndex u1 = fi, u2 = fi;
        u1[a] = 1;
        u2[a] = 2;
        dnu = (-3.0 * nu_at(fi) + 4.0 * nu_at(u1) - nu_at(u2)) / (2.0 * h);
      } else if (fi[a] == face.grid.res[a] - 1) {
        MultiIndex u1 = fi, u2 = fi;
        u1[a] = fi[a] - 1;
        u2[a] = fi[a] - 2;
        dnu = (3.0 * nu_at(fi) - 4.0 * nu_at(u1) + nu_at(u2)) / (2.0 * h);
      } else {
        MultiIndex up = fi, dn = fi;
        up[a] += 1;
        dn[a] -= 1;
        dnu = (nu_at(up) - nu_at(dn)) / (2.0 * h);
      }
      VecN cov = dnu;
      for (int i = 0; i < n; ++i)
        for (int c2 = 0; c2 < n; ++c2) cov[i] += gm.at(i, a, c2) * nn[c2];
      for (int b = 0; b < nb; ++b) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += gg(b, i) * cov[i];
        t({a, b}) = -s;
      }
    }
    // symmetrize
    for (int a = 0; a < nb; ++a)
      for (int b = 0; b < a; ++b) {
        double v = 0.5 * (t({a, b}) + t({b, a}));
        t({a, b}) = v;
        t({b, a}) = v;
      }
    return t;
  };
  MatN fgm = fg.at(fidx);
  out.nabla_ii_norms.push_back(detail::tensor_norm(ii_node(fidx), fgm));
  detail::NodeTensorFn level = ii_node;
  int rank = 2;
  for (int l = 1; l <= k; ++l) {
    for (int a = 0; a < nb; ++a)
      if (fidx[a] < l + 1 || fidx[a] >= face.grid.res[a] - (l + 1))
        fail(ErrorKind::Stencil, "II derivative stencil exceeds the boundary grid");
    detail::NodeTensorFn prev = level;
    int prev_rank = rank;
    level = [&fg, prev, prev_rank](const MultiIndex& i) {
      return detail::covariant_derivative(fg, prev, prev_rank, i);
    };
    rank += 1;
    out.nabla_ii_norms.push_back(detail::tensor_norm(level(fidx), fgm));
  }
  return out;
}

inline PointRef TensorOps::normal_collar(PointRef bp, const VecN& v,
                                         double t) const {
  const Chart& c = m_.charts[bp.chart];
  if (c.role != ChartRole::BoundaryCollar)
    fail(ErrorKind::Domain, "normal collar requires a boundary-collar chart");
  const int n = c.dim(), nb = n - 1;
  if (std::abs(bp.x[nb]) > 1e-9)
    fail(ErrorKind::Domain, "normal collar starts on the t = 0 face");
  // boundary exponential
  const BoundaryAtlas& ba = boundary();
  PointRef fb{ba.face_chart[bp.chart], VecN(bp.x.head(nb))};
  double vlen = std::sqrt(
      v.dot(ba.manifold.charts[fb.chart].metric_at(fb.x) * v));
  PointRef foot = fb;
  if (vlen > 0.0) foot = boundary_ops().exp_map(fb, v, vlen);
  // back to the full atlas
  PointRef start{ba.parent_chart[foot.chart], VecN(n)};
  start.x.head(nb) = foot.x;
  start.x[nb] = 0.0;
  if (t == 0.0) return start;
  VecN nu = inward_normal(start.chart, start.x);
  return exp_map(start, nu, t);
}

}  // namespace collarforge
