#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "collarforge/cutoff.hpp"
#include "collarforge/errors.hpp"
#include "collarforge/grid.hpp"

namespace collarforge {

enum class ChartRole { Interior, BoundaryCollar, OuterCollar };

inline const char* to_string(ChartRole role) {
  switch (role) {
    case ChartRole::Interior: return "interior";
    case ChartRole::BoundaryCollar: return "boundary-collar";
    case ChartRole::OuterCollar: return "outer-collar";
  }
  return "interior";
}

inline ChartRole chart_role_from(const std::string& s) {
  if (s == "interior") return ChartRole::Interior;
  if (s == "boundary-collar") return ChartRole::BoundaryCollar;
  if (s == "outer-collar") return ChartRole::OuterCollar;
  fail(ErrorKind::Input, "unknown chart role '" + s + "'");
}

using MetricFn = std::function<MatN(const VecN&)>;
using MapFn = std::function<VecN(const VecN&)>;
using JacFn = std::function<MatN(const VecN&)>;

// One coordinate chart with its sampled metric coefficients. Collar charts
// use the LAST coordinate as the collar coordinate t, with the boundary at
// t = 0 for boundary-collar charts and t in (-L, r2) for outer-collar charts.
struct Chart {
  std::string id;
  ChartRole role = ChartRole::Interior;
  GridLayout grid;
  GridField<MatN> metric;

  // Closed-form metric for builtin families; empty for sampled charts.
  MetricFn analytic;
  std::string builtin_name;
  std::vector<double> builtin_params;

  int dim() const { return grid.dim(); }
  bool is_collar() const { return role != ChartRole::Interior; }
  int collar_axis() const { return grid.dim() - 1; }
  double collar_lo() const { return grid.lo[collar_axis()]; }
  double collar_hi() const { return grid.hi[collar_axis()]; }

  MatN metric_at(const VecN& x) const {
    if (analytic) return analytic(x);
    return metric.interpolate(x);
  }
};

// Sampled (and optionally closed-form) chart transition on an overlap box in
// source coordinates.
struct Transition {
  std::string source;
  std::string target;
  GridField<VecN> map_samples;       // layout = overlap grid
  GridField<MatN> jacobian_samples;  // d(target)/d(source)

  MapFn analytic_map;
  JacFn analytic_jac;
  std::string builtin_name;
  std::vector<double> builtin_params;

  const GridLayout& overlap() const { return map_samples.layout; }

  bool covers(const VecN& x, double pad = 0.0) const {
    return overlap().contains(x, pad);
  }

  VecN apply(const VecN& x) const {
    if (analytic_map) return analytic_map(x);
    return map_samples.interpolate(x);
  }

  MatN jacobian_at(const VecN& x) const {
    if (analytic_jac) return analytic_jac(x);
    return jacobian_samples.interpolate(x);
  }
};

struct ManifoldConstants {
  double r1 = 1.0;
  double r2 = 1.0;
  int m0 = 2;     // local-finiteness bound on chart multiplicity
  double c0 = 0;  // partition C^k bound (0 = not yet measured)
};

struct BasePoint {
  std::string chart;
  VecN coords;
};

// A point carried as chart index plus chart coordinates.
struct PointRef {
  int chart = -1;
  VecN x;
};

namespace detail {
inline double sym_defect(const MatN& m) {
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}
inline double min_eigenvalue(const MatN& m) {
  Eigen::SelfAdjointEigenSolver<MatN> es(0.5 * (m + m.transpose()));
  return es.eigenvalues().minCoeff();
}
}  // namespace detail

// Pointed Riemannian manifold presented as a chart atlas. Immutable once
// built; all downstream operations are pure functions over it.
struct PointedManifold {
  int dimension = 2;
  bool has_boundary = false;
  ManifoldConstants constants;
  std::vector<Chart> charts;
  std::vector<Transition> transitions;
  BasePoint base;

  int chart_index(const std::string& id) const {
    for (std::size_t i = 0; i < charts.size(); ++i)
      if (charts[i].id == id) return static_cast<int>(i);
    fail(ErrorKind::Input, "unknown chart id '" + id + "'");
  }

  const Chart& chart(const std::string& id) const {
    return charts[chart_index(id)];
  }

  std::vector<const Transition*> transitions_from(int chart) const {
    std::vector<const Transition*> out;
    const std::string& id = charts[chart].id;
    for (const auto& t : transitions)
      if (t.source == id) out.push_back(&t);
    return out;
  }

  const Transition* transition_between(int src, int tgt) const {
    for (const auto& t : transitions)
      if (t.source == charts[src].id && t.target == charts[tgt].id) return &t;
    return nullptr;
  }

  // All chart representations of a point, starting with the given one.
  // Uses direct transitions; atlases are expected to list a transition for
  // every overlapping chart pair.
  std::vector<PointRef> aliases(int chart, const VecN& x, double pad = 0.0) const {
    std::vector<PointRef> out;
    out.push_back({chart, x});
    for (const Transition* t : transitions_from(chart)) {
      if (!t->covers(x, pad)) continue;
      VecN y = t->apply(x);
      int tgt = chart_index(t->target);
      if (!charts[tgt].grid.contains(y, pad)) continue;
      bool seen = false;
      for (const auto& p : out)
        if (p.chart == tgt) { seen = true; break; }
      if (!seen) out.push_back({tgt, y});
    }
    return out;
  }

  std::optional<PointRef> map_to_chart(int chart, const VecN& x, int target) const {
    if (chart == target) return PointRef{chart, x};
    for (const auto& p : aliases(chart, x, 1e-9))
      if (p.chart == target) return p;
    return std::nullopt;
  }

  PointRef base_ref() const {
    return {chart_index(base.chart), base.coords};
  }

  // Structural invariants: symmetric SPD metric samples, resolution >= 4,
  // collar conventions, base point in an interior chart, nondegenerate
  // transition Jacobians.
  void validate() const {
    if (dimension < 2 || dimension > 3)
      fail(ErrorKind::Input, "dimension must be 2 or 3");
    for (const auto& c : charts) {
      if (c.dim() != dimension)
        fail(ErrorKind::Input, "chart '" + c.id + "' has wrong dimension");
      for (int r : c.grid.res)
        if (r < 4)
          fail(ErrorKind::Input, "chart '" + c.id + "' resolution below 4");
      if (c.role == ChartRole::BoundaryCollar && std::abs(c.collar_lo()) > 1e-12)
        fail(ErrorKind::Input,
             "boundary-collar chart '" + c.id + "' must place the boundary at t = 0");
      if (c.role == ChartRole::OuterCollar && !(c.collar_lo() < 0.0))
        fail(ErrorKind::Input,
             "outer-collar chart '" + c.id + "' must extend below t = 0");
      if (c.metric.values.size() != c.grid.size())
        fail(ErrorKind::Input, "chart '" + c.id + "' metric sample count mismatch");
      for (std::size_t f = 0; f < c.metric.values.size(); ++f) {
        const MatN& g = c.metric.values[f];
        if (detail::sym_defect(g) > 1e-12)
          fail(ErrorKind::Geometry, "chart '" + c.id + "' metric sample " +
                                        std::to_string(f) + " not symmetric");
        if (detail::min_eigenvalue(g) <= 0.0)
          fail(ErrorKind::Geometry, "chart '" + c.id + "' metric sample " +
                                        std::to_string(f) + " not positive definite");
      }
    }
    for (const auto& t : transitions) {
      chart_index(t.source);
      chart_index(t.target);
      for (const MatN& j : t.jacobian_samples.values)
        if (std::abs(j.determinant()) < 1e-14)
          fail(ErrorKind::Geometry, "transition " + t.source + "->" + t.target +
                                        " has a singular Jacobian sample");
    }
    int bi = chart_index(base.chart);
    if (charts[bi].role != ChartRole::Interior)
      fail(ErrorKind::Input, "base point must lie in an interior chart");
    if (!charts[bi].grid.contains(base.coords))
      fail(ErrorKind::Input, "base point outside its declared chart");
  }

  double min_metric_eigenvalue(int chart) const {
    double m = std::numeric_limits<double>::infinity();
    for (const MatN& g : charts[chart].metric.values)
      m = std::min(m, detail::min_eigenvalue(g));
    return m;
  }
};

// Closed-form tensor-product bump over a chart box: per-axis smooth ramps on
// the sides another chart covers, full weight elsewhere. The formula extends
// verbatim past t = 0 on collar charts (the t-lo side never ramps), which is
// what the extension operators rely on.
struct BumpSpec {
  GridLayout box;                 // chart box (lo/hi only used)
  std::vector<double> ramp_lo;    // ramp width per axis, 0 = no ramp
  std::vector<double> ramp_hi;

  double value(const VecN& x) const {
    double b = 1.0;
    for (int a = 0; a < box.dim(); ++a) {
      if (ramp_lo[a] > 0.0) {
        double d = x[a] - box.lo[a];
        if (d <= 0.0) return 0.0;
        if (d < ramp_lo[a]) b *= CutoffProfile::smoothstep(d / ramp_lo[a]);
      }
      if (ramp_hi[a] > 0.0) {
        double d = box.hi[a] - x[a];
        if (d <= 0.0) return 0.0;
        if (d < ramp_hi[a]) b *= CutoffProfile::smoothstep(d / ramp_hi[a]);
      }
    }
    return b;
  }
};

// Partition of unity subordinate to the atlas: normalized tensor-product
// bumps sampled on every chart grid, plus the closed-form bumps used when
// evaluating off the lattice (and beyond the boundary).
struct PartitionOfUnity {
  std::vector<GridField<double>> fields;  // one per chart, normalized
  std::vector<BumpSpec> bumps;            // one per chart, raw closed form
  int k = 2;
  double measured_ck_bound = 0.0;

  // Raw bump of chart `c` at a point given in chart `c` coordinates.
  double raw(int c, const VecN& x) const { return bumps[c].value(x); }

  // Normalized weight of chart `c` at a point of M; point given in chart `c`
  // coordinates. Sum runs over all charts covering the point.
  double weight(const PointedManifold& m, int c, const VecN& x) const {
    double num = raw(c, x);
    double den = 0.0;
    for (const auto& p : m.aliases(c, x)) den += raw(p.chart, p.x);
    if (den < 1e-12)
      fail(ErrorKind::Coverage, "partition weights vanish at a queried point");
    return num / den;
  }
};

namespace detail {

// Ramp width for a chart face: a face may only be ramped when some other
// chart genuinely extends past it. A transition votes for the face when its
// overlap box touches the face AND mapping a probe nudged just outside the
// face lands strictly inside the target chart. The width is read off the
// overlap box depth.
inline double face_cover_depth(const PointedManifold& m, int chart, int axis,
                               bool lo_side) {
  const Chart& c = m.charts[chart];
  double face = lo_side ? c.grid.lo[axis] : c.grid.hi[axis];
  double eps = 1e-6 * (c.grid.hi[axis] - c.grid.lo[axis]);
  double depth = 0.0;
  for (const Transition* t : m.transitions_from(chart)) {
    const GridLayout& ov = t->overlap();
    double slack = 1e-9 * (c.grid.hi[axis] - c.grid.lo[axis]);
    bool touches = lo_side ? (ov.lo[axis] <= face + slack)
                           : (ov.hi[axis] >= face - slack);
    if (!touches) continue;
    // probe just outside the face, at the overlap-box centre in other axes
    VecN probe(c.dim());
    for (int a = 0; a < c.dim(); ++a) probe[a] = 0.5 * (ov.lo[a] + ov.hi[a]);
    probe[axis] = lo_side ? face - eps : face + eps;
    VecN image = t->apply(probe);
    const Chart& tgt = m.charts[m.chart_index(t->target)];
    if (tgt.grid.margin(image) <= 0.5) continue;
    double d = lo_side ? (ov.hi[axis] - face) : (face - ov.lo[axis]);
    depth = std::max(depth, d);
  }
  return depth;
}

}  // namespace detail

// Bump-per-chart construction normalized to sum 1 on M. Ramps are placed on
// exactly the chart faces another chart covers; collar charts keep full
// weight at the t-lo side so the boundary face is never starved.
inline PartitionOfUnity build_partition_of_unity(const PointedManifold& m,
                                                 const CutoffProfile& profile,
                                                 int k = 2) {
  (void)profile;  // profile shape is fixed by CutoffProfile::smoothstep
  PartitionOfUnity pu;
  pu.k = k;
  const int nch = static_cast<int>(m.charts.size());
  pu.bumps.resize(nch);
  for (int c = 0; c < nch; ++c) {
    const Chart& ch = m.charts[c];
    BumpSpec b;
    b.box = ch.grid;
    b.ramp_lo.assign(ch.dim(), 0.0);
    b.ramp_hi.assign(ch.dim(), 0.0);
    for (int a = 0; a < ch.dim(); ++a) {
      double dlo = detail::face_cover_depth(m, c, a, true);
      double dhi = detail::face_cover_depth(m, c, a, false);
      double len = ch.grid.hi[a] - ch.grid.lo[a];
      if (dlo > 0.0) b.ramp_lo[a] = std::min(0.75 * dlo, 0.45 * len);
      if (dhi > 0.0) b.ramp_hi[a] = std::min(0.75 * dhi, 0.45 * len);
    }
    if (ch.is_collar()) b.ramp_lo[ch.collar_axis()] = 0.0;
    pu.bumps[c] = std::move(b);
  }

  // Sample and normalize on every chart grid.
  pu.fields.reserve(nch);
  for (int c = 0; c < nch; ++c) {
    GridField<double> f(m.charts[c].grid);
    for_each_node(f.layout, [&](const MultiIndex& idx) {
      VecN x = f.layout.node(idx);
      double num = pu.raw(c, x);
      double den = 0.0;
      for (const auto& p : m.aliases(c, x)) den += pu.raw(p.chart, p.x);
      if (den < 1e-12)
        fail(ErrorKind::Coverage, "charts fail to cover a grid node of chart '" +
                                      m.charts[c].id + "'");
      f.at(idx) = num / den;
    });
    pu.fields.push_back(std::move(f));
  }

  // Measured C^k bound: centered finite differences of the sampled weights,
  // maximized over charts, interior nodes and multi-indices up to order k.
  double bound = 0.0;
  for (int c = 0; c < nch; ++c) {
    const GridField<double>& f = pu.fields[c];
    const GridLayout& L = f.layout;
    const int d = L.dim();
    std::function<double(const MultiIndex&, const std::vector<int>&)> deriv =
        [&](const MultiIndex& idx, const std::vector<int>& axes) -> double {
      if (axes.empty()) return f.at(idx);
      std::vector<int> rest(axes.begin() + 1, axes.end());
      int a = axes[0];
      MultiIndex up = idx, dn = idx;
      up[a] += 1;
      dn[a] -= 1;
      return (deriv(up, rest) - deriv(dn, rest)) / (2.0 * L.spacing(a));
    };
    for_each_node(L, [&](const MultiIndex& idx) {
      for (int a = 0; a < d; ++a)
        if (idx[a] < k || idx[a] >= L.res[a] - k) return;
      std::vector<int> axes;
      std::function<void(int, int)> rec = [&](int order, int from) {
        if (order > 0) {
          bound = std::max(bound, std::abs(deriv(idx, axes)));
        }
        if (order == k) return;
        for (int a = from; a < d; ++a) {
          axes.push_back(a);
          rec(order + 1, a);
          axes.pop_back();
        }
      };
      bound = std::max(bound, std::abs(f.at(idx)));
      rec(0, 0);
    });
  }
  pu.measured_ck_bound = bound;
  return pu;
}

// Transition consistency report: cocycle defect over sampled triple overlaps
// and metric pullback mismatch g_target vs pushforward of g_source.
struct TransitionReport {
  double max_cocycle_defect = 0.0;
  double max_metric_mismatch = 0.0;
  std::string worst_overlap;
  bool passed = true;
};

inline TransitionReport check_transitions(const PointedManifold& m, double tol) {
  TransitionReport rep;
  for (const auto& t : m.transitions) {
    int src = m.chart_index(t.source);
    int tgt = m.chart_index(t.target);
    const Chart& cs = m.charts[src];
    const Chart& ct = m.charts[tgt];
    for_each_node(t.overlap(), [&](const MultiIndex& idx) {
      VecN x = t.overlap().node(idx);
      VecN y = t.map_samples.at(idx);
      MatN j = t.jacobian_samples.at(idx);
      // Pullback of g_target through the transition vs g_source.
      MatN pulled = j.transpose() * ct.metric_at(y) * j;
      double mism = (pulled - cs.metric_at(x)).cwiseAbs().maxCoeff();
      if (mism > rep.max_metric_mismatch) {
        rep.max_metric_mismatch = mism;
        if (mism > tol) rep.worst_overlap = t.source + "->" + t.target;
      }
      // Cocycle over triples: follow a second transition from the target and
      // compare against the direct route where one exists.
      for (const Transition* t2 : m.transitions_from(tgt)) {
        if (!t2->covers(y)) continue;
        int third = m.chart_index(t2->target);
        if (third == src) {
          VecN back = t2->apply(y);
          double defect = (back - x).cwiseAbs().maxCoeff();
          if (defect > rep.max_cocycle_defect) {
            rep.max_cocycle_defect = defect;
            if (defect > tol) rep.worst_overlap = t.source + "->" + t.target +
                                                  "->" + t2->target;
          }
        } else if (const Transition* direct = m.transition_between(src, third)) {
          if (!direct->covers(x)) continue;
          VecN via = t2->apply(y);
          VecN straight = direct->apply(x);
          double defect = (via - straight).cwiseAbs().maxCoeff();
          if (defect > rep.max_cocycle_defect) {
            rep.max_cocycle_defect = defect;
            if (defect > tol) rep.worst_overlap = t.source + "->" + t.target +
                                                  "->" + t2->target;
          }
        }
      }
    });
  }
  rep.passed = rep.max_cocycle_defect <= tol && rep.max_metric_mismatch <= tol;
  return rep;
}

}  // namespace collarforge
