#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "collarforge/cutoff.hpp"
#include "collarforge/manifold.hpp"
#include "collarforge/tensor.hpp"

namespace collarforge {

// ---------------------------------------------------------------------------
// Reflection coefficients: nodes lambda_k = k+1, weights solving the moment
// system  sum_k a_k (-lambda_k)^j = 1  for j = 0..m.
// ---------------------------------------------------------------------------

struct SeeleyCoefficients {
  int order = 0;                // m
  std::vector<double> nodes;    // lambda_k = k + 1
  std::vector<double> weights;  // a_k

  double weight_abs_sum() const {
    double s = 0.0;
    for (double a : weights) s += std::abs(a);
    return s;
  }

  double moment(int j) const {
    double s = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k)
      s += weights[k] * std::pow(-nodes[k], j);
    return s;
  }
};

// Closed Lagrange form a_k = prod_{i != k} (1 + lambda_i) / (lambda_i -
// lambda_k): the moment functional is evaluation at 1 represented on the
// nodes {-lambda_k}. All intermediates are exact integers for m <= 12.
inline SeeleyCoefficients seeley_coefficients(int m) {
  if (m < 0) fail(ErrorKind::Input, "seeley order must be nonnegative");
  if (m > 12)
    fail(ErrorKind::Conditioning,
         "seeley order above 12 is outside the conditioning guard");
  SeeleyCoefficients c;
  c.order = m;
  for (int k = 0; k <= m; ++k) c.nodes.push_back(k + 1.0);
  for (int k = 0; k <= m; ++k) {
    double num = 1.0, den = 1.0;
    for (int i = 0; i <= m; ++i) {
      if (i == k) continue;
      num *= 1.0 + c.nodes[i];
      den *= c.nodes[i] - c.nodes[k];
    }
    c.weights.push_back(num / den);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Stretching diffeomorphism phi(r) = r / (1 - r/r2), read as the analytic
// map (-inf, r2) -> (-r2, inf); the collar coordinate and the stretched
// coordinate are conjugated through it on both sides of the boundary.
// ---------------------------------------------------------------------------

struct StretchMap {
  double r2 = 1.0;

  double apply(double r) const { return r * r2 / (r2 - r); }
  double inverse(double s) const { return s * r2 / (r2 + s); }
  double derivative(double r) const {
    double d = r2 - r;
    return r2 * r2 / (d * d);
  }
};

// Cutoff wide enough that every reflection node engaged within the working
// depth sits in the cutoff's identity region; the far field beyond s1 is
// rolled off only when the caller asks for depths past it.
inline CutoffProfile covering_cutoff(int m, double r2, double depth) {
  StretchMap phi{r2};
  double smax = -phi.apply(-depth);  // |sigma| at the deepest extended point
  double s0 = (m + 1) * smax * 1.0000001 + 1e-12;
  return CutoffProfile(s0, 2.0 * s0);
}

// ---------------------------------------------------------------------------
// One-dimensional reflection: E_2 = E o Phi along a collar column.
// ---------------------------------------------------------------------------

// Extension value at collar coordinate t < 0 from an evaluator of u on
// [0, r2). For t >= 0 returns u(t).
inline double seeley_extend_value(const std::function<double(double)>& u,
                                  const SeeleyCoefficients& c,
                                  const CutoffProfile& cutoff, double r2,
                                  double t) {
  if (t >= 0.0) return u(t);
  StretchMap phi{r2};
  double s = -phi.apply(t);  // |sigma| > 0
  double acc = 0.0;
  for (std::size_t k = 0; k < c.nodes.size(); ++k) {
    double arg = c.nodes[k] * s;
    double w = cutoff(arg);
    if (w == 0.0) continue;
    acc += c.weights[k] * w * u(phi.inverse(arg));
  }
  return acc;
}

// Grid layout extended along the collar (last) axis down to about -depth,
// keeping the node spacing; the t = 0 node stays on the lattice.
inline GridLayout extend_layout(const GridLayout& L, double depth) {
  const int ta = L.dim() - 1;
  if (std::abs(L.lo[ta]) > 1e-12)
    fail(ErrorKind::Input, "collar grid must start at t = 0");
  double h = L.spacing(ta);
  int n_neg = std::max(1, static_cast<int>(std::lround(depth / h)));
  GridLayout out = L;
  out.lo[ta] = -n_neg * h;
  out.res[ta] = L.res[ta] + n_neg;
  return out;
}

// Chart-wise extension of sampled data: restriction to t >= 0 is a bitwise
// copy; below the boundary each base column is reflected through the
// stretched coordinate with linear interpolation along t.
inline GridField<double> extend_scalar_chart(const GridField<double>& u,
                                             const SeeleyCoefficients& c,
                                             const CutoffProfile& cutoff,
                                             double depth) {
  const GridLayout& L = u.layout;
  const int ta = L.dim() - 1;
  const double r2 = L.hi[ta];
  GridLayout ext = extend_layout(L, depth);
  const int shift = ext.res[ta] - L.res[ta];
  GridField<double> out(ext);
  for_each_node(ext, [&](const MultiIndex& idx) {
    MultiIndex src = idx;
    src[ta] = idx[ta] - shift;
    if (src[ta] >= 0) {
      out.at(idx) = u.at(src);
      return;
    }
    double t = ext.lo[ta] + idx[ta] * ext.spacing(ta);
    auto column = [&](double tt) {
      double uu = (tt - L.lo[ta]) / L.spacing(ta);
      int i = std::clamp(static_cast<int>(std::floor(uu)), 0, L.res[ta] - 2);
      double w = std::clamp(uu - i, 0.0, 1.0);
      MultiIndex lo = src, hi = src;
      lo[ta] = i;
      hi[ta] = i + 1;
      return (1.0 - w) * u.at(lo) + w * u.at(hi);
    };
    out.at(idx) = seeley_extend_value(column, c, cutoff, r2, t);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Extended atlas bookkeeping shared by the global scalar extension and the
// metric extension: outer-collar grids, seam transitions carried past t = 0,
// and the renormalized extended weights.
// ---------------------------------------------------------------------------

class CollarExtension {
 public:
  CollarExtension(const PointedManifold& m, const PartitionOfUnity& pu,
                  double depth, double radius = 0.0, const TensorOps* ops = nullptr)
      : base_(m), pu_(pu) {
    const int nch = static_cast<int>(m.charts.size());
    extended_.assign(nch, false);
    in_range_.assign(nch, true);
    if (radius > 0.0 && ops) mark_range(radius, *ops);

    // extended shadow atlas: same charts with collar grids stretched down
    shadow_ = m;
    depth_ = 0.0;
    for (int c = 0; c < nch; ++c) {
      const Chart& ch = m.charts[c];
      if (ch.role != ChartRole::BoundaryCollar || !in_range_[c]) continue;
      GridLayout ext = extend_layout(ch.grid, depth);
      shadow_.charts[c].grid = ext;
      shadow_.charts[c].role = ChartRole::OuterCollar;
      // metric samples are not used through the shadow; keep layout coherent
      shadow_.charts[c].metric = GridField<MatN>(ext);
      for (MatN& g : shadow_.charts[c].metric.values)
        g = MatN::Identity(m.dimension, m.dimension);
      shadow_.charts[c].analytic = nullptr;
      extended_[c] = true;
      depth_ = std::max(depth_, -ext.lo[ext.dim() - 1]);
    }
    // carry collar-to-collar transitions past the boundary: the collar
    // coordinate passes through, the base part is evaluated at t clamped to 0
    for (Transition& t : shadow_.transitions) {
      int src = m.chart_index(t.source), tgt = m.chart_index(t.target);
      if (!extended_[src] || !extended_[tgt]) continue;
      const GridLayout& ov = t.overlap();
      const int ta = ov.dim() - 1;
      if (ov.lo[ta] > 1e-12) continue;  // seam does not touch the boundary
      GridLayout ext_ov = t.overlap();
      ext_ov.lo[ta] = shadow_.charts[src].grid.lo[ta];
      ext_ov.res[ta] += 2;
      const Transition& orig = find_transition(m, t.source, t.target, ov);
      MapFn base_map = [&orig, ta](const VecN& x) {
        VecN xc = x;
        xc[ta] = std::max(0.0, x[ta]);
        VecN y = orig.apply(xc);
        y[ta] = x[ta];
        return y;
      };
      JacFn base_jac = [&orig, ta](const VecN& x) {
        VecN xc = x;
        xc[ta] = std::max(0.0, x[ta]);
        MatN J = orig.jacobian_at(xc);
        for (int i = 0; i < J.rows(); ++i) {
          J(ta, i) = 0.0;
          J(i, ta) = 0.0;
        }
        J(ta, ta) = 1.0;
        return J;
      };
      t.analytic_map = base_map;
      t.analytic_jac = base_jac;
      t.map_samples = GridField<VecN>(ext_ov);
      t.jacobian_samples = GridField<MatN>(ext_ov);
      for_each_node(ext_ov, [&](const MultiIndex& idx) {
        VecN x = ext_ov.node(idx);
        t.map_samples.at(idx) = base_map(x);
        t.jacobian_samples.at(idx) = base_jac(x);
      });
    }
  }

  const PointedManifold& shadow() const { return shadow_; }
  const PointedManifold& base() const { return base_; }
  double depth() const { return depth_; }
  bool extended(int chart) const { return extended_[chart]; }
  bool in_range(int chart) const { return in_range_[chart]; }
  const GridLayout& layout(int chart) const { return shadow_.charts[chart].grid; }

  std::vector<PointRef> aliases(int chart, const VecN& x) const {
    return shadow_.aliases(chart, x);
  }

  // raw extended weight of one chart (closed-form bump, t-lo never ramped)
  double raw_weight(int chart, const VecN& x) const {
    return pu_.bumps[chart].value(x);
  }

  // renormalized extended weight psi-hat
  double weight(int chart, const VecN& x) const {
    double den = raw_weight_sum(chart, x);
    if (den < 1e-9) return 0.0;
    return raw_weight(chart, x) / den;
  }

  double raw_weight_sum(int chart, const VecN& x) const {
    double den = 0.0;
    for (const auto& p : aliases(chart, x)) den += raw_weight(p.chart, p.x);
    return den;
  }

 private:
  static const Transition& find_transition(const PointedManifold& m,
                                           const std::string& src,
                                           const std::string& tgt,
                                           const GridLayout& ov) {
    for (const Transition& t : m.transitions)
      if (t.source == src && t.target == tgt &&
          (t.overlap().lo - ov.lo).norm() < 1e-12 &&
          (t.overlap().hi - ov.hi).norm() < 1e-12)
        return t;
    fail(ErrorKind::Input, "transition lookup failed");
  }

  void mark_range(double radius, const TensorOps& ops) {
    std::vector<double> dist = ops.graph_distances(base_.base_ref());
    in_range_.assign(base_.charts.size(), false);
    for (std::size_t id = 0; id < dist.size(); ++id) {
      if (dist[id] <= radius) {
        in_range_[ops.graph_node(id).chart] = true;
      }
    }
  }

  const PointedManifold& base_;
  const PartitionOfUnity& pu_;
  PointedManifold shadow_;
  std::vector<char> extended_;
  std::vector<char> in_range_;
  double depth_ = 0.0;
};

// ---------------------------------------------------------------------------
// Global extension E_M(u) = sum_l psi-hat_l (E_2(u o kappa_l) o kappa-hat_l^-1)
// with renormalized extended weights.
// ---------------------------------------------------------------------------

struct ExtendedScalarField {
  std::vector<GridField<double>> fields;  // per chart, extended where collar
  std::vector<char> extended;
  std::vector<char> in_range;
  double depth = 0.0;
  double sup_abs = 0.0;  // measured sup |E_M(u)| over the output
};

namespace seeley_detail {

// Chart-wise reflection of a sampled field evaluated at an arbitrary point of
// the extended chart (base part interpolated, collar column reflected).
inline double chart_extension_at(const GridField<double>& u,
                                 const SeeleyCoefficients& c,
                                 const CutoffProfile& cutoff, const VecN& x) {
  const GridLayout& L = u.layout;
  const int ta = L.dim() - 1;
  const double r2 = L.hi[ta];
  if (x[ta] >= 0.0) return u.interpolate(x);
  auto column = [&](double tt) {
    VecN xx = x;
    xx[ta] = tt;
    return u.interpolate(xx);
  };
  return seeley_extend_value(column, c, cutoff, r2, x[ta]);
}

}  // namespace seeley_detail

// u given per chart on the base grids. Charts meeting B(x0, r) must carry
// samples; pass radius 0 to extend everywhere.
inline ExtendedScalarField extend_scalar_global(
    const PointedManifold& m, const PartitionOfUnity& pu,
    const std::vector<GridField<double>>& u, const SeeleyCoefficients& coeffs,
    const CutoffProfile& cutoff, double radius = 0.0, double depth = 0.0,
    const TensorOps* ops = nullptr) {
  if (depth <= 0.0) depth = m.constants.r2;
  CollarExtension ext(m, pu, depth, radius, ops);
  const int nch = static_cast<int>(m.charts.size());
  for (int c = 0; c < nch; ++c) {
    if (!ext.in_range(c)) continue;
    if (u[c].values.size() != m.charts[c].grid.size())
      fail(ErrorKind::Coverage, "chart '" + m.charts[c].id +
                                    "' meets the requested ball but lacks samples");
  }
  ExtendedScalarField out;
  out.depth = ext.depth();
  out.fields.resize(nch);
  out.extended.assign(nch, false);
  out.in_range.assign(nch, false);
  for (int c = 0; c < nch; ++c) {
    out.in_range[c] = ext.in_range(c);
    if (!ext.in_range(c)) {
      out.fields[c] = GridField<double>();
      continue;
    }
    out.extended[c] = ext.extended(c);
    const GridLayout& L = ext.layout(c);
    GridField<double> f(L);
    const int ta = L.dim() - 1;
    const GridLayout& baseL = m.charts[c].grid;
    const int shift = L.res[ta] - baseL.res[ta];
    for_each_node(L, [&](const MultiIndex& idx) {
      if (!ext.extended(c) || idx[ta] >= shift) {
        // on M the extension restricts to u exactly
        MultiIndex src = idx;
        src[ta] = idx[ta] - (ext.extended(c) ? shift : 0);
        f.at(idx) = u[c].at(src);
        return;
      }
      VecN x = L.node(idx);
      double den = 0.0, num = 0.0;
      for (const auto& p : ext.aliases(c, x)) {
        if (!ext.in_range(p.chart) || !ext.extended(p.chart)) continue;
        double w = ext.raw_weight(p.chart, p.x);
        den += w;
        if (w > 0.0)
          num += w * seeley_detail::chart_extension_at(u[p.chart], coeffs,
                                                       cutoff, p.x);
      }
      f.at(idx) = den < 1e-9 ? 0.0 : num / den;
    });
    out.fields[c] = std::move(f);
  }
  for (int c = 0; c < nch; ++c)
    for (double v : out.fields[c].values)
      out.sup_abs = std::max(out.sup_abs, std::abs(v));
  return out;
}

// ---------------------------------------------------------------------------
// Infimum-preserving positive extension F(u) = exp(E_M(ln u)).
// ---------------------------------------------------------------------------

struct PositiveExtension {
  ExtendedScalarField field;
  double beta = 0.0;  // certified lower bound on inf F(u)
};

inline PositiveExtension extend_positive(
    const PointedManifold& m, const PartitionOfUnity& pu,
    const std::vector<GridField<double>>& u, double b,
    const SeeleyCoefficients& coeffs, const CutoffProfile& cutoff,
    double radius = 0.0, double depth = 0.0, const TensorOps* ops = nullptr) {
  if (!(b > 0.0)) fail(ErrorKind::Input, "positive extension requires b > 0");
  std::vector<GridField<double>> ln_u(u.size());
  double sup_ln = 0.0;
  for (std::size_t c = 0; c < u.size(); ++c) {
    ln_u[c] = u[c];
    for (double& v : ln_u[c].values) {
      if (v < b)
        fail(ErrorKind::Precondition,
             "a sample falls below the declared infimum bound b");
      v = std::log(v);
      sup_ln = std::max(sup_ln, std::abs(v));
    }
  }
  PositiveExtension out;
  out.field = extend_scalar_global(m, pu, ln_u, coeffs, cutoff, radius, depth, ops);
  for (auto& f : out.field.fields)
    for (double& v : f.values) v = std::exp(v);
  out.field.sup_abs = 0.0;
  for (auto& f : out.field.fields)
    for (double v : f.values)
      out.field.sup_abs = std::max(out.field.sup_abs, std::abs(v));
  // |E_M(w)| <= sum|a_k| sup|w| pointwise (weights sum to 1, cutoffs <= 1),
  // so inf F(u) >= exp(-sum|a_k| sup|ln u|).
  out.beta = std::min(std::exp(-coeffs.weight_abs_sum() * sup_ln), b);
  return out;
}

}  // namespace collarforge
