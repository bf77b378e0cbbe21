#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "collarforge/manifold.hpp"

namespace collarforge {

using ParamMap = std::map<std::string, double>;

namespace builtin {

inline double get_param(const ParamMap& p, const std::string& key, double dflt) {
  auto it = p.find(key);
  return it == p.end() ? dflt : it->second;
}

inline double require_positive(const ParamMap& p, const std::string& key,
                               double dflt) {
  double v = get_param(p, key, dflt);
  if (!(v > 0.0))
    fail(ErrorKind::Input, "parameter '" + key + "' must be positive");
  return v;
}

// ---------------------------------------------------------------------------
// Registries: closed-form metrics and transition maps, reattachable by name
// after file round-trips.
// ---------------------------------------------------------------------------

inline MetricFn metric_from_registry(const std::string& name,
                                     const std::vector<double>& p) {
  if (name == "identity") {
    int n = static_cast<int>(p.at(0));
    double scale = p.size() > 1 ? p[1] : 1.0;
    return [n, scale](const VecN&) { return MatN(scale * MatN::Identity(n, n)); };
  }
  if (name == "polar_annulus") {  // coords (phi, rho), g = diag(rho^2, 1)
    double scale = p.empty() ? 1.0 : p[0];
    return [scale](const VecN& x) {
      MatN g = MatN::Identity(2, 2);
      g(0, 0) = x[1] * x[1];
      return MatN(scale * g);
    };
  }
  if (name == "ball_collar") {  // coords (phi, t), rho = R - t
    double R = p.at(0);
    double scale = p.size() > 1 ? p[1] : 1.0;
    return [R, scale](const VecN& x) {
      MatN g = MatN::Identity(2, 2);
      double rho = R - x[1];
      g(0, 0) = rho * rho;
      return MatN(scale * g);
    };
  }
  if (name == "stereo") {  // stereographic disk on sphere of radius rs
    double rs = p.at(0);
    double scale = p.size() > 1 ? p[1] : 1.0;
    return [rs, scale](const VecN& x) {
      double s2 = x.squaredNorm();
      double f = 2.0 * rs / (1.0 + s2);
      return MatN(scale * f * f * MatN::Identity(2, 2));
    };
  }
  if (name == "cap_collar") {  // coords (phi, t), theta = theta_max - t/rs
    double rs = p.at(0), theta_max = p.at(1);
    double scale = p.size() > 2 ? p[2] : 1.0;
    return [rs, theta_max, scale](const VecN& x) {
      MatN g = MatN::Identity(2, 2);
      double th = theta_max - x[1] / rs;
      double c = rs * std::sin(th);
      g(0, 0) = c * c;
      return MatN(scale * g);
    };
  }
  if (name == "revolution") {  // coords (phi, t), g = diag(rho(t)^2, 1)
    double a = p.at(0), b = p.at(1);
    double scale = p.size() > 2 ? p[2] : 1.0;
    return [a, b, scale](const VecN& x) {
      MatN g = MatN::Identity(2, 2);
      double rho = a + b * std::sin(x[1]);
      g(0, 0) = rho * rho;
      return MatN(scale * g);
    };
  }
  if (name == "sphere_polar") {  // coords (theta, phi), g = rs^2 diag(1, sin^2)
    double rs = p.at(0);
    double scale = p.size() > 1 ? p[1] : 1.0;
    return [rs, scale](const VecN& x) {
      MatN g = MatN::Identity(2, 2);
      double s = std::sin(x[0]);
      g(1, 1) = s * s;
      return MatN(scale * rs * rs * g);
    };
  }
  if (name == "sphere_line") {  // coords (theta, phi, z): S^2 x R product
    double rs = p.at(0);
    double scale = p.size() > 1 ? p[1] : 1.0;
    return [rs, scale](const VecN& x) {
      MatN g = MatN::Identity(3, 3);
      double s = std::sin(x[0]);
      g(0, 0) = rs * rs;
      g(1, 1) = rs * rs * s * s;
      return MatN(scale * g);
    };
  }
  fail(ErrorKind::Input, "unknown builtin metric '" + name + "'");
}

// Affine map y = A x + b; params = n, row-major A, then b.
inline MapFn map_from_registry(const std::string& name,
                               const std::vector<double>& p) {
  if (name == "affine") {
    int n = static_cast<int>(p.at(0));
    MatN A(n, n);
    VecN b(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = p.at(1 + i * n + j);
    for (int i = 0; i < n; ++i) b[i] = p.at(1 + n * n + i);
    return [A, b](const VecN& x) { return VecN(A * x + b); };
  }
  if (name == "cart_to_polar") {  // (x, y) -> (phi in [wrap_lo, wrap_lo+2pi), rho)
    double wrap_lo = p.at(0);
    return [wrap_lo](const VecN& x) {
      VecN y(2);
      double phi = std::atan2(x[1], x[0]);
      while (phi < wrap_lo) phi += 2.0 * std::numbers::pi;
      while (phi >= wrap_lo + 2.0 * std::numbers::pi) phi -= 2.0 * std::numbers::pi;
      y[0] = phi;
      y[1] = x.norm();
      return y;
    };
  }
  if (name == "polar_to_cart") {  // (phi, rho) -> (x, y)
    return [](const VecN& x) {
      VecN y(2);
      y[0] = x[1] * std::cos(x[0]);
      y[1] = x[1] * std::sin(x[0]);
      return y;
    };
  }
  if (name == "cart_to_ball_collar") {  // (x, y) -> (phi, t = R - rho)
    double wrap_lo = p.at(0), R = p.at(1);
    return [wrap_lo, R](const VecN& x) {
      VecN y(2);
      double phi = std::atan2(x[1], x[0]);
      while (phi < wrap_lo) phi += 2.0 * std::numbers::pi;
      while (phi >= wrap_lo + 2.0 * std::numbers::pi) phi -= 2.0 * std::numbers::pi;
      y[0] = phi;
      y[1] = R - x.norm();
      return y;
    };
  }
  if (name == "stereo_to_cap_collar") {  // w -> (phi, t = rs (theta_max - theta))
    double wrap_lo = p.at(0), rs = p.at(1), theta_max = p.at(2);
    return [wrap_lo, rs, theta_max](const VecN& w) {
      VecN y(2);
      double s = w.norm();
      double theta = 2.0 * std::atan(s);
      double phi = std::atan2(w[1], w[0]);
      while (phi < wrap_lo) phi += 2.0 * std::numbers::pi;
      while (phi >= wrap_lo + 2.0 * std::numbers::pi) phi -= 2.0 * std::numbers::pi;
      y[0] = phi;
      y[1] = rs * (theta_max - theta);
      return y;
    };
  }
  if (name == "cap_collar_to_stereo") {  // (phi, t) -> w = tan(theta/2) e^{i phi}
    double rs = p.at(0), theta_max = p.at(1);
    return [rs, theta_max](const VecN& x) {
      VecN y(2);
      double theta = theta_max - x[1] / rs;
      double s = std::tan(0.5 * theta);
      y[0] = s * std::cos(x[0]);
      y[1] = s * std::sin(x[0]);
      return y;
    };
  }
  if (name == "stereo_antipodal") {  // w -> (w1, -w2)/|w|^2
    return [](const VecN& w) {
      double s2 = w.squaredNorm();
      VecN y(2);
      y[0] = w[0] / s2;
      y[1] = -w[1] / s2;
      return y;
    };
  }
  fail(ErrorKind::Input, "unknown builtin transition '" + name + "'");
}

// Fourth-order central finite-difference Jacobian of an analytic map; the
// registry maps are smooth so this is exact to ~1e-11.
inline JacFn fd_jacobian_of(const MapFn& f, int n, double h = 1e-4) {
  return [f, n, h](const VecN& x) {
    MatN J(n, n);
    for (int j = 0; j < n; ++j) {
      VecN e = VecN::Zero(n);
      e[j] = 1.0;
      VecN fp1 = f(x + h * e), fm1 = f(x - h * e);
      VecN fp2 = f(x + 2.0 * h * e), fm2 = f(x - 2.0 * h * e);
      J.col(j) = (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h);
    }
    return J;
  };
}

// Exact Jacobians for the registry maps.
inline JacFn jac_from_registry(const std::string& name,
                               const std::vector<double>& p) {
  if (name == "affine") {
    int n = static_cast<int>(p.at(0));
    MatN A(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = p.at(1 + i * n + j);
    return [A](const VecN&) { return A; };
  }
  if (name == "cart_to_polar" || name == "cart_to_ball_collar") {
    double tsign = (name == "cart_to_polar") ? 1.0 : -1.0;
    return [tsign](const VecN& x) {
      double r2 = x.squaredNorm(), r = std::sqrt(r2);
      MatN J(2, 2);
      J << -x[1] / r2, x[0] / r2, tsign * x[0] / r, tsign * x[1] / r;
      return J;
    };
  }
  if (name == "polar_to_cart") {
    return [](const VecN& x) {
      MatN J(2, 2);
      J << -x[1] * std::sin(x[0]), std::cos(x[0]), x[1] * std::cos(x[0]),
          std::sin(x[0]);
      return J;
    };
  }
  if (name == "stereo_to_cap_collar") {
    double rs = p.at(1);
    return [rs](const VecN& w) {
      double s2 = w.squaredNorm(), s = std::sqrt(s2);
      MatN J(2, 2);
      double dt = -rs * 2.0 / (1.0 + s2) / s;
      J << -w[1] / s2, w[0] / s2, dt * w[0], dt * w[1];
      return J;
    };
  }
  if (name == "cap_collar_to_stereo") {
    double rs = p.at(0), theta_max = p.at(1);
    return [rs, theta_max](const VecN& x) {
      double theta = theta_max - x[1] / rs;
      double tn = std::tan(0.5 * theta);
      double c = std::cos(0.5 * theta);
      double dsdt = -0.5 / (rs * c * c);
      MatN J(2, 2);
      J << -tn * std::sin(x[0]), dsdt * std::cos(x[0]), tn * std::cos(x[0]),
          dsdt * std::sin(x[0]);
      return J;
    };
  }
  if (name == "stereo_antipodal") {
    return [](const VecN& w) {
      double s2 = w.squaredNorm(), s4 = s2 * s2;
      MatN J(2, 2);
      J << (s2 - 2 * w[0] * w[0]) / s4, -2 * w[0] * w[1] / s4,
          2 * w[0] * w[1] / s4, -(s2 - 2 * w[1] * w[1]) / s4;
      return J;
    };
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Construction helpers
// ---------------------------------------------------------------------------

inline GridLayout make_layout(const std::vector<double>& lo,
                              const std::vector<double>& hi,
                              const std::vector<int>& res) {
  GridLayout L;
  int n = static_cast<int>(res.size());
  L.lo.resize(n);
  L.hi.resize(n);
  for (int a = 0; a < n; ++a) {
    L.lo[a] = lo[a];
    L.hi[a] = hi[a];
  }
  L.res = res;
  return L;
}

inline Chart sample_chart(const std::string& id, ChartRole role,
                          GridLayout layout, const std::string& metric_name,
                          const std::vector<double>& metric_params) {
  Chart c;
  c.id = id;
  c.role = role;
  c.grid = layout;
  c.builtin_name = metric_name;
  c.builtin_params = metric_params;
  c.analytic = metric_from_registry(metric_name, metric_params);
  c.metric = GridField<MatN>(layout);
  for_each_node(layout, [&](const MultiIndex& idx) {
    c.metric.at(idx) = c.analytic(layout.node(idx));
  });
  return c;
}

inline Transition sample_transition(const std::string& src, const std::string& tgt,
                                    GridLayout overlap, const std::string& map_name,
                                    const std::vector<double>& map_params) {
  Transition t;
  t.source = src;
  t.target = tgt;
  t.builtin_name = map_name;
  t.builtin_params = map_params;
  t.analytic_map = map_from_registry(map_name, map_params);
  t.analytic_jac = jac_from_registry(map_name, map_params);
  if (!t.analytic_jac)
    t.analytic_jac = fd_jacobian_of(t.analytic_map, overlap.dim());
  t.map_samples = GridField<VecN>(overlap);
  t.jacobian_samples = GridField<MatN>(overlap);
  for_each_node(overlap, [&](const MultiIndex& idx) {
    VecN x = overlap.node(idx);
    t.map_samples.at(idx) = t.analytic_map(x);
    t.jacobian_samples.at(idx) = t.analytic_jac(x);
  });
  return t;
}

inline std::vector<double> affine_params(const MatN& A, const VecN& b) {
  int n = static_cast<int>(b.size());
  std::vector<double> p;
  p.push_back(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) p.push_back(A(i, j));
  for (int i = 0; i < n; ++i) p.push_back(b[i]);
  return p;
}

// Both directions of an affine identification restricted to a box given in
// source coordinates.
inline void add_affine_pair(std::vector<Transition>& out, const std::string& a,
                            const std::string& b, const GridLayout& ov_in_a,
                            const MatN& A, const VecN& shift,
                            const std::vector<int>& res) {
  out.push_back(sample_transition(a, b, ov_in_a, "affine", affine_params(A, shift)));
  MatN Ainv = A.inverse();
  GridLayout ov_b = ov_in_a;
  VecN lo_b = A * ov_in_a.lo + shift;
  VecN hi_b = A * ov_in_a.hi + shift;
  for (int i = 0; i < ov_b.dim(); ++i) {
    ov_b.lo[i] = std::min(lo_b[i], hi_b[i]);
    ov_b.hi[i] = std::max(lo_b[i], hi_b[i]);
  }
  ov_b.res = res;
  out.push_back(sample_transition(b, a, ov_b, "affine",
                                  affine_params(Ainv, VecN(-Ainv * shift))));
}

inline int res_for(double extent, double h, int lo = 6, int hi = 160) {
  int r = static_cast<int>(std::lround(extent / h)) + 1;
  return std::clamp(r, lo, hi);
}

// ---------------------------------------------------------------------------
// flat_slab: half-space slice [-w, w]^{n-1} x [0, H], boundary at t = 0.
// ---------------------------------------------------------------------------
inline PointedManifold flat_slab(const ParamMap& p) {
  int n = static_cast<int>(get_param(p, "dim", 2));
  if (n < 2 || n > 3) fail(ErrorKind::Input, "flat_slab: dim must be 2 or 3");
  double r2 = require_positive(p, "r2", 1.0);
  double w = require_positive(p, "width", 2.0);
  double H = require_positive(p, "height", std::max(2.0, 2.0 * r2));
  if (H <= r2) fail(ErrorKind::Input, "flat_slab: height must exceed r2");
  int res = static_cast<int>(require_positive(p, "resolution", 33));
  double h = std::max(2.0 * w, H) / (res - 1);

  PointedManifold m;
  m.dimension = n;
  m.has_boundary = true;
  m.constants = {w, r2, 2, 0.0};

  std::vector<double> lo_c(n, -w), hi_c(n, w);
  std::vector<int> rc(n, res_for(2.0 * w, h));
  lo_c[n - 1] = 0.0;
  hi_c[n - 1] = r2;
  rc[n - 1] = res_for(r2, h, 8);
  m.charts.push_back(sample_chart("collar", ChartRole::BoundaryCollar,
                                  make_layout(lo_c, hi_c, rc), "identity",
                                  {double(n), get_param(p, "scale", 1.0)}));

  std::vector<double> lo_i(n, -w), hi_i(n, w);
  std::vector<int> ri(n, res_for(2.0 * w, h));
  lo_i[n - 1] = 0.5 * r2;
  hi_i[n - 1] = H;
  ri[n - 1] = res_for(H - 0.5 * r2, h, 8);
  m.charts.push_back(sample_chart("interior", ChartRole::Interior,
                                  make_layout(lo_i, hi_i, ri), "identity",
                                  {double(n), get_param(p, "scale", 1.0)}));

  std::vector<double> lo_ov = lo_c, hi_ov = hi_c;
  lo_ov[n - 1] = 0.5 * r2;
  hi_ov[n - 1] = r2;
  std::vector<int> rov(n, 9);
  add_affine_pair(m.transitions, "collar", "interior",
                  make_layout(lo_ov, hi_ov, rov), MatN(MatN::Identity(n, n)),
                  VecN(VecN::Zero(n)), rov);

  m.base.chart = "interior";
  m.base.coords = VecN::Zero(n);
  m.base.coords[n - 1] = get_param(p, "base_t", 0.75 * H);
  return m;
}

// ---------------------------------------------------------------------------
// euclidean_ball: closed disk of radius R in R^2. Cartesian core, two polar
// annulus charts, two boundary-collar charts (phi windows A/B).
// ---------------------------------------------------------------------------
inline PointedManifold euclidean_ball(const ParamMap& p) {
  int n = static_cast<int>(get_param(p, "dim", 2));
  if (n != 2) fail(ErrorKind::Input, "euclidean_ball: only dim 2 is generated");
  double R = require_positive(p, "radius", 1.0);
  double r2 = require_positive(p, "r2", std::min(0.4, 0.25 * R));
  if (r2 >= 0.5 * R) fail(ErrorKind::Input, "euclidean_ball: r2 must be < R/2");
  int res = static_cast<int>(require_positive(p, "resolution", 49));
  double scale = get_param(p, "scale", 1.0);
  const double pi = std::numbers::pi;
  double dphi = 0.4;

  double a = 0.4 * R;          // half-width of the Cartesian core box
  double rho_in = 0.3 * R;     // inner radius of the annulus charts
  double rho_out = R - 0.25 * r2;
  double h = 2.0 * R / (res - 1);

  PointedManifold m;
  m.dimension = 2;
  m.has_boundary = true;
  m.constants = {pi * R, r2, 4, 0.0};

  m.charts.push_back(sample_chart(
      "core", ChartRole::Interior,
      make_layout({-a, -a}, {a, a}, {res_for(2 * a, h), res_for(2 * a, h)}),
      "identity", {2.0, scale}));

  int res_phi = res_for((pi + 2 * dphi) * R, h);
  int res_rho = res_for(rho_out - rho_in, h, 8);
  int res_t = res_for(r2, h, 8);
  m.charts.push_back(sample_chart(
      "annA", ChartRole::Interior,
      make_layout({-dphi, rho_in}, {pi + dphi, rho_out}, {res_phi, res_rho}),
      "polar_annulus", {scale}));
  m.charts.push_back(sample_chart(
      "annB", ChartRole::Interior,
      make_layout({pi - dphi, rho_in}, {2 * pi + dphi, rho_out}, {res_phi, res_rho}),
      "polar_annulus", {scale}));
  m.charts.push_back(sample_chart(
      "colA", ChartRole::BoundaryCollar,
      make_layout({-dphi, 0.0}, {pi + dphi, r2}, {res_phi, res_t}),
      "ball_collar", {R, scale}));
  m.charts.push_back(sample_chart(
      "colB", ChartRole::BoundaryCollar,
      make_layout({pi - dphi, 0.0}, {2 * pi + dphi, r2}, {res_phi, res_t}),
      "ball_collar", {R, scale}));

  // Core -> annulus/collar: four bands avoiding the origin; containment on
  // the target side filters the rest.
  auto band = [&](int axis, double s0, double s1) {
    std::vector<double> lo = {-a, -a}, hi = {a, a};
    lo[axis] = s0;
    hi[axis] = s1;
    return make_layout(lo, hi, {9, 9});
  };
  std::vector<GridLayout> bands = {band(1, 0.2 * R, a), band(1, -a, -0.2 * R),
                                   band(0, 0.2 * R, a), band(0, -a, -0.2 * R)};
  for (const auto& bl : bands) {
    m.transitions.push_back(sample_transition("core", "annA", bl, "cart_to_polar",
                                              {-dphi}));
    m.transitions.push_back(sample_transition("core", "annB", bl, "cart_to_polar",
                                              {pi - dphi}));
  }
  GridLayout annA_full = make_layout({-dphi, rho_in}, {pi + dphi, rho_out}, {17, 9});
  GridLayout annB_full =
      make_layout({pi - dphi, rho_in}, {2 * pi + dphi, rho_out}, {17, 9});
  m.transitions.push_back(
      sample_transition("annA", "core", annA_full, "polar_to_cart", {}));
  m.transitions.push_back(
      sample_transition("annB", "core", annB_full, "polar_to_cart", {}));

  // Annulus <-> collar, same window: t = R - rho.
  MatN flip(2, 2);
  flip << 1, 0, 0, -1;
  VecN toT(2), toRho(2);
  toT << 0, R;
  toRho << 0, R;
  auto ann_col = [&](const std::string& ann, const std::string& col, double plo,
                     double phi_hi) {
    GridLayout ov =
        make_layout({plo, R - r2}, {phi_hi, rho_out}, {17, 7});
    add_affine_pair(m.transitions, ann, col, ov, flip, toT, {17, 7});
  };
  ann_col("annA", "colA", -dphi, pi + dphi);
  ann_col("annB", "colB", pi - dphi, 2 * pi + dphi);

  // Seam windows between the A and B copies (both annuli and collars), and
  // the cross annulus <-> collar links over the seams.
  MatN I2 = MatN::Identity(2, 2);
  VecN shift2pi(2), noshift(2);
  shift2pi << 2 * pi, 0;
  noshift << 0, 0;
  auto seam = [&](const std::string& ca, const std::string& cb, double lo_r,
                  double hi_r) {
    // window at phi ~ pi (identity) and phi ~ 0/2pi (shift by 2pi)
    add_affine_pair(m.transitions, ca, cb,
                    make_layout({pi - dphi, lo_r}, {pi + dphi, hi_r}, {7, 7}), I2,
                    noshift, {7, 7});
    add_affine_pair(m.transitions, ca, cb,
                    make_layout({-dphi, lo_r}, {dphi, hi_r}, {7, 7}), I2, shift2pi,
                    {7, 7});
  };
  seam("annA", "annB", rho_in, rho_out);
  seam("colA", "colB", 0.0, r2);
  auto cross_ann_col = [&](const std::string& ann, const std::string& col,
                           double wlo, double whi, const VecN& phi_shift) {
    MatN A = flip;
    VecN b = toT + phi_shift;
    add_affine_pair(m.transitions, ann, col,
                    make_layout({wlo, R - r2}, {whi, rho_out}, {7, 7}), A, b,
                    {7, 7});
  };
  VecN plus2pi(2), minus0(2);
  plus2pi << 2 * pi, 0;
  minus0 << 0, 0;
  cross_ann_col("annA", "colB", pi - dphi, pi + dphi, minus0);
  cross_ann_col("annA", "colB", -dphi, dphi, plus2pi);
  cross_ann_col("annB", "colA", pi - dphi, pi + dphi, minus0);
  VecN minus2pi(2);
  minus2pi << -2 * pi, 0;
  cross_ann_col("annB", "colA", 2 * pi - dphi, 2 * pi + dphi, minus2pi);

  m.base.chart = "core";
  m.base.coords = VecN::Zero(2);
  return m;
}

// ---------------------------------------------------------------------------
// spherical_cap: geodesic cap of polar angle theta_max on a sphere of radius
// rs. Stereographic core chart + two boundary-collar windows. With full=1,
// generates the whole (boundaryless) sphere from two stereographic charts.
// ---------------------------------------------------------------------------
inline PointedManifold spherical_cap(const ParamMap& p) {
  double rs = require_positive(p, "sphere_radius", 1.0);
  double scale = get_param(p, "scale", 1.0);
  const double pi = std::numbers::pi;
  int res = static_cast<int>(require_positive(p, "resolution", 49));

  if (get_param(p, "full", 0.0) > 0.5) {
    PointedManifold m;
    m.dimension = 2;
    m.has_boundary = false;
    m.constants = {rs * pi, 0.5 * rs, 2, 0.0};
    double wm = 1.6;
    int r2d = res_for(2 * wm, 2 * wm / (res - 1));
    m.charts.push_back(sample_chart("north", ChartRole::Interior,
                                    make_layout({-wm, -wm}, {wm, wm}, {r2d, r2d}),
                                    "stereo", {rs, scale}));
    m.charts.push_back(sample_chart("south", ChartRole::Interior,
                                    make_layout({-wm, -wm}, {wm, wm}, {r2d, r2d}),
                                    "stereo", {rs, scale}));
    auto band = [&](int axis, double s0, double s1) {
      std::vector<double> lo = {-wm, -wm}, hi = {wm, wm};
      lo[axis] = s0;
      hi[axis] = s1;
      return make_layout(lo, hi, {11, 11});
    };
    std::vector<GridLayout> bands = {band(1, 0.4, wm), band(1, -wm, -0.4),
                                     band(0, 0.4, wm), band(0, -wm, -0.4)};
    for (const auto& bl : bands) {
      m.transitions.push_back(
          sample_transition("north", "south", bl, "stereo_antipodal", {}));
      m.transitions.push_back(
          sample_transition("south", "north", bl, "stereo_antipodal", {}));
    }
    m.base.chart = "north";
    m.base.coords = VecN::Zero(2);
    return m;
  }

  double theta_max = require_positive(p, "angle", pi / 3.0);
  if (theta_max >= pi - 0.2)
    fail(ErrorKind::Input, "spherical_cap: angle too close to pi");
  double r2 = require_positive(p, "r2", 0.5 * rs * theta_max);
  if (r2 >= rs * theta_max)
    fail(ErrorKind::Input, "spherical_cap: r2 must be below rs*angle");

  // Core chart: stereographic box with corners inside the cap.
  double wm = std::tan(0.5 * (theta_max - 0.05 * theta_max)) / std::sqrt(2.0);
  double theta_in = 2.0 * std::atan(wm);  // inscribed-disk reach of the core
  double theta_col = theta_max - r2 / rs;
  if (theta_col >= theta_in - 0.02)
    fail(ErrorKind::Input, "spherical_cap: collar and core fail to overlap");

  double dphi = 0.4;
  double h_arc = rs * theta_max * 2.0 / (res - 1);
  int res_core = res_for(2 * wm * rs, h_arc);
  int res_phi = res_for((pi + 2 * dphi) * rs * std::sin(theta_max), h_arc);
  int res_t = res_for(r2, h_arc, 8);

  PointedManifold m;
  m.dimension = 2;
  m.has_boundary = true;
  m.constants = {rs * theta_max, r2, 4, 0.0};
  m.charts.push_back(sample_chart(
      "core", ChartRole::Interior,
      make_layout({-wm, -wm}, {wm, wm}, {res_core, res_core}), "stereo",
      {rs, scale}));
  m.charts.push_back(sample_chart(
      "colA", ChartRole::BoundaryCollar,
      make_layout({-dphi, 0.0}, {pi + dphi, r2}, {res_phi, res_t}), "cap_collar",
      {rs, theta_max, scale}));
  m.charts.push_back(sample_chart(
      "colB", ChartRole::BoundaryCollar,
      make_layout({pi - dphi, 0.0}, {2 * pi + dphi, r2}, {res_phi, res_t}),
      "cap_collar", {rs, theta_max, scale}));

  auto band = [&](int axis, double s0, double s1) {
    std::vector<double> lo = {-wm, -wm}, hi = {wm, wm};
    lo[axis] = s0;
    hi[axis] = s1;
    return make_layout(lo, hi, {9, 9});
  };
  std::vector<GridLayout> bands = {band(1, 0.25 * wm, wm), band(1, -wm, -0.25 * wm),
                                   band(0, 0.25 * wm, wm), band(0, -wm, -0.25 * wm)};
  for (const auto& bl : bands) {
    m.transitions.push_back(sample_transition("core", "colA", bl,
                                              "stereo_to_cap_collar",
                                              {-dphi, rs, theta_max}));
    m.transitions.push_back(sample_transition("core", "colB", bl,
                                              "stereo_to_cap_collar",
                                              {pi - dphi, rs, theta_max}));
  }
  GridLayout colA_full = make_layout({-dphi, 0.0}, {pi + dphi, r2}, {17, 7});
  GridLayout colB_full =
      make_layout({pi - dphi, 0.0}, {2 * pi + dphi, r2}, {17, 7});
  m.transitions.push_back(sample_transition("colA", "core", colA_full,
                                            "cap_collar_to_stereo",
                                            {rs, theta_max}));
  m.transitions.push_back(sample_transition("colB", "core", colB_full,
                                            "cap_collar_to_stereo",
                                            {rs, theta_max}));

  MatN I2 = MatN::Identity(2, 2);
  VecN shift2pi(2), noshift(2);
  shift2pi << 2 * pi, 0;
  noshift << 0, 0;
  add_affine_pair(m.transitions, "colA", "colB",
                  make_layout({pi - dphi, 0.0}, {pi + dphi, r2}, {7, 7}), I2,
                  noshift, {7, 7});
  add_affine_pair(m.transitions, "colA", "colB",
                  make_layout({-dphi, 0.0}, {dphi, r2}, {7, 7}), I2, shift2pi,
                  {7, 7});

  m.base.chart = "core";
  m.base.coords = VecN::Zero(2);
  return m;
}

// ---------------------------------------------------------------------------
// flat_cylinder / revolution_surface: S^1 x [0, T] with g = diag(rho(t)^2, 1),
// boundary circle at t = 0. rho is constant for the cylinder and
// a + b sin(t) for the revolution surface.
// ---------------------------------------------------------------------------
inline PointedManifold surface_of_revolution_impl(double a, double b, double T,
                                                  double r2, int res,
                                                  double scale,
                                                  const std::string& metric_name,
                                                  std::vector<double> metric_params) {
  const double pi = std::numbers::pi;
  double dphi = 0.4;
  double rho_max = a + std::abs(b);
  double h = std::max(2.0 * pi * rho_max, T) / (res - 1);
  int res_phi = res_for((pi + 2 * dphi) * rho_max, h);
  int res_t = res_for(r2, h, 8);
  int res_int = res_for(T - 0.5 * r2, h, 8);

  PointedManifold m;
  m.dimension = 2;
  m.has_boundary = true;
  m.constants = {pi * rho_max, r2, 4, 0.0};
  m.charts.push_back(sample_chart(
      "colA", ChartRole::BoundaryCollar,
      make_layout({-dphi, 0.0}, {pi + dphi, r2}, {res_phi, res_t}), metric_name,
      metric_params));
  m.charts.push_back(sample_chart(
      "colB", ChartRole::BoundaryCollar,
      make_layout({pi - dphi, 0.0}, {2 * pi + dphi, r2}, {res_phi, res_t}),
      metric_name, metric_params));
  m.charts.push_back(sample_chart(
      "intA", ChartRole::Interior,
      make_layout({-dphi, 0.5 * r2}, {pi + dphi, T}, {res_phi, res_int}),
      metric_name, metric_params));
  m.charts.push_back(sample_chart(
      "intB", ChartRole::Interior,
      make_layout({pi - dphi, 0.5 * r2}, {2 * pi + dphi, T}, {res_phi, res_int}),
      metric_name, metric_params));

  MatN I2 = MatN::Identity(2, 2);
  VecN shift2pi(2), noshift(2);
  shift2pi << 2 * pi, 0;
  noshift << 0, 0;
  auto seam = [&](const std::string& ca, const std::string& cb, double lo_t,
                  double hi_t) {
    add_affine_pair(m.transitions, ca, cb,
                    make_layout({pi - dphi, lo_t}, {pi + dphi, hi_t}, {7, 7}), I2,
                    noshift, {7, 7});
    add_affine_pair(m.transitions, ca, cb,
                    make_layout({-dphi, lo_t}, {dphi, hi_t}, {7, 7}), I2, shift2pi,
                    {7, 7});
  };
  seam("colA", "colB", 0.0, r2);
  seam("intA", "intB", 0.5 * r2, T);
  auto col_int = [&](const std::string& col, const std::string& intr, double plo,
                     double phi_hi) {
    add_affine_pair(m.transitions, col, intr,
                    make_layout({plo, 0.5 * r2}, {phi_hi, r2}, {17, 7}), I2,
                    noshift, {17, 7});
  };
  col_int("colA", "intA", -dphi, pi + dphi);
  col_int("colB", "intB", pi - dphi, 2 * pi + dphi);
  auto cross_col_int = [&](const std::string& col, const std::string& intr,
                           double wlo, double whi, const VecN& shift) {
    add_affine_pair(m.transitions, col, intr,
                    make_layout({wlo, 0.5 * r2}, {whi, r2}, {7, 7}), I2, shift,
                    {7, 7});
  };
  VecN minus2pi(2);
  minus2pi << -2 * pi, 0;
  cross_col_int("colA", "intB", pi - dphi, pi + dphi, noshift);
  cross_col_int("colA", "intB", -dphi, dphi, shift2pi);
  cross_col_int("colB", "intA", pi - dphi, pi + dphi, noshift);
  cross_col_int("colB", "intA", 2 * pi - dphi, 2 * pi + dphi, minus2pi);

  m.base.chart = "intA";
  m.base.coords.resize(2);
  m.base.coords << 0.5 * pi, 0.75 * T;
  return m;
}

inline PointedManifold flat_cylinder(const ParamMap& p) {
  double rho = require_positive(p, "rho", 1.0);
  double r2 = require_positive(p, "r2", 0.5);
  double T = require_positive(p, "height", std::max(2.0, 2.0 * r2));
  if (T <= r2) fail(ErrorKind::Input, "flat_cylinder: height must exceed r2");
  int res = static_cast<int>(require_positive(p, "resolution", 33));
  double scale = get_param(p, "scale", 1.0);
  PointedManifold m = surface_of_revolution_impl(rho, 0.0, T, r2, res, scale,
                                                 "revolution", {rho, 0.0, scale});
  return m;
}

inline PointedManifold revolution_surface(const ParamMap& p) {
  double a = require_positive(p, "a", 1.0);
  double b = get_param(p, "b", 0.3);
  if (a - std::abs(b) <= 0.05)
    fail(ErrorKind::Input, "revolution_surface: profile must stay positive");
  double r2 = require_positive(p, "r2", 0.5);
  double T = require_positive(p, "length", 2.0);
  if (T <= r2) fail(ErrorKind::Input, "revolution_surface: length must exceed r2");
  int res = static_cast<int>(require_positive(p, "resolution", 33));
  double scale = get_param(p, "scale", 1.0);
  return surface_of_revolution_impl(a, b, T, r2, res, scale, "revolution",
                                    {a, b, scale});
}

}  // namespace builtin

inline PointedManifold builtin_manifold(const std::string& family,
                                        const ParamMap& params) {
  PointedManifold m;
  if (family == "euclidean_ball") m = builtin::euclidean_ball(params);
  else if (family == "flat_slab") m = builtin::flat_slab(params);
  else if (family == "spherical_cap") m = builtin::spherical_cap(params);
  else if (family == "flat_cylinder") m = builtin::flat_cylinder(params);
  else if (family == "revolution_surface") m = builtin::revolution_surface(params);
  else fail(ErrorKind::Input, "unknown builtin family '" + family + "'");
  m.validate();
  return m;
}

}  // namespace collarforge
