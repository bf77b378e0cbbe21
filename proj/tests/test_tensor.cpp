#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <numbers>

#include "collarforge/builtin.hpp"
#include "collarforge/tensor.hpp"
#include "helpers.hpp"

using namespace collarforge;
constexpr double pi = std::numbers::pi;

TEST_CASE("flat chart: Christoffel and curvature vanish") {
  PointedManifold m = single_chart_manifold(2, {0, 0}, {1, 1}, {17, 17},
                                            "identity", {2.0});
  TensorOps ops(m);
  CurvatureReport rep = ops.curvature_report(0, vec2(0.5, 0.5), 2);
  for (double v : rep.christoffel.v) CHECK(v == 0.0);
  for (double v : rep.rm.v) CHECK(v == 0.0);
  for (double nrm : rep.nabla_rm_norms) CHECK(nrm == 0.0);
}

TEST_CASE("polar flat metric: Gamma^rho_{phiphi} = -rho, |Rm| small") {
  // coords (phi, rho), g = diag(rho^2, 1); closed-form Christoffel oracle
  PointedManifold m = single_chart_manifold(2, {0.0, 0.9}, {0.3, 1.1},
                                            {33, 129}, "polar_annulus", {});
  TensorOps ops(m);
  CurvatureReport rep = ops.curvature_report(0, vec2(0.15, 1.0), 0);
  CHECK(rep.point[1] == Catch::Approx(1.0).margin(1e-12));
  // Gamma^1_{00} = -rho, Gamma^0_{01} = 1/rho at rho = 1
  CHECK(rep.christoffel.at(1, 0, 0) == Catch::Approx(-1.0).epsilon(1e-9));
  CHECK(rep.christoffel.at(0, 0, 1) == Catch::Approx(1.0).epsilon(1e-9));
  CHECK(rep.nabla_rm_norms[0] <= 1e-5);
}

TEST_CASE("unit sphere cap: sectional curvature 1 at theta = pi/4") {
  PointedManifold m = single_chart_manifold(2, {0.3, 0.0}, {1.3, 0.5},
                                            {129, 65}, "sphere_polar", {1.0});
  TensorOps ops(m);
  double K = ops.sectional_curvature(0, vec2(pi / 4.0, 0.25), vec2(1, 0),
                                     vec2(0, 1));
  CHECK(K == Catch::Approx(1.0).margin(1e-3));
}

TEST_CASE("curvature stencil guard") {
  PointedManifold m = single_chart_manifold(2, {0, 0}, {1, 1}, {9, 9},
                                            "identity", {2.0});
  TensorOps ops(m);
  CHECK_THROWS_AS(ops.curvature_report(0, vec2(0.01, 0.5), 3), Error);
}

TEST_CASE("curvature symmetries and first Bianchi within 10x truncation") {
  struct Fixture {
    PointedManifold m;
    VecN pt;
  };
  std::vector<Fixture> fixtures;
  fixtures.push_back({single_chart_manifold(2, {0.4, 0.0}, {1.2, 0.6}, {97, 49},
                                            "sphere_polar", {1.0}),
                      vec2(0.8, 0.3)});
  fixtures.push_back({single_chart_manifold(2, {0.0, 0.3}, {1.0, 1.7}, {49, 97},
                                            "revolution", {1.0, 0.3}),
                      vec2(0.5, 1.0)});
  fixtures.push_back({single_chart_manifold(3, {0.5, 0.0, 0.0}, {1.3, 0.8, 0.8},
                                            {33, 33, 9}, "sphere_line", {1.0}),
                      vec3(0.9, 0.4, 0.4)});
  for (auto& f : fixtures) {
    TensorOps ops(f.m);
    CurvatureReport rep = ops.curvature_report(0, f.pt, 0);
    const int n = f.m.dimension;
    double h = rep.stencil_spacing;
    double scale = std::max(1.0, rep.nabla_rm_norms[0]);
    double tol = 10.0 * h * h * scale;
    double worst_anti = 0.0, worst_pair = 0.0, worst_bianchi = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l) {
            worst_anti = std::max(
                worst_anti, std::abs(rep.rm({i, j, k, l}) + rep.rm({j, i, k, l})));
            worst_pair = std::max(
                worst_pair, std::abs(rep.rm({i, j, k, l}) - rep.rm({k, l, i, j})));
            worst_bianchi =
                std::max(worst_bianchi,
                         std::abs(rep.rm({i, j, k, l}) + rep.rm({i, k, l, j}) +
                                  rep.rm({i, l, j, k})));
          }
    CHECK(worst_anti <= tol);
    CHECK(worst_pair <= tol);
    CHECK(worst_bianchi <= tol);
  }
}

TEST_CASE("finite-difference gradient: O(h^2) ratio against halved spacing") {
  auto field_on = [](int res) {
    GridLayout L = builtin::make_layout({0, 0}, {1, 1}, {res, res});
    GridField<double> f(L);
    for_each_node(L, [&](const MultiIndex& idx) {
      VecN x = L.node(idx);
      f.at(idx) = std::sin(3.0 * x[0]) * std::exp(x[1]);
    });
    return f;
  };
  GridField<double> coarse = field_on(33), fine = field_on(65);
  auto err = [](const GridField<double>& f) {
    // error at the centre node against the closed-form gradient
    MultiIndex idx = {f.layout.res[0] / 2, f.layout.res[1] / 2};
    VecN x = f.layout.node(idx);
    VecN g = fd::scalar_gradient(f, idx);
    VecN exact(2);
    exact << 3.0 * std::cos(3.0 * x[0]) * std::exp(x[1]),
        std::sin(3.0 * x[0]) * std::exp(x[1]);
    return (g - exact).norm();
  };
  double ratio = err(coarse) / err(fine);
  CHECK(ratio == Catch::Approx(4.0).margin(0.5));
}

TEST_CASE("exp_map: Euclidean straight line and zero-length identity") {
  PointedManifold m = single_chart_manifold(2, {-1, -1}, {3, 3}, {33, 33},
                                            "identity", {2.0});
  TensorOps ops(m);
  PointRef p{0, vec2(0, 0)};
  PointRef q = ops.exp_map(p, vec2(1, 0), 2.0);
  CHECK(q.x[0] == Catch::Approx(2.0).margin(1e-9));
  CHECK(q.x[1] == Catch::Approx(0.0).margin(1e-12));
  PointRef r = ops.exp_map(p, vec2(1, 1), 0.0);
  CHECK(r.x == p.x);
  CHECK_THROWS_AS(ops.exp_map(p, vec2(0, 0), 1.0), Error);
}

TEST_CASE("exp_map: great circle reaches the antipode, arc length exact") {
  // (theta, phi) polar chart symmetric about the equator; the equator is a
  // grid symmetry line so the geodesic stays on it.
  PointedManifold m = single_chart_manifold(
      2, {pi / 2 - 1.4, -0.3}, {pi / 2 + 1.4, pi + 0.3}, {65, 385},
      "sphere_polar", {1.0});
  TensorOps ops(m);
  PointRef start{0, vec2(pi / 2, 0.0)};
  std::vector<std::pair<PointRef, VecN>> trace;
  PointRef end = ops.exp_map(start, vec2(0, 1), pi, &trace);
  CHECK(end.x[0] == Catch::Approx(pi / 2).margin(1e-3));
  CHECK(end.x[1] == Catch::Approx(pi).margin(1e-3));
  // arc length of the returned curve matches the request to 1e-6 relative
  double arc = 0.0;
  for (std::size_t i = 1; i < trace.size(); ++i)
    arc += ops.segment_length(trace[i].first.chart, trace[i - 1].first.x,
                              trace[i].first.x);
  CHECK(arc == Catch::Approx(pi).epsilon(1e-6));
}

TEST_CASE("exp_map escape error carries the exit point") {
  PointedManifold m = single_chart_manifold(2, {0, 0}, {1, 1}, {17, 17},
                                            "identity", {2.0});
  TensorOps ops(m);
  try {
    ops.exp_map({0, vec2(0.5, 0.5)}, vec2(1, 0), 5.0);
    FAIL("expected escape");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Escape);
    CHECK(std::string(e.what()).find("main") != std::string::npos);
  }
}

TEST_CASE("geodesic_distance: flat box 3-4-5 and identity") {
  PointedManifold m = single_chart_manifold(2, {-0.5, -0.5}, {3.5, 4.5},
                                            {33, 41}, "identity", {2.0});
  TensorOps ops(m);
  PointRef p{0, vec2(0, 0)}, q{0, vec2(3, 4)};
  double d = ops.geodesic_distance(p, q);
  CHECK(d == Catch::Approx(5.0).margin(1e-4));
  CHECK(ops.geodesic_distance(p, p) == 0.0);
}

TEST_CASE("geodesic_distance: stereographic pole to theta = pi/4") {
  PointedManifold m = single_chart_manifold(2, {-0.6, -0.6}, {0.6, 0.6},
                                            {97, 97}, "stereo", {1.0});
  TensorOps ops(m);
  PointRef pole{0, vec2(0, 0)};
  double s = std::tan(pi / 8.0);
  PointRef q{0, vec2(s, 0)};
  double d = ops.geodesic_distance(pole, q);
  CHECK(d == Catch::Approx(pi / 4.0).margin(1e-3));
  double back = ops.geodesic_distance(q, pole);
  CHECK(std::abs(d - back) < 1e-6);
}

TEST_CASE("geodesic_distance: unreachable components") {
  PointedManifold m;
  m.dimension = 2;
  m.constants = {1, 1, 2, 0};
  m.charts.push_back(builtin::sample_chart(
      "a", ChartRole::Interior, builtin::make_layout({0, 0}, {1, 1}, {6, 6}),
      "identity", {2.0}));
  m.charts.push_back(builtin::sample_chart(
      "b", ChartRole::Interior, builtin::make_layout({5, 5}, {6, 6}, {6, 6}),
      "identity", {2.0}));
  m.base = {"a", vec2(0.5, 0.5)};
  m.validate();
  TensorOps ops(m);
  try {
    ops.geodesic_distance({0, vec2(0.5, 0.5)}, {1, vec2(5.5, 5.5)});
    FAIL("expected unreachable");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Unreachable);
  }
}

TEST_CASE("geodesic_distance crosses charts on the euclidean ball") {
  PointedManifold m = builtin_manifold(
      "euclidean_ball", {{"radius", 3.0}, {"resolution", 49}});
  TensorOps ops(m);
  // centre to a boundary node: the radius, straight through three charts
  PointRef centre = m.base_ref();
  PointRef rim{m.chart_index("colA"), vec2(1.0, 0.0)};
  double d = ops.geodesic_distance(centre, rim);
  CHECK(d == Catch::Approx(3.0).margin(2e-3));
}

TEST_CASE("second fundamental form: flat half-space is totally geodesic") {
  PointedManifold m = builtin_manifold("flat_slab", {{"r2", 1.0}});
  TensorOps ops(m);
  SecondFundamentalForm ii =
      ops.second_fundamental_form({m.chart_index("collar"), vec2(0.3, 0.0)}, 1);
  CHECK(std::abs(ii.ii(0, 0)) < 1e-10);
  for (double nrm : ii.nabla_ii_norms) CHECK(nrm < 1e-9);
  CHECK(ii.inward_normal[1] == Catch::Approx(1.0));
}

TEST_CASE("second fundamental form: euclidean ball gives II = (1/r) dg") {
  double R = 2.0;
  PointedManifold m = builtin_manifold(
      "euclidean_ball", {{"radius", R}, {"resolution", 65}});
  TensorOps ops(m);
  int col = m.chart_index("colA");
  SecondFundamentalForm ii =
      ops.second_fundamental_form({col, vec2(1.2, 0.0)}, 1);
  // dg_{phiphi} = R^2, so II_{phiphi} should be R^2 / R = R
  CHECK(ii.ii(0, 0) == Catch::Approx(R).epsilon(1e-3));
  CHECK(std::isfinite(ii.nabla_ii_norms[1]));
}

TEST_CASE("second fundamental form: hemisphere equator is totally geodesic") {
  PointedManifold m = builtin_manifold(
      "spherical_cap", {{"angle", pi / 2}, {"resolution", 65}});
  TensorOps ops(m);
  int col = m.chart_index("colA");
  SecondFundamentalForm ii = ops.second_fundamental_form({col, vec2(1.0, 0.0)}, 0);
  CHECK(std::abs(ii.ii(0, 0)) < 1e-3);
}

TEST_CASE("second fundamental form rejects interior points") {
  PointedManifold m = builtin_manifold("flat_slab", {});
  TensorOps ops(m);
  try {
    ops.second_fundamental_form({m.chart_index("collar"), vec2(0.0, 0.7)}, 0);
    FAIL("expected domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Domain);
  }
}

TEST_CASE("normal collar coordinates") {
  SECTION("flat half-space: kappa(v, t) = (x + v, t)") {
    PointedManifold m = builtin_manifold("flat_slab", {{"r2", 1.0}});
    TensorOps ops(m);
    int col = m.chart_index("collar");
    VecN v(1);
    v << 0.4;
    PointRef out = ops.normal_collar({col, vec2(0.2, 0.0)}, v, 0.5);
    auto al = ops.manifold().map_to_chart(out.chart, out.x, col);
    REQUIRE(al.has_value());
    CHECK(al->x[0] == Catch::Approx(0.6).margin(1e-9));
    CHECK(al->x[1] == Catch::Approx(0.5).margin(1e-9));
  }
  SECTION("v = 0, t = 0 returns the point") {
    PointedManifold m = builtin_manifold("flat_slab", {});
    TensorOps ops(m);
    int col = m.chart_index("collar");
    VecN v(1);
    v << 0.0;
    PointRef out = ops.normal_collar({col, vec2(0.3, 0.0)}, v, 0.0);
    CHECK(out.chart == col);
    CHECK(out.x == vec2(0.3, 0.0));
  }
  SECTION("euclidean ball: inward radial geodesic") {
    PointedManifold m = builtin_manifold(
        "euclidean_ball", {{"radius", 2.0}, {"resolution", 49}});
    TensorOps ops(m);
    int col = m.chart_index("colA");
    VecN v(1);
    v << 0.0;
    PointRef out = ops.normal_collar({col, vec2(1.1, 0.0)}, v, 0.3);
    auto al = ops.manifold().map_to_chart(out.chart, out.x, col);
    REQUIRE(al.has_value());
    CHECK(al->x[0] == Catch::Approx(1.1).margin(1e-6));
    CHECK(al->x[1] == Catch::Approx(0.3).margin(1e-6));
  }
}

TEST_CASE("triangle inequality on geodesic distances (flat, cross-chart)") {
  PointedManifold m = builtin_manifold(
      "euclidean_ball", {{"radius", 2.0}, {"resolution", 41}});
  TensorOps ops(m);
  std::vector<PointRef> pts = {m.base_ref(),
                               {m.chart_index("core"), vec2(0.5, 0.2)},
                               {m.chart_index("annA"), vec2(1.2, 1.0)},
                               {m.chart_index("colB"), vec2(4.0, 0.2)}};
  const int N = static_cast<int>(pts.size());
  Eigen::MatrixXd D(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      D(i, j) = i == j ? 0.0 : ops.geodesic_distance(pts[i], pts[j]);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      CHECK(std::abs(D(i, j) - D(j, i)) < 1e-6);
      for (int k = 0; k < N; ++k)
        CHECK(D(i, j) <= D(i, k) + D(k, j) + 1e-6);
    }
}
