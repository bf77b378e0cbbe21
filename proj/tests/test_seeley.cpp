#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "collarforge/builtin.hpp"
#include "collarforge/seeley.hpp"
#include "helpers.hpp"

using namespace collarforge;

TEST_CASE("seeley coefficients: low orders match hand-solved systems") {
  SeeleyCoefficients c0 = seeley_coefficients(0);
  REQUIRE(c0.weights.size() == 1);
  CHECK(c0.weights[0] == 1.0);

  SeeleyCoefficients c1 = seeley_coefficients(1);
  CHECK(c1.weights[0] == 3.0);
  CHECK(c1.weights[1] == -2.0);

  SeeleyCoefficients c2 = seeley_coefficients(2);
  CHECK(c2.weights[0] == 6.0);
  CHECK(c2.weights[1] == -8.0);
  CHECK(c2.weights[2] == 3.0);
}

TEST_CASE("seeley coefficients: moment conditions to 1e-9 for m <= 12") {
  for (int m = 0; m <= 12; ++m) {
    SeeleyCoefficients c = seeley_coefficients(m);
    for (int j = 0; j <= m; ++j) {
      INFO("m=" << m << " j=" << j);
      CHECK(std::abs(c.moment(j) - 1.0) < 1e-9);
    }
  }
  CHECK_THROWS_AS(seeley_coefficients(13), Error);
}

TEST_CASE("seeley coefficients agree with a Vandermonde solve oracle") {
  for (int m = 0; m <= 8; ++m) {
    Eigen::MatrixXd V(m + 1, m + 1);
    for (int j = 0; j <= m; ++j)
      for (int k = 0; k <= m; ++k) V(j, k) = std::pow(-(k + 1.0), j);
    Eigen::VectorXd rhs = Eigen::VectorXd::Ones(m + 1);
    Eigen::VectorXd a = V.fullPivLu().solve(rhs);
    SeeleyCoefficients c = seeley_coefficients(m);
    for (int k = 0; k <= m; ++k) {
      INFO("m=" << m << " k=" << k);
      CHECK(std::abs(a[k] - c.weights[k]) < 1e-6 * std::abs(c.weights[k]));
    }
  }
}

TEST_CASE("stretch map: phi(0)=0, phi'(0)=1, monotone, blows up at r2") {
  StretchMap phi{0.7};
  CHECK(phi.apply(0.0) == 0.0);
  CHECK(phi.derivative(0.0) == 1.0);
  CHECK(phi.apply(0.69) > 40.0);
  double prev = phi.apply(-5.0);
  for (double r = -4.9; r < 0.69; r += 0.1) {
    CHECK(phi.apply(r) > prev);
    prev = phi.apply(r);
  }
  CHECK(phi.inverse(phi.apply(0.3)) == Catch::Approx(0.3).epsilon(1e-14));
  CHECK(phi.inverse(phi.apply(-2.0)) == Catch::Approx(-2.0).epsilon(1e-14));
}

TEST_CASE("chart extension reproduces stretched polynomials up to order m") {
  const double r2 = 1.0;
  StretchMap phi{r2};
  for (int m = 0; m <= 8; ++m) {
    SeeleyCoefficients c = seeley_coefficients(m);
    CutoffProfile cutoff((m + 1) * r2 / 4.0, (m + 1) * r2 / 2.0);
    // p(sigma) = sum_{j<=m} sigma^j evaluated through the stretch
    auto u = [&](double t) {
      double s = phi.apply(t), acc = 0.0, p = 1.0;
      for (int j = 0; j <= m; ++j) {
        acc += p;
        p *= s;
      }
      return acc;
    };
    for (double sigma : {-r2 / 8.0, -r2 / 16.0, -r2 / 64.0}) {
      double t = phi.inverse(sigma);
      double got = seeley_extend_value(u, c, cutoff, r2, t);
      double want = 0.0, p = 1.0;
      for (int j = 0; j <= m; ++j) {
        want += p;
        p *= sigma;
      }
      INFO("m=" << m << " sigma=" << sigma);
      CHECK(std::abs(got - want) < 1e-9);
    }
  }
}

TEST_CASE("order-1 extension fails quadratics: u = sigma^2 gives -5 sigma^2") {
  const double r2 = 1.0;
  StretchMap phi{r2};
  SeeleyCoefficients c = seeley_coefficients(1);
  CutoffProfile cutoff(2.0 * r2, 4.0 * r2);
  auto u = [&](double t) {
    double s = phi.apply(t);
    return s * s;
  };
  double sigma = -0.05;
  double got = seeley_extend_value(u, c, cutoff, r2, phi.inverse(sigma));
  CHECK(got == Catch::Approx(-5.0 * sigma * sigma).epsilon(1e-12));
  CHECK(std::abs(got - sigma * sigma) > 5.0 * sigma * sigma);
}

TEST_CASE("chart extension of u(t) = t is -s to leading order") {
  const double r2 = 1.0;
  SeeleyCoefficients c = seeley_coefficients(1);
  CutoffProfile cutoff(2.0 * r2, 4.0 * r2);
  auto u = [](double t) { return t; };
  for (double s : {1e-3, 1e-4, 1e-5}) {
    double got = seeley_extend_value(u, c, cutoff, r2, -s);
    CHECK(std::abs(got + s) <= 10.0 * s * s / r2);
  }
}

TEST_CASE("extension vanishes beyond the cutoff support") {
  const double r2 = 1.0;
  SeeleyCoefficients c = seeley_coefficients(3);
  CutoffProfile cutoff(0.05, 0.1);  // narrow: support exhausted quickly
  auto u = [](double t) { return 2.0 + t; };
  StretchMap phi{r2};
  double t_deep = phi.inverse(-0.5);  // |sigma| = 0.5 >> s1
  CHECK(seeley_extend_value(u, c, cutoff, r2, t_deep) == 0.0);
}

TEST_CASE("grid extension: restriction is a bitwise copy, constants extend") {
  GridLayout L = builtin::make_layout({-1, 0}, {1, 0.5}, {9, 17});
  GridField<double> u(L);
  for_each_node(L, [&](const MultiIndex& idx) {
    VecN x = L.node(idx);
    u.at(idx) = 3.25;
    (void)x;
  });
  SeeleyCoefficients c = seeley_coefficients(4);
  double r2 = 0.5, depth = 0.5;
  CutoffProfile cutoff = covering_cutoff(4, r2, depth);
  GridField<double> ext = extend_scalar_chart(u, c, cutoff, depth);
  const int ta = 1;
  int shift = ext.layout.res[ta] - L.res[ta];
  for_each_node(ext.layout, [&](const MultiIndex& idx) {
    if (idx[ta] >= shift) {
      MultiIndex src = idx;
      src[ta] -= shift;
      CHECK(ext.at(idx) == u.at(src));
    } else {
      CHECK(ext.at(idx) == Catch::Approx(3.25).epsilon(1e-13));
    }
  });
}

TEST_CASE("grid extension matches the evaluator oracle for linear columns") {
  GridLayout L = builtin::make_layout({0, 0}, {2, 1}, {5, 33});
  GridField<double> u(L);
  for_each_node(L, [&](const MultiIndex& idx) {
    VecN x = L.node(idx);
    u.at(idx) = 0.7 * x[1] + 0.2 * x[0];  // linear in t: interpolation exact
  });
  SeeleyCoefficients c = seeley_coefficients(2);
  CutoffProfile cutoff = covering_cutoff(2, 1.0, 1.0);
  GridField<double> ext = extend_scalar_chart(u, c, cutoff, 1.0);
  int shift = ext.layout.res[1] - L.res[1];
  for (int i = 0; i < shift; ++i) {
    double t = ext.layout.lo[1] + i * ext.layout.spacing(1);
    double x0 = 1.0;
    auto col = [&](double tt) { return 0.7 * tt + 0.2 * x0; };
    MultiIndex idx = {2, i};  // x0 = 1.0 is node 2
    double want = seeley_extend_value(col, c, cutoff, 1.0, t);
    CHECK(ext.at(idx) == Catch::Approx(want).margin(1e-14));
  }
}

static std::vector<GridField<double>> sample_fields(
    const PointedManifold& m, const std::function<double(const VecN&)>& fn) {
  std::vector<GridField<double>> out;
  for (const Chart& c : m.charts) {
    GridField<double> f(c.grid);
    for_each_node(c.grid, [&](const MultiIndex& idx) {
      f.at(idx) = fn(c.grid.node(idx));
    });
    out.push_back(std::move(f));
  }
  return out;
}

TEST_CASE("global extension: constants extend exactly across X_r") {
  PointedManifold m = builtin_manifold("flat_slab", {{"r2", 1.0}});
  PartitionOfUnity pu = build_partition_of_unity(m, CutoffProfile());
  SeeleyCoefficients c = seeley_coefficients(4);
  CutoffProfile cutoff = covering_cutoff(4, 1.0, 1.0);
  auto fields = sample_fields(m, [](const VecN&) { return 2.5; });
  ExtendedScalarField ext = extend_scalar_global(m, pu, fields, c, cutoff);
  for (std::size_t ch = 0; ch < ext.fields.size(); ++ch)
    for (double v : ext.fields[ch].values)
      CHECK(v == Catch::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("global extension: restriction to M is exact, reduces to the chart case") {
  PointedManifold m = builtin_manifold("flat_slab", {{"r2", 1.0}});
  PartitionOfUnity pu = build_partition_of_unity(m, CutoffProfile());
  SeeleyCoefficients c = seeley_coefficients(1);
  CutoffProfile cutoff = covering_cutoff(1, 1.0, 1.0);
  auto fields = sample_fields(m, [](const VecN& x) { return x[x.size() - 1]; });
  ExtendedScalarField ext = extend_scalar_global(m, pu, fields, c, cutoff);
  int col = m.chart_index("collar");
  const GridLayout& L = ext.fields[col].layout;
  int shift = L.res[1] - m.charts[col].grid.res[1];
  // restriction: bitwise equality on M nodes
  for_each_node(m.charts[col].grid, [&](const MultiIndex& idx) {
    MultiIndex e = idx;
    e[1] += shift;
    CHECK(ext.fields[col].at(e) == fields[col].at(idx));
  });
  // on the outer collar only collar weights survive, so E_M = E_2 chart-wise
  GridField<double> chart_ext = extend_scalar_chart(fields[col], c, cutoff, 1.0);
  for_each_node(L, [&](const MultiIndex& idx) {
    if (idx[1] >= shift) return;
    CHECK(ext.fields[col].at(idx) ==
          Catch::Approx(chart_ext.at(idx)).margin(1e-12));
  });
}

TEST_CASE("global extension is linear to 1e-12") {
  PointedManifold m = builtin_manifold("flat_slab", {{"r2", 1.0}});
  PartitionOfUnity pu = build_partition_of_unity(m, CutoffProfile());
  SeeleyCoefficients c = seeley_coefficients(3);
  CutoffProfile cutoff = covering_cutoff(3, 1.0, 1.0);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  auto noise = [&](const PointedManifold& mm) {
    std::vector<GridField<double>> out;
    for (const Chart& ch : mm.charts) {
      GridField<double> f(ch.grid);
      for (double& v : f.values) v = dist(rng);
      out.push_back(std::move(f));
    }
    return out;
  };
  auto u = noise(m), w = noise(m);
  double alpha = 1.6180339887;
  std::vector<GridField<double>> combo(u.size());
  for (std::size_t ch = 0; ch < u.size(); ++ch) {
    combo[ch] = u[ch];
    for (std::size_t i = 0; i < combo[ch].values.size(); ++i)
      combo[ch].values[i] = alpha * u[ch].values[i] + w[ch].values[i];
  }
  ExtendedScalarField eu = extend_scalar_global(m, pu, u, c, cutoff);
  ExtendedScalarField ew = extend_scalar_global(m, pu, w, c, cutoff);
  ExtendedScalarField ec = extend_scalar_global(m, pu, combo, c, cutoff);
  for (std::size_t ch = 0; ch < eu.fields.size(); ++ch)
    for (std::size_t i = 0; i < eu.fields[ch].values.size(); ++i)
      CHECK(std::abs(ec.fields[ch].values[i] - alpha * eu.fields[ch].values[i] -
                     ew.fields[ch].values[i]) < 1e-12);
}

TEST_CASE("global extension sup bound: |E_M u| <= sum|a_k| m0 sup|u|") {
  PointedManifold m = builtin_manifold("spherical_cap", {});
  PartitionOfUnity pu = build_partition_of_unity(m, CutoffProfile());
  SeeleyCoefficients c = seeley_coefficients(4);
  CutoffProfile cutoff = covering_cutoff(4, m.constants.r2, m.constants.r2);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  double sup_u = 0.0;
  std::vector<GridField<double>> u;
  for (const Chart& ch : m.charts) {
    GridField<double> f(ch.grid);
    for (double& v : f.values) {
      v = dist(rng);
      sup_u = std::max(sup_u, std::abs(v));
    }
    u.push_back(std::move(f));
  }
  ExtendedScalarField ext = extend_scalar_global(m, pu, u, c, cutoff);
  CHECK(ext.sup_abs <= c.weight_abs_sum() * m.constants.m0 * sup_u);
}

TEST_CASE("positive extension: constants, exponentials, and the beta bound") {
  PointedManifold m = builtin_manifold("flat_slab", {{"r2", 1.0}});
  PartitionOfUnity pu = build_partition_of_unity(m, CutoffProfile());
  SECTION("u == 5 with b = 5 stays 5, beta <= 5") {
    SeeleyCoefficients c = seeley_coefficients(4);
    CutoffProfile cutoff = covering_cutoff(4, 1.0, 1.0);
    auto u = sample_fields(m, [](const VecN&) { return 5.0; });
    PositiveExtension F = extend_positive(m, pu, u, 5.0, c, cutoff);
    for (auto& f : F.field.fields)
      for (double v : f.values) CHECK(v == Catch::Approx(5.0).epsilon(1e-12));
    CHECK(F.beta <= 5.0);
    CHECK(F.beta > 0.0);
  }
  SECTION("u = e^t with m = 1: F(-s) = e^{-s} for small s") {
    SeeleyCoefficients c = seeley_coefficients(1);
    CutoffProfile cutoff = covering_cutoff(1, 1.0, 1.0);
    auto u = sample_fields(m, [](const VecN& x) {
      return std::exp(x[x.size() - 1]);
    });
    PositiveExtension F = extend_positive(m, pu, u, 0.9, c, cutoff);
    int col = m.chart_index("collar");
    const GridLayout& L = F.field.fields[col].layout;
    int shift = L.res[1] - m.charts[col].grid.res[1];
    // first extended node below the boundary: t = -h
    double h = L.spacing(1);
    MultiIndex idx = {L.res[0] / 2, shift - 1};
    double got = F.field.fields[col].at(idx);
    CHECK(got == Catch::Approx(std::exp(-h)).margin(20.0 * h * h));
  }
  SECTION("random fields with inf = b: measured inf F >= beta > 0") {
    SeeleyCoefficients c = seeley_coefficients(4);
    CutoffProfile cutoff = covering_cutoff(4, 1.0, 1.0);
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> dist(0.0, 3.0);
    double b = 0.4;
    auto u = sample_fields(m, [&](const VecN&) { return b + dist(rng); });
    u[0].values[0] = b;  // pin the infimum
    PositiveExtension F = extend_positive(m, pu, u, b, c, cutoff);
    double measured_inf = std::numeric_limits<double>::infinity();
    for (auto& f : F.field.fields)
      for (double v : f.values) measured_inf = std::min(measured_inf, v);
    CHECK(F.beta > 0.0);
    CHECK(measured_inf >= F.beta);
  }
  SECTION("scaling: F(c u) = c F(u) for constant c > 0") {
    SeeleyCoefficients c = seeley_coefficients(2);
    CutoffProfile cutoff = covering_cutoff(2, 1.0, 1.0);
    auto u = sample_fields(m, [](const VecN& x) {
      return 1.0 + 0.3 * std::sin(x[0]) * std::cos(x[x.size() - 1]);
    });
    double scale = 2.75;
    auto su = u;
    for (auto& f : su)
      for (double& v : f.values) v *= scale;
    PositiveExtension F1 = extend_positive(m, pu, u, 0.5, c, cutoff);
    PositiveExtension F2 = extend_positive(m, pu, su, 0.5 * scale, c, cutoff);
    for (std::size_t ch = 0; ch < F1.field.fields.size(); ++ch)
      for (std::size_t i = 0; i < F1.field.fields[ch].values.size(); ++i)
        CHECK(F2.field.fields[ch].values[i] ==
              Catch::Approx(scale * F1.field.fields[ch].values[i]).epsilon(1e-11));
  }
  SECTION("precondition error when a sample undercuts b") {
    SeeleyCoefficients c = seeley_coefficients(1);
    CutoffProfile cutoff = covering_cutoff(1, 1.0, 1.0);
    auto u = sample_fields(m, [](const VecN&) { return 1.0; });
    u[0].values[3] = 0.2;
    try {
      extend_positive(m, pu, u, 0.5, c, cutoff);
      FAIL("expected precondition error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Precondition);
    }
  }
}
