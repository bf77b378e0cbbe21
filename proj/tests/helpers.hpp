#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "collarforge/builtin.hpp"
#include "collarforge/manifold.hpp"

namespace cf = collarforge;

// A one-chart manifold over a box with an analytic metric; the workhorse
// fixture for kernel-level tests.
inline cf::PointedManifold single_chart_manifold(
    int n, const std::vector<double>& lo, const std::vector<double>& hi,
    const std::vector<int>& res, const std::string& metric_name,
    const std::vector<double>& metric_params,
    const std::vector<double>& base = {}) {
  cf::PointedManifold m;
  m.dimension = n;
  m.has_boundary = false;
  m.constants = {1.0, 1.0, 1, 0.0};
  m.charts.push_back(cf::builtin::sample_chart(
      "main", cf::ChartRole::Interior, cf::builtin::make_layout(lo, hi, res),
      metric_name, metric_params));
  m.base.chart = "main";
  m.base.coords.resize(n);
  for (int a = 0; a < n; ++a)
    m.base.coords[a] = base.empty() ? 0.5 * (lo[a] + hi[a]) : base[a];
  m.validate();
  return m;
}

inline cf::VecN vec2(double a, double b) {
  cf::VecN v(2);
  v << a, b;
  return v;
}

inline cf::VecN vec3(double a, double b, double c) {
  cf::VecN v(3);
  v << a, b, c;
  return v;
}

inline std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}
