#pragma once

#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "collarforge/builtin.hpp"
#include "collarforge/manifold.hpp"

namespace collarforge {

using Json = nlohmann::json;

// Named scalar fields sampled per chart, saved alongside a manifold document.
using ChartFields = std::map<std::string, std::vector<GridField<double>>>;

namespace io_detail {

inline Json vec_to_json(const VecN& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline VecN vec_from_json(const Json& a) {
  VecN v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
  return v;
}

inline const Json& require(const Json& j, const std::string& key,
                           const std::string& where) {
  if (!j.contains(key))
    fail(ErrorKind::Input, "document missing '" + key + "' in " + where);
  return j.at(key);
}

inline Json layout_to_json(const GridLayout& L, bool split_collar) {
  Json j;
  int d = L.dim();
  int nbase = split_collar ? d - 1 : d;
  Json lo = Json::array(), hi = Json::array(), res = Json::array();
  for (int a = 0; a < nbase; ++a) {
    lo.push_back(L.lo[a]);
    hi.push_back(L.hi[a]);
  }
  for (int a = 0; a < d; ++a) res.push_back(L.res[a]);
  j["box"] = {{"lo", lo}, {"hi", hi}};
  if (split_collar) j["collar"] = {{"lo", L.lo[d - 1]}, {"hi", L.hi[d - 1]}};
  j["resolution"] = res;
  return j;
}

inline GridLayout layout_from_json(const Json& j, const std::string& where) {
  const Json& box = require(j, "box", where);
  const Json& lo = require(box, "lo", where);
  const Json& hi = require(box, "hi", where);
  const Json& res = require(j, "resolution", where);
  bool has_collar = j.contains("collar");
  int d = static_cast<int>(res.size());
  GridLayout L;
  L.lo.resize(d);
  L.hi.resize(d);
  L.res.resize(d);
  int nbase = has_collar ? d - 1 : d;
  if (static_cast<int>(lo.size()) != nbase)
    fail(ErrorKind::Input, "box/resolution size mismatch in " + where);
  for (int a = 0; a < nbase; ++a) {
    L.lo[a] = lo[a].get<double>();
    L.hi[a] = hi[a].get<double>();
  }
  if (has_collar) {
    L.lo[d - 1] = j["collar"]["lo"].get<double>();
    L.hi[d - 1] = j["collar"]["hi"].get<double>();
  }
  for (int a = 0; a < d; ++a) L.res[a] = res[a].get<int>();
  return L;
}

}  // namespace io_detail

inline Json manifold_to_json(const PointedManifold& m,
                             const ChartFields& fields = {},
                             const Json& provenance = Json()) {
  using namespace io_detail;
  Json j;
  j["dimension"] = m.dimension;
  j["has_boundary"] = m.has_boundary;
  j["constants"] = {{"r1", m.constants.r1},
                    {"r2", m.constants.r2},
                    {"m0", m.constants.m0},
                    {"c0", m.constants.c0}};
  j["base_point"] = {{"chart", m.base.chart}, {"coords", vec_to_json(m.base.coords)}};
  Json charts = Json::array();
  for (const Chart& c : m.charts) {
    Json cj = layout_to_json(c.grid, c.is_collar());
    cj["id"] = c.id;
    cj["role"] = to_string(c.role);
    Json metric;
    Json data = Json::array();
    for (const MatN& g : c.metric.values)
      for (int r = 0; r < g.rows(); ++r)
        for (int col = 0; col < g.cols(); ++col) data.push_back(g(r, col));
    metric["data"] = std::move(data);
    if (!c.builtin_name.empty()) {
      metric["kind"] = "builtin";
      metric["family"] = c.builtin_name;
      metric["params"] = c.builtin_params;
    } else {
      metric["kind"] = "samples";
    }
    cj["metric"] = std::move(metric);
    charts.push_back(std::move(cj));
  }
  j["charts"] = std::move(charts);
  Json trans = Json::array();
  for (const Transition& t : m.transitions) {
    Json tj;
    tj["source"] = t.source;
    tj["target"] = t.target;
    tj["overlap"] = layout_to_json(t.overlap(), false);
    if (!t.builtin_name.empty()) {
      tj["map"] = "builtin";
      tj["name"] = t.builtin_name;
      tj["params"] = t.builtin_params;
    } else {
      tj["map"] = "samples";
    }
    Json ms = Json::array(), js = Json::array();
    for (const VecN& v : t.map_samples.values)
      for (int i = 0; i < v.size(); ++i) ms.push_back(v[i]);
    for (const MatN& jm : t.jacobian_samples.values)
      for (int r = 0; r < jm.rows(); ++r)
        for (int c2 = 0; c2 < jm.cols(); ++c2) js.push_back(jm(r, c2));
    tj["map_samples"] = std::move(ms);
    tj["jacobian_samples"] = std::move(js);
    trans.push_back(std::move(tj));
  }
  j["transitions"] = std::move(trans);
  if (!fields.empty()) {
    Json fj;
    for (const auto& [name, per_chart] : fields) {
      Json block;
      for (std::size_t c = 0; c < per_chart.size(); ++c)
        block[m.charts[c].id] = per_chart[c].values;
      fj[name] = std::move(block);
    }
    j["fields"] = std::move(fj);
  }
  if (!provenance.is_null()) j["provenance"] = provenance;
  return j;
}

inline PointedManifold manifold_from_json(const Json& j,
                                          ChartFields* fields_out = nullptr) {
  using namespace io_detail;
  PointedManifold m;
  m.dimension = require(j, "dimension", "document").get<int>();
  m.has_boundary = j.value("has_boundary", false);
  const Json& cons = require(j, "constants", "document");
  m.constants.r1 = require(cons, "r1", "constants").get<double>();
  m.constants.r2 = require(cons, "r2", "constants").get<double>();
  m.constants.m0 = require(cons, "m0", "constants").get<int>();
  m.constants.c0 = cons.value("c0", 0.0);
  const Json& bp = require(j, "base_point", "document");
  m.base.chart = require(bp, "chart", "base_point").get<std::string>();
  m.base.coords = vec_from_json(require(bp, "coords", "base_point"));

  for (const Json& cj : require(j, "charts", "document")) {
    Chart c;
    c.id = require(cj, "id", "chart").get<std::string>();
    c.role = chart_role_from(require(cj, "role", "chart").get<std::string>());
    c.grid = layout_from_json(cj, "chart '" + c.id + "'");
    const Json& metric = require(cj, "metric", "chart '" + c.id + "'");
    std::string kind = require(metric, "kind", "metric").get<std::string>();
    int n = m.dimension;
    if (kind == "builtin") {
      c.builtin_name = require(metric, "family", "metric").get<std::string>();
      c.builtin_params = metric.value("params", std::vector<double>{});
      c.analytic = builtin::metric_from_registry(c.builtin_name, c.builtin_params);
    } else if (kind != "samples") {
      fail(ErrorKind::Input, "metric kind must be 'samples' or 'builtin'");
    }
    c.metric = GridField<MatN>(c.grid);
    if (metric.contains("data")) {
      const Json& data = metric["data"];
      std::size_t need = c.grid.size() * n * n;
      if (data.size() != need)
        fail(ErrorKind::Input, "chart '" + c.id + "' metric data length " +
                                   std::to_string(data.size()) + ", expected " +
                                   std::to_string(need));
      std::size_t k = 0;
      for (MatN& g : c.metric.values) {
        g.resize(n, n);
        for (int r = 0; r < n; ++r)
          for (int col = 0; col < n; ++col) g(r, col) = data[k++].get<double>();
      }
    } else if (c.analytic) {
      for_each_node(c.grid, [&](const MultiIndex& idx) {
        c.metric.at(idx) = c.analytic(c.grid.node(idx));
      });
    } else {
      fail(ErrorKind::Input, "chart '" + c.id + "' has no metric data");
    }
    m.charts.push_back(std::move(c));
  }

  if (j.contains("transitions")) {
    for (const Json& tj : j["transitions"]) {
      Transition t;
      t.source = require(tj, "source", "transition").get<std::string>();
      t.target = require(tj, "target", "transition").get<std::string>();
      GridLayout ov = layout_from_json(require(tj, "overlap", "transition"),
                                       "transition overlap");
      std::string kind = require(tj, "map", "transition").get<std::string>();
      if (kind == "builtin") {
        t.builtin_name = require(tj, "name", "transition").get<std::string>();
        t.builtin_params = tj.value("params", std::vector<double>{});
        t.analytic_map = builtin::map_from_registry(t.builtin_name, t.builtin_params);
        t.analytic_jac = builtin::jac_from_registry(t.builtin_name, t.builtin_params);
        if (!t.analytic_jac)
          t.analytic_jac = builtin::fd_jacobian_of(t.analytic_map, ov.dim());
      } else if (kind != "samples") {
        fail(ErrorKind::Input, "transition map must be 'samples' or 'builtin'");
      }
      t.map_samples = GridField<VecN>(ov);
      t.jacobian_samples = GridField<MatN>(ov);
      int n = m.dimension;
      if (tj.contains("map_samples")) {
        const Json& ms = tj["map_samples"];
        const Json& js = tj["jacobian_samples"];
        if (ms.size() != ov.size() * n || js.size() != ov.size() * n * n)
          fail(ErrorKind::Input, "transition sample length mismatch");
        std::size_t k = 0, k2 = 0;
        for (VecN& v : t.map_samples.values) {
          v.resize(n);
          for (int i = 0; i < n; ++i) v[i] = ms[k++].get<double>();
        }
        for (MatN& jm : t.jacobian_samples.values) {
          jm.resize(n, n);
          for (int r = 0; r < n; ++r)
            for (int c2 = 0; c2 < n; ++c2) jm(r, c2) = js[k2++].get<double>();
        }
      } else if (t.analytic_map) {
        for_each_node(ov, [&](const MultiIndex& idx) {
          VecN x = ov.node(idx);
          t.map_samples.at(idx) = t.analytic_map(x);
          t.jacobian_samples.at(idx) = t.analytic_jac(x);
        });
      } else {
        fail(ErrorKind::Input, "transition has neither samples nor builtin map");
      }
      m.transitions.push_back(std::move(t));
    }
  }

  if (fields_out && j.contains("fields")) {
    for (auto it = j["fields"].begin(); it != j["fields"].end(); ++it) {
      std::vector<GridField<double>> per_chart;
      for (const Chart& c : m.charts) {
        GridField<double> f(c.grid);
        if (it.value().contains(c.id)) {
          const Json& arr = it.value()[c.id];
          if (arr.size() != f.values.size())
            fail(ErrorKind::Input, "field '" + it.key() + "' length mismatch on '" +
                                       c.id + "'");
          for (std::size_t idx = 0; idx < arr.size(); ++idx)
            f.values[idx] = arr[idx].get<double>();
        }
        per_chart.push_back(std::move(f));
      }
      (*fields_out)[it.key()] = std::move(per_chart);
    }
  }

  m.validate();
  return m;
}

inline void save_json(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Input, "cannot open '" + path + "' for writing");
  out << j.dump(1, '\t') << "\n";
}

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Input, "cannot open '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(ErrorKind::Input, std::string("malformed document: ") + e.what());
  }
  return j;
}

inline void save_manifold(const PointedManifold& m, const std::string& path,
                          const ChartFields& fields = {},
                          const Json& provenance = Json()) {
  save_json(manifold_to_json(m, fields, provenance), path);
}

inline PointedManifold load_manifold(const std::string& path,
                                     ChartFields* fields_out = nullptr) {
  return manifold_from_json(load_json(path), fields_out);
}

}  // namespace collarforge
