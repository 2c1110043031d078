#pragma once

// JSON run configuration and built-in presets for the sfde command line tool.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfde/sfde.hpp"

namespace sfde::cli {

using nlohmann::json;

struct Numerics {
  double h = 0.0;
  std::optional<double> T_trunc;
  std::optional<std::vector<double>> alpha_grid;
  double safety = 1.01;
  double horizon = 0.0;  ///< resolvent table length used for C_alpha
};

struct RunConfig {
  SystemSpec system;
  Numerics numerics;
  std::uint64_t master_seed = 0;
  std::size_t replicas = 1000;
  std::string xi_src = "sin(u)";
  std::string eta_src = "2*cos(u)";

  Segment initial(const std::string& src) const {
    const Expr e = parse_time_expr(src);
    const std::size_t n = system.dim();
    return Segment::from_function(system.tau(), numerics.h, n, [&](double u, std::size_t) {
      return e.evaluate([](std::size_t, double) { return 0.0; }, u);
    });
  }
  Segment xi() const { return initial(xi_src); }
  Segment eta() const { return initial(eta_src); }
};

namespace detail {

inline const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) fail(ErrorKind::config, where + " is missing \"" + key + "\"");
  return j.at(key);
}

inline double number(const json& j, const std::string& what) {
  if (!j.is_number()) fail(ErrorKind::config, what + " must be a number");
  return j.get<double>();
}

/// A number (c times the identity), a flat row-major list, or a nested list of rows.
inline Eigen::MatrixXd matrix(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  Eigen::MatrixXd A(rows, cols);
  if (j.is_number()) {
    if (rows != cols) fail(ErrorKind::shape, what + ": a scalar needs a square shape");
    A = j.get<double>() * Eigen::MatrixXd::Identity(rows, cols);
    return A;
  }
  if (!j.is_array()) fail(ErrorKind::config, what + " must be a number or an array");
  if (!j.empty() && j[0].is_array()) {
    if (static_cast<Eigen::Index>(j.size()) != rows) fail(ErrorKind::shape, what + " has the wrong number of rows");
    for (Eigen::Index r = 0; r < rows; ++r) {
      const json& row = j[static_cast<std::size_t>(r)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
        fail(ErrorKind::shape, what + " has a row of the wrong length");
      for (Eigen::Index c = 0; c < cols; ++c) A(r, c) = number(row[static_cast<std::size_t>(c)], what);
    }
    return A;
  }
  if (static_cast<Eigen::Index>(j.size()) != rows * cols) fail(ErrorKind::shape, what + " has the wrong number of entries");
  for (Eigen::Index k = 0; k < rows * cols; ++k) A(k / cols, k % cols) = number(j[static_cast<std::size_t>(k)], what);
  return A;
}

inline double default_h(double tau) { return tau > 0.0 ? tau / 256.0 : 1.0 / 256.0; }

}  // namespace detail

/// Checks that h divides tau, every atom location, the density step and every
/// nonlinearity lag.
inline void validate_grid(const SystemSpec& sys, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) fail(ErrorKind::config, "numerics.h must be positive");
  grid_index(sys.tau(), h, "tau");
  for (const auto& a : sys.measure.atoms()) grid_index(a.s, h, "atom location");
  if (const auto& d = sys.measure.density()) grid_index(d->step, h, "density step");
  if (sys.nonlinearity)
    for (double d : sys.nonlinearity->delays) grid_index(d, h, "nonlinearity lag");
}

inline RunConfig parse_config(const json& root) {
  if (!root.is_object()) fail(ErrorKind::config, "configuration must be a JSON object");
  const json& s = detail::require(root, "system", "configuration");
  const auto n = static_cast<std::size_t>(detail::number(detail::require(s, "n", "system"), "system.n"));
  const double tau = detail::number(detail::require(s, "tau", "system"), "system.tau");
  if (n == 0) fail(ErrorKind::shape, "system.n must be positive");
  const auto N = static_cast<Eigen::Index>(n);

  std::vector<Atom> atoms;
  if (s.contains("atoms")) {
    if (!s["atoms"].is_array()) fail(ErrorKind::config, "system.atoms must be an array");
    for (const auto& a : s["atoms"])
      atoms.push_back({detail::number(detail::require(a, "s", "atom"), "atom.s"),
                       detail::matrix(detail::require(a, "A", "atom"), N, N, "atom.A")});
  }
  std::optional<Density> density;
  if (s.contains("density") && !s["density"].is_null()) {
    const json& d = s["density"];
    Density dd;
    dd.step = detail::number(detail::require(d, "step", "density"), "density.step");
    const json& vals = detail::require(d, "values", "density");
    if (!vals.is_array()) fail(ErrorKind::config, "density.values must be an array");
    for (const auto& v : vals) dd.values.push_back(detail::matrix(v, N, N, "density value"));
    density = std::move(dd);
  }
  DelayMeasure mu(tau, n, std::move(atoms), std::move(density));

  Eigen::MatrixXd sigma;
  if (s.contains("sigma")) {
    const json& sj = s["sigma"];
    const Eigen::Index m = s.contains("m") ? static_cast<Eigen::Index>(detail::number(s["m"], "system.m")) : N;
    sigma = detail::matrix(sj, N, m, "system.sigma");
  } else {
    sigma = Eigen::MatrixXd::Identity(N, N);
  }

  std::optional<NonlinearitySpec> f;
  if (s.contains("nonlinearity") && !s["nonlinearity"].is_null()) {
    const json& nl = s["nonlinearity"];
    const json& ex = detail::require(nl, "exprs", "nonlinearity");
    if (!ex.is_array()) fail(ErrorKind::config, "nonlinearity.exprs must be an array of strings");
    std::vector<std::string> src;
    for (const auto& e : ex) {
      if (!e.is_string()) fail(ErrorKind::config, "nonlinearity.exprs must be an array of strings");
      src.push_back(e.get<std::string>());
    }
    f = make_nonlinearity(src, detail::number(detail::require(nl, "lipschitz", "nonlinearity"), "lipschitz"), n, tau);
  }

  RunConfig cfg{SystemSpec(std::move(mu), std::move(sigma), std::move(f)), {}, 0, 1000, "sin(u)", "2*cos(u)"};
  Numerics& num = cfg.numerics;
  num.h = detail::default_h(tau);
  num.horizon = 40.0 * std::max(tau, 1.0);
  if (root.contains("numerics")) {
    const json& nj = root["numerics"];
    if (nj.contains("h")) num.h = detail::number(nj["h"], "numerics.h");
    if (nj.contains("T_trunc")) num.T_trunc = detail::number(nj["T_trunc"], "numerics.T_trunc");
    if (nj.contains("safety")) num.safety = detail::number(nj["safety"], "numerics.safety");
    if (nj.contains("horizon")) num.horizon = detail::number(nj["horizon"], "numerics.horizon");
    if (nj.contains("alpha_grid")) {
      std::vector<double> g;
      for (const auto& a : nj["alpha_grid"]) g.push_back(detail::number(a, "numerics.alpha_grid"));
      num.alpha_grid = std::move(g);
    }
  }
  if (root.contains("rng")) {
    const json& rj = root["rng"];
    if (rj.contains("master_seed")) {
      if (!rj["master_seed"].is_number_unsigned()) fail(ErrorKind::config, "rng.master_seed must be an unsigned integer");
      cfg.master_seed = rj["master_seed"].get<std::uint64_t>();
    }
    if (rj.contains("replicas")) {
      if (!rj["replicas"].is_number_integer()) fail(ErrorKind::config, "rng.replicas must be an integer");
      cfg.replicas = rj["replicas"].get<std::size_t>();
    }
  }
  if (root.contains("initial")) {
    const json& ij = root["initial"];
    if (ij.contains("xi")) cfg.xi_src = ij["xi"].get<std::string>();
    if (ij.contains("eta")) cfg.eta_src = ij["eta"].get<std::string>();
  }
  validate_grid(cfg.system, num.h);
  num.horizon = std::ceil(num.horizon / num.h - 1e-9) * num.h;
  if (num.horizon < tau) fail(ErrorKind::config, "numerics.horizon must be at least tau");
  parse_time_expr(cfg.xi_src);
  parse_time_expr(cfg.eta_src);
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot open configuration file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config, std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

/// example61: dx = [-2x(t) + x(t-1)] dt + sigma dW.
/// example62: the same plus 0.25 sin(x(t-1)) with L = 0.25.
/// Both pin the rate search to alpha = 0.4 with C_alpha taken as measured.
inline json preset_json(const std::string& name, double sigma) {
  json j = {
      {"system",
       {{"n", 1},
        {"m", 1},
        {"tau", 1.0},
        {"atoms", json::array({{{"s", 0.0}, {"A", -2.0}}, {{"s", -1.0}, {"A", 1.0}}})},
        {"sigma", sigma}}},
      {"numerics", {{"h", 1.0 / 256.0}, {"alpha_grid", {0.4}}, {"safety", 1.0}, {"horizon", 40.0}}},
      {"rng", {{"master_seed", 20240601u}, {"replicas", 1000}}},
      {"initial", {{"xi", "sin(u)"}, {"eta", "2*cos(u)"}}},
  };
  if (name == "example62") {
    j["system"]["nonlinearity"] = {{"exprs", {"0.25*sin(x0@1)"}}, {"lipschitz", 0.25}};
  } else if (name != "example61") {
    fail(ErrorKind::config, "unknown preset '" + name + "' (expected example61 or example62)");
  }
  return j;
}

inline RunConfig preset(const std::string& name, double sigma = 1.0) { return parse_config(preset_json(name, sigma)); }

}  // namespace sfde::cli
