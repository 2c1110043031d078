// sfde: command line front end for the stochastic delay equation toolkit.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "run_config.hpp"
#include "sfde/sfde.hpp"

namespace {

using nlohmann::json;
using namespace sfde;
using sfde::cli::RunConfig;

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Options {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<double> T;
  std::string times;
  std::optional<std::size_t> replicas;
  std::string out;
  std::string gnuplot;
  std::optional<double> sigma;
};

RunConfig load(const Options& o) {
  if (!o.config.empty() && !o.preset.empty()) fail(ErrorKind::config, "use either --config or --preset, not both");
  if (!o.config.empty()) {
    if (o.sigma) fail(ErrorKind::config, "--sigma only applies to presets");
    return cli::load_config(o.config);
  }
  if (o.preset.empty()) fail(ErrorKind::config, "one of --config or --preset is required");
  return cli::preset(o.preset, o.sigma.value_or(1.0));
}

class Output {
 public:
  explicit Output(const std::string& path) : path_(path) {}
  std::ostream& stream() { return buf_; }
  void flush() {
    if (path_.empty()) {
      std::cout << buf_.str();
      std::cout.flush();
      return;
    }
    std::ofstream f(path_, std::ios::binary);
    if (!f) fail(ErrorKind::config, "cannot write " + path_);
    f << buf_.str();
  }

 private:
  std::string path_;
  std::ostringstream buf_;
};

std::vector<double> parse_list(const std::string& s, double h) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    const auto* b = item.data();
    const auto* e = b + item.size();
    while (b < e && *b == ' ') ++b;
    auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e) fail(ErrorKind::config, "bad number '" + item + "' in --times");
    grid_index(v, h, "--times entry");
    out.push_back(v);
  }
  if (out.empty()) fail(ErrorKind::config, "--times is empty");
  return out;
}

double align_up(double t, double h) { return std::ceil(t / h - 1e-9) * h; }

StabilityCertificate analyze(const RunConfig& cfg) {
  const auto& sys = cfg.system;
  const ResolventTable table = compute_resolvent(sys.measure, cfg.numerics.h, cfg.numerics.horizon);
  const double alpha0 = spectral_abscissa(sys.measure);
  const std::vector<double> grid = cfg.numerics.alpha_grid ? *cfg.numerics.alpha_grid : default_alpha_grid(alpha0);
  CertifyOptions opt;
  opt.safety = cfg.numerics.safety;
  opt.alpha0 = alpha0;
  return certify(sys.measure, sys.lipschitz(), grid, table, opt);
}

double truncation(const RunConfig& cfg, const StabilityCertificate& cert) {
  if (cfg.numerics.T_trunc) {
    grid_index(*cfg.numerics.T_trunc, cfg.numerics.h, "numerics.T_trunc");
    return *cfg.numerics.T_trunc;
  }
  return default_truncation(cert, cfg.system.affine(), cfg.numerics.h);
}

void header(std::ostream& os, const char* prefix, std::size_t n) {
  for (std::size_t i = 1; i <= n; ++i) os << ',' << prefix << i;
}

int cmd_analyze(const Options& o) {
  const RunConfig cfg = load(o);
  const StabilityCertificate c = analyze(cfg);
  json j = {{"alpha0", c.alpha0_est}, {"alpha", c.alpha_star}, {"c_alpha", c.c_alpha}, {"lipschitz", c.lipschitz},
            {"k", c.k_const},         {"rate", c.rate},        {"certified", c.certified}, {"diagnostics", c.diagnostics}};
  Output out(o.out);
  out.stream() << j.dump(2) << '\n';
  out.flush();
  return 0;
}

int cmd_resolvent(const Options& o) {
  const RunConfig cfg = load(o);
  const double T = align_up(o.T.value_or(cfg.numerics.horizon), cfg.numerics.h);
  const ResolventTable table = compute_resolvent(cfg.system.measure, cfg.numerics.h, T);
  const std::size_t n = table.dim();
  Output out(o.out);
  auto& os = out.stream();
  os << 't';
  for (std::size_t a = 1; a <= n; ++a)
    for (std::size_t b = 1; b <= n; ++b) os << ",r_" << a << b;
  os << '\n';
  for (std::int64_t j = 0; j <= table.last(); ++j) {
    os << num(table.time(j));
    const double* r = table.data_at(j);
    for (std::size_t k = 0; k < n * n; ++k) os << ',' << num(r[k]);
    os << '\n';
  }
  out.flush();
  return 0;
}

int cmd_simulate(const Options& o) {
  const RunConfig cfg = load(o);
  const double h = cfg.numerics.h;
  const double T = o.T.value_or(10.0);
  grid_index(T, h, "--T");
  const WienerPath path = sample_path(o.seed.value_or(cfg.master_seed), h, 0.0, T, cfg.system.noise_dim());
  const EmResult r = em_solve(cfg.system, path, cfg.xi(), 0.0, T);
  const std::size_t n = cfg.system.dim();
  Output out(o.out);
  auto& os = out.stream();
  os << 't';
  header(os, "x_", n);
  os << '\n';
  for (std::size_t k = 0; k < r.trajectory.nodes(); ++k) {
    os << num(r.trajectory.time(k));
    for (std::size_t i = 0; i < n; ++i) os << ',' << num(r.trajectory.values[k * n + i]);
    os << '\n';
  }
  out.flush();
  return 0;
}

int cmd_pullback(const Options& o) {
  const RunConfig cfg = load(o);
  const double h = cfg.numerics.h;
  const std::vector<double> times = parse_list(o.times.empty() ? "5,10,15,20" : o.times, h);
  const StabilityCertificate cert = analyze(cfg);
  const double Tt = truncation(cfg, cert);
  double lo = Tt;
  for (double t : times) lo = std::max(lo, t);
  const WienerPath path = sample_path(o.seed.value_or(cfg.master_seed), h, -lo, 0.0, cfg.system.noise_dim());
  const StationarySegment U = stationary_segment(cfg.system, path, Tt, cert);
  const Segment xi = cfg.xi();
  Output out(o.out);
  auto& os = out.stream();
  os << "t,dist\n";
  for (double t : times) os << num(t) << ',' << num(sup_distance(pullback(cfg.system, path, xi, t), U.segment)) << '\n';
  out.flush();
  return 0;
}

int cmd_equilibrium(const Options& o) {
  const RunConfig cfg = load(o);
  const double h = cfg.numerics.h;
  const std::vector<double> times = parse_list(o.times.empty() ? "1,2,5" : o.times, h);
  const StabilityCertificate cert = analyze(cfg);
  const double Tt = truncation(cfg, cert);
  double tmax = 0.0;
  for (double t : times) {
    if (!(t > 0.0)) fail(ErrorKind::config, "--times entries must be positive for equilibrium");
    tmax = std::max(tmax, t);
  }
  const WienerPath path = sample_path(o.seed.value_or(cfg.master_seed), h, -Tt, tmax, cfg.system.noise_dim());
  const StationarySegment U = stationary_segment(cfg.system, path, Tt, cert);
  const ResolventTable table = compute_resolvent(cfg.system.measure, h, align_up(std::max(Tt + tmax, cfg.system.tau()), h));
  const double gamma = 0.5 * cert.alpha_star;
  Output out(o.out);
  auto& os = out.stream();
  os << "t,residual,tempered\n";
  for (double t : times) {
    const double res = equilibrium_residual(cfg.system, path, U, t, table);
    const StationarySegment Ut = stationary_segment(cfg.system, shift(path, t), Tt, cert);
    os << num(t) << ',' << num(res) << ',' << num(std::exp(-gamma * t) * sup_norm(Ut.segment)) << '\n';
  }
  out.flush();
  return 0;
}

int cmd_moments(const Options& o) {
  const RunConfig cfg = load(o);
  const StabilityCertificate cert = analyze(cfg);
  const double Tt = truncation(cfg, cert);
  const std::size_t R = o.replicas.value_or(cfg.replicas);
  const std::uint64_t seed = o.seed.value_or(cfg.master_seed);
  const MomentStats st = mc_moments(cfg.system, cert, R, seed, Tt, cfg.numerics.h);
  const MomentBounds b =
      moment_bounds(cfg.system.measure, cfg.system.sigma, cert.alpha_star, cert.c_alpha, cfg.system.noise_dim());
  std::vector<double> mean(st.mean.data(), st.mean.data() + st.mean.size());
  std::vector<double> se_mean(st.se_mean.data(), st.se_mean.data() + st.se_mean.size());
  json j = {{"mean", mean},
            {"var", st.var},
            {"sup_mean", st.sup_mean},
            {"sup_sq_mean", st.sup_sq_mean},
            {"se", {{"mean", se_mean}, {"var", st.se_var}, {"sup_mean", st.se_sup_mean}, {"sup_sq_mean", st.se_sup_sq_mean}}},
            {"bounds", {{"ou4", b.ou4}, {"ou5", b.ou5}, {"ou6", b.ou6}, {"ou7", b.ou7}}},
            {"replicas", st.replicas},
            {"master_seed", st.master_seed},
            {"T_trunc", Tt}};
  Output out(o.out);
  out.stream() << j.dump(2) << '\n';
  out.flush();
  return 0;
}

void write_gnuplot(const std::string& path, const std::string& csv, std::size_t n) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::config, "cannot write " + path);
  const std::size_t dist_col = 2 + 2 * n;
  f << "# Two forward solutions on one noise path and their distance.\n"
    << "set datafile separator ','\n"
    << "set key autotitle columnhead\n"
    << "set terminal pngcairo size 1200,800\n"
    << "set output '" << path << ".png'\n"
    << "set multiplot layout 2,1\n"
    << "set xlabel 't'\n"
    << "set ylabel 'x(t)'\n"
    << "plot '" << csv << "' using 1:2 with lines, '" << csv << "' using 1:" << 2 + n << " with lines\n"
    << "set ylabel '|x(t) - y(t)|'\n"
    << "set logscale y\n"
    << "plot '" << csv << "' using 1:" << dist_col << " with lines\n"
    << "unset multiplot\n";
}

int cmd_synchronize(const Options& o) {
  const RunConfig cfg = load(o);
  const double h = cfg.numerics.h;
  const double T = o.T.value_or(30.0);
  grid_index(T, h, "--T");
  if (!o.gnuplot.empty() && o.out.empty()) fail(ErrorKind::config, "--gnuplot needs --out for the CSV it plots");
  const WienerPath path = sample_path(o.seed.value_or(cfg.master_seed), h, 0.0, T, cfg.system.noise_dim());
  const SyncResult r = synchronize(cfg.system, path, cfg.xi(), cfg.eta(), T);
  const std::size_t n = cfg.system.dim();
  Output out(o.out);
  auto& os = out.stream();
  os << 't';
  header(os, "x_", n);
  header(os, "y_", n);
  os << ",dist\n";
  for (std::size_t k = 0; k < r.t.size(); ++k) {
    os << num(r.t[k]);
    for (std::size_t i = 0; i < n; ++i) os << ',' << num(r.x.values[k * n + i]);
    for (std::size_t i = 0; i < n; ++i) os << ',' << num(r.y.values[k * n + i]);
    os << ',' << num(r.distance[k]) << '\n';
  }
  out.flush();
  if (!o.gnuplot.empty()) write_gnuplot(o.gnuplot, o.out, n);
  return 0;
}

int report(ErrorKind kind, const std::string& msg, std::optional<std::size_t> pos = std::nullopt) {
  json j = {{"error", std::string(to_string(kind))}, {"message", msg}};
  if (pos) j["position"] = *pos;
  std::cerr << j.dump() << '\n';
  return is_validation(kind) ? 1 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Analysis and simulation of stochastic functional differential equations"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration");
    sub->add_option("--preset", o.preset, "built-in configuration: example61 or example62");
    sub->add_option("--sigma", o.sigma, "noise intensity for presets (default 1)");
    sub->add_option("--out", o.out, "output file (default: standard output)");
    sub->add_option("--seed", o.seed, "path seed (default: rng.master_seed)");
  };
  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Sub subs[] = {
      {"analyze", "stability certificate as JSON", cmd_analyze},
      {"resolvent", "fundamental solution table as CSV", cmd_resolvent},
      {"simulate", "one Euler-Maruyama trajectory as CSV", cmd_simulate},
      {"pullback", "distance of pullback segments to the stationary segment", cmd_pullback},
      {"equilibrium", "random-equilibrium residuals", cmd_equilibrium},
      {"moments", "Monte Carlo moments of the stationary segment", cmd_moments},
      {"synchronize", "two forward solutions on one path", cmd_synchronize},
  };
  int (*chosen)(const Options&) = nullptr;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    common(sub);
    const std::string name = s.name;
    if (name == "resolvent" || name == "simulate" || name == "synchronize") sub->add_option("--T", o.T, "horizon");
    if (name == "pullback" || name == "equilibrium") sub->add_option("--times", o.times, "comma separated times");
    if (name == "moments") sub->add_option("--replicas", o.replicas, "number of replicas");
    if (name == "synchronize") sub->add_option("--gnuplot", o.gnuplot, "write a gnuplot script for the CSV");
    sub->callback([&chosen, fn = s.fn] { chosen = fn; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(ErrorKind::config, e.what());
  }
  try {
    return chosen(o);
  } catch (const ParseError& e) {
    return report(e.kind(), e.what(), e.position());
  } catch (const Error& e) {
    return report(e.kind(), e.what());
  } catch (const std::exception& e) {
    return report(ErrorKind::evaluation, e.what());
  }
}
