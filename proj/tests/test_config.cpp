#include <gtest/gtest.h>

#include <cmath>

#include "run_config.hpp"

using namespace sfde;
using cli::json;

namespace {

ErrorKind kind_of(const json& j) {
  try {
    cli::parse_config(j);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "accepted " << j.dump();
  return ErrorKind::statistics;
}

json base() {
  return json::parse(R"({"system": {"n": 1, "tau": 1, "atoms": [{"s": 0, "A": -2}, {"s": -1, "A": [1]}]}})");
}

}  // namespace

TEST(Config, Defaults) {
  const auto cfg = cli::parse_config(base());
  EXPECT_DOUBLE_EQ(cfg.numerics.h, 1.0 / 256);
  EXPECT_EQ(cfg.system.sigma, Eigen::MatrixXd::Identity(1, 1));
  EXPECT_TRUE(cfg.system.affine());
  EXPECT_FALSE(cfg.numerics.alpha_grid.has_value());
  EXPECT_DOUBLE_EQ(cfg.xi().at(cfg.xi().last())[0], 0.0);
  EXPECT_DOUBLE_EQ(cfg.eta().at(cfg.eta().last())[0], 2.0);

  auto ode = json::parse(R"({"system": {"n": 1, "tau": 0, "atoms": [{"s": 0, "A": -1}]}})");
  EXPECT_DOUBLE_EQ(cli::parse_config(ode).numerics.h, 1.0 / 256);
}

TEST(Config, MatrixForms) {
  auto j = json::parse(R"({"system": {"n": 2, "m": 1, "tau": 0.5,
      "atoms": [{"s": 0, "A": [[-1, 0], [0.5, -2]]}, {"s": -0.5, "A": [0.1, 0, 0, 0.2]}],
      "density": {"step": 0.25, "values": [0, 0.1, [[0, 0], [0, 0.3]]]},
      "sigma": [[1], [2]]}})");
  const auto cfg = cli::parse_config(j);
  const auto& atoms = cfg.system.measure.atoms();
  EXPECT_EQ(atoms[0].A(1, 0), 0.5);
  EXPECT_EQ(atoms[1].A(1, 1), 0.2);
  EXPECT_EQ(cfg.system.measure.density()->values[1](1, 1), 0.1);
  EXPECT_EQ(cfg.system.sigma(1, 0), 2.0);
  EXPECT_EQ(cfg.system.noise_dim(), 1u);
}

TEST(Config, Presets) {
  const auto p61 = cli::preset("example61");
  EXPECT_TRUE(p61.system.affine());
  EXPECT_EQ(*p61.numerics.alpha_grid, std::vector<double>{0.4});
  const auto p62 = cli::preset("example62", 0.3);
  EXPECT_FALSE(p62.system.affine());
  EXPECT_DOUBLE_EQ(p62.system.lipschitz(), 0.25);
  EXPECT_DOUBLE_EQ(p62.system.sigma(0, 0), 0.3);
  EXPECT_THROW(cli::preset("example63"), Error);
}

TEST(Config, ValidationErrors) {
  auto off_grid = base();
  off_grid["numerics"] = {{"h", 0.3}};
  EXPECT_EQ(kind_of(off_grid), ErrorKind::alignment);

  auto lag = base();
  lag["system"]["atoms"][1]["s"] = -0.3;
  lag["numerics"] = {{"h", 0.25}};
  EXPECT_EQ(kind_of(lag), ErrorKind::alignment);

  auto nl = base();
  nl["numerics"] = {{"h", 0.25}};
  nl["system"]["nonlinearity"] = {{"exprs", {"sin(x0@0.1)"}}, {"lipschitz", 1}};
  EXPECT_EQ(kind_of(nl), ErrorKind::alignment);

  auto bad_expr = base();
  bad_expr["system"]["nonlinearity"] = {{"exprs", {"sin(x0@1"}}, {"lipschitz", 1}};
  EXPECT_EQ(kind_of(bad_expr), ErrorKind::syntax);

  auto shape = base();
  shape["system"]["atoms"][0]["A"] = {1, 2};
  EXPECT_EQ(kind_of(shape), ErrorKind::shape);

  EXPECT_EQ(kind_of(json::parse(R"({"system": {"tau": 1}})")), ErrorKind::config);
  EXPECT_EQ(kind_of(json::parse(R"([1, 2])")), ErrorKind::config);

  auto seed = base();
  seed["rng"] = {{"master_seed", -1}};
  EXPECT_EQ(kind_of(seed), ErrorKind::config);

  auto init = base();
  init["initial"] = {{"xi", "sin(v)"}};
  EXPECT_EQ(kind_of(init), ErrorKind::unknown_symbol);
}

TEST(Config, PresetJsonRoundTrips) {
  const json j = cli::preset_json("example62", 1.0);
  const auto a = cli::parse_config(j), b = cli::parse_config(json::parse(j.dump()));
  EXPECT_EQ(a.system.measure.atoms().size(), b.system.measure.atoms().size());
  EXPECT_EQ(a.system.nonlinearity->sources, b.system.nonlinearity->sources);
  EXPECT_EQ(a.master_seed, b.master_seed);
}
