#include <gtest/gtest.h>

#include <cctype>
#include <cmath>
#include <numbers>
#include <string>

#include "gen.hpp"

using namespace sfde;

namespace {

double eval_const(const Expr& e) {
  return e.evaluate([](std::uint32_t, double) -> double { throw std::logic_error("variable in constant expression"); });
}

/// Independent reference: evaluates a constant expression directly from the
/// text, without building any tree.
class Reference {
 public:
  explicit Reference(const std::string& s) : s_(s) {}
  double run() {
    const double v = sum();
    skip();
    if (p_ != s_.size()) throw std::runtime_error("trailing input");
    return v;
  }

 private:
  void skip() {
    while (p_ < s_.size() && s_[p_] == ' ') ++p_;
  }
  bool eat(char c) {
    skip();
    if (p_ < s_.size() && s_[p_] == c) {
      ++p_;
      return true;
    }
    return false;
  }
  double sum() {
    double v = product();
    for (;;) {
      if (eat('+')) v += product();
      else if (eat('-')) v -= product();
      else return v;
    }
  }
  double product() {
    double v = unary();
    for (;;) {
      if (eat('*')) v *= unary();
      else if (eat('/')) v /= unary();
      else return v;
    }
  }
  double unary() { return eat('-') ? -unary() : atom(); }
  double atom() {
    skip();
    if (eat('(')) {
      const double v = sum();
      eat(')');
      return v;
    }
    if (std::isalpha(static_cast<unsigned char>(s_[p_]))) {
      std::string name;
      while (std::isalpha(static_cast<unsigned char>(s_[p_]))) name += s_[p_++];
      eat('(');
      const double x = sum();
      eat(')');
      if (name == "sin") return std::sin(x);
      if (name == "cos") return std::cos(x);
      if (name == "tanh") return std::tanh(x);
      if (name == "atan") return std::atan(x);
      return std::abs(x);
    }
    std::size_t used = 0;
    const double v = std::stod(s_.substr(p_), &used);
    p_ += used;
    return v;
  }

  std::string s_;
  std::size_t p_ = 0;
};

std::string random_expr(gen::Rng& g, int depth, bool with_vars) {
  const int pick = depth <= 0 ? gen::integer(g, 0, with_vars ? 1 : 0) : gen::integer(g, 0, 7);
  auto lit = [&] {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", gen::uniform(g, 0.0, 3.0));
    return std::string(buf);
  };
  switch (pick) {
    case 0: return lit();
    case 1: return with_vars ? "x" + std::to_string(gen::integer(g, 0, 1)) + "@" + std::to_string(gen::integer(g, 0, 4) * 0.25).substr(0, 4) : lit();
    case 2: return "(" + random_expr(g, depth - 1, with_vars) + " + " + random_expr(g, depth - 1, with_vars) + ")";
    case 3: return random_expr(g, depth - 1, with_vars) + " - " + random_expr(g, depth - 1, with_vars);
    case 4: return random_expr(g, depth - 1, with_vars) + "*" + random_expr(g, depth - 1, with_vars);
    case 5: return "-" + random_expr(g, depth - 1, with_vars);
    case 6: {
      static const char* f[] = {"sin", "cos", "tanh", "atan", "abs"};
      return std::string(f[gen::integer(g, 0, 4)]) + "(" + random_expr(g, depth - 1, with_vars) + ")";
    }
    default: return "(" + random_expr(g, depth - 1, with_vars) + ")/(1.5 + " + random_expr(g, depth - 1, with_vars) + "*0)";
  }
}

ErrorKind kind_of(const std::string& src, std::size_t n = 1, double tau = 1.0) {
  try {
    parse_expr(src, n, tau);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error for " << src;
  return ErrorKind::config;
}

}  // namespace

TEST(Parse, ExampleNonlinearity) {
  const auto spec = make_nonlinearity({"0.25*sin(x0@1.0)"}, 0.25, 1, 1.0);
  ASSERT_EQ(spec.delays.size(), 1u);
  EXPECT_EQ(spec.delays[0], 1.0);
  EXPECT_TRUE(spec.warnings.empty());
}

TEST(Parse, SyntaxErrorCarriesPosition) {
  try {
    parse_expr("0.25*sin(", 1, 1.0);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::syntax);
    EXPECT_EQ(e.position(), 9u);
  }
}

TEST(Parse, Rejections) {
  EXPECT_EQ(kind_of("y0@1"), ErrorKind::unknown_symbol);
  EXPECT_EQ(kind_of("exp(x0@0)"), ErrorKind::unknown_symbol);
  EXPECT_EQ(kind_of("x1@0", 1), ErrorKind::unknown_symbol);
  EXPECT_EQ(kind_of("x0@1.5", 1, 1.0), ErrorKind::range);
  EXPECT_EQ(kind_of("1 +"), ErrorKind::syntax);
  EXPECT_EQ(kind_of("(1"), ErrorKind::syntax);
  EXPECT_EQ(kind_of("1 2"), ErrorKind::syntax);
  EXPECT_EQ(kind_of(""), ErrorKind::syntax);
}

TEST(Parse, Precedence) {
  EXPECT_DOUBLE_EQ(eval_const(parse_expr("1 + 2*3", 1, 0)), 7.0);
  EXPECT_DOUBLE_EQ(eval_const(parse_expr("(1 + 2)*3", 1, 0)), 9.0);
  EXPECT_DOUBLE_EQ(eval_const(parse_expr("8/4/2", 1, 0)), 1.0);
  EXPECT_DOUBLE_EQ(eval_const(parse_expr("1 - 2 - 3", 1, 0)), -4.0);
  EXPECT_DOUBLE_EQ(eval_const(parse_expr("-2*3", 1, 0)), -6.0);
  EXPECT_DOUBLE_EQ(eval_const(parse_expr("2e-1", 1, 0)), 0.2);
}

TEST(Parse, DivisionWarns) {
  const auto spec = make_nonlinearity({"x0@0/2"}, 0.5, 1, 1.0);
  EXPECT_EQ(spec.warnings.size(), 1u);
}

TEST(Parse, TimeExpression) {
  const Expr e = parse_time_expr("2*cos(u)");
  EXPECT_DOUBLE_EQ(e.evaluate([](std::uint32_t, double) { return 0.0; }, -0.5), 2.0 * std::cos(-0.5));
  EXPECT_THROW(parse_expr("u", 1, 1.0), Error);
}

TEST(Eval, Examples) {
  const double h = 1.0 / 256;
  const auto spec = make_nonlinearity({"0.25*sin(x0@1.0)"}, 0.25, 1, 1.0);
  const auto seg = Segment::from_function(1.0, h, 1, [](double u, std::size_t) {
    return u == -1.0 ? std::numbers::pi / 2 : 0.0;
  });
  EXPECT_DOUBLE_EQ(eval(spec, seg)(0), 0.25);

  const auto zero = make_nonlinearity({"0"}, 0.0, 1, 1.0);
  gen::Rng g(5);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(eval(zero, gen::segment(g, 1.0, h, 1))(0), 0.0);

  const auto th = make_nonlinearity({"tanh(x0@0)"}, 1.0, 1, 1.0);
  EXPECT_EQ(eval(th, Segment(1.0, h, 1))(0), 0.0);
}

TEST(Eval, NonFiniteIsAnEvaluationError) {
  const auto spec = make_nonlinearity({"1/x0@0"}, 1.0, 1, 1.0);
  try {
    eval(spec, Segment(1.0, 0.5, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::evaluation);
  }
}

TEST(Eval, MultiComponentLags) {
  const auto spec = make_nonlinearity({"x1@0.5", "x0@0 + x1@1"}, 1.0, 2, 1.0);
  const auto seg = Segment::from_function(1.0, 0.25, 2, [](double u, std::size_t c) { return 10.0 * c + u; });
  const Eigen::VectorXd v = eval(spec, seg);
  EXPECT_DOUBLE_EQ(v(0), 10.0 - 0.5);
  EXPECT_DOUBLE_EQ(v(1), 0.0 + 10.0 - 1.0);
}

TEST(Properties, PrintParseFixpoint) {
  gen::Rng g(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::string src = random_expr(g, 4, true);
    const Expr e = parse_expr(src, 2, 1.0);
    const std::string printed = to_string(e);
    const Expr again = parse_expr(printed, 2, 1.0);
    EXPECT_TRUE(e == again) << src << " -> " << printed;
    EXPECT_EQ(to_string(again), printed);
  }
}

TEST(Properties, AgreesWithReferenceEvaluator) {
  gen::Rng g(22);
  for (int trial = 0; trial < 300; ++trial) {
    const std::string a = random_expr(g, 3, false), b = random_expr(g, 3, false);
    const double va = eval_const(parse_expr(a, 1, 0.0)), vb = eval_const(parse_expr(b, 1, 0.0));
    const double sum = eval_const(parse_expr("(" + a + ") + (" + b + ")", 1, 0.0));
    EXPECT_DOUBLE_EQ(sum, va + vb) << a << " | " << b;
    EXPECT_NEAR(va, Reference(a).run(), 1e-12 * (1.0 + std::abs(va))) << a;
  }
}

TEST(Properties, ExampleNonlinearityRespectsDeclaredLipschitz) {
  gen::Rng g(23);
  const double h = 1.0 / 64;
  const auto spec = make_nonlinearity({"0.25*sin(x0@1.0)"}, 0.25, 1, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const auto s1 = gen::segment(g, 1.0, h, 1, 5.0), s2 = gen::segment(g, 1.0, h, 1, 5.0);
    EXPECT_LE(std::abs(eval(spec, s1)(0) - eval(spec, s2)(0)), 0.25 * sup_distance(s1, s2) + 1e-15);
  }
}
