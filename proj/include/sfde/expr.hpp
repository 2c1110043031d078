#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sfde/error.hpp"
#include "sfde/segment.hpp"

namespace sfde {

enum class Func : std::uint8_t { sin, cos, tanh, atan, abs };

inline constexpr std::string_view func_name(Func f) noexcept {
  switch (f) {
    case Func::sin: return "sin";
    case Func::cos: return "cos";
    case Func::tanh: return "tanh";
    case Func::atan: return "atan";
    case Func::abs: return "abs";
  }
  return "?";
}

inline double call(Func f, double x) noexcept {
  switch (f) {
    case Func::sin: return std::sin(x);
    case Func::cos: return std::cos(x);
    case Func::tanh: return std::tanh(x);
    case Func::atan: return std::atan(x);
    case Func::abs: return std::abs(x);
  }
  return x;
}

struct ExprNode {
  enum class Kind : std::uint8_t { number, var, time, neg, add, sub, mul, div, call };
  Kind kind = Kind::number;
  double value = 0.0;     ///< literal, or lag d for `x<i>@<d>`
  std::uint32_t index = 0;  ///< state component for var
  Func fn = Func::sin;

  friend bool operator==(const ExprNode&, const ExprNode&) = default;
};

/// A parsed expression, stored in postfix order (children precede parents).
struct Expr {
  std::vector<ExprNode> nodes;
  std::size_t max_stack = 0;
  bool has_division = false;

  friend bool operator==(const Expr& a, const Expr& b) { return a.nodes == b.nodes; }

  /// Lags referenced by `x<i>@<d>` variables, deduplicated, in first-use order.
  std::vector<double> lags() const {
    std::vector<double> out;
    for (const auto& nd : nodes)
      if (nd.kind == ExprNode::Kind::var && std::find(out.begin(), out.end(), nd.value) == out.end())
        out.push_back(nd.value);
    return out;
  }

  /// Stack evaluation; `var(index, lag)` supplies state values and `t` is the
  /// value of the segment-time variable `u` when present.
  template <class VarFn>
  double evaluate(VarFn&& var, double t = 0.0) const {
    std::array<double, 64> small{};
    std::vector<double> big;
    double* st = small.data();
    if (max_stack > small.size()) {
      big.resize(max_stack);
      st = big.data();
    }
    std::size_t top = 0;
    for (const auto& nd : nodes) {
      using K = ExprNode::Kind;
      switch (nd.kind) {
        case K::number: st[top++] = nd.value; break;
        case K::var: st[top++] = var(nd.index, nd.value); break;
        case K::time: st[top++] = t; break;
        case K::neg: st[top - 1] = -st[top - 1]; break;
        case K::call: st[top - 1] = call(nd.fn, st[top - 1]); break;
        case K::add: --top; st[top - 1] = st[top - 1] + st[top]; break;
        case K::sub: --top; st[top - 1] = st[top - 1] - st[top]; break;
        case K::mul: --top; st[top - 1] = st[top - 1] * st[top]; break;
        case K::div: --top; st[top - 1] = st[top - 1] / st[top]; break;
      }
    }
    return st[0];
  }
};

namespace detail {

inline std::string shortest(double v) {
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), p);
}

// Recursive descent over
//   expr  := term (('+' | '-') term)*
//   term  := unary (('*' | '/') unary)*
//   unary := '-' unary | primary
//   primary := number | x<i>@<lag> | func '(' expr ')' | '(' expr ')'
class Parser {
 public:
  Parser(std::string_view src, std::size_t n, double tau, bool allow_time)
      : src_(src), n_(n), tau_(tau), allow_time_(allow_time) {}

  Expr run() {
    expr();
    skip_ws();
    if (pos_ < src_.size()) error(ErrorKind::syntax, std::string("unexpected character '") + src_[pos_] + "'");
    return std::move(out_);
  }

 private:
  [[noreturn]] void error(ErrorKind k, const std::string& msg) const { throw ParseError(k, pos_, msg); }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void push(ExprNode nd, int stack_delta) {
    out_.nodes.push_back(nd);
    depth_ += stack_delta;
    out_.max_stack = std::max(out_.max_stack, static_cast<std::size_t>(depth_));
  }

  void expr() {
    term();
    for (;;) {
      if (eat('+')) {
        term();
        push({ExprNode::Kind::add}, -1);
      } else if (eat('-')) {
        term();
        push({ExprNode::Kind::sub}, -1);
      } else {
        return;
      }
    }
  }

  void term() {
    unary();
    for (;;) {
      if (eat('*')) {
        unary();
        push({ExprNode::Kind::mul}, -1);
      } else if (eat('/')) {
        unary();
        push({ExprNode::Kind::div}, -1);
        out_.has_division = true;
      } else {
        return;
      }
    }
  }

  void unary() {
    if (eat('-')) {
      unary();
      push({ExprNode::Kind::neg}, 0);
      return;
    }
    primary();
  }

  double number() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) ++pos_;
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t q = pos_ + 1;
      if (q < src_.size() && (src_[q] == '+' || src_[q] == '-')) ++q;
      if (q < src_.size() && std::isdigit(static_cast<unsigned char>(src_[q]))) {
        pos_ = q;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      }
    }
    double v = 0.0;
    const auto [p, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, v);
    if (ec != std::errc() || p != src_.data() + pos_) {
      pos_ = start;
      error(ErrorKind::syntax, "malformed number");
    }
    return v;
  }

  void primary() {
    skip_ws();
    if (pos_ >= src_.size()) error(ErrorKind::syntax, "unexpected end of input");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      expr();
      if (!eat(')')) error(ErrorKind::syntax, "expected ')'");
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      push({ExprNode::Kind::number, number()}, +1);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
      const std::string_view id = src_.substr(start, pos_ - start);
      skip_ws();
      const bool call_follows = pos_ < src_.size() && src_[pos_] == '(';
      if (call_follows) {
        for (Func f : {Func::sin, Func::cos, Func::tanh, Func::atan, Func::abs}) {
          if (id == func_name(f)) {
            ++pos_;
            expr();
            if (!eat(')')) error(ErrorKind::syntax, "expected ')'");
            ExprNode nd{ExprNode::Kind::call};
            nd.fn = f;
            push(nd, 0);
            return;
          }
        }
        pos_ = start;
        error(ErrorKind::unknown_symbol, "unknown function '" + std::string(id) + "'");
      }
      if (allow_time_ && id == "u") {
        push({ExprNode::Kind::time}, +1);
        return;
      }
      if (id.size() >= 2 && id[0] == 'x' &&
          std::all_of(id.begin() + 1, id.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
        std::uint32_t idx = 0;
        std::from_chars(id.data() + 1, id.data() + id.size(), idx);
        if (idx >= n_) {
          pos_ = start;
          error(ErrorKind::unknown_symbol, "variable '" + std::string(id) + "' exceeds the state dimension");
        }
        if (!eat('@')) error(ErrorKind::syntax, "expected '@<lag>' after variable '" + std::string(id) + "'");
        const std::size_t lag_pos = pos_;
        const double lag = number();
        if (lag > tau_ * (1.0 + 1e-12)) {
          pos_ = lag_pos;
          error(ErrorKind::range, "lag exceeds tau");
        }
        ExprNode nd{ExprNode::Kind::var, lag, idx};
        push(nd, +1);
        return;
      }
      pos_ = start;
      error(ErrorKind::unknown_symbol, "unknown variable '" + std::string(id) + "'");
    }
    error(ErrorKind::syntax, std::string("unexpected character '") + c + "'");
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t n_;
  double tau_;
  bool allow_time_;
  int depth_ = 0;
  Expr out_;
};

}  // namespace detail

/// Parses one component of a nonlinearity over variables `x<i>@<d>`
/// (component i of the state at lag d, 0 <= d <= tau).
inline Expr parse_expr(std::string_view src, std::size_t n, double tau) {
  return detail::Parser(src, n, tau, false).run();
}

/// Parses a function of the segment time `u` (used for initial segments).
inline Expr parse_time_expr(std::string_view src) { return detail::Parser(src, 0, 0.0, true).run(); }

/// Fully parenthesised infix form; parsing it again reproduces `e`.
inline std::string to_string(const Expr& e) {
  std::vector<std::string> st;
  for (const auto& nd : e.nodes) {
    using K = ExprNode::Kind;
    auto pop = [&] {
      std::string s = std::move(st.back());
      st.pop_back();
      return s;
    };
    switch (nd.kind) {
      case K::number: st.push_back(detail::shortest(nd.value)); break;
      case K::var: st.push_back("x" + std::to_string(nd.index) + "@" + detail::shortest(nd.value)); break;
      case K::time: st.push_back("u"); break;
      case K::neg: st.push_back("(-" + pop() + ")"); break;
      case K::call: st.push_back(std::string(func_name(nd.fn)) + "(" + pop() + ")"); break;
      default: {
        const std::string rhs = pop();
        const std::string lhs = pop();
        const char op = nd.kind == K::add ? '+' : nd.kind == K::sub ? '-' : nd.kind == K::mul ? '*' : '/';
        st.push_back("(" + lhs + " " + op + " " + rhs + ")");
      }
    }
  }
  return st.empty() ? std::string() : st.back();
}

/// f(x_t) = g(x(t - d_1), ...): one expression per state component plus the
/// user-declared global Lipschitz constant.
struct NonlinearitySpec {
  std::vector<std::string> sources;
  std::vector<Expr> exprs;
  double lipschitz = 0.0;
  std::vector<double> delays;
  std::vector<std::string> warnings;
};

inline NonlinearitySpec make_nonlinearity(const std::vector<std::string>& sources, double lipschitz, std::size_t n,
                                          double tau) {
  if (sources.size() != n) fail(ErrorKind::shape, "nonlinearity needs one expression per state component");
  if (!(lipschitz >= 0.0) || !std::isfinite(lipschitz))
    fail(ErrorKind::precondition, "declared Lipschitz constant must be a nonnegative real");
  NonlinearitySpec spec;
  spec.sources = sources;
  spec.lipschitz = lipschitz;
  for (std::size_t i = 0; i < n; ++i) {
    spec.exprs.push_back(parse_expr(sources[i], n, tau));
    if (spec.exprs.back().has_division)
      spec.warnings.push_back("component " + std::to_string(i) +
                              " divides: the declared Lipschitz constant is not guaranteed globally");
    for (double d : spec.exprs.back().lags())
      if (std::find(spec.delays.begin(), spec.delays.end(), d) == spec.delays.end()) spec.delays.push_back(d);
  }
  return spec;
}

/// Nonlinearity with lags resolved to node offsets for a grid step h.
class BoundNonlinearity {
 public:
  BoundNonlinearity(const NonlinearitySpec& spec, double h) : spec_(&spec) {
    for (double d : spec.delays) lag_nodes_.push_back(static_cast<std::size_t>(grid_index(d, h, "nonlinearity lag")));
  }

  /// out += f(segment ending at `cur`); `cur` points at the current node of a
  /// node-major buffer of n-vectors.
  void accumulate(const double* cur, std::size_t n, double* out) const {
    for (std::size_t i = 0; i < spec_->exprs.size(); ++i) {
      const double v = spec_->exprs[i].evaluate([&](std::uint32_t idx, double lag) {
        return cur[-static_cast<std::ptrdiff_t>(offset(lag) * n) + idx];
      });
      out[i] += v;
    }
  }

 private:
  std::size_t offset(double lag) const {
    for (std::size_t k = 0; k < spec_->delays.size(); ++k)
      if (spec_->delays[k] == lag) return lag_nodes_[k];
    return 0;
  }

  const NonlinearitySpec* spec_;
  std::vector<std::size_t> lag_nodes_;
};

/// f evaluated on a segment.
inline Eigen::VectorXd eval(const NonlinearitySpec& spec, const Segment& seg) {
  if (spec.exprs.size() != seg.dim()) fail(ErrorKind::shape, "segment dimension does not match the nonlinearity");
  const BoundNonlinearity bound(spec, seg.h());
  for (double d : spec.delays)
    if (d > seg.tau() * (1.0 + 1e-12)) fail(ErrorKind::range, "nonlinearity lag exceeds the segment horizon");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(seg.dim()));
  bound.accumulate(seg.values().data() + seg.last() * seg.dim(), seg.dim(), out.data());
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (!std::isfinite(out(i))) fail(ErrorKind::evaluation, "nonlinearity produced a non-finite value");
  return out;
}

}  // namespace sfde
