#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "pidon/errors.hpp"

namespace pidon {

/// Second-order forward-mode number: a value carried with its first and second
/// derivative along one fixed direction.
struct Jet2 {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;

  constexpr Jet2() = default;
  constexpr Jet2(double v) : value(v) {}  // NOLINT(google-explicit-constructor)
  constexpr Jet2(double v, double first, double second) : value(v), d1(first), d2(second) {}

  static constexpr Jet2 variable(double v) { return {v, 1.0, 0.0}; }

  bool finite() const { return std::isfinite(value) && std::isfinite(d1) && std::isfinite(d2); }

  Jet2& operator+=(const Jet2& o) { return *this = *this + o; }
  Jet2& operator-=(const Jet2& o) { return *this = *this - o; }
  Jet2& operator*=(const Jet2& o) { return *this = *this * o; }
  Jet2& operator/=(const Jet2& o) { return *this = *this / o; }

  friend constexpr Jet2 operator+(const Jet2& a, const Jet2& b) {
    return {a.value + b.value, a.d1 + b.d1, a.d2 + b.d2};
  }
  friend constexpr Jet2 operator-(const Jet2& a, const Jet2& b) {
    return {a.value - b.value, a.d1 - b.d1, a.d2 - b.d2};
  }
  friend constexpr Jet2 operator-(const Jet2& a) { return {-a.value, -a.d1, -a.d2}; }
  friend constexpr Jet2 operator*(const Jet2& a, const Jet2& b) {
    return {a.value * b.value, a.d1 * b.value + a.value * b.d1,
            a.d2 * b.value + 2.0 * a.d1 * b.d1 + a.value * b.d2};
  }
  friend constexpr Jet2 operator/(const Jet2& a, const Jet2& b) {
    // q = a / b  =>  a = q b, solve order by order.
    const double q = a.value / b.value;
    const double q1 = (a.d1 - q * b.d1) / b.value;
    const double q2 = (a.d2 - 2.0 * q1 * b.d1 - q * b.d2) / b.value;
    return {q, q1, q2};
  }
};

namespace jet_detail {

// Lift a scalar function with known f, f', f'' at x.value.
inline Jet2 compose(const Jet2& x, double f, double fp, double fpp) {
  return {f, fp * x.d1, fpp * x.d1 * x.d1 + fp * x.d2};
}

}  // namespace jet_detail

inline Jet2 tanh(const Jet2& x) {
  const double t = std::tanh(x.value);
  const double s = 1.0 - t * t;
  return jet_detail::compose(x, t, s, -2.0 * t * s);
}

inline Jet2 sin(const Jet2& x) {
  const double s = std::sin(x.value);
  const double c = std::cos(x.value);
  return jet_detail::compose(x, s, c, -s);
}

inline Jet2 cos(const Jet2& x) {
  const double s = std::sin(x.value);
  const double c = std::cos(x.value);
  return jet_detail::compose(x, c, -s, -c);
}

inline Jet2 exp(const Jet2& x) {
  const double e = std::exp(x.value);
  return jet_detail::compose(x, e, e, e);
}

inline Jet2 square(const Jet2& x) { return x * x; }

/// Evaluates `f` at `x` seeding coordinate `dir`, returning f, df/dx_dir and
/// d2f/dx_dir2. `f` is any callable taking `std::span<const Jet2>` and returning
/// a Jet2; it may only use the operations defined above, so an unsupported
/// primitive is rejected at compile time.
template <class F>
Jet2 jet_eval(F&& f, std::span<const double> x, std::size_t dir) {
  if (dir >= x.size()) throw ConfigError("jet_eval: direction index out of range");
  std::vector<Jet2> lifted(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw NumericError("jet_eval: non-finite coordinate");
    lifted[i] = Jet2(x[i]);
  }
  lifted[dir].d1 = 1.0;
  const Jet2 out = f(std::span<const Jet2>(lifted));
  if (!out.finite()) throw NumericError("jet_eval: non-finite result");
  return out;
}

}  // namespace pidon
