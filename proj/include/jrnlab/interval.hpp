#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace jrnlab {

// Closed interval [lo, hi]. Every arithmetic helper widens its result
// outward by a margin of at least 4 ulps per operation (plus a tiny absolute
// guard), so that enclosures stay sound without directed rounding.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  Interval(double a, double b) : lo(a), hi(b) {}
  static Interval point(double v) { return {v, v}; }

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double v) const { return lo <= v && v <= hi; }
};

namespace detail {
constexpr double kWidenRel = 4.0 * std::numeric_limits<double>::epsilon();
constexpr double kWidenAbs = 1e-300;

inline double step_down(double x) { return x - (std::fabs(x) * kWidenRel + kWidenAbs); }
inline double step_up(double x) { return x + (std::fabs(x) * kWidenRel + kWidenAbs); }
}  // namespace detail

inline Interval widen(Interval v) {
  return {detail::step_down(v.lo), detail::step_up(v.hi)};
}

inline Interval iadd(Interval a, Interval b) { return widen({a.lo + b.lo, a.hi + b.hi}); }
inline Interval isub(Interval a, Interval b) { return widen({a.lo - b.hi, a.hi - b.lo}); }
inline Interval ineg(Interval a) { return {-a.hi, -a.lo}; }

inline Interval imul(Interval a, Interval b) {
  double p1 = a.lo * b.lo, p2 = a.lo * b.hi, p3 = a.hi * b.lo, p4 = a.hi * b.hi;
  return widen({std::min(std::min(p1, p2), std::min(p3, p4)),
                std::max(std::max(p1, p2), std::max(p3, p4))});
}

inline Interval iscale(double c, Interval a) {
  double p1 = c * a.lo, p2 = c * a.hi;
  return widen({std::min(p1, p2), std::max(p1, p2)});
}

inline Interval isquare(Interval a) {
  double l2 = a.lo * a.lo, h2 = a.hi * a.hi;
  if (a.lo >= 0.0) return widen({l2, h2});
  if (a.hi <= 0.0) return widen({h2, l2});
  return widen({0.0, std::max(l2, h2)});
}

inline Interval iabs(Interval a) {
  if (a.lo >= 0.0) return a;
  if (a.hi <= 0.0) return {-a.hi, -a.lo};
  return {0.0, std::max(-a.lo, a.hi)};
}

// Monotone endpoint rule; library tanh is not correctly rounded, so pad by
// an absolute 1e-15 on top of the relative widening.
inline Interval itanh(Interval a) {
  return widen({std::tanh(a.lo) - 1e-15, std::tanh(a.hi) + 1e-15});
}

namespace detail {
// Whether some x = c + 2*pi*k lies in [a, b]; biased toward "yes" so the
// enclosure can only get wider.
inline bool hits_phase(double a, double b, double c) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  double k = std::ceil((a - c) / kTwoPi - 1e-9);
  double x = c + kTwoPi * k;
  return x <= b + 1e-9;
}
}  // namespace detail

inline Interval isin(Interval a) {
  constexpr double kHalfPi = 1.5707963267948966192313216916398;
  if (a.width() >= 6.283185307179586) return {-1.0, 1.0};
  double sl = std::sin(a.lo), sh = std::sin(a.hi);
  double lo = std::min(sl, sh), hi = std::max(sl, sh);
  if (detail::hits_phase(a.lo, a.hi, kHalfPi)) hi = 1.0;
  if (detail::hits_phase(a.lo, a.hi, -kHalfPi)) lo = -1.0;
  Interval r = widen({lo - 1e-15, hi + 1e-15});
  r.lo = std::max(r.lo, -1.0);
  r.hi = std::min(r.hi, 1.0);
  return r;
}

inline Interval icos(Interval a) {
  constexpr double kPi = 3.1415926535897932384626433832795;
  if (a.width() >= 6.283185307179586) return {-1.0, 1.0};
  double cl = std::cos(a.lo), ch = std::cos(a.hi);
  double lo = std::min(cl, ch), hi = std::max(cl, ch);
  if (detail::hits_phase(a.lo, a.hi, 0.0)) hi = 1.0;
  if (detail::hits_phase(a.lo, a.hi, kPi)) lo = -1.0;
  Interval r = widen({lo - 1e-15, hi + 1e-15});
  r.lo = std::max(r.lo, -1.0);
  r.hi = std::min(r.hi, 1.0);
  return r;
}

// sqrt over a nonnegative interval (clamps tiny negative lo from widening).
inline Interval isqrt(Interval a) {
  double lo = a.lo <= 0.0 ? 0.0 : std::sqrt(a.lo);
  return widen({lo, std::sqrt(std::max(0.0, a.hi))});
}

// Division by an interval bounded away from zero (internal helper for
// centered-form gradients). Caller guarantees b.lo > 0.
inline Interval idiv_pos(Interval a, Interval b) {
  double p1 = a.lo / b.lo, p2 = a.lo / b.hi, p3 = a.hi / b.lo, p4 = a.hi / b.hi;
  return widen({std::min(std::min(p1, p2), std::min(p3, p4)),
                std::max(std::max(p1, p2), std::max(p3, p4))});
}

inline Interval ihull(Interval a, Interval b) {
  return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
}

inline Interval iintersect(Interval a, Interval b) {
  return {std::max(a.lo, b.lo), std::min(a.hi, b.hi)};
}

}  // namespace jrnlab
