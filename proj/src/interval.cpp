// Copyright 2026 The hadc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "had/interval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace had {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double next_up(double x) {
  if (x == kInf) return x;
  return std::nextafter(x, kInf);
}

double next_down(double x) {
  if (x == -kInf) return x;
  return std::nextafter(x, -kInf);
}

// Widen both endpoints outward by n ulps. Used for transcendental results
// where no exact residual is available; n must dominate the libm error.
Interval widen(Interval v, int n) {
  for (int i = 0; i < n; ++i) {
    v.lo = next_down(v.lo);
    v.hi = next_up(v.hi);
  }
  return v;
}

// libm error bound cushion, in ulps. glibc documents < 2 ulp for the
// functions we use; 8 leaves margin for composed formulas (sigmoid).
constexpr int kLibmUlps = 8;

// Knuth TwoSum: exact rounding error of a+b, valid without ordering.
double two_sum_err(double a, double b, double s) {
  double bv = s - a;
  double av = s - bv;
  return (a - av) + (b - bv);
}

double add_down(double a, double b) {
  double s = a + b;
  if (!std::isfinite(s)) return s == kInf ? std::numeric_limits<double>::max() : s;
  return two_sum_err(a, b, s) < 0.0 ? next_down(s) : s;
}

double add_up(double a, double b) {
  double s = a + b;
  if (!std::isfinite(s)) return s == -kInf ? std::numeric_limits<double>::lowest() : s;
  return two_sum_err(a, b, s) > 0.0 ? next_up(s) : s;
}

double mul_down(double a, double b) {
  double p = a * b;
  if (!std::isfinite(p)) return p == kInf ? std::numeric_limits<double>::max() : p;
  return std::fma(a, b, -p) < 0.0 ? next_down(p) : p;
}

double mul_up(double a, double b) {
  double p = a * b;
  if (!std::isfinite(p)) return p == -kInf ? std::numeric_limits<double>::lowest() : p;
  return std::fma(a, b, -p) > 0.0 ? next_up(p) : p;
}

// Exact quotient comparison: sign of (a/b - q) equals sign of (a - q*b)/b.
double div_down(double a, double b) {
  double q = a / b;
  if (!std::isfinite(q)) return q == kInf ? std::numeric_limits<double>::max() : q;
  double rem = -std::fma(q, b, -a);  // a - q*b, exact
  bool true_larger = (rem > 0.0) == (b > 0.0) && rem != 0.0;
  return true_larger ? q : (rem == 0.0 ? q : next_down(q));
}

double div_up(double a, double b) {
  double q = a / b;
  if (!std::isfinite(q)) return q == -kInf ? std::numeric_limits<double>::lowest() : q;
  double rem = -std::fma(q, b, -a);
  bool true_smaller = (rem > 0.0) != (b > 0.0) && rem != 0.0;
  return true_smaller ? q : (rem == 0.0 ? q : next_up(q));
}

double sqrt_down(double x) {
  double r = std::sqrt(x);
  double rem = -std::fma(r, r, -x);  // x - r*r
  return rem < 0.0 ? next_down(r) : r;
}

double sqrt_up(double x) {
  double r = std::sqrt(x);
  double rem = -std::fma(r, r, -x);
  return rem > 0.0 ? next_up(r) : r;
}

// x^n by binary exponentiation, matching the scalar evaluator; endpoints
// get an ulp cushion proportional to the multiplication count.
double pow_int_scalar(double base, long long n) {
  if (n == 0) return 1.0;
  bool invert = n < 0;
  unsigned long long e = invert ? static_cast<unsigned long long>(-(n + 1)) + 1ull
                                : static_cast<unsigned long long>(n);
  double acc = 1.0;
  double b = base;
  while (e != 0) {
    if (e & 1ull) acc *= b;
    e >>= 1;
    if (e != 0) b *= b;
  }
  return invert ? 1.0 / acc : acc;
}

int pow_int_ulps(long long n) {
  long long a = n < 0 ? -n : n;
  int bits = 0;
  while (a > 0) {
    ++bits;
    a >>= 1;
  }
  return 2 * bits + 4;
}

}  // namespace

Interval iadd(Interval a, Interval b) {
  return {add_down(a.lo, b.lo), add_up(a.hi, b.hi)};
}

Interval isub(Interval a, Interval b) {
  return {add_down(a.lo, -b.hi), add_up(a.hi, -b.lo)};
}

Interval imul(Interval a, Interval b) {
  double lo = std::min(std::min(mul_down(a.lo, b.lo), mul_down(a.lo, b.hi)),
                       std::min(mul_down(a.hi, b.lo), mul_down(a.hi, b.hi)));
  double hi = std::max(std::max(mul_up(a.lo, b.lo), mul_up(a.lo, b.hi)),
                       std::max(mul_up(a.hi, b.lo), mul_up(a.hi, b.hi)));
  return {lo, hi};
}

Interval idiv(Interval a, Interval b) {
  if (b.contains_zero()) {
    throw IntervalDomainError("division by interval containing 0");
  }
  double lo = std::min(std::min(div_down(a.lo, b.lo), div_down(a.lo, b.hi)),
                       std::min(div_down(a.hi, b.lo), div_down(a.hi, b.hi)));
  double hi = std::max(std::max(div_up(a.lo, b.lo), div_up(a.lo, b.hi)),
                       std::max(div_up(a.hi, b.lo), div_up(a.hi, b.hi)));
  return {lo, hi};
}

Interval ineg(Interval a) { return {-a.hi, -a.lo}; }

Interval iabs(Interval a) {
  if (a.lo >= 0.0) return a;
  if (a.hi <= 0.0) return {-a.hi, -a.lo};
  return {0.0, std::max(-a.lo, a.hi)};
}

Interval imin(Interval a, Interval b) {
  return {std::min(a.lo, b.lo), std::min(a.hi, b.hi)};
}

Interval imax(Interval a, Interval b) {
  return {std::max(a.lo, b.lo), std::max(a.hi, b.hi)};
}

Interval iexp(Interval a) {
  Interval r{std::exp(a.lo), std::exp(a.hi)};
  r = widen(r, kLibmUlps);
  r.lo = std::max(r.lo, 0.0);
  return r;
}

Interval ilog(Interval a) {
  if (a.lo <= 0.0) {
    throw IntervalDomainError("log of interval with non-positive part");
  }
  return widen({std::log(a.lo), std::log(a.hi)}, kLibmUlps);
}

Interval isqrt(Interval a) {
  if (a.lo < 0.0) {
    throw IntervalDomainError("sqrt of interval with negative part");
  }
  return {sqrt_down(a.lo), sqrt_up(a.hi)};
}

Interval itanh(Interval a) {
  Interval r = widen({std::tanh(a.lo), std::tanh(a.hi)}, kLibmUlps);
  r.lo = std::max(r.lo, -1.0);
  r.hi = std::min(r.hi, 1.0);
  return r;
}

namespace {
double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Interval isigmoid(Interval a) {
  Interval r = widen({sigmoid_scalar(a.lo), sigmoid_scalar(a.hi)}, kLibmUlps);
  r.lo = std::max(r.lo, 0.0);
  r.hi = std::min(r.hi, 1.0);
  return r;
}

Interval ipow_int(Interval a, long long n) {
  if (n == 0) return {1.0, 1.0};
  if (n < 0) {
    // 1 / a^(-n); idiv supplies the zero-crossing check.
    return idiv({1.0, 1.0}, ipow_int(a, -n));
  }
  int ulps = pow_int_ulps(n);
  if (n % 2 != 0) {
    return widen({pow_int_scalar(a.lo, n), pow_int_scalar(a.hi, n)}, ulps);
  }
  // Even power: image is [0, mag^n], tightened to [min^n, max^n] of the
  // endpoint magnitudes when the interval does not straddle zero.
  if (a.lo >= 0.0) {
    return widen({pow_int_scalar(a.lo, n), pow_int_scalar(a.hi, n)}, ulps);
  }
  if (a.hi <= 0.0) {
    return widen({pow_int_scalar(a.hi, n), pow_int_scalar(a.lo, n)}, ulps);
  }
  Interval r = widen({0.0, pow_int_scalar(a.mag(), n)}, ulps);
  r.lo = std::max(r.lo, 0.0);
  return r;
}

Interval ipow_real(Interval a, double v) {
  if (a.lo < 0.0) {
    throw IntervalDomainError("non-integer power of interval with negative part");
  }
  if (a.lo == 0.0 && v < 0.0) {
    throw IntervalDomainError("negative power of interval containing 0");
  }
  double p0 = std::pow(a.lo, v);
  double p1 = std::pow(a.hi, v);
  Interval r{std::min(p0, p1), std::max(p0, p1)};
  r = widen(r, kLibmUlps);
  r.lo = std::max(r.lo, 0.0);
  return r;
}

Interval ipow(Interval a, Interval b) {
  if (b.lo == b.hi) {
    double v = b.lo;
    if (v == std::rint(v) && std::fabs(v) < 1e15) {
      return ipow_int(a, static_cast<long long>(v));
    }
    return ipow_real(a, v);
  }
  // Interval exponent: u^v = exp(v * log u), u > 0 is enforced by ilog.
  return iexp(imul(b, ilog(a)));
}

}  // namespace had
