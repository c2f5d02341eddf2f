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

#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace had {

/// Closed real interval [lo, hi] used for sound bound propagation.
///
/// All arithmetic below returns enclosures that are sound under IEEE
/// round-to-nearest: rational operations (+, -, *, /, sqrt, integer powers)
/// use exact error terms (TwoSum / fma residuals) to obtain directed
/// rounding; transcendental endpoints are widened by a fixed number of ulps
/// that dominates the libm error bound.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  static Interval point(double v) { return {v, v}; }

  double width() const { return hi - lo; }
  double mid() const { return lo + 0.5 * (hi - lo); }
  double mag() const { return std::max(std::fabs(lo), std::fabs(hi)); }
  bool contains(double v) const { return v >= lo && v <= hi; }
  bool contains_zero() const { return lo <= 0.0 && hi >= 0.0; }
  bool is_finite() const { return std::isfinite(lo) && std::isfinite(hi); }
  bool valid() const { return lo <= hi; }
};

/// Thrown by interval primitives when an operation leaves the real domain
/// (division by an interval containing zero, log/sqrt of a negative part).
/// Callers that know the expression node attach it and rethrow.
struct IntervalDomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Interval iadd(Interval a, Interval b);
Interval isub(Interval a, Interval b);
Interval imul(Interval a, Interval b);
Interval idiv(Interval a, Interval b);  // throws if b contains 0
Interval ineg(Interval a);
Interval iabs(Interval a);
Interval imin(Interval a, Interval b);
Interval imax(Interval a, Interval b);
Interval iexp(Interval a);
Interval ilog(Interval a);   // throws if a.lo <= 0
Interval isqrt(Interval a);  // throws if a.lo < 0
Interval itanh(Interval a);
Interval isigmoid(Interval a);
Interval ipow_int(Interval a, long long n);  // even/odd exact casework
Interval ipow_real(Interval a, double v);    // throws if a.lo < 0 (non-integer v)
Interval ipow(Interval a, Interval b);       // general case via exp(b*log a)

/// Hull of two intervals (smallest interval containing both).
inline Interval ihull(Interval a, Interval b) {
  return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
}

/// Per-variable interval bounds, keyed by variable name. Ordered map so
/// iteration (and everything serialized from it) is deterministic.
struct Box {
  std::map<std::string, Interval> dims;

  bool covers(const std::string& name) const { return dims.count(name) != 0; }
  const Interval& at(const std::string& name) const { return dims.at(name); }
  void set(std::string name, Interval iv) { dims[std::move(name)] = iv; }
  std::size_t size() const { return dims.size(); }
};

}  // namespace had
