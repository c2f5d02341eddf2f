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

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "had/expr.hpp"

namespace had {

/// Whether the mechanism's noise parameter is a multiplier of the
/// sensitivity (std = sigma * K) or an absolute standard deviation. Both
/// are supported because the two are easy to conflate; the multiplier form
/// makes the per-step Renyi cost independent of K.
enum class NoiseConvention : std::uint8_t { kMultiplier, kAbsolute };

struct GaussianMechanism {
  double sensitivity = 1.0;  // K > 0
  double noise = 1.0;        // sigma > 0, interpreted per convention
  NoiseConvention convention = NoiseConvention::kMultiplier;

  double noise_std() const {
    return convention == NoiseConvention::kMultiplier ? noise * sensitivity : noise;
  }
};

/// Renyi cost of one Gaussian mechanism at order alpha:
/// alpha * K^2 / (2 s^2) with s the noise standard deviation.
double rdp_epsilon(const GaussianMechanism& mech, double alpha);

struct LedgerEvent {
  std::size_t step = 0;
  double sensitivity = 0.0;
  double noise = 0.0;
  NoiseConvention convention = NoiseConvention::kMultiplier;
};

/// Accumulated Renyi-DP cost over a fixed ascending grid of orders, with
/// additive composition and conversion to (epsilon, delta). Single writer,
/// any number of readers after writes stop.
class PrivacyLedger {
 public:
  PrivacyLedger();
  explicit PrivacyLedger(std::vector<double> orders);

  static std::vector<double> default_orders();

  void compose(const GaussianMechanism& mech);

  const std::vector<double>& orders() const { return orders_; }
  const std::vector<double>& totals() const { return totals_; }
  const std::vector<LedgerEvent>& events() const { return events_; }
  std::size_t event_count() const { return events_.size(); }

  /// Accumulated epsilon at a grid order; the order must be on the grid.
  double epsilon_at(double alpha) const;

  /// Best (epsilon, alpha) over the grid:
  /// epsilon = min_alpha [eps_rdp(alpha) + log(1/delta) / (alpha - 1)],
  /// ties resolved toward the smaller order.
  std::pair<double, double> to_eps_delta(double delta) const;

  nlohmann::json to_json(std::span<const double> deltas = {}) const;

 private:
  std::vector<double> orders_;
  std::vector<double> totals_;
  std::vector<LedgerEvent> events_;
};

/// Per-step noise scale and no-clip mask for the measured per-sample norms
/// against the certified step sensitivity. Norms above the certified bound
/// are only possible when inputs violate their declared bounds; they get
/// scaled down and flagged.
struct StepNoiseResult {
  double noise_std = 0.0;
  std::vector<bool> no_clip;    // norm[i] <= k_step
  std::vector<double> scale;    // min(1, k_step / norm[i])
  std::size_t clipped = 0;
  bool bounds_violation = false;
};
StepNoiseResult per_step_sensitivity_noise(std::span<const double> norms, double k_step,
                                           double noise_multiplier);

}  // namespace had
