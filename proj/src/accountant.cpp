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

#include "had/accountant.hpp"

#include <algorithm>
#include <cmath>

namespace had {

double rdp_epsilon(const GaussianMechanism& mech, double alpha) {
  if (!(alpha > 1.0)) {
    throw ConstructionError("Renyi order must exceed 1");
  }
  if (!(mech.sensitivity > 0.0) || !std::isfinite(mech.sensitivity) || !(mech.noise > 0.0) ||
      !std::isfinite(mech.noise)) {
    throw ConstructionError("mechanism sensitivity and noise must be positive and finite");
  }
  // alpha * (K/s)^2 / 2; the ratio form keeps K = s exactly at alpha/2.
  double ratio = mech.sensitivity / mech.noise_std();
  return alpha * ratio * ratio / 2.0;
}

PrivacyLedger::PrivacyLedger() : PrivacyLedger(default_orders()) {}

PrivacyLedger::PrivacyLedger(std::vector<double> orders) : orders_(std::move(orders)) {
  if (orders_.empty()) throw ConstructionError("ledger needs at least one order");
  std::sort(orders_.begin(), orders_.end());
  orders_.erase(std::unique(orders_.begin(), orders_.end()), orders_.end());
  for (double a : orders_) {
    if (!(a > 1.0)) throw ConstructionError("every ledger order must exceed 1");
  }
  totals_.assign(orders_.size(), 0.0);
}

std::vector<double> PrivacyLedger::default_orders() {
  return {1.25, 1.5, 2, 3, 4, 5, 6, 8, 16, 32, 64};
}

void PrivacyLedger::compose(const GaussianMechanism& mech) {
  for (std::size_t i = 0; i < orders_.size(); ++i) {
    totals_[i] += rdp_epsilon(mech, orders_[i]);
  }
  LedgerEvent event;
  event.step = events_.size();
  event.sensitivity = mech.sensitivity;
  event.noise = mech.noise;
  event.convention = mech.convention;
  events_.push_back(event);
}

double PrivacyLedger::epsilon_at(double alpha) const {
  for (std::size_t i = 0; i < orders_.size(); ++i) {
    if (orders_[i] == alpha) return totals_[i];
  }
  throw ConstructionError("order is not on the ledger grid");
}

std::pair<double, double> PrivacyLedger::to_eps_delta(double delta) const {
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw ConstructionError("delta must be in (0, 1)");
  }
  double log_inv_delta = std::log(1.0 / delta);
  double best_eps = std::numeric_limits<double>::infinity();
  double best_alpha = orders_.front();
  for (std::size_t i = 0; i < orders_.size(); ++i) {
    double eps = totals_[i] + log_inv_delta / (orders_[i] - 1.0);
    if (eps < best_eps) {
      best_eps = eps;
      best_alpha = orders_[i];
    }
  }
  return {best_eps, best_alpha};
}

nlohmann::json PrivacyLedger::to_json(std::span<const double> deltas) const {
  nlohmann::json events = nlohmann::json::array();
  for (const LedgerEvent& e : events_) {
    events.push_back({{"step", e.step},
                      {"sensitivity", e.sensitivity},
                      {"noise", e.noise},
                      {"convention",
                       e.convention == NoiseConvention::kMultiplier ? "multiplier" : "absolute"}});
  }
  nlohmann::json per_order = nlohmann::json::array();
  for (std::size_t i = 0; i < orders_.size(); ++i) {
    per_order.push_back({{"alpha", orders_[i]}, {"epsilon", totals_[i]}});
  }
  nlohmann::json conversions = nlohmann::json::array();
  for (double delta : deltas) {
    auto [eps, alpha] = to_eps_delta(delta);
    conversions.push_back({{"delta", delta}, {"epsilon", eps}, {"alpha", alpha}});
  }
  return nlohmann::json{{"events", events},
                        {"rdp", per_order},
                        {"conversions", conversions}};
}

StepNoiseResult per_step_sensitivity_noise(std::span<const double> norms, double k_step,
                                           double noise_multiplier) {
  if (!(k_step > 0.0) || !std::isfinite(k_step)) {
    throw ConstructionError("step sensitivity must be positive and finite");
  }
  StepNoiseResult out;
  out.noise_std = noise_multiplier * k_step;
  out.no_clip.reserve(norms.size());
  out.scale.reserve(norms.size());
  for (double norm : norms) {
    bool ok = norm <= k_step;
    out.no_clip.push_back(ok);
    out.scale.push_back(ok || norm == 0.0 ? 1.0 : k_step / norm);
    if (!ok) {
      ++out.clipped;
      out.bounds_violation = true;
    }
  }
  return out;
}

}  // namespace had
