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

#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "had/accountant.hpp"
#include "had/compile.hpp"
#include "had/expr.hpp"
#include "had/lipschitz.hpp"

namespace had {

enum class Activation : std::uint8_t { kTanh, kSigmoid, kRelu };
enum class LossKind : std::uint8_t { kMse, kLogistic };
enum class TrainMode : std::uint8_t { kPrecomputedK, kPerStepK, kClipBaseline };
enum class Sampling : std::uint8_t { kPoisson, kUniform };

/// Fully-connected scalar-output network; the per-sample loss is built as
/// one symbolic expression over features x1..xd, target y, and flat
/// parameters w_<layer>_<unit>_<input> / b_<layer>_<unit>.
struct ModelSpec {
  std::vector<int> layers;  // e.g. {2, 4, 1}
  Activation activation = Activation::kTanh;
  LossKind loss = LossKind::kMse;
  double init_scale = 0.5;  // uniform [-s, s] initial weights
  std::uint64_t init_seed = 1;
};

struct LossGraph {
  ExprGraph graph;
  NodeId loss_root = kNoNode;
  NodeId output_root = kNoNode;  // pre-loss network output
  std::vector<std::string> feature_names;
  std::string target_name;
  std::vector<VarSpec> params;  // declaration order = kernel order
};

LossGraph build_loss_graph(const ModelSpec& spec);
std::size_t parameter_count(const ModelSpec& spec);

/// Ahead-of-time kernels compiled once, before any data is seen.
struct KernelSet {
  KernelProgram loss;
  KernelProgram grads;      // one output per parameter
  KernelProgram norm;       // scalar per-sample gradient norm
  KernelProgram output;     // network prediction
  NodeId norm_root = kNoNode;
  std::size_t joint_instructions = 0;     // grads + norm lowered together
  std::size_t separate_instructions = 0;  // lowered separately, summed
};
KernelSet precompute_kernels(LossGraph& loss_graph);

struct TrainConfig {
  TrainMode mode = TrainMode::kPrecomputedK;
  double eta = 0.1;
  double sigma = 1.0;  // noise, interpreted per convention
  NoiseConvention convention = NoiseConvention::kMultiplier;
  int lot_size = 32;
  int steps = 100;
  double weight_radius = 1.0;  // precomputed-K / per-step-K projection box
  double clip_norm = 1.0;      // clip-baseline only
  Box input_box;               // features and target
  Sampling sampling = Sampling::kPoisson;
  std::uint64_t seed = 1;
  double k_tolerance = 1e-3;
  std::size_t k_budget = 20000;         // precomputed constant
  std::size_t per_step_budget = 10000;  // per-step refinement, falls back on exhaustion
};

/// Row-major dataset: feature columns then one target column.
struct Dataset {
  std::vector<std::string> columns;
  std::size_t rows = 0;
  std::vector<double> values;

  double at(std::size_t row, std::size_t col) const { return values[row * columns.size() + col]; }
  std::size_t feature_count() const { return columns.empty() ? 0 : columns.size() - 1; }
};

Dataset load_csv(const std::string& path);
Dataset parse_csv(std::string_view text);

/// Rows whose features or target fall outside the declared input box.
struct DataBoundsError : std::runtime_error {
  DataBoundsError(std::string msg, std::vector<std::size_t> rows_)
      : std::runtime_error(std::move(msg)), rows(std::move(rows_)) {}
  std::vector<std::size_t> rows;
};

struct StepRecord {
  int step = 0;
  std::size_t lot_size = 0;
  double mean_loss = 0.0;
  double max_norm = 0.0;
  double mean_norm = 0.0;
  double k_used = 0.0;
  std::size_t clipped = 0;
  bool k_budget_exhausted = false;
  std::size_t projected_coords = 0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::vector<std::string> param_names;
  std::vector<double> final_params;
  double k_precomputed = 0.0;
  std::vector<double> k_per_step;  // per-step-K mode
  PrivacyLedger ledger;
  double train_accuracy = 0.0;
  double final_mean_loss = 0.0;
  bool bias_warning = false;  // projection touched > 50% of coordinates in a step

  /// One JSON object per step, then a summary record.
  std::string to_jsonl() const;
};

TrainReport train(const ModelSpec& spec, const TrainConfig& config, const Dataset& data);

/// Poisson sampling includes each index independently with rate lot/n (the
/// lot may be empty); uniform draws exactly `lot` distinct indices. Output
/// ascending; deterministic for a given engine state.
std::vector<std::size_t> sample_lot(std::size_t n, std::size_t lot, Sampling sampling,
                                    std::mt19937_64& rng);

/// Uniform double in [0,1) from the top 53 bits; pinned so results do not
/// depend on library distribution internals.
double uniform01(std::mt19937_64& rng);

/// Standard normal via Box-Muller on uniform01; pinned for the same reason.
double gaussian(std::mt19937_64& rng);

/// Parse a key = value / [section] config file into a TrainConfig + spec.
struct TrainSetup {
  ModelSpec model;
  TrainConfig config;
};
TrainSetup load_train_config(const std::string& path);
TrainSetup parse_train_config(std::string_view text);

}  // namespace had
