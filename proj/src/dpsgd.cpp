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

#include "had/dpsgd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "had/autodiff.hpp"
#include "had/parser.hpp"

namespace had {

// ---------------------------------------------------------------------------
// model construction
// ---------------------------------------------------------------------------

std::size_t parameter_count(const ModelSpec& spec) {
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < spec.layers.size(); ++l) {
    count += static_cast<std::size_t>(spec.layers[l]) * spec.layers[l + 1] + spec.layers[l + 1];
  }
  return count;
}

LossGraph build_loss_graph(const ModelSpec& spec) {
  if (spec.layers.size() < 2) {
    throw ConstructionError("model needs at least input and output layers");
  }
  for (int n : spec.layers) {
    if (n <= 0) throw ConstructionError("layer sizes must be positive");
  }
  if (spec.layers.back() != 1) {
    throw ConstructionError("final layer size must be 1 (scalar loss)");
  }

  LossGraph out;
  ExprGraph& g = out.graph;

  std::vector<NodeId> acts;
  for (int i = 0; i < spec.layers.front(); ++i) {
    std::string name = "x" + std::to_string(i + 1);
    acts.push_back(g.add_var(VarSpec{name, VarRole::kFeature, std::nullopt}));
    out.feature_names.push_back(name);
  }
  out.target_name = "y";
  NodeId target = g.add_var(VarSpec{out.target_name, VarRole::kTarget, std::nullopt});

  for (std::size_t l = 0; l + 1 < spec.layers.size(); ++l) {
    bool hidden = l + 2 < spec.layers.size();
    std::vector<NodeId> next;
    for (int unit = 0; unit < spec.layers[l + 1]; ++unit) {
      std::vector<NodeId> terms;
      for (int in = 0; in < spec.layers[l]; ++in) {
        std::string wname =
            "w_" + std::to_string(l + 1) + "_" + std::to_string(unit) + "_" + std::to_string(in);
        NodeId w = g.add_var(VarSpec{wname, VarRole::kWeight, std::nullopt});
        out.params.push_back(g.var_spec(*g.find_var(wname)));
        terms.push_back(g.binary(Op::kMul, w, acts[in]));
      }
      std::string bname = "b_" + std::to_string(l + 1) + "_" + std::to_string(unit);
      NodeId b = g.add_var(VarSpec{bname, VarRole::kBias, std::nullopt});
      out.params.push_back(g.var_spec(*g.find_var(bname)));
      terms.push_back(b);
      NodeId z = balanced_sum(g, terms);
      if (hidden) {
        switch (spec.activation) {
          case Activation::kTanh: z = g.unary(Op::kTanh, z); break;
          case Activation::kSigmoid: z = g.unary(Op::kSigmoid, z); break;
          case Activation::kRelu:
            z = g.piecewise(z, Relation::kLess, g.constant(0.0), g.constant(0.0), z);
            break;
        }
      }
      next.push_back(z);
    }
    acts = std::move(next);
  }

  NodeId z = acts[0];
  out.output_root = z;
  switch (spec.loss) {
    case LossKind::kMse: {
      NodeId diff = g.binary(Op::kSub, z, target);
      out.loss_root = g.binary(Op::kPow, diff, g.constant(2.0));
      break;
    }
    case LossKind::kLogistic: {
      // log(1 + exp(z)) - y*z, the negative log-likelihood for y in {0,1}.
      NodeId soft = g.unary(Op::kLog, g.binary(Op::kAdd, g.constant(1.0), g.unary(Op::kExp, z)));
      out.loss_root = g.binary(Op::kSub, soft, g.binary(Op::kMul, target, z));
      break;
    }
  }
  g.add_root("loss", out.loss_root);
  return out;
}

KernelSet precompute_kernels(LossGraph& lg) {
  KernelSet out;
  ExprGraph& g = lg.graph;

  GradientBundle bundle = per_sample_grads(g, lg.loss_root, lg.params);
  NodeId norm = grad_norm(g, bundle);
  out.norm_root = norm;

  std::vector<std::pair<std::string, NodeId>> grad_roots;
  for (std::size_t i = 0; i < lg.params.size(); ++i) {
    grad_roots.emplace_back("d_" + lg.params[i].name, bundle.partials[i]);
  }
  std::vector<std::pair<std::string, NodeId>> norm_roots{{"grad_norm", norm}};

  CompileOptions aot = CompileOptions::aot();
  out.grads = lower(g, grad_roots, aot);
  out.norm = lower(g, norm_roots, aot);
  std::vector<std::pair<std::string, NodeId>> loss_roots{{"loss", lg.loss_root}};
  out.loss = lower(g, loss_roots, aot);
  std::vector<std::pair<std::string, NodeId>> output_roots{{"output", lg.output_root}};
  out.output = lower(g, output_roots, aot);

  std::vector<std::pair<std::string, NodeId>> joint = grad_roots;
  joint.push_back(norm_roots[0]);
  KernelProgram joint_kernel = lower(g, joint, aot);
  out.joint_instructions = joint_kernel.instructions.size();
  out.separate_instructions = out.grads.instructions.size() + out.norm.instructions.size();
  return out;
}

// ---------------------------------------------------------------------------
// sampling and noise
// ---------------------------------------------------------------------------

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double gaussian(std::mt19937_64& rng) {
  // Box-Muller; one fresh pair per call, the spare is dropped for a fixed
  // engine-consumption pattern.
  double u1 = uniform01(rng);
  while (u1 == 0.0) u1 = uniform01(rng);
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::vector<std::size_t> sample_lot(std::size_t n, std::size_t lot, Sampling sampling,
                                    std::mt19937_64& rng) {
  if (lot == 0 || lot > n) {
    throw ConstructionError("lot size must be in [1, dataset size]");
  }
  std::vector<std::size_t> out;
  if (sampling == Sampling::kPoisson) {
    double rate = static_cast<double>(lot) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (uniform01(rng) < rate) out.push_back(i);
    }
    return out;
  }
  // Uniform without replacement: partial Fisher-Yates over an index array.
  std::vector<std::size_t> indices(n);
  for (std::size_t i = 0; i < n; ++i) indices[i] = i;
  for (std::size_t i = 0; i < lot; ++i) {
    std::size_t j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n - i));
    if (j >= n) j = n - 1;
    std::swap(indices[i], indices[j]);
  }
  out.assign(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(lot));
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// dataset and config files
// ---------------------------------------------------------------------------

Dataset parse_csv(std::string_view text) {
  Dataset data;
  std::size_t pos = 0;
  bool header = true;
  int line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string_view::npos ? line.size() - start
                                                                         : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (header) {
      for (std::string_view cell : cells) {
        std::size_t b = cell.find_first_not_of(" \t");
        std::size_t e = cell.find_last_not_of(" \t");
        if (b == std::string_view::npos) {
          throw ParseError("empty column name in CSV header", line_no, 1);
        }
        data.columns.emplace_back(cell.substr(b, e - b + 1));
      }
      header = false;
      continue;
    }
    if (cells.size() != data.columns.size()) {
      throw ParseError("row has " + std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(data.columns.size()),
                       line_no, 1);
    }
    for (std::string_view cell : cells) {
      std::string token(cell);
      char* end = nullptr;
      double v = std::strtod(token.c_str(), &end);
      while (end && *end == ' ') ++end;
      if (end == token.c_str() || (end && *end != '\0')) {
        throw ParseError("invalid number \"" + token + "\"", line_no, 1);
      }
      data.values.push_back(v);
    }
    ++data.rows;
  }
  if (data.columns.size() < 2) {
    throw ConstructionError("dataset needs at least one feature column and a target column");
  }
  return data;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConstructionError("cannot open \"" + path + "\"");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str());
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

double to_number(const std::string& value, int line_no) {
  char* end = nullptr;
  double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0') {
    throw ParseError("expected a number, got \"" + value + "\"", line_no, 1);
  }
  return v;
}

}  // namespace

TrainSetup parse_train_config(std::string_view text) {
  TrainSetup setup;
  std::string section;
  std::size_t pos = 0;
  int line_no = 0;
  bool saw_layers = false;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view raw =
        text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    std::string line = trim(raw);
    if (auto hash = line.find('#'); hash != std::string::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", line_no, 1);
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no, 1);
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = unquote(trim(std::string_view(line).substr(eq + 1)));

    if (section == "bounds") {
      // name = [lo, hi]
      if (value.size() < 2 || value.front() != '[' || value.back() != ']') {
        throw ParseError("bounds need the form [lo, hi]", line_no, 1);
      }
      std::string inner = value.substr(1, value.size() - 2);
      std::size_t comma = inner.find(',');
      if (comma == std::string::npos) throw ParseError("bounds need two numbers", line_no, 1);
      double lo = to_number(trim(std::string_view(inner).substr(0, comma)), line_no);
      double hi = to_number(trim(std::string_view(inner).substr(comma + 1)), line_no);
      if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
        throw ParseError("bounds must be finite with lo <= hi", line_no, 1);
      }
      setup.config.input_box.set(key, Interval{lo, hi});
      continue;
    }
    if (section == "model") {
      if (key == "layers") {
        setup.model.layers.clear();
        std::stringstream ss(value);
        std::string part;
        while (std::getline(ss, part, '-')) {
          setup.model.layers.push_back(static_cast<int>(to_number(trim(part), line_no)));
        }
        saw_layers = true;
      } else if (key == "activation") {
        if (value == "tanh") setup.model.activation = Activation::kTanh;
        else if (value == "sigmoid") setup.model.activation = Activation::kSigmoid;
        else if (value == "relu") setup.model.activation = Activation::kRelu;
        else throw ParseError("unknown activation \"" + value + "\"", line_no, 1);
      } else if (key == "loss") {
        if (value == "mse") setup.model.loss = LossKind::kMse;
        else if (value == "logistic") setup.model.loss = LossKind::kLogistic;
        else throw ParseError("unknown loss \"" + value + "\"", line_no, 1);
      } else if (key == "init_scale") {
        setup.model.init_scale = to_number(value, line_no);
      } else if (key == "init_seed") {
        setup.model.init_seed = static_cast<std::uint64_t>(to_number(value, line_no));
      } else {
        throw ParseError("unknown model key \"" + key + "\"", line_no, 1);
      }
      continue;
    }
    if (!section.empty()) {
      throw ParseError("unknown section \"" + section + "\"", line_no, 1);
    }

    if (key == "mode") {
      if (value == "precomputed-k") setup.config.mode = TrainMode::kPrecomputedK;
      else if (value == "per-step-k") setup.config.mode = TrainMode::kPerStepK;
      else if (value == "clip-baseline") setup.config.mode = TrainMode::kClipBaseline;
      else throw ParseError("unknown mode \"" + value + "\"", line_no, 1);
    } else if (key == "eta") {
      setup.config.eta = to_number(value, line_no);
    } else if (key == "sigma") {
      setup.config.sigma = to_number(value, line_no);
    } else if (key == "noise_convention") {
      if (value == "multiplier") setup.config.convention = NoiseConvention::kMultiplier;
      else if (value == "absolute") setup.config.convention = NoiseConvention::kAbsolute;
      else throw ParseError("unknown noise convention \"" + value + "\"", line_no, 1);
    } else if (key == "lot_size") {
      setup.config.lot_size = static_cast<int>(to_number(value, line_no));
    } else if (key == "steps") {
      setup.config.steps = static_cast<int>(to_number(value, line_no));
    } else if (key == "weight_radius") {
      setup.config.weight_radius = to_number(value, line_no);
    } else if (key == "clip_norm") {
      setup.config.clip_norm = to_number(value, line_no);
    } else if (key == "sampling") {
      if (value == "poisson") setup.config.sampling = Sampling::kPoisson;
      else if (value == "uniform") setup.config.sampling = Sampling::kUniform;
      else throw ParseError("unknown sampling \"" + value + "\"", line_no, 1);
    } else if (key == "seed") {
      setup.config.seed = static_cast<std::uint64_t>(to_number(value, line_no));
    } else if (key == "k_tolerance") {
      setup.config.k_tolerance = to_number(value, line_no);
    } else if (key == "k_budget") {
      setup.config.k_budget = static_cast<std::size_t>(to_number(value, line_no));
    } else if (key == "per_step_budget") {
      setup.config.per_step_budget = static_cast<std::size_t>(to_number(value, line_no));
    } else {
      throw ParseError("unknown key \"" + key + "\"", line_no, 1);
    }
  }
  if (!saw_layers) {
    throw ParseError("config needs [model] layers", line_no, 1);
  }
  return setup;
}

TrainSetup load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConstructionError("cannot open \"" + path + "\"");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_train_config(buffer.str());
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace {

void validate_in_box(const Dataset& data, const Box& box,
                     const std::vector<std::string>& feature_names,
                     const std::string& target_name) {
  std::vector<std::size_t> bad;
  std::vector<const Interval*> col_bounds;
  std::vector<std::string> expected = feature_names;
  expected.push_back(target_name);
  if (data.columns.size() != expected.size()) {
    throw ConstructionError("dataset has " + std::to_string(data.columns.size()) +
                            " columns, model expects " + std::to_string(expected.size()));
  }
  for (const std::string& name : expected) {
    if (!box.covers(name)) {
      throw ConstructionError("input box does not bound \"" + name + "\"");
    }
    col_bounds.push_back(&box.at(name));
  }
  for (std::size_t r = 0; r < data.rows; ++r) {
    for (std::size_t c = 0; c < data.columns.size(); ++c) {
      if (!col_bounds[c]->contains(data.at(r, c))) {
        bad.push_back(r);
        break;
      }
    }
  }
  if (!bad.empty()) {
    std::string msg = "rows outside declared input box:";
    for (std::size_t i = 0; i < bad.size() && i < 16; ++i) {
      msg += " " + std::to_string(bad[i]);
    }
    if (bad.size() > 16) msg += " ...";
    throw DataBoundsError(msg, bad);
  }
}

// Batch matrix for a kernel whose inputs mix per-row dataset columns and
// broadcast parameters. Dataset columns map positionally: feature columns
// first, target last, whatever the CSV header calls them.
struct BatchAssembler {
  std::vector<int> dataset_col;  // per kernel input, -1 if parameter
  std::vector<int> param_index;  // per kernel input, -1 if dataset column

  BatchAssembler(const KernelProgram& kernel, const std::vector<std::string>& column_vars,
                 const std::vector<VarSpec>& params) {
    for (const std::string& name : kernel.input_layout) {
      int dcol = -1;
      for (std::size_t c = 0; c < column_vars.size(); ++c) {
        if (column_vars[c] == name) dcol = static_cast<int>(c);
      }
      int pidx = -1;
      for (std::size_t p = 0; p < params.size(); ++p) {
        if (params[p].name == name) pidx = static_cast<int>(p);
      }
      if (dcol < 0 && pidx < 0) {
        throw ConstructionError("kernel input \"" + name + "\" is neither a dataset column nor a parameter");
      }
      dataset_col.push_back(dcol);
      param_index.push_back(pidx);
    }
  }

  std::vector<double> rows(const Dataset& data, std::span<const std::size_t> lot,
                           std::span<const double> theta) const {
    std::vector<double> out(lot.size() * dataset_col.size());
    for (std::size_t i = 0; i < lot.size(); ++i) {
      for (std::size_t k = 0; k < dataset_col.size(); ++k) {
        out[i * dataset_col.size() + k] = dataset_col[k] >= 0
                                              ? data.at(lot[i], static_cast<std::size_t>(dataset_col[k]))
                                              : theta[static_cast<std::size_t>(param_index[k])];
      }
    }
    return out;
  }
};

Assignment theta_assignment(const std::vector<VarSpec>& params, std::span<const double> theta) {
  Assignment out;
  for (std::size_t i = 0; i < params.size(); ++i) out[params[i].name] = theta[i];
  return out;
}

}  // namespace

std::string TrainReport::to_jsonl() const {
  std::string out;
  for (const StepRecord& s : steps) {
    nlohmann::json record{{"step", s.step},
                          {"lot_size", s.lot_size},
                          {"mean_loss", s.mean_loss},
                          {"max_norm", s.max_norm},
                          {"mean_norm", s.mean_norm},
                          {"k_used", s.k_used},
                          {"clipped", s.clipped},
                          {"k_budget_exhausted", s.k_budget_exhausted},
                          {"projected_coords", s.projected_coords}};
    out += record.dump();
    out += '\n';
  }
  nlohmann::json params = nlohmann::json::object();
  for (std::size_t i = 0; i < param_names.size(); ++i) params[param_names[i]] = final_params[i];
  nlohmann::json summary{{"summary", true},
                         {"k_precomputed", k_precomputed},
                         {"train_accuracy", train_accuracy},
                         {"final_mean_loss", final_mean_loss},
                         {"bias_warning", bias_warning},
                         {"final_params", params},
                         {"ledger", ledger.to_json()}};
  out += summary.dump();
  out += '\n';
  return out;
}

TrainReport train(const ModelSpec& spec, const TrainConfig& config, const Dataset& data) {
  if (data.rows == 0) throw ConstructionError("dataset is empty");
  if (config.steps < 0) throw ConstructionError("steps must be non-negative");
  if (!(config.eta > 0.0)) throw ConstructionError("learning rate must be positive");
  if (config.sigma < 0.0) throw ConstructionError("noise must be non-negative");
  bool needs_weight_box = config.mode != TrainMode::kClipBaseline;
  if (needs_weight_box && !(config.weight_radius > 0.0)) {
    throw ConstructionError("weight radius must be positive");
  }
  if (config.mode == TrainMode::kClipBaseline && !(config.clip_norm > 0.0)) {
    throw ConstructionError("clip norm must be positive");
  }

  LossGraph lg = build_loss_graph(spec);
  validate_in_box(data, config.input_box, lg.feature_names, lg.target_name);
  KernelSet kernels = precompute_kernels(lg);
  const std::size_t n_params = lg.params.size();

  TrainReport report;
  for (const VarSpec& p : lg.params) report.param_names.push_back(p.name);

  // Initial parameters, inside the projection box when one is in force.
  std::mt19937_64 init_rng(spec.init_seed);
  double init_scale = spec.init_scale;
  if (needs_weight_box) init_scale = std::min(init_scale, config.weight_radius);
  std::vector<double> theta(n_params);
  for (double& t : theta) t = (2.0 * uniform01(init_rng) - 1.0) * init_scale;

  // Analysis box over every loss input: features and target from the
  // declared data bounds, parameters from the weight radius.
  Box analysis_box = config.input_box;
  double k_precomputed = 0.0;
  if (needs_weight_box) {
    for (const VarSpec& p : lg.params) {
      analysis_box.set(p.name, Interval{-config.weight_radius, config.weight_radius});
    }
    LipschitzOptions k_opts;
    k_opts.tolerance = config.k_tolerance;
    k_opts.budget = config.k_budget;
    LipschitzReport k_report = sup_over_box(lg.graph, kernels.norm_root, analysis_box, k_opts);
    k_precomputed = k_report.k_upper;
  }
  report.k_precomputed = k_precomputed;

  std::vector<std::string> column_vars = lg.feature_names;
  column_vars.push_back(lg.target_name);
  BatchAssembler grad_batch(kernels.grads, column_vars, lg.params);
  BatchAssembler loss_batch(kernels.loss, column_vars, lg.params);
  BatchAssembler output_batch(kernels.output, column_vars, lg.params);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> all_rows(data.rows);
  for (std::size_t i = 0; i < data.rows; ++i) all_rows[i] = i;

  for (int step = 0; step < config.steps; ++step) {
    std::vector<std::size_t> lot =
        sample_lot(data.rows, static_cast<std::size_t>(config.lot_size), config.sampling, rng);

    StepRecord record;
    record.step = step;
    record.lot_size = lot.size();

    // Step sensitivity bound.
    double k_step = 0.0;
    switch (config.mode) {
      case TrainMode::kPrecomputedK:
        k_step = k_precomputed;
        break;
      case TrainMode::kPerStepK: {
        // Bind the current parameters in the norm expression; the residual
        // ranges over features and target only.
        PartialEval residual = partial_evaluate(
            lg.graph, std::span<const NodeId>(&kernels.norm_root, 1),
            theta_assignment(lg.params, theta));
        LipschitzOptions step_opts;
        step_opts.tolerance = config.k_tolerance;
        step_opts.budget = config.per_step_budget;
        LipschitzReport step_report =
            sup_over_box(residual.graph, residual.roots[0], config.input_box, step_opts);
        report.k_per_step.push_back(step_report.k_upper);
        if (step_report.budget_exhausted) record.k_budget_exhausted = true;
        // Both bounds are certified at the current parameters (projection
        // keeps them inside the analysis box), so the tighter one is used;
        // on budget exhaustion this is the precomputed-constant fallback.
        k_step = std::min(step_report.k_upper, k_precomputed);
        break;
      }
      case TrainMode::kClipBaseline:
        k_step = config.clip_norm;
        break;
    }
    record.k_used = k_step;

    std::vector<double> grad_sum(n_params, 0.0);
    if (!lot.empty()) {
      std::vector<double> batch = grad_batch.rows(data, lot, theta);
      std::vector<double> grads = kernels.grads.execute(batch, lot.size());

      std::vector<double> norms(lot.size(), 0.0);
      for (std::size_t i = 0; i < lot.size(); ++i) {
        double sq = 0.0;
        for (std::size_t p = 0; p < n_params; ++p) {
          double v = grads[i * n_params + p];
          sq += v * v;
        }
        norms[i] = std::sqrt(sq);
      }
      StepNoiseResult noise_info = per_step_sensitivity_noise(norms, k_step, config.sigma);
      record.clipped = noise_info.clipped;
      double max_norm = 0.0, sum_norm = 0.0;
      for (double v : norms) {
        max_norm = std::max(max_norm, v);
        sum_norm += v;
      }
      record.max_norm = max_norm;
      record.mean_norm = sum_norm / static_cast<double>(lot.size());

      for (std::size_t i = 0; i < lot.size(); ++i) {
        double scale = noise_info.scale[i];
        for (std::size_t p = 0; p < n_params; ++p) {
          grad_sum[p] += grads[i * n_params + p] * scale;
        }
      }

      std::vector<double> loss_in = loss_batch.rows(data, lot, theta);
      std::vector<double> losses = kernels.loss.execute(loss_in, lot.size());
      double loss_sum = 0.0;
      for (double v : losses) loss_sum += v;
      record.mean_loss = loss_sum / static_cast<double>(lot.size());
    }

    // Noisy aggregated update; an empty Poisson lot still adds noise and
    // still pays its accounting step.
    GaussianMechanism mech;
    mech.sensitivity = k_step;
    mech.noise = config.sigma;
    mech.convention = config.convention;
    double noise_std = config.sigma > 0.0 ? mech.noise_std() : 0.0;
    double denom = static_cast<double>(std::max<std::size_t>(lot.size(), 1));
    for (std::size_t p = 0; p < n_params; ++p) {
      double noisy = grad_sum[p];
      if (noise_std > 0.0) noisy += noise_std * gaussian(rng);
      theta[p] -= config.eta * noisy / denom;
    }

    if (needs_weight_box) {
      std::size_t projected = 0;
      for (double& t : theta) {
        double clipped = std::clamp(t, -config.weight_radius, config.weight_radius);
        if (clipped != t) ++projected;
        t = clipped;
      }
      record.projected_coords = projected;
      if (projected * 2 > n_params) report.bias_warning = true;
    }

    // sigma = 0 is a non-private sanity configuration; there is no finite
    // Renyi cost to record for it.
    if (config.sigma > 0.0) report.ledger.compose(mech);
    report.steps.push_back(record);
  }

  // Final diagnostics over the whole dataset.
  {
    std::vector<double> loss_in = loss_batch.rows(data, all_rows, theta);
    std::vector<double> losses = kernels.loss.execute(loss_in, data.rows);
    double loss_sum = 0.0;
    for (double v : losses) loss_sum += v;
    report.final_mean_loss = loss_sum / static_cast<double>(data.rows);

    std::vector<double> out_in = output_batch.rows(data, all_rows, theta);
    std::vector<double> outputs = kernels.output.execute(out_in, data.rows);
    std::size_t correct = 0;
    double threshold = spec.loss == LossKind::kLogistic ? 0.0 : 0.5;
    for (std::size_t r = 0; r < data.rows; ++r) {
      double target = data.at(r, data.columns.size() - 1);
      bool predicted = outputs[r] > threshold;
      bool actual = target > 0.5;
      if (predicted == actual) ++correct;
    }
    report.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.rows);
  }

  report.final_params = theta;
  return report;
}

}  // namespace had
