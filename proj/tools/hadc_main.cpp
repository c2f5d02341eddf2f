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

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "had/accountant.hpp"
#include "had/autodiff.hpp"
#include "had/compile.hpp"
#include "had/dpsgd.hpp"
#include "had/lipschitz.hpp"
#include "had/parser.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;  // usage, parse, or analysis errors
constexpr int kExitData = 3;   // data outside declared bounds

struct SharedFlags {
  std::string expr;
  std::string expr_file;
  std::string bounds_file;
  std::string out;
  std::string format = "text";
  std::uint64_t seed = 1;
};

void add_shared(CLI::App* cmd, SharedFlags& flags, bool needs_expr) {
  if (needs_expr) {
    cmd->add_option("--expr", flags.expr, "Expression text");
    cmd->add_option("--expr-file", flags.expr_file, "File containing the expression");
    cmd->add_option("--bounds-file", flags.bounds_file,
                    "Variable declarations, one `name in [lo, hi]` per line");
  }
  cmd->add_option("--out", flags.out, "Write output to this file instead of stdout");
  cmd->add_option("--format", flags.format, "Output format")
      ->check(CLI::IsMember({"text", "json"}));
  cmd->add_option("--seed", flags.seed, "Random seed for seeded subcommands");
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw had::ConstructionError("cannot open \"" + path + "\"");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void emit(const SharedFlags& flags, const std::string& text) {
  if (flags.out.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(flags.out, std::ios::binary);
  if (!out) throw had::ConstructionError("cannot open \"" + flags.out + "\" for writing");
  out << text;
}

had::ParsedExpr parse_input(const SharedFlags& flags) {
  had::SourceExpr src;
  if (!flags.expr.empty() == !flags.expr_file.empty()) {
    throw had::ConstructionError("exactly one of --expr / --expr-file is required");
  }
  src.text = flags.expr.empty() ? slurp(flags.expr_file) : flags.expr;
  if (!flags.bounds_file.empty()) {
    src.declared_vars = had::parse_declarations(slurp(flags.bounds_file));
  }
  return had::parse(src);
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    std::size_t e = item.find_last_not_of(" \t");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

// --- derive -----------------------------------------------------------------

int cmd_derive(const SharedFlags& flags, const std::string& wrt_csv) {
  had::ParsedExpr parsed = parse_input(flags);
  std::vector<std::string> wrt = split_list(wrt_csv);
  if (wrt.empty()) {
    for (const had::VarSpec& spec : parsed.graph.vars()) wrt.push_back(spec.name);
  }
  had::GradientBundle bundle =
      had::grad(parsed.graph, parsed.root, std::span<const std::string>(wrt));
  had::grad_norm(parsed.graph, bundle);

  if (flags.format == "json") {
    nlohmann::json partials = nlohmann::json::object();
    for (std::size_t i = 0; i < wrt.size(); ++i) {
      partials[wrt[i]] = had::print_expr(parsed.graph, bundle.partials[i]);
    }
    nlohmann::json doc{{"expr", had::print_expr(parsed.graph, parsed.root)},
                       {"partials", partials},
                       {"grad_norm", had::print_expr(parsed.graph, bundle.norm_root)}};
    emit(flags, doc.dump(2));
  } else {
    std::string text;
    for (std::size_t i = 0; i < wrt.size(); ++i) {
      text += "d/d" + wrt[i] + ": " + had::print_expr(parsed.graph, bundle.partials[i]) + "\n";
    }
    text += "|grad|: " + had::print_expr(parsed.graph, bundle.norm_root) + "\n";
    emit(flags, text);
  }
  return kExitOk;
}

// --- analyze ----------------------------------------------------------------

int cmd_analyze(const SharedFlags& flags, double tolerance, std::size_t budget, double alpha,
                double sigma) {
  had::ParsedExpr parsed = parse_input(flags);

  had::Box box;
  std::vector<std::string> unbounded;
  for (std::uint32_t idx : parsed.graph.support(parsed.root)) {
    const had::VarSpec& spec = parsed.graph.var_spec(idx);
    if (spec.bounds) {
      box.set(spec.name, *spec.bounds);
    } else {
      unbounded.push_back(spec.name);
    }
  }
  if (!unbounded.empty()) {
    std::string msg = "bounds required for:";
    for (const std::string& name : unbounded) msg += " " + name;
    throw had::ConstructionError(msg);
  }

  had::LipschitzOptions opts;
  opts.tolerance = tolerance;
  opts.budget = budget;
  had::LipschitzReport report =
      had::lipschitz_constant(parsed.graph, parsed.root, box, opts);

  bool with_rdp = alpha > 1.0 && sigma > 0.0;
  double eps_rdp = 0.0;
  if (with_rdp) {
    had::GaussianMechanism mech;
    mech.sensitivity = report.k_upper;
    mech.noise = sigma;
    mech.convention = had::NoiseConvention::kAbsolute;
    eps_rdp = had::rdp_epsilon(mech, alpha);
  }

  if (flags.format == "json") {
    nlohmann::json doc = report.to_json();
    if (with_rdp) {
      doc["rdp"] = {{"alpha", alpha}, {"sigma", sigma}, {"epsilon", eps_rdp}};
    }
    emit(flags, doc.dump(2));
  } else {
    std::string text;
    text += "K upper:  " + had::format_double(report.k_upper) + "\n";
    text += "K lower:  " + had::format_double(report.k_lower) + "\n";
    text += "gap:      " + had::format_double(report.gap()) + "\n";
    text += "witness: ";
    for (const auto& [name, value] : report.witness) {
      text += " " + name + "=" + had::format_double(value);
    }
    text += "\n";
    text += "iterations: " + std::to_string(report.iterations) +
            (report.budget_exhausted ? " (budget exhausted)" : "") + "\n";
    text += "closed form: " + report.closed_form + "\n";
    if (with_rdp) {
      text += "rdp: (" + had::format_double(alpha) + ", " + had::format_double(eps_rdp) + ")\n";
    }
    emit(flags, text);
  }
  return kExitOk;
}

// --- compile ----------------------------------------------------------------

int cmd_compile(const SharedFlags& flags, const std::string& mode, const std::string& artifact,
                const std::string& run_csv) {
  had::ParsedExpr parsed = parse_input(flags);
  had::CompileOptions opts =
      mode == "jit" ? had::CompileOptions::jit() : had::CompileOptions::aot();
  std::vector<std::pair<std::string, had::NodeId>> roots{{"value", parsed.root}};
  had::KernelProgram kernel = had::lower(parsed.graph, roots, opts);
  if (!artifact.empty()) {
    had::save_kernel_file(kernel, artifact);
  }

  nlohmann::json doc{{"instructions", kernel.instructions.size()},
                     {"slots", kernel.slot_count},
                     {"inputs", kernel.input_layout},
                     {"outputs", kernel.output_layout},
                     {"mode", mode}};

  if (!run_csv.empty()) {
    had::Dataset data = had::parse_csv(slurp(run_csv));
    // Column names must cover the kernel inputs; extra columns are ignored.
    std::vector<std::size_t> col_for_input;
    for (const std::string& name : kernel.input_layout) {
      auto it = std::find(data.columns.begin(), data.columns.end(), name);
      if (it == data.columns.end()) {
        throw had::ConstructionError("batch file is missing column \"" + name + "\"");
      }
      col_for_input.push_back(static_cast<std::size_t>(it - data.columns.begin()));
    }
    std::vector<double> batch(data.rows * kernel.input_layout.size());
    for (std::size_t r = 0; r < data.rows; ++r) {
      for (std::size_t k = 0; k < col_for_input.size(); ++k) {
        batch[r * col_for_input.size() + k] = data.at(r, col_for_input[k]);
      }
    }
    std::vector<double> results = kernel.execute(batch, data.rows);
    doc["results"] = results;
  }

  if (flags.format == "json") {
    emit(flags, doc.dump(2));
  } else {
    std::string text;
    text += "instructions: " + std::to_string(kernel.instructions.size()) + "\n";
    text += "slots: " + std::to_string(kernel.slot_count) + "\n";
    if (doc.contains("results")) {
      text += "results:";
      for (double v : doc["results"]) text += " " + had::format_double(v);
      text += "\n";
    }
    emit(flags, text);
  }
  return kExitOk;
}

// --- train -------------------------------------------------------------------

int cmd_train(const SharedFlags& flags, const std::string& config_path,
              const std::string& data_path, int steps_override, bool seed_given) {
  had::TrainSetup setup = had::load_train_config(config_path);
  if (steps_override >= 0) setup.config.steps = steps_override;
  if (seed_given) setup.config.seed = flags.seed;
  had::Dataset data = had::load_csv(data_path);
  had::TrainReport report = had::train(setup.model, setup.config, data);

  std::string jsonl = report.to_jsonl();
  if (flags.out.empty()) {
    std::cout << jsonl;
  } else {
    std::ofstream report_out(flags.out + ".report.jsonl", std::ios::binary);
    if (!report_out) {
      throw had::ConstructionError("cannot open \"" + flags.out + ".report.jsonl\"");
    }
    report_out << jsonl;
    std::ofstream ledger_out(flags.out + ".ledger.json", std::ios::binary);
    if (!ledger_out) {
      throw had::ConstructionError("cannot open \"" + flags.out + ".ledger.json\"");
    }
    std::vector<double> deltas{1e-5};
    ledger_out << report.ledger.to_json(deltas).dump(2) << "\n";
  }
  return kExitOk;
}

// --- ledger ------------------------------------------------------------------

int cmd_ledger(const SharedFlags& flags, double k, double sigma, bool absolute, int steps,
               const std::vector<double>& deltas, const std::vector<double>& extra_alphas) {
  std::vector<double> orders = had::PrivacyLedger::default_orders();
  for (double a : extra_alphas) orders.push_back(a);
  had::PrivacyLedger ledger(orders);
  had::GaussianMechanism mech;
  mech.sensitivity = k;
  mech.noise = sigma;
  mech.convention = absolute ? had::NoiseConvention::kAbsolute : had::NoiseConvention::kMultiplier;
  for (int i = 0; i < steps; ++i) ledger.compose(mech);

  if (flags.format == "json") {
    emit(flags, ledger.to_json(deltas).dump(2));
  } else {
    std::string text;
    for (std::size_t i = 0; i < ledger.orders().size(); ++i) {
      text += "alpha " + had::format_double(ledger.orders()[i]) + ": eps_rdp " +
              had::format_double(ledger.totals()[i]) + "\n";
    }
    for (double delta : deltas) {
      auto [eps, alpha] = ledger.to_eps_delta(delta);
      text += "delta " + had::format_double(delta) + ": eps " + had::format_double(eps) +
              " (alpha " + had::format_double(alpha) + ")\n";
    }
    emit(flags, text);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-form gradients, certified Lipschitz bounds, and DP-SGD accounting"};
  app.require_subcommand(1);

  SharedFlags derive_flags, analyze_flags, compile_flags, train_flags, ledger_flags;

  auto* derive = app.add_subcommand("derive", "Print symbolic partials and the gradient norm");
  add_shared(derive, derive_flags, true);
  std::string wrt_csv;
  derive->add_option("--wrt", wrt_csv, "Comma-separated variables (default: all)");

  auto* analyze =
      app.add_subcommand("analyze", "Certified Lipschitz constant over declared bounds");
  add_shared(analyze, analyze_flags, true);
  double tolerance = 1e-3;
  std::size_t budget = 100000;
  double alpha = 0.0, sigma_abs = 0.0;
  analyze->add_option("--tolerance", tolerance, "Relative gap target");
  analyze->add_option("--budget", budget, "Branch-and-bound expansion budget");
  analyze->add_option("--alpha", alpha, "Renyi order for the RDP line");
  analyze->add_option("--sigma", sigma_abs, "Absolute noise std for the RDP line");

  auto* compile = app.add_subcommand("compile", "Lower an expression to a kernel artifact");
  add_shared(compile, compile_flags, true);
  std::string mode = "aot", artifact, run_csv;
  compile->add_option("--mode", mode, "Compilation mode")->check(CLI::IsMember({"jit", "aot"}));
  compile->add_option("--artifact", artifact, "Write the kernel artifact here");
  compile->add_option("--run", run_csv, "Execute the kernel on this CSV batch");

  auto* train = app.add_subcommand("train", "DP-SGD over a CSV dataset");
  add_shared(train, train_flags, false);
  std::string config_path, data_path;
  int steps_override = -1;
  train->add_option("--config", config_path, "Training configuration file")->required();
  train->add_option("--data", data_path, "CSV dataset, features then target")->required();
  train->add_option("--steps", steps_override, "Override the configured step count");

  auto* ledger = app.add_subcommand("ledger", "Renyi-DP composition and (eps, delta) conversion");
  add_shared(ledger, ledger_flags, false);
  double ledger_k = 1.0, ledger_sigma = 1.0;
  bool ledger_absolute = false;
  int ledger_steps = 1;
  std::vector<double> deltas, extra_alphas;
  ledger->add_option("--k", ledger_k, "Sensitivity");
  ledger->add_option("--sigma", ledger_sigma, "Noise (multiplier unless --absolute)");
  ledger->add_flag("--absolute", ledger_absolute, "Treat --sigma as an absolute std");
  ledger->add_option("--steps", ledger_steps, "Number of composed mechanisms");
  ledger->add_option("--delta", deltas, "Target delta values for conversion");
  ledger->add_option("--alpha", extra_alphas, "Extra Renyi orders beyond the default grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (derive->parsed()) return cmd_derive(derive_flags, wrt_csv);
    if (analyze->parsed()) {
      return cmd_analyze(analyze_flags, tolerance, budget, alpha, sigma_abs);
    }
    if (compile->parsed()) return cmd_compile(compile_flags, mode, artifact, run_csv);
    if (train->parsed()) {
      return cmd_train(train_flags, config_path, data_path, steps_override,
                       train->count("--seed") > 0);
    }
    if (ledger->parsed()) {
      return cmd_ledger(ledger_flags, ledger_k, ledger_sigma, ledger_absolute, ledger_steps,
                        deltas, extra_alphas);
    }
  } catch (const had::DataBoundsError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
