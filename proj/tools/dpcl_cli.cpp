//
// Copyright 2026 The DP-CL Authors
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
//

// Command-line front end: run experiments, compare budget accumulation, and
// query the accountant.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "dpcl/accountant.hpp"
#include "dpcl/cli.hpp"

namespace {

using dpcl::cli::RunSpec;

void add_run_flags(CLI::App& run, RunSpec& spec, std::string& mode, std::string& policy,
                   std::string& projection, std::string& config_path, std::string& data,
                   std::string& hidden) {
  auto& t = spec.train;
  run.add_option("--config", config_path, "key = value configuration file (flags override it)");
  run.add_option("--mode", mode, "agem | dpcl | dpagem");
  run.add_option("--tasks", spec.tasks, "number of tasks");
  run.add_option("--epochs", t.epochs_per_task, "epochs per task");
  run.add_option("--batch", t.train_batch_size, "expected training batch size");
  run.add_option("--ref-batch", t.ref_batch_size, "reference batch size per memory block");
  run.add_option("--sampling-rate", t.sampling_rate, "Poisson sampling rate p (0: batch / |train|)");
  run.add_option("--lr", t.learning_rate, "learning rate");
  run.add_option("--sigma", t.noise.sigma, "noise multiplier");
  run.add_option("--clip", t.noise.clip_bound, "L2 clipping bound");
  run.add_option("--delta", t.delta, "delta used for every composition query");
  run.add_option("--lambda-max", t.lambda_max, "largest moment order");
  run.add_option("--policy", policy, "lemma1 | lemma2 | auto");
  run.add_option("--projection", projection, "always | conflict");
  run.add_option("--hidden", hidden, "comma-separated hidden layer widths");
  run.add_option("--seed", t.seed, "master seed");
  run.add_option("--out", spec.out_dir, "output directory");
  run.add_option("--data", data, "synthetic | archive");
  run.add_option("--train-images", spec.data.train_images);
  run.add_option("--train-labels", spec.data.train_labels);
  run.add_option("--test-images", spec.data.test_images);
  run.add_option("--test-labels", spec.data.test_labels);
  run.add_option("--max-train", spec.data.max_train, "keep only the first N training images");
  run.add_option("--max-test", spec.data.max_test, "keep only the first N test images");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private continual learning"};
  app.require_subcommand(1);

  RunSpec spec;
  std::string mode, policy, projection, config_path, data, hidden;
  CLI::App* run = app.add_subcommand("run", "train a task stream and write result CSVs");
  add_run_flags(*run, spec, mode, policy, projection, config_path, data, hidden);

  double eps_mean = 1.0, eps_std = 0.02;
  long long curve_tasks = 17;
  std::uint64_t curve_seed = 0;
  std::string curve_out;
  CLI::App* curve = app.add_subcommand("budget-curve", "cumulative budget under both composition lemmas");
  curve->add_option("--eps-mean", eps_mean, "mean of the per-task budgets");
  curve->add_option("--eps-std", eps_std, "standard deviation of the per-task budgets");
  curve->add_option("--tasks", curve_tasks, "number of tasks");
  curve->add_option("--seed", curve_seed);
  curve->add_option("--out", curve_out, "CSV path (default: stdout)");

  double q = 0.01, sigma = 1.0, delta = 1e-5;
  std::size_t steps = 1;
  int lambda_max = dpcl::kDefaultLambdaMax;
  CLI::App* eps = app.add_subcommand("epsilon", "epsilon after repeated subsampled Gaussian steps");
  eps->add_option("--q", q)->required();
  eps->add_option("--sigma", sigma)->required();
  eps->add_option("--steps", steps)->required();
  eps->add_option("--delta", delta);
  eps->add_option("--lambda-max", lambda_max);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dpcl::cli::kExitConfig;
  }

  try {
    if (*run) {
      // File first, explicit flags on top. Flags are re-applied through the
      // same key table the configuration file uses.
      RunSpec base;
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw dpcl::ConfigError("cannot open config file " + config_path);
        base = dpcl::cli::spec_from_key_values(dpcl::cli::parse_key_values(in));
      }
      dpcl::cli::KeyValues overrides;
      for (const CLI::Option* opt : run->get_options()) {
        if (opt->count() == 0 || opt->get_name() == "--config" || opt->get_name() == "--help") continue;
        std::string key = opt->get_name().substr(2);
        for (char& c : key) c = c == '-' ? '_' : c;
        overrides.emplace_back(key, opt->as<std::string>());
      }
      const RunSpec final_spec = dpcl::cli::spec_from_key_values(overrides, base);
      return dpcl::cli::cmd_run(final_spec, std::cerr);
    }
    if (*curve) {
      if (curve_tasks <= 0) {
        std::cerr << "invalid configuration: --tasks must be >= 1\n";
        return dpcl::cli::kExitConfig;
      }
      if (curve_out.empty()) {
        return dpcl::cli::cmd_budget_curve(eps_mean, eps_std, static_cast<std::size_t>(curve_tasks), curve_seed,
                                           std::cout, std::cerr);
      }
      std::ofstream out(curve_out);
      if (!out) throw dpcl::ConfigError("cannot write " + curve_out);
      return dpcl::cli::cmd_budget_curve(eps_mean, eps_std, static_cast<std::size_t>(curve_tasks), curve_seed, out,
                                         std::cerr);
    }
    if (*eps) {
      std::cout << std::setprecision(10) << dpcl::compose_epsilon(q, sigma, steps, delta, lambda_max) << '\n';
      return dpcl::cli::kExitOk;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return dpcl::cli::kExitConfig;
  }
  return dpcl::cli::kExitOk;
}
