/**
 * Copyright 2026 The cdimpute Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
// Command-line front end: prepare, train, evaluate, impute, ablate, synth.

#include <cstdlib>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "cdimpute/cdimpute.hpp"

namespace {

using namespace cdimpute;

fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("CDIMPUTE_OUT"); env && *env) return env;
  return "runs";
}

/// Config file plus one --<dotted.key> option per config leaf.
struct ConfigArgs {
  std::string path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app, bool config_required) {
    auto* opt = app->add_option("--config", path, "JSON config file")->check(CLI::ExistingFile);
    if (config_required) opt->required();
    for (const auto& key : flat_keys(to_json(RunConfig{})))
      app->add_option("--" + key, overrides[key], "override config key " + key)->group("Config overrides");
  }

  RunConfig resolve() const {
    json j = path.empty() ? to_json(RunConfig{}) : read_json_file(path);
    for (const auto& [k, v] : overrides)
      if (!v.empty()) apply_override(j, k, v);
    RunConfig cfg = from_json(j);
    cfg.validate();
    return cfg;
  }
};

void print_metrics(const MetricsReport& r) {
  std::cout << "MAE " << r.mae << "  RMSE " << r.rmse << "  CRPS " << r.crps << "  n=" << r.n_eval_points
            << "  (" << r.runtime_s << " s)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain diffusion imputation for multivariate time series", "cdimpute"};
  app.require_subcommand(1);
  std::string out_flag;
  app.add_option("--out", out_flag, "output directory (default: $CDIMPUTE_OUT or ./runs)");

  ConfigArgs prep_cfg, train_cfg, ablate_cfg, synth_cfg;
  auto* prepare = app.add_subcommand("prepare", "split, normalize and write the dataset manifest");
  prep_cfg.attach(prepare, true);

  auto* train = app.add_subcommand("train", "train a model");
  train_cfg.attach(train, true);
  bool resume = false;
  train->add_flag("--resume", resume, "continue from last.ckpt in the output directory");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a checkpoint on the target test split");
  std::string ckpt;
  int eval_samples = 0;
  evaluate_cmd->add_option("--checkpoint", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--n-samples", eval_samples, "posterior samples (default: train.n_samples)");

  auto* impute = app.add_subcommand("impute", "fill the missing cells of a CSV with a checkpoint");
  std::string imp_ckpt, imp_input, imp_branch = "target";
  int imp_samples = 0;
  impute->add_option("--checkpoint", imp_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  impute->add_option("--input", imp_input, "CSV with empty cells to fill")->required()->check(CLI::ExistingFile);
  impute->add_option("--n-samples", imp_samples, "posterior samples (default: train.n_samples)");
  impute->add_option("--branch", imp_branch, "denoiser branch")->check(CLI::IsMember({"source", "target"}));

  auto* ablate = app.add_subcommand("ablate", "train and score the full model and three ablations");
  ablate_cfg.attach(ablate, true);

  auto* synth = app.add_subcommand("synth", "write a synthetic source/target dataset pair");
  synth_cfg.attach(synth, false);
  std::uint64_t synth_seed = 7;
  synth->add_option("--seed", synth_seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  const fs::path out = output_root(out_flag);
  try {
    if (*prepare) {
      const RunConfig cfg = prep_cfg.resolve();
      const Experiment ex = load_experiment(cfg);
      fs::create_directories(out);
      write_json_file(out / "manifest.json", make_manifest(cfg, ex));
      write_json_file(out / "config.json", to_json(cfg));
      std::cout << "manifest: " << (out / "manifest.json").string() << '\n';
    } else if (*train) {
      const RunConfig cfg = train_cfg.resolve();
      const Experiment ex = load_experiment(cfg);
      fs::create_directories(out);
      write_json_file(out / "manifest.json", make_manifest(cfg, ex));
      Trainer tr(cfg, ex, out);
      tr.on_epoch = [&](int epoch, double loss, double val) {
        std::cout << "epoch " << epoch + 1 << "/" << cfg.train.epochs << "  loss " << loss << "  val " << val
                  << '\n';
      };
      const auto res = tr.run(resume);
      std::cout << (res.interrupted ? "stopped" : "finished") << " after " << res.epochs_completed
                << " epochs in " << res.seconds << " s; best val " << res.best_val << " (epoch "
                << res.best_epoch + 1 << ")\n";
    } else if (*evaluate_cmd) {
      const auto ck = load_checkpoint(ckpt);
      const Experiment ex = load_experiment(ck.config);
      const int n = eval_samples > 0 ? eval_samples : ck.config.train.n_samples;
      print_metrics(evaluate(ck, ex, out, n));
    } else if (*impute) {
      const auto ck = load_checkpoint(imp_ckpt);
      const auto& cfg = ck.config;
      const Eigen::Index length = cfg.data.synthetic ? cfg.data.synth.length : cfg.data.window_length;
      const auto table = read_csv_table(imp_input, ck.state.feature_names);
      const Domain branch = imp_branch == "source" ? Domain::Source : Domain::Target;
      auto ds = cut_windows(table, 0, static_cast<std::int64_t>(table.timestamps.size()),
                            {length, length, Split::Test, branch});
      const auto& norm = branch == Domain::Source ? ck.state.source_norm : ck.state.target_norm;
      apply_normalization(ds, norm);
      const auto sched = quadratic_schedule(cfg.schedule.steps, cfg.schedule.beta1, cfg.schedule.beta_t);
      const int n = imp_samples > 0 ? imp_samples : cfg.train.n_samples;
      const auto imp = impute_windows(ck.model, ds.windows, sched, n, cfg.train.seed, branch);
      fs::create_directories(out);
      write_imputations_csv(out / "imputations.csv", imp, norm, ck.state.feature_names, &table.timestamps);
      write_samples(out / "samples.bin", imp, norm);
      std::cout << "imputed " << imp.results.size() << " windows into " << out.string() << '\n';
    } else if (*ablate) {
      const RunConfig cfg = ablate_cfg.resolve();
      const Experiment ex = load_experiment(cfg);
      const auto rows = run_ablation(cfg, ex, out, [](const std::string& n) { std::cout << "== " << n << '\n'; });
      std::cout << "variant,mae,rmse,crps\n";
      for (const auto& r : rows)
        std::cout << r.name << ',' << r.metrics.mae << ',' << r.metrics.rmse << ',' << r.metrics.crps << '\n';
    } else if (*synth) {
      const RunConfig cfg = synth_cfg.resolve();
      const auto pair = generate_synthetic(cfg.data.synth, synth_seed);
      fs::create_directories(out);
      write_csv_table((out / "source.csv").string(), pair.source);
      write_csv_table((out / "target.csv").string(), pair.target);
      std::cout << "wrote " << (out / "source.csv").string() << " and " << (out / "target.csv").string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
