// Command-line driver: train, analyze, verify, sweep, summarize.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "grokking/grokking.hpp"

namespace {

using namespace grokking;

struct CommonOptions {
  std::string preset = "default";
  std::string config_file;
  std::uint64_t master_seed = 0;
  std::optional<std::uint64_t> max_steps;
  std::optional<std::string> decay_mode;
  std::optional<double> lambda;
  std::optional<std::size_t> k;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--preset", o.preset, "default | low-decay | k4 | custom")->capture_default_str();
  cmd->add_option("--config", o.config_file, "key = value config file; overrides the preset");
  cmd->add_option("--master-seed", o.master_seed, "master seed for per-seed derivation")->capture_default_str();
  cmd->add_option("--max-steps", o.max_steps, "SGD step budget");
  cmd->add_option("--decay-mode", o.decay_mode, "decoupled-l2 | literal-l2-norm");
  cmd->add_option("--lambda", o.lambda, "weight decay strength");
  cmd->add_option("--k", o.k, "parity size");
  cmd->add_option("--out", o.out, "output directory")->required();
}

ExperimentPreset resolve(const CommonOptions& o) {
  ExperimentPreset preset = preset_by_name(o.preset);
  if (!o.config_file.empty()) preset.config = load_config(o.config_file, preset.config);
  if (o.max_steps) preset.config.max_steps = *o.max_steps;
  if (o.decay_mode) preset.config.decay_mode = parse_decay_mode(*o.decay_mode);
  if (o.lambda) preset.config.lambda = *o.lambda;
  if (o.k) preset.config.k = *o.k;
  validate_config(preset.config);
  return preset;
}

void print_progress(const MetricsRecord& r) {
  std::printf("step %8llu  epoch %9.2f  train_acc %.3f  test_acc %.3f  train_loss %.4f  test_loss %.4f  |theta| %.3f\n",
              static_cast<unsigned long long>(r.step), r.epoch, r.train_accuracy, r.test_accuracy, r.train_loss,
              r.test_loss, r.param_norm);
  std::fflush(stdout);
}

void print_report(const AnalysisReport& report) {
  std::printf("final step %llu: effective sparsity %zu\n", static_cast<unsigned long long>(report.final_step),
              report.generalizing.size());
  if (report.overlap) {
    std::printf("memorization step %llu: active neurons %zu, overlap with generalizing %zu (jaccard %.3f)\n",
                static_cast<unsigned long long>(*report.memorization_step), report.overlap->memorization_size,
                report.overlap->intersection, report.overlap->jaccard);
  } else {
    std::printf("train accuracy never exceeded 0.98\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse parity grokking laboratory"};
  app.require_subcommand(1);

  CommonOptions train_opts;
  std::uint64_t seed_index = 0;
  bool quiet = false;
  bool config_seeds = false;
  auto* train_cmd = app.add_subcommand("train", "train one seed into a run directory");
  add_common(train_cmd, train_opts);
  train_cmd->add_option("--seed-index", seed_index, "which seed of the master seed's sequence")->capture_default_str();
  train_cmd->add_flag("--quiet", quiet, "suppress per-checkpoint output");
  train_cmd->add_flag("--config-seeds", config_seeds, "use the seeds in --config instead of deriving them");

  std::string run_dir;
  std::optional<std::uint64_t> control_seed;
  bool include_output = false;
  bool exclude_bias = false;
  auto* analyze_cmd = app.add_subcommand("analyze", "subnetwork analysis of a trained run directory");
  analyze_cmd->add_option("--run", run_dir, "run directory written by train")->required();
  analyze_cmd->add_option("--control-seed", control_seed, "seed for the random control mask");
  analyze_cmd->add_flag("--include-output", include_output, "count the output weight in neuron magnitude");
  analyze_cmd->add_flag("--exclude-bias", exclude_bias, "leave the bias out of neuron magnitude");

  VerifyPlan plan;
  bool inject_flip = false;
  auto* verify_cmd = app.add_subcommand("verify", "check the hand-built parity networks");
  verify_cmd->add_option("--n-min", plan.n_min)->capture_default_str();
  verify_cmd->add_option("--n-max", plan.n_max, "at most 12 (exhaustive inputs)")->capture_default_str();
  verify_cmd->add_option("--trials", plan.random_index_sets, "random index sets per n above 6")->capture_default_str();
  verify_cmd->add_option("--k-max", plan.general_k_max, "largest k for the 2^k construction")->capture_default_str();
  verify_cmd->add_option("--seed", plan.seed)->capture_default_str();
  verify_cmd->add_flag("--inject-flip", inject_flip, "negate output weights (must fail)");

  CommonOptions sweep_opts;
  std::optional<std::size_t> seed_count;
  std::size_t jobs = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "train and analyze every seed of a preset, then summarize");
  add_common(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--seeds", seed_count, "number of seeds (preset default 5)");
  sweep_cmd->add_option("--jobs", jobs, "seeds trained concurrently")->capture_default_str();

  std::string summary_dir;
  auto* summarize_cmd = app.add_subcommand("summarize", "rebuild summary.json from a sweep directory");
  summarize_cmd->add_option("--out", summary_dir, "sweep output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      ExperimentPreset preset = resolve(train_opts);
      if (!config_seeds) preset.config.seeds = seeds_for(train_opts.master_seed, seed_index);
      const RunArtifacts run = train_into(preset.config, train_opts.out,
                                          quiet ? MetricsObserver{} : MetricsObserver{print_progress});
      if (run.aborted) {
        std::cerr << "run aborted: " << run.diagnostic << '\n';
        return 2;
      }
      return 0;
    }
    if (*analyze_cmd) {
      const AnalysisReport report = analyze_directory(run_dir, control_seed, {!exclude_bias, include_output});
      print_report(report);
      return 0;
    }
    if (*verify_cmd) {
      plan.negate_outputs = inject_flip;
      if (plan.n_max > 12 || plan.n_min < 1 || plan.n_min > plan.n_max) {
        std::cerr << "verify: need 1 <= n-min <= n-max <= 12\n";
        return 1;
      }
      const auto checks = verify_constructions(plan);
      std::printf("%-16s %4s %3s %10s %8s\n", "construction", "n", "k", "index sets", "status");
      std::size_t failures = 0;
      for (std::size_t i = 0; i < checks.size();) {
        std::size_t j = i;
        std::size_t bad = 0;
        while (j < checks.size() && checks[j].kind == checks[i].kind && checks[j].n == checks[i].n &&
               checks[j].k == checks[i].k) {
          if (!checks[j].result.ok) ++bad;
          ++j;
        }
        std::printf("%-16s %4zu %3zu %10zu %8s\n", to_string(checks[i].kind).c_str(), checks[i].n, checks[i].k, j - i,
                    bad == 0 ? "pass" : "FAIL");
        failures += bad;
        i = j;
      }
      for (const auto& c : checks) {
        if (c.result.ok) continue;
        std::string x;
        for (const double v : c.result.counterexample) x += v > 0 ? '+' : '-';
        std::printf("counterexample %s n=%zu k=%zu x=%s f=%g expected %+g\n", to_string(c.kind).c_str(), c.n, c.k,
                    x.c_str(), c.result.output, c.result.expected);
        break;
      }
      std::printf("%zu checks, %zu failed\n", checks.size(), failures);
      return failures == 0 ? 0 : 1;
    }
    if (*sweep_cmd) {
      ExperimentPreset preset = resolve(sweep_opts);
      if (seed_count) preset.seed_count = *seed_count;
      std::filesystem::create_directories(sweep_opts.out);
      write_text_file((std::filesystem::path(sweep_opts.out) / "sweep.txt").string(),
                      "preset = " + preset.name + "\nmaster_seed = " + std::to_string(sweep_opts.master_seed) +
                          "\nseeds = " + std::to_string(preset.seed_count) + "\n");
      const ExperimentResult result =
          run_experiment(preset, sweep_opts.out, sweep_opts.master_seed, jobs, [](const std::string& line) {
            std::cout << line << std::endl;
          });
      std::cout << result.summary.dump(2) << '\n';
      for (const auto& f : result.failures) std::cerr << "failed: " << f << '\n';
      return result.all_ok ? 0 : 2;
    }
    if (*summarize_cmd) {
      const std::filesystem::path dir(summary_dir);
      std::string preset = "custom";
      std::uint64_t master = 0;
      std::size_t seeds = 0;
      std::istringstream meta(read_text_file((dir / "sweep.txt").string()));
      std::string key, eq, value;
      while (meta >> key >> eq >> value) {
        if (key == "preset") preset = value;
        if (key == "master_seed") master = std::stoull(value);
        if (key == "seeds") seeds = std::stoull(value);
      }
      std::cout << summarize(dir, preset, master, seeds).dump(2) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
