#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "grokking/analysis.hpp"
#include "grokking/config.hpp"
#include "grokking/constructions.hpp"
#include "grokking/parity_task.hpp"
#include "grokking/rng.hpp"
#include "grokking/trainer.hpp"

namespace grokking {

namespace fs = std::filesystem;

struct ExperimentPreset {
  std::string name = "default";
  TrainConfig config;
  std::size_t seed_count = 5;
};

/// default: (40,3)-parity, N=1000, p=1000, eta=0.1, lambda=0.01, B=32.
/// low-decay: lambda=0.001. k4: k=4.
inline ExperimentPreset preset_by_name(const std::string& name) {
  ExperimentPreset preset;
  preset.name = name;
  if (name == "default" || name == "custom") {
  } else if (name == "low-decay") {
    preset.config.lambda = 0.001;
  } else if (name == "k4") {
    preset.config.k = 4;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "' (expected default, low-decay, k4 or custom)");
  }
  return preset;
}

// Per-seed streams for derive_seed(master, seed_index, stream). The test set
// uses a fixed index so every seed of a sweep shares it.
inline constexpr std::uint64_t kTaskStream = 1;
inline constexpr std::uint64_t kDataStream = 2;
inline constexpr std::uint64_t kInitStream = 3;
inline constexpr std::uint64_t kShuffleStream = 4;
inline constexpr std::uint64_t kTestStream = 5;
inline constexpr std::uint64_t kControlStream = 6;
inline constexpr std::uint64_t kSharedIndex = ~std::uint64_t{0};

inline SeedSet seeds_for(std::uint64_t master, std::uint64_t seed_index) {
  return SeedSet{derive_seed(master, seed_index, kTaskStream), derive_seed(master, seed_index, kDataStream),
                 derive_seed(master, seed_index, kInitStream), derive_seed(master, seed_index, kShuffleStream),
                 derive_seed(master, kSharedIndex, kTestStream)};
}

inline std::uint64_t control_seed_for(const TrainConfig& config) {
  return derive_seed(config.seeds.init, config.seeds.shuffle, kControlStream);
}

/// First scheduled step with test accuracy >= 0.99.
inline std::optional<std::uint64_t> grok_step(std::span<const MetricsRecord> metrics) {
  for (const auto& r : metrics) {
    if (r.test_accuracy >= 0.99) return r.step;
  }
  return std::nullopt;
}

/// A run directory on disk: config.txt, train.data, test.data, metrics.csv,
/// ckpt/<step>.bin, the analysis files, and DONE once analysis finished.
struct RunDirectory {
  fs::path root;

  fs::path config() const { return root / "config.txt"; }
  fs::path train_data() const { return root / "train.data"; }
  fs::path test_data() const { return root / "test.data"; }
  fs::path metrics() const { return root / "metrics.csv"; }
  fs::path checkpoints() const { return root / "ckpt"; }
  fs::path done_marker() const { return root / "DONE"; }
  fs::path abort_marker() const { return root / "ABORTED"; }
};

/// Trains one configuration into `dir`: writes config, datasets, checkpoints
/// and metrics.csv (effective sparsity still empty).
inline RunArtifacts train_into(const TrainConfig& config, const fs::path& dir, const MetricsObserver& observer = {}) {
  const RunDirectory rd{dir};
  fs::create_directories(dir);
  fs::remove(rd.done_marker());
  fs::remove(rd.abort_marker());
  fs::remove_all(rd.checkpoints());
  write_text_file(rd.config().string(), serialize_config(config));
  const auto [train_set, test_set] = make_datasets(config);
  save_dataset(train_set, rd.train_data().string());
  save_dataset(test_set, rd.test_data().string());
  auto store = std::make_shared<DirectoryCheckpointStore>(rd.checkpoints(), config_hash(config));
  RunArtifacts run = train(config, train_set, test_set, store, observer);
  write_text_file(rd.metrics().string(), metrics_csv(run.metrics));
  if (run.aborted) {
    write_text_file(rd.abort_marker().string(), run.diagnostic + "\n");
  }
  return run;
}

/// Reloads a trained run directory. Checkpoints stay on disk.
inline RunArtifacts load_run(const fs::path& dir) {
  const RunDirectory rd{dir};
  RunArtifacts run;
  run.config = load_config(rd.config().string());
  run.metrics = parse_metrics_csv(read_text_file(rd.metrics().string()));
  const std::uint64_t hash = config_hash(run.config);
  auto store = std::make_shared<DirectoryCheckpointStore>(rd.checkpoints(), hash);
  for (const auto& r : run.metrics) {
    if (!fs::exists(store->path_for(r.step))) {
      throw std::runtime_error("missing checkpoint for step " + std::to_string(r.step) + " in " + dir.string());
    }
    run.checkpoint_steps.push_back(r.step);
  }
  run.store = store;
  if (fs::exists(rd.abort_marker())) {
    run.aborted = true;
    run.diagnostic = read_text_file(rd.abort_marker().string());
  }
  return run;
}

/// Runs analyze_run on a trained directory, writes the analysis files, fills
/// the effective_sparsity column of metrics.csv and drops the DONE marker.
inline AnalysisReport analyze_directory(const fs::path& dir, std::optional<std::uint64_t> control_seed = {},
                                        MagnitudeOptions opts = {}) {
  const RunDirectory rd{dir};
  const RunArtifacts run = load_run(dir);
  const Dataset train_set = load_dataset(rd.train_data().string());
  const Dataset test_set = load_dataset(rd.test_data().string());
  AnalysisReport report =
      analyze_run(run, train_set.inputs, test_set.inputs, control_seed.value_or(control_seed_for(run.config)), opts);
  write_analysis(report, dir);
  write_text_file(rd.metrics().string(), metrics_csv(report.metrics));
  if (!run.aborted) write_text_file(rd.done_marker().string(), "");
  return report;
}

struct SeedOutcome {
  std::size_t seed_index = 0;
  std::string directory;
  SeedSet seeds;
  bool aborted = false;
  std::uint64_t final_step = 0;
  double final_train_accuracy = 0.0;
  double final_test_accuracy = 0.0;
  std::size_t final_effective_sparsity = 0;
  std::optional<std::uint64_t> memorization_step;
  std::optional<std::uint64_t> grok_step;
  std::string classification;
  std::optional<double> jaccard;
  std::optional<std::size_t> intersection;
};

inline std::string seed_directory_name(std::size_t index) { return "seed_" + std::to_string(index); }

/// Reads back the per-seed outcome from a completed (or aborted) directory.
inline SeedOutcome read_outcome(const fs::path& dir, std::size_t index) {
  const RunDirectory rd{dir};
  SeedOutcome o;
  o.seed_index = index;
  o.directory = dir.filename().string();
  const TrainConfig config = load_config(rd.config().string());
  o.seeds = config.seeds;
  o.aborted = fs::exists(rd.abort_marker());
  const auto metrics = parse_metrics_csv(read_text_file(rd.metrics().string()));
  if (metrics.empty()) return o;
  const auto& last = metrics.back();
  o.final_step = last.step;
  o.final_train_accuracy = last.train_accuracy;
  o.final_test_accuracy = last.test_accuracy;
  o.final_effective_sparsity = last.effective_sparsity.value_or(0);
  try {
    o.memorization_step = memorization_epoch(metrics);
  } catch (const NeverMemorized&) {
  }
  o.grok_step = grok_step(metrics);
  o.classification = classify_circuit(o.final_effective_sparsity, config.k);
  const fs::path overlap = dir / "overlap.json";
  if (fs::exists(overlap)) {
    const auto j = nlohmann::json::parse(read_text_file(overlap.string()));
    if (j.contains("jaccard")) {
      o.jaccard = j["jaccard"].get<double>();
      o.intersection = j["intersection"].get<std::size_t>();
    }
  }
  return o;
}

inline nlohmann::json outcome_json(const SeedOutcome& o) {
  nlohmann::json j;
  j["seed_index"] = o.seed_index;
  j["directory"] = o.directory;
  j["seeds"] = {{"task", o.seeds.task}, {"data", o.seeds.data}, {"init", o.seeds.init},
                {"shuffle", o.seeds.shuffle}, {"test", o.seeds.test}};
  j["aborted"] = o.aborted;
  j["final_step"] = o.final_step;
  j["final_train_accuracy"] = o.final_train_accuracy;
  j["final_test_accuracy"] = o.final_test_accuracy;
  j["final_effective_sparsity"] = o.final_effective_sparsity;
  j["memorization_step"] = o.memorization_step ? nlohmann::json(*o.memorization_step) : nlohmann::json(nullptr);
  j["grok_step"] = o.grok_step ? nlohmann::json(*o.grok_step) : nlohmann::json(nullptr);
  j["classification"] = o.classification;
  j["memorization_generalizing_jaccard"] = o.jaccard ? nlohmann::json(*o.jaccard) : nlohmann::json(nullptr);
  j["memorization_generalizing_intersection"] =
      o.intersection ? nlohmann::json(*o.intersection) : nlohmann::json(nullptr);
  return j;
}

/// Aggregates every seed_<i> directory under `out_dir` into summary.json.
inline nlohmann::json summarize(const fs::path& out_dir, const std::string& preset_name, std::uint64_t master_seed,
                                std::size_t seed_count) {
  nlohmann::json summary;
  summary["preset"] = preset_name;
  summary["master_seed"] = master_seed;
  summary["seed_count"] = seed_count;
  nlohmann::json seeds = nlohmann::json::array();
  std::vector<std::size_t> sparsities;
  for (std::size_t i = 0; i < seed_count; ++i) {
    const fs::path dir = out_dir / seed_directory_name(i);
    if (!fs::exists(RunDirectory{dir}.metrics())) continue;
    const SeedOutcome o = read_outcome(dir, i);
    seeds.push_back(outcome_json(o));
    if (!o.aborted) sparsities.push_back(o.final_effective_sparsity);
  }
  summary["seeds"] = seeds;
  summary["final_effective_sparsities"] = sparsities;
  if (!sparsities.empty()) {
    auto sorted = sparsities;
    std::sort(sorted.begin(), sorted.end());
    summary["median_final_effective_sparsity"] = sorted[sorted.size() / 2];
  }
  write_text_file((out_dir / "summary.json").string(), summary.dump(2) + "\n");
  return summary;
}

struct ExperimentResult {
  nlohmann::json summary;
  bool all_ok = true;
  std::vector<std::string> failures;
};

/// Trains and analyzes every seed of a preset under `out_dir`, then writes
/// summary.json. Seed directories that already carry DONE are left alone.
inline ExperimentResult run_experiment(const ExperimentPreset& preset, const fs::path& out_dir,
                                       std::uint64_t master_seed, std::size_t jobs = 1,
                                       const std::function<void(const std::string&)>& log = {}) {
  fs::create_directories(out_dir);
  ExperimentResult result;
  std::mutex mu;
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (std::size_t i = next++; i < preset.seed_count; i = next++) {
      const fs::path dir = out_dir / seed_directory_name(i);
      try {
        if (fs::exists(RunDirectory{dir}.done_marker())) {
          if (log) {
            std::lock_guard lock(mu);
            log(dir.string() + ": already complete, skipping");
          }
          continue;
        }
        TrainConfig config = preset.config;
        config.seeds = seeds_for(master_seed, i);
        const RunArtifacts run = train_into(config, dir);
        analyze_directory(dir);
        std::lock_guard lock(mu);
        if (run.aborted) {
          result.all_ok = false;
          result.failures.push_back(dir.string() + ": " + run.diagnostic);
        }
        if (log) log(dir.string() + ": finished at step " + std::to_string(run.checkpoint_steps.back()));
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        result.all_ok = false;
        result.failures.push_back(dir.string() + ": " + e.what());
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::max<std::size_t>(1, jobs); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  result.summary = summarize(out_dir, preset.name, master_seed, preset.seed_count);
  return result;
}

struct ConstructionCheck {
  ConstructionKind kind;
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::size_t> indices;
  VerifyResult result;
};

/// Index sets to check for a given n: every S when n <= max_exhaustive_n,
/// otherwise `samples` random ones.
inline std::vector<std::vector<std::size_t>> index_sets(std::size_t n, std::size_t k, std::size_t max_exhaustive_n,
                                                        std::size_t samples, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> out;
  if (n <= max_exhaustive_n) {
    for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << n); ++bits) {
      if (static_cast<std::size_t>(std::popcount(bits)) != k) continue;
      std::vector<std::size_t> s;
      for (std::size_t i = 0; i < n; ++i) {
        if ((bits >> i) & 1u) s.push_back(i);
      }
      out.push_back(std::move(s));
    }
    return out;
  }
  for (std::size_t r = 0; r < samples; ++r) {
    out.push_back(generate_task(n, k, derive_seed(seed, n * 64 + k, r)).indices);
  }
  return out;
}

struct VerifyPlan {
  std::size_t n_min = 3;
  std::size_t n_max = 12;
  std::size_t every_index_set_up_to = 6;
  std::size_t random_index_sets = 20;
  std::size_t general_k_max = 5;
  std::uint64_t seed = 0;
  bool negate_outputs = false;  // sign-flip fixture; every check must then fail
};

/// Exhaustively verifies the three constructions across input sizes: the
/// 6- and 4-neuron networks at k = 3, the 2^k network for k = 1..general_k_max.
inline std::vector<ConstructionCheck> verify_constructions(const VerifyPlan& plan) {
  std::vector<ConstructionCheck> checks;
  auto run = [&](ConstructionKind kind, std::size_t n, std::size_t k) {
    for (auto& s : index_sets(n, k, plan.every_index_set_up_to, plan.random_index_sets, plan.seed)) {
      MlpParams net = build_construction(kind, n, s);
      if (plan.negate_outputs) {
        for (auto& u : net.u) u = -u;
      }
      VerifyOptions opts;
      opts.exhaustive = n <= 12;
      opts.seed = plan.seed;
      checks.push_back(ConstructionCheck{kind, n, k, s, verify_parity_net(net, n, s, opts)});
    }
  };
  for (std::size_t n = plan.n_min; n <= plan.n_max; ++n) {
    for (std::size_t k = 1; k <= std::min(plan.general_k_max, n); ++k) run(ConstructionKind::dnf_general, n, k);
    if (n >= 3) {
      run(ConstructionKind::dnf_six, n, 3);
      run(ConstructionKind::threshold_four, n, 3);
    }
  }
  return checks;
}

}  // namespace grokking
