#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "grokking/config.hpp"
#include "grokking/metrics.hpp"
#include "grokking/mlp.hpp"
#include "grokking/parity_task.hpp"
#include "grokking/subnet_analysis.hpp"

namespace grokking {

inline constexpr std::uint64_t kDenseCap = 1000;

/// Checkpoint steps: every step up to min(dense_until, kDenseCap), then
/// round(ratio^i) up to max_steps. Always holds 0 and max_steps; sorted and
/// free of duplicates.
inline std::vector<std::uint64_t> checkpoint_schedule(std::uint64_t max_steps, std::uint64_t dense_until = 50,
                                                      double ratio = 1.1) {
  if (max_steps == 0 || !(ratio > 1.0)) {
    throw std::invalid_argument("checkpoint_schedule: need max_steps >= 1 and ratio > 1");
  }
  std::vector<std::uint64_t> steps;
  const std::uint64_t dense = std::min({dense_until, kDenseCap, max_steps});
  for (std::uint64_t s = 0; s <= dense; ++s) steps.push_back(s);
  for (double g = 1.0; g < static_cast<double>(max_steps); g *= ratio) {
    steps.push_back(static_cast<std::uint64_t>(std::llround(g)));
  }
  steps.push_back(max_steps);
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  while (steps.back() > max_steps) steps.pop_back();
  return steps;
}

struct Evaluation {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

inline Evaluation evaluate(const MlpParams& params, const Dataset& data) {
  if (data.size() == 0) {
    throw std::invalid_argument("evaluate: empty dataset");
  }
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const double f = forward(params, data.row(j));
    if (sign_of(f) == data.labels[j]) ++correct;
    loss += hinge_loss(f, data.labels[j]);
  }
  const auto count = static_cast<double>(data.size());
  return {static_cast<double>(correct) / count, loss / count};
}

/// Where checkpoints go. The trainer only writes; analysis reads them back.
class CheckpointStore {
public:
  virtual ~CheckpointStore() = default;
  virtual void put(std::uint64_t step, const MlpParams& params) = 0;
  virtual MlpParams get(std::uint64_t step) const = 0;
};

class MemoryCheckpointStore final : public CheckpointStore {
public:
  void put(std::uint64_t step, const MlpParams& params) override { saved_[step] = params; }
  MlpParams get(std::uint64_t step) const override {
    const auto it = saved_.find(step);
    if (it == saved_.end()) {
      throw std::runtime_error("no checkpoint at step " + std::to_string(step));
    }
    return it->second;
  }

private:
  std::map<std::uint64_t, MlpParams> saved_;
};

/// Files `<dir>/<step>.bin` in the binary checkpoint format.
class DirectoryCheckpointStore final : public CheckpointStore {
public:
  DirectoryCheckpointStore(std::filesystem::path dir, std::uint64_t config_hash)
      : dir_(std::move(dir)), hash_(config_hash) {
    std::filesystem::create_directories(dir_);
  }

  std::string path_for(std::uint64_t step) const { return (dir_ / (std::to_string(step) + ".bin")).string(); }

  void put(std::uint64_t step, const MlpParams& params) override {
    save_checkpoint(Checkpoint{step, hash_, params}, path_for(step));
  }
  MlpParams get(std::uint64_t step) const override { return load_checkpoint(path_for(step)).params; }

private:
  std::filesystem::path dir_;
  std::uint64_t hash_;
};

struct RunArtifacts {
  TrainConfig config;
  std::vector<std::uint64_t> checkpoint_steps;
  std::vector<MetricsRecord> metrics;
  bool aborted = false;
  std::string diagnostic;
  std::shared_ptr<CheckpointStore> store;

  MlpParams checkpoint(std::uint64_t step) const { return store->get(step); }
};

/// Test accuracy 1.0 with unchanged effective sparsity over this many
/// consecutive scheduled checkpoints ends the run.
inline constexpr std::size_t kEarlyStopWindow = 3;

/// Optional per-checkpoint observer, e.g. for progress output.
using MetricsObserver = std::function<void(const MetricsRecord&)>;

/// Deterministic mini-batch SGD on the hinge loss. Batches come from a fresh
/// shuffle of the training set every epoch; the last partial batch is used.
inline RunArtifacts train(const TrainConfig& config, const Dataset& train_set, const Dataset& test_set,
                          std::shared_ptr<CheckpointStore> store = std::make_shared<MemoryCheckpointStore>(),
                          const MetricsObserver& observer = {}) {
  validate_config(config);
  if (train_set.n != config.n || test_set.n != config.n || train_set.size() == 0 || test_set.size() == 0) {
    throw std::invalid_argument("train: datasets do not match the configured input dimension");
  }
  RunArtifacts run;
  run.config = config;
  run.store = std::move(store);

  MlpParams params = init_params(config.n, config.hidden, config.seeds.init);
  const auto schedule = checkpoint_schedule(config.max_steps, config.dense_until, config.schedule_ratio);
  const std::size_t samples = train_set.size();
  const std::size_t batches_per_epoch = (samples + config.batch_size - 1) / config.batch_size;

  Rng shuffle_rng(config.seeds.shuffle);
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> batch_inputs;
  std::vector<double> batch_labels;

  std::size_t next_checkpoint = 0;
  std::vector<std::size_t> stable_sparsity;

  // Returns false when training should stop.
  auto record = [&](std::uint64_t step) {
    const Evaluation tr = evaluate(params, train_set);
    const Evaluation te = evaluate(params, test_set);
    MetricsRecord r;
    r.step = step;
    r.epoch = static_cast<double>(step) / static_cast<double>(batches_per_epoch);
    r.train_accuracy = tr.accuracy;
    r.test_accuracy = te.accuracy;
    r.train_loss = tr.mean_loss;
    r.test_loss = te.mean_loss;
    r.param_norm = param_norm(params);
    run.metrics.push_back(r);
    run.checkpoint_steps.push_back(step);
    run.store->put(step, params);
    if (observer) observer(r);
    if (!std::isfinite(tr.mean_loss) || !std::isfinite(r.param_norm)) {
      run.aborted = true;
      run.diagnostic = "non-finite loss or parameters at step " + std::to_string(step);
      return false;
    }
    if (!config.early_stop) return true;
    if (te.accuracy < 1.0) {
      stable_sparsity.clear();
      return true;
    }
    const std::size_t sparsity = effective_sparsity(params, train_set.inputs);
    if (!stable_sparsity.empty() && stable_sparsity.back() != sparsity) stable_sparsity.clear();
    stable_sparsity.push_back(sparsity);
    return stable_sparsity.size() < kEarlyStopWindow;
  };

  std::uint64_t step = 0;
  if (schedule[next_checkpoint] == 0) {
    ++next_checkpoint;
    if (!record(0)) return run;
  }
  while (step < config.max_steps) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < samples && step < config.max_steps; start += config.batch_size) {
      const std::size_t end = std::min(samples, start + config.batch_size);
      batch_inputs.clear();
      batch_labels.clear();
      for (std::size_t r = start; r < end; ++r) {
        const auto x = train_set.row(order[r]);
        batch_inputs.insert(batch_inputs.end(), x.begin(), x.end());
        batch_labels.push_back(train_set.labels[order[r]]);
      }
      const Gradients grads = batch_gradient(params, batch_inputs, batch_labels);
      sgd_step_inplace(params, grads, config.eta, config.lambda, config.decay_mode);
      ++step;
      if (next_checkpoint < schedule.size() && schedule[next_checkpoint] == step) {
        ++next_checkpoint;
        if (!record(step)) return run;
      }
    }
  }
  return run;
}

/// Samples the training and test sets described by the config.
inline std::pair<Dataset, Dataset> make_datasets(const TrainConfig& config) {
  const ParityTask task = generate_task(config.n, config.k, config.seeds.task);
  return {sample_dataset(task, config.train_size, config.seeds.data),
          sample_dataset(task, config.test_size, config.seeds.test)};
}

}  // namespace grokking
