#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "grokking/metrics.hpp"
#include "grokking/subnet_analysis.hpp"
#include "grokking/trainer.hpp"

namespace grokking {

struct SubnetRow {
  std::uint64_t step = 0;
  MaskLabel label = MaskLabel::custom;
  double mean_norm = 0.0;
  double faithfulness = 0.0;
};

struct NeuronTrace {
  std::size_t neuron_index = 0;
  bool in_memorization_mask = false;
  bool in_generalizing_mask = false;
  std::vector<std::pair<std::uint64_t, double>> norms;
};

struct OverlapStats {
  std::size_t memorization_size = 0;
  std::size_t generalizing_size = 0;
  std::size_t intersection = 0;
  double jaccard = 0.0;
};

inline OverlapStats mask_overlap(const NeuronMask& memorization, const NeuronMask& generalizing) {
  OverlapStats s;
  s.memorization_size = memorization.size();
  s.generalizing_size = generalizing.size();
  for (const std::size_t i : memorization.selected) {
    if (generalizing.contains(i)) ++s.intersection;
  }
  const std::size_t uni = s.memorization_size + s.generalizing_size - s.intersection;
  s.jaccard = uni == 0 ? 0.0 : static_cast<double>(s.intersection) / static_cast<double>(uni);
  return s;
}

struct AnalysisReport {
  std::uint64_t final_step = 0;
  NeuronMask generalizing;
  NeuronMask complementary;
  std::optional<NeuronMask> control;  // absent when too few neurons remain
  std::optional<std::uint64_t> memorization_step;
  std::optional<NeuronMask> memorization;
  std::optional<OverlapStats> overlap;
  std::vector<std::pair<std::uint64_t, std::size_t>> sparsity;
  std::vector<SubnetRow> subnets;
  std::vector<NeuronTrace> neurons;
  std::vector<MetricsRecord> metrics;  // run metrics with effective_sparsity filled

  const SubnetRow* subnet_at(std::uint64_t step, MaskLabel label) const {
    for (const auto& row : subnets) {
      if (row.step == step && row.label == label) return &row;
    }
    return nullptr;
  }
};

/// Post-hoc analysis of a finished run: the final active subnetwork on the
/// training inputs defines the generalizing mask; every checkpoint then gets
/// its effective sparsity plus norm and test-set faithfulness for the
/// generalizing, complementary and control masks, and per-neuron norm traces
/// follow the memorization-epoch and generalizing neurons.
inline AnalysisReport analyze_run(const RunArtifacts& run, std::span<const double> train_inputs,
                                  std::span<const double> test_inputs, std::uint64_t control_seed,
                                  MagnitudeOptions opts = {}) {
  if (run.checkpoint_steps.size() < 2) {
    throw std::invalid_argument("analyze_run: need at least two checkpoints");
  }
  AnalysisReport report;
  report.final_step = run.checkpoint_steps.back();
  const MlpParams final_params = run.checkpoint(report.final_step);
  const std::size_t p = final_params.p;

  report.generalizing = active_subnetwork(final_params, train_inputs, opts).mask;
  report.generalizing.label = MaskLabel::generalizing;
  report.complementary = complement_mask(report.generalizing, p);
  if (!report.generalizing.selected.empty() && 2 * report.generalizing.size() <= p) {
    report.control = control_mask(report.generalizing.size(), p, control_seed, report.generalizing);
  }

  try {
    report.memorization_step = memorization_epoch(run.metrics);
  } catch (const NeverMemorized&) {
  }
  if (report.memorization_step) {
    report.memorization = active_subnetwork(run.checkpoint(*report.memorization_step), train_inputs, opts).mask;
    report.memorization->label = MaskLabel::memorization;
    report.overlap = mask_overlap(*report.memorization, report.generalizing);
  }

  std::vector<std::size_t> traced = report.generalizing.selected;
  if (report.memorization) {
    traced.insert(traced.end(), report.memorization->selected.begin(), report.memorization->selected.end());
  }
  std::sort(traced.begin(), traced.end());
  traced.erase(std::unique(traced.begin(), traced.end()), traced.end());
  for (const std::size_t i : traced) {
    report.neurons.push_back(NeuronTrace{i, report.memorization && report.memorization->contains(i),
                                         report.generalizing.contains(i), {}});
  }

  std::vector<const NeuronMask*> masks = {&report.generalizing, &report.complementary};
  if (report.control) masks.push_back(&*report.control);

  report.metrics = run.metrics;
  for (std::size_t c = 0; c < run.checkpoint_steps.size(); ++c) {
    const std::uint64_t step = run.checkpoint_steps[c];
    const MlpParams params = step == report.final_step ? final_params : run.checkpoint(step);
    const std::size_t sparsity = effective_sparsity(params, train_inputs, opts);
    report.sparsity.emplace_back(step, sparsity);
    for (auto& r : report.metrics) {
      if (r.step == step) r.effective_sparsity = sparsity;
    }
    for (const NeuronMask* mask : masks) {
      if (mask->selected.empty()) continue;
      report.subnets.push_back(
          SubnetRow{step, mask->label, mask_norm(params, *mask, opts), faithfulness(params, *mask, test_inputs)});
    }
    for (auto& trace : report.neurons) {
      trace.norms.emplace_back(step, neuron_magnitude(params, trace.neuron_index, opts));
    }
  }
  return report;
}

inline std::string sparsity_csv(const AnalysisReport& report) {
  std::string out = "step,effective_sparsity\n";
  for (const auto& [step, k] : report.sparsity) out += std::to_string(step) + ',' + std::to_string(k) + '\n';
  return out;
}

inline std::string subnets_csv(const AnalysisReport& report) {
  using detail::format_double;
  std::string out = "step,mask_label,mean_norm,faithfulness\n";
  for (const auto& r : report.subnets) {
    out += std::to_string(r.step) + ',' + to_string(r.label) + ',' + format_double(r.mean_norm) + ',' +
           format_double(r.faithfulness) + '\n';
  }
  return out;
}

inline std::string neurons_csv(const AnalysisReport& report) {
  std::string out = "step,neuron_index,norm,in_memorization_mask,in_generalizing_mask\n";
  if (report.neurons.empty()) return out;
  const std::size_t steps = report.neurons.front().norms.size();
  for (std::size_t s = 0; s < steps; ++s) {
    for (const auto& t : report.neurons) {
      out += std::to_string(t.norms[s].first) + ',' + std::to_string(t.neuron_index) + ',' +
             detail::format_double(t.norms[s].second) + ',' + (t.in_memorization_mask ? "1" : "0") + ',' +
             (t.in_generalizing_mask ? "1" : "0") + '\n';
    }
  }
  return out;
}

inline nlohmann::json overlap_json(const AnalysisReport& report) {
  nlohmann::json j;
  j["final_step"] = report.final_step;
  j["generalizing_size"] = report.generalizing.size();
  j["generalizing_neurons"] = report.generalizing.selected;
  if (report.memorization_step) {
    j["memorization_step"] = *report.memorization_step;
    j["memorization_size"] = report.overlap->memorization_size;
    j["intersection"] = report.overlap->intersection;
    j["jaccard"] = report.overlap->jaccard;
  } else {
    j["memorization_step"] = nullptr;
  }
  return j;
}

/// Writes sparsity.csv, subnets.csv, neurons.csv and overlap.json into `dir`.
inline void write_analysis(const AnalysisReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file((dir / "sparsity.csv").string(), sparsity_csv(report));
  write_text_file((dir / "subnets.csv").string(), subnets_csv(report));
  write_text_file((dir / "neurons.csv").string(), neurons_csv(report));
  write_text_file((dir / "overlap.json").string(), overlap_json(report).dump(2) + "\n");
}

}  // namespace grokking
