#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grokking/metrics.hpp"
#include "grokking/mlp.hpp"
#include "grokking/rng.hpp"

namespace grokking {

/// Which parameters count towards a hidden neuron's magnitude. The default is
/// the incoming row plus bias.
struct MagnitudeOptions {
  bool include_bias = true;
  bool include_output = false;
};

enum class MaskLabel { generalizing, complementary, control, memorization, custom };

inline std::string to_string(MaskLabel label) {
  switch (label) {
    case MaskLabel::generalizing: return "generalizing";
    case MaskLabel::complementary: return "complementary";
    case MaskLabel::control: return "control";
    case MaskLabel::memorization: return "memorization";
    case MaskLabel::custom: return "custom";
  }
  return "custom";
}

/// A set of hidden-neuron indices, kept sorted.
struct NeuronMask {
  std::vector<std::size_t> selected;
  MaskLabel label = MaskLabel::custom;

  std::size_t size() const { return selected.size(); }
  bool contains(std::size_t i) const { return std::binary_search(selected.begin(), selected.end(), i); }
};

inline NeuronMask make_mask(std::vector<std::size_t> indices, std::size_t p, MaskLabel label = MaskLabel::custom) {
  std::sort(indices.begin(), indices.end());
  if (std::adjacent_find(indices.begin(), indices.end()) != indices.end() ||
      (!indices.empty() && indices.back() >= p)) {
    throw std::invalid_argument("mask: indices must be distinct and < p");
  }
  return NeuronMask{std::move(indices), label};
}

inline NeuronMask full_mask(std::size_t p, MaskLabel label = MaskLabel::custom) {
  std::vector<std::size_t> all(p);
  std::iota(all.begin(), all.end(), std::size_t{0});
  return NeuronMask{std::move(all), label};
}

inline NeuronMask complement_mask(const NeuronMask& mask, std::size_t p, MaskLabel label = MaskLabel::complementary) {
  NeuronMask out{{}, label};
  for (std::size_t i = 0; i < p; ++i) {
    if (!mask.contains(i)) out.selected.push_back(i);
  }
  return out;
}

inline double neuron_magnitude(const MlpParams& params, std::size_t i, MagnitudeOptions opts = {}) {
  if (i >= params.p) {
    throw std::out_of_range("neuron_magnitude: neuron index out of range");
  }
  double sq = 0.0;
  for (const double w : params.row(i)) sq += w * w;
  if (opts.include_bias) sq += params.b[i] * params.b[i];
  if (opts.include_output) sq += params.u[i] * params.u[i];
  return std::sqrt(sq);
}

inline std::vector<double> neuron_magnitudes(const MlpParams& params, MagnitudeOptions opts = {}) {
  std::vector<double> out(params.p);
  for (std::size_t i = 0; i < params.p; ++i) out[i] = neuron_magnitude(params, i, opts);
  return out;
}

/// Neurons in the order they are pruned: ascending magnitude, lower index
/// first among equal magnitudes.
inline std::vector<std::size_t> prune_order(const MlpParams& params, MagnitudeOptions opts = {}) {
  const auto mags = neuron_magnitudes(params, opts);
  std::vector<std::size_t> order(params.p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mags[a] < mags[b]; });
  return order;
}

/// Keeps only the neurons in `mask` by zeroing every other output weight.
inline MlpParams restrict_to(const MlpParams& params, const NeuronMask& mask) {
  MlpParams out = params;
  for (std::size_t i = 0; i < out.p; ++i) {
    if (!mask.contains(i)) out.u[i] = 0.0;
  }
  return out;
}

/// Keeps the k largest-magnitude neurons; the p - k others get u_i = 0.
inline MlpParams prune_to_k(const MlpParams& params, std::size_t k, MagnitudeOptions opts = {}) {
  if (k > params.p) {
    throw std::invalid_argument("prune_to_k: k exceeds hidden width");
  }
  MlpParams out = params;
  const auto order = prune_order(params, opts);
  for (std::size_t r = 0; r < params.p - k; ++r) out.u[order[r]] = 0.0;
  return out;
}

inline std::vector<double> predictions(const MlpParams& params, std::span<const double> inputs) {
  const std::size_t rows = inputs.size() / params.n;
  std::vector<double> out(rows);
  for (std::size_t j = 0; j < rows; ++j) out[j] = predict(params, inputs.subspan(j * params.n, params.n));
  return out;
}

struct ActiveSubnetwork {
  std::size_t k_min = 0;
  NeuronMask mask;
};

/// Smallest k whose pruned network f_k predicts the same sign as the full
/// network on every row of `inputs` (row-major, params.n columns).
///
/// Neurons are added in descending magnitude order while a running sum of
/// contributions is kept per input, so the scan over all k costs one pass
/// over the hidden layer. Every k is tested; agreement need not be monotone.
inline ActiveSubnetwork active_subnetwork(const MlpParams& params, std::span<const double> inputs,
                                          MagnitudeOptions opts = {}) {
  const std::size_t rows = inputs.size() / params.n;
  if (rows == 0 || inputs.size() % params.n != 0) {
    throw std::invalid_argument("active_subnetwork: need a non-empty input matrix with n columns");
  }
  const auto reference = predictions(params, inputs);
  auto order = prune_order(params, opts);
  std::reverse(order.begin(), order.end());  // keep order

  std::vector<double> partial(rows, 0.0);
  std::size_t mismatches = 0;
  for (std::size_t j = 0; j < rows; ++j) {
    if (sign_of(0.0) != reference[j]) ++mismatches;
  }
  std::size_t k = 0;
  while (mismatches > 0 && k < params.p) {
    const std::size_t i = order[k];
    ++k;
    if (params.u[i] == 0.0) continue;
    for (std::size_t j = 0; j < rows; ++j) {
      const double z = pre_activation(params, i, inputs.subspan(j * params.n, params.n));
      if (z <= 0.0) continue;
      const bool before = sign_of(partial[j]) == reference[j];
      partial[j] += params.u[i] * z;
      const bool after = sign_of(partial[j]) == reference[j];
      if (before && !after) ++mismatches;
      if (!before && after) --mismatches;
    }
  }
  // Summation order can differ from forward() by rounding; f_p == f exactly.
  if (mismatches > 0) k = params.p;
  std::vector<std::size_t> kept(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(kept.begin(), kept.end());
  return ActiveSubnetwork{k, NeuronMask{std::move(kept), MaskLabel::generalizing}};
}

inline std::size_t effective_sparsity(const MlpParams& params, std::span<const double> inputs,
                                      MagnitudeOptions opts = {}) {
  return active_subnetwork(params, inputs, opts).k_min;
}

/// Mean neuron magnitude over the mask.
inline double mask_norm(const MlpParams& params, const NeuronMask& mask, MagnitudeOptions opts = {}) {
  if (mask.selected.empty()) {
    throw std::invalid_argument("mask_norm: empty mask");
  }
  double total = 0.0;
  for (const std::size_t i : mask.selected) total += neuron_magnitude(params, i, opts);
  return total / static_cast<double>(mask.size());
}

/// Fraction of inputs on which the mask-only network predicts the same sign
/// as the full network.
inline double faithfulness(const MlpParams& params, const NeuronMask& mask, std::span<const double> inputs) {
  const std::size_t rows = inputs.size() / params.n;
  if (rows == 0) {
    throw std::invalid_argument("faithfulness: empty input set");
  }
  const MlpParams sub = restrict_to(params, mask);
  std::size_t agree = 0;
  for (std::size_t j = 0; j < rows; ++j) {
    const auto x = inputs.subspan(j * params.n, params.n);
    if (predict(sub, x) == predict(params, x)) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(rows);
}

/// Uniformly random `size` neurons from [0, p) avoiding `exclude`.
inline NeuronMask control_mask(std::size_t size, std::size_t p, std::uint64_t seed, const NeuronMask& exclude) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < p; ++i) {
    if (!exclude.contains(i)) eligible.push_back(i);
  }
  if (size > eligible.size()) {
    throw std::invalid_argument("control_mask: not enough neurons outside the excluded set");
  }
  Rng rng(seed);
  return NeuronMask{sample_subset(std::move(eligible), size, rng), MaskLabel::control};
}

struct NeverMemorized : std::runtime_error {
  NeverMemorized() : std::runtime_error("train accuracy never exceeded 0.98") {}
};

/// First scheduled step whose train accuracy strictly exceeds 0.98.
inline std::uint64_t memorization_epoch(std::span<const MetricsRecord> metrics) {
  if (metrics.empty()) {
    throw std::invalid_argument("memorization_epoch: no metrics");
  }
  for (const auto& r : metrics) {
    if (r.train_accuracy > 0.98) return r.step;
  }
  throw NeverMemorized();
}

}  // namespace grokking
