#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grokking/mlp.hpp"
#include "grokking/parity_task.hpp"
#include "grokking/rng.hpp"

namespace grokking {

// Hand-built one-hidden-layer ReLU networks that compute sparse parity.

enum class ConstructionKind { dnf_general, dnf_six, threshold_four };

inline std::string to_string(ConstructionKind kind) {
  switch (kind) {
    case ConstructionKind::dnf_general: return "dnf_general";
    case ConstructionKind::dnf_six: return "dnf_six";
    case ConstructionKind::threshold_four: return "threshold_four";
  }
  return "?";
}

constexpr std::size_t expected_neurons(ConstructionKind kind, std::size_t k) {
  switch (kind) {
    case ConstructionKind::dnf_general: return std::size_t{1} << k;
    case ConstructionKind::dnf_six: return 6;
    case ConstructionKind::threshold_four: return 4;
  }
  return 0;
}

inline constexpr std::size_t kMaxConstructionBits = 20;

/// One AND-gate neuron per configuration of the parity bits. For configuration
/// c (bit t set means bit S[t] is expected to be +1) the neuron has weight +-1
/// on each parity bit and bias -(k-1): its pre-activation is 1 on a match and
/// at most -1 otherwise. The output weight is the parity of the configuration.
inline MlpParams build_dnf_general(std::size_t n, std::span<const std::size_t> indices) {
  const std::size_t k = indices.size();
  if (k == 0 || k > kMaxConstructionBits) {
    throw std::invalid_argument("build_dnf_general: need 1 <= k <= 20");
  }
  validate_task(ParityTask{n, k, {indices.begin(), indices.end()}});
  const std::size_t p = std::size_t{1} << k;
  MlpParams params(n, p);
  for (std::size_t c = 0; c < p; ++c) {
    double parity = 1.0;
    for (std::size_t t = 0; t < k; ++t) {
      const double expected = ((c >> t) & 1u) ? 1.0 : -1.0;
      params.W[c * n + indices[t]] = expected;
      parity *= expected;
    }
    params.b[c] = -static_cast<double>(k - 1);
    params.u[c] = parity;
  }
  return params;
}

namespace detail {
inline void require_three(std::size_t n, std::span<const std::size_t> indices, const char* who) {
  if (indices.size() != 3) {
    throw std::invalid_argument(std::string(who) + ": needs exactly 3 parity indices");
  }
  validate_task(ParityTask{n, 3, {indices.begin(), indices.end()}});
}
}  // namespace detail

/// The compact 6-neuron network for (n, 3)-parity.
inline MlpParams build_dnf_six(std::size_t n, std::span<const std::size_t> indices) {
  detail::require_three(n, indices, "build_dnf_six");
  // {w1, w2, w3, bias, output weight} per neuron
  static constexpr double kNeurons[6][5] = {
      {-1, -1, 10, -9, -1},  //
      {-1, -1, 1, -2, 10},   //
      {1, 1, 1, -2, 10},     //
      {1, -1, -10, -9, -1},  //
      {-1, 1, -1, -2, 10},   //
      {1, -1, -1, -2, 10},
  };
  MlpParams params(n, 6);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t t = 0; t < 3; ++t) params.W[i * n + indices[t]] = kNeurons[i][t];
    params.b[i] = kNeurons[i][3];
    params.u[i] = kNeurons[i][4];
  }
  return params;
}

/// The 4-neuron threshold network for (n, 3)-parity, with X the sum of the
/// parity bits: 1, relu(X - 1), relu(X + 1), relu(-X - 1) weighted
/// 1, 2, -1, -1. The constant unit is relu(0 . x + 1).
inline MlpParams build_threshold_four(std::size_t n, std::span<const std::size_t> indices) {
  detail::require_three(n, indices, "build_threshold_four");
  MlpParams params(n, 4);
  static constexpr double kSlope[4] = {0, 1, 1, -1};
  static constexpr double kBias[4] = {1, -1, 1, -1};
  static constexpr double kOut[4] = {1, 2, -1, -1};
  for (std::size_t i = 0; i < 4; ++i) {
    for (const std::size_t idx : indices) params.W[i * n + idx] = kSlope[i];
    params.b[i] = kBias[i];
    params.u[i] = kOut[i];
  }
  return params;
}

inline MlpParams build_construction(ConstructionKind kind, std::size_t n, std::span<const std::size_t> indices) {
  switch (kind) {
    case ConstructionKind::dnf_general: return build_dnf_general(n, indices);
    case ConstructionKind::dnf_six: return build_dnf_six(n, indices);
    case ConstructionKind::threshold_four: return build_threshold_four(n, indices);
  }
  throw std::invalid_argument("unknown construction");
}

struct VerifyOptions {
  std::size_t off_support_trials = 16;  // random off-support fills per configuration
  bool exhaustive = false;              // all 2^n inputs; n <= 12 only
  std::uint64_t seed = 0;
};

struct VerifyResult {
  bool ok = true;
  std::size_t checked = 0;
  std::vector<double> counterexample;  // empty when ok
  double output = 0.0;                 // f at the counterexample
  double expected = 0.0;

  explicit operator bool() const { return ok; }
};

/// Checks that sign(f(x)) equals the parity of x over `indices` with f(x) != 0.
inline VerifyResult verify_parity_net(const MlpParams& params, std::size_t n, std::span<const std::size_t> indices,
                                      VerifyOptions opts = {}) {
  const std::size_t k = indices.size();
  if (k > kMaxConstructionBits || params.n != n) {
    throw std::invalid_argument("verify_parity_net: need k <= 20 and params.n == n");
  }
  if (opts.exhaustive && n > 12) {
    throw std::invalid_argument("verify_parity_net: exhaustive mode needs n <= 12");
  }
  VerifyResult result;
  std::vector<double> x(n, 1.0);
  auto check = [&]() {
    ++result.checked;
    const double f = forward(params, x);
    const double y = parity_label(x, indices);
    if (f == 0.0 || sign_of(f) != y) {
      result.ok = false;
      result.counterexample = x;
      result.output = f;
      result.expected = y;
    }
    return result.ok;
  };

  if (opts.exhaustive) {
    for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << n); ++bits) {
      for (std::size_t c = 0; c < n; ++c) x[c] = ((bits >> c) & 1u) ? 1.0 : -1.0;
      if (!check()) return result;
    }
    return result;
  }

  Rng rng(opts.seed);
  const std::size_t trials = std::max<std::size_t>(1, opts.off_support_trials);
  for (std::uint64_t config = 0; config < (std::uint64_t{1} << k); ++config) {
    for (std::size_t r = 0; r < trials; ++r) {
      for (auto& v : x) v = rng.coin() ? 1.0 : -1.0;
      for (std::size_t t = 0; t < k; ++t) x[indices[t]] = ((config >> t) & 1u) ? 1.0 : -1.0;
      if (!check()) return result;
    }
  }
  return result;
}

/// Names the hand-built construction whose size matches a learned active
/// subnetwork.
inline std::string classify_circuit(std::size_t k_min, std::size_t k) {
  if (k == 3) {
    if (k_min == 4) return "threshold-like";
    if (k_min == 6) return "compact-DNF-like";
  }
  if (k < 64 && k_min == (std::size_t{1} << k)) return "full-DNF-like";
  return "other(" + std::to_string(k_min) + ")";
}

}  // namespace grokking
