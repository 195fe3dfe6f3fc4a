#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grokking/rng.hpp"

namespace grokking {

/// Parameters of the one-hidden-layer ReLU network f(x) = u . relu(W x + b).
/// W is stored row-major, one row of n incoming weights per hidden neuron.
struct MlpParams {
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<double> W;
  std::vector<double> b;
  std::vector<double> u;

  MlpParams() = default;
  MlpParams(std::size_t inputs, std::size_t hidden)
      : n(inputs), p(hidden), W(inputs * hidden, 0.0), b(hidden, 0.0), u(hidden, 0.0) {}

  std::span<double> row(std::size_t i) { return {W.data() + i * n, n}; }
  std::span<const double> row(std::size_t i) const { return {W.data() + i * n, n}; }

  bool operator==(const MlpParams&) const = default;
};

struct Gradients {
  std::vector<double> dW;
  std::vector<double> db;
  std::vector<double> du;

  explicit Gradients(const MlpParams& like)
      : dW(like.W.size(), 0.0), db(like.b.size(), 0.0), du(like.u.size(), 0.0) {}
};

enum class DecayMode { decoupled_l2, literal_l2_norm };

inline bool all_finite(const MlpParams& params) {
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return finite(params.W) && finite(params.b) && finite(params.u);
}

inline void check_shape(const MlpParams& params) {
  if (params.W.size() != params.n * params.p || params.b.size() != params.p || params.u.size() != params.p) {
    throw std::invalid_argument("MlpParams: inconsistent dimensions");
  }
}

/// Uniform on +-1/sqrt(fan_in): fan_in = n for W and b, p for u.
inline MlpParams init_params(std::size_t n, std::size_t p, std::uint64_t seed) {
  if (n == 0 || p == 0) {
    throw std::invalid_argument("init_params: n and p must be positive");
  }
  MlpParams params(n, p);
  Rng rng(seed);
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(n));
  const double out_bound = 1.0 / std::sqrt(static_cast<double>(p));
  for (auto& w : params.W) w = rng.uniform(-in_bound, in_bound);
  for (auto& v : params.b) v = rng.uniform(-in_bound, in_bound);
  for (auto& v : params.u) v = rng.uniform(-out_bound, out_bound);
  return params;
}

inline double pre_activation(const MlpParams& params, std::size_t i, std::span<const double> x) {
  const double* w = params.W.data() + i * params.n;
  double acc = 0.0;
  for (std::size_t c = 0; c < params.n; ++c) {
    acc += w[c] * x[c];
  }
  return acc + params.b[i];
}

/// Writes relu(W x + b) into `hidden` (length p).
inline void hidden_activations(const MlpParams& params, std::span<const double> x, std::span<double> hidden) {
  for (std::size_t i = 0; i < params.p; ++i) {
    hidden[i] = std::max(0.0, pre_activation(params, i, x));
  }
}

inline double forward(const MlpParams& params, std::span<const double> x) {
  if (x.size() != params.n) {
    throw std::invalid_argument("forward: input has wrong dimension");
  }
  double f = 0.0;
  for (std::size_t i = 0; i < params.p; ++i) {
    f += params.u[i] * std::max(0.0, pre_activation(params, i, x));
  }
  return f;
}

// sgn with the tie sgn(0) = +1.
constexpr double sign_of(double f) { return f >= 0.0 ? 1.0 : -1.0; }

inline double predict(const MlpParams& params, std::span<const double> x) { return sign_of(forward(params, x)); }

constexpr double hinge_loss(double f_value, double y) { return std::max(0.0, 1.0 - f_value * y); }

/// Gradient of the mean hinge loss over a batch. Both kinks (margin exactly 1,
/// pre-activation exactly 0) take the zero subgradient.
///
/// `inputs` holds batch rows back to back; `labels` one +-1 per row.
inline Gradients batch_gradient(const MlpParams& params, std::span<const double> inputs,
                                std::span<const double> labels) {
  const std::size_t count = labels.size();
  if (count == 0 || inputs.size() != count * params.n) {
    throw std::invalid_argument("batch_gradient: empty batch or dimension mismatch");
  }
  Gradients grads(params);
  const std::size_t n = params.n;
  const std::size_t p = params.p;
  // pre[j * p + i]: pre-activation of neuron i on example j.
  std::vector<double> pre(count * p);
  std::vector<double> coef(count, 0.0);
  for (std::size_t j = 0; j < count; ++j) {
    const std::span<const double> x = inputs.subspan(j * n, n);
    double f = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      const double z = pre_activation(params, i, x);
      pre[j * p + i] = z;
      if (z > 0.0) f += params.u[i] * z;
    }
    if (f * labels[j] < 1.0) {
      coef[j] = -labels[j] / static_cast<double>(count);
    }
  }
  for (std::size_t j = 0; j < count; ++j) {
    if (coef[j] == 0.0) continue;
    const double* x = inputs.data() + j * n;
    const double* z = pre.data() + j * p;
    for (std::size_t i = 0; i < p; ++i) {
      if (z[i] <= 0.0) continue;
      grads.du[i] += coef[j] * z[i];
      const double g = coef[j] * params.u[i];
      grads.db[i] += g;
      double* dw = grads.dW.data() + i * n;
      for (std::size_t c = 0; c < n; ++c) {
        dw[c] += g * x[c];
      }
    }
  }
  return grads;
}

inline double param_norm(const MlpParams& params) {
  double sq = 0.0;
  for (const double v : params.W) sq += v * v;
  for (const double v : params.b) sq += v * v;
  for (const double v : params.u) sq += v * v;
  return std::sqrt(sq);
}

/// In-place SGD step. decoupled_l2: theta -= eta*grad + eta*lambda*theta.
/// literal_l2_norm: theta -= eta*(grad + lambda*theta/||theta||), where the
/// norm is taken over W, b and u jointly and the penalty vanishes at theta = 0.
inline void sgd_step_inplace(MlpParams& params, const Gradients& grads, double eta, double lambda, DecayMode mode) {
  double shrink = eta * lambda;
  if (mode == DecayMode::literal_l2_norm) {
    const double norm = param_norm(params);
    shrink = norm > 0.0 ? eta * lambda / norm : 0.0;
  }
  auto update = [&](std::vector<double>& theta, const std::vector<double>& g) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] -= eta * g[i] + shrink * theta[i];
    }
  };
  update(params.W, grads.dW);
  update(params.b, grads.db);
  update(params.u, grads.du);
}

inline MlpParams sgd_step(MlpParams params, const Gradients& grads, double eta, double lambda, DecayMode mode) {
  if (!(eta > 0.0) || lambda < 0.0) {
    throw std::invalid_argument("sgd_step: need eta > 0 and lambda >= 0");
  }
  sgd_step_inplace(params, grads, eta, lambda, mode);
  return params;
}

// Checkpoint layout, all fields little-endian:
//   8 bytes magic "GRKCKPT1", u64 n, u64 p, u64 step, u64 config_hash,
//   then p*n doubles of W (row-major), p doubles of b, p doubles of u.
struct Checkpoint {
  std::uint64_t step = 0;
  std::uint64_t config_hash = 0;
  MlpParams params;
};

namespace detail {
inline constexpr char kCheckpointMagic[8] = {'G', 'R', 'K', 'C', 'K', 'P', 'T', '1'};

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int s = 0; s < 64; s += 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int s = 0; s < 8; ++s) v |= static_cast<std::uint64_t>(p[s]) << (8 * s);
  return v;
}
}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
  const MlpParams& m = ckpt.params;
  check_shape(m);
  std::string out(detail::kCheckpointMagic, 8);
  out.reserve(40 + 8 * (m.W.size() + 2 * m.p));
  detail::put_u64(out, m.n);
  detail::put_u64(out, m.p);
  detail::put_u64(out, ckpt.step);
  detail::put_u64(out, ckpt.config_hash);
  for (const auto* v : {&m.W, &m.b, &m.u}) {
    for (const double x : *v) detail::put_u64(out, std::bit_cast<std::uint64_t>(x));
  }
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 40 || std::memcmp(bytes.data(), detail::kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic or truncated header");
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t n = detail::get_u64(raw + 8);
  const std::uint64_t p = detail::get_u64(raw + 16);
  if (n == 0 || p == 0 || n > (1u << 24) || p > (1u << 24) || bytes.size() != 40 + 8 * (n * p + 2 * p)) {
    throw std::runtime_error("checkpoint: size does not match header");
  }
  Checkpoint ckpt{detail::get_u64(raw + 24), detail::get_u64(raw + 32), MlpParams(n, p)};
  const unsigned char* cursor = raw + 40;
  for (auto* v : {&ckpt.params.W, &ckpt.params.b, &ckpt.params.u}) {
    for (double& x : *v) {
      x = std::bit_cast<double>(detail::get_u64(cursor));
      cursor += 8;
    }
  }
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw std::runtime_error("cannot write checkpoint " + path);
  }
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot read checkpoint " + path);
  }
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace grokking
