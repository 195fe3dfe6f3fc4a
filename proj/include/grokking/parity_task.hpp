#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "grokking/rng.hpp"

namespace grokking {

/// A sparse (n, k)-parity problem: the label of x is the product of x over
/// a hidden index set of size k.
struct ParityTask {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // sorted, distinct, each < n
};

/// N rows of +-1 inputs (row-major, N x n) together with their labels.
struct Dataset {
  std::size_t n = 0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<double> inputs;
  std::vector<double> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t j) const { return {inputs.data() + j * n, n}; }
};

inline void validate_task(const ParityTask& task) {
  if (task.k == 0 || task.k > task.n || task.indices.size() != task.k) {
    throw std::invalid_argument("parity task: need 1 <= k <= n and |S| = k");
  }
  for (std::size_t i = 0; i < task.indices.size(); ++i) {
    if (task.indices[i] >= task.n || (i > 0 && task.indices[i] <= task.indices[i - 1])) {
      throw std::invalid_argument("parity task: indices must be sorted, distinct and < n");
    }
  }
}

inline ParityTask make_task(std::size_t n, std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end());
  ParityTask task{n, indices.size(), std::move(indices)};
  validate_task(task);
  return task;
}

/// Draws the hidden index set uniformly among all k-subsets of [0, n).
inline ParityTask generate_task(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k == 0 || k > n) {
    throw std::invalid_argument("generate_task: need 1 <= k <= n");
  }
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  Rng rng(seed);
  return ParityTask{n, k, sample_subset(std::move(all), k, rng)};
}

inline double parity_label(std::span<const double> x, std::span<const std::size_t> indices) {
  double label = 1.0;
  for (const std::size_t i : indices) {
    if (i >= x.size()) {
      throw std::invalid_argument("parity_label: index out of range");
    }
    if (x[i] != 1.0 && x[i] != -1.0) {
      throw std::invalid_argument("parity_label: entries must be +1 or -1");
    }
    label *= x[i];
  }
  return label;
}

inline Dataset sample_dataset(const ParityTask& task, std::size_t count, std::uint64_t seed) {
  if (count == 0) {
    throw std::invalid_argument("sample_dataset: N must be positive");
  }
  validate_task(task);
  Dataset data{task.n, task.k, seed, std::vector<double>(count * task.n), std::vector<double>(count)};
  Rng rng(seed);
  for (auto& v : data.inputs) {
    v = rng.coin() ? 1.0 : -1.0;
  }
  for (std::size_t j = 0; j < count; ++j) {
    data.labels[j] = parity_label(data.row(j), task.indices);
  }
  return data;
}

// Text format: a header line "n k N seed", then one line per sample holding
// the n inputs followed by the label, all as +-1 integers.
inline void write_dataset(const Dataset& data, std::ostream& out) {
  out << data.n << ' ' << data.k << ' ' << data.size() << ' ' << data.seed << '\n';
  std::string line;
  for (std::size_t j = 0; j < data.size(); ++j) {
    line.clear();
    for (const double v : data.row(j)) {
      line += v > 0 ? "1 " : "-1 ";
    }
    line += data.labels[j] > 0 ? "1\n" : "-1\n";
    out << line;
  }
}

inline Dataset read_dataset(std::istream& in) {
  Dataset data;
  std::size_t count = 0;
  if (!(in >> data.n >> data.k >> count >> data.seed) || data.n == 0) {
    throw std::runtime_error("read_dataset: malformed header");
  }
  data.inputs.resize(count * data.n);
  data.labels.resize(count);
  auto next = [&in]() {
    int v = 0;
    if (!(in >> v) || (v != 1 && v != -1)) {
      throw std::runtime_error("read_dataset: expected +1 or -1 entry");
    }
    return static_cast<double>(v);
  };
  for (std::size_t j = 0; j < count; ++j) {
    for (std::size_t c = 0; c < data.n; ++c) {
      data.inputs[j * data.n + c] = next();
    }
    data.labels[j] = next();
  }
  return data;
}

inline void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path);
  }
  write_dataset(data, out);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read " + path);
  }
  return read_dataset(in);
}

}  // namespace grokking
