#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "grokking/mlp.hpp"

namespace grokking {

struct SeedSet {
  std::uint64_t task = 0;
  std::uint64_t data = 1;
  std::uint64_t init = 2;
  std::uint64_t shuffle = 3;
  std::uint64_t test = 4;

  bool operator==(const SeedSet&) const = default;
};

/// Everything needed to replay one training run. Defaults are the standard
/// (40, 3)-parity setup.
struct TrainConfig {
  std::size_t n = 40;
  std::size_t k = 3;
  std::size_t train_size = 1000;
  std::size_t test_size = 100;
  std::size_t hidden = 1000;
  double eta = 0.1;
  double lambda = 0.01;
  std::size_t batch_size = 32;
  std::uint64_t max_steps = 200000;
  DecayMode decay_mode = DecayMode::decoupled_l2;
  std::uint64_t dense_until = 10;  // checkpoint every step up to here
  double schedule_ratio = 1.1;     // then geometrically spaced
  bool early_stop = true;
  SeedSet seeds;

  bool operator==(const TrainConfig&) const = default;
};

inline void validate_config(const TrainConfig& c) {
  if (c.k == 0 || c.k > c.n || c.train_size == 0 || c.test_size == 0 || c.hidden == 0) {
    throw std::invalid_argument("config: dimensions must be positive with k <= n");
  }
  // eta = 0 is accepted so that a no-update run can serve as a baseline.
  if (!(c.eta >= 0.0) || !(c.lambda >= 0.0) || c.batch_size == 0 || c.max_steps == 0) {
    throw std::invalid_argument("config: need eta >= 0, lambda >= 0, batch_size >= 1, max_steps >= 1");
  }
  if (!(c.schedule_ratio > 1.0)) {
    throw std::invalid_argument("config: schedule_ratio must exceed 1");
  }
}

inline std::string to_string(DecayMode mode) {
  return mode == DecayMode::decoupled_l2 ? "decoupled-l2" : "literal-l2-norm";
}

inline DecayMode parse_decay_mode(const std::string& s) {
  if (s == "decoupled-l2") return DecayMode::decoupled_l2;
  if (s == "literal-l2-norm") return DecayMode::literal_l2_norm;
  throw std::invalid_argument("unknown decay mode '" + s + "'");
}

namespace detail {
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}
}  // namespace detail

/// Flat "key = value" text, one field per line, in a fixed order.
inline std::string serialize_config(const TrainConfig& c) {
  std::ostringstream out;
  out << "n = " << c.n << '\n'
      << "k = " << c.k << '\n'
      << "train_size = " << c.train_size << '\n'
      << "test_size = " << c.test_size << '\n'
      << "hidden = " << c.hidden << '\n'
      << "eta = " << detail::format_double(c.eta) << '\n'
      << "lambda = " << detail::format_double(c.lambda) << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "max_steps = " << c.max_steps << '\n'
      << "decay_mode = " << to_string(c.decay_mode) << '\n'
      << "dense_until = " << c.dense_until << '\n'
      << "schedule_ratio = " << detail::format_double(c.schedule_ratio) << '\n'
      << "early_stop = " << (c.early_stop ? "true" : "false") << '\n'
      << "task_seed = " << c.seeds.task << '\n'
      << "data_seed = " << c.seeds.data << '\n'
      << "init_seed = " << c.seeds.init << '\n'
      << "shuffle_seed = " << c.seeds.shuffle << '\n'
      << "test_seed = " << c.seeds.test << '\n';
  return out.str();
}

/// Applies one key/value pair; throws on unknown keys or unparsable values.
inline void apply_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  auto as_u64 = [&]() {
    std::uint64_t v = 0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) {
      throw std::invalid_argument("config: bad integer for " + key + ": '" + value + "'");
    }
    return v;
  };
  auto as_double = [&]() {
    double v = 0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) {
      throw std::invalid_argument("config: bad number for " + key + ": '" + value + "'");
    }
    return v;
  };
  if (key == "n") c.n = as_u64();
  else if (key == "k") c.k = as_u64();
  else if (key == "train_size") c.train_size = as_u64();
  else if (key == "test_size") c.test_size = as_u64();
  else if (key == "hidden") c.hidden = as_u64();
  else if (key == "eta") c.eta = as_double();
  else if (key == "lambda") c.lambda = as_double();
  else if (key == "batch_size") c.batch_size = as_u64();
  else if (key == "max_steps") c.max_steps = as_u64();
  else if (key == "decay_mode") c.decay_mode = parse_decay_mode(value);
  else if (key == "dense_until") c.dense_until = as_u64();
  else if (key == "schedule_ratio") c.schedule_ratio = as_double();
  else if (key == "early_stop") {
    if (value != "true" && value != "false") throw std::invalid_argument("config: early_stop must be true/false");
    c.early_stop = value == "true";
  }
  else if (key == "task_seed") c.seeds.task = as_u64();
  else if (key == "data_seed") c.seeds.data = as_u64();
  else if (key == "init_seed") c.seeds.init = as_u64();
  else if (key == "shuffle_seed") c.seeds.shuffle = as_u64();
  else if (key == "test_seed") c.seeds.test = as_u64();
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline void apply_config_text(TrainConfig& c, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto trim = [](std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return std::string{};
    return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
  };
  while (std::getline(in, line)) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: expected 'key = value', got '" + line + "'");
    }
    apply_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

inline TrainConfig parse_config(const std::string& text, TrainConfig base = {}) {
  apply_config_text(base, text);
  return base;
}

inline TrainConfig load_config(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read config " + path);
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), base);
}

// FNV-1a over the canonical serialization; stamped into checkpoints.
inline std::uint64_t config_hash(const TrainConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : serialize_config(c)) {
    h = (h ^ ch) * 0x100000001b3ULL;
  }
  return h;
}

}  // namespace grokking
