#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "grokking/config.hpp"

namespace grokking {

/// Measurements taken at one scheduled checkpoint. Losses are the mean
/// unregularized hinge loss.
struct MetricsRecord {
  std::uint64_t step = 0;
  double epoch = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double param_norm = 0.0;
  std::optional<std::size_t> effective_sparsity;  // filled in by analysis

  bool operator==(const MetricsRecord&) const = default;
};

inline constexpr const char* kMetricsHeader =
    "step,epoch,train_acc,test_acc,train_loss,test_loss,param_norm,effective_sparsity";

inline std::string metrics_csv(const std::vector<MetricsRecord>& records) {
  using detail::format_double;
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : records) {
    out += std::to_string(r.step) + ',' + format_double(r.epoch) + ',' + format_double(r.train_accuracy) + ',' +
           format_double(r.test_accuracy) + ',' + format_double(r.train_loss) + ',' + format_double(r.test_loss) +
           ',' + format_double(r.param_norm) + ',' +
           (r.effective_sparsity ? std::to_string(*r.effective_sparsity) : std::string{}) + '\n';
  }
  return out;
}

inline std::vector<MetricsRecord> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw std::runtime_error("metrics csv: unexpected header");
  }
  std::vector<MetricsRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 8) {
      throw std::runtime_error("metrics csv: expected 8 fields in '" + line + "'");
    }
    MetricsRecord r;
    try {
      r.step = std::stoull(fields[0]);
      r.epoch = std::stod(fields[1]);
      r.train_accuracy = std::stod(fields[2]);
      r.test_accuracy = std::stod(fields[3]);
      r.train_loss = std::stod(fields[4]);
      r.test_loss = std::stod(fields[5]);
      r.param_norm = std::stod(fields[6]);
      if (!fields[7].empty()) r.effective_sparsity = std::stoull(fields[7]);
    } catch (const std::exception&) {
      throw std::runtime_error("metrics csv: unparsable row '" + line + "'");
    }
    records.push_back(r);
  }
  return records;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
    throw std::runtime_error("cannot write " + path);
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot read " + path);
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace grokking
