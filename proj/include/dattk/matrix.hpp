// Dense row-major matrix and the labelled embedding matrix exchanged between
// the embedding pipelines and the projection step.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dattk/io.hpp"

namespace dattk {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// n_learners x k embedding with its row labels and where it came from.
struct EmbeddingMatrix {
  std::vector<std::string> learner_ids;
  Matrix values;
  std::string pipeline;  // features | dtw-mds | cnn-ae
  std::uint64_t seed = 0;
};

/// CSV: "# pipeline=<name> seed=<n>" comment line, then a header
/// "learner_id,d0,...,d{k-1}" and one row per learner.
inline std::string format_embedding_csv(const EmbeddingMatrix& e) {
  std::string out = "# pipeline=" + e.pipeline + " seed=" + std::to_string(e.seed) + "\n";
  out += "learner_id";
  for (std::size_t j = 0; j < e.values.cols; ++j) out += ",d" + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < e.values.rows; ++i) {
    out += io::csv_escape(e.learner_ids[i]);
    for (std::size_t j = 0; j < e.values.cols; ++j) out += "," + io::format_double(e.values(i, j));
    out += "\n";
  }
  return out;
}

inline EmbeddingMatrix parse_embedding_csv(std::string_view text) {
  EmbeddingMatrix e;
  std::istringstream in{std::string(text)};
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  std::vector<double> data;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = io::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      std::istringstream meta{std::string(t.substr(1))};
      std::string kv;
      while (meta >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const auto key = kv.substr(0, eq);
        const auto val = kv.substr(eq + 1);
        if (key == "pipeline") e.pipeline = val;
        if (key == "seed") e.seed = std::stoull(val);
      }
      continue;
    }
    const auto fields = io::split_csv_line(t);
    if (!have_header) {
      if (fields.empty() || fields[0] != "learner_id")
        throw io::FormatError("embedding CSV: header must start with learner_id");
      e.values.cols = fields.size() - 1;
      have_header = true;
      continue;
    }
    if (fields.size() != e.values.cols + 1)
      throw io::FormatError("embedding CSV line " + std::to_string(line_no) + ": expected " +
                            std::to_string(e.values.cols + 1) + " fields");
    e.learner_ids.push_back(fields[0]);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      try {
        std::size_t used = 0;
        data.push_back(std::stod(fields[j], &used));
        if (used != fields[j].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw io::FormatError("embedding CSV line " + std::to_string(line_no) +
                              ": bad number '" + fields[j] + "'");
      }
    }
  }
  if (!have_header) throw io::FormatError("embedding CSV: missing header");
  e.values.rows = e.learner_ids.size();
  e.values.data = std::move(data);
  return e;
}

}  // namespace dattk
