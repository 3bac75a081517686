// SPDX-License-Identifier: Apache-2.0
#pragma once

// Tabular datasets: schema, CSV ingestion with one-hot encoding and
// standardization, seeded splits and the synthetic generators.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairprep/matrix.hpp"

namespace fairprep {

enum class Role { covariate, sensitive, outcome };
enum class ColumnKind { continuous, categorical };
enum class Task { classification, regression };

std::string to_string(Role role);
std::string to_string(ColumnKind kind);
std::string to_string(Task task);

struct ColumnSpec {
  std::string name;
  Role role = Role::covariate;
  ColumnKind kind = ColumnKind::continuous;
  std::vector<std::string> categories;  // ordered; fixes the one-hot column order
  double mean = 0.0;                    // standardization stats (continuous only)
  double stddev = 1.0;
};

/// Column roles and encodings. Schema file keys per column: name, role,
/// kind, categories (categorical only) and optionally mean/std to freeze stats.
struct Schema {
  std::vector<ColumnSpec> columns;

  void validate() const;
  const ColumnSpec& outcome() const;
  std::vector<const ColumnSpec*> with_role(Role role) const;

  static Schema from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// Position of one source column inside an encoded matrix.
struct Block {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::size_t offset = 0;
  std::size_t width = 1;
};

/// Encoded data: continuous columns standardized, categoricals one-hot.
/// Classification outcomes are stored as category indices 0/1.
struct Dataset {
  Schema schema;
  Matrix x;
  Matrix a;
  std::vector<double> y;
  std::string split = "all";

  std::size_t rows() const { return y.size(); }
  Task task() const;
  std::vector<Block> x_blocks() const;
  std::vector<Block> a_blocks() const;
  /// Combined group id of the categorical sensitive columns (mixed radix, first column most significant).
  std::vector<std::size_t> groups() const;
  std::size_t group_count() const;

  Dataset subset(std::span<const std::size_t> rows, const std::string& split_tag) const;
  void validate() const;
};

/// RFC-4180 rows (quoted fields, doubled quotes, CRLF or LF); blank lines skipped.
std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& origin);

Dataset load_csv(const std::filesystem::path& path, const std::filesystem::path& schema_path);
/// Stats already present on continuous columns of `schema` are used as-is when
/// `freeze_stats` is set; otherwise they are computed from the file.
Dataset load_csv(const std::filesystem::path& path, Schema schema, bool freeze_stats = false);
/// Writes raw (de-standardized) values and category labels with a header row.
void write_csv(const Dataset& data, const std::filesystem::path& path);

/// Seeded disjoint partition; `test_fraction` of the rows go to the second set.
std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed);
/// Re-standardizes both sets with statistics of the training set only.
void fit_standardization(Dataset& train, Dataset& test);

/// Y = (2A - 1) sin(X) + 2 A X + eps with A ~ Ber(0.5), X | A ~ N(A, 1), eps ~ N(0, 0.1^2).
/// Columns: x (continuous), a (categorical {0,1}, sensitive), y (continuous). Values are not standardized.
Dataset toy_regression(std::size_t n, std::uint64_t seed);

/// Synthetic binary classification with built-in group bias:
///   A ~ Ber(0.5); x1 | A ~ N(A, 1); x2 ~ N(0, 1);
///   x3 in {low, mid, high} with probabilities (0.5, 0.3, 0.2) if A = 0 and (0.2, 0.3, 0.5) if A = 1;
///   logit = s * (1.5 x1 + x2 + 0.5 [x3 = high] - 0.5 [x3 = low] + 0.8 A - 1.2);  Y ~ Ber(sigmoid(logit)),
/// with s = 1 by default and s = 0.35 for the hard variant (weak predictability).
Dataset toy_classification(std::size_t n, std::uint64_t seed, bool hard = false);

/// Copy of `data` with covariates / outcome replaced (same schema).
Dataset with_covariates(const Dataset& data, Matrix x);
Dataset with_outcome(const Dataset& data, std::vector<double> y);

}  // namespace fairprep
