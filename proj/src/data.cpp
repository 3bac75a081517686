// SPDX-License-Identifier: Apache-2.0
#include "fairprep/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "fairprep/checkpoint.hpp"
#include "fairprep/rng.hpp"

namespace fairprep {

std::string to_string(Role role) {
  switch (role) {
    case Role::covariate: return "covariate";
    case Role::sensitive: return "sensitive";
    case Role::outcome: return "outcome";
  }
  return "covariate";
}

std::string to_string(ColumnKind kind) { return kind == ColumnKind::continuous ? "continuous" : "categorical"; }
std::string to_string(Task task) { return task == Task::classification ? "classification" : "regression"; }

void Schema::validate() const {
  std::size_t outcomes = 0, covariates = 0, sensitive = 0;
  std::map<std::string, int> names;
  for (const auto& c : columns) {
    if (c.name.empty()) throw InputError("schema: column with empty name");
    if (names[c.name]++) throw InputError("schema: duplicate column '" + c.name + "'");
    if (c.kind == ColumnKind::categorical && c.categories.size() < 2)
      throw InputError("schema: categorical column '" + c.name + "' needs at least 2 categories");
    if (c.kind == ColumnKind::continuous && !(c.stddev > 0.0))
      throw InputError("schema: column '" + c.name + "' has non-positive std");
    outcomes += c.role == Role::outcome;
    covariates += c.role == Role::covariate;
    sensitive += c.role == Role::sensitive;
  }
  if (outcomes != 1) throw InputError("schema: exactly one outcome column required");
  if (covariates == 0) throw InputError("schema: at least one covariate required");
  if (sensitive == 0) throw InputError("schema: at least one sensitive column required");
  const auto& y = outcome();
  if (y.kind == ColumnKind::categorical && y.categories.size() != 2)
    throw InputError("schema: categorical outcome '" + y.name + "' must be binary");
}

const ColumnSpec& Schema::outcome() const {
  for (const auto& c : columns)
    if (c.role == Role::outcome) return c;
  throw InputError("schema: no outcome column");
}

std::vector<const ColumnSpec*> Schema::with_role(Role role) const {
  std::vector<const ColumnSpec*> out;
  for (const auto& c : columns)
    if (c.role == role) out.push_back(&c);
  return out;
}

Schema Schema::from_json(const nlohmann::json& doc) {
  Schema s;
  try {
    for (const auto& col : doc.at("columns")) {
      ColumnSpec c;
      c.name = col.at("name").get<std::string>();
      const auto role = col.at("role").get<std::string>();
      if (role == "covariate") c.role = Role::covariate;
      else if (role == "sensitive") c.role = Role::sensitive;
      else if (role == "outcome") c.role = Role::outcome;
      else throw InputError("schema: column '" + c.name + "' has unknown role '" + role + "'");
      const auto kind = col.at("kind").get<std::string>();
      if (kind == "continuous") c.kind = ColumnKind::continuous;
      else if (kind == "categorical") c.kind = ColumnKind::categorical;
      else throw InputError("schema: column '" + c.name + "' has unknown kind '" + kind + "'");
      if (c.kind == ColumnKind::categorical) c.categories = col.at("categories").get<std::vector<std::string>>();
      c.mean = col.value("mean", 0.0);
      c.stddev = col.value("std", 1.0);
      s.columns.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("schema: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json Schema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns) {
    nlohmann::json j{{"name", c.name}, {"role", fairprep::to_string(c.role)}, {"kind", fairprep::to_string(c.kind)}};
    if (c.kind == ColumnKind::categorical) j["categories"] = c.categories;
    else {
      j["mean"] = c.mean;
      j["std"] = c.stddev;
    }
    cols.push_back(std::move(j));
  }
  return {{"columns", cols}};
}

Task Dataset::task() const {
  return schema.outcome().kind == ColumnKind::categorical ? Task::classification : Task::regression;
}

namespace {

std::vector<Block> blocks_for(const Schema& schema, Role role) {
  std::vector<Block> out;
  std::size_t offset = 0;
  for (const auto* c : schema.with_role(role)) {
    const std::size_t width = c->kind == ColumnKind::categorical ? c->categories.size() : 1;
    out.push_back({c->name, c->kind, offset, width});
    offset += width;
  }
  return out;
}

std::size_t encoded_width(const std::vector<Block>& blocks) {
  return blocks.empty() ? 0 : blocks.back().offset + blocks.back().width;
}

}  // namespace

std::vector<Block> Dataset::x_blocks() const { return blocks_for(schema, Role::covariate); }
std::vector<Block> Dataset::a_blocks() const { return blocks_for(schema, Role::sensitive); }

std::vector<std::size_t> Dataset::groups() const {
  const auto blocks = a_blocks();
  std::vector<std::size_t> g(rows(), 0);
  for (const auto& b : blocks) {
    if (b.kind != ColumnKind::categorical) continue;
    for (std::size_t r = 0; r < rows(); ++r) {
      std::size_t level = 0;
      for (std::size_t k = 0; k < b.width; ++k)
        if (a(r, b.offset + k) > a(r, b.offset + level)) level = k;
      g[r] = g[r] * b.width + level;
    }
  }
  return g;
}

std::size_t Dataset::group_count() const {
  std::size_t count = 1;
  for (const auto& b : a_blocks())
    if (b.kind == ColumnKind::categorical) count *= b.width;
  return count;
}

Dataset Dataset::subset(std::span<const std::size_t> idx, const std::string& split_tag) const {
  Dataset out;
  out.schema = schema;
  out.x = x.gather_rows(idx);
  out.a = a.gather_rows(idx);
  out.y.reserve(idx.size());
  for (std::size_t i : idx) out.y.push_back(y.at(i));
  out.split = split_tag;
  return out;
}

void Dataset::validate() const {
  schema.validate();
  if (x.rows() != rows() || a.rows() != rows()) throw ShapeError("dataset: x, a, y row counts differ");
  if (x.cols() != encoded_width(x_blocks())) throw ShapeError("dataset: covariate width does not match schema");
  if (a.cols() != encoded_width(a_blocks())) throw ShapeError("dataset: sensitive width does not match schema");
}

// ---------------------------------------------------------------- CSV

std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& origin) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  while (i < text.size()) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
    } else {
      field += ch;
      field_started = true;
    }
    ++i;
  }
  if (quoted) throw LoadError(origin + ": unterminated quoted field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

namespace {

std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += (c == '"') ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

double parse_double(const std::string& cell, std::size_t row, const std::string& column, const std::string& origin) {
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  while (begin < end && *begin == ' ') ++begin;
  while (end > begin && end[-1] == ' ') --end;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || begin == end || !std::isfinite(v))
    throw LoadError(origin + ": row " + std::to_string(row) + ", column '" + column + "': unparseable cell '" +
                    cell + "'");
  return v;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const std::filesystem::path& schema_path) {
  const nlohmann::json doc = load_json(schema_path);
  bool frozen = true;
  for (const auto& col : doc.at("columns"))
    if (col.value("kind", "") == "continuous" && col.value("role", "") != "outcome" && !col.contains("mean"))
      frozen = false;
  return load_csv(path, Schema::from_json(doc), frozen);
}

Dataset load_csv(const std::filesystem::path& path, Schema schema, bool freeze_stats) {
  schema.validate();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string origin = path.filename().string();
  auto table = parse_csv(buffer.str(), origin);
  if (table.empty()) throw LoadError(origin + ": missing header row");
  const auto& header = table.front();

  std::vector<std::size_t> source(schema.columns.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto it = std::find(header.begin(), header.end(), schema.columns[c].name);
    if (it == header.end()) throw LoadError(origin + ": missing column '" + schema.columns[c].name + "'");
    source[c] = static_cast<std::size_t>(it - header.begin());
  }

  const std::size_t n = table.size() - 1;
  // Raw numeric values per continuous column; category index per categorical column.
  std::vector<std::vector<double>> values(schema.columns.size(), std::vector<double>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = table[r + 1];
    const std::size_t file_row = r + 2;  // 1-based, header is row 1
    if (row.size() != header.size())
      throw LoadError(origin + ": row " + std::to_string(file_row) + " has " + std::to_string(row.size()) +
                      " cells, expected " + std::to_string(header.size()));
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const auto& spec = schema.columns[c];
      const std::string& cell = row[source[c]];
      if (spec.kind == ColumnKind::continuous) {
        values[c][r] = parse_double(cell, file_row, spec.name, origin);
      } else {
        const auto it = std::find(spec.categories.begin(), spec.categories.end(), cell);
        if (it == spec.categories.end())
          throw LoadError(origin + ": row " + std::to_string(file_row) + ", column '" + spec.name +
                          "': unseen category '" + cell + "'");
        values[c][r] = static_cast<double>(it - spec.categories.begin());
      }
    }
  }

  if (!freeze_stats) {
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      auto& spec = schema.columns[c];
      if (spec.kind != ColumnKind::continuous || spec.role == Role::outcome || n == 0) continue;
      const double mean = std::accumulate(values[c].begin(), values[c].end(), 0.0) / static_cast<double>(n);
      double var = 0.0;
      for (double v : values[c]) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / static_cast<double>(n));
      spec.mean = mean;
      spec.stddev = sd > 0.0 ? sd : 1.0;
    }
  }

  Dataset d;
  d.schema = schema;
  const auto xb = d.x_blocks();
  const auto ab = d.a_blocks();
  d.x = Matrix(n, encoded_width(xb));
  d.a = Matrix(n, encoded_width(ab));
  d.y.assign(n, 0.0);
  std::size_t xi = 0, ai = 0;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& spec = schema.columns[c];
    if (spec.role == Role::outcome) {
      d.y = values[c];
      continue;
    }
    Matrix& target = spec.role == Role::covariate ? d.x : d.a;
    const Block& b = spec.role == Role::covariate ? xb[xi++] : ab[ai++];
    for (std::size_t r = 0; r < n; ++r) {
      if (spec.kind == ColumnKind::continuous)
        target(r, b.offset) = (values[c][r] - spec.mean) / spec.stddev;
      else
        target(r, b.offset + static_cast<std::size_t>(values[c][r])) = 1.0;
    }
  }
  d.validate();
  return d;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write " + path.string());
  out << std::setprecision(17);
  const auto& cols = data.schema.columns;
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << quote_csv(cols[c].name);
  out << '\n';
  const auto xb = data.x_blocks();
  const auto ab = data.a_blocks();
  for (std::size_t r = 0; r < data.rows(); ++r) {
    std::size_t xi = 0, ai = 0;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto& spec = cols[c];
      if (c) out << ',';
      if (spec.role == Role::outcome) {
        if (spec.kind == ColumnKind::categorical) out << quote_csv(spec.categories.at(static_cast<std::size_t>(data.y[r])));
        else out << data.y[r];
        continue;
      }
      const Matrix& m = spec.role == Role::covariate ? data.x : data.a;
      const Block& b = spec.role == Role::covariate ? xb[xi++] : ab[ai++];
      if (spec.kind == ColumnKind::continuous) {
        out << m(r, b.offset) * spec.stddev + spec.mean;
      } else {
        std::size_t level = 0;
        for (std::size_t k = 1; k < b.width; ++k)
          if (m(r, b.offset + k) > m(r, b.offset + level)) level = k;
        out << quote_csv(spec.categories[level]);
      }
    }
    out << '\n';
  }
}

std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ParameterError("split: fraction must lie in (0, 1)");
  Rng rng(seed);
  std::vector<std::size_t> perm = rng.permutation(data.rows());
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(data.rows())));
  std::vector<std::size_t> test(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {data.subset(train, "train"), data.subset(test, "test")};
}

void fit_standardization(Dataset& train, Dataset& test) {
  const auto blocks = train.x_blocks();
  const auto ablocks = train.a_blocks();
  auto refit = [&](Role role, const std::vector<Block>& bl) {
    std::size_t bi = 0;
    for (auto& spec : train.schema.columns) {
      if (spec.role != role) continue;
      const Block& b = bl[bi++];
      if (spec.kind != ColumnKind::continuous) continue;
      Matrix& mtr = role == Role::covariate ? train.x : train.a;
      Matrix& mte = role == Role::covariate ? test.x : test.a;
      const std::size_t n = mtr.rows();
      std::vector<double> raw(n);
      for (std::size_t r = 0; r < n; ++r) raw[r] = mtr(r, b.offset) * spec.stddev + spec.mean;
      const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(n);
      double var = 0.0;
      for (double v : raw) var += (v - mean) * (v - mean);
      double sd = std::sqrt(var / static_cast<double>(n));
      if (!(sd > 0.0)) sd = 1.0;
      for (std::size_t r = 0; r < n; ++r) mtr(r, b.offset) = (raw[r] - mean) / sd;
      for (std::size_t r = 0; r < mte.rows(); ++r) {
        const double v = mte(r, b.offset) * spec.stddev + spec.mean;
        mte(r, b.offset) = (v - mean) / sd;
      }
      spec.mean = mean;
      spec.stddev = sd;
    }
  };
  refit(Role::covariate, blocks);
  refit(Role::sensitive, ablocks);
  test.schema = train.schema;
}

// ---------------------------------------------------------------- generators

namespace {

ColumnSpec continuous(const std::string& name, Role role) { return {name, role, ColumnKind::continuous, {}, 0.0, 1.0}; }
ColumnSpec categorical(const std::string& name, Role role, std::vector<std::string> cats) {
  return {name, role, ColumnKind::categorical, std::move(cats), 0.0, 1.0};
}

}  // namespace

Dataset toy_regression(std::size_t n, std::uint64_t seed) {
  if (n < 10) throw ParameterError("toy_regression: n must be >= 10");
  Dataset d;
  d.schema.columns = {continuous("x", Role::covariate), categorical("a", Role::sensitive, {"0", "1"}),
                      continuous("y", Role::outcome)};
  d.x = Matrix(n, 1);
  d.a = Matrix(n, 2);
  d.y.resize(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double x = rng.normal(a, 1.0);
    const double eps = rng.normal(0.0, 0.1);
    d.x(i, 0) = x;
    d.a(i, static_cast<std::size_t>(a)) = 1.0;
    d.y[i] = (2.0 * a - 1.0) * std::sin(x) + 2.0 * a * x + eps;
  }
  d.validate();
  return d;
}

Dataset toy_classification(std::size_t n, std::uint64_t seed, bool hard) {
  if (n < 10) throw ParameterError("toy_classification: n must be >= 10");
  Dataset d;
  d.schema.columns = {continuous("x1", Role::covariate), continuous("x2", Role::covariate),
                      categorical("x3", Role::covariate, {"low", "mid", "high"}),
                      categorical("a", Role::sensitive, {"0", "1"}), categorical("y", Role::outcome, {"0", "1"})};
  d.x = Matrix(n, 5);
  d.a = Matrix(n, 2);
  d.y.resize(n);
  const double scale = hard ? 0.35 : 1.0;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const bool a = rng.bernoulli(0.5);
    const double x1 = rng.normal(a ? 1.0 : 0.0, 1.0);
    const double x2 = rng.normal(0.0, 1.0);
    const double u = rng.uniform();
    const double p_low = a ? 0.2 : 0.5;
    const std::size_t x3 = u < p_low ? 0 : (u < p_low + 0.3 ? 1 : 2);
    const double logit =
        scale * (1.5 * x1 + x2 + 0.5 * (x3 == 2) - 0.5 * (x3 == 0) + 0.8 * (a ? 1.0 : 0.0) - 1.2);
    const double p = 1.0 / (1.0 + std::exp(-logit));
    d.x(i, 0) = x1;
    d.x(i, 1) = x2;
    d.x(i, 2 + x3) = 1.0;
    d.a(i, a ? 1 : 0) = 1.0;
    d.y[i] = rng.bernoulli(p) ? 1.0 : 0.0;
  }
  d.validate();
  return d;
}

Dataset with_covariates(const Dataset& data, Matrix x) {
  Dataset out = data;
  out.x = std::move(x);
  out.validate();
  return out;
}

Dataset with_outcome(const Dataset& data, std::vector<double> y) {
  Dataset out = data;
  out.y = std::move(y);
  out.validate();
  return out;
}

}  // namespace fairprep
