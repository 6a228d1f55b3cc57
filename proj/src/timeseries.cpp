#include "lvssm/timeseries.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lvssm/error.hpp"

namespace lvssm {

TimeSeriesTable::TimeSeriesTable(std::vector<double> timestamps, std::vector<std::string> names,
                                 std::vector<std::vector<double>> columns)
    : timestamps_(std::move(timestamps)), names_(std::move(names)), columns_(std::move(columns)) {
  if (names_.size() != columns_.size()) {
    throw DataError("table: " + std::to_string(names_.size()) + " names for " +
                    std::to_string(columns_.size()) + " columns");
  }
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (columns_[c].size() != timestamps_.size()) {
      throw DataError("table: column '" + names_[c] + "' has " +
                      std::to_string(columns_[c].size()) + " rows, expected " +
                      std::to_string(timestamps_.size()));
    }
    for (std::size_t d = 0; d < c; ++d) {
      if (names_[d] == names_[c]) throw DataError("table: duplicate column '" + names_[c] + "'");
    }
  }
  for (std::size_t i = 0; i < timestamps_.size(); ++i) {
    if (!std::isfinite(timestamps_[i])) throw DataError("table: non-finite timestamp");
    if (i > 0 && timestamps_[i] < timestamps_[i - 1]) {
      throw DataError("table: timestamps are non-monotone at row " + std::to_string(i));
    }
  }
}

const std::vector<double>& TimeSeriesTable::column(std::string_view name) const {
  return columns_[index_of(name)];
}

bool TimeSeriesTable::has_column(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t TimeSeriesTable::index_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw DataError("table: no column named '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

std::optional<double> TimeSeriesTable::sample_period() const {
  if (timestamps_.size() < 2) return std::nullopt;
  double period = timestamps_[1] - timestamps_[0];
  if (period <= 0) return std::nullopt;
  for (std::size_t i = 1; i < timestamps_.size(); ++i) {
    double expected = timestamps_[0] + period * static_cast<double>(i);
    if (std::abs(timestamps_[i] - expected) > 1e-9 * std::max(1.0, std::abs(expected))) {
      return std::nullopt;
    }
  }
  return period;
}

bool TimeSeriesTable::strictly_increasing() const {
  for (std::size_t i = 1; i < timestamps_.size(); ++i) {
    if (!(timestamps_[i] > timestamps_[i - 1])) return false;
  }
  return true;
}

TimeSeriesTable TimeSeriesTable::with_column(std::string name, std::vector<double> values) const {
  auto names = names_;
  auto columns = columns_;
  names.push_back(std::move(name));
  columns.push_back(std::move(values));
  return TimeSeriesTable(timestamps_, std::move(names), std::move(columns));
}

TimeSeriesTable TimeSeriesTable::select_columns(const std::vector<std::string>& names) const {
  std::vector<std::vector<double>> columns;
  columns.reserve(names.size());
  for (const auto& n : names) columns.push_back(column(n));
  return TimeSeriesTable(timestamps_, names, std::move(columns));
}

TimeSeriesTable TimeSeriesTable::select_rows(const std::vector<std::size_t>& rows) const {
  std::vector<double> ts;
  ts.reserve(rows.size());
  for (auto r : rows) ts.push_back(timestamps_.at(r));
  std::vector<std::vector<double>> columns(columns_.size());
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    columns[c].reserve(rows.size());
    for (auto r : rows) columns[c].push_back(columns_[c][r]);
  }
  return TimeSeriesTable(std::move(ts), names_, std::move(columns));
}

TimeSeriesTable TimeSeriesTable::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows()) throw DataError("table: slice out of range");
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return select_rows(idx);
}

bool operator==(const TimeSeriesTable& a, const TimeSeriesTable& b) {
  if (a.timestamps_ != b.timestamps_ || a.names_ != b.names_) return false;
  for (std::size_t c = 0; c < a.columns_.size(); ++c) {
    const auto& x = a.columns_[c];
    const auto& y = b.columns_[c];
    for (std::size_t i = 0; i < x.size(); ++i) {
      bool mx = std::isnan(x[i]), my = std::isnan(y[i]);
      if (mx != my || (!mx && x[i] != y[i])) return false;
    }
  }
  return true;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

TimeSeriesTable parse_csv(std::string_view text, const CsvSchema& schema,
                          const std::string& source_name) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

  std::vector<std::pair<std::size_t, std::string_view>> lines;  // (line number, content)
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    auto pos = text.find('\n', start);
    auto line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    bool blank = trim(line).empty();
    bool comment = !line.empty() && line.front() == '#';
    if (!(lines.empty() && (blank || comment)) && !blank) lines.emplace_back(line_no, line);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (lines.empty()) throw DataError(source_name + ": empty file");

  auto header = split_fields(lines[0].second);
  auto find = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  };
  auto time_idx = find(schema.time_column);
  if (!time_idx) {
    throw DataError(source_name + ": missing timestamp column '" + schema.time_column + "'");
  }

  std::vector<std::pair<std::string, ColumnType>> wanted = schema.columns;
  if (wanted.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (i != *time_idx) wanted.emplace_back(std::string(header[i]), ColumnType::Real);
  }
  std::vector<std::size_t> field_of;
  for (const auto& [name, type] : wanted) {
    auto idx = find(name);
    if (!idx) throw DataError(source_name + ": missing column '" + name + "'");
    field_of.push_back(*idx);
  }

  std::vector<double> ts;
  std::vector<std::vector<double>> columns(wanted.size());
  for (std::size_t li = 1; li < lines.size(); ++li) {
    auto [number, content] = lines[li];
    auto fields = split_fields(content);
    if (fields.size() != header.size()) {
      throw DataError(source_name + ":" + std::to_string(number) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    auto t = parse_number(fields[*time_idx]);
    if (!t) {
      throw DataError(source_name + ":" + std::to_string(number) + ": unparseable timestamp '" +
                      std::string(fields[*time_idx]) + "'");
    }
    if (!ts.empty() && *t < ts.back()) {
      throw DataError(source_name + ":" + std::to_string(number) +
                      ": non-monotone timestamps (" + format_number(*t) + " after " +
                      format_number(ts.back()) + ")");
    }
    ts.push_back(*t);
    for (std::size_t c = 0; c < wanted.size(); ++c) {
      auto v = parse_number(fields[field_of[c]]);
      if (v && wanted[c].second == ColumnType::Integer && *v != std::round(*v)) v.reset();
      columns[c].push_back(v ? *v : kMissing);
    }
  }
  if (ts.empty()) throw DataError(source_name + ": empty file (header only)");

  std::vector<std::string> names;
  for (const auto& w : wanted) names.push_back(w.first);
  return TimeSeriesTable(std::move(ts), std::move(names), std::move(columns));
}

TimeSeriesTable load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), schema, path);
}

std::string format_number(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_csv(const TimeSeriesTable& table, const std::string& time_column,
                       const std::string& comment) {
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\n";
  out += time_column;
  for (const auto& n : table.names()) out += "," + n;
  out += "\n";
  for (std::size_t r = 0; r < table.rows(); ++r) {
    out += format_number(table.timestamps()[r]);
    for (std::size_t c = 0; c < table.cols(); ++c) {
      out += ',';
      out += format_number(table.column(c)[r]);
    }
    out += '\n';
  }
  return out;
}

void write_csv(const TimeSeriesTable& table, const std::string& path,
               const std::string& time_column, const std::string& comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << format_csv(table, time_column, comment);
}

TimeSeriesTable resample_uniform(const TimeSeriesTable& table, double period) {
  if (!(period > 0)) throw DataError("resample: period must be positive");
  if (table.rows() < 2) throw DataError("resample: need at least 2 rows");
  const auto& ts = table.timestamps();
  const double t_end = ts.back();
  auto count = static_cast<std::size_t>(std::ceil(t_end / period - 1e-9)) + 1;
  if (t_end < 0) count = 1;

  std::vector<double> grid(count);
  for (std::size_t k = 0; k < count; ++k) grid[k] = period * static_cast<double>(k);

  std::vector<std::vector<double>> out(table.cols(), std::vector<double>(count, kMissing));
  for (std::size_t c = 0; c < table.cols(); ++c) {
    const auto& col = table.column(c);
    std::vector<std::size_t> present;
    for (std::size_t i = 0; i < col.size(); ++i)
      if (!std::isnan(col[i])) present.push_back(i);
    if (present.empty()) continue;
    std::size_t j = 0;  // present[j] is the first sample with time >= grid point
    for (std::size_t k = 0; k < count; ++k) {
      const double g = grid[k];
      while (j < present.size() && ts[present[j]] < g) ++j;
      if (j == present.size()) break;
      const std::size_t right = present[j];
      if (ts[right] == g) {
        out[c][k] = col[right];
        continue;
      }
      if (j == 0) continue;  // before the first observation
      const std::size_t left = present[j - 1];
      const double w = (g - ts[left]) / (ts[right] - ts[left]);
      out[c][k] = col[left] + w * (col[right] - col[left]);
    }
  }
  return TimeSeriesTable(std::move(grid), table.names(), std::move(out));
}

std::pair<TimeSeriesTable, StandardizationRecord> standardize(
    const TimeSeriesTable& table, const std::vector<std::string>& columns) {
  StandardizationRecord record;
  std::vector<std::vector<double>> out;
  for (std::size_t c = 0; c < table.cols(); ++c) out.push_back(table.column(c));
  for (const auto& name : columns) {
    const std::size_t c = table.index_of(name);
    const auto& col = table.column(c);
    double sum = 0.0;
    std::size_t n = 0;
    for (double v : col)
      if (!std::isnan(v)) sum += v, ++n;
    if (n == 0) throw DataError("standardize: column '" + name + "' is all missing");
    if (n < 2) throw DataError("standardize: column '" + name + "' has fewer than 2 values");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double v : col)
      if (!std::isnan(v)) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      throw DataError("standardize: column '" + name + "' has zero variance");
    }
    for (double& v : out[c])
      if (!std::isnan(v)) v = (v - mean) / sd;
    record.stats[name] = {mean, sd};
  }
  return {TimeSeriesTable(table.timestamps(), table.names(), std::move(out)), std::move(record)};
}

TimeSeriesTable unstandardize(const TimeSeriesTable& table, const StandardizationRecord& record) {
  std::vector<std::vector<double>> out;
  for (std::size_t c = 0; c < table.cols(); ++c) {
    out.push_back(table.column(c));
    auto it = record.stats.find(table.names()[c]);
    if (it == record.stats.end()) continue;
    for (double& v : out.back())
      if (!std::isnan(v)) v = v * it->second.sd + it->second.mean;
  }
  return TimeSeriesTable(table.timestamps(), table.names(), std::move(out));
}

std::size_t RestructuredSeries::total_rows() const {
  std::size_t n = 0;
  for (const auto& p : phases) n += p.rows();
  return n;
}

RestructuredSeries lag_restructure(const TimeSeriesTable& table, int stride) {
  if (stride < 1) throw DataError("lag_restructure: stride must be >= 1");
  if (static_cast<std::size_t>(stride) > table.rows()) {
    throw DataError("lag_restructure: stride " + std::to_string(stride) + " exceeds row count " +
                    std::to_string(table.rows()));
  }
  const auto& ts = table.timestamps();
  for (std::size_t i = 1; i < ts.size(); ++i) {
    if (std::abs(ts[i] - ts[i - 1] - 1.0) > 1e-9) {
      throw DataError("lag_restructure: table must hold one row per second (row " +
                      std::to_string(i) + ")");
    }
  }
  RestructuredSeries out;
  out.stride = stride;
  for (int k = 0; k < stride; ++k) {
    std::vector<std::size_t> rows;
    for (std::size_t r = static_cast<std::size_t>(k); r < table.rows(); r += static_cast<std::size_t>(stride))
      rows.push_back(r);
    out.phases.push_back(table.select_rows(rows));
  }
  return out;
}

}  // namespace lvssm
