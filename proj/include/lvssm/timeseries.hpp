#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lvssm {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

/// Timestamped multivariate series. A missing cell is stored as NaN, so the
/// missing mask is exactly the set of cells that carry no value.
class TimeSeriesTable {
 public:
  TimeSeriesTable() = default;

  /// Validates that every column matches the timestamp count, column names are
  /// unique and timestamps are non-decreasing.
  TimeSeriesTable(std::vector<double> timestamps, std::vector<std::string> names,
                  std::vector<std::vector<double>> columns);

  std::size_t rows() const { return timestamps_.size(); }
  std::size_t cols() const { return names_.size(); }

  const std::vector<double>& timestamps() const { return timestamps_; }
  const std::vector<std::string>& names() const { return names_; }

  const std::vector<double>& column(std::size_t index) const { return columns_.at(index); }
  const std::vector<double>& column(std::string_view name) const;

  bool has_column(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  bool is_missing(std::size_t col, std::size_t row) const {
    return std::isnan(columns_.at(col).at(row));
  }

  /// Seconds per row when the timestamps form a uniform grid.
  std::optional<double> sample_period() const;

  bool strictly_increasing() const;

  TimeSeriesTable with_column(std::string name, std::vector<double> values) const;
  TimeSeriesTable select_columns(const std::vector<std::string>& names) const;
  TimeSeriesTable select_rows(const std::vector<std::size_t>& rows) const;
  /// Rows [begin, end).
  TimeSeriesTable slice(std::size_t begin, std::size_t end) const;

  friend bool operator==(const TimeSeriesTable& a, const TimeSeriesTable& b);

 private:
  std::vector<double> timestamps_;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
};

enum class ColumnType { Real, Integer };

struct CsvSchema {
  std::string time_column = "t";
  /// Declared columns; when empty every non-time column is loaded as Real.
  std::vector<std::pair<std::string, ColumnType>> columns;
};

/// Loads the comma-separated dialect: header row, time column, empty cell =
/// missing. Leading lines starting with '#' are skipped. Unparseable data
/// cells become missing; an unparseable or decreasing timestamp is an error.
TimeSeriesTable load_csv(const std::string& path, const CsvSchema& schema = {});
TimeSeriesTable parse_csv(std::string_view text, const CsvSchema& schema = {},
                          const std::string& source_name = "<memory>");

/// Writes the same dialect with shortest round-trip number formatting.
/// `comment`, when non-empty, is emitted as a leading '# ' line.
void write_csv(const TimeSeriesTable& table, const std::string& path,
               const std::string& time_column = "t", const std::string& comment = "");
std::string format_csv(const TimeSeriesTable& table, const std::string& time_column = "t",
                       const std::string& comment = "");

std::string format_number(double v);

/// Linear interpolation onto 0, period, 2*period, ... up to the first grid
/// point at or past the last timestamp. Grid points outside a column's
/// observed range are missing.
TimeSeriesTable resample_uniform(const TimeSeriesTable& table, double period);

struct ColumnStats {
  double mean = 0.0;
  double sd = 1.0;
};

struct StandardizationRecord {
  std::map<std::string, ColumnStats> stats;
};

std::pair<TimeSeriesTable, StandardizationRecord> standardize(
    const TimeSeriesTable& table, const std::vector<std::string>& columns);

TimeSeriesTable unstandardize(const TimeSeriesTable& table, const StandardizationRecord& record);

/// Interleaved phase sequences: phase k holds rows k, k+stride, k+2*stride, ...
struct RestructuredSeries {
  std::vector<TimeSeriesTable> phases;
  int stride = 1;

  std::size_t total_rows() const;
};

RestructuredSeries lag_restructure(const TimeSeriesTable& table, int stride);

}  // namespace lvssm
