#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace choicealign::csv {

using Row = std::vector<std::string>;

/// Header row plus data rows. Quoted fields (RFC 4180) are supported.
class Table {
 public:
  Table() = default;
  Table(Row header, std::vector<Row> rows);

  const Row& header() const { return header_; }
  const std::vector<Row>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

  std::optional<std::size_t> column(std::string_view name) const;
  /// Throws Error(kData) naming the missing column.
  std::size_t require_column(std::string_view name) const;

 private:
  Row header_;
  std::vector<Row> rows_;
};

Table read(std::istream& in, char delimiter = ',');
Table read_file(const std::string& path, char delimiter = ',');

std::string escape(std::string_view field, char delimiter = ',');
void write_row(std::ostream& out, const Row& row, char delimiter = ',');

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

}  // namespace choicealign::csv
