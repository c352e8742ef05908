#include "choicealign/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "choicealign/error.hpp"

namespace choicealign::csv {

Table::Table(Row header, std::vector<Row> rows) : header_(std::move(header)), rows_(std::move(rows)) {}

std::optional<std::size_t> Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t Table::require_column(std::string_view name) const {
  if (auto c = column(name)) return *c;
  throw_data(fmt::format("csv: missing column '{}'", name));
}

namespace {

// Parses one logical record; returns false at end of input.
bool read_record(std::istream& in, char delim, Row& out) {
  out.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == delim) {
      out.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (!any) return false;
  if (in_quotes) throw_data("csv: unterminated quoted field");
  out.push_back(std::move(field));
  return true;
}

}  // namespace

Table read(std::istream& in, char delimiter) {
  Row header;
  if (!read_record(in, delimiter, header)) throw_data("csv: empty input (no header row)");
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
  std::vector<Row> rows;
  Row row;
  std::size_t line = 1;
  while (read_record(in, delimiter, row)) {
    ++line;
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != header.size()) {
      throw_data(fmt::format("csv: record {} has {} fields, header has {}", line, row.size(), header.size()));
    }
    rows.push_back(row);
  }
  return Table(std::move(header), std::move(rows));
}

Table read_file(const std::string& path, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data(fmt::format("csv: cannot open '{}'", path));
  return read(in, delimiter);
}

std::string escape(std::string_view field, char delimiter) {
  const bool needs = field.find_first_of(std::string{'"', '\n', '\r', delimiter}) != std::string_view::npos;
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const Row& row, char delimiter) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << delimiter;
    out << escape(row[i], delimiter);
  }
  out << '\n';
}

std::string format_double(double v) {
  // fmt's default formatting is shortest round-trip
  return fmt::format("{}", v);
}

double parse_double(std::string_view text, std::string_view what) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw_data(fmt::format("cannot parse {} from '{}'", what, text));
  }
  return v;
}

long long parse_int(std::string_view text, std::string_view what) {
  const double v = parse_double(text, what);
  const auto i = static_cast<long long>(v);
  if (static_cast<double>(i) != v) throw_data(fmt::format("{} must be an integer code, got '{}'", what, text));
  return i;
}

}  // namespace choicealign::csv
