#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace devsurv {

/// One parsed CSV record addressed by header name.
class CsvRow {
 public:
  using Index = std::unordered_map<std::string, std::size_t>;

  CsvRow(std::shared_ptr<const Index> index, std::vector<std::string> fields, std::size_t line)
      : index_(std::move(index)), fields_(std::move(fields)), line_(line) {}

  /// Throws Error(kParse) naming the line when the column is absent.
  const std::string& at(std::string_view column) const;
  /// Empty string when the column does not exist or is short.
  std::string get(std::string_view column) const;
  bool has(std::string_view column) const;
  std::size_t line() const noexcept { return line_; }
  const std::vector<std::string>& fields() const noexcept { return fields_; }

 private:
  std::shared_ptr<const Index> index_;
  std::vector<std::string> fields_;
  std::size_t line_;
};

/// RFC-4180 style reader: comma separated, double-quote escaping, header row.
class CsvTable {
 public:
  static CsvTable read(const std::filesystem::path& path);
  static CsvTable parse(std::istream& in, const std::string& source_name = "<stream>");

  const std::vector<std::string>& header() const noexcept { return header_; }
  const std::vector<CsvRow>& rows() const noexcept { return rows_; }

  /// Throws Error(kParse) when any of the columns is missing from the header.
  void require_columns(const std::vector<std::string>& columns) const;

 private:
  std::string source_;
  std::vector<std::string> header_;
  std::shared_ptr<CsvRow::Index> index_ = std::make_shared<CsvRow::Index>();
  std::vector<CsvRow> rows_;
};

std::vector<std::string> parse_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}
  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
};

/// Formats with up to `digits` significant digits, shortest round-trip style.
std::string fmt_double(double v, int digits = 10);
/// Fixed decimal formatting.
std::string fmt_fixed(double v, int decimals);

}  // namespace devsurv
