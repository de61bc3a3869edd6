#include "devsurv/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "devsurv/common.hpp"

namespace devsurv {

const std::string& CsvRow::at(std::string_view column) const {
  auto it = index_->find(std::string(column));
  if (it == index_->end() || it->second >= fields_.size())
    throw Error(ErrorCode::kParse, "missing column '" + std::string(column) + "'",
                {{"line", std::to_string(line_)}, {"field", std::string(column)}});
  return fields_[it->second];
}

std::string CsvRow::get(std::string_view column) const {
  auto it = index_->find(std::string(column));
  if (it == index_->end() || it->second >= fields_.size()) return {};
  return fields_[it->second];
}

bool CsvRow::has(std::string_view column) const {
  return index_->find(std::string(column)) != index_->end();
}

std::vector<std::string> parse_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

CsvTable CsvTable::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::kMissingInput, "cannot open " + path.string(),
                {{"path", path.string()}});
  return parse(in, path.string());
}

CsvTable CsvTable::parse(std::istream& in, const std::string& source_name) {
  CsvTable t;
  t.source_ = source_name;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = parse_csv_line(line);
    if (!have_header) {
      for (auto& f : fields) f = std::string(trim(f));
      t.header_ = fields;
      for (std::size_t i = 0; i < fields.size(); ++i) t.index_->emplace(fields[i], i);
      have_header = true;
      continue;
    }
    t.rows_.emplace_back(t.index_, std::move(fields), lineno);
  }
  return t;
}

void CsvTable::require_columns(const std::vector<std::string>& columns) const {
  std::vector<std::string> missing;
  for (const auto& c : columns)
    if (!index_->count(c)) missing.push_back(c);
  if (!missing.empty())
    throw Error(ErrorCode::kParse, source_ + ": missing columns " + join(missing, ","),
                {{"path", source_}, {"columns", join(missing, ",")}});
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << csv_escape(fields[i]);
  }
  out_ << '\n';
}

std::string fmt_double(double v, int digits) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string fmt_fixed(double v, int decimals) {
  if (std::isnan(v)) return "NaN";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace devsurv
