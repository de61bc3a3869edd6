#include <array>
#include <charconv>
#include <cstdlib>

#include "devsurv/corpus.hpp"

namespace devsurv::corpus {

DeltaBin DeltaBinScheme::bin(long delta_days) const {
  DeltaBin b;
  b.future = delta_days > 0;
  const long a = std::labs(delta_days);
  b.index = static_cast<int>(edges_days.size());
  for (std::size_t k = 0; k < edges_days.size(); ++k) {
    if (a <= edges_days[k]) {
      b.index = static_cast<int>(k);
      break;
    }
  }
  return b;
}

namespace {

std::string span_label(int lo, int hi, bool open) {
  // Spans that start on a whole year are written in years.
  const bool years = lo >= 365 && lo % 365 == 0 && (open || hi % 365 == 0);
  const int unit = years ? 365 : 1;
  std::string s = std::to_string(lo / unit);
  s += open ? "+" : "-" + std::to_string(hi / unit);
  s += years ? " years" : " days";
  return s;
}

}  // namespace

std::string DeltaBinScheme::label(DeltaBin b) const {
  const auto k = static_cast<std::size_t>(b.index);
  const int lo = k == 0 ? 0 : edges_days[k - 1];
  const bool open = k >= edges_days.size();
  const int hi = open ? 0 : edges_days[k];
  return (b.future ? "+" : "-") + span_label(lo, hi, open);
}

std::vector<std::string> DeltaBinScheme::all_labels() const {
  std::vector<std::string> out;
  for (bool future : {false, true})
    for (int k = 0; k <= static_cast<int>(edges_days.size()); ++k)
      out.push_back(label({future, k}));
  return out;
}

void DeltaBinScheme::validate() const {
  if (edges_days.empty())
    throw Error(ErrorCode::kInvalidConfig, "delta bin edges must not be empty");
  for (std::size_t k = 0; k < edges_days.size(); ++k) {
    if (edges_days[k] <= 0 || (k > 0 && edges_days[k] <= edges_days[k - 1]))
      throw Error(ErrorCode::kInvalidConfig,
                  "delta bin edges must be positive and strictly increasing");
  }
}

namespace {

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}

int to_int(std::string_view s) {
  int v = 0;
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

/// M/D/YYYY or M/D/YY.
std::optional<Date> parse_slash_date(std::string_view s) {
  auto parts = split(s, '/');
  if (parts.size() != 3) return std::nullopt;
  const auto& m = parts[0];
  const auto& d = parts[1];
  const auto& y = parts[2];
  if (!all_digits(m) || !all_digits(d) || !all_digits(y)) return std::nullopt;
  if (m.size() > 2 || d.size() > 2 || (y.size() != 2 && y.size() != 4)) return std::nullopt;
  int year = to_int(y);
  if (y.size() == 2) year += year <= 49 ? 2000 : 1900;
  return make_date(year, static_cast<unsigned>(to_int(m)), static_cast<unsigned>(to_int(d)));
}

/// YYYY-MM-DD.
std::optional<Date> parse_dash_date(std::string_view s) {
  if (s.size() != 10) return std::nullopt;
  return parse_iso_date(s);
}

int month_number(std::string_view lower) {
  static constexpr std::array<std::string_view, 12> kFull = {
      "january", "february", "march",     "april",   "may",      "june",
      "july",    "august",   "september", "october", "november", "december"};
  for (std::size_t i = 0; i < kFull.size(); ++i) {
    if (lower == kFull[i]) return static_cast<int>(i) + 1;
    // Three-letter abbreviations, plus "sept".
    if (lower.size() == 3 && kFull[i].substr(0, 3) == lower) return static_cast<int>(i) + 1;
  }
  if (lower == "sept") return 9;
  return 0;
}

}  // namespace

std::vector<DateMention> normalize_dates(std::string_view text, Timestamp note_datetime,
                                         const DeltaBinScheme& bins) {
  const Date anchor = date_of(note_datetime);
  const auto tokens = tokenize(text);
  std::vector<DateMention> out;

  auto emit = [&](CharSpan span, Date resolved) {
    DateMention m;
    m.span = span;
    m.surface = std::string(slice(text, span));
    m.resolved_date = resolved;
    m.delta_days = days_between(anchor, resolved);
    m.delta_bin = bins.bin(m.delta_days);
    m.bin_label = bins.label(m.delta_bin);
    out.push_back(std::move(m));
  };

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Token& t = tokens[i];
    if (auto d = parse_slash_date(t.text)) {
      emit(t.span, *d);
      continue;
    }
    if (auto d = parse_dash_date(t.text)) {
      emit(t.span, *d);
      continue;
    }
    if (int month = month_number(t.lower); month > 0) {
      std::size_t j = i + 1;
      if (j < tokens.size() && tokens[j].text == ",") ++j;
      if (j < tokens.size() && tokens[j].text.size() == 4 && all_digits(tokens[j].text)) {
        const int year = to_int(tokens[j].text);
        if (year >= 1900 && year <= 2099) {
          emit({t.span.begin, tokens[j].span.end},
               *make_date(year, static_cast<unsigned>(month), 1));
          i = j;
        }
      }
    }
  }
  return out;
}

std::vector<DateMention> normalize_dates(const Document& doc, Timestamp note_datetime,
                                         const DeltaBinScheme& bins) {
  return normalize_dates(doc.note.text, note_datetime, bins);
}

}  // namespace devsurv::corpus
