#include "devsurv/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <set>

namespace devsurv::corpus {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Ingest

namespace {

Error record_error(std::size_t line, const std::string& field, const std::string& what) {
  return Error(ErrorCode::kParse,
               "line " + std::to_string(line) + ": field '" + field + "': " + what,
               {{"line", std::to_string(line)}, {"field", field}});
}

std::string required_string(const json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) throw record_error(line, field, "missing");
  if (!it->is_string()) throw record_error(line, field, "expected string");
  return it->get<std::string>();
}

}  // namespace

RawNote parse_note_record(std::string_view json_line, std::size_t line_number) {
  json obj;
  try {
    obj = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw record_error(line_number, "<record>", std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw record_error(line_number, "<record>", "expected JSON object");

  RawNote note;
  note.note_id = required_string(obj, "note_id", line_number);
  if (note.note_id.empty()) throw record_error(line_number, "note_id", "empty");
  note.patient_id = required_string(obj, "patient_id", line_number);
  if (note.patient_id.empty()) throw record_error(line_number, "patient_id", "empty");
  auto when = required_string(obj, "note_datetime", line_number);
  auto ts = parse_iso_datetime(when);
  if (!ts) throw record_error(line_number, "note_datetime", "unparseable '" + when + "'");
  note.note_datetime = *ts;
  note.note_type = required_string(obj, "note_type", line_number);
  note.text = required_string(obj, "text", line_number);
  return note;
}

std::string serialize_note_record(const RawNote& note) {
  json obj = {{"note_id", note.note_id},
              {"patient_id", note.patient_id},
              {"note_datetime", format_datetime(note.note_datetime)},
              {"note_type", note.note_type},
              {"text", note.text}};
  return obj.dump();
}

NoteReader::NoteReader(const std::filesystem::path& path, IngestErrorPolicy policy)
    : in_(path), policy_(policy) {
  if (!in_)
    throw Error(ErrorCode::kMissingInput, "cannot open notes file " + path.string(),
                {{"path", path.string()}});
}

std::optional<RawNote> NoteReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (trim(line).empty()) continue;
    RawNote note;
    try {
      note = parse_note_record(line, line_);
    } catch (const Error& e) {
      if (policy_ == IngestErrorPolicy::kAbort) throw;
      auto field = e.context().count("field") ? e.context().at("field") : std::string();
      issues_.push_back({line_, field, e.what()});
      continue;
    }
    if (!seen_.insert(note.note_id).second)
      throw Error(ErrorCode::kDuplicate,
                  "line " + std::to_string(line_) + ": duplicate note_id '" + note.note_id + "'",
                  {{"line", std::to_string(line_)}, {"note_id", note.note_id}});
    return note;
  }
  return std::nullopt;
}

std::vector<RawNote> ingest_notes(const std::filesystem::path& path, IngestErrorPolicy policy,
                                  std::vector<IngestIssue>* issues) {
  NoteReader reader(path, policy);
  std::vector<RawNote> notes;
  while (auto n = reader.next()) notes.push_back(std::move(*n));
  if (issues) *issues = reader.issues();
  return notes;
}

// ---------------------------------------------------------------------------
// Tokenizer

namespace {

bool is_connector(char c) { return c == '/' || c == '-' || c == '.' || c == '\'' || c == ':'; }

}  // namespace

std::vector<Token> tokenize(std::string_view text, std::size_t offset) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    char c = text[i];
    if (is_space(c)) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (is_alnum(c)) {
      ++i;
      while (i < n) {
        if (is_alnum(text[i])) {
          ++i;
        } else if (is_connector(text[i]) && i + 1 < n && is_alnum(text[i + 1])) {
          i += 2;
        } else {
          break;
        }
      }
    } else {
      ++i;
    }
    Token t;
    t.span = {offset + start, offset + i};
    t.text = std::string(text.substr(start, i - start));
    t.lower = to_lower(t.text);
    tokens.push_back(std::move(t));
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Sections

namespace {

struct Line {
  std::size_t begin;  // first byte of the line
  std::size_t end;    // one past the last byte before '\n'
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '\n') {
      lines.push_back({start, i});
      start = i + 1;
    }
  }
  return lines;
}

bool mostly_uppercase(std::string_view s) {
  std::size_t letters = 0, upper = 0;
  for (char c : s) {
    if (c >= 'A' && c <= 'Z') {
      ++letters;
      ++upper;
    } else if (c >= 'a' && c <= 'z') {
      ++letters;
    }
  }
  return letters >= 2 && upper * 5 >= letters * 4;
}

}  // namespace

std::vector<SectionSpan> detect_sections(std::string_view text, const HeaderLexicon& lexicon) {
  if (lexicon.headers.empty())
    throw Error(ErrorCode::kInvalidConfig, "header lexicon is empty");

  std::vector<SectionSpan> headers;
  for (const Line& line : split_lines(text)) {
    std::string_view raw = text.substr(line.begin, line.end - line.begin);
    std::string_view content = trim(raw);
    if (content.empty()) continue;
    const bool colon = content.back() == ':';
    std::string_view name = colon ? trim(content.substr(0, content.size() - 1)) : content;
    if (name.empty()) continue;

    std::string canonical;
    for (const auto& entry : lexicon.headers) {
      if (iequals(name, entry)) {
        canonical = entry;
        break;
      }
    }
    if (canonical.empty()) {
      if (!(colon && mostly_uppercase(name))) continue;
      canonical = std::string(kUnknownSection);
    }
    SectionSpan s;
    s.header_text = std::string(name);
    s.canonical_header = std::move(canonical);
    s.header_span.begin = static_cast<std::size_t>(name.data() - text.data());
    s.header_span.end = s.header_span.begin + name.size();
    s.span.begin = line.begin + static_cast<std::size_t>(content.data() - raw.data());
    headers.push_back(std::move(s));
  }

  std::vector<SectionSpan> sections;
  const std::size_t first = headers.empty() ? text.size() : headers.front().span.begin;
  if (!trim(text.substr(0, first)).empty()) {
    SectionSpan pre;
    pre.canonical_header = std::string(kUnknownSection);
    pre.span = {0, first};
    sections.push_back(std::move(pre));
  }
  for (std::size_t i = 0; i < headers.size(); ++i) {
    headers[i].span.end = i + 1 < headers.size() ? headers[i + 1].span.begin : text.size();
    sections.push_back(std::move(headers[i]));
  }
  return sections;
}

std::vector<SectionSpan> detect_sections(const Document& doc, const HeaderLexicon& lexicon) {
  return detect_sections(doc.note.text, lexicon);
}

HeaderLexicon HeaderLexicon::defaults() {
  return {{"HISTORY OF PRESENT ILLNESS", "PAST MEDICAL HISTORY", "PAST SURGICAL HISTORY",
           "FAMILY HISTORY", "SOCIAL HISTORY", "Patient History", "CHIEF COMPLAINT",
           "MEDICATIONS", "ALLERGIES", "REVIEW OF SYSTEMS", "PHYSICAL EXAMINATION",
           "PHYSICAL EXAM", "IMAGING", "FINDINGS", "IMPRESSION", "ASSESSMENT",
           "ASSESSMENT AND PLAN", "PLAN", "HOSPITAL COURSE", "PROCEDURE", "PROCEDURES",
           "OPERATIVE PROCEDURE", "PREOPERATIVE DIAGNOSIS", "POSTOPERATIVE DIAGNOSIS",
           "INDICATIONS", "IMPLANTS", "COMPLICATIONS", "DISPOSITION"}};
}

HeaderLexicon HeaderLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::kMissingInput, "cannot open header lexicon " + path.string(),
                {{"path", path.string()}});
  HeaderLexicon lex;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    lex.headers.emplace_back(t);
  }
  if (lex.headers.empty())
    throw Error(ErrorCode::kInvalidConfig, "header lexicon " + path.string() + " is empty",
                {{"path", path.string()}});
  return lex;
}

// ---------------------------------------------------------------------------
// Sentences

namespace {

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

/// The whitespace-delimited word that ends at `end` (exclusive), lowercased,
/// with leading brackets/quotes removed.
std::string word_before(std::string_view text, std::size_t region_begin, std::size_t end) {
  std::size_t start = end;
  while (start > region_begin && !is_space(text[start - 1])) --start;
  std::string_view w = text.substr(start, end - start);
  while (!w.empty() && (w.front() == '(' || w.front() == '"' || w.front() == '[')) w.remove_prefix(1);
  return to_lower(w);
}

void emit_sentence(std::string_view text, std::size_t begin, std::size_t end,
                   std::vector<CharSpan>& out) {
  while (begin < end && is_space(text[begin])) ++begin;
  while (end > begin && is_space(text[end - 1])) --end;
  if (end > begin) out.push_back({begin, end});
}

void split_region(std::string_view text, std::size_t begin, std::size_t end,
                  const std::set<std::string>& abbreviations, std::vector<CharSpan>& out) {
  std::size_t start = begin;
  std::size_t i = begin;
  while (i < end) {
    // Blank line: newline, optional horizontal space, newline.
    if (text[i] == '\n') {
      std::size_t j = i + 1;
      while (j < end && text[j] != '\n' && is_space(text[j])) ++j;
      if (j < end && text[j] == '\n') {
        emit_sentence(text, start, i, out);
        start = j + 1;
        i = j + 1;
        continue;
      }
    }
    if (is_terminator(text[i])) {
      std::size_t j = i;
      while (j < end && is_terminator(text[j])) ++j;
      std::size_t k = j;
      while (k < end && (text[k] == ')' || text[k] == '"' || text[k] == '\'')) ++k;
      const bool at_break = k >= end || is_space(text[k]);
      if (at_break) {
        const bool guarded = text[i] == '.' && j == i + 1 &&
                             abbreviations.count(word_before(text, begin, j)) > 0;
        if (!guarded) {
          emit_sentence(text, start, k, out);
          start = k;
        }
      }
      i = k > i ? k : i + 1;
      continue;
    }
    ++i;
  }
  emit_sentence(text, start, end, out);
}

}  // namespace

Document preprocess(const RawNote& note, const PreprocessConfig& config) {
  Document doc;
  doc.note = note;
  const std::string_view text = doc.note.text;
  if (trim(text).empty()) return doc;

  doc.sections = detect_sections(text, config.header_lexicon);

  std::set<std::string> abbreviations;
  for (const auto& a : config.abbreviations) abbreviations.insert(to_lower(trim(a)));

  // Header lines are hard boundaries and become their own sentences.
  std::vector<CharSpan> spans;
  std::size_t cursor = 0;
  for (const auto& s : doc.sections) {
    if (s.header_text.empty()) continue;
    std::size_t line_end = text.find('\n', s.header_span.end);
    if (line_end == std::string_view::npos) line_end = text.size();
    split_region(text, cursor, s.span.begin, abbreviations, spans);
    emit_sentence(text, s.span.begin, line_end, spans);
    cursor = line_end;
  }
  split_region(text, cursor, text.size(), abbreviations, spans);

  for (const CharSpan& span : spans) {
    Sentence s;
    s.index = doc.sentences.size();
    s.span = span;
    s.text = std::string(slice(text, span));
    s.tokens = tokenize(s.text, span.begin);
    for (std::size_t k = 0; k < doc.sections.size(); ++k) {
      if (doc.sections[k].span.contains(span.begin)) {
        s.section = static_cast<int>(k);
        break;
      }
    }
    doc.sentences.push_back(std::move(s));
  }

  doc.dates = normalize_dates(text, note.note_datetime, config.bins);
  return doc;
}

const SectionSpan* Document::section_of(const Sentence& s) const {
  if (s.section < 0 || static_cast<std::size_t>(s.section) >= sections.size()) return nullptr;
  return &sections[static_cast<std::size_t>(s.section)];
}

std::vector<const DateMention*> Document::dates_in(const Sentence& s) const {
  std::vector<const DateMention*> out;
  for (const auto& d : dates)
    if (d.span.begin >= s.span.begin && d.span.end <= s.span.end) out.push_back(&d);
  return out;
}

// ---------------------------------------------------------------------------
// Config

PreprocessConfig PreprocessConfig::defaults() {
  PreprocessConfig c;
  c.abbreviations = {"dr.",  "mr.",  "mrs.", "ms.",  "vs.",   "s/p",  "e.g.", "i.e.",
                     "etc.", "pt.",  "hx.",  "dx.",  "tx.",   "no.",  "st.",  "jr.",
                     "sr.",  "fig.", "approx.", "appt.", "b.i.d.", "t.i.d.", "q.d.", "p.o."};
  c.header_lexicon = HeaderLexicon::defaults();
  return c;
}

PreprocessConfig PreprocessConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::kMissingInput, "cannot open preprocess config " + path.string(),
                {{"path", path.string()}});
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kInvalidConfig, path.string() + ": " + e.what(),
                {{"path", path.string()}});
  }
  if (!j.is_object())
    throw Error(ErrorCode::kInvalidConfig, path.string() + ": expected a JSON object");

  static const std::set<std::string> kKeys = {"abbreviations", "header_lexicon",
                                              "header_lexicon_path", "delta_bin_edges_days"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!kKeys.count(it.key()))
      throw Error(ErrorCode::kInvalidConfig, path.string() + ": unknown key '" + it.key() + "'",
                  {{"path", path.string()}, {"key", it.key()}});

  PreprocessConfig c = defaults();
  try {
    if (j.contains("abbreviations"))
      c.abbreviations = j["abbreviations"].get<std::vector<std::string>>();
    if (j.contains("header_lexicon"))
      c.header_lexicon.headers = j["header_lexicon"].get<std::vector<std::string>>();
    if (j.contains("header_lexicon_path")) {
      std::filesystem::path p = j["header_lexicon_path"].get<std::string>();
      if (p.is_relative()) p = path.parent_path() / p;
      c.header_lexicon = HeaderLexicon::load(p);
    }
    if (j.contains("delta_bin_edges_days"))
      c.bins.edges_days = j["delta_bin_edges_days"].get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, path.string() + ": " + e.what(),
                {{"path", path.string()}});
  }
  c.bins.validate();
  return c;
}

}  // namespace devsurv::corpus
