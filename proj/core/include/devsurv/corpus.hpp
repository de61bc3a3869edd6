#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "devsurv/common.hpp"

namespace devsurv::corpus {

/// Half-open byte range [begin, end) into a note's text.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool contains(std::size_t pos) const { return pos >= begin && pos < end; }
  bool overlaps(const CharSpan& o) const { return begin < o.end && o.begin < end; }
  friend bool operator==(const CharSpan&, const CharSpan&) = default;
  friend auto operator<=>(const CharSpan&, const CharSpan&) = default;
};

inline std::string_view slice(std::string_view text, CharSpan span) {
  return text.substr(span.begin, span.end - span.begin);
}

struct RawNote {
  std::string note_id;
  std::string patient_id;
  Timestamp note_datetime{};
  std::string note_type;
  std::string text;
};

// ---------------------------------------------------------------------------
// Ingest

enum class IngestErrorPolicy { kSkip, kAbort };

struct IngestIssue {
  std::size_t line = 0;
  std::string field;
  std::string message;
};

/// Parses one line-delimited JSON note record. Throws Error(kParse) whose
/// context carries "line" and "field".
RawNote parse_note_record(std::string_view json_line, std::size_t line_number);

std::string serialize_note_record(const RawNote& note);

/// Streams notes from a JSONL file in file order. Malformed records are
/// skipped (and recorded in issues()) or rethrown according to the policy.
/// A repeated note_id always aborts with Error(kDuplicate).
class NoteReader {
 public:
  NoteReader(const std::filesystem::path& path, IngestErrorPolicy policy);

  std::optional<RawNote> next();
  const std::vector<IngestIssue>& issues() const noexcept { return issues_; }

 private:
  std::ifstream in_;
  IngestErrorPolicy policy_;
  std::size_t line_ = 0;
  std::unordered_set<std::string> seen_;
  std::vector<IngestIssue> issues_;
};

std::vector<RawNote> ingest_notes(const std::filesystem::path& path,
                                  IngestErrorPolicy policy = IngestErrorPolicy::kSkip,
                                  std::vector<IngestIssue>* issues = nullptr);

// ---------------------------------------------------------------------------
// Markup types

struct Token {
  CharSpan span;
  std::string text;
  std::string lower;
};

struct Sentence {
  std::size_t index = 0;
  CharSpan span;
  std::string text;
  std::vector<Token> tokens;  // spans are absolute note offsets
  int section = -1;           // index into Document::sections, -1 when none
};

struct SectionSpan {
  std::string header_text;       // verbatim, without the trailing ':'
  std::string canonical_header;  // lexicon entry or "UNKNOWN"
  CharSpan header_span;          // where header_text sits in the note
  CharSpan span;                 // header line through the next header

  std::size_t char_start() const { return span.begin; }
  std::size_t char_end() const { return span.end; }
};

inline constexpr std::string_view kUnknownSection = "UNKNOWN";

/// Signed relative-time bin: past (delta <= 0) or future, index into the
/// scheme's edges (edges.size() is the open-ended bin).
struct DeltaBin {
  bool future = false;
  int index = 0;
  friend bool operator==(const DeltaBin&, const DeltaBin&) = default;
};

/// Bin boundaries in days. A delta exactly on an edge goes to the smaller bin.
struct DeltaBinScheme {
  std::vector<int> edges_days{1, 7, 30, 365, 1825};

  DeltaBin bin(long delta_days) const;
  std::string label(DeltaBin bin) const;
  std::string label_for(long delta_days) const { return label(bin(delta_days)); }
  std::vector<std::string> all_labels() const;
  /// Throws Error(kInvalidConfig) unless edges are positive and increasing.
  void validate() const;
};

struct DateMention {
  std::string surface;
  Date resolved_date{};
  long delta_days = 0;
  DeltaBin delta_bin;
  std::string bin_label;
  CharSpan span;
};

struct HeaderLexicon {
  std::vector<std::string> headers;

  static HeaderLexicon defaults();
  /// Plain text, one header per line, '#' starts a comment line.
  static HeaderLexicon load(const std::filesystem::path& path);
};

struct PreprocessConfig {
  std::vector<std::string> abbreviations;
  HeaderLexicon header_lexicon;
  DeltaBinScheme bins;

  static PreprocessConfig defaults();
  /// JSON object with optional keys "abbreviations", "header_lexicon",
  /// "header_lexicon_path", "delta_bin_edges_days". Unknown keys are rejected.
  static PreprocessConfig load(const std::filesystem::path& path);
};

struct Document {
  RawNote note;
  std::vector<Sentence> sentences;
  std::vector<SectionSpan> sections;
  std::vector<DateMention> dates;

  const SectionSpan* section_of(const Sentence& s) const;
  std::vector<const DateMention*> dates_in(const Sentence& s) const;
};

// ---------------------------------------------------------------------------
// Operations

/// Splits on whitespace and punctuation; punctuation becomes its own token.
/// Connector characters (/ - . ' :) stay inside a token when flanked by
/// alphanumerics, so "s/p", "1/1/05" and "M/L" are single tokens.
std::vector<Token> tokenize(std::string_view text, std::size_t offset = 0);

std::vector<SectionSpan> detect_sections(std::string_view text, const HeaderLexicon& lexicon);
std::vector<SectionSpan> detect_sections(const Document& doc, const HeaderLexicon& lexicon);

/// Recognizes M/D/YYYY, M/D/YY, YYYY-MM-DD and "Month YYYY" (first of month).
std::vector<DateMention> normalize_dates(std::string_view text, Timestamp note_datetime,
                                         const DeltaBinScheme& bins = {});
std::vector<DateMention> normalize_dates(const Document& doc, Timestamp note_datetime,
                                         const DeltaBinScheme& bins = {});

Document preprocess(const RawNote& note, const PreprocessConfig& config);

}  // namespace devsurv::corpus
