#include <doctest.h>

#include <random>

#include "devsurv/corpus.hpp"
#include "support.hpp"

using namespace devsurv;
using namespace devsurv::corpus;
using devsurv::testing::TempDir;
using devsurv::testing::write_file;

namespace {

const char* kRecord =
    R"({"note_id":"%s","patient_id":"P1","note_datetime":"2008-07-01T18:11:00Z","note_type":"progress","text":"Hip pain."})";

std::string record(const std::string& id) {
  char buf[256];
  std::snprintf(buf, sizeof buf, kRecord, id.c_str());
  return buf;
}

Document prep(const std::string& text, const std::string& when = "2008-07-01T18:11:00") {
  RawNote n;
  n.note_id = "n";
  n.note_datetime = *parse_iso_datetime(when);
  n.text = text;
  return preprocess(n, PreprocessConfig::defaults());
}

}  // namespace

TEST_CASE("ingest: empty file yields no notes") {
  TempDir dir("ingest");
  write_file(dir / "notes.jsonl", "");
  CHECK(ingest_notes(dir / "notes.jsonl").empty());
}

TEST_CASE("ingest: records come back in file order") {
  TempDir dir("ingest");
  write_file(dir / "notes.jsonl", record("a") + "\n" + record("c") + "\n" + record("b") + "\n");
  const auto notes = ingest_notes(dir / "notes.jsonl");
  REQUIRE(notes.size() == 3);
  CHECK(notes[0].note_id == "a");
  CHECK(notes[1].note_id == "c");
  CHECK(notes[2].note_id == "b");
  CHECK(notes[0].text == "Hip pain.");
}

TEST_CASE("ingest: missing note_datetime names line and field") {
  TempDir dir("ingest");
  write_file(dir / "notes.jsonl",
             record("a") + "\n" + R"({"note_id":"b","patient_id":"P1","note_type":"x","text":""})" + "\n");
  try {
    ingest_notes(dir / "notes.jsonl", IngestErrorPolicy::kAbort);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
    CHECK(e.context().at("line") == "2");
    CHECK(e.context().at("field") == "note_datetime");
  }
  std::vector<IngestIssue> issues;
  const auto notes = ingest_notes(dir / "notes.jsonl", IngestErrorPolicy::kSkip, &issues);
  CHECK(notes.size() == 1);
  REQUIRE(issues.size() == 1);
  CHECK(issues[0].line == 2);
  CHECK(issues[0].field == "note_datetime");
}

TEST_CASE("ingest: duplicate note_id aborts under either policy") {
  TempDir dir("ingest");
  write_file(dir / "notes.jsonl", record("a") + "\n" + record("a") + "\n");
  CHECK_THROWS_AS(ingest_notes(dir / "notes.jsonl", IngestErrorPolicy::kSkip), Error);
}

TEST_CASE("ingest: serialize round trip") {
  RawNote n;
  n.note_id = "x\"1";
  n.patient_id = "P";
  n.note_type = "operative";
  n.note_datetime = *parse_iso_datetime("2010-02-03T04:05:06");
  n.text = "Line one.\nLine \"two\".";
  const auto back = parse_note_record(serialize_note_record(n), 1);
  CHECK(back.note_id == n.note_id);
  CHECK(back.text == n.text);
  CHECK(back.note_datetime == n.note_datetime);
}

TEST_CASE("preprocess: sentence splitting") {
  CHECK(prep("LTHA November 2004 demonstrates component wear. Acetabular cup polyethylene wear is present.")
            .sentences.size() == 2);
  CHECK(prep("").sentences.empty());
  CHECK(prep("Seen by Dr. Smith today.").sentences.size() == 1);
  CHECK(prep("Pain in hip\n\nNo fever").sentences.size() == 2);
}

TEST_CASE("tokenize keeps connectors inside tokens and punctuation apart") {
  const auto toks = tokenize("R hip (MRSA) s/p 1/1/05.");
  std::vector<std::string> text;
  for (const auto& t : toks) text.push_back(t.text);
  CHECK(text == std::vector<std::string>{"R", "hip", "(", "MRSA", ")", "s/p", "1/1/05", "."});
}

TEST_CASE("preprocess: spans are sound and sentences tile the text") {
  const auto n = testing::figure2_note();
  const auto d = preprocess(n, PreprocessConfig::defaults());
  std::size_t prev_end = 0;
  for (const auto& s : d.sentences) {
    CHECK(s.span.begin >= prev_end);
    CHECK(s.span.end <= n.text.size());
    CHECK(slice(n.text, s.span) == s.text);
    for (std::size_t k = prev_end; k < s.span.begin; ++k) CHECK(is_space(n.text[k]));
    for (const auto& t : s.tokens) CHECK(slice(n.text, t.span) == t.text);
    prev_end = s.span.end;
  }
  for (const auto& dm : d.dates) CHECK(slice(n.text, dm.span) == dm.surface);
  for (const auto& sec : d.sections) CHECK(slice(n.text, sec.header_span) == sec.header_text);
}

TEST_CASE("preprocess is deterministic") {
  const auto a = prep(testing::figure2_note().text);
  const auto b = prep(testing::figure2_note().text);
  REQUIRE(a.sentences.size() == b.sentences.size());
  for (std::size_t i = 0; i < a.sentences.size(); ++i) CHECK(a.sentences[i].text == b.sentences[i].text);
}

TEST_CASE("sections: figure note headers") {
  const auto d = preprocess(testing::figure2_note(), PreprocessConfig::defaults());
  REQUIRE(d.sections.size() == 2);
  CHECK(d.sections[0].canonical_header == "HISTORY OF PRESENT ILLNESS");
  CHECK(d.sections[1].canonical_header == "PAST MEDICAL HISTORY");
  CHECK(d.sections[0].char_end() == d.sections[1].char_start());
}

TEST_CASE("sections: no headers gives one UNKNOWN section") {
  const std::string text = "Doing well. Walking without aid.";
  const auto secs = detect_sections(text, HeaderLexicon::defaults());
  REQUIRE(secs.size() == 1);
  CHECK(secs[0].canonical_header == kUnknownSection);
  CHECK(secs[0].char_start() == 0);
  CHECK(secs[0].char_end() == text.size());
}

TEST_CASE("sections: case-folded lexicon match and uppercase rule") {
  HeaderLexicon lex{{"Patient History"}};
  auto secs = detect_sections("patient history:\nHip pain.\nIMAGING:\nNormal.", lex);
  REQUIRE(secs.size() == 2);
  CHECK(secs[0].canonical_header == "Patient History");
  CHECK(secs[0].header_text == "patient history");
  CHECK(secs[1].header_text == "IMAGING");
}

TEST_CASE("dates: figure note mentions and bins") {
  const auto when = *parse_iso_datetime("2008-07-01T18:11:00");
  auto d = normalize_dates("Hx 1/1/05 hip.", when);
  REQUIRE(d.size() == 1);
  CHECK(d[0].resolved_date == testing::ymd(2005, 1, 1));
  CHECK_FALSE(d[0].delta_bin.future);
  CHECK(d[0].bin_label == "-1-5 years");

  d = normalize_dates("LTHA November 2004 demonstrates wear.", when);
  REQUIRE(d.size() == 1);
  CHECK(d[0].resolved_date == testing::ymd(2004, 11, 1));
  CHECK(d[0].bin_label == "-1-5 years");

  d = normalize_dates("Seen 2008-07-01.", when);
  REQUIRE(d.size() == 1);
  CHECK(d[0].bin_label == "-0-1 days");
}

TEST_CASE("dates: two-digit pivot and ambiguous surfaces") {
  const auto when = *parse_iso_datetime("2008-07-01T00:00:00");
  auto d = normalize_dates("on 3/4/49 and 3/4/50", when);
  REQUIRE(d.size() == 2);
  CHECK(d[0].resolved_date == testing::ymd(2049, 3, 4));
  CHECK(d[1].resolved_date == testing::ymd(1950, 3, 4));
  CHECK(normalize_dates("dose 5/6 daily", when).empty());
  CHECK(normalize_dates("2/30/2005", when).empty());
}

TEST_CASE("delta bins: boundaries go to the smaller bin") {
  DeltaBinScheme s;
  CHECK(s.label_for(0) == "-0-1 days");
  CHECK(s.label_for(-1) == "-0-1 days");
  CHECK(s.label_for(-2) == "-1-7 days");
  CHECK(s.label_for(30) == "+7-30 days");
  CHECK(s.label_for(-365) == "-30-365 days");
  CHECK(s.label_for(-366) == "-1-5 years");
  CHECK(s.label_for(4000) == "+5+ years");
  const DeltaBinScheme bad{{5, 3}};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("delta bins agree with a direct re-derivation on random pairs") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> day(-8000, 8000);
  DeltaBinScheme s;
  const std::vector<std::pair<long, std::string>> table{
      {1, "0-1 days"}, {7, "1-7 days"}, {30, "7-30 days"}, {365, "30-365 days"}, {1825, "1-5 years"}};
  for (int i = 0; i < 10000; ++i) {
    const Date base = testing::ymd(2008, 7, 1) + std::chrono::days(day(rng));
    const Date other = testing::ymd(2008, 7, 1) + std::chrono::days(day(rng));
    const long delta = days_between(base, other);
    std::string expect = "5+ years";
    for (const auto& [hi, label] : table)
      if (std::labs(delta) <= hi) {
        expect = label;
        break;
      }
    expect = (delta > 0 ? "+" : "-") + expect;
    REQUIRE(s.label_for(delta) == expect);
  }
}
