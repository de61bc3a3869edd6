#include <doctest.h>

#include <algorithm>

#include "devsurv/pipeline.hpp"
#include "support.hpp"

using namespace devsurv;
using namespace devsurv::extraction;
using devsurv::testing::TempDir;
using devsurv::testing::write_file;

namespace {

const pipeline::Resources& resources() {
  static const auto res = pipeline::Resources::load(pipeline::ResourcePaths::under(testing::data_dir()));
  return res;
}

corpus::Sentence sentence(const std::string& text) {
  corpus::RawNote n;
  n.note_id = "s";
  n.note_datetime = *parse_iso_datetime("2008-07-01T00:00:00");
  n.text = text;
  auto d = corpus::preprocess(n, corpus::PreprocessConfig::defaults());
  REQUIRE(d.sentences.size() == 1);
  return d.sentences[0];
}

std::vector<EntityMention> of_type(const std::vector<EntityMention>& ms, EntityType t) {
  std::vector<EntityMention> out;
  std::copy_if(ms.begin(), ms.end(), std::back_inserter(out), [&](const auto& m) { return m.type == t; });
  return out;
}

AnnotatedDocument annotate_text(const std::string& text, const std::string& when = "2008-07-01T00:00:00") {
  corpus::RawNote n;
  n.note_id = "n1";
  n.patient_id = "P";
  n.note_datetime = *parse_iso_datetime(when);
  n.text = text;
  return pipeline::annotate_note(n, resources());
}

const EntityMention& find(const AnnotatedDocument& d, std::string_view surface) {
  for (const auto& s : d.mentions)
    for (const auto& m : s)
      if (m.surface == surface) return m;
  FAIL("mention not found: " << surface);
  throw 0;
}

}  // namespace

TEST_CASE("dictionary: case folding, subcategory and plural expansion") {
  const auto& tagger = resources().tagger;
  const Dictionary* pain = nullptr;
  const Dictionary* comp = nullptr;
  const Dictionary* imp = nullptr;
  for (const auto& d : tagger.dictionaries()) {
    if (d.lookup("tenderness") && d.lookup("tenderness")->type == EntityType::kPain) pain = &d;
    if (d.lookup("metallosis")) comp = &d;
    if (d.lookup("implant") && d.lookup("implant")->type == EntityType::kImplant) imp = &d;
  }
  REQUIRE(pain);
  REQUIRE(comp);
  REQUIRE(imp);
  CHECK(pain->lookup("Tenderness")->canonical_id == "PAIN:TENDERNESS");
  REQUIRE(comp->lookup("metallosis")->subcategory);
  CHECK(*comp->lookup("metallosis")->subcategory == Subcategory::kParticleDisease);
  const auto* plural = imp->lookup("implants");
  REQUIRE(plural);
  CHECK(plural->expanded);
  CHECK(plural->canonical_id == imp->lookup("implant")->canonical_id);
}

TEST_CASE("dictionary: conflicting entity types abort naming both lines") {
  TempDir dir("dict");
  write_file(dir / "d.tsv", "hip\tANAT:HIP\tanatomy\nfoo\tX\tpain\nHip\tIMP:HIP\timplant\n");
  try {
    Dictionary::load(dir / "d.tsv");
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find('1') != std::string::npos);
    CHECK(msg.find('3') != std::string::npos);
  }
}

TEST_CASE("dictionary: expansion never overwrites explicit entries") {
  std::vector<DictionaryEntry> entries{{"implant", "A", EntityType::kImplant, {}, false, 1},
                                       {"implants", "B", EntityType::kImplant, {}, false, 2}};
  const auto d = Dictionary::from_entries("t", entries);
  CHECK(d.lookup("implants")->canonical_id == "B");
}

TEST_CASE("tagging: laterality absorbed, longest match, empty sentence") {
  const auto& tagger = resources().tagger;
  auto ms = tagger.tag(sentence("left hip tenderness"));
  auto anat = of_type(ms, EntityType::kAnatomy);
  REQUIRE(anat.size() == 1);
  CHECK(anat[0].surface == "left hip");
  auto pain = of_type(ms, EntityType::kPain);
  REQUIRE(pain.size() == 1);
  CHECK(pain[0].surface == "tenderness");

  ms = tagger.tag(sentence("Zimmer VerSys stem in place"));
  auto imp = of_type(ms, EntityType::kImplant);
  REQUIRE_FALSE(imp.empty());
  CHECK(imp[0].surface == "Zimmer VerSys");
  CHECK(imp[0].canonical_id == "IMP:ZIMMER_VERSYS");

  CHECK(tagger.tag(sentence("Doing well overall")).empty());
}

TEST_CASE("tagging: idempotent, no same-type overlap, longest match at each start") {
  const auto& tagger = resources().tagger;
  const auto s = sentence("Sharp pain over the left greater trochanter with polyethylene wear and osteolysis.");
  const auto a = tagger.tag(s);
  CHECK(a == tagger.tag(s));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j)
      if (a[i].type == a[j].type) CHECK_FALSE(a[i].span.overlaps(a[j].span));
  for (const auto& m : a) {
    std::string longer;
    for (std::size_t end = m.token_end + 1; end <= s.tokens.size(); ++end) {
      std::string key;
      for (std::size_t k = m.token_begin; k < end; ++k) key += (k > m.token_begin ? " " : "") + s.tokens[k].lower;
      for (const auto& d : tagger.dictionaries())
        if (const auto* e = d.lookup(key); e && e->type == m.type) longer = key;
    }
    CHECK_MESSAGE(longer.empty(), "longer match exists: " << longer);
  }
}

TEST_CASE("context: negation trigger, figure note attributes") {
  auto d = annotate_text("no evidence of infection.");
  CHECK(find(d, "infection").attributes.has(Attribute::kNegated));

  d = pipeline::annotate_note(testing::figure2_note(), resources());
  const auto& infected = find(d, "infected");
  CHECK_FALSE(infected.attributes.has(Attribute::kNegated));
  CHECK_FALSE(infected.attributes.has(Attribute::kHypothetical));
  CHECK(find(d, "infection").attributes.has(Attribute::kHistorical));
}

TEST_CASE("context: date rule marks sentences with old past dates historical") {
  auto d = annotate_text("Seen 1/1/05 for infection.");
  CHECK(find(d, "infection").attributes.has(Attribute::kHistorical));
  d = annotate_text("Seen 6/25/2008 for infection.");
  CHECK_FALSE(find(d, "infection").attributes.has(Attribute::kHistorical));
}

TEST_CASE("context: scope window and terminators") {
  auto d = annotate_text("Denies fever but reports hip pain.");
  CHECK_FALSE(find(d, "pain").attributes.has(Attribute::kNegated));
  d = annotate_text("No a b c d e f g h infection.");
  CHECK_FALSE(find(d, "infection").attributes.has(Attribute::kNegated));
}

TEST_CASE("context never removes attributes or moves spans") {
  const auto doc = corpus::preprocess(testing::figure2_note(), resources().preprocess);
  for (const auto& s : doc.sentences) {
    auto tagged = resources().tagger.tag(s);
    for (auto& m : tagged) m.attributes.add(Attribute::kHypothetical);
    const auto out = apply_context(s, tagged, resources().triggers, doc.section_of(s), doc.dates_in(s));
    REQUIRE(out.size() == tagged.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out[i].span == tagged[i].span);
      CHECK(out[i].attributes.contains_all(tagged[i].attributes));
    }
  }
}

TEST_CASE("candidates: Cartesian product with deterministic order") {
  auto d = annotate_text("Pain and tenderness in the hip, groin and thigh.");
  auto c = generate_candidates(d, RelationType::kPainAnatomy);
  CHECK(c.size() == 6);
  for (std::size_t i = 1; i < c.size(); ++i) {
    const auto prev = std::make_pair(c[i - 1].arg1.span, c[i - 1].arg2.span);
    const auto cur = std::make_pair(c[i].arg1.span, c[i].arg2.span);
    CHECK(prev < cur);
  }
  CHECK(generate_candidates(annotate_text("Pain and tenderness today."), RelationType::kPainAnatomy).empty());
}

TEST_CASE("candidates: one complication and one implant give one candidate") {
  auto d = annotate_text("Infection of the acetabular component.");
  const auto c = generate_candidates(d, RelationType::kImplantComplication);
  REQUIRE(c.size() == 1);
  CHECK(c[0].arg1.type == EntityType::kComplication);
  CHECK(c[0].arg2.type == EntityType::kImplant);
  CHECK(c[0].section_header == std::string(corpus::kUnknownSection));
}

TEST_CASE("candidates: ids are stable and carry sentence markup") {
  const auto a = pipeline::candidates_for({pipeline::annotate_note(testing::figure2_note(), resources())},
                                          RelationType::kImplantComplication);
  const auto b = pipeline::candidates_for({pipeline::annotate_note(testing::figure2_note(), resources())},
                                          RelationType::kImplantComplication);
  REQUIRE(a.size() == b.size());
  REQUIRE_FALSE(a.empty());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].candidate_id == b[i].candidate_id);
    CHECK(a[i].candidate_id ==
          make_candidate_id(a[i].note_id, a[i].relation, a[i].arg1.span, a[i].arg2.span));
  }
  const auto& pmh = a.back();
  CHECK(pmh.section_header == "PAST MEDICAL HISTORY");
  CHECK(std::find(pmh.date_bins.begin(), pmh.date_bins.end(), "-1-5 years") != pmh.date_bins.end());
}
