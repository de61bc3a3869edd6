#include <algorithm>
#include <cstdio>

#include "devsurv/extraction.hpp"

namespace devsurv::extraction {

std::string_view to_string(RelationType r) {
  return r == RelationType::kPainAnatomy ? "pain-anatomy" : "implant-complication";
}

std::optional<RelationType> parse_relation_type(std::string_view s) {
  auto l = to_lower(trim(s));
  std::replace(l.begin(), l.end(), '_', '-');
  if (l == "pain-anatomy") return RelationType::kPainAnatomy;
  if (l == "implant-complication") return RelationType::kImplantComplication;
  return std::nullopt;
}

EntityType arg1_type(RelationType r) {
  return r == RelationType::kPainAnatomy ? EntityType::kPain : EntityType::kComplication;
}

EntityType arg2_type(RelationType r) {
  return r == RelationType::kPainAnatomy ? EntityType::kAnatomy : EntityType::kImplant;
}

std::string make_candidate_id(std::string_view note_id, RelationType relation, CharSpan arg1,
                              CharSpan arg2) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "|%zu-%zu|%zu-%zu|", arg1.begin, arg1.end, arg2.begin, arg2.end);
  std::string key(note_id);
  key += '|';
  key += to_string(relation);
  key += buf;
  return hex64(mix64(fnv1a(key)));
}

std::vector<RelationCandidate> generate_candidates(const AnnotatedDocument& doc,
                                                   std::size_t sentence_index,
                                                   RelationType relation) {
  const auto& sentence = doc.doc.sentences.at(sentence_index);
  const auto& mentions = doc.mentions.at(sentence_index);
  std::vector<const EntityMention*> a1, a2;
  for (const auto& m : mentions) {
    if (m.type == arg1_type(relation)) a1.push_back(&m);
    if (m.type == arg2_type(relation)) a2.push_back(&m);
  }
  auto by_span = [](const EntityMention* x, const EntityMention* y) { return x->span < y->span; };
  std::stable_sort(a1.begin(), a1.end(), by_span);
  std::stable_sort(a2.begin(), a2.end(), by_span);

  std::vector<RelationCandidate> out;
  if (a1.empty() || a2.empty()) return out;

  const auto* section = doc.doc.section_of(sentence);
  std::vector<std::string> bins;
  for (const auto* d : doc.doc.dates_in(sentence))
    if (std::find(bins.begin(), bins.end(), d->bin_label) == bins.end()) bins.push_back(d->bin_label);

  out.reserve(a1.size() * a2.size());
  for (const auto* x : a1) {
    for (const auto* y : a2) {
      RelationCandidate c;
      c.relation = relation;
      c.note_id = doc.doc.note.note_id;
      c.patient_id = doc.doc.note.patient_id;
      c.note_type = doc.doc.note.note_type;
      c.note_datetime = doc.doc.note.note_datetime;
      c.sentence_index = sentence.index;
      c.sentence_span = sentence.span;
      c.sentence_text = sentence.text;
      c.tokens = sentence.tokens;
      c.arg1 = *x;
      c.arg2 = *y;
      c.section_header = section ? section->canonical_header : std::string(corpus::kUnknownSection);
      c.date_bins = bins;
      c.candidate_id = make_candidate_id(c.note_id, relation, x->span, y->span);
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<RelationCandidate> generate_candidates(const AnnotatedDocument& doc,
                                                   RelationType relation) {
  std::vector<RelationCandidate> out;
  for (std::size_t i = 0; i < doc.doc.sentences.size(); ++i) {
    auto part = generate_candidates(doc, i, relation);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

}  // namespace devsurv::extraction
