#include "devsurv/serialize.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "devsurv/csv.hpp"

namespace devsurv::serialize {

namespace fs = std::filesystem;
using extraction::EntityMention;
using extraction::RelationCandidate;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kMissingInput, "cannot write " + path.string(), {{"path", path.string()}});
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingInput, "cannot open " + path.string(), {{"path", path.string()}});
  return in;
}

json span_json(corpus::CharSpan s) { return json::array({s.begin, s.end}); }

corpus::CharSpan span_of(const json& j) { return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()}; }

json mention_json(const EntityMention& m) {
  json j{{"sentence", m.sentence},
         {"tokens", json::array({m.token_begin, m.token_end})},
         {"span", span_json(m.span)},
         {"surface", m.surface},
         {"type", std::string(extraction::to_string(m.type))},
         {"canonical_id", m.canonical_id},
         {"attributes", m.attributes.names()}};
  if (m.subcategory) j["subcategory"] = std::string(extraction::to_string(*m.subcategory));
  return j;
}

EntityMention mention_from(const json& j) {
  EntityMention m;
  m.sentence = j.at("sentence").get<std::size_t>();
  m.token_begin = j.at("tokens").at(0).get<std::size_t>();
  m.token_end = j.at("tokens").at(1).get<std::size_t>();
  m.span = span_of(j.at("span"));
  m.surface = j.at("surface").get<std::string>();
  const auto type = extraction::parse_entity_type(j.at("type").get<std::string>());
  if (!type) throw std::invalid_argument("unknown entity type");
  m.type = *type;
  m.canonical_id = j.at("canonical_id").get<std::string>();
  if (j.contains("subcategory")) {
    auto sub = extraction::parse_subcategory(j.at("subcategory").get<std::string>());
    if (!sub) throw std::invalid_argument("unknown subcategory");
    m.subcategory = sub;
  }
  m.attributes = extraction::Attributes::from_names(j.at("attributes").get<std::vector<std::string>>());
  return m;
}

Error parse_error(const fs::path& path, std::size_t line, const std::string& what) {
  return Error(ErrorCode::kParse, path.string() + ":" + std::to_string(line) + ": " + what,
               {{"path", path.string()}, {"line", std::to_string(line)}});
}

}  // namespace

void write_annotations(const std::vector<extraction::AnnotatedDocument>& docs, const fs::path& path) {
  auto out = open_out(path);
  for (const auto& d : docs) {
    json ms = json::array();
    for (const auto& sentence : d.mentions)
      for (const auto& m : sentence) ms.push_back(mention_json(m));
    out << json{{"note_id", d.doc.note.note_id}, {"mentions", ms}}.dump() << '\n';
  }
}

std::map<std::string, std::vector<EntityMention>> read_annotations(const fs::path& path) {
  auto in = open_in(path);
  std::map<std::string, std::vector<EntityMention>> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      const auto id = j.at("note_id").get<std::string>();
      std::vector<EntityMention> ms;
      for (const auto& m : j.at("mentions")) ms.push_back(mention_from(m));
      if (!out.emplace(id, std::move(ms)).second)
        throw Error(ErrorCode::kDuplicate, "duplicate note_id '" + id + "' in " + path.string(),
                    {{"path", path.string()}, {"note_id", id}});
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw parse_error(path, n, e.what());
    }
  }
  return out;
}

extraction::AnnotatedDocument attach_mentions(corpus::Document doc, const std::vector<EntityMention>& mentions) {
  extraction::AnnotatedDocument a{std::move(doc), {}};
  a.mentions.resize(a.doc.sentences.size());
  for (const auto& m : mentions) {
    if (m.sentence >= a.mentions.size() || m.token_end > a.doc.sentences[m.sentence].tokens.size())
      throw Error(ErrorCode::kMismatch, "stored mention does not fit the preprocessed note",
                  {{"note_id", a.doc.note.note_id}, {"sentence", std::to_string(m.sentence)}});
    a.mentions[m.sentence].push_back(m);
  }
  return a;
}

std::string candidate_to_json(const RelationCandidate& c) {
  json tokens = json::array();
  for (const auto& t : c.tokens) tokens.push_back(json::array({t.span.begin, t.span.end, t.text}));
  return json{{"candidate_id", c.candidate_id},
              {"relation", std::string(extraction::to_string(c.relation))},
              {"note_id", c.note_id},
              {"patient_id", c.patient_id},
              {"note_type", c.note_type},
              {"note_datetime", format_datetime(c.note_datetime)},
              {"sentence_index", c.sentence_index},
              {"sentence_span", span_json(c.sentence_span)},
              {"sentence_text", c.sentence_text},
              {"tokens", tokens},
              {"arg1", mention_json(c.arg1)},
              {"arg2", mention_json(c.arg2)},
              {"section_header", c.section_header},
              {"date_bins", c.date_bins}}
      .dump();
}

RelationCandidate candidate_from_json(std::string_view line, std::size_t line_number) {
  try {
    const auto j = json::parse(line);
    RelationCandidate c;
    c.candidate_id = j.at("candidate_id").get<std::string>();
    const auto rel = extraction::parse_relation_type(j.at("relation").get<std::string>());
    if (!rel) throw std::invalid_argument("unknown relation");
    c.relation = *rel;
    c.note_id = j.at("note_id").get<std::string>();
    c.patient_id = j.at("patient_id").get<std::string>();
    c.note_type = j.at("note_type").get<std::string>();
    const auto ts = parse_iso_datetime(j.at("note_datetime").get<std::string>());
    if (!ts) throw std::invalid_argument("bad note_datetime");
    c.note_datetime = *ts;
    c.sentence_index = j.at("sentence_index").get<std::size_t>();
    c.sentence_span = span_of(j.at("sentence_span"));
    c.sentence_text = j.at("sentence_text").get<std::string>();
    for (const auto& t : j.at("tokens")) {
      corpus::Token tok;
      tok.span = {t.at(0).get<std::size_t>(), t.at(1).get<std::size_t>()};
      tok.text = t.at(2).get<std::string>();
      tok.lower = to_lower(tok.text);
      c.tokens.push_back(std::move(tok));
    }
    c.arg1 = mention_from(j.at("arg1"));
    c.arg2 = mention_from(j.at("arg2"));
    c.section_header = j.at("section_header").get<std::string>();
    c.date_bins = j.at("date_bins").get<std::vector<std::string>>();
    return c;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kParse, "candidate record " + std::to_string(line_number) + ": " + e.what(),
                {{"line", std::to_string(line_number)}});
  }
}

void write_candidates(const std::vector<RelationCandidate>& candidates, const fs::path& path) {
  auto out = open_out(path);
  for (const auto& c : candidates) out << candidate_to_json(c) << '\n';
}

std::vector<RelationCandidate> read_candidates(const fs::path& path) {
  auto in = open_in(path);
  std::vector<RelationCandidate> out;
  std::set<std::string> seen;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (trim(line).empty()) continue;
    RelationCandidate c;
    try {
      c = candidate_from_json(line, n);
    } catch (const Error& e) {
      auto ctx = e.context();
      ctx["path"] = path.string();
      throw Error(e.code(), path.string() + ": " + e.what(), ctx);
    }
    if (!seen.insert(c.candidate_id).second)
      throw Error(ErrorCode::kDuplicate, "duplicate candidate_id '" + c.candidate_id + "'",
                  {{"path", path.string()}, {"candidate_id", c.candidate_id}});
    out.push_back(std::move(c));
  }
  return out;
}

void write_scores(const std::map<std::string, double>& scores, const fs::path& path) {
  auto out = open_out(path);
  CsvWriter w(out);
  w.row({"candidate_id", "score"});
  for (const auto& [id, s] : scores) w.row({id, fmt_double(s, 17)});
}

std::map<std::string, double> read_scores(const fs::path& path) {
  const auto table = CsvTable::read(path);
  table.require_columns({"candidate_id", "score"});
  std::map<std::string, double> out;
  for (const auto& row : table.rows()) {
    try {
      out[row.at("candidate_id")] = std::stod(row.at("score"));
    } catch (const std::logic_error&) {
      throw parse_error(path, row.line(), "score is not a number");
    }
  }
  return out;
}

}  // namespace devsurv::serialize
