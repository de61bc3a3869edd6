#include "devsurv/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "devsurv/csv.hpp"

#ifndef DEVSURV_DEFAULT_DATA_DIR
#define DEVSURV_DEFAULT_DATA_DIR "data"
#endif

namespace devsurv::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

ResourcePaths ResourcePaths::under(const fs::path& data_dir) {
  ResourcePaths p;
  for (const char* f : {"implants.tsv", "complications.tsv", "pain.tsv", "anatomy.tsv"})
    p.dictionaries.push_back(data_dir / "dictionaries" / f);
  p.triggers = data_dir / "lexicons" / "triggers.tsv";
  p.headers = data_dir / "lexicons" / "headers.txt";
  p.catalog = data_dir / "implants" / "catalog.tsv";
  p.manufacturer_aliases = data_dir / "implants" / "manufacturer_aliases.tsv";
  return p;
}

Resources Resources::load(const ResourcePaths& paths) {
  Resources r;
  std::vector<extraction::Dictionary> dicts;
  for (const auto& d : paths.dictionaries) dicts.push_back(extraction::Dictionary::load(d));
  r.tagger = extraction::Tagger(std::move(dicts));
  if (!paths.triggers.empty()) r.triggers = extraction::TriggerLexicon::load(paths.triggers);
  if (!paths.headers.empty()) r.preprocess.header_lexicon = corpus::HeaderLexicon::load(paths.headers);
  if (!paths.catalog.empty())
    r.catalog = reconcile::ImplantCatalog::load(paths.catalog, paths.manufacturer_aliases);
  return r;
}

fs::path default_data_dir() {
  if (const char* env = std::getenv("DEVSURV_DATA_DIR"); env && *env) return env;
  return DEVSURV_DEFAULT_DATA_DIR;
}

extraction::AnnotatedDocument annotate_note(const corpus::RawNote& note, const Resources& res) {
  return extraction::annotate(corpus::preprocess(note, res.preprocess), res.tagger, res.triggers,
                              res.context);
}

std::vector<extraction::AnnotatedDocument> annotate_notes(const std::vector<corpus::RawNote>& notes,
                                                          const Resources& res) {
  std::vector<extraction::AnnotatedDocument> out;
  out.reserve(notes.size());
  for (const auto& n : notes) out.push_back(annotate_note(n, res));
  return out;
}

std::vector<RelationCandidate> candidates_for(const std::vector<extraction::AnnotatedDocument>& docs,
                                              RelationType relation) {
  std::vector<RelationCandidate> out;
  for (const auto& d : docs) {
    auto c = extraction::generate_candidates(d, relation);
    out.insert(out.end(), std::make_move_iterator(c.begin()), std::make_move_iterator(c.end()));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Error spec_error(const std::string& msg, std::size_t index) {
  return Error(ErrorCode::kInvalidConfig, "LF spec #" + std::to_string(index) + ": " + msg,
               {{"index", std::to_string(index)}});
}

std::vector<std::string> strings(const json& j, const char* key, std::size_t index) {
  if (!j.contains(key) || !j.at(key).is_array()) throw spec_error(std::string("missing array '") + key + "'", index);
  std::vector<std::string> out;
  for (const auto& v : j.at(key)) {
    if (!v.is_string()) throw spec_error(std::string("'") + key + "' must hold strings", index);
    out.push_back(v.get<std::string>());
  }
  return out;
}

weaksup::Vote vote_of(const json& j, std::size_t index) {
  if (!j.contains("vote")) throw spec_error("missing 'vote'", index);
  const auto& v = j.at("vote");
  std::optional<weaksup::Vote> out;
  if (v.is_string()) out = weaksup::parse_vote(v.get<std::string>());
  else if (v.is_number_integer()) out = weaksup::parse_vote(std::to_string(v.get<int>()));
  if (!out || *out == weaksup::Vote::kAbstain) throw spec_error("vote must be TRUE or FALSE", index);
  return *out;
}

weaksup::LabelingFunction starter_by_name(const std::string& name, RelationType relation,
                                          std::size_t index) {
  for (auto& lf : weaksup::starter_lfs(relation))
    if (lf.lf_id == name) return lf;
  throw spec_error("unknown starter function '" + name + "'", index);
}

}  // namespace

std::vector<weaksup::LabelingFunction> lfs_from_json(std::string_view text, RelationType relation) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("LF spec is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorCode::kInvalidConfig, "LF spec must be a JSON array");
  std::vector<weaksup::LabelingFunction> out;
  std::set<std::string> ids;
  static const std::set<std::string> known{"id", "kind", "vote", "phrases", "window", "attribute",
                                           "max_tokens", "ids", "bins", "starter", "headers"};
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& j = doc[i];
    if (!j.is_object()) throw spec_error("must be an object", i);
    for (const auto& [k, v] : j.items())
      if (!known.count(k)) throw spec_error("unknown key '" + k + "'", i);
    weaksup::LabelingFunction lf;
    if (j.contains("starter")) {
      const auto name = j.at("starter").get<std::string>();
      if (name == "reject_section" && j.contains("headers"))
        lf = weaksup::lf_reject_section(strings(j, "headers", i));
      else
        lf = starter_by_name(name, relation, i);
    } else {
      if (!j.contains("id") || !j.contains("kind")) throw spec_error("needs 'id' and 'kind'", i);
      const auto id = j.at("id").get<std::string>();
      const auto kind = j.at("kind").get<std::string>();
      const auto vote = vote_of(j, i);
      if (kind == "between_phrase") {
        lf = weaksup::lf_between_phrase(id, strings(j, "phrases", i), vote, relation);
      } else if (kind == "left_window_phrase") {
        lf = weaksup::lf_left_window_phrase(id, strings(j, "phrases", i), j.value("window", 3), vote,
                                            relation);
      } else if (kind == "attribute") {
        auto a = extraction::parse_attribute(j.value("attribute", std::string()));
        if (!a) throw spec_error("unknown attribute", i);
        lf = weaksup::lf_attribute(id, *a, vote);
      } else if (kind == "distance_above") {
        lf = weaksup::lf_distance_above(id, j.value("max_tokens", 10), vote);
      } else if (kind == "canonical_ids") {
        lf = weaksup::lf_canonical_ids(id, strings(j, "ids", i), vote, relation);
      } else if (kind == "date_bins") {
        lf = weaksup::lf_date_bins(id, strings(j, "bins", i), vote);
      } else {
        throw spec_error("unknown kind '" + kind + "'", i);
      }
    }
    if (!ids.insert(lf.lf_id).second)
      throw Error(ErrorCode::kDuplicate, "duplicate LF id '" + lf.lf_id + "'", {{"lf_id", lf.lf_id}});
    out.push_back(std::move(lf));
  }
  return out;
}

std::vector<weaksup::LabelingFunction> load_lf_specs(const fs::path& path, RelationType relation) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingInput, "cannot open " + path.string(), {{"path", path.string()}});
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return lfs_from_json(ss.str(), relation);
  } catch (const Error& e) {
    auto ctx = e.context();
    ctx["path"] = path.string();
    throw Error(e.code(), path.string() + ": " + e.what(), ctx);
  }
}

std::vector<weaksup::LabelingFunction> default_lfs(RelationType relation, const fs::path& data_dir) {
  auto lfs = weaksup::starter_lfs(relation);
  std::string name(extraction::to_string(relation));
  std::replace(name.begin(), name.end(), '-', '_');
  const auto spec = data_dir / "lfs" / (name + ".json");
  if (fs::exists(spec)) {
    std::set<std::string> have;
    for (const auto& lf : lfs) have.insert(lf.lf_id);
    for (auto& lf : load_lf_specs(spec, relation))
      if (have.insert(lf.lf_id).second) lfs.push_back(std::move(lf));
  }
  return lfs;
}

std::vector<DevLoopRow> lf_dev_loop(const std::vector<RelationCandidate>& dev,
                                    const std::vector<weaksup::LabelingFunction>& lfs,
                                    const weaksup::GoldLabels* gold) {
  if (lfs.empty()) throw Error(ErrorCode::kInvalidConfig, "no labeling functions registered");
  if (dev.empty()) throw Error(ErrorCode::kInvalidArgument, "development set is empty");
  const auto matrix = weaksup::apply_lfs(dev, lfs);
  weaksup::GoldLabels restricted;
  if (gold)
    for (const auto& c : dev)
      if (auto it = gold->find(c.candidate_id); it != gold->end()) restricted.insert(*it);
  const auto stats = weaksup::lf_statistics(matrix, gold ? &restricted : nullptr);
  std::vector<DevLoopRow> rows;
  for (std::size_t j = 0; j < stats.size(); ++j) {
    DevLoopRow r;
    r.lf_id = stats[j].lf_id;
    r.coverage = stats[j].coverage;
    if (gold) r.accuracy = stats[j].accuracy;
    for (std::size_t i = 0; i < matrix.n(); ++i) r.votes += matrix.at(i, j) != weaksup::Vote::kAbstain;
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::vector<GoldRelation> read_gold_relations(const fs::path& path) {
  auto t = CsvTable::read(path);
  t.require_columns({"candidate_id", "relation", "label"});
  std::vector<GoldRelation> out;
  std::set<std::string> seen;
  for (const auto& row : t.rows()) {
    GoldRelation g;
    g.candidate_id = row.at("candidate_id");
    auto rel = extraction::parse_relation_type(row.at("relation"));
    auto lab = weaksup::parse_vote(row.at("label"));
    if (!rel || !lab || *lab == weaksup::Vote::kAbstain)
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(row.line()) + ": bad relation or label",
                  {{"path", path.string()}, {"line", std::to_string(row.line())}});
    if (!seen.insert(g.candidate_id).second)
      throw Error(ErrorCode::kDuplicate, "duplicate gold label for " + g.candidate_id,
                  {{"path", path.string()}, {"candidate_id", g.candidate_id}});
    g.relation = *rel;
    g.label = *lab == weaksup::Vote::kTrue;
    g.note_id = row.get("note_id");
    out.push_back(std::move(g));
  }
  return out;
}

void write_gold_relations(const std::vector<GoldRelation>& gold, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kMissingInput, "cannot write " + path.string(), {{"path", path.string()}});
  CsvWriter w(out);
  w.row({"candidate_id", "relation", "note_id", "label"});
  for (const auto& g : gold)
    w.row({g.candidate_id, std::string(extraction::to_string(g.relation)), g.note_id, g.label ? "1" : "0"});
}

weaksup::GoldLabels gold_map(const std::vector<GoldRelation>& gold, RelationType relation) {
  weaksup::GoldLabels m;
  for (const auto& g : gold)
    if (g.relation == relation) m[g.candidate_id] = g.label;
  return m;
}

// ---------------------------------------------------------------------------

eval::Split note_split(const std::vector<RelationCandidate>& candidates, std::uint64_t seed,
                       double train_fraction, double dev_fraction) {
  if (train_fraction < 0.0 || dev_fraction < 0.0 || train_fraction + dev_fraction > 1.0)
    throw Error(ErrorCode::kInvalidConfig, "split fractions must be non-negative and sum to at most 1");
  std::set<std::string> ids;
  for (const auto& c : candidates) ids.insert(c.note_id);
  const auto n = ids.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const auto n_dev = std::min(n - n_train,
                              static_cast<std::size_t>(std::llround(dev_fraction * static_cast<double>(n))));
  return eval::split_documents({ids.begin(), ids.end()}, seed, n_train, n_dev, n - n_train - n_dev);
}

namespace {

std::vector<RelationCandidate> subset(const std::vector<RelationCandidate>& all,
                                      const std::vector<std::string>& note_ids) {
  std::set<std::string> keep(note_ids.begin(), note_ids.end());
  std::vector<RelationCandidate> out;
  for (const auto& c : all)
    if (keep.count(c.note_id)) out.push_back(c);
  return out;
}

eval::Metrics hard_metrics(const std::vector<std::string>& ids, const std::vector<double>& p,
                           const weaksup::GoldLabels& gold) {
  std::map<std::string, double> pred;
  for (std::size_t i = 0; i < ids.size(); ++i) pred[ids[i]] = p[i] > 0.5 ? 1.0 : 0.0;
  return eval::prf1(pred, gold, 0.5);
}

}  // namespace

ExperimentResult run_experiment(const std::vector<RelationCandidate>& candidates,
                                const weaksup::GoldLabels& gold, const ExperimentConfig& config) {
  if (config.lfs.empty()) throw Error(ErrorCode::kInvalidConfig, "no labeling functions configured");
  const auto split = note_split(candidates, config.split_seed, config.train_fraction, config.dev_fraction);
  const auto train = subset(candidates, split.train);
  const auto dev = subset(candidates, split.dev);
  const auto test = subset(candidates, split.test);
  if (train.empty() || test.empty())
    throw Error(ErrorCode::kInvalidArgument, "train or test split has no candidates");

  ExperimentResult r;
  r.n_train = train.size();
  r.n_dev = dev.size();
  r.n_test = test.size();

  const auto l_train = weaksup::apply_lfs(train, config.lfs);
  r.model = weaksup::fit_label_model(l_train, config.label_model);
  const auto posterior = weaksup::posterior_labels(r.model, l_train);

  std::vector<classifier::FeatureVector> x;
  std::vector<double> p;
  for (std::size_t i = 0; i < train.size(); ++i) {
    bool covered = false;
    for (std::size_t j = 0; j < l_train.m() && !covered; ++j)
      covered = l_train.at(i, j) != weaksup::Vote::kAbstain;
    if (config.drop_uncovered && !covered) continue;
    x.push_back(classifier::featurize(train[i], config.features));
    p.push_back(posterior.p_true[i]);
  }
  if (x.empty()) throw Error(ErrorCode::kNoSignal, "no training candidate received a labeling-function vote");
  auto model = classifier::train_noise_aware(x, p, config.train, config.features);

  auto gold_for = [&](const std::vector<RelationCandidate>& cs) {
    weaksup::GoldLabels g;
    for (const auto& c : cs)
      if (auto it = gold.find(c.candidate_id); it != gold.end()) g.insert(*it);
    return g;
  };

  {
    const auto g = gold_for(dev);
    std::vector<double> s;
    std::vector<bool> y;
    for (const auto& c : dev)
      if (auto it = g.find(c.candidate_id); it != g.end()) {
        s.push_back(classifier::predict(model, c));
        y.push_back(it->second);
      }
    const bool both = std::count(y.begin(), y.end(), true) > 0 && std::count(y.begin(), y.end(), false) > 0;
    r.threshold = both ? classifier::select_threshold(s, y) : 0.5;
  }

  const auto g_test = gold_for(test);
  for (const auto& c : test) r.test_scores[c.candidate_id] = classifier::predict(model, c);
  r.classifier = eval::prf1(r.test_scores, g_test, r.threshold);

  const auto l_test = weaksup::apply_lfs(test, config.lfs);
  const auto smv = weaksup::soft_majority_vote(l_test);
  r.smv = hard_metrics(smv.candidate_ids, smv.p_true, g_test);
  const auto post_test = weaksup::posterior_labels(r.model, l_test);
  r.label_model = hard_metrics(post_test.candidate_ids, post_test.p_true, g_test);
  return r;
}

// ---------------------------------------------------------------------------

std::vector<reconcile::RegistryRecord> implants_from_notes(
    const std::vector<extraction::AnnotatedDocument>& docs, const reconcile::ImplantCatalog& catalog) {
  std::set<std::tuple<std::string, Date, std::string>> seen;
  std::vector<reconcile::RegistryRecord> out;
  for (const auto& d : docs) {
    if (!iequals(d.doc.note.note_type, "operative")) continue;
    const Date day = date_of(d.doc.note.note_datetime);
    for (const auto& sentence : d.mentions)
      for (const auto& m : sentence) {
        if (m.type != extraction::EntityType::kImplant || !catalog.find(m.canonical_id)) continue;
        if (!seen.emplace(d.doc.note.patient_id, day, m.canonical_id).second) continue;
        const auto c = reconcile::canonicalize_implant(m, catalog);
        out.push_back({d.doc.note.patient_id, day, c.role, c.manufacturer, c.model});
      }
  }
  return out;
}

std::vector<outcomes::Event> events_from_predictions(const std::vector<RelationCandidate>& candidates,
                                                     const std::map<std::string, double>& scores,
                                                     double threshold) {
  std::map<std::tuple<std::string, std::string, outcomes::EventClass>, outcomes::Event> by_note;
  for (const auto& c : candidates) {
    auto it = scores.find(c.candidate_id);
    if (it == scores.end() || it->second < threshold) continue;
    outcomes::EventClass cls = outcomes::EventClass::kPain;
    if (c.relation == RelationType::kImplantComplication) {
      if (!c.arg1.subcategory) continue;
      auto parsed = outcomes::parse_event_class(extraction::event_class_name(*c.arg1.subcategory));
      if (!parsed) continue;
      cls = *parsed;
    }
    auto key = std::tuple(c.note_id, c.patient_id, cls);
    auto [slot, inserted] = by_note.try_emplace(key);
    if (inserted || c.candidate_id < slot->second.provenance)
      slot->second = {c.patient_id, cls, date_of(c.note_datetime), outcomes::EventSource::kText,
                      c.candidate_id};
  }
  std::vector<outcomes::Event> out;
  for (auto& [k, e] : by_note) out.push_back(std::move(e));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.patient_id, a.date, a.event_class, a.provenance) <
           std::tie(b.patient_id, b.date, b.event_class, b.provenance);
  });
  return out;
}

}  // namespace devsurv::pipeline
