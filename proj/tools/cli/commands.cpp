#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "devsurv/csv.hpp"
#include "devsurv/eval.hpp"
#include "devsurv/pipeline.hpp"
#include "devsurv/serialize.hpp"
#include "project.hpp"
#include "workspace.hpp"

namespace devsurv::cli {

namespace fs = std::filesystem;
using extraction::RelationType;
using nlohmann::json;

namespace {

constexpr const char* kExitHelp =
    "Exit status: 0 success; 1 internal error; 2 usage (unknown subcommand or flag); "
    "3 invalid config; 4 missing input or upstream artifact; 5 unparseable input; "
    "6 output directory locked; 7 numerical failure (no signal, rank deficiency, "
    "non-convergence, separation); 8 invalid or inconsistent data. "
    "Errors are printed to stderr as JSON {code, message, context}.";

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidConfig: return kExitInvalidConfig;
    case ErrorCode::kMissingInput: return kExitMissingInput;
    case ErrorCode::kParse: return kExitParse;
    case ErrorCode::kLocked: return kExitLocked;
    case ErrorCode::kNoSignal:
    case ErrorCode::kRankDeficient:
    case ErrorCode::kNonConvergence:
    case ErrorCode::kSeparation: return kExitNumerical;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kDuplicate:
    case ErrorCode::kMismatch: return kExitInvalidData;
  }
  return kExitInternal;
}

void print_error(std::ostream& err, std::string_view code, const std::string& message,
                 const std::map<std::string, std::string>& context) {
  err << json{{"code", code}, {"message", message}, {"context", context}}.dump() << '\n';
}

struct Ctx {
  const ProjectConfig& cfg;
  Workspace& ws;
  std::ostream& out;
  std::ostream& err;
  RelationType relation;
  bool dev_only = false;
};

// ---------------------------------------------------------------------------
// Shared loading

pipeline::Resources load_resources(const ProjectConfig& c, bool need_catalog) {
  for (const auto& d : c.dictionaries) require_input(d, "paths.dictionaries");
  require_input(c.triggers, "paths.triggers");
  require_input(c.headers, "paths.headers");
  pipeline::ResourcePaths p;
  p.dictionaries = c.dictionaries;
  p.triggers = c.triggers;
  p.headers = c.headers;
  if (need_catalog) {
    require_input(c.catalog, "paths.catalog");
    require_input(c.manufacturer_aliases, "paths.manufacturer_aliases");
    p.catalog = c.catalog;
    p.manufacturer_aliases = c.manufacturer_aliases;
  }
  auto r = pipeline::Resources::load(p);
  r.preprocess.bins.edges_days = c.delta_bin_edges_days;
  r.preprocess.bins.validate();
  r.context.window = c.context_window;
  return r;
}

std::string cand_name(RelationType r) { return "candidates_" + relation_slug(r) + ".jsonl"; }
std::string matrix_name(RelationType r) { return "label_matrix_" + relation_slug(r) + ".lmx"; }
std::string lm_name(RelationType r) { return "label_model_" + relation_slug(r) + ".json"; }
std::string labels_name(RelationType r) { return "labels_" + relation_slug(r) + ".csv"; }
std::string model_name(RelationType r) { return "model_" + relation_slug(r) + ".bin"; }
std::string scores_name(RelationType r) { return "scores_" + relation_slug(r) + ".csv"; }

std::vector<extraction::AnnotatedDocument> load_documents(Ctx& c, const pipeline::Resources& res) {
  const auto notes_path = c.ws.upstream("notes.jsonl", "ingest");
  const auto ann_path = c.ws.upstream("annotations.jsonl", "tag");
  const auto notes = corpus::ingest_notes(notes_path, corpus::IngestErrorPolicy::kAbort);
  const auto ann = serialize::read_annotations(ann_path);
  std::vector<extraction::AnnotatedDocument> docs;
  for (const auto& n : notes) {
    auto it = ann.find(n.note_id);
    if (it == ann.end())
      throw Error(ErrorCode::kMismatch, "note " + n.note_id + " has no annotations; rerun `devsurv tag`",
                  {{"note_id", n.note_id}});
    docs.push_back(serialize::attach_mentions(corpus::preprocess(n, res.preprocess), it->second));
  }
  return docs;
}

std::vector<weaksup::LabelingFunction> load_lfs(const ProjectConfig& cfg, RelationType r) {
  const auto path = cfg.lfs_path(r);
  std::vector<weaksup::LabelingFunction> lfs;
  if (path.empty()) {
    lfs = pipeline::default_lfs(r, cfg.data_dir);
  } else {
    require_input(path, "paths.lfs_" + relation_slug(r));
    lfs = pipeline::load_lf_specs(path, r);
  }
  if (lfs.empty())
    throw Error(ErrorCode::kInvalidConfig, "no labeling functions registered for " + std::string(to_string(r)),
                {{"relation", std::string(to_string(r))}});
  return lfs;
}

std::optional<weaksup::GoldLabels> load_gold(const ProjectConfig& cfg, RelationType r, bool required) {
  if (cfg.gold.empty() && !required) return std::nullopt;
  require_input(cfg.gold, "paths.gold");
  return pipeline::gold_map(pipeline::read_gold_relations(cfg.gold), r);
}

eval::Split split_of(const ProjectConfig& cfg, const std::vector<extraction::RelationCandidate>& cands) {
  return pipeline::note_split(cands, cfg.split_seed, cfg.train_fraction, cfg.dev_fraction);
}

std::vector<std::size_t> rows_in(const std::vector<extraction::RelationCandidate>& cands,
                                 const std::vector<std::string>& note_ids) {
  const std::set<std::string> keep(note_ids.begin(), note_ids.end());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (keep.count(cands[i].note_id)) rows.push_back(i);
  return rows;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::kMissingInput, "cannot write " + p.string(), {{"path", p.string()}});
  return out;
}

void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(2) << '\n'; }

json read_json(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, p.string() + ": " + e.what(), {{"path", p.string()}});
  }
}

double num(double v) { return std::isfinite(v) ? v : 0.0; }

json coefficient_json(const outcomes::Coefficient& k) {
  return json{{"name", k.name},   {"estimate", k.estimate}, {"se", k.se},     {"ratio", k.ratio},
              {"ci_low", k.ci_low}, {"ci_high", k.ci_high}, {"z", num(k.z)}, {"p_value", k.p_value}};
}

outcomes::Coefficient coefficient_from(const json& j) {
  // Non-finite values are written as null.
  const auto get = [&](const char* key) {
    const auto& v = j.at(key);
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  outcomes::Coefficient k;
  k.name = j.at("name").get<std::string>();
  k.estimate = get("estimate");
  k.se = get("se");
  k.ratio = get("ratio");
  k.ci_low = get("ci_low");
  k.ci_high = get("ci_high");
  k.z = get("z");
  k.p_value = get("p_value");
  return k;
}

void write_coefficients_csv(const std::vector<outcomes::Coefficient>& ks, const fs::path& p) {
  auto out = open_out(p);
  CsvWriter w(out);
  w.row({"term", "estimate", "se", "ratio", "ci_low", "ci_high", "z", "p"});
  for (const auto& k : ks)
    w.row({k.name, fmt_double(k.estimate, 8), fmt_double(k.se, 8), fmt_double(k.ratio, 8),
           fmt_double(k.ci_low, 8), fmt_double(k.ci_high, 8), fmt_double(k.z, 8), fmt_double(k.p_value, 8)});
}

// ---------------------------------------------------------------------------
// Extraction stages

void cmd_ingest(Ctx& c) {
  require_input(c.cfg.notes, "paths.notes");
  std::vector<corpus::IngestIssue> issues;
  const auto notes = corpus::ingest_notes(c.cfg.notes, corpus::IngestErrorPolicy::kSkip, &issues);
  {
    auto out = open_out(c.ws.output("notes.jsonl", {c.cfg.notes}));
    for (const auto& n : notes) out << corpus::serialize_note_record(n) << '\n';
  }
  auto out = open_out(c.ws.output("ingest_issues.csv", {c.cfg.notes}));
  CsvWriter w(out);
  w.row({"line", "field", "message"});
  for (const auto& i : issues) w.row({std::to_string(i.line), i.field, i.message});
  c.out << "ingest: " << notes.size() << " notes, " << issues.size() << " skipped records -> "
        << (c.ws.dir() / "notes.jsonl").string() << '\n';
}

void cmd_tag(Ctx& c) {
  const auto res = load_resources(c.cfg, false);
  const auto notes_path = c.ws.upstream("notes.jsonl", "ingest");
  const auto notes = corpus::ingest_notes(notes_path, corpus::IngestErrorPolicy::kAbort);
  const auto docs = pipeline::annotate_notes(notes, res);
  std::vector<fs::path> inputs{notes_path, c.cfg.triggers, c.cfg.headers};
  inputs.insert(inputs.end(), c.cfg.dictionaries.begin(), c.cfg.dictionaries.end());
  serialize::write_annotations(docs, c.ws.output("annotations.jsonl", inputs));
  std::size_t mentions = 0;
  for (const auto& d : docs)
    for (const auto& s : d.mentions) mentions += s.size();
  c.out << "tag: " << mentions << " entity mentions in " << docs.size() << " notes\n";
}

void cmd_candidates(Ctx& c) {
  const auto res = load_resources(c.cfg, false);
  const auto docs = load_documents(c, res);
  std::string summary;
  for (auto r : {RelationType::kPainAnatomy, RelationType::kImplantComplication}) {
    const auto cands = pipeline::candidates_for(docs, r);
    serialize::write_candidates(cands, c.ws.output(cand_name(r), {c.ws.dir() / "notes.jsonl",
                                                                   c.ws.dir() / "annotations.jsonl"}));
    summary += (summary.empty() ? "" : ", ") + std::to_string(cands.size()) + " " + std::string(to_string(r));
  }
  c.out << "candidates: " << summary << '\n';
}

void cmd_lf_apply(Ctx& c) {
  const auto cand_path = c.ws.upstream(cand_name(c.relation), "candidates");
  const auto cands = serialize::read_candidates(cand_path);
  const auto lfs = load_lfs(c.cfg, c.relation);
  weaksup::ApplyDiagnostics diag;
  const auto matrix = weaksup::apply_lfs(cands, lfs, &diag);
  std::vector<fs::path> inputs{cand_path};
  if (!c.cfg.lfs_path(c.relation).empty()) inputs.push_back(c.cfg.lfs_path(c.relation));
  weaksup::write_label_matrix(matrix, c.ws.output(matrix_name(c.relation), inputs));
  weaksup::write_label_matrix_csv(matrix, c.ws.output("label_matrix_" + relation_slug(c.relation) + ".csv", inputs));
  c.out << "lf apply: " << matrix.n() << " candidates x " << matrix.m() << " labeling functions, "
        << diag.total_errors() << " LF errors\n";
}

void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], r[i].size());
    }
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      line += r[i];
      if (i + 1 < r.size()) line += std::string(width[i] - r[i].size() + 2, ' ');
    }
    out << line << '\n';
  }
}

void cmd_lf_stats(Ctx& c) {
  const auto cand_path = c.ws.upstream(cand_name(c.relation), "candidates");
  const auto cands = serialize::read_candidates(cand_path);
  const auto lfs = load_lfs(c.cfg, c.relation);
  const auto gold = load_gold(c.cfg, c.relation, false);
  std::vector<std::vector<std::string>> table;
  const std::string slug = relation_slug(c.relation);
  if (c.dev_only) {
    const auto split = split_of(c.cfg, cands);
    std::vector<extraction::RelationCandidate> dev;
    for (auto i : rows_in(cands, split.dev)) dev.push_back(cands[i]);
    const auto rows = pipeline::lf_dev_loop(dev, lfs, gold ? &*gold : nullptr);
    table.push_back({"lf_id", "coverage", "votes"});
    if (gold) table.back().push_back("accuracy");
    for (const auto& r : rows) {
      table.push_back({r.lf_id, fmt_fixed(r.coverage, 4), std::to_string(r.votes)});
      if (gold) table.back().push_back(r.accuracy ? fmt_fixed(*r.accuracy, 4) : "");
    }
  } else {
    const auto matrix = weaksup::read_label_matrix(c.ws.upstream(matrix_name(c.relation), "lf apply"));
    weaksup::GoldLabels restricted;
    if (gold)
      for (const auto& id : matrix.candidate_ids())
        if (auto it = gold->find(id); it != gold->end()) restricted.insert(*it);
    const auto stats = weaksup::lf_statistics(matrix, gold ? &restricted : nullptr);
    table.push_back({"lf_id", "coverage", "overlap", "conflict"});
    if (gold) table.back().push_back("accuracy");
    for (const auto& s : stats) {
      table.push_back({s.lf_id, fmt_fixed(s.coverage, 4), fmt_fixed(s.overlap, 4), fmt_fixed(s.conflict, 4)});
      if (gold) table.back().push_back(s.accuracy ? fmt_fixed(*s.accuracy, 4) : "");
    }
  }
  const auto name = std::string(c.dev_only ? "lf_dev_" : "lf_stats_") + slug + ".csv";
  auto out = open_out(c.ws.output(name, {cand_path}));
  CsvWriter w(out);
  for (const auto& r : table) w.row(r);
  print_table(c.out, table);
  c.out << "lf stats: " << table.size() - 1 << " labeling functions" << (c.dev_only ? " on the dev split" : "")
        << '\n';
}

void cmd_labelmodel_fit(Ctx& c) {
  const auto cand_path = c.ws.upstream(cand_name(c.relation), "candidates");
  const auto mat_path = c.ws.upstream(matrix_name(c.relation), "lf apply");
  const auto cands = serialize::read_candidates(cand_path);
  const auto matrix = weaksup::read_label_matrix(mat_path);
  if (matrix.n() != cands.size())
    throw Error(ErrorCode::kMismatch, "label matrix and candidates disagree; rerun `devsurv lf apply`");
  const auto split = split_of(c.cfg, cands);
  const auto train = matrix.select_rows(rows_in(cands, split.train));
  const auto model = weaksup::fit_label_model(train, c.cfg.label_model);
  open_out(c.ws.output(lm_name(c.relation), {mat_path})) << weaksup::label_model_to_json(model) << '\n';
  weaksup::write_probabilistic_labels(weaksup::posterior_labels(model, matrix),
                                      c.ws.output(labels_name(c.relation), {mat_path}));
  c.out << "labelmodel fit: " << model.iterations << " EM iterations on " << train.n() << " training rows"
        << (model.converged ? "" : " (not converged)") << '\n';
}

void cmd_train(Ctx& c) {
  const auto cand_path = c.ws.upstream(cand_name(c.relation), "candidates");
  const auto mat_path = c.ws.upstream(matrix_name(c.relation), "lf apply");
  const auto lab_path = c.ws.upstream(labels_name(c.relation), "labelmodel fit");
  const auto cands = serialize::read_candidates(cand_path);
  const auto matrix = weaksup::read_label_matrix(mat_path);
  const auto labels = weaksup::read_probabilistic_labels(lab_path);
  std::map<std::string, double> p_of;
  for (std::size_t i = 0; i < labels.candidate_ids.size(); ++i) p_of[labels.candidate_ids[i]] = labels.p_true[i];
  const auto split = split_of(c.cfg, cands);
  std::vector<classifier::FeatureVector> x;
  std::vector<double> p;
  for (auto i : rows_in(cands, split.train)) {
    bool covered = false;
    for (std::size_t j = 0; j < matrix.m() && !covered; ++j) covered = matrix.at(i, j) != weaksup::Vote::kAbstain;
    if (!covered) continue;
    auto it = p_of.find(cands[i].candidate_id);
    if (it == p_of.end())
      throw Error(ErrorCode::kMismatch, "no probabilistic label for " + cands[i].candidate_id,
                  {{"candidate_id", cands[i].candidate_id}});
    x.push_back(classifier::featurize(cands[i]));
    p.push_back(it->second);
  }
  if (x.empty()) throw Error(ErrorCode::kNoSignal, "no training candidate received a labeling-function vote");
  auto model = classifier::train_noise_aware(x, p, c.cfg.train);
  std::string how = "default";
  if (c.cfg.threshold) {
    model.threshold = *c.cfg.threshold;
    how = "configured";
  } else if (const auto gold = load_gold(c.cfg, c.relation, false)) {
    std::vector<double> s;
    std::vector<bool> y;
    for (auto i : rows_in(cands, split.dev))
      if (auto it = gold->find(cands[i].candidate_id); it != gold->end()) {
        s.push_back(classifier::predict(model, cands[i]));
        y.push_back(it->second);
      }
    if (std::count(y.begin(), y.end(), true) > 0 && std::count(y.begin(), y.end(), false) > 0) {
      model.threshold = classifier::select_threshold(s, y);
      how = "tuned on dev gold";
    }
  }
  classifier::save_model(model, c.ws.output(model_name(c.relation), {cand_path, lab_path}));
  c.out << "train: " << x.size() << " covered training candidates, threshold " << fmt_fixed(model.threshold, 2)
        << " (" << how << ")\n";
}

void cmd_predict(Ctx& c) {
  const auto cand_path = c.ws.upstream(cand_name(c.relation), "candidates");
  const auto model_path = c.ws.upstream(model_name(c.relation), "train");
  const auto cands = serialize::read_candidates(cand_path);
  const auto model = classifier::load_model(model_path);
  std::map<std::string, double> scores;
  std::size_t positive = 0;
  for (const auto& cand : cands) {
    const double s = classifier::predict(model, cand);
    scores[cand.candidate_id] = s;
    positive += s >= model.threshold;
  }
  serialize::write_scores(scores, c.ws.output(scores_name(c.relation), {cand_path, model_path}));
  c.out << "predict: " << positive << " of " << scores.size() << " candidates positive at threshold "
        << fmt_fixed(model.threshold, 2) << '\n';
}

void cmd_eval(Ctx& c) {
  const auto cand_path = c.ws.upstream(cand_name(c.relation), "candidates");
  const auto score_path = c.ws.upstream(scores_name(c.relation), "predict");
  const auto model_path = c.ws.upstream(model_name(c.relation), "train");
  const auto mat_path = c.ws.upstream(matrix_name(c.relation), "lf apply");
  const auto lm_path = c.ws.upstream(lm_name(c.relation), "labelmodel fit");
  const auto cands = serialize::read_candidates(cand_path);
  const auto scores = serialize::read_scores(score_path);
  const auto model = classifier::load_model(model_path);
  const auto matrix = weaksup::read_label_matrix(mat_path);
  std::ifstream lm_in(lm_path);
  std::stringstream lm_text;
  lm_text << lm_in.rdbuf();
  const auto lm = weaksup::label_model_from_json(lm_text.str());
  const auto gold = *load_gold(c.cfg, c.relation, true);

  const auto split = split_of(c.cfg, cands);
  const auto test_rows = rows_in(cands, split.test);
  weaksup::GoldLabels g;
  std::map<std::string, double> clf;
  std::vector<double> s;
  std::vector<bool> y;
  for (auto i : test_rows) {
    const auto& id = cands[i].candidate_id;
    auto it = gold.find(id);
    if (it == gold.end()) continue;
    g.insert(*it);
    auto sc = scores.find(id);
    if (sc == scores.end())
      throw Error(ErrorCode::kMismatch, "no score for candidate " + id + "; rerun `devsurv predict`",
                  {{"candidate_id", id}});
    clf[id] = sc->second;
    s.push_back(sc->second);
    y.push_back(it->second);
  }
  if (g.empty()) throw Error(ErrorCode::kMissingInput, "no gold labels for the test split");
  const auto test_matrix = matrix.select_rows(test_rows);
  auto hard = [&](const weaksup::ProbabilisticLabels& pl) {
    std::map<std::string, double> m;
    for (std::size_t i = 0; i < pl.candidate_ids.size(); ++i)
      if (g.count(pl.candidate_ids[i])) m[pl.candidate_ids[i]] = pl.p_true[i] > 0.5 ? 1.0 : 0.0;
    return eval::prf1(m, g, 0.5);
  };
  const std::vector<std::pair<std::string, eval::Metrics>> rows{
      {"classifier", eval::prf1(clf, g, model.threshold)},
      {"label_model", hard(weaksup::posterior_labels(lm, test_matrix))},
      {"smv", hard(weaksup::soft_majority_vote(test_matrix))}};
  const std::vector<fs::path> inputs{score_path, c.cfg.gold};
  {
    auto out = open_out(c.ws.output("metrics_" + relation_slug(c.relation) + ".csv", inputs));
    CsvWriter w(out);
    w.row({"method", "precision", "recall", "f1", "tp", "fp", "fn", "n_test"});
    for (const auto& [name, m] : rows)
      w.row({name, fmt_fixed(m.precision, 4), fmt_fixed(m.recall, 4), fmt_fixed(m.f1, 4), std::to_string(m.tp),
             std::to_string(m.fp), std::to_string(m.fn), std::to_string(g.size())});
  }
  const bool both = std::count(y.begin(), y.end(), true) > 0 && std::count(y.begin(), y.end(), false) > 0;
  if (both) {
    const auto pr = eval::pr_curve(s, y);
    auto out = open_out(c.ws.output("pr_" + relation_slug(c.relation) + ".csv", inputs));
    CsvWriter w(out);
    w.row({"threshold", "recall", "precision"});
    for (const auto& pt : pr.points)
      w.row({fmt_double(pt.threshold, 10), fmt_fixed(pt.recall, 6), fmt_fixed(pt.precision, 6)});
  }
  const auto& m = rows[0].second;
  c.out << "eval: classifier P " << fmt_fixed(m.precision, 1) << " R " << fmt_fixed(m.recall, 1) << " F1 "
        << fmt_fixed(m.f1, 1) << " on " << g.size() << " test candidates (smv F1 " << fmt_fixed(rows[2].second.f1, 1)
        << ")\n";
}

// ---------------------------------------------------------------------------
// Registry and outcomes

void cmd_reconcile(Ctx& c) {
  require_input(c.cfg.registry, "paths.registry");
  const auto res = load_resources(c.cfg, true);
  const auto docs = load_documents(c, res);
  const auto extracted = pipeline::implants_from_notes(docs, *res.catalog);
  std::vector<reconcile::RegistryRecord> registry;
  for (auto r : reconcile::read_registry_csv(c.cfg.registry))
    registry.push_back(reconcile::canonicalize_record(std::move(r), *res.catalog));
  const auto report = reconcile::reconcile_registry(extracted, registry, c.cfg.registry_tolerance_days);
  const std::vector<fs::path> inputs{c.ws.dir() / "annotations.jsonl", c.cfg.registry};
  reconcile::write_registry_csv(extracted, c.ws.output("extracted_implants.csv", inputs));
  reconcile::write_report_csv(report, c.ws.output("reconcile_report.csv", inputs));
  open_out(c.ws.output("reconcile_summary.json", inputs)) << reconcile::report_summary_json(report) << '\n';
  using reconcile::Status;
  c.out << "reconcile: " << report.total() << " keys, " << report.count(Status::kAgreement) << " agree, "
        << report.count(Status::kConflict) << " conflict, " << report.count(Status::kMissingInRegistry)
        << " missing in registry, " << report.count(Status::kMissingInExtraction) << " missing in extraction\n";
}

std::vector<outcomes::PatientRecord> load_records(const ProjectConfig& cfg) {
  require_input(cfg.patients, "paths.patients");
  require_input(cfg.codes, "paths.codes");
  return outcomes::load_patient_records(cfg.patients, cfg.codes);
}

void cmd_cohort(Ctx& c) {
  const auto records = load_records(c.cfg);
  const auto cohort = outcomes::select_cohort(records, c.cfg.code_sets);
  const std::vector<fs::path> inputs{c.cfg.patients, c.cfg.codes};
  {
    auto out = open_out(c.ws.output("cohort.csv", inputs));
    CsvWriter w(out);
    w.row({"patient_id", "index_date"});
    for (const auto& m : cohort.members) w.row({m.patient_id, format_date(m.index_date)});
  }
  outcomes::write_events_csv(cohort.coded_revisions, c.ws.output("coded_events.csv", inputs));
  c.out << "cohort: " << cohort.members.size() << " of " << records.size() << " patients, "
        << cohort.coded_revisions.size() << " coded revisions\n";
}

outcomes::Cohort load_cohort(Ctx& c) {
  const auto table = CsvTable::read(c.ws.upstream("cohort.csv", "cohort"));
  table.require_columns({"patient_id", "index_date"});
  outcomes::Cohort cohort;
  for (const auto& row : table.rows()) {
    auto d = parse_iso_date(row.at("index_date"));
    if (!d)
      throw Error(ErrorCode::kParse, "cohort.csv line " + std::to_string(row.line()) + ": bad index_date",
                  {{"line", std::to_string(row.line())}});
    cohort.members.push_back({row.at("patient_id"), *d});
  }
  cohort.coded_revisions = outcomes::read_events_csv(c.ws.upstream("coded_events.csv", "cohort"));
  return cohort;
}

void cmd_events_merge(Ctx& c) {
  const auto coded_path = c.ws.upstream("coded_events.csv", "cohort");
  const auto coded = outcomes::read_events_csv(coded_path);
  std::vector<outcomes::Event> text;
  std::vector<fs::path> inputs{coded_path};
  for (auto r : {RelationType::kPainAnatomy, RelationType::kImplantComplication}) {
    if (!c.ws.has(scores_name(r))) continue;
    const auto score_path = c.ws.upstream(scores_name(r), "predict");
    const auto cands = serialize::read_candidates(c.ws.upstream(cand_name(r), "candidates"));
    const auto model = classifier::load_model(c.ws.upstream(model_name(r), "train"));
    const auto ev = pipeline::events_from_predictions(cands, serialize::read_scores(score_path), model.threshold);
    text.insert(text.end(), ev.begin(), ev.end());
    inputs.push_back(score_path);
  }
  if (inputs.size() == 1)
    throw Error(ErrorCode::kMissingInput, "no prediction scores found; run `devsurv predict` first",
                {{"path", (c.ws.dir() / scores_name(c.relation)).string()}});
  outcomes::write_events_csv(text, c.ws.output("text_events.csv", inputs));
  const auto merged = outcomes::merge_events(coded, text, c.cfg.event_window_days);
  outcomes::write_events_csv(merged.events, c.ws.output("events.csv", inputs));
  c.out << "events merge: " << coded.size() << " coded + " << text.size() << " text, " << merged.matched
        << " matched -> " << merged.events.size() << " events\n";
}

outcomes::SurvivalDataset load_dataset(Ctx& c, std::vector<outcomes::PatientRecord>* records_out = nullptr,
                                       std::vector<outcomes::Event>* events_out = nullptr) {
  auto records = load_records(c.cfg);
  const auto cohort = load_cohort(c);
  auto events = outcomes::read_events_csv(c.ws.upstream("events.csv", "events merge"));
  auto ds = outcomes::build_survival_dataset(records, cohort, events, c.cfg.outcome, c.cfg.covariates);
  if (ds.excluded_nonpositive + ds.excluded_implant > 0)
    c.err << "warning: excluded " << ds.excluded_nonpositive << " subjects with nonpositive follow-up and "
          << ds.excluded_implant << " without exactly one implant system\n";
  if (records_out) *records_out = std::move(records);
  if (events_out) *events_out = std::move(events);
  return ds;
}

std::vector<fs::path> outcome_inputs(Ctx& c) {
  return {c.cfg.patients, c.cfg.codes, c.ws.dir() / "cohort.csv", c.ws.dir() / "events.csv"};
}

void cmd_survival_km(Ctx& c) {
  const auto ds = load_dataset(c);
  const auto groups = ds.levels("system");
  const bool grouped = c.cfg.covariates.implant_system;
  const auto curves = outcomes::km_estimate(ds.times(), ds.events(), grouped ? &groups : nullptr);
  auto out = open_out(c.ws.output("km.csv", outcome_inputs(c)));
  CsvWriter w(out);
  w.row({"group", "time", "survival", "at_risk", "events"});
  for (const auto& k : curves)
    for (std::size_t i = 0; i < k.times.size(); ++i)
      w.row({k.group, fmt_double(k.times[i]), fmt_double(k.survival[i], 10), std::to_string(k.at_risk[i]),
             std::to_string(k.events[i])});
  c.out << "survival km: " << curves.size() << " curves over " << ds.subjects.size() << " subjects\n";
}

json logrank_json(const outcomes::LogRankResult& r) {
  return json{{"groups", r.groups},       {"observed", r.observed}, {"expected", r.expected},
              {"statistic", r.statistic}, {"df", r.df},             {"p_value", r.p_value}};
}

void cmd_survival_logrank(Ctx& c) {
  const auto ds = load_dataset(c);
  const auto r = outcomes::logrank_test(ds.times(), ds.events(), ds.levels("system"));
  write_json(c.ws.output("logrank.json", outcome_inputs(c)), logrank_json(r));
  c.out << "survival logrank: chi2 " << fmt_fixed(r.statistic, 3) << " on " << r.df << " df, p "
        << fmt_double(r.p_value, 4) << '\n';
}

void cmd_survival_cox(Ctx& c) {
  const auto ds = load_dataset(c);
  const auto fit = outcomes::cox_fit(ds, "system");
  const auto ev = ds.events();
  json coefs = json::array();
  for (const auto& k : fit.coefficients) coefs.push_back(coefficient_json(k));
  json forest = json::array();
  if (c.cfg.covariates.implant_system)
    for (const auto& r : outcomes::forest_table(ds, fit, "system")) {
      json row{{"system", r.system}, {"n_patients", r.n_patients}, {"n_events", r.n_events},
               {"person_years", r.person_years}};
      if (r.hr) row["hr"] = coefficient_json(*r.hr);
      forest.push_back(row);
    }
  json j{{"outcome", c.cfg.outcome},
         {"n_subjects", ds.subjects.size()},
         {"n_events", std::count(ev.begin(), ev.end(), true)},
         {"reference_levels", ds.reference_levels},
         {"coefficients", coefs},
         {"log_likelihood", fit.log_likelihood},
         {"null_log_likelihood", fit.null_log_likelihood},
         {"score_statistic", fit.score_statistic},
         {"score_p", fit.score_p},
         {"lr_statistic", fit.lr_statistic},
         {"lr_p", fit.lr_p},
         {"df", fit.df},
         {"iterations", fit.iterations},
         {"converged", fit.converged},
         {"forest", forest}};
  if (fit.logrank) j["logrank"] = logrank_json(*fit.logrank);
  const auto inputs = outcome_inputs(c);
  write_json(c.ws.output("cox.json", inputs), j);
  write_coefficients_csv(fit.coefficients, c.ws.output("cox_coefficients.csv", inputs));
  c.out << "survival cox: " << fit.coefficients.size() << " coefficients, " << ds.subjects.size() << " subjects, "
        << j["n_events"].get<long>() << " events, " << fit.iterations << " iterations\n";
}

struct PainCounts {
  std::vector<std::string> patient_ids;
  std::vector<double> counts;
  std::vector<double> follow_up_years;
  std::vector<bool> complication;
  std::vector<std::string> system;
};

// Pain events per cohort patient over follow-up, aligned with the survival
// dataset's subjects.
PainCounts pain_counts(const outcomes::SurvivalDataset& ds, const std::vector<outcomes::PatientRecord>& records,
                       const outcomes::Cohort& cohort, const std::vector<outcomes::Event>& events) {
  std::map<std::string, const outcomes::PatientRecord*> rec;
  for (const auto& r : records) rec[r.patient_id] = &r;
  std::map<std::string, Date> index;
  for (const auto& m : cohort.members) index[m.patient_id] = m.index_date;
  std::map<std::string, double> n_pain;
  std::set<std::string> any;
  const auto& comp = outcomes::complication_classes();
  for (const auto& e : events) {
    auto it = index.find(e.patient_id);
    if (it == index.end() || e.date < it->second) continue;
    if (e.event_class == outcomes::EventClass::kPain)
      n_pain[e.patient_id] += 1.0;
    else if (std::find(comp.begin(), comp.end(), e.event_class) != comp.end())
      any.insert(e.patient_id);
  }
  PainCounts pc;
  for (const auto& s : ds.subjects) {
    const auto* r = rec.at(s.patient_id);
    const Date start = index.at(s.patient_id);
    Date end = r->last_contact_date.value_or(start);
    for (const auto& e : events)
      if (e.patient_id == s.patient_id && e.date > end) end = e.date;
    pc.patient_ids.push_back(s.patient_id);
    pc.counts.push_back(n_pain[s.patient_id]);
    pc.follow_up_years.push_back(std::max(1.0, static_cast<double>(days_between(start, end))) / 365.25);
    pc.complication.push_back(any.count(s.patient_id) > 0);
    pc.system.push_back(r->implant_systems.size() == 1 ? r->implant_systems.front() : "");
  }
  return pc;
}

void cmd_regression_nb(Ctx& c) {
  std::vector<outcomes::PatientRecord> records;
  std::vector<outcomes::Event> events;
  const bool systems = c.cfg.covariates.implant_system;
  ProjectConfig local = c.cfg;
  local.covariates.implant_system = false;
  Ctx lc{local, c.ws, c.out, c.err, c.relation};
  const auto ds = load_dataset(lc, &records, &events);
  const auto cohort = load_cohort(c);
  const auto pc = pain_counts(ds, records, cohort, events);

  // Rows with a single implant system (when systems enter the model).
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pc.counts.size(); ++i)
    if (!systems || !pc.system[i].empty()) keep.push_back(i);
  if (keep.size() < pc.counts.size())
    c.err << "warning: excluded " << pc.counts.size() - keep.size() << " patients without exactly one implant system\n";
  outcomes::CutoffContext ctx;
  ctx.covariates.resize(static_cast<Eigen::Index>(keep.size()), ds.x.cols());
  std::vector<std::string> sys;
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const auto i = keep[r];
    ctx.counts.push_back(pc.counts[i]);
    ctx.exposure.push_back(pc.follow_up_years[i]);
    ctx.covariates.row(static_cast<Eigen::Index>(r)) = ds.x.row(static_cast<Eigen::Index>(i));
    sys.push_back(pc.system[i]);
  }
  ctx.covariate_names = ds.column_names;
  json j;
  outcomes::NBFit fit;
  if (systems) {
    const auto res = outcomes::choose_other_cutoff(sys, c.cfg.nb_cutoffs, ctx);
    for (const auto& w : res.warnings) c.err << "warning: " << w << '\n';
    fit = res.fit;
    json aic = json::array();
    for (const auto& [k, a] : res.aic) aic.push_back({{"cutoff", k}, {"aic", a}});
    j["cutoff"] = res.cutoff;
    j["aic_by_cutoff"] = aic;
    j["collapsed"] = res.collapsed;
    j["reference_system"] = res.reference;
  } else {
    fit = outcomes::nb_fit(ctx.covariates, ctx.counts, ctx.covariate_names, &ctx.exposure);
  }
  json coefs = json::array();
  for (const auto& k : fit.coefficients) coefs.push_back(coefficient_json(k));
  j["n_patients"] = ctx.counts.size();
  j["coefficients"] = coefs;
  j["theta"] = fit.theta;
  j["theta_at_bound"] = fit.theta_at_bound;
  j["log_likelihood"] = fit.log_likelihood;
  j["aic"] = fit.aic;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  const auto inputs = outcome_inputs(c);
  write_json(c.ws.output("nb.json", inputs), j);
  write_coefficients_csv(fit.coefficients, c.ws.output("nb_coefficients.csv", inputs));
  c.out << "regression nb: " << ctx.counts.size() << " patients, theta " << fmt_double(fit.theta, 4) << ", AIC "
        << fmt_fixed(fit.aic, 2) << (systems ? ", cutoff " + std::to_string(j["cutoff"].get<int>()) : "") << '\n';
}

void cmd_ttest(Ctx& c) {
  std::vector<outcomes::PatientRecord> records;
  std::vector<outcomes::Event> events;
  ProjectConfig local = c.cfg;
  local.covariates.implant_system = false;
  Ctx lc{local, c.ws, c.out, c.err, c.relation};
  const auto ds = load_dataset(lc, &records, &events);
  const auto pc = pain_counts(ds, records, load_cohort(c), events);
  std::vector<double> a, b;
  for (std::size_t i = 0; i < pc.counts.size(); ++i) {
    const double v = c.cfg.ttest_per_follow_up_year ? pc.counts[i] / pc.follow_up_years[i] : pc.counts[i];
    (pc.complication[i] ? a : b).push_back(v);
  }
  const auto r = outcomes::ttest_welch(a, b);
  write_json(c.ws.output("ttest.json", outcome_inputs(c)),
             json{{"group_a", "any complication"},
                  {"group_b", "no complication"},
                  {"n_a", a.size()},
                  {"n_b", b.size()},
                  {"per_follow_up_year", c.cfg.ttest_per_follow_up_year},
                  {"mean_a", r.mean_a},
                  {"mean_b", r.mean_b},
                  {"t", r.t},
                  {"df", r.df},
                  {"p_value", r.p_value}});
  c.out << "ttest: pain mentions " << fmt_fixed(r.mean_a, 2) << " vs " << fmt_fixed(r.mean_b, 2) << ", t "
        << fmt_fixed(r.t, 3) << ", p " << fmt_double(r.p_value, 4) << '\n';
}

void cmd_synth_gen(Ctx& c) {
  const auto res = load_resources(c.cfg, true);
  const auto corpus = synth::gen_corpus(c.cfg.synth, res);
  synth::write_corpus(corpus, c.cfg.synth_out);
  c.out << "synth gen: " << c.cfg.synth.n_patients << " patients, " << corpus.notes.size() << " notes, "
        << corpus.gold_relations.size() << " gold candidates, " << corpus.gold_events.size() << " gold events -> "
        << c.cfg.synth_out.string() << '\n';
}

void cmd_report_forest(Ctx& c) {
  const auto cox_path = c.ws.upstream("cox.json", "survival cox");
  const auto j = read_json(cox_path);
  std::vector<outcomes::ForestRow> rows;
  try {
    for (const auto& r : j.at("forest")) {
      outcomes::ForestRow f;
      f.system = r.at("system").get<std::string>();
      f.n_patients = r.at("n_patients").get<std::size_t>();
      f.n_events = r.at("n_events").get<std::size_t>();
      f.person_years = r.at("person_years").get<double>();
      if (r.contains("hr")) f.hr = coefficient_from(r.at("hr"));
      rows.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, cox_path.string() + ": " + e.what(), {{"path", cox_path.string()}});
  }
  if (rows.empty())
    throw Error(ErrorCode::kMissingInput, "cox.json has no implant-system rows (implant_system covariate off?)",
                {{"path", cox_path.string()}});
  outcomes::write_forest_csv(rows, c.ws.output("forest.csv", {cox_path}));
  c.out << "report forest: " << rows.size() << " systems -> " << (c.ws.dir() / "forest.csv").string() << '\n';
}

void cmd_run(Ctx& c) {
  cmd_ingest(c);
  cmd_tag(c);
  cmd_candidates(c);
  for (auto r : {RelationType::kPainAnatomy, RelationType::kImplantComplication}) {
    Ctx rc{c.cfg, c.ws, c.out, c.err, r};
    cmd_lf_apply(rc);
    cmd_labelmodel_fit(rc);
    cmd_train(rc);
    cmd_predict(rc);
    if (!c.cfg.gold.empty()) cmd_eval(rc);
  }
  if (!c.cfg.registry.empty()) cmd_reconcile(c);
  if (!c.cfg.patients.empty()) {
    cmd_cohort(c);
    cmd_events_merge(c);
    cmd_survival_cox(c);
    if (c.cfg.covariates.implant_system) cmd_report_forest(c);
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"devsurv: weakly supervised device-event extraction and surveillance statistics"};
  app.footer(kExitHelp);
  app.require_subcommand(1);
  std::string config_path;
  std::string relation_flag;
  bool dev_only = false;
  app.add_option("-c,--config", config_path, "Project config (JSON)")->required();
  app.add_option("-r,--relation", relation_flag, "pain-anatomy or implant-complication (default: config)");

  std::vector<std::pair<CLI::App*, std::function<void(Ctx&)>>> leaves;
  auto leaf = [&](CLI::App* parent, const char* name, const char* help, std::function<void(Ctx&)> fn) {
    auto* s = parent->add_subcommand(name, help);
    leaves.emplace_back(s, std::move(fn));
    return s;
  };
  leaf(&app, "ingest", "Validate notes JSONL -> notes.jsonl, ingest_issues.csv", cmd_ingest);
  leaf(&app, "tag", "Dictionary tagging and context -> annotations.jsonl", cmd_tag);
  leaf(&app, "candidates", "Relation candidates -> candidates_<relation>.jsonl", cmd_candidates);
  auto* lf = app.add_subcommand("lf", "Labeling functions");
  lf->require_subcommand(1);
  leaf(lf, "apply", "Apply LFs -> label_matrix_<relation>.lmx/.csv", cmd_lf_apply);
  leaf(lf, "stats", "Per-LF coverage/overlap/conflict/accuracy -> lf_stats_<relation>.csv", cmd_lf_stats)
      ->add_flag("--dev", dev_only, "Development loop on the dev split -> lf_dev_<relation>.csv");
  auto* lm = app.add_subcommand("labelmodel", "Generative label model");
  lm->require_subcommand(1);
  leaf(lm, "fit", "Fit on the train split -> label_model_<relation>.json, labels_<relation>.csv",
       cmd_labelmodel_fit);
  leaf(&app, "train", "Noise-aware classifier -> model_<relation>.bin", cmd_train);
  leaf(&app, "predict", "Score every candidate -> scores_<relation>.csv", cmd_predict);
  leaf(&app, "eval", "Test-split metrics -> metrics_<relation>.csv, pr_<relation>.csv", cmd_eval);
  leaf(&app, "reconcile", "Operative-note implants vs registry -> reconcile_report.csv", cmd_reconcile);
  leaf(&app, "cohort", "Cohort and coded revisions -> cohort.csv, coded_events.csv", cmd_cohort);
  auto* ev = app.add_subcommand("events", "Event timelines");
  ev->require_subcommand(1);
  leaf(ev, "merge", "Merge coded and text events -> events.csv", cmd_events_merge);
  auto* sv = app.add_subcommand("survival", "Time-to-event analysis");
  sv->require_subcommand(1);
  leaf(sv, "km", "Kaplan-Meier by implant system -> km.csv", cmd_survival_km);
  leaf(sv, "logrank", "Log-rank test across systems -> logrank.json", cmd_survival_logrank);
  leaf(sv, "cox", "Cox proportional hazards -> cox.json, cox_coefficients.csv", cmd_survival_cox);
  auto* rg = app.add_subcommand("regression", "Count regression");
  rg->require_subcommand(1);
  leaf(rg, "nb", "Negative binomial on pain mentions -> nb.json", cmd_regression_nb);
  leaf(&app, "ttest", "Welch t-test of pain mentions by complication status -> ttest.json", cmd_ttest);
  auto* sy = app.add_subcommand("synth", "Synthetic data");
  sy->require_subcommand(1);
  leaf(sy, "gen", "Generate a synthetic corpus into paths.synth_out", cmd_synth_gen);
  auto* rp = app.add_subcommand("report", "Reports");
  rp->require_subcommand(1);
  leaf(rp, "forest", "Forest-plot table from cox.json -> forest.csv", cmd_report_forest);
  leaf(&app, "run", "ingest through eval, then reconcile and outcomes when configured", cmd_run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const auto extra = app.remaining();
    if (!extra.empty() && extra.front().rfind('-', 0) != 0) {
      print_error(err, "usage", "unknown subcommand '" + extra.front() + "'", {{"subcommand", extra.front()}});
      return kExitUsage;
    }
    print_error(err, "usage", e.what(), {});
    return kExitUsage;
  }

  const std::function<void(Ctx&)>* fn = nullptr;
  std::string name;
  for (const auto& [s, f] : leaves)
    if (s->parsed()) {
      fn = &f;
      name = s->get_name();
    }
  if (!fn) {
    print_error(err, "usage", "no subcommand given", {});
    return kExitUsage;
  }

  try {
    const auto cfg = load_project(config_path);
    RelationType relation = cfg.relation;
    if (!relation_flag.empty()) {
      auto r = extraction::parse_relation_type(relation_flag);
      if (!r) {
        print_error(err, "usage", "unknown relation '" + relation_flag + "'", {{"relation", relation_flag}});
        return kExitUsage;
      }
      relation = *r;
    }
    Workspace ws(cfg, err);
    Ctx ctx{cfg, ws, out, err, relation, dev_only};
    (*fn)(ctx);
    return kExitOk;
  } catch (const Error& e) {
    print_error(err, to_string(e.code()), e.what(), e.context());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    print_error(err, "internal", e.what(), {{"command", name}});
    return kExitInternal;
  }
}

}  // namespace devsurv::cli
