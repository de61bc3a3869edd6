#include "project.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "devsurv/pipeline.hpp"

namespace devsurv::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& where, const std::set<std::string>& known) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidConfig, where + " must be an object", {{"key", where}});
  for (const auto& [k, v] : j.items())
    if (!known.count(k))
      throw Error(ErrorCode::kInvalidConfig, "unknown config key '" + (where.empty() ? k : where + "." + k) + "'",
                  {{"key", where.empty() ? k : where + "." + k}});
}

template <class T>
void read(const json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    const std::string full = where.empty() ? key : where + "." + key;
    throw Error(ErrorCode::kInvalidConfig, "config key '" + full + "' has the wrong type", {{"key", full}});
  }
}

struct PathResolver {
  fs::path base;

  fs::path operator()(const json& j, const char* key, const std::string& where, fs::path fallback = {}) const {
    std::string env = "DEVSURV_" + to_upper(key);
    if (const char* v = std::getenv(env.c_str()); v && *v) return resolve(v);
    if (!j.contains(key)) return fallback;
    std::string s;
    read(j, key, where, s);
    return resolve(s);
  }

  fs::path resolve(const fs::path& p) const {
    if (p.empty() || p.is_absolute()) return p;
    return (base / p).lexically_normal();
  }
};

void parse_pipeline(const json& j, ProjectConfig& c) {
  reject_unknown(j, "pipeline",
                 {"relation", "delta_bin_edges_days", "context_window", "split_seed", "train_fraction",
                  "dev_fraction", "label_model", "train", "threshold", "event_window_days",
                  "registry_tolerance_days", "outcome", "covariates", "nb_cutoffs",
                  "ttest_per_follow_up_year"});
  if (j.contains("relation")) {
    std::string r;
    read(j, "relation", "pipeline", r);
    auto rel = extraction::parse_relation_type(r);
    if (!rel)
      throw Error(ErrorCode::kInvalidConfig, "unknown relation '" + r + "'", {{"key", "pipeline.relation"}});
    c.relation = *rel;
  }
  read(j, "delta_bin_edges_days", "pipeline", c.delta_bin_edges_days);
  read(j, "context_window", "pipeline", c.context_window);
  read(j, "split_seed", "pipeline", c.split_seed);
  read(j, "train_fraction", "pipeline", c.train_fraction);
  read(j, "dev_fraction", "pipeline", c.dev_fraction);
  if (c.train_fraction <= 0.0 || c.dev_fraction < 0.0 || c.train_fraction + c.dev_fraction >= 1.0)
    throw Error(ErrorCode::kInvalidConfig, "split fractions must leave a nonempty test share",
                {{"key", "pipeline.train_fraction"}});
  if (j.contains("label_model")) {
    const auto& lm = j.at("label_model");
    reject_unknown(lm, "pipeline.label_model",
                   {"max_iterations", "tolerance", "init_accuracy", "prior", "learn_prior"});
    read(lm, "max_iterations", "pipeline.label_model", c.label_model.max_iterations);
    read(lm, "tolerance", "pipeline.label_model", c.label_model.tolerance);
    read(lm, "init_accuracy", "pipeline.label_model", c.label_model.init_accuracy);
    read(lm, "prior", "pipeline.label_model", c.label_model.prior);
    read(lm, "learn_prior", "pipeline.label_model", c.label_model.learn_prior);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t, "pipeline.train", {"seed", "epochs", "learning_rate", "lr_decay", "l2", "batch_size"});
    read(t, "seed", "pipeline.train", c.train.seed);
    read(t, "epochs", "pipeline.train", c.train.epochs);
    read(t, "learning_rate", "pipeline.train", c.train.learning_rate);
    read(t, "lr_decay", "pipeline.train", c.train.lr_decay);
    read(t, "l2", "pipeline.train", c.train.l2);
    read(t, "batch_size", "pipeline.train", c.train.batch_size);
  }
  if (j.contains("threshold") && !j.at("threshold").is_null()) {
    double t = 0.5;
    read(j, "threshold", "pipeline", t);
    c.threshold = t;
  }
  read(j, "event_window_days", "pipeline", c.event_window_days);
  read(j, "registry_tolerance_days", "pipeline", c.registry_tolerance_days);
  read(j, "outcome", "pipeline", c.outcome);
  if (c.outcome != "any_complication" && !outcomes::parse_event_class(c.outcome))
    throw Error(ErrorCode::kInvalidConfig, "unknown outcome '" + c.outcome + "'", {{"key", "pipeline.outcome"}});
  if (j.contains("covariates")) {
    const auto& v = j.at("covariates");
    const std::string w = "pipeline.covariates";
    reject_unknown(v, w, {"implant_system", "age", "sex", "race", "ethnicity", "cci", "reference_system",
                          "single_implant_only"});
    read(v, "implant_system", w, c.covariates.implant_system);
    read(v, "age", w, c.covariates.age);
    read(v, "sex", w, c.covariates.sex);
    read(v, "race", w, c.covariates.race);
    read(v, "ethnicity", w, c.covariates.ethnicity);
    read(v, "cci", w, c.covariates.cci);
    read(v, "reference_system", w, c.covariates.reference_system);
    read(v, "single_implant_only", w, c.covariates.single_implant_only);
  }
  read(j, "nb_cutoffs", "pipeline", c.nb_cutoffs);
  read(j, "ttest_per_follow_up_year", "pipeline", c.ttest_per_follow_up_year);
}

void parse_synth(const json& j, synth::SynthConfig& s) {
  const std::string w = "synth";
  reject_unknown(j, w,
                 {"seed", "n_patients", "min_followup_notes", "max_followup_notes", "min_pain_sentences",
                  "max_pain_sentences", "true_relation_rate", "history_rate", "review_of_systems_rate",
                  "complication_negative_rate", "followup_years_min", "followup_years_max", "index_year_min",
                  "index_year_max", "hazards", "coded_revision_rate", "coded_jitter_days",
                  "operative_note_rate", "registry_conflict_rate", "registry_drop_rate", "systems",
                  "templates"});
  read(j, "seed", w, s.seed);
  read(j, "n_patients", w, s.n_patients);
  read(j, "min_followup_notes", w, s.min_followup_notes);
  read(j, "max_followup_notes", w, s.max_followup_notes);
  read(j, "min_pain_sentences", w, s.min_pain_sentences);
  read(j, "max_pain_sentences", w, s.max_pain_sentences);
  read(j, "true_relation_rate", w, s.true_relation_rate);
  read(j, "history_rate", w, s.history_rate);
  read(j, "review_of_systems_rate", w, s.review_of_systems_rate);
  read(j, "complication_negative_rate", w, s.complication_negative_rate);
  read(j, "followup_years_min", w, s.followup_years_min);
  read(j, "followup_years_max", w, s.followup_years_max);
  read(j, "index_year_min", w, s.index_year_min);
  read(j, "index_year_max", w, s.index_year_max);
  read(j, "coded_revision_rate", w, s.coded_revision_rate);
  read(j, "coded_jitter_days", w, s.coded_jitter_days);
  read(j, "operative_note_rate", w, s.operative_note_rate);
  read(j, "registry_conflict_rate", w, s.registry_conflict_rate);
  read(j, "registry_drop_rate", w, s.registry_drop_rate);
  if (j.contains("hazards")) {
    const auto& h = j.at("hazards");
    if (!h.is_object()) throw Error(ErrorCode::kInvalidConfig, "synth.hazards must be an object");
    s.hazards.clear();
    for (const auto& [k, v] : h.items()) {
      auto cls = outcomes::parse_event_class(k);
      if (!cls || !v.is_number())
        throw Error(ErrorCode::kInvalidConfig, "bad hazard entry '" + k + "'", {{"key", "synth.hazards." + k}});
      s.hazards[*cls] = v.get<double>();
    }
  }
  if (j.contains("systems")) {
    const auto& arr = j.at("systems");
    if (!arr.is_array()) throw Error(ErrorCode::kInvalidConfig, "synth.systems must be an array");
    s.systems.clear();
    for (const auto& e : arr) {
      reject_unknown(e, "synth.systems[]", {"name", "acetabular_id", "femoral_id", "weight", "hazard_ratio"});
      synth::ImplantSystem sys;
      read(e, "name", "synth.systems[]", sys.name);
      read(e, "acetabular_id", "synth.systems[]", sys.acetabular_id);
      read(e, "femoral_id", "synth.systems[]", sys.femoral_id);
      read(e, "weight", "synth.systems[]", sys.weight);
      read(e, "hazard_ratio", "synth.systems[]", sys.hazard_ratio);
      s.systems.push_back(std::move(sys));
    }
  }
  if (j.contains("templates")) {
    const auto& t = j.at("templates");
    const std::string tw = "synth.templates";
    reject_unknown(t, tw, {"pain_positive", "pain_negative", "pain_history", "complication_positive",
                           "complication_negative", "filler"});
    read(t, "pain_positive", tw, s.templates.pain_positive);
    read(t, "pain_negative", tw, s.templates.pain_negative);
    read(t, "pain_history", tw, s.templates.pain_history);
    read(t, "complication_positive", tw, s.templates.complication_positive);
    read(t, "complication_negative", tw, s.templates.complication_negative);
    read(t, "filler", tw, s.templates.filler);
  }
  s.validate();
}

}  // namespace

fs::path ProjectConfig::lfs_path(extraction::RelationType r) const {
  return r == extraction::RelationType::kPainAnatomy ? lfs_pain_anatomy : lfs_implant_complication;
}

std::string relation_slug(extraction::RelationType r) {
  std::string s(extraction::to_string(r));
  std::replace(s.begin(), s.end(), '-', '_');
  return s;
}

void require_input(const fs::path& p, const std::string& key) {
  if (p.empty())
    throw Error(ErrorCode::kInvalidConfig, "config key '" + key + "' is required by this command", {{"key", key}});
  if (!fs::exists(p))
    throw Error(ErrorCode::kMissingInput, "input '" + key + "' does not exist: " + p.string(),
                {{"key", key}, {"path", p.string()}});
}

ProjectConfig load_project(const fs::path& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::kMissingInput, "cannot open config " + path.string(), {{"path", path.string()}});
  std::stringstream ss;
  ss << in.rdbuf();
  json doc;
  try {
    doc = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kInvalidConfig, "config is not valid JSON: " + std::string(e.what()),
                {{"path", path.string()}});
  }
  reject_unknown(doc, "", {"output_dir", "data_dir", "paths", "pipeline", "codes", "synth"});

  ProjectConfig c;
  c.source = path;
  c.hash = hex64(fnv1a(doc.dump()));
  const PathResolver resolve{fs::absolute(path).parent_path()};
  c.output_dir = resolve(doc, "output_dir", "", resolve.resolve("out"));
  c.data_dir = resolve(doc, "data_dir", "", pipeline::default_data_dir());

  const auto defaults = pipeline::ResourcePaths::under(c.data_dir);
  const json paths = doc.value("paths", json::object());
  reject_unknown(paths, "paths",
                 {"notes", "dictionaries", "triggers", "headers", "catalog", "manufacturer_aliases", "registry",
                  "patients", "codes", "gold", "lfs_pain_anatomy", "lfs_implant_complication", "synth_out"});
  c.notes = resolve(paths, "notes", "paths");
  c.dictionaries = defaults.dictionaries;
  if (paths.contains("dictionaries")) {
    std::vector<std::string> d;
    read(paths, "dictionaries", "paths", d);
    c.dictionaries.clear();
    for (const auto& p : d) c.dictionaries.push_back(resolve.resolve(p));
  }
  c.triggers = resolve(paths, "triggers", "paths", defaults.triggers);
  c.headers = resolve(paths, "headers", "paths", defaults.headers);
  c.catalog = resolve(paths, "catalog", "paths", defaults.catalog);
  c.manufacturer_aliases = resolve(paths, "manufacturer_aliases", "paths", defaults.manufacturer_aliases);
  c.registry = resolve(paths, "registry", "paths");
  c.patients = resolve(paths, "patients", "paths");
  c.codes = resolve(paths, "codes", "paths");
  c.gold = resolve(paths, "gold", "paths");
  c.lfs_pain_anatomy = resolve(paths, "lfs_pain_anatomy", "paths");
  c.lfs_implant_complication = resolve(paths, "lfs_implant_complication", "paths");
  c.synth_out = resolve(paths, "synth_out", "paths", c.output_dir / "synth");

  if (doc.contains("pipeline")) parse_pipeline(doc.at("pipeline"), c);
  if (doc.contains("codes")) {
    const auto& k = doc.at("codes");
    reject_unknown(k, "codes", {"primary", "revision"});
    read(k, "primary", "codes", c.code_sets.primary);
    read(k, "revision", "codes", c.code_sets.revision);
  }
  if (doc.contains("synth")) parse_synth(doc.at("synth"), c.synth);
  return c;
}

}  // namespace devsurv::cli
