#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "devsurv/classifier.hpp"
#include "devsurv/corpus.hpp"
#include "devsurv/eval.hpp"
#include "devsurv/extraction.hpp"
#include "devsurv/outcomes.hpp"
#include "devsurv/reconcile.hpp"
#include "devsurv/weaksup.hpp"

// Glue shared by the command-line tool, the acceptance harness and the
// synthetic-corpus generator: resource loading, document annotation, LF
// specifications and the weak-supervision experiment.
namespace devsurv::pipeline {

using extraction::RelationCandidate;
using extraction::RelationType;

struct ResourcePaths {
  std::vector<std::filesystem::path> dictionaries;
  std::filesystem::path triggers;  // empty: built-in lexicon
  std::filesystem::path headers;   // empty: built-in lexicon
  std::filesystem::path catalog;
  std::filesystem::path manufacturer_aliases;

  /// The standard layout under a data directory (dictionaries/, lexicons/, implants/).
  static ResourcePaths under(const std::filesystem::path& data_dir);
};

struct Resources {
  corpus::PreprocessConfig preprocess = corpus::PreprocessConfig::defaults();
  extraction::Tagger tagger{std::vector<extraction::Dictionary>{}};
  extraction::TriggerLexicon triggers = extraction::TriggerLexicon::defaults();
  extraction::ContextConfig context;
  std::optional<reconcile::ImplantCatalog> catalog;

  static Resources load(const ResourcePaths& paths);
};

/// Data directory baked in at build time, overridable with DEVSURV_DATA_DIR.
std::filesystem::path default_data_dir();

extraction::AnnotatedDocument annotate_note(const corpus::RawNote& note, const Resources& res);
std::vector<extraction::AnnotatedDocument> annotate_notes(const std::vector<corpus::RawNote>& notes,
                                                          const Resources& res);
std::vector<RelationCandidate> candidates_for(const std::vector<extraction::AnnotatedDocument>& docs,
                                              RelationType relation);

// ---------------------------------------------------------------------------
// Labeling-function specifications
//
// JSON array; each element is either {"starter": "<lf_id>"} naming one of the
// built-in functions, or {"id", "kind", "vote", ...} with kind one of
// between_phrase (phrases), left_window_phrase (phrases, window), attribute
// (attribute), distance_above (max_tokens), canonical_ids (ids), date_bins (bins).

std::vector<weaksup::LabelingFunction> lfs_from_json(std::string_view text, RelationType relation);
std::vector<weaksup::LabelingFunction> load_lf_specs(const std::filesystem::path& path,
                                                     RelationType relation);
/// starter_lfs(relation) plus the relation's bundled spec under data_dir/lfs when present.
std::vector<weaksup::LabelingFunction> default_lfs(RelationType relation,
                                                   const std::filesystem::path& data_dir);

struct DevLoopRow {
  std::string lf_id;
  double coverage = 0.0;
  std::optional<double> accuracy;
  std::size_t votes = 0;
};

/// Per-LF coverage (and accuracy when gold is given) on a development set.
/// Throws Error(kInvalidConfig) without LFs and Error(kInvalidArgument) on an
/// empty dev set.
std::vector<DevLoopRow> lf_dev_loop(const std::vector<RelationCandidate>& dev,
                                    const std::vector<weaksup::LabelingFunction>& lfs,
                                    const weaksup::GoldLabels* gold = nullptr);

// ---------------------------------------------------------------------------
// Gold relation labels

struct GoldRelation {
  std::string candidate_id;
  RelationType relation = RelationType::kPainAnatomy;
  std::string note_id;
  bool label = false;
};

std::vector<GoldRelation> read_gold_relations(const std::filesystem::path& path);
void write_gold_relations(const std::vector<GoldRelation>& gold, const std::filesystem::path& path);
weaksup::GoldLabels gold_map(const std::vector<GoldRelation>& gold, RelationType relation);

// ---------------------------------------------------------------------------
// Weak-supervision experiment

struct ExperimentConfig {
  std::vector<weaksup::LabelingFunction> lfs;
  weaksup::LabelModelConfig label_model;
  classifier::TrainConfig train;
  classifier::FeatureConfig features;
  std::uint64_t split_seed = 7;
  double train_fraction = 0.6;
  double dev_fraction = 0.2;
  /// Candidates on which every LF abstains carry no training signal and are
  /// left out of classifier training.
  bool drop_uncovered = true;
};

struct ExperimentResult {
  eval::Metrics classifier;   // held-out test split
  eval::Metrics smv;          // soft majority vote, positive iff p > 0.5
  eval::Metrics label_model;  // label-model posterior, positive iff p > 0.5
  double threshold = 0.5;
  weaksup::LabelModel model;
  std::size_t n_train = 0, n_dev = 0, n_test = 0;
  std::map<std::string, double> test_scores;
};

/// Splits notes into train/dev/test, fits the label model on the train split,
/// trains the classifier on its posteriors, tunes the threshold on dev gold
/// and scores the test split.
ExperimentResult run_experiment(const std::vector<RelationCandidate>& candidates,
                                const weaksup::GoldLabels& gold, const ExperimentConfig& config);

eval::Split note_split(const std::vector<RelationCandidate>& candidates, std::uint64_t seed,
                       double train_fraction, double dev_fraction);

// ---------------------------------------------------------------------------
// From predictions to outcomes

/// Implant records read off operative notes (note_type "operative"), one per
/// (patient, date, catalog id). Mentions without a catalog entry are skipped.
std::vector<reconcile::RegistryRecord> implants_from_notes(
    const std::vector<extraction::AnnotatedDocument>& docs, const reconcile::ImplantCatalog& catalog);

/// Text-derived events from positive implant-complication predictions (class
/// from the complication subcategory) and, for pain-anatomy predictions, one
/// pain event per note.
std::vector<outcomes::Event> events_from_predictions(const std::vector<RelationCandidate>& candidates,
                                                     const std::map<std::string, double>& scores,
                                                     double threshold);

}  // namespace devsurv::pipeline
