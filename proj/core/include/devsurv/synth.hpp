#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "devsurv/corpus.hpp"
#include "devsurv/outcomes.hpp"
#include "devsurv/pipeline.hpp"
#include "devsurv/reconcile.hpp"
#include "devsurv/weaksup.hpp"

namespace devsurv::synth {

/// Portable draws on top of mt19937_64 so generated data does not depend on
/// the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();                         // [0, 1)
  std::size_t index(std::size_t n);         // [0, n)
  int between(int lo, int hi);              // [lo, hi]
  bool bernoulli(double p) { return uniform() < p; }
  double exponential(double rate);
  double normal(double mean, double sd);
  std::size_t weighted(const std::vector<double>& weights);
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Independent stream for a named sub-task (per patient, per LF, ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

// ---------------------------------------------------------------------------
// Label matrices with known accuracies

struct LFSpec {
  std::string lf_id;
  double accuracy = 0.7;    // P(vote == y | vote)
  double propensity = 0.5;  // P(vote != abstain)
};

struct LabelMatrixSample {
  weaksup::LabelMatrix matrix;
  std::vector<bool> gold;

  weaksup::GoldLabels gold_labels() const;
};

/// Y ~ Bernoulli(pi); each LF votes with probability `propensity`, agreeing
/// with Y with probability `accuracy`, independently.
LabelMatrixSample gen_label_matrix(std::size_t n, const std::vector<LFSpec>& lfs, double pi,
                                   std::uint64_t seed);

// ---------------------------------------------------------------------------
// Corpora

/// Sentence templates. Slots are {pain}, {anat}, {implant} and {complication};
/// "[a|b|c]" picks one alternative uniformly.
struct TemplateSet {
  std::vector<std::string> pain_positive;
  std::vector<std::string> pain_negative;
  std::vector<std::string> pain_history;  // placed under PAST MEDICAL HISTORY
  std::vector<std::string> complication_positive;
  std::vector<std::string> complication_negative;
  std::vector<std::string> filler;

  static TemplateSet defaults();
  /// Throws Error(kInvalidConfig) naming the template on an unknown or missing slot.
  void validate() const;
};

struct ImplantSystem {
  std::string name;
  std::string acetabular_id;
  std::string femoral_id;
  double weight = 1.0;
  double hazard_ratio = 1.0;
};

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t n_patients = 200;
  int min_followup_notes = 3;
  int max_followup_notes = 8;
  int min_pain_sentences = 1;
  int max_pain_sentences = 2;
  double true_relation_rate = 0.5;
  double history_rate = 0.3;             // PMH pain sentence per follow-up note
  double review_of_systems_rate = 0.5;   // negative pain sentences placed under ROS
  double complication_negative_rate = 0.2;
  double followup_years_min = 2.0;
  double followup_years_max = 10.0;
  int index_year_min = 2000;
  int index_year_max = 2010;
  /// Yearly hazard per complication class before the system's hazard ratio.
  std::map<outcomes::EventClass, double> hazards{
      {outcomes::EventClass::kRevision, 0.010},
      {outcomes::EventClass::kComponentWear, 0.010},
      {outcomes::EventClass::kMechanicalFailure, 0.015},
      {outcomes::EventClass::kParticleDisease, 0.005},
      {outcomes::EventClass::kRadiographicAbnormality, 0.010},
      {outcomes::EventClass::kInfection, 0.010}};
  double coded_revision_rate = 0.15;
  int coded_jitter_days = 30;
  double operative_note_rate = 1.0;
  double registry_conflict_rate = 0.0;  // model-name variants
  double registry_drop_rate = 0.0;      // records missing from the registry
  std::vector<ImplantSystem> systems{
      {"Pinnacle/Corail", "IMP:DEPUY_PINNACLE", "IMP:DEPUY_CORAIL", 0.35, 1.0},
      {"Trident/Accolade", "IMP:STRYKER_TRIDENT", "IMP:STRYKER_ACCOLADE", 0.30, 1.3},
      {"Trilogy/VerSys", "IMP:ZIMMER_TRILOGY", "IMP:ZIMMER_VERSYS", 0.25, 0.8},
      {"R3/Synergy", "IMP:SMITH_NEPHEW_R3", "IMP:SMITH_NEPHEW_SYNERGY", 0.10, 1.5}};
  std::vector<std::string> pain_terms{"pain", "ache", "aching", "discomfort", "tenderness",
                                      "soreness", "stiffness", "throbbing", "sharp pain", "dull pain"};
  std::vector<std::string> anatomy_terms{"hip", "groin", "thigh", "buttock", "greater trochanter",
                                         "lateral thigh", "pelvis", "knee", "lower back"};
  std::vector<std::string> implant_terms{"hip prosthesis", "acetabular component", "femoral stem",
                                         "hip replacement", "prosthesis"};
  std::map<outcomes::EventClass, std::vector<std::string>> complication_terms{
      {outcomes::EventClass::kRevision, {"revision", "reoperation", "re-operation"}},
      {outcomes::EventClass::kComponentWear, {"polyethylene wear", "component wear", "eccentric wear"}},
      {outcomes::EventClass::kMechanicalFailure, {"aseptic loosening", "dislocation", "periprosthetic fracture"}},
      {outcomes::EventClass::kParticleDisease, {"osteolysis", "metallosis", "pseudotumor"}},
      {outcomes::EventClass::kRadiographicAbnormality, {"heterotopic ossification", "radiolucency", "stress shielding"}},
      {outcomes::EventClass::kInfection, {"infection", "prosthetic joint infection", "osteomyelitis"}}};
  TemplateSet templates = TemplateSet::defaults();

  /// Throws Error(kInvalidConfig) on out-of-range rates or empty lists.
  void validate() const;
};

struct SynthStats {
  std::size_t planted_entities = 0;
  std::size_t tagged_planted = 0;
  std::size_t planted_relations = 0;
};

struct SynthCorpus {
  std::vector<corpus::RawNote> notes;
  std::vector<outcomes::PatientRecord> patients;
  std::vector<pipeline::GoldRelation> gold_relations;
  std::vector<outcomes::Event> gold_events;
  std::vector<reconcile::RegistryRecord> registry;
  SynthStats stats;
};

/// Requires res.catalog (implant surfaces and registry rows come from it).
/// Gold labels are attached to the candidates the extraction stack produces
/// on the generated notes: a candidate is TRUE when both arguments overlap a
/// planted true pair.
SynthCorpus gen_corpus(const SynthConfig& config, const pipeline::Resources& res);

/// notes.jsonl, gold_relations.csv, gold_events.csv, registry.csv,
/// patients.csv, codes.csv.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace devsurv::synth
