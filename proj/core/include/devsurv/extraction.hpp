#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "devsurv/corpus.hpp"

namespace devsurv::extraction {

using corpus::CharSpan;

enum class EntityType { kImplant, kComplication, kPain, kAnatomy };

/// Complication subcategories; disjoint by construction of the dictionary.
enum class Subcategory {
  kRevision,
  kComponentWear,
  kMechanicalFailure,
  kParticleDisease,
  kRadiographicAbnormality,
  kInfection,
};

std::string_view to_string(EntityType t);
std::string_view to_string(Subcategory s);
/// Accepts spaces, underscores or hyphens between words; case-insensitive.
std::optional<EntityType> parse_entity_type(std::string_view s);
std::optional<Subcategory> parse_subcategory(std::string_view s);
/// Event class name used downstream ("component_wear", ...).
std::string event_class_name(Subcategory s);

enum class Attribute : std::uint8_t { kNegated = 1, kHistorical = 2, kHypothetical = 4 };
std::string_view to_string(Attribute a);
std::optional<Attribute> parse_attribute(std::string_view s);

/// Small set over Attribute.
class Attributes {
 public:
  bool has(Attribute a) const { return bits_ & static_cast<std::uint8_t>(a); }
  void add(Attribute a) { bits_ |= static_cast<std::uint8_t>(a); }
  void merge(Attributes o) { bits_ |= o.bits_; }
  bool empty() const { return bits_ == 0; }
  bool contains_all(Attributes o) const { return (bits_ & o.bits_) == o.bits_; }
  std::uint8_t bits() const { return bits_; }
  std::vector<std::string> names() const;
  static Attributes from_names(const std::vector<std::string>& names);
  friend bool operator==(const Attributes&, const Attributes&) = default;

 private:
  std::uint8_t bits_ = 0;
};

// ---------------------------------------------------------------------------
// Dictionaries

struct DictionaryEntry {
  std::string term;
  std::string canonical_id;
  EntityType type = EntityType::kPain;
  std::optional<Subcategory> subcategory;
  bool expanded = false;     // generated variant rather than an explicit line
  std::size_t source_line = 0;
};

struct ExpansionOptions {
  bool enabled = true;
  bool strip_punctuation = true;
  bool pluralize = true;
};

/// Normalized lookup key for a term: lowercased tokens joined by one space.
std::string term_key(std::string_view term);

/// Case-insensitive term table. Immutable once built.
class Dictionary {
 public:
  /// Tab-separated: term, canonical_id, entity_type, subcategory (optional).
  /// Lines starting with '#' are comments; "# version: X" sets the version.
  static Dictionary load(const std::filesystem::path& path, const ExpansionOptions& expansion = {});
  static Dictionary from_entries(std::string source_name, std::vector<DictionaryEntry> entries,
                                 const ExpansionOptions& expansion = {});

  const DictionaryEntry* lookup(std::string_view term) const;
  const std::map<std::string, DictionaryEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& source_name() const noexcept { return source_name_; }
  const std::string& version() const noexcept { return version_; }
  /// Longest term length in tokens.
  std::size_t max_tokens() const noexcept { return max_tokens_; }

 private:
  void add_explicit(DictionaryEntry e);
  void expand(const ExpansionOptions& options);

  std::string source_name_;
  std::string version_;
  std::map<std::string, DictionaryEntry> entries_;  // keyed by term_key
  std::size_t max_tokens_ = 0;
};

// ---------------------------------------------------------------------------
// Tagging

/// Position/laterality words absorbed leftwards into mentions of the listed types.
struct AnatomyPositionRules {
  std::vector<std::string> modifiers{"left",   "right",    "bilateral", "lateral", "medial",
                                     "proximal", "distal", "r",         "l",       "rt",
                                     "lt"};
  std::vector<EntityType> absorbing_types{EntityType::kAnatomy, EntityType::kImplant};
};

struct EntityMention {
  std::size_t sentence = 0;
  std::size_t token_begin = 0;  // sentence-relative token range [begin, end)
  std::size_t token_end = 0;
  CharSpan span;                // absolute note offsets
  std::string surface;
  EntityType type = EntityType::kPain;
  std::string canonical_id;
  std::optional<Subcategory> subcategory;
  Attributes attributes;

  friend bool operator==(const EntityMention&, const EntityMention&) = default;
};

/// Dictionary tagger: longest match wins, left to right, per entity type.
class Tagger {
 public:
  Tagger(std::vector<Dictionary> dictionaries, AnatomyPositionRules rules = {});
  Tagger(const Tagger&) = delete;
  Tagger& operator=(const Tagger&) = delete;
  Tagger(Tagger&&) = default;
  Tagger& operator=(Tagger&&) = default;

  std::vector<EntityMention> tag(const corpus::Sentence& sentence) const;
  const std::vector<Dictionary>& dictionaries() const noexcept { return dictionaries_; }

 private:
  std::vector<Dictionary> dictionaries_;
  AnatomyPositionRules rules_;
  // Per entity type: key -> entry (first dictionary wins).
  std::map<EntityType, std::unordered_map<std::string, const DictionaryEntry*>> by_type_;
  std::map<EntityType, std::size_t> max_tokens_;
};

std::vector<EntityMention> tag_entities(const corpus::Sentence& sentence,
                                        const std::vector<Dictionary>& dictionaries,
                                        const AnatomyPositionRules& rules = {});

// ---------------------------------------------------------------------------
// Context (NegEx/ConText-style attributes)

enum class TriggerDirection { kForward, kBackward, kBidirectional };

struct Trigger {
  std::string phrase;
  Attribute category = Attribute::kNegated;
  TriggerDirection direction = TriggerDirection::kForward;
  std::vector<std::string> terminators;
};

class TriggerLexicon {
 public:
  /// Tab-separated: trigger, category, direction, terminators (comma-joined).
  static TriggerLexicon load(const std::filesystem::path& path);
  static TriggerLexicon defaults();
  static TriggerLexicon from_triggers(std::vector<Trigger> triggers);

  const std::vector<Trigger>& triggers() const noexcept { return triggers_; }

  struct Compiled {
    std::vector<std::string> tokens;
    std::vector<std::vector<std::string>> terminators;
  };
  const std::vector<Compiled>& compiled() const noexcept { return compiled_; }

 private:
  std::vector<Trigger> triggers_;
  std::vector<Compiled> compiled_;
};

struct ContextConfig {
  int window = 6;
  std::vector<std::string> historical_sections{"PAST MEDICAL HISTORY", "PAST SURGICAL HISTORY",
                                               "FAMILY HISTORY"};
  /// Past dates strictly older than this many days mark the sentence historical.
  int historical_date_days = 30;
  bool use_section_rule = true;
  bool use_date_rule = true;
};

std::vector<EntityMention> apply_context(const corpus::Sentence& sentence,
                                         const std::vector<EntityMention>& mentions,
                                         const TriggerLexicon& lexicon,
                                         const corpus::SectionSpan* section,
                                         const std::vector<const corpus::DateMention*>& dates,
                                         const ContextConfig& config = {});

// ---------------------------------------------------------------------------
// Annotated documents and relation candidates

struct AnnotatedDocument {
  corpus::Document doc;
  std::vector<std::vector<EntityMention>> mentions;  // one list per sentence
};

AnnotatedDocument annotate(const corpus::Document& doc, const Tagger& tagger,
                           const TriggerLexicon& lexicon, const ContextConfig& config = {});

enum class RelationType { kPainAnatomy, kImplantComplication };
std::string_view to_string(RelationType r);
std::optional<RelationType> parse_relation_type(std::string_view s);
EntityType arg1_type(RelationType r);
EntityType arg2_type(RelationType r);

/// Self-contained candidate: carries the sentence markup that labeling
/// functions and featurization read, so it can be staged to disk.
struct RelationCandidate {
  std::string candidate_id;
  RelationType relation = RelationType::kPainAnatomy;
  std::string note_id;
  std::string patient_id;
  std::string note_type;
  Timestamp note_datetime{};
  std::size_t sentence_index = 0;
  CharSpan sentence_span;
  std::string sentence_text;
  std::vector<corpus::Token> tokens;
  EntityMention arg1;  // pain or complication
  EntityMention arg2;  // anatomy or implant
  std::string section_header;
  std::vector<std::string> date_bins;  // bin labels of dates in the sentence
};

/// Deterministic id over (note_id, relation, arg1 span, arg2 span).
std::string make_candidate_id(std::string_view note_id, RelationType relation, CharSpan arg1,
                              CharSpan arg2);

std::vector<RelationCandidate> generate_candidates(const AnnotatedDocument& doc,
                                                   std::size_t sentence_index,
                                                   RelationType relation);
std::vector<RelationCandidate> generate_candidates(const AnnotatedDocument& doc,
                                                   RelationType relation);

}  // namespace devsurv::extraction
