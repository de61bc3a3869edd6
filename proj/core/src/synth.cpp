#include "devsurv/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "devsurv/common.hpp"
#include "devsurv/csv.hpp"

namespace devsurv::synth {

namespace fs = std::filesystem;
using extraction::EntityType;
using extraction::RelationType;
using outcomes::EventClass;

// ---------------------------------------------------------------------------
// Rng

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "cannot draw from an empty range");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n));
}

int Rng::between(int lo, int hi) {
  return lo + static_cast<int>(index(static_cast<std::size_t>(hi - lo + 1)));
}

double Rng::exponential(double rate) { return -std::log1p(-uniform()) / rate; }

double Rng::normal(double mean, double sd) {
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::size_t Rng::weighted(const std::vector<double>& weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double u = uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  return mix64(seed ^ fnv1a(label));
}

// ---------------------------------------------------------------------------
// Label matrices

weaksup::GoldLabels LabelMatrixSample::gold_labels() const {
  weaksup::GoldLabels g;
  for (std::size_t i = 0; i < gold.size(); ++i) g[matrix.candidate_ids()[i]] = gold[i];
  return g;
}

LabelMatrixSample gen_label_matrix(std::size_t n, const std::vector<LFSpec>& lfs, double pi,
                                   std::uint64_t seed) {
  if (!(pi > 0.0 && pi < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "class prior must lie in (0, 1)", {{"pi", fmt_double(pi)}});
  std::vector<std::string> lf_ids;
  for (const auto& s : lfs) {
    if (s.accuracy < 0.0 || s.accuracy > 1.0 || s.propensity < 0.0 || s.propensity > 1.0)
      throw Error(ErrorCode::kInvalidArgument, "LF accuracy and propensity must lie in [0, 1]",
                  {{"lf_id", s.lf_id}});
    lf_ids.push_back(s.lf_id);
  }
  std::vector<std::string> ids(n);
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "c%07zu", i);
    ids[i] = buf;
  }
  LabelMatrixSample out{weaksup::LabelMatrix(std::move(ids), std::move(lf_ids)), std::vector<bool>(n)};
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const bool y = rng.bernoulli(pi);
    out.gold[i] = y;
    for (std::size_t j = 0; j < lfs.size(); ++j) {
      if (!rng.bernoulli(lfs[j].propensity)) continue;
      const bool agree = rng.bernoulli(lfs[j].accuracy);
      out.matrix.set(i, j, (agree == y) ? weaksup::Vote::kTrue : weaksup::Vote::kFalse);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Templates

namespace {

const std::set<std::string>& known_slots() {
  static const std::set<std::string> s{"pain", "anat", "implant", "complication"};
  return s;
}

struct Piece {
  enum Kind { kText, kSlot, kChoice } kind = kText;
  std::string text;
  std::vector<std::string> options;
};

std::vector<Piece> parse_template(const std::string& tmpl) {
  std::vector<Piece> out;
  std::string text;
  auto flush = [&] {
    if (!text.empty()) out.push_back({Piece::kText, std::move(text), {}});
    text.clear();
  };
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    const char c = tmpl[i];
    if (c == '{' || c == '[') {
      const char close = c == '{' ? '}' : ']';
      const auto end = tmpl.find(close, i + 1);
      if (end == std::string::npos)
        throw Error(ErrorCode::kInvalidConfig, "unterminated '" + std::string(1, c) + "' in template",
                    {{"template", tmpl}});
      flush();
      const std::string body = tmpl.substr(i + 1, end - i - 1);
      if (c == '{') {
        if (!known_slots().count(body))
          throw Error(ErrorCode::kInvalidConfig, "unknown template slot '{" + body + "}'",
                      {{"template", tmpl}, {"slot", body}});
        out.push_back({Piece::kSlot, body, {}});
      } else {
        out.push_back({Piece::kChoice, {}, split(body, '|')});
      }
      i = end;
    } else {
      text += c;
    }
  }
  flush();
  return out;
}

void require_slots(const std::vector<std::string>& templates, std::vector<std::string> required,
                   const char* group) {
  for (const auto& t : templates) {
    std::map<std::string, int> seen;
    for (const auto& p : parse_template(t))
      if (p.kind == Piece::kSlot) ++seen[p.text];
    for (const auto& slot : required)
      if (seen[slot] != 1)
        throw Error(ErrorCode::kInvalidConfig,
                    std::string(group) + " template needs exactly one {" + slot + "}",
                    {{"template", t}, {"slot", slot}});
    for (const auto& [slot, n] : seen)
      if (std::find(required.begin(), required.end(), slot) == required.end())
        throw Error(ErrorCode::kInvalidConfig,
                    std::string(group) + " template has an unexpected slot {" + slot + "}",
                    {{"template", t}, {"slot", slot}});
  }
}

struct Filled {
  std::string text;
  std::map<std::string, corpus::CharSpan> spans;  // relative to text
};

Filled fill(const std::string& tmpl, const std::map<std::string, std::string>& values, Rng& rng) {
  Filled f;
  for (const auto& p : parse_template(tmpl)) {
    switch (p.kind) {
      case Piece::kText:
        f.text += p.text;
        break;
      case Piece::kChoice:
        f.text += p.options[rng.index(p.options.size())];
        break;
      case Piece::kSlot: {
        const auto& v = values.at(p.text);
        f.spans[p.text] = {f.text.size(), f.text.size() + v.size()};
        f.text += v;
        break;
      }
    }
  }
  if (!f.text.empty() && f.text[0] >= 'a' && f.text[0] <= 'z') f.text[0] = static_cast<char>(f.text[0] - 32);
  return f;
}

}  // namespace

TemplateSet TemplateSet::defaults() {
  TemplateSet t;
  t.pain_positive = {
      "[Patient reports|She complains of|He endorses|Describes|Notes] {pain} [in the|over the|at "
      "the|involving the|of the] {anat} [with activity|when walking|at night|since surgery|after "
      "prolonged standing].",
      "[Patient reports|Ongoing|Worsening|Persistent] {anat} {pain} [with activity|when walking|at "
      "night|since surgery|after prolonged standing].",
  };
  t.pain_negative = {
      "[Denies|No|Negative for] {pain} [in the|over the|at the|involving the] {anat} [today|at this "
      "time|on review].",
      "[History of|Hx of] {pain} [in the|over the|of the] {anat} [years ago|that resolved].",
      "[Return if|Call if|Watch for] {pain} [in the|at the] {anat} [develops|worsens].",
  };
  t.pain_history = {"[Chronic|Intermittent] {pain} of the {anat} [treated with injections|managed "
                    "conservatively]."};
  t.complication_positive = {
      "[Imaging shows|Radiographs demonstrate|Exam is consistent with] {complication} of the {implant}.",
      "The {implant} is complicated by {complication}.",
      "{implant} {complication} [noted today|confirmed on imaging].",
      "Imaging shows the {implant} is complicated by {complication}.",
      "Imaging shows {implant} {complication} [today|on this visit].",
  };
  t.complication_negative = {
      "No evidence of {complication} [of the|around the] {implant}.",
      "[Discussed|Counseled on] risk of {complication} of the {implant}.",
      "No evidence of {complication} on today's radiographs of the hip, where the well fixed {implant} "
      "sits in good position.",
  };
  t.filler = {"Vital signs are stable.",     "Ambulates with a cane.",
              "Continue current medications.", "Follow up in six months.",
              "Wound is well healed.",         "Range of motion is preserved."};
  return t;
}

void TemplateSet::validate() const {
  require_slots(pain_positive, {"pain", "anat"}, "pain");
  require_slots(pain_negative, {"pain", "anat"}, "pain");
  require_slots(pain_history, {"pain", "anat"}, "pain");
  require_slots(complication_positive, {"complication", "implant"}, "complication");
  require_slots(complication_negative, {"complication", "implant"}, "complication");
  require_slots(filler, {}, "filler");
  if (pain_positive.empty() || pain_negative.empty() || complication_positive.empty() || filler.empty())
    throw Error(ErrorCode::kInvalidConfig, "template groups must not be empty");
}

void SynthConfig::validate() const {
  auto rate = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0))
      throw Error(ErrorCode::kInvalidConfig, std::string(name) + " must lie in [0, 1]",
                  {{"field", name}, {"value", fmt_double(v)}});
  };
  rate(true_relation_rate, "true_relation_rate");
  rate(history_rate, "history_rate");
  rate(review_of_systems_rate, "review_of_systems_rate");
  rate(complication_negative_rate, "complication_negative_rate");
  rate(coded_revision_rate, "coded_revision_rate");
  rate(operative_note_rate, "operative_note_rate");
  rate(registry_conflict_rate, "registry_conflict_rate");
  rate(registry_drop_rate, "registry_drop_rate");
  if (n_patients == 0) throw Error(ErrorCode::kInvalidConfig, "n_patients must be positive");
  if (min_followup_notes < 1 || max_followup_notes < min_followup_notes)
    throw Error(ErrorCode::kInvalidConfig, "follow-up note counts must satisfy 1 <= min <= max");
  if (min_pain_sentences < 0 || max_pain_sentences < min_pain_sentences)
    throw Error(ErrorCode::kInvalidConfig, "pain sentence counts must satisfy 0 <= min <= max");
  if (!(followup_years_min > 0.0) || followup_years_max < followup_years_min)
    throw Error(ErrorCode::kInvalidConfig, "follow-up years must satisfy 0 < min <= max");
  if (index_year_max < index_year_min)
    throw Error(ErrorCode::kInvalidConfig, "index_year_max precedes index_year_min");
  if (coded_jitter_days < 0) throw Error(ErrorCode::kInvalidConfig, "coded_jitter_days is negative");
  if (systems.empty()) throw Error(ErrorCode::kInvalidConfig, "at least one implant system is required");
  for (const auto& s : systems)
    if (!(s.weight > 0.0) || !(s.hazard_ratio > 0.0))
      throw Error(ErrorCode::kInvalidConfig, "system weight and hazard ratio must be positive",
                  {{"system", s.name}});
  for (const auto& [c, h] : hazards) {
    if (c == EventClass::kPain)
      throw Error(ErrorCode::kInvalidConfig, "pain is not a hazard-driven class");
    if (!(h >= 0.0))
      throw Error(ErrorCode::kInvalidConfig, "hazards must be nonnegative",
                  {{"event_class", std::string(outcomes::to_string(c))}});
    if (h > 0.0 && (!complication_terms.count(c) || complication_terms.at(c).empty()))
      throw Error(ErrorCode::kInvalidConfig, "no complication terms for a class with positive hazard",
                  {{"event_class", std::string(outcomes::to_string(c))}});
  }
  if (pain_terms.empty() || anatomy_terms.empty() || implant_terms.empty())
    throw Error(ErrorCode::kInvalidConfig, "term lists must not be empty");
  templates.validate();
}

// ---------------------------------------------------------------------------
// Corpus generation

namespace {

struct Planted {
  RelationType relation;
  corpus::CharSpan arg1, arg2;
  bool label;
};

struct PlantedEntity {
  EntityType type;
  corpus::CharSpan span;
};

struct NoteBuilder {
  std::string text;
  std::vector<Planted> relations;
  std::vector<PlantedEntity> entities;
  bool open_line = false;

  void header(std::string_view h) {
    if (!text.empty()) text += open_line ? "\n\n" : "\n";
    text += h;
    text += ":\n";
    open_line = false;
  }

  // Returns the note offset at which the sentence starts.
  std::size_t sentence(const std::string& s) {
    if (open_line) text += ' ';
    const std::size_t at = text.size();
    text += s;
    open_line = true;
    return at;
  }

  void relation(const Filled& f, RelationType r, bool label) {
    const std::size_t at = sentence(f.text);
    auto abs = [&](const std::string& slot) {
      const auto s = f.spans.at(slot);
      return corpus::CharSpan{s.begin + at, s.end + at};
    };
    const bool pain = r == RelationType::kPainAnatomy;
    const auto a1 = abs(pain ? "pain" : "complication");
    const auto a2 = abs(pain ? "anat" : "implant");
    relations.push_back({r, a1, a2, label});
    entities.push_back({pain ? EntityType::kPain : EntityType::kComplication, a1});
    entities.push_back({pain ? EntityType::kAnatomy : EntityType::kImplant, a2});
  }

  std::string finish() {
    if (open_line) text += '\n';
    return text;
  }
};

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.index(v.size())];
}

Date add_days(Date d, long n) { return d + std::chrono::days(n); }

struct GeneratedNote {
  corpus::RawNote note;
  std::vector<Planted> relations;
  std::vector<PlantedEntity> entities;
};

struct PatientDraft {
  outcomes::PatientRecord record;
  std::vector<GeneratedNote> notes;
  std::vector<outcomes::Event> events;
  std::vector<reconcile::RegistryRecord> registry;
};

class Generator {
 public:
  Generator(const SynthConfig& cfg, const reconcile::ImplantCatalog& catalog)
      : cfg_(cfg), catalog_(catalog) {
    for (const auto& s : cfg.systems) {
      weights_.push_back(s.weight);
      for (const auto& id : {s.acetabular_id, s.femoral_id})
        if (!catalog.find(id))
          throw Error(ErrorCode::kInvalidConfig, "implant system references an id missing from the catalog",
                      {{"system", s.name}, {"canonical_id", id}});
    }
  }

  PatientDraft patient(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "P%05zu", k + 1);
    const std::string pid = buf;
    Rng rng(derive_seed(cfg_.seed, pid));
    PatientDraft d;
    auto& r = d.record;
    r.patient_id = pid;

    const Date start = *make_date(cfg_.index_year_min, 1, 1);
    const Date stop = *make_date(cfg_.index_year_max, 12, 31);
    const Date index = add_days(start, static_cast<long>(rng.uniform() * static_cast<double>(days_between(start, stop) + 1)));
    const double age = std::clamp(rng.normal(63.0, 10.0), 30.0, 95.0);
    r.birth_date = add_days(index, -static_cast<long>(std::lround(age * 365.25)));
    r.sex = rng.bernoulli(0.556) ? "F" : "M";
    static const std::vector<std::string> races{"White", "Black", "Asian", "Other", "Unknown"};
    r.race = races[rng.weighted({0.80, 0.08, 0.03, 0.03, 0.06})];
    static const std::vector<std::string> eths{"Not Hispanic", "Hispanic", "Unknown"};
    r.ethnicity = eths[rng.weighted({0.88, 0.05, 0.07})];
    r.cci = static_cast<int>(rng.weighted({0.45, 0.20, 0.15, 0.10, 0.06, 0.04}));
    const auto& system = cfg_.systems[rng.weighted(weights_)];
    r.implant_systems = {system.name};
    const double years = cfg_.followup_years_min + rng.uniform() * (cfg_.followup_years_max - cfg_.followup_years_min);
    const long followup = std::max(1L, std::lround(years * 365.25));
    const Date last = add_days(index, followup);
    r.last_contact_date = last;
    r.codes.push_back({"CPT", "27130", index});

    // First event per class under exponential hazards.
    std::vector<std::pair<long, EventClass>> events;
    for (const auto& [cls, h] : cfg_.hazards) {
      if (h <= 0.0) continue;
      const double t = rng.exponential(h * system.hazard_ratio) * 365.25;
      const long day = std::max(1L, static_cast<long>(std::ceil(t)));
      if (day <= followup) events.emplace_back(day, cls);
    }
    std::sort(events.begin(), events.end());
    for (const auto& [day, cls] : events) {
      const Date when = add_days(index, day);
      bool coded = false;
      if (cls == EventClass::kRevision && rng.bernoulli(cfg_.coded_revision_rate)) {
        const Date code_date = std::min(last, add_days(when, rng.between(0, cfg_.coded_jitter_days)));
        r.codes.push_back({"CPT", "27134", code_date});
        coded = true;
      }
      d.events.push_back({pid, cls, when, coded ? outcomes::EventSource::kBoth : outcomes::EventSource::kText,
                          "gold"});
    }

    // Registry.
    for (const auto& id : {system.acetabular_id, system.femoral_id}) {
      if (rng.bernoulli(cfg_.registry_drop_rate)) continue;
      const auto* imp = catalog_.find(id);
      reconcile::RegistryRecord rec{pid, index, imp->role, imp->manufacturer, imp->model};
      if (rng.bernoulli(cfg_.registry_conflict_rate)) rec.model += " Hip System";
      d.registry.push_back(std::move(rec));
    }

    // Notes: operative note, follow-ups, one note per event.
    struct Slot {
      Date date;
      int kind;  // 0 operative, 1 follow-up, 2 event
      EventClass cls;
    };
    std::vector<Slot> slots;
    if (rng.bernoulli(cfg_.operative_note_rate)) slots.push_back({index, 0, EventClass::kRevision});
    const int n_follow = rng.between(cfg_.min_followup_notes, cfg_.max_followup_notes);
    for (int i = 0; i + 1 < n_follow; ++i)
      slots.push_back({add_days(index, 1 + static_cast<long>(rng.index(static_cast<std::size_t>(followup)))), 1,
                       EventClass::kRevision});
    slots.push_back({last, 1, EventClass::kRevision});
    for (const auto& [day, cls] : events) slots.push_back({add_days(index, day), 2, cls});
    std::stable_sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
      return a.date != b.date ? a.date < b.date : a.kind < b.kind;
    });

    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto& s = slots[i];
      NoteBuilder nb;
      std::string type;
      if (s.kind == 0) {
        type = "operative";
        operative(nb, system, rng);
      } else {
        type = "progress";
        followup_note(nb, s.kind == 2 ? &s.cls : nullptr, rng);
      }
      GeneratedNote g;
      std::snprintf(buf, sizeof buf, "-N%03zu", i + 1);
      g.note.note_id = pid + buf;
      g.note.patient_id = pid;
      g.note.note_datetime = Timestamp(s.date) + std::chrono::hours(s.kind == 0 ? 8 : 10) +
                             std::chrono::minutes(static_cast<int>(i % 60));
      g.note.note_type = type;
      g.note.text = nb.finish();
      g.relations = std::move(nb.relations);
      g.entities = std::move(nb.entities);
      const bool has_pain = std::any_of(g.relations.begin(), g.relations.end(), [](const Planted& p) {
        return p.relation == RelationType::kPainAnatomy && p.label;
      });
      if (has_pain)
        d.events.push_back({pid, EventClass::kPain, s.date, outcomes::EventSource::kText, "gold"});
      d.notes.push_back(std::move(g));
    }
    return d;
  }

 private:
  void operative(NoteBuilder& nb, const ImplantSystem& system, Rng& rng) {
    nb.header("PROCEDURE");
    nb.sentence(std::string(rng.bernoulli(0.5) ? "Left" : "Right") + " total hip arthroplasty was performed.");
    nb.header("IMPLANTS");
    const std::pair<const std::string*, const char*> parts[] = {{&system.acetabular_id, " acetabular component."},
                                                                {&system.femoral_id, " femoral stem."}};
    for (const auto& [id, tail] : parts) {
      const auto* imp = catalog_.find(*id);
      const std::string surface = imp->manufacturer + " " + imp->model;
      const std::size_t at = nb.sentence(surface + tail);
      nb.entities.push_back({EntityType::kImplant, {at, at + surface.size()}});
    }
    nb.header("DISPOSITION");
    nb.sentence("Stable to recovery room.");
  }

  std::map<std::string, std::string> pain_values(Rng& rng) const {
    return {{"pain", pick(cfg_.pain_terms, rng)}, {"anat", pick(cfg_.anatomy_terms, rng)}};
  }

  std::map<std::string, std::string> complication_values(EventClass cls, Rng& rng) const {
    return {{"complication", pick(cfg_.complication_terms.at(cls), rng)},
            {"implant", pick(cfg_.implant_terms, rng)}};
  }

  void followup_note(NoteBuilder& nb, const EventClass* event, Rng& rng) {
    const auto& t = cfg_.templates;
    std::vector<Filled> ros;
    const int n_pain = rng.between(cfg_.min_pain_sentences, cfg_.max_pain_sentences);
    std::vector<std::pair<Filled, bool>> hpi;
    for (int i = 0; i < n_pain; ++i) {
      const bool positive = rng.bernoulli(cfg_.true_relation_rate);
      Filled f = fill(pick(positive ? t.pain_positive : t.pain_negative, rng), pain_values(rng), rng);
      if (!positive && rng.bernoulli(cfg_.review_of_systems_rate))
        ros.push_back(std::move(f));
      else
        hpi.emplace_back(std::move(f), positive);
    }
    nb.header("HISTORY OF PRESENT ILLNESS");
    if (event)
      nb.relation(fill(pick(t.complication_positive, rng), complication_values(*event, rng), rng),
                  RelationType::kImplantComplication, true);
    for (const auto& [f, label] : hpi) nb.relation(f, RelationType::kPainAnatomy, label);
    if (hpi.empty() && !event) nb.sentence(pick(t.filler, rng));
    if (!t.pain_history.empty() && rng.bernoulli(cfg_.history_rate)) {
      nb.header("PAST MEDICAL HISTORY");
      nb.relation(fill(pick(t.pain_history, rng), pain_values(rng), rng), RelationType::kPainAnatomy, false);
    }
    if (!ros.empty()) {
      nb.header("REVIEW OF SYSTEMS");
      for (const auto& f : ros) nb.relation(f, RelationType::kPainAnatomy, false);
    }
    nb.header("ASSESSMENT AND PLAN");
    nb.sentence(pick(t.filler, rng));
    if (!t.complication_negative.empty() && rng.bernoulli(cfg_.complication_negative_rate)) {
      std::vector<EventClass> classes;
      for (const auto& [c, terms] : cfg_.complication_terms)
        if (!terms.empty()) classes.push_back(c);
      nb.relation(fill(pick(t.complication_negative, rng), complication_values(pick(classes, rng), rng), rng),
                  RelationType::kImplantComplication, false);
    }
    nb.sentence(pick(t.filler, rng));
  }

  const SynthConfig& cfg_;
  const reconcile::ImplantCatalog& catalog_;
  std::vector<double> weights_;
};

bool covers(const std::vector<extraction::EntityMention>& mentions, const PlantedEntity& e) {
  return std::any_of(mentions.begin(), mentions.end(), [&](const extraction::EntityMention& m) {
    return m.type == e.type && m.span.overlaps(e.span);
  });
}

}  // namespace

SynthCorpus gen_corpus(const SynthConfig& config, const pipeline::Resources& res) {
  config.validate();
  if (!res.catalog)
    throw Error(ErrorCode::kMissingInput, "synthetic corpus generation needs the implant catalog");
  Generator gen(config, *res.catalog);
  SynthCorpus out;
  std::vector<std::vector<Planted>> planted;
  std::vector<std::vector<PlantedEntity>> entities;
  for (std::size_t k = 0; k < config.n_patients; ++k) {
    auto d = gen.patient(k);
    out.patients.push_back(std::move(d.record));
    for (auto& n : d.notes) {
      out.notes.push_back(std::move(n.note));
      planted.push_back(std::move(n.relations));
      entities.push_back(std::move(n.entities));
    }
    for (auto& e : d.events) out.gold_events.push_back(std::move(e));
    for (auto& r : d.registry) out.registry.push_back(std::move(r));
  }
  std::sort(out.gold_events.begin(), out.gold_events.end(), [](const auto& a, const auto& b) {
    return std::tie(a.patient_id, a.event_class, a.date) < std::tie(b.patient_id, b.event_class, b.date);
  });

  const auto docs = pipeline::annotate_notes(out.notes, res);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    std::vector<extraction::EntityMention> all;
    for (const auto& s : docs[i].mentions) all.insert(all.end(), s.begin(), s.end());
    for (const auto& e : entities[i]) {
      ++out.stats.planted_entities;
      if (covers(all, e)) ++out.stats.tagged_planted;
    }
    for (const auto& p : planted[i])
      if (p.label) ++out.stats.planted_relations;
    for (auto relation : {RelationType::kPainAnatomy, RelationType::kImplantComplication}) {
      for (const auto& c : extraction::generate_candidates(docs[i], relation)) {
        bool label = false;
        for (const auto& p : planted[i])
          if (p.relation == relation && p.label && p.arg1.overlaps(c.arg1.span) && p.arg2.overlaps(c.arg2.span))
            label = true;
        out.gold_relations.push_back({c.candidate_id, relation, c.note_id, label});
      }
    }
  }
  return out;
}

void write_corpus(const SynthCorpus& corpus, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kMissingInput, "cannot create " + dir.string(), {{"path", dir.string()}});
  {
    const auto path = dir / "notes.jsonl";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kMissingInput, "cannot write " + path.string(), {{"path", path.string()}});
    for (const auto& n : corpus.notes) out << corpus::serialize_note_record(n) << '\n';
  }
  pipeline::write_gold_relations(corpus.gold_relations, dir / "gold_relations.csv");
  outcomes::write_events_csv(corpus.gold_events, dir / "gold_events.csv");
  reconcile::write_registry_csv(corpus.registry, dir / "registry.csv");
  outcomes::write_patient_records(corpus.patients, dir / "patients.csv", dir / "codes.csv");
}

}  // namespace devsurv::synth
