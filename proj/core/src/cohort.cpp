#include <algorithm>
#include <fstream>
#include <set>
#include <tuple>

#include "devsurv/csv.hpp"
#include "devsurv/outcomes.hpp"

namespace devsurv::outcomes {

std::string_view to_string(EventClass c) {
  switch (c) {
    case EventClass::kRevision: return "revision";
    case EventClass::kComponentWear: return "component_wear";
    case EventClass::kMechanicalFailure: return "mechanical_failure";
    case EventClass::kParticleDisease: return "particle_disease";
    case EventClass::kRadiographicAbnormality: return "radiographic_abnormality";
    case EventClass::kInfection: return "infection";
    case EventClass::kPain: return "pain";
  }
  return "?";
}

std::optional<EventClass> parse_event_class(std::string_view s) {
  const auto l = to_lower(trim(s));
  for (auto c : {EventClass::kRevision, EventClass::kComponentWear, EventClass::kMechanicalFailure,
                 EventClass::kParticleDisease, EventClass::kRadiographicAbnormality,
                 EventClass::kInfection, EventClass::kPain})
    if (l == to_string(c)) return c;
  return std::nullopt;
}

const std::vector<EventClass>& complication_classes() {
  static const std::vector<EventClass> v{
      EventClass::kRevision,        EventClass::kComponentWear,
      EventClass::kMechanicalFailure, EventClass::kParticleDisease,
      EventClass::kRadiographicAbnormality, EventClass::kInfection};
  return v;
}

std::string_view to_string(EventSource s) {
  switch (s) {
    case EventSource::kCoded: return "coded";
    case EventSource::kText: return "text";
    case EventSource::kBoth: return "both";
  }
  return "?";
}

std::optional<EventSource> parse_event_source(std::string_view s) {
  const auto l = to_lower(trim(s));
  if (l == "coded") return EventSource::kCoded;
  if (l == "text") return EventSource::kText;
  if (l == "both") return EventSource::kBoth;
  return std::nullopt;
}

std::string_view to_string(CciCategory c) {
  switch (c) {
    case CciCategory::kNone: return "none";
    case CciCategory::kLow: return "low";
    case CciCategory::kModerate: return "moderate";
    case CciCategory::kHigh: return "high";
  }
  return "?";
}

CciCategory categorize_cci(int cci) {
  if (cci < 0)
    throw Error(ErrorCode::kInvalidArgument, "negative comorbidity index: " + std::to_string(cci),
                {{"cci", std::to_string(cci)}});
  if (cci == 0) return CciCategory::kNone;
  if (cci == 1) return CciCategory::kLow;
  if (cci == 2) return CciCategory::kModerate;
  return CciCategory::kHigh;
}

namespace {

std::string at_line(const std::filesystem::path& p, const CsvRow& row) {
  return p.string() + ":" + std::to_string(row.line());
}

Date require_date(const std::filesystem::path& p, const CsvRow& row, std::string_view col) {
  auto d = parse_iso_date(row.at(col));
  if (!d)
    throw Error(ErrorCode::kParse, at_line(p, row) + ": bad date in " + std::string(col),
                {{"path", p.string()}, {"line", std::to_string(row.line())}, {"field", std::string(col)}});
  return *d;
}

std::optional<Date> optional_date(const std::filesystem::path& p, const CsvRow& row,
                                  std::string_view col) {
  if (!row.has(col) || trim(row.get(col)).empty()) return std::nullopt;
  return require_date(p, row, col);
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorCode::kMissingInput, "cannot write " + p.string(), {{"path", p.string()}});
  return out;
}

}  // namespace

std::vector<PatientRecord> load_patient_records(const std::filesystem::path& patients_csv,
                                                const std::filesystem::path& codes_csv) {
  auto pt = CsvTable::read(patients_csv);
  pt.require_columns({"patient_id", "birth_date", "sex", "race", "ethnicity", "cci", "last_contact_date"});
  std::vector<PatientRecord> out;
  std::map<std::string, std::size_t> index;
  for (const auto& row : pt.rows()) {
    PatientRecord r;
    r.patient_id = row.at("patient_id");
    if (r.patient_id.empty())
      throw Error(ErrorCode::kParse, at_line(patients_csv, row) + ": empty patient_id",
                  {{"path", patients_csv.string()}});
    r.birth_date = optional_date(patients_csv, row, "birth_date");
    r.sex = row.at("sex");
    r.race = row.at("race");
    r.ethnicity = row.at("ethnicity");
    try {
      r.cci = std::stoi(row.at("cci"));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, at_line(patients_csv, row) + ": bad cci",
                  {{"path", patients_csv.string()}, {"field", "cci"}});
    }
    r.last_contact_date = optional_date(patients_csv, row, "last_contact_date");
    for (auto& s : split(row.get("implant_system"), ';'))
      if (!trim(s).empty()) r.implant_systems.emplace_back(trim(s));
    if (!index.emplace(r.patient_id, out.size()).second)
      throw Error(ErrorCode::kDuplicate, "duplicate patient " + r.patient_id,
                  {{"path", patients_csv.string()}, {"patient_id", r.patient_id}});
    out.push_back(std::move(r));
  }

  auto ct = CsvTable::read(codes_csv);
  ct.require_columns({"patient_id", "code_system", "code", "date"});
  for (const auto& row : ct.rows()) {
    auto it = index.find(row.at("patient_id"));
    if (it == index.end())
      throw Error(ErrorCode::kMismatch,
                  at_line(codes_csv, row) + ": unknown patient " + row.at("patient_id"),
                  {{"path", codes_csv.string()}, {"patient_id", row.at("patient_id")}});
    auto& rec = out[it->second];
    const auto& system = row.at("code_system");
    if (iequals(system, "BMI")) {
      rec.bmi.emplace_back(require_date(codes_csv, row, "date"), std::stod(row.at("code")));
      continue;
    }
    rec.codes.push_back({to_upper(system), std::string(trim(row.at("code"))),
                         require_date(codes_csv, row, "date")});
  }
  return out;
}

void write_patient_records(const std::vector<PatientRecord>& records,
                           const std::filesystem::path& patients_csv,
                           const std::filesystem::path& codes_csv) {
  auto po = open_out(patients_csv);
  CsvWriter pw(po);
  pw.row({"patient_id", "birth_date", "sex", "race", "ethnicity", "cci", "last_contact_date",
          "implant_system"});
  auto opt = [](const std::optional<Date>& d) { return d ? format_date(*d) : std::string(); };
  for (const auto& r : records)
    pw.row({r.patient_id, opt(r.birth_date), r.sex, r.race, r.ethnicity, std::to_string(r.cci),
            opt(r.last_contact_date), join(r.implant_systems, ";")});

  auto co = open_out(codes_csv);
  CsvWriter cw(co);
  cw.row({"patient_id", "code_system", "code", "date"});
  for (const auto& r : records) {
    for (const auto& c : r.codes) cw.row({r.patient_id, c.system, c.code, format_date(c.date)});
    for (const auto& [d, v] : r.bmi) cw.row({r.patient_id, "BMI", fmt_double(v, 6), format_date(d)});
  }
}

namespace {

using CodeSet = std::set<std::pair<std::string, std::string>>;

CodeSet parse_codes(const std::vector<std::string>& codes, const char* which) {
  if (codes.empty())
    throw Error(ErrorCode::kInvalidConfig, std::string("empty ") + which + " code list",
                {{"list", which}});
  CodeSet out;
  for (const auto& c : codes) {
    auto colon = c.find(':');
    if (colon == std::string::npos)
      throw Error(ErrorCode::kInvalidConfig, "code must be SYSTEM:CODE: " + c, {{"code", c}});
    out.emplace(to_upper(trim(std::string_view(c).substr(0, colon))),
                std::string(trim(std::string_view(c).substr(colon + 1))));
  }
  return out;
}

}  // namespace

Cohort select_cohort(const std::vector<PatientRecord>& records, const CodeConfig& codes) {
  const auto primary = parse_codes(codes.primary, "primary");
  const auto revision = parse_codes(codes.revision, "revision");
  Cohort cohort;
  for (const auto& r : records) {
    std::optional<Date> index;
    for (const auto& c : r.codes)
      if (primary.count({to_upper(c.system), c.code}) && (!index || c.date < *index)) index = c.date;
    if (!index) continue;
    cohort.members.push_back({r.patient_id, *index});
    for (const auto& c : r.codes)
      if (revision.count({to_upper(c.system), c.code}) && c.date > *index)
        cohort.coded_revisions.push_back({r.patient_id, EventClass::kRevision, c.date,
                                          EventSource::kCoded, c.system + ":" + c.code});
  }
  std::sort(cohort.members.begin(), cohort.members.end(),
            [](const auto& a, const auto& b) { return a.patient_id < b.patient_id; });
  std::sort(cohort.coded_revisions.begin(), cohort.coded_revisions.end(),
            [](const Event& a, const Event& b) {
              return std::tie(a.patient_id, a.date, a.provenance) <
                     std::tie(b.patient_id, b.date, b.provenance);
            });
  return cohort;
}

std::vector<Event> read_events_csv(const std::filesystem::path& path) {
  auto t = CsvTable::read(path);
  t.require_columns({"patient_id", "event_class", "date", "source"});
  std::vector<Event> out;
  for (const auto& row : t.rows()) {
    Event e;
    e.patient_id = row.at("patient_id");
    auto cls = parse_event_class(row.at("event_class"));
    auto src = parse_event_source(row.at("source"));
    if (!cls || !src)
      throw Error(ErrorCode::kParse, at_line(path, row) + ": bad event_class or source",
                  {{"path", path.string()}, {"line", std::to_string(row.line())}});
    e.event_class = *cls;
    e.source = *src;
    e.date = require_date(path, row, "date");
    e.provenance = row.get("provenance");
    out.push_back(std::move(e));
  }
  return out;
}

void write_events_csv(const std::vector<Event>& events, const std::filesystem::path& path) {
  auto out = open_out(path);
  CsvWriter w(out);
  w.row({"patient_id", "event_class", "date", "source", "provenance"});
  for (const auto& e : events)
    w.row({e.patient_id, std::string(to_string(e.event_class)), format_date(e.date),
           std::string(to_string(e.source)), e.provenance});
}

namespace {

using MergeKey = std::pair<std::string, EventClass>;

std::map<MergeKey, std::vector<Event>> dedupe(const std::vector<Event>& events,
                                              std::size_t& dropped) {
  std::map<MergeKey, std::map<Date, Event>> by_day;
  for (const auto& e : events) {
    auto& slot = by_day[{e.patient_id, e.event_class}];
    auto [it, inserted] = slot.emplace(e.date, e);
    if (!inserted) {
      ++dropped;
      auto parts = split(it->second.provenance, ';');
      if (!e.provenance.empty() &&
          std::find(parts.begin(), parts.end(), e.provenance) == parts.end()) {
        parts.push_back(e.provenance);
        std::sort(parts.begin(), parts.end());
        parts.erase(std::remove(parts.begin(), parts.end(), std::string()), parts.end());
        it->second.provenance = join(parts, ";");
      }
    }
  }
  std::map<MergeKey, std::vector<Event>> out;
  for (auto& [k, days] : by_day)
    for (auto& [d, e] : days) out[k].push_back(e);
  return out;
}

}  // namespace

MergeResult merge_events(const std::vector<Event>& coded, const std::vector<Event>& text,
                         int window_days) {
  if (window_days < 0) throw Error(ErrorCode::kInvalidArgument, "merge window must be non-negative");
  MergeResult result;
  auto c = dedupe(coded, result.duplicates);
  auto t = dedupe(text, result.duplicates);
  std::set<MergeKey> keys;
  for (const auto& [k, v] : c) keys.insert(k);
  for (const auto& [k, v] : t) keys.insert(k);

  static const std::vector<Event> none;
  for (const auto& key : keys) {
    const auto& a = c.count(key) ? c.at(key) : none;
    const auto& b = t.count(key) ? t.at(key) : none;
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
      if (i == a.size()) {
        result.events.push_back(b[j++]);
      } else if (j == b.size()) {
        result.events.push_back(a[i++]);
      } else {
        const long gap = days_between(a[i].date, b[j].date);
        if (std::labs(gap) <= window_days) {
          Event e = a[i];
          e.date = std::min(a[i].date, b[j].date);
          e.source = EventSource::kBoth;
          e.provenance = a[i].provenance + "|" + b[j].provenance;
          result.events.push_back(std::move(e));
          ++result.matched;
          ++i;
          ++j;
        } else if (gap > 0) {
          result.events.push_back(a[i++]);
        } else {
          result.events.push_back(b[j++]);
        }
      }
    }
  }
  for (auto& e : result.events)
    if (e.source != EventSource::kBoth)
      e.source = e.source == EventSource::kText ? EventSource::kText : EventSource::kCoded;
  std::stable_sort(result.events.begin(), result.events.end(), [](const Event& x, const Event& y) {
    return std::tie(x.patient_id, x.event_class, x.date) < std::tie(y.patient_id, y.event_class, y.date);
  });
  return result;
}

}  // namespace devsurv::outcomes
