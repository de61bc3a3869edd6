#include "devsurv/reconcile.hpp"

#include <algorithm>
#include <fstream>
#include <tuple>

#include <json.hpp>

#include "devsurv/csv.hpp"

namespace devsurv::reconcile {

std::string_view to_string(ComponentRole r) {
  switch (r) {
    case ComponentRole::kAcetabular: return "acetabular";
    case ComponentRole::kFemoral: return "femoral";
    case ComponentRole::kOther: return "other";
  }
  return "other";
}

std::optional<ComponentRole> parse_component_role(std::string_view s) {
  auto l = to_lower(trim(s));
  if (l == "acetabular") return ComponentRole::kAcetabular;
  if (l == "femoral") return ComponentRole::kFemoral;
  if (l == "other") return ComponentRole::kOther;
  return std::nullopt;
}

std::string_view to_string(Status s) {
  switch (s) {
    case Status::kAgreement: return "agreement";
    case Status::kConflict: return "conflict";
    case Status::kMissingInRegistry: return "missing_in_registry";
    case Status::kMissingInExtraction: return "missing_in_extraction";
  }
  return "?";
}

namespace {

std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& path, std::size_t min_cols) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::kMissingInput, "cannot open " + path.string(), {{"path", path.string()}});
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto cols = split(line, '\t');
    if (cols.size() < min_cols)
      throw Error(ErrorCode::kParse,
                  path.string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(min_cols) + " tab-separated columns",
                  {{"path", path.string()}, {"line", std::to_string(lineno)}});
    for (auto& c : cols) c = std::string(trim(c));
    rows.push_back(std::move(cols));
  }
  return rows;
}

}  // namespace

ImplantCatalog ImplantCatalog::load(const std::filesystem::path& catalog,
                                    const std::filesystem::path& aliases) {
  ImplantCatalog c;
  for (auto& row : read_tsv(aliases, 2)) c.add_alias(row[0], row[1]);
  for (auto& row : read_tsv(catalog, 4)) {
    auto role = parse_component_role(row[3]);
    if (!role)
      throw Error(ErrorCode::kParse, catalog.string() + ": unknown component role '" + row[3] + "'",
                  {{"path", catalog.string()}, {"canonical_id", row[0]}});
    c.add(row[0], {row[1], row[2], *role});
  }
  return c;
}

void ImplantCatalog::add(std::string canonical_id, CanonicalImplant implant) {
  entries_[std::move(canonical_id)] = std::move(implant);
}

void ImplantCatalog::add_alias(std::string_view alias, std::string canonical) {
  aliases_[to_lower(trim(alias))] = std::move(canonical);
}

const CanonicalImplant* ImplantCatalog::find(std::string_view canonical_id) const {
  auto it = entries_.find(std::string(canonical_id));
  return it == entries_.end() ? nullptr : &it->second;
}

std::string ImplantCatalog::canonical_manufacturer(std::string_view name) const {
  auto it = aliases_.find(to_lower(trim(name)));
  return it == aliases_.end() ? std::string(trim(name)) : it->second;
}

CanonicalImplant canonicalize_implant(std::string_view canonical_id, const ImplantCatalog& catalog) {
  const auto* e = catalog.find(canonical_id);
  if (!e)
    throw Error(ErrorCode::kMissingInput,
                "implant id not in catalog: " + std::string(canonical_id),
                {{"canonical_id", std::string(canonical_id)}});
  CanonicalImplant out = *e;
  out.manufacturer = catalog.canonical_manufacturer(e->manufacturer);
  return out;
}

CanonicalImplant canonicalize_implant(const extraction::EntityMention& mention,
                                      const ImplantCatalog& catalog) {
  if (mention.type != extraction::EntityType::kImplant)
    throw Error(ErrorCode::kInvalidArgument, "mention is not an implant: " + mention.surface,
                {{"surface", mention.surface}});
  return canonicalize_implant(mention.canonical_id, catalog);
}

RegistryRecord canonicalize_record(RegistryRecord r, const ImplantCatalog& catalog) {
  r.manufacturer = catalog.canonical_manufacturer(r.manufacturer);
  r.model = std::string(trim(r.model));
  return r;
}

std::size_t ReconciliationReport::count(Status s) const {
  auto it = counts.find(s);
  return it == counts.end() ? 0 : it->second;
}

double ReconciliationReport::fraction(Status s) const {
  return keys.empty() ? 0.0 : static_cast<double>(count(s)) / static_cast<double>(keys.size());
}

double ReconciliationReport::missingness() const {
  return fraction(Status::kMissingInRegistry) + fraction(Status::kMissingInExtraction);
}

namespace {

using GroupKey = std::pair<std::string, ComponentRole>;

bool same_implant(const RegistryRecord& a, const RegistryRecord& b) {
  return iequals(a.manufacturer, b.manufacturer) && iequals(a.model, b.model);
}

bool record_less(const RegistryRecord& a, const RegistryRecord& b) {
  return std::tuple(a.surgery_date, to_lower(a.manufacturer), to_lower(a.model)) <
         std::tuple(b.surgery_date, to_lower(b.manufacturer), to_lower(b.model));
}

}  // namespace

ReconciliationReport reconcile_registry(const std::vector<RegistryRecord>& extracted,
                                        const std::vector<RegistryRecord>& registry,
                                        int date_tolerance_days) {
  if (date_tolerance_days < 0)
    throw Error(ErrorCode::kInvalidArgument, "date tolerance must be non-negative");
  std::map<GroupKey, std::pair<std::vector<RegistryRecord>, std::vector<RegistryRecord>>> groups;
  for (const auto& r : extracted) groups[{r.patient_id, r.role}].first.push_back(r);
  for (const auto& r : registry) groups[{r.patient_id, r.role}].second.push_back(r);

  ReconciliationReport report;
  auto emit = [&](const GroupKey& key, Status s, const RegistryRecord* e, const RegistryRecord* g) {
    KeyResult k;
    k.patient_id = key.first;
    k.role = key.second;
    k.status = s;
    if (e) k.extracted = *e;
    if (g) k.registry = *g;
    report.keys.push_back(std::move(k));
    ++report.counts[s];
  };

  for (auto& [key, sides] : groups) {
    auto& [ext, reg] = sides;
    std::sort(ext.begin(), ext.end(), record_less);
    std::sort(reg.begin(), reg.end(), record_less);
    std::size_t i = 0, j = 0;
    while (i < ext.size() || j < reg.size()) {
      if (i == ext.size()) {
        emit(key, Status::kMissingInExtraction, nullptr, &reg[j++]);
      } else if (j == reg.size()) {
        emit(key, Status::kMissingInRegistry, &ext[i++], nullptr);
      } else {
        const long gap = days_between(ext[i].surgery_date, reg[j].surgery_date);
        if (std::labs(gap) <= date_tolerance_days) {
          emit(key, same_implant(ext[i], reg[j]) ? Status::kAgreement : Status::kConflict, &ext[i],
               &reg[j]);
          ++i;
          ++j;
        } else if (gap > 0) {
          emit(key, Status::kMissingInRegistry, &ext[i++], nullptr);
        } else {
          emit(key, Status::kMissingInExtraction, nullptr, &reg[j++]);
        }
      }
    }
  }
  return report;
}

std::vector<RegistryRecord> read_registry_csv(const std::filesystem::path& path) {
  auto t = CsvTable::read(path);
  t.require_columns({"patient_id", "surgery_date", "component_role", "manufacturer", "model"});
  std::vector<RegistryRecord> out;
  for (const auto& row : t.rows()) {
    auto where = [&](const std::string& field) {
      return Error::Context{{"path", path.string()}, {"line", std::to_string(row.line())}, {"field", field}};
    };
    RegistryRecord r;
    r.patient_id = row.at("patient_id");
    auto d = parse_iso_date(row.at("surgery_date"));
    if (!d)
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(row.line()) + ": bad surgery_date",
                  where("surgery_date"));
    r.surgery_date = *d;
    auto role = parse_component_role(row.at("component_role"));
    if (!role)
      throw Error(ErrorCode::kParse,
                  path.string() + ":" + std::to_string(row.line()) + ": bad component_role",
                  where("component_role"));
    r.role = *role;
    r.manufacturer = row.at("manufacturer");
    r.model = row.at("model");
    if (r.patient_id.empty() || r.manufacturer.empty() || r.model.empty())
      throw Error(ErrorCode::kParse,
                  path.string() + ":" + std::to_string(row.line()) + ": empty key or implant field",
                  where("patient_id"));
    out.push_back(std::move(r));
  }
  return out;
}

void write_registry_csv(const std::vector<RegistryRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::kMissingInput, "cannot write " + path.string(), {{"path", path.string()}});
  CsvWriter w(out);
  w.row({"patient_id", "surgery_date", "component_role", "manufacturer", "model"});
  for (const auto& r : records)
    w.row({r.patient_id, format_date(r.surgery_date), std::string(to_string(r.role)), r.manufacturer,
           r.model});
}

void write_report_csv(const ReconciliationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::kMissingInput, "cannot write " + path.string(), {{"path", path.string()}});
  CsvWriter w(out);
  w.row({"patient_id", "component_role", "status", "extracted_date", "extracted_manufacturer",
         "extracted_model", "registry_date", "registry_manufacturer", "registry_model"});
  for (const auto& k : report.keys) {
    const auto* e = k.extracted ? &*k.extracted : nullptr;
    const auto* g = k.registry ? &*k.registry : nullptr;
    w.row({k.patient_id, std::string(to_string(k.role)), std::string(to_string(k.status)),
           e ? format_date(e->surgery_date) : "", e ? e->manufacturer : "", e ? e->model : "",
           g ? format_date(g->surgery_date) : "", g ? g->manufacturer : "", g ? g->model : ""});
  }
}

std::string report_summary_json(const ReconciliationReport& report) {
  nlohmann::ordered_json j;
  j["keys"] = report.total();
  for (auto s : {Status::kAgreement, Status::kConflict, Status::kMissingInRegistry,
                 Status::kMissingInExtraction})
    j["counts"][std::string(to_string(s))] = report.count(s);
  j["fractions"] = {{"agreement", report.fraction(Status::kAgreement)},
                    {"conflict", report.fraction(Status::kConflict)},
                    {"missingness", report.missingness()}};
  return j.dump(2) + "\n";
}

}  // namespace devsurv::reconcile
