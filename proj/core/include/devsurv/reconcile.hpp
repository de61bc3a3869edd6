#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "devsurv/common.hpp"
#include "devsurv/extraction.hpp"

namespace devsurv::reconcile {

enum class ComponentRole { kAcetabular, kFemoral, kOther };
std::string_view to_string(ComponentRole r);
std::optional<ComponentRole> parse_component_role(std::string_view s);

struct RegistryRecord {
  std::string patient_id;
  Date surgery_date{};
  ComponentRole role = ComponentRole::kOther;
  std::string manufacturer;
  std::string model;
};

struct CanonicalImplant {
  std::string manufacturer;
  std::string model;
  ComponentRole role = ComponentRole::kOther;
};

/// Implant catalog (canonical_id -> manufacturer, model, role) plus the
/// manufacturer alias table used to collapse naming variants.
class ImplantCatalog {
 public:
  /// catalog: canonical_id, manufacturer, model, component_role (tab-separated).
  /// aliases: alias, canonical manufacturer (tab-separated). '#' lines are comments.
  static ImplantCatalog load(const std::filesystem::path& catalog,
                             const std::filesystem::path& aliases);

  void add(std::string canonical_id, CanonicalImplant implant);
  void add_alias(std::string_view alias, std::string canonical);

  const CanonicalImplant* find(std::string_view canonical_id) const;
  /// Alias-collapsed manufacturer; names not in the table pass through trimmed.
  std::string canonical_manufacturer(std::string_view name) const;
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<std::string, CanonicalImplant> entries_;
  std::map<std::string, std::string> aliases_;  // lowercased alias -> canonical
};

/// Throws Error(kInvalidArgument) for non-implant mentions and
/// Error(kMissingInput) naming the id when the catalog lacks it.
CanonicalImplant canonicalize_implant(const extraction::EntityMention& mention,
                                      const ImplantCatalog& catalog);
CanonicalImplant canonicalize_implant(std::string_view canonical_id, const ImplantCatalog& catalog);

/// Applies the manufacturer alias table to a registry record.
RegistryRecord canonicalize_record(RegistryRecord r, const ImplantCatalog& catalog);

enum class Status { kAgreement, kConflict, kMissingInRegistry, kMissingInExtraction };
std::string_view to_string(Status s);

struct KeyResult {
  std::string patient_id;
  ComponentRole role = ComponentRole::kOther;
  Status status = Status::kAgreement;
  std::optional<RegistryRecord> extracted;
  std::optional<RegistryRecord> registry;
};

struct ReconciliationReport {
  std::vector<KeyResult> keys;
  std::map<Status, std::size_t> counts;

  std::size_t total() const { return keys.size(); }
  std::size_t count(Status s) const;
  double fraction(Status s) const;
  /// Both missing statuses together.
  double missingness() const;
  std::size_t matched() const { return count(Status::kAgreement) + count(Status::kConflict); }
};

/// Matches on (patient_id, component_role) with surgery dates within the
/// tolerance; within each group a sorted two-pointer sweep yields a maximum
/// matching. Manufacturer/model compare case-insensitively.
ReconciliationReport reconcile_registry(const std::vector<RegistryRecord>& extracted,
                                        const std::vector<RegistryRecord>& registry,
                                        int date_tolerance_days = 30);

/// CSV columns patient_id, surgery_date, component_role, manufacturer, model.
std::vector<RegistryRecord> read_registry_csv(const std::filesystem::path& path);
void write_registry_csv(const std::vector<RegistryRecord>& records, const std::filesystem::path& path);
void write_report_csv(const ReconciliationReport& report, const std::filesystem::path& path);
std::string report_summary_json(const ReconciliationReport& report);

}  // namespace devsurv::reconcile
