#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "devsurv/classifier.hpp"
#include "devsurv/extraction.hpp"
#include "devsurv/outcomes.hpp"
#include "devsurv/synth.hpp"
#include "devsurv/weaksup.hpp"

namespace devsurv::cli {

/// Declarative project file (JSON). Relative paths resolve against the file's
/// directory; DEVSURV_<KEY> environment variables override path keys only.
struct ProjectConfig {
  std::filesystem::path source;
  std::string hash;  // of the canonical JSON text

  std::filesystem::path output_dir;
  std::filesystem::path data_dir;

  // Inputs
  std::filesystem::path notes;
  std::vector<std::filesystem::path> dictionaries;
  std::filesystem::path triggers;
  std::filesystem::path headers;
  std::filesystem::path catalog;
  std::filesystem::path manufacturer_aliases;
  std::filesystem::path registry;
  std::filesystem::path patients;
  std::filesystem::path codes;
  std::filesystem::path gold;
  std::filesystem::path lfs_pain_anatomy;
  std::filesystem::path lfs_implant_complication;
  std::filesystem::path synth_out;

  // Pipeline parameters
  extraction::RelationType relation = extraction::RelationType::kPainAnatomy;
  std::vector<int> delta_bin_edges_days{1, 7, 30, 365, 1825};
  int context_window = 6;
  std::uint64_t split_seed = 7;
  double train_fraction = 0.6;
  double dev_fraction = 0.2;
  weaksup::LabelModelConfig label_model;
  classifier::TrainConfig train;
  std::optional<double> threshold;  // empty: tuned on dev gold
  int event_window_days = 90;
  int registry_tolerance_days = 30;
  std::string outcome = "any_complication";
  outcomes::CovariateSpec covariates;
  outcomes::CodeConfig code_sets;
  std::vector<int> nb_cutoffs{0, 5, 10, 20, 50};
  bool ttest_per_follow_up_year = true;
  synth::SynthConfig synth;

  std::filesystem::path artifact(const std::string& name) const { return output_dir / name; }
  std::filesystem::path lfs_path(extraction::RelationType r) const;
};

/// Throws Error(kInvalidConfig) on unknown keys or ill-typed values and
/// Error(kMissingInput) when the file is absent.
ProjectConfig load_project(const std::filesystem::path& path);

/// Throws Error(kMissingInput) naming `key` and the path when it does not exist.
void require_input(const std::filesystem::path& p, const std::string& key);

/// "pain_anatomy" style token used in artifact names.
std::string relation_slug(extraction::RelationType r);

}  // namespace devsurv::cli
