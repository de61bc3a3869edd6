#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "project.hpp"

namespace devsurv::cli {

/// The output directory of one subcommand invocation: holds the lock for the
/// duration of the command and keeps manifest.json, which records for each
/// artifact the config hash it was produced under and the files it was built
/// from.
class Workspace {
 public:
  Workspace(const ProjectConfig& config, std::ostream& warnings);
  ~Workspace();
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  /// Upstream artifact in the output directory. Throws Error(kMissingInput)
  /// naming the producing command when absent; warns when it is stale.
  std::filesystem::path upstream(const std::string& name, const std::string& producer);
  bool has(const std::string& name) const;
  /// Registers an artifact this command writes.
  std::filesystem::path output(const std::string& name, const std::vector<std::filesystem::path>& inputs);
  /// Warns when an external input is newer than an artifact that depends on it.
  void check_fresh(const std::filesystem::path& artifact);

  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  void warn(const std::string& message);

  const ProjectConfig& config_;
  std::ostream& warnings_;
  std::filesystem::path dir_;
  std::filesystem::path lock_;
  nlohmann::json manifest_;
  bool dirty_ = false;
};

}  // namespace devsurv::cli
