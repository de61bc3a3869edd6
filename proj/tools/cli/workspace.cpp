#include "workspace.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <fstream>
#include <ostream>
#include <sstream>

namespace devsurv::cli {

namespace fs = std::filesystem;
using nlohmann::json;

Workspace::Workspace(const ProjectConfig& config, std::ostream& warnings)
    : config_(config), warnings_(warnings), dir_(config.output_dir) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec)
    throw Error(ErrorCode::kMissingInput, "cannot create output directory " + dir_.string(),
                {{"path", dir_.string()}});
  lock_ = dir_ / ".devsurv.lock";
  const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw Error(ErrorCode::kLocked,
                "output directory is in use by another devsurv command (remove the lock file if it is stale)",
                {{"lock", lock_.string()}});
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);

  manifest_ = json{{"artifacts", json::object()}};
  if (std::ifstream in(dir_ / "manifest.json"); in) {
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      auto m = json::parse(ss.str());
      if (m.is_object() && m.contains("artifacts") && m["artifacts"].is_object()) manifest_ = std::move(m);
    } catch (const json::exception&) {
      warn("manifest.json is unreadable and will be rewritten");
    }
  }
}

Workspace::~Workspace() {
  if (dirty_) {
    std::ofstream out(dir_ / "manifest.json", std::ios::binary);
    out << manifest_.dump(2) << '\n';
  }
  std::error_code ec;
  fs::remove(lock_, ec);
}

void Workspace::warn(const std::string& message) { warnings_ << "warning: " << message << '\n'; }

bool Workspace::has(const std::string& name) const { return fs::exists(dir_ / name); }

fs::path Workspace::upstream(const std::string& name, const std::string& producer) {
  const auto p = dir_ / name;
  if (!fs::exists(p))
    throw Error(ErrorCode::kMissingInput,
                "missing upstream artifact " + p.string() + " (run `devsurv " + producer + "` first)",
                {{"path", p.string()}, {"producer", producer}});
  check_fresh(p);
  return p;
}

void Workspace::check_fresh(const fs::path& artifact) {
  const auto name = artifact.filename().string();
  const auto& arts = manifest_["artifacts"];
  if (!arts.contains(name)) return;
  const auto& entry = arts[name];
  if (entry.value("config_hash", std::string()) != config_.hash)
    warn(name + " was produced under a different configuration");
  std::error_code ec;
  const auto t = fs::last_write_time(artifact, ec);
  if (ec) return;
  for (const auto& in : entry.value("inputs", json::array())) {
    const fs::path ip = in.get<std::string>();
    const auto ti = fs::last_write_time(ip, ec);
    if (!ec && ti > t) warn(name + " is older than its input " + ip.string() + "; rerun the producing command");
  }
}

fs::path Workspace::output(const std::string& name, const std::vector<fs::path>& inputs) {
  json ins = json::array();
  for (const auto& p : inputs) ins.push_back(p.string());
  manifest_["artifacts"][name] = json{{"config_hash", config_.hash}, {"inputs", ins}};
  dirty_ = true;
  return dir_ / name;
}

}  // namespace devsurv::cli
