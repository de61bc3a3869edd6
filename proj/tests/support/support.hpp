#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "devsurv/common.hpp"
#include "devsurv/corpus.hpp"

namespace devsurv::testing {

inline std::filesystem::path data_dir() { return DEVSURV_TEST_DATA_DIR; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("devsurv-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Date ymd(int y, unsigned m, unsigned d) { return *make_date(y, m, d); }

/// The clinical note shown in the labeling-function figure.
inline corpus::RawNote figure2_note() {
  corpus::RawNote n;
  n.note_id = "fig2";
  n.patient_id = "P-fig2";
  n.note_type = "progress";
  n.note_datetime = *parse_iso_datetime("2008-07-01T18:11:00");
  n.text =
      "HISTORY OF PRESENT ILLNESS:\n"
      "60 yo male with infected R hip (MRSA) s/p previous hip replacement.\n"
      "LTHA November 2004 demonstrates component wear. Acetabular cup polyethylene wear is present.\n"
      "\n"
      "PAST MEDICAL HISTORY:\n"
      "Hx right Zimmer Biomet hip 1/1/05 complicated by infection.\n";
  return n;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace devsurv::testing
