#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace devsurv {

/// Failure categories. The CLI maps each one onto a distinct exit status.
enum class ErrorCode {
  kInvalidArgument,
  kInvalidConfig,
  kMissingInput,
  kParse,
  kDuplicate,
  kNoSignal,
  kRankDeficient,
  kNonConvergence,
  kSeparation,
  kMismatch,
  kLocked,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable code plus key/value context.
class Error : public std::runtime_error {
 public:
  using Context = std::map<std::string, std::string>;

  Error(ErrorCode code, const std::string& message, Context context = {})
      : std::runtime_error(message), code_(code), context_(std::move(context)) {}

  ErrorCode code() const noexcept { return code_; }
  const Context& context() const noexcept { return context_; }

 private:
  ErrorCode code_;
  Context context_;
};

// ---------------------------------------------------------------------------
// Calendar helpers. Dates are whole UTC days, timestamps whole UTC seconds.

using Date = std::chrono::sys_days;
using Timestamp = std::chrono::sys_seconds;

/// Parses YYYY-MM-DD. Returns nullopt on malformed or impossible dates.
std::optional<Date> parse_iso_date(std::string_view s);

/// Parses YYYY-MM-DD, YYYY-MM-DDTHH:MM[:SS][Z] or the same with a space
/// separator. Offsets other than Z are rejected.
std::optional<Timestamp> parse_iso_datetime(std::string_view s);

std::string format_date(Date d);
std::string format_datetime(Timestamp t);

inline Date date_of(Timestamp t) { return std::chrono::floor<std::chrono::days>(t); }

inline long days_between(Date from, Date to) { return (to - from).count(); }

std::optional<Date> make_date(int year, unsigned month, unsigned day);

// ---------------------------------------------------------------------------
// Text helpers (ASCII case folding; note text is treated as UTF-8 bytes).

std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
std::string_view trim(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

inline bool is_alnum(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         static_cast<unsigned char>(c) >= 0x80;
}
inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// ---------------------------------------------------------------------------
// Stable hashing (FNV-1a, 64 bit). Used for candidate ids, feature hashing
// and config fingerprints, so it must never change between releases.

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= kFnvPrime;
  }
  return h;
}

/// Final avalanche so that low bits of similar strings decorrelate.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

std::string hex64(std::uint64_t v);

}  // namespace devsurv
