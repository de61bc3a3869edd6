#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "devsurv/extraction.hpp"

namespace devsurv::weaksup {

using extraction::Attribute;
using extraction::RelationCandidate;
using extraction::RelationType;

enum class Vote : std::int8_t { kAbstain = -1, kFalse = 0, kTrue = 1 };

/// '1', '0' or '-'.
char vote_symbol(Vote v);
std::optional<Vote> parse_vote(std::string_view s);

// ---------------------------------------------------------------------------
// Markup primitives that labeling functions are written against.

/// Lowercased tokens strictly between the two argument spans.
std::vector<std::string> between_words(const RelationCandidate& c);
/// Tokens between the arguments (0 when adjacent or overlapping).
std::size_t token_distance(const RelationCandidate& c);
/// Up to k lowercased tokens before the leftmost argument / after the rightmost.
std::vector<std::string> left_window(const RelationCandidate& c, std::size_t k);
std::vector<std::string> right_window(const RelationCandidate& c, std::size_t k);
/// The event argument (pain or complication) carries the attribute.
bool has_attribute(const RelationCandidate& c, Attribute a);
bool has_historical_attrib(const RelationCandidate& c);
const std::string& get_section_header(const RelationCandidate& c);
const std::vector<std::string>& get_date_bins(const RelationCandidate& c);
/// True when the token sequence of `phrase` occurs in `words`.
bool contains_phrase(const std::vector<std::string>& words, std::string_view phrase);

// ---------------------------------------------------------------------------
// Labeling functions

using LFBody = std::function<Vote(const RelationCandidate&)>;

struct LabelingFunction {
  std::string lf_id;
  std::optional<RelationType> relation;  // nullopt: shared across relation types
  LFBody body;

  Vote operator()(const RelationCandidate& c) const { return body(c); }
};

std::vector<std::string> default_reject_headers();

LabelingFunction lf_contiguous_entities();
LabelingFunction lf_historical();
LabelingFunction lf_reject_section(std::vector<std::string> reject_headers = default_reject_headers());

/// Votes `vote` when any phrase occurs between the arguments.
LabelingFunction lf_between_phrase(std::string lf_id, std::vector<std::string> phrases, Vote vote,
                                   std::optional<RelationType> relation = std::nullopt);
/// Votes `vote` when any phrase occurs in the k-token window left of the pair.
LabelingFunction lf_left_window_phrase(std::string lf_id, std::vector<std::string> phrases,
                                       std::size_t k, Vote vote,
                                       std::optional<RelationType> relation = std::nullopt);
/// Votes `vote` when the event argument carries the attribute.
LabelingFunction lf_attribute(std::string lf_id, Attribute a, Vote vote);
/// Votes `vote` when the arguments are more than max_tokens apart.
LabelingFunction lf_distance_above(std::string lf_id, std::size_t max_tokens, Vote vote);
/// Votes `vote` when either argument's canonical id is in the set.
LabelingFunction lf_canonical_ids(std::string lf_id, std::vector<std::string> ids, Vote vote,
                                  std::optional<RelationType> relation = std::nullopt);
/// Votes `vote` when any of the sentence's date bins is in the set.
LabelingFunction lf_date_bins(std::string lf_id, std::vector<std::string> bins, Vote vote);

/// The three starter functions plus generic attribute and distance rules.
std::vector<LabelingFunction> starter_lfs(RelationType relation);

// ---------------------------------------------------------------------------
// Label matrix

class LabelMatrix {
 public:
  LabelMatrix() = default;
  /// All votes start as ABSTAIN. Throws on duplicate candidate or LF ids.
  LabelMatrix(std::vector<std::string> candidate_ids, std::vector<std::string> lf_ids);

  std::size_t n() const noexcept { return candidate_ids_.size(); }
  std::size_t m() const noexcept { return lf_ids_.size(); }
  const std::vector<std::string>& candidate_ids() const noexcept { return candidate_ids_; }
  const std::vector<std::string>& lf_ids() const noexcept { return lf_ids_; }

  Vote at(std::size_t i, std::size_t j) const { return static_cast<Vote>(votes_[j * n() + i]); }
  void set(std::size_t i, std::size_t j, Vote v) { votes_[j * n() + i] = static_cast<std::int8_t>(v); }
  /// Column-major raw storage.
  const std::vector<std::int8_t>& raw() const noexcept { return votes_; }

  std::optional<std::size_t> row_of(const std::string& candidate_id) const;
  /// Row subset in the given order.
  LabelMatrix select_rows(const std::vector<std::size_t>& rows) const;
  LabelMatrix select_columns(const std::vector<std::size_t>& cols) const;

  friend bool operator==(const LabelMatrix&, const LabelMatrix&) = default;

 private:
  std::vector<std::string> candidate_ids_;
  std::vector<std::string> lf_ids_;
  std::vector<std::int8_t> votes_;
  std::map<std::string, std::size_t> index_;
};

struct ApplyDiagnostics {
  std::vector<std::size_t> errors_per_lf;  // exceptions caught and recorded as ABSTAIN
  std::size_t total_errors() const;
};

/// Throws Error(kInvalidArgument) if an LF's relation differs from a candidate's.
LabelMatrix apply_lfs(const std::vector<RelationCandidate>& candidates,
                      const std::vector<LabelingFunction>& lfs, ApplyDiagnostics* diag = nullptr);

struct LFStat {
  std::string lf_id;
  double coverage = 0.0;
  double overlap = 0.0;
  double conflict = 0.0;
  std::optional<double> accuracy;  // over this LF's non-abstain rows that have gold
  std::size_t gold_votes = 0;
};

using GoldLabels = std::map<std::string, bool>;

/// Throws Error(kMismatch) listing gold ids that are not rows of the matrix.
std::vector<LFStat> lf_statistics(const LabelMatrix& matrix, const GoldLabels* gold = nullptr);

struct ProbabilisticLabels {
  std::vector<std::string> candidate_ids;
  std::vector<double> p_true;
};

ProbabilisticLabels soft_majority_vote(const LabelMatrix& matrix);

// ---------------------------------------------------------------------------
// Generative label model

struct LabelModelConfig {
  int max_iterations = 100;
  double tolerance = 1e-6;  // relative log-likelihood change
  double init_accuracy = 0.7;
  double prior = 0.5;
  bool learn_prior = false;
};

struct LabelModel {
  std::vector<std::string> lf_ids;
  double pi = 0.5;
  std::vector<double> alpha;
  std::vector<double> beta;
  int iterations = 0;
  bool converged = false;
  bool flipped = false;
  double log_likelihood = 0.0;
  std::vector<double> log_likelihood_trace;  // one entry per completed iteration
};

inline constexpr double kMinAccuracy = 0.01;
inline constexpr double kMaxAccuracy = 0.99;

/// Throws Error(kNoSignal) when every vote abstains, kInvalidArgument when empty.
LabelModel fit_label_model(const LabelMatrix& matrix, const LabelModelConfig& config = {});
/// Marginal log-likelihood of the matrix under the model.
double label_model_log_likelihood(const LabelModel& model, const LabelMatrix& matrix);
/// Throws Error(kMismatch) unless the matrix has the model's lf_ids in order.
ProbabilisticLabels posterior_labels(const LabelModel& model, const LabelMatrix& matrix);

// ---------------------------------------------------------------------------
// Serialization

/// Columnar file: text header lines "LMX1", "n=<n> m=<m>", "lf_ids=<tab-joined>",
/// then n candidate-id lines, then n*m int8 votes column-major.
void write_label_matrix(const LabelMatrix& matrix, const std::filesystem::path& path);
LabelMatrix read_label_matrix(const std::filesystem::path& path);
/// Long CSV: candidate_id,lf_id,vote with vote in {1,0,-1}.
void write_label_matrix_csv(const LabelMatrix& matrix, const std::filesystem::path& path);

std::string label_model_to_json(const LabelModel& model);
LabelModel label_model_from_json(std::string_view text);

void write_probabilistic_labels(const ProbabilisticLabels& labels, const std::filesystem::path& path);
ProbabilisticLabels read_probabilistic_labels(const std::filesystem::path& path);

}  // namespace devsurv::weaksup
