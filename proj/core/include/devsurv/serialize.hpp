#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "devsurv/extraction.hpp"

// Staged artifacts passed between command-line stages.
namespace devsurv::serialize {

/// One JSON object per note: {"note_id", "mentions": [...]}. Mention offsets
/// are absolute, sentence and token indices refer to the preprocessed note.
void write_annotations(const std::vector<extraction::AnnotatedDocument>& docs,
                       const std::filesystem::path& path);
std::map<std::string, std::vector<extraction::EntityMention>> read_annotations(
    const std::filesystem::path& path);

/// Reattaches stored mentions to a freshly preprocessed document. Throws
/// Error(kMismatch) when a mention points past the document's sentences.
extraction::AnnotatedDocument attach_mentions(corpus::Document doc,
                                              const std::vector<extraction::EntityMention>& mentions);

std::string candidate_to_json(const extraction::RelationCandidate& c);
extraction::RelationCandidate candidate_from_json(std::string_view line, std::size_t line_number = 0);
void write_candidates(const std::vector<extraction::RelationCandidate>& candidates,
                      const std::filesystem::path& path);
/// Throws Error(kParse) naming the line, Error(kDuplicate) on repeated ids.
std::vector<extraction::RelationCandidate> read_candidates(const std::filesystem::path& path);

/// candidate_id, score (sorted by candidate id).
void write_scores(const std::map<std::string, double>& scores, const std::filesystem::path& path);
std::map<std::string, double> read_scores(const std::filesystem::path& path);

}  // namespace devsurv::serialize
