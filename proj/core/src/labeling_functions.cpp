#include <algorithm>

#include "devsurv/weaksup.hpp"

namespace devsurv::weaksup {

char vote_symbol(Vote v) {
  switch (v) {
    case Vote::kTrue: return '1';
    case Vote::kFalse: return '0';
    case Vote::kAbstain: return '-';
  }
  return '?';
}

std::optional<Vote> parse_vote(std::string_view s) {
  auto t = to_lower(trim(s));
  if (t == "1" || t == "true") return Vote::kTrue;
  if (t == "0" || t == "false") return Vote::kFalse;
  if (t == "-1" || t == "-" || t == "abstain") return Vote::kAbstain;
  return std::nullopt;
}

namespace {

struct Ordered {
  const extraction::EntityMention* left;
  const extraction::EntityMention* right;
};

Ordered ordered(const RelationCandidate& c) {
  if (c.arg2.token_begin < c.arg1.token_begin) return {&c.arg2, &c.arg1};
  return {&c.arg1, &c.arg2};
}

std::vector<std::string> lowered(const RelationCandidate& c, std::size_t b, std::size_t e) {
  std::vector<std::string> out;
  for (std::size_t i = b; i < e && i < c.tokens.size(); ++i) out.push_back(c.tokens[i].lower);
  return out;
}

}  // namespace

std::vector<std::string> between_words(const RelationCandidate& c) {
  auto [l, r] = ordered(c);
  if (l->token_end >= r->token_begin) return {};
  return lowered(c, l->token_end, r->token_begin);
}

std::size_t token_distance(const RelationCandidate& c) {
  auto [l, r] = ordered(c);
  return l->token_end >= r->token_begin ? 0 : r->token_begin - l->token_end;
}

std::vector<std::string> left_window(const RelationCandidate& c, std::size_t k) {
  const std::size_t b = std::min(c.arg1.token_begin, c.arg2.token_begin);
  return lowered(c, b > k ? b - k : 0, b);
}

std::vector<std::string> right_window(const RelationCandidate& c, std::size_t k) {
  const std::size_t e = std::max(c.arg1.token_end, c.arg2.token_end);
  return lowered(c, e, e + k);
}

bool has_attribute(const RelationCandidate& c, Attribute a) { return c.arg1.attributes.has(a); }

bool has_historical_attrib(const RelationCandidate& c) {
  return has_attribute(c, Attribute::kHistorical);
}

const std::string& get_section_header(const RelationCandidate& c) { return c.section_header; }

const std::vector<std::string>& get_date_bins(const RelationCandidate& c) { return c.date_bins; }

bool contains_phrase(const std::vector<std::string>& words, std::string_view phrase) {
  std::vector<std::string> p;
  for (auto& t : corpus::tokenize(phrase)) p.push_back(std::move(t.lower));
  if (p.empty() || p.size() > words.size()) return false;
  return std::search(words.begin(), words.end(), p.begin(), p.end()) != words.end();
}

std::vector<std::string> default_reject_headers() {
  return {"PAST MEDICAL HISTORY", "PAST SURGICAL HISTORY", "FAMILY HISTORY"};
}

LabelingFunction lf_contiguous_entities() {
  return {"contiguous_entities", std::nullopt, [](const RelationCandidate& c) {
            return between_words(c).empty() ? Vote::kTrue : Vote::kAbstain;
          }};
}

LabelingFunction lf_historical() {
  return {"historical", std::nullopt, [](const RelationCandidate& c) {
            return has_historical_attrib(c) ? Vote::kFalse : Vote::kAbstain;
          }};
}

LabelingFunction lf_reject_section(std::vector<std::string> reject_headers) {
  return {"reject_section", std::nullopt,
          [headers = std::move(reject_headers)](const RelationCandidate& c) {
            const auto& h = get_section_header(c);
            const bool hit = std::any_of(headers.begin(), headers.end(),
                                         [&](const std::string& r) { return iequals(r, h); });
            return hit ? Vote::kFalse : Vote::kAbstain;
          }};
}

LabelingFunction lf_between_phrase(std::string lf_id, std::vector<std::string> phrases, Vote vote,
                                   std::optional<RelationType> relation) {
  return {std::move(lf_id), relation,
          [phrases = std::move(phrases), vote](const RelationCandidate& c) {
            const auto words = between_words(c);
            for (const auto& p : phrases)
              if (contains_phrase(words, p)) return vote;
            return Vote::kAbstain;
          }};
}

LabelingFunction lf_left_window_phrase(std::string lf_id, std::vector<std::string> phrases,
                                       std::size_t k, Vote vote,
                                       std::optional<RelationType> relation) {
  return {std::move(lf_id), relation,
          [phrases = std::move(phrases), k, vote](const RelationCandidate& c) {
            const auto words = left_window(c, k);
            for (const auto& p : phrases)
              if (contains_phrase(words, p)) return vote;
            return Vote::kAbstain;
          }};
}

LabelingFunction lf_attribute(std::string lf_id, Attribute a, Vote vote) {
  return {std::move(lf_id), std::nullopt, [a, vote](const RelationCandidate& c) {
            return has_attribute(c, a) ? vote : Vote::kAbstain;
          }};
}

LabelingFunction lf_distance_above(std::string lf_id, std::size_t max_tokens, Vote vote) {
  return {std::move(lf_id), std::nullopt, [max_tokens, vote](const RelationCandidate& c) {
            return token_distance(c) > max_tokens ? vote : Vote::kAbstain;
          }};
}

LabelingFunction lf_canonical_ids(std::string lf_id, std::vector<std::string> ids, Vote vote,
                                  std::optional<RelationType> relation) {
  return {std::move(lf_id), relation, [ids = std::move(ids), vote](const RelationCandidate& c) {
            for (const auto& id : ids)
              if (c.arg1.canonical_id == id || c.arg2.canonical_id == id) return vote;
            return Vote::kAbstain;
          }};
}

LabelingFunction lf_date_bins(std::string lf_id, std::vector<std::string> bins, Vote vote) {
  return {std::move(lf_id), std::nullopt, [bins = std::move(bins), vote](const RelationCandidate& c) {
            for (const auto& b : get_date_bins(c))
              if (std::find(bins.begin(), bins.end(), b) != bins.end()) return vote;
            return Vote::kAbstain;
          }};
}

std::vector<LabelingFunction> starter_lfs(RelationType) {
  return {
      lf_contiguous_entities(),
      lf_historical(),
      lf_reject_section(),
      lf_attribute("negated", Attribute::kNegated, Vote::kFalse),
      lf_attribute("hypothetical", Attribute::kHypothetical, Vote::kFalse),
      lf_distance_above("far_apart", 10, Vote::kFalse),
  };
}

}  // namespace devsurv::weaksup
