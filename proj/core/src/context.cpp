#include <algorithm>
#include <fstream>
#include <sstream>

#include "devsurv/extraction.hpp"

namespace devsurv::extraction {

namespace {

std::vector<std::string> token_strings(std::string_view phrase) {
  std::vector<std::string> out;
  for (auto& t : corpus::tokenize(phrase)) out.push_back(std::move(t.lower));
  return out;
}

bool matches_at(const std::vector<corpus::Token>& toks, std::size_t i,
                const std::vector<std::string>& phrase) {
  if (phrase.empty() || i + phrase.size() > toks.size()) return false;
  for (std::size_t k = 0; k < phrase.size(); ++k)
    if (toks[i + k].lower != phrase[k]) return false;
  return true;
}

std::optional<TriggerDirection> parse_direction(std::string_view s) {
  auto l = to_lower(trim(s));
  if (l == "forward" || l == "pre") return TriggerDirection::kForward;
  if (l == "backward" || l == "post") return TriggerDirection::kBackward;
  if (l == "bidirectional" || l == "both") return TriggerDirection::kBidirectional;
  return std::nullopt;
}

constexpr std::string_view kDefaultTriggers = R"tsv(# trigger	category	direction	terminators
no	negation	forward	but,however,although,though,except,aside from,which,secondary to,;
not	negation	forward	but,however,although,though,except,aside from,which,secondary to,;
denies	negation	forward	but,however,although,though,except,aside from,which,secondary to,;
denied	negation	forward	but,however,although,though,except,aside from,which,secondary to,;
without	negation	forward	but,however,although,though,except,aside from,which,secondary to,;
negative for	negation	forward	but,however,although,though,except,aside from,which,secondary to,;
no evidence of	negation	forward	but,however,although,though,except,aside from,which,secondary to,;
no signs of	negation	forward	but,however,although,though,except,aside from,which,secondary to,;
no sign of	negation	forward	but,however,although,though,except,aside from,which,secondary to,;
free of	negation	forward	but,however,although,though,except,aside from,which,secondary to,;
absence of	negation	forward	but,however,although,though,except,aside from,which,secondary to,;
not demonstrate	negation	forward	but,however,although,though,except,aside from,which,secondary to,;
no longer	negation	forward	but,however,although,though,except,aside from,which,secondary to,;
never had	negation	forward	but,however,although,though,except,aside from,which,secondary to,;
rules out	negation	forward	but,however,although,though,except,aside from,which,secondary to,;
resolved	negation	backward	but,however,although,though,except,aside from,which,secondary to,;
ruled out	negation	backward	but,however,although,though,except,aside from,which,secondary to,;
is negative	negation	backward	but,however,although,though,except,aside from,which,secondary to,;
unlikely	negation	backward	but,however,although,though,except,aside from,which,secondary to,;
has resolved	negation	backward	but,however,although,though,except,aside from,which,secondary to,;
absent	negation	backward	but,however,although,though,except,aside from,which,secondary to,;
history of	historical	forward	but,however,although,though,except,aside from,which,secondary to,;
hx of	historical	forward	but,however,although,though,except,aside from,which,secondary to,;
hx	historical	forward	but,however,although,though,except,aside from,which,secondary to,;
s/p	historical	forward	but,however,although,though,except,aside from,which,secondary to,;
status post	historical	forward	but,however,although,though,except,aside from,which,secondary to,;
previous	historical	forward	but,however,although,though,except,aside from,which,secondary to,;
previously	historical	forward	but,however,although,though,except,aside from,which,secondary to,;
prior	historical	forward	but,however,although,though,except,aside from,which,secondary to,;
remote	historical	forward	but,however,although,though,except,aside from,which,secondary to,;
in the past	historical	bidirectional	but,however,although,though,except,aside from,which,secondary to,;
years ago	historical	backward	but,however,although,though,except,aside from,which,secondary to,;
if	hypothetical	forward	but,however,although,though,except,aside from,which,secondary to,;
should	hypothetical	forward	but,however,although,though,except,aside from,which,secondary to,;
risk of	hypothetical	forward	but,however,although,though,except,aside from,which,secondary to,;
return if	hypothetical	forward	but,however,although,though,except,aside from,which,secondary to,;
rule out	hypothetical	forward	but,however,although,though,except,aside from,which,secondary to,;
r/o	hypothetical	forward	but,however,although,though,except,aside from,which,secondary to,;
concern for	hypothetical	forward	but,however,although,though,except,aside from,which,secondary to,;
watch for	hypothetical	forward	but,however,although,though,except,aside from,which,secondary to,;
in case of	hypothetical	forward	but,however,although,though,except,aside from,which,secondary to,;
)tsv";

}  // namespace

TriggerLexicon TriggerLexicon::from_triggers(std::vector<Trigger> triggers) {
  TriggerLexicon lex;
  lex.triggers_ = std::move(triggers);
  for (const auto& t : lex.triggers_) {
    Compiled c;
    c.tokens = token_strings(t.phrase);
    if (c.tokens.empty())
      throw Error(ErrorCode::kInvalidConfig, "empty trigger phrase");
    for (const auto& term : t.terminators)
      if (auto toks = token_strings(term); !toks.empty()) c.terminators.push_back(std::move(toks));
    lex.compiled_.push_back(std::move(c));
  }
  return lex;
}

namespace {

TriggerLexicon parse_lexicon(std::istream& in, const std::string& name) {
  std::vector<Trigger> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto cols = split(line, '\t');
    auto fail = [&](const std::string& what) {
      return Error(ErrorCode::kParse, name + ":" + std::to_string(lineno) + ": " + what,
                   {{"path", name}, {"line", std::to_string(lineno)}});
    };
    if (cols.size() < 3) throw fail("expected trigger, category, direction");
    Trigger tr;
    tr.phrase = std::string(trim(cols[0]));
    if (tr.phrase.empty()) throw fail("empty trigger phrase");
    auto cat = parse_attribute(cols[1]);
    if (!cat) throw fail("unknown category '" + cols[1] + "'");
    tr.category = *cat;
    auto dir = parse_direction(cols[2]);
    if (!dir) throw fail("unknown direction '" + cols[2] + "'");
    tr.direction = *dir;
    if (cols.size() > 3)
      for (auto& term : split(cols[3], ','))
        if (!trim(term).empty()) tr.terminators.emplace_back(trim(term));
    out.push_back(std::move(tr));
  }
  return TriggerLexicon::from_triggers(std::move(out));
}

}  // namespace

TriggerLexicon TriggerLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::kMissingInput, "cannot open trigger lexicon " + path.string(),
                {{"path", path.string()}});
  return parse_lexicon(in, path.string());
}

TriggerLexicon TriggerLexicon::defaults() {
  std::istringstream in{std::string(kDefaultTriggers)};
  return parse_lexicon(in, "<default triggers>");
}

std::vector<EntityMention> apply_context(const corpus::Sentence& sentence,
                                         const std::vector<EntityMention>& mentions,
                                         const TriggerLexicon& lexicon,
                                         const corpus::SectionSpan* section,
                                         const std::vector<const corpus::DateMention*>& dates,
                                         const ContextConfig& config) {
  std::vector<EntityMention> out = mentions;
  const auto& toks = sentence.tokens;
  const auto& compiled = lexicon.compiled();
  const auto& triggers = lexicon.triggers();
  const std::size_t window = static_cast<std::size_t>(std::max(config.window, 0));

  auto inside_mention = [&](std::size_t tok) {
    return std::any_of(mentions.begin(), mentions.end(), [&](const EntityMention& m) {
      return tok >= m.token_begin && tok < m.token_end;
    });
  };

  std::size_t i = 0;
  while (i < toks.size()) {
    // Longest trigger starting here.
    std::size_t best = compiled.size();
    for (std::size_t k = 0; k < compiled.size(); ++k) {
      if (!matches_at(toks, i, compiled[k].tokens)) continue;
      if (best == compiled.size() || compiled[k].tokens.size() > compiled[best].tokens.size())
        best = k;
    }
    if (best == compiled.size() || inside_mention(i)) {
      ++i;
      continue;
    }
    const auto& c = compiled[best];
    const auto& tr = triggers[best];
    const std::size_t t_begin = i;
    const std::size_t t_end = i + c.tokens.size();

    auto terminator_at = [&](std::size_t pos) {
      return std::any_of(c.terminators.begin(), c.terminators.end(),
                         [&](const auto& term) { return matches_at(toks, pos, term); });
    };

    if (tr.direction != TriggerDirection::kBackward) {
      std::size_t scope_end = std::min(toks.size(), t_end + window);
      for (std::size_t p = t_end; p < scope_end; ++p)
        if (terminator_at(p)) {
          scope_end = p;
          break;
        }
      for (auto& m : out)
        if (m.token_begin >= t_end && m.token_begin < scope_end) m.attributes.add(tr.category);
    }
    if (tr.direction != TriggerDirection::kForward) {
      std::size_t scope_begin = t_begin > window ? t_begin - window : 0;
      for (std::size_t p = t_begin; p > scope_begin; --p)
        if (terminator_at(p - 1)) {
          scope_begin = p;
          break;
        }
      for (auto& m : out)
        if (m.token_end <= t_begin && m.token_end > scope_begin) m.attributes.add(tr.category);
    }
    i = t_end;
  }

  if (config.use_section_rule && section) {
    const bool historical =
        std::any_of(config.historical_sections.begin(), config.historical_sections.end(),
                    [&](const std::string& h) { return iequals(h, section->canonical_header); });
    if (historical)
      for (auto& m : out) m.attributes.add(Attribute::kHistorical);
  }

  if (config.use_date_rule) {
    const bool old = std::any_of(dates.begin(), dates.end(), [&](const corpus::DateMention* d) {
      return d->delta_days < -static_cast<long>(config.historical_date_days);
    });
    if (old)
      for (auto& m : out) m.attributes.add(Attribute::kHistorical);
  }
  return out;
}

AnnotatedDocument annotate(const corpus::Document& doc, const Tagger& tagger,
                           const TriggerLexicon& lexicon, const ContextConfig& config) {
  AnnotatedDocument out;
  out.doc = doc;
  out.mentions.reserve(doc.sentences.size());
  for (const auto& s : doc.sentences) {
    auto tagged = tagger.tag(s);
    out.mentions.push_back(
        apply_context(s, tagged, lexicon, doc.section_of(s), doc.dates_in(s), config));
  }
  return out;
}

}  // namespace devsurv::extraction
