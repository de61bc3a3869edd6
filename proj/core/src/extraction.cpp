#include "devsurv/extraction.hpp"

#include <algorithm>
#include <fstream>

namespace devsurv::extraction {

namespace {

std::string normalize_name(std::string_view s) {
  std::string out;
  for (char c : trim(s)) {
    if (c == ' ' || c == '-' || c == '_')
      out += '_';
    else
      out += static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
  }
  return out;
}

}  // namespace

std::string_view to_string(EntityType t) {
  switch (t) {
    case EntityType::kImplant: return "implant";
    case EntityType::kComplication: return "complication";
    case EntityType::kPain: return "pain";
    case EntityType::kAnatomy: return "anatomy";
  }
  return "?";
}

std::string_view to_string(Subcategory s) {
  switch (s) {
    case Subcategory::kRevision: return "revision";
    case Subcategory::kComponentWear: return "component wear";
    case Subcategory::kMechanicalFailure: return "mechanical failure";
    case Subcategory::kParticleDisease: return "particle disease";
    case Subcategory::kRadiographicAbnormality: return "radiographic abnormality";
    case Subcategory::kInfection: return "infection";
  }
  return "?";
}

std::string event_class_name(Subcategory s) { return normalize_name(to_string(s)); }

std::optional<EntityType> parse_entity_type(std::string_view s) {
  const auto n = normalize_name(s);
  for (auto t : {EntityType::kImplant, EntityType::kComplication, EntityType::kPain,
                 EntityType::kAnatomy})
    if (n == to_string(t)) return t;
  return std::nullopt;
}

std::optional<Subcategory> parse_subcategory(std::string_view s) {
  const auto n = normalize_name(s);
  for (auto c : {Subcategory::kRevision, Subcategory::kComponentWear,
                 Subcategory::kMechanicalFailure, Subcategory::kParticleDisease,
                 Subcategory::kRadiographicAbnormality, Subcategory::kInfection})
    if (n == event_class_name(c)) return c;
  return std::nullopt;
}

std::string_view to_string(Attribute a) {
  switch (a) {
    case Attribute::kNegated: return "negated";
    case Attribute::kHistorical: return "historical";
    case Attribute::kHypothetical: return "hypothetical";
  }
  return "?";
}

std::optional<Attribute> parse_attribute(std::string_view s) {
  const auto n = normalize_name(s);
  if (n == "negated" || n == "negation") return Attribute::kNegated;
  if (n == "historical") return Attribute::kHistorical;
  if (n == "hypothetical") return Attribute::kHypothetical;
  return std::nullopt;
}

std::vector<std::string> Attributes::names() const {
  std::vector<std::string> out;
  for (auto a : {Attribute::kNegated, Attribute::kHistorical, Attribute::kHypothetical})
    if (has(a)) out.emplace_back(to_string(a));
  return out;
}

Attributes Attributes::from_names(const std::vector<std::string>& names) {
  Attributes out;
  for (const auto& n : names)
    if (auto a = parse_attribute(n)) out.add(*a);
  return out;
}

// ---------------------------------------------------------------------------
// Dictionary

std::string term_key(std::string_view term) {
  std::string key;
  for (const auto& t : corpus::tokenize(term)) {
    if (!key.empty()) key += ' ';
    key += t.lower;
  }
  return key;
}

namespace {

std::size_t key_tokens(const std::string& key) {
  return key.empty() ? 0 : static_cast<std::size_t>(std::count(key.begin(), key.end(), ' ')) + 1;
}

std::string strip_punctuation(std::string_view term) {
  std::string out;
  for (char c : term)
    if (is_alnum(c) || c == ' ') out += c;
  return std::string(trim(out));
}

std::string pluralize(std::string_view term) {
  std::string t(trim(term));
  if (t.empty() || t.back() == 's' || t.back() == 'S' || !is_alnum(t.back())) return {};
  return t + "s";
}

}  // namespace

void Dictionary::add_explicit(DictionaryEntry e) {
  auto key = term_key(e.term);
  if (key.empty())
    throw Error(ErrorCode::kParse, source_name_ + ":" + std::to_string(e.source_line) + ": empty term",
                {{"line", std::to_string(e.source_line)}});
  if (e.type == EntityType::kComplication && !e.subcategory)
    throw Error(ErrorCode::kParse,
                source_name_ + ":" + std::to_string(e.source_line) +
                    ": complication term '" + e.term + "' needs a subcategory",
                {{"line", std::to_string(e.source_line)}, {"term", e.term}});
  if (e.type != EntityType::kComplication && e.subcategory)
    throw Error(ErrorCode::kParse,
                source_name_ + ":" + std::to_string(e.source_line) + ": only complication terms carry a subcategory",
                {{"line", std::to_string(e.source_line)}, {"term", e.term}});

  auto it = entries_.find(key);
  if (it != entries_.end()) {
    if (it->second.type != e.type)
      throw Error(ErrorCode::kDuplicate,
                  source_name_ + ": term '" + e.term + "' has conflicting entity types at lines " +
                      std::to_string(it->second.source_line) + " and " +
                      std::to_string(e.source_line),
                  {{"term", e.term},
                   {"first_line", std::to_string(it->second.source_line)},
                   {"second_line", std::to_string(e.source_line)}});
    return;  // same type: the first explicit line wins
  }
  max_tokens_ = std::max(max_tokens_, key_tokens(key));
  entries_.emplace(std::move(key), std::move(e));
}

void Dictionary::expand(const ExpansionOptions& options) {
  if (!options.enabled) return;
  std::vector<DictionaryEntry> variants;
  for (const auto& [key, e] : entries_) {
    if (e.expanded) continue;
    std::vector<std::string> forms;
    if (options.strip_punctuation) forms.push_back(strip_punctuation(e.term));
    if (options.pluralize) forms.push_back(pluralize(e.term));
    for (auto& f : forms) {
      if (f.empty()) continue;
      DictionaryEntry v = e;
      v.term = std::move(f);
      v.expanded = true;
      variants.push_back(std::move(v));
    }
  }
  for (auto& v : variants) {
    auto key = term_key(v.term);
    if (key.empty() || entries_.count(key)) continue;  // never overwrite
    max_tokens_ = std::max(max_tokens_, key_tokens(key));
    entries_.emplace(std::move(key), std::move(v));
  }
}

Dictionary Dictionary::from_entries(std::string source_name, std::vector<DictionaryEntry> entries,
                                    const ExpansionOptions& expansion) {
  Dictionary d;
  d.source_name_ = std::move(source_name);
  for (auto& e : entries) d.add_explicit(std::move(e));
  d.expand(expansion);
  return d;
}

Dictionary Dictionary::load(const std::filesystem::path& path, const ExpansionOptions& expansion) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::kMissingInput, "cannot open dictionary " + path.string(),
                {{"path", path.string()}});
  Dictionary d;
  d.source_name_ = path.stem().string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      auto body = trim(t.substr(1));
      if (body.rfind("version:", 0) == 0) d.version_ = std::string(trim(body.substr(8)));
      continue;
    }
    auto cols = split(line, '\t');
    auto where = path.string() + ":" + std::to_string(lineno);
    if (cols.size() < 3)
      throw Error(ErrorCode::kParse, where + ": expected at least 3 tab-separated columns",
                  {{"path", path.string()}, {"line", std::to_string(lineno)}});
    DictionaryEntry e;
    e.term = std::string(trim(cols[0]));
    e.canonical_id = std::string(trim(cols[1]));
    e.source_line = lineno;
    auto type = parse_entity_type(cols[2]);
    if (!type)
      throw Error(ErrorCode::kParse, where + ": unknown entity type '" + cols[2] + "'",
                  {{"path", path.string()}, {"line", std::to_string(lineno)}});
    e.type = *type;
    if (cols.size() > 3 && !trim(cols[3]).empty()) {
      auto sub = parse_subcategory(cols[3]);
      if (!sub)
        throw Error(ErrorCode::kParse, where + ": unknown subcategory '" + cols[3] + "'",
                    {{"path", path.string()}, {"line", std::to_string(lineno)}});
      e.subcategory = sub;
    }
    if (e.term.empty() || e.canonical_id.empty())
      throw Error(ErrorCode::kParse, where + ": empty term or canonical_id",
                  {{"path", path.string()}, {"line", std::to_string(lineno)}});
    d.source_name_ = path.stem().string();
    d.add_explicit(std::move(e));
  }
  d.expand(expansion);
  return d;
}

const DictionaryEntry* Dictionary::lookup(std::string_view term) const {
  auto it = entries_.find(term_key(term));
  return it == entries_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// Tagger

Tagger::Tagger(std::vector<Dictionary> dictionaries, AnatomyPositionRules rules)
    : dictionaries_(std::move(dictionaries)), rules_(std::move(rules)) {
  for (auto& m : rules_.modifiers) m = to_lower(m);
  for (const auto& d : dictionaries_) {
    for (const auto& [key, entry] : d.entries()) {
      by_type_[entry.type].emplace(key, &entry);
      auto& mx = max_tokens_[entry.type];
      mx = std::max(mx, key_tokens(key));
    }
  }
}

std::vector<EntityMention> Tagger::tag(const corpus::Sentence& sentence) const {
  const auto& toks = sentence.tokens;
  std::vector<EntityMention> out;
  for (const auto& [type, table] : by_type_) {
    const std::size_t longest = max_tokens_.at(type);
    std::size_t i = 0;
    std::size_t covered_until = 0;  // absorbed modifiers may not reach before this
    while (i < toks.size()) {
      const DictionaryEntry* hit = nullptr;
      std::size_t hit_len = 0;
      const std::size_t max_len = std::min(longest, toks.size() - i);
      for (std::size_t len = max_len; len >= 1 && !hit; --len) {
        std::string key = toks[i].lower;
        for (std::size_t k = 1; k < len; ++k) key += ' ' + toks[i + k].lower;
        auto it = table.find(key);
        if (it != table.end()) {
          hit = it->second;
          hit_len = len;
        }
      }
      if (!hit) {
        ++i;
        continue;
      }
      std::size_t begin = i;
      if (std::find(rules_.absorbing_types.begin(), rules_.absorbing_types.end(), type) !=
          rules_.absorbing_types.end()) {
        while (begin > covered_until &&
               std::find(rules_.modifiers.begin(), rules_.modifiers.end(),
                         toks[begin - 1].lower) != rules_.modifiers.end())
          --begin;
      }
      EntityMention m;
      m.sentence = sentence.index;
      m.token_begin = begin;
      m.token_end = i + hit_len;
      m.span = {toks[begin].span.begin, toks[i + hit_len - 1].span.end};
      m.surface = sentence.text.substr(m.span.begin - sentence.span.begin, m.span.size());
      m.type = type;
      m.canonical_id = hit->canonical_id;
      m.subcategory = hit->subcategory;
      out.push_back(std::move(m));
      i += hit_len;
      covered_until = i;
    }
  }
  std::sort(out.begin(), out.end(), [](const EntityMention& a, const EntityMention& b) {
    if (a.span.begin != b.span.begin) return a.span.begin < b.span.begin;
    if (a.span.end != b.span.end) return a.span.end < b.span.end;
    return a.type < b.type;
  });
  return out;
}

std::vector<EntityMention> tag_entities(const corpus::Sentence& sentence,
                                        const std::vector<Dictionary>& dictionaries,
                                        const AnatomyPositionRules& rules) {
  return Tagger(dictionaries, rules).tag(sentence);
}

}  // namespace devsurv::extraction
