#include "pcmkit/ortho.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_map>

#include "pcmkit/rng.hpp"

#include <json.hpp>

namespace pcmkit::ortho {

using json = nlohmann::ordered_json;

std::string to_string(VariationClass c) {
  switch (c) {
    case VariationClass::alternation: return "alternation";
    case VariationClass::conversion: return "conversion";
    case VariationClass::transcription: return "transcription";
    case VariationClass::deletion: return "deletion";
  }
  throw InvalidArgument("bad variation class");
}

VariationClass variation_class_from_string(const std::string& s) {
  if (s == "alternation") return VariationClass::alternation;
  if (s == "conversion") return VariationClass::conversion;
  if (s == "transcription") return VariationClass::transcription;
  if (s == "deletion") return VariationClass::deletion;
  throw FormatError("unknown variation class: " + s);
}

std::string to_string(Position p) {
  switch (p) {
    case Position::initial: return "initial";
    case Position::medial: return "medial";
    case Position::final: return "final";
    case Position::any: return "any";
  }
  throw InvalidArgument("bad position");
}

Position position_from_string(const std::string& s) {
  if (s == "initial") return Position::initial;
  if (s == "medial") return Position::medial;
  if (s == "final") return Position::final;
  if (s == "any") return Position::any;
  throw FormatError("unknown position: " + s);
}

void VariationRule::validate() const {
  if (pattern.empty()) throw InvalidArgument("rule pattern must be non-empty");
  if (cls == VariationClass::deletion && !whole_word && !replacement.empty())
    throw InvalidArgument("deletion rules must have an empty replacement");
  if (whole_word && replacement.empty())
    throw InvalidArgument("whole-word entries need a replacement word");
}

void RuleSet::validate() const {
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& r : rules) {
    r.validate();
    auto key = std::make_tuple(r.pattern, r.replacement, to_string(r.position));
    if (!seen.insert(key).second)
      throw InvalidArgument("duplicate rule: " + r.pattern + "/" + r.replacement);
  }
}

RuleSet builtin_rules() {
  RuleSet rs;
  auto rule = [&](VariationClass c, const char* subtype, const char* pat, const char* rep,
                  Position pos) {
    rs.rules.push_back({c, subtype, pat, rep, pos, false});
  };
  rule(VariationClass::alternation, "c/k", "c", "k", Position::any);
  rule(VariationClass::alternation, "a/o", "a", "o", Position::any);
  rule(VariationClass::transcription, "bl/bol", "ble", "bol", Position::any);
  rule(VariationClass::transcription, "er/a", "er", "a", Position::final);
  rule(VariationClass::conversion, "ou/a", "ou", "a", Position::any);
  rule(VariationClass::conversion, "ou/o", "ou", "o", Position::any);
  rule(VariationClass::deletion, "initial", "h", "", Position::initial);
  for (const char* v : {"a", "e", "i", "o", "u"})
    rule(VariationClass::deletion, "medial", v, "", Position::medial);
  auto word = [&](VariationClass c, const char* subtype, const char* from, const char* to) {
    rs.rules.push_back({c, subtype, from, to, Position::any, true});
  };
  word(VariationClass::conversion, "ou/a", "our", "awa");
  word(VariationClass::transcription, "er/a", "whether", "weda");
  word(VariationClass::deletion, "medial", "different", "difren");
  rs.validate();
  return rs;
}

RuleSet load_rules(const std::string& path) {
  RuleSet rs;
  size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (str::trim(line).empty()) continue;
    try {
      auto rec = json::parse(line);
      VariationRule r;
      r.cls = variation_class_from_string(rec.at("class").get<std::string>());
      r.subtype = rec.at("subtype").get<std::string>();
      r.pattern = rec.at("pattern").get<std::string>();
      r.replacement = rec.value("replacement", "");
      r.position = position_from_string(rec.value("position", "any"));
      r.whole_word = rec.value("kind", "rule") == "word";
      rs.rules.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError("malformed rule at line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  rs.validate();
  return rs;
}

void save_rules(const RuleSet& rules, const std::string& path) {
  std::ostringstream out;
  for (const auto& r : rules.rules) {
    json rec;
    rec["class"] = to_string(r.cls);
    rec["subtype"] = r.subtype;
    rec["pattern"] = r.pattern;
    rec["replacement"] = r.replacement;
    rec["position"] = to_string(r.position);
    rec["kind"] = r.whole_word ? "word" : "rule";
    out << rec.dump() << '\n';
  }
  write_file(path, out.str());
}

namespace {

bool position_ok(Position pos, size_t start, size_t pat_len, size_t tok_len) {
  switch (pos) {
    case Position::initial: return start == 0;
    case Position::final: return start + pat_len == tok_len;
    case Position::medial: return start > 0 && start + pat_len < tok_len;
    case Position::any: return true;
  }
  return false;
}

}  // namespace

std::vector<std::string> apply_rule(const std::string& token, const VariationRule& rule) {
  std::vector<std::string> out;
  if (rule.whole_word) {
    if (token == rule.pattern) out.push_back(rule.replacement);
    return out;
  }
  size_t start = 0;
  while ((start = token.find(rule.pattern, start)) != std::string::npos) {
    if (position_ok(rule.position, start, rule.pattern.size(), token.size())) {
      std::string v = token;
      v.replace(start, rule.pattern.size(), rule.replacement);
      if (v != token) out.push_back(std::move(v));
    }
    ++start;
  }
  return out;
}

bool VariantSet::contains(const std::string& v) const {
  return std::find(variants.begin(), variants.end(), v) != variants.end();
}

VariantSet token_variants(const std::string& token, const RuleSet& rules, size_t max_variants,
                          uint64_t seed) {
  if (max_variants < 1) throw InvalidArgument("max_variants must be >= 1");
  VariantSet vs;
  vs.base = token;

  std::set<std::string> seen;
  seen.insert(token);
  std::vector<std::string> singles, composites;
  std::vector<std::vector<size_t>> singles_rules, composites_rules;

  for (size_t i = 0; i < rules.rules.size(); ++i) {
    for (auto& v : apply_rule(token, rules.rules[i])) {
      if (!seen.insert(v).second) continue;
      singles.push_back(std::move(v));
      singles_rules.push_back({i});
    }
  }
  for (size_t i = 0; i < rules.rules.size(); ++i) {
    if (rules.rules[i].whole_word) continue;
    for (const auto& mid : apply_rule(token, rules.rules[i])) {
      for (size_t j = 0; j < rules.rules.size(); ++j) {
        if (rules.rules[j].whole_word) continue;
        for (auto& v : apply_rule(mid, rules.rules[j])) {
          if (!seen.insert(v).second) continue;
          composites.push_back(std::move(v));
          composites_rules.push_back({i, j});
        }
      }
    }
  }

  Rng rng(seed);
  auto shuffle_tier = [&](std::vector<std::string>& vars, std::vector<std::vector<size_t>>& rr) {
    std::vector<size_t> order(vars.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::string> v2(vars.size());
    std::vector<std::vector<size_t>> r2(vars.size());
    for (size_t i = 0; i < order.size(); ++i) {
      v2[i] = std::move(vars[order[i]]);
      r2[i] = std::move(rr[order[i]]);
    }
    vars = std::move(v2);
    rr = std::move(r2);
  };
  shuffle_tier(singles, singles_rules);
  shuffle_tier(composites, composites_rules);

  for (size_t i = 0; i < singles.size() && vs.variants.size() < max_variants; ++i) {
    vs.variants.push_back(std::move(singles[i]));
    vs.applied_rules.push_back(std::move(singles_rules[i]));
  }
  for (size_t i = 0; i < composites.size() && vs.variants.size() < max_variants; ++i) {
    vs.variants.push_back(std::move(composites[i]));
    vs.applied_rules.push_back(std::move(composites_rules[i]));
  }
  return vs;
}

namespace {

// Inverse word table: variant -> canonical plus anchors that pin each
// canonical form to itself (without "our" -> "our", normalize(normalize
// ("awa")) would rewrite the ou and break idempotence).
std::unordered_map<std::string, std::string> word_table(const RuleSet& rules) {
  std::unordered_map<std::string, std::string> t;
  for (const auto& r : rules.rules) {
    if (!r.whole_word) continue;
    t.emplace(r.replacement, r.pattern);
    t.emplace(r.pattern, r.pattern);
  }
  return t;
}

// Productive canonicalizing substitutions, longer patterns first so
// multi-grapheme rewrites are undone before their letters are touched
// individually.
constexpr std::pair<const char*, const char*> kCanonical[] = {
    {"bol", "ble"}, {"ou", "a"}, {"k", "c"}, {"o", "a"}};

}  // namespace

std::string normalize_token(const std::string& token, const RuleSet& rules) {
  const auto words = word_table(rules);
  if (auto it = words.find(token); it != words.end()) return it->second;

  std::string cur = token;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& [from, to] : kCanonical) {
      size_t pos = 0;
      const size_t flen = std::string(from).size();
      while ((pos = cur.find(from, pos)) != std::string::npos) {
        cur.replace(pos, flen, to);
        pos += std::string(to).size();
        changed = true;
      }
    }
  }
  return cur;
}

std::optional<std::pair<VariationClass, std::string>> classify_pair(const std::string& a,
                                                                    const std::string& b,
                                                                    const RuleSet& rules) {
  if (a == b) return std::nullopt;
  auto hit = [](const std::vector<std::string>& vs, const std::string& want) {
    return std::find(vs.begin(), vs.end(), want) != vs.end();
  };
  for (const auto& r : rules.rules) {
    if (hit(apply_rule(a, r), b) || hit(apply_rule(b, r), a))
      return std::make_pair(r.cls, r.subtype);
  }
  auto chain = [&](const std::string& from,
                   const std::string& to) -> std::optional<std::pair<VariationClass, std::string>> {
    for (const auto& r1 : rules.rules) {
      if (r1.whole_word) continue;
      for (const auto& mid : apply_rule(from, r1)) {
        for (const auto& r2 : rules.rules) {
          if (r2.whole_word) continue;
          if (hit(apply_rule(mid, r2), to)) return std::make_pair(r1.cls, r1.subtype);
        }
      }
    }
    return std::nullopt;
  };
  if (auto c = chain(a, b)) return c;
  return chain(b, a);
}

namespace {

constexpr size_t kAugmentMaxVariants = 8;

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower_or_nonalpha(char c) { return !is_upper(c); }

// One token: lowercases an initial capital for rule matching and restores it
// on the variant. Tokens with capitals elsewhere are left alone.
std::string augment_token(const std::string& token, const RuleSet& rules, Rng& rng,
                          bool force, bool* replaced) {
  std::string body = token;
  bool capped = false;
  if (!token.empty() && is_upper(token[0]) &&
      std::all_of(token.begin() + 1, token.end(), is_lower_or_nonalpha)) {
    capped = true;
    body[0] = static_cast<char>(token[0] - 'A' + 'a');
  } else if (std::any_of(token.begin(), token.end(), is_upper)) {
    return token;
  }
  auto vs = token_variants(body, rules, kAugmentMaxVariants, rng.next_u64());
  if (vs.empty()) return token;
  if (!force && !rng.bernoulli(0.5)) return token;
  std::string pick = vs.variants[rng.below(vs.variants.size())];
  if (capped && !pick.empty() && pick[0] >= 'a' && pick[0] <= 'z')
    pick[0] = static_cast<char>(pick[0] - 'a' + 'A');
  *replaced = true;
  return pick;
}

std::string augment_sentence(const std::string& sentence, const RuleSet& rules, Rng& rng) {
  auto tokens = str::split_ws(sentence);
  bool replaced = false;
  int forced = -1;
  auto out = tokens;
  for (size_t i = 0; i < tokens.size(); ++i)
    out[i] = augment_token(tokens[i], rules, rng, false, &replaced);
  if (!replaced) {
    // find the first augmentable token and force it so the copy differs
    for (size_t i = 0; i < tokens.size() && forced < 0; ++i) {
      bool r = false;
      auto v = augment_token(tokens[i], rules, rng, true, &r);
      if (r) {
        out[i] = v;
        forced = static_cast<int>(i);
      }
    }
    if (forced < 0) return sentence;  // nothing matched any rule
  }
  return str::join(out, " ");
}

}  // namespace

corpus::ParallelCorpus augment_corpus(const corpus::ParallelCorpus& corpus_in,
                                      const RuleSet& rules, double rate, uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw InvalidArgument("rate must be in [0, 1]");
  corpus::ParallelCorpus out = corpus_in;
  if (rate == 0.0) return out;
  Rng rng(seed);
  const corpus::LanguageTag pcm("pcm");
  for (const auto& p : corpus_in.pairs) {
    const bool src_is_pcm = p.src_lang == pcm;
    const bool tgt_is_pcm = p.tgt_lang == pcm;
    if (!src_is_pcm && !tgt_is_pcm) continue;
    if (!rng.bernoulli(rate)) continue;
    const std::string& side = src_is_pcm ? p.src : p.tgt;
    auto augmented = augment_sentence(side, rules, rng);
    if (augmented == side) continue;
    auto copy = p;
    (src_is_pcm ? copy.src : copy.tgt) = std::move(augmented);
    copy.source_name += "+ortho";
    out.pairs.push_back(std::move(copy));
  }
  return out;
}

corpus::MonoCorpus augment_corpus(const corpus::MonoCorpus& corpus_in, const RuleSet& rules,
                                  double rate, uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw InvalidArgument("rate must be in [0, 1]");
  corpus::MonoCorpus out = corpus_in;
  if (rate == 0.0) return out;
  Rng rng(seed);
  for (const auto& s : corpus_in.sentences) {
    if (!rng.bernoulli(rate)) continue;
    auto augmented = augment_sentence(s, rules, rng);
    if (augmented != s) out.sentences.push_back(std::move(augmented));
  }
  if (out.sentences.size() > corpus_in.sentences.size()) out.name += "+ortho";
  return out;
}

}  // namespace pcmkit::ortho
