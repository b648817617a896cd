#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pcmkit/corpus.hpp"

namespace pcmkit::ortho {

enum class VariationClass { alternation, conversion, transcription, deletion };

std::string to_string(VariationClass c);
VariationClass variation_class_from_string(const std::string& s);

enum class Position { initial, medial, final, any };

std::string to_string(Position p);
Position position_from_string(const std::string& s);

// One rewrite. Grapheme rules match `pattern` as a substring at the given
// position class; whole-word entries cover table rows that are not a single
// grapheme substitution (our-awa, whether-weda, different-difren) and match
// the entire token.
struct VariationRule {
  VariationClass cls = VariationClass::alternation;
  std::string subtype;      // table row label, e.g. "c/k"
  std::string pattern;      // lowercase; byte positions (patterns are ASCII)
  std::string replacement;  // empty for deletion rules
  Position position = Position::any;
  bool whole_word = false;

  void validate() const;
};

// Rules in documented scan order: alternation, transcription, conversion,
// deletion, then whole-word entries. classify_pair reports the first match
// in this order; transcription precedes conversion so a chain like
// trouble -> troubol -> trobol is credited to the multi-grapheme rewrite
// rather than to the ou/o step.
struct RuleSet {
  std::vector<VariationRule> rules;

  void validate() const;
};

RuleSet builtin_rules();

RuleSet load_rules(const std::string& path);
void save_rules(const RuleSet& rules, const std::string& path);

// Every result of rewriting one occurrence of the rule's pattern in `token`
// (one variant per matching occurrence); empty when the rule does not match.
// Whole-word entries yield their replacement only on an exact token match.
std::vector<std::string> apply_rule(const std::string& token, const VariationRule& rule);

struct VariantSet {
  std::string base;
  std::vector<std::string> variants;  // deduplicated, base excluded
  // rule indexes into RuleSet::rules that produced variants[i] (1 or 2 of them)
  std::vector<std::vector<size_t>> applied_rules;

  bool empty() const { return variants.empty(); }
  bool contains(const std::string& v) const;
};

// Single-rule variants first (scan order), then two-rule compositions of the
// grapheme rules; each tier is shuffled under `seed`, and the list is cut to
// max_variants. Same seed, same output.
VariantSet token_variants(const std::string& token, const RuleSet& rules, size_t max_variants,
                          uint64_t seed);

// Canonical form for variant collapsing. Whole-word lookups run first
// (difren -> different plus anchors keeping their outputs fixed), then the
// grapheme substitutions that have a productive canonicalizing direction
// (k->c, ou->a, bol->ble, o->a; longer patterns first) are applied
// left-to-right until a fixpoint. er/a and the deletions have no productive
// inverse (the deleted material is unrecoverable) and participate through
// the word table only. Idempotent by construction.
std::string normalize_token(const std::string& token, const RuleSet& rules);

// Class and subtype of the first rule (scan order) that rewrites a into b or
// b into a, directly or through a two-rule chain of grapheme rules; absent
// when no such connection exists.
std::optional<std::pair<VariationClass, std::string>> classify_pair(const std::string& a,
                                                                    const std::string& b,
                                                                    const RuleSet& rules);

// Originals plus augmented copies. Each sentence on the Pidgin side is
// selected with probability `rate`; inside a selected sentence every token
// with a non-empty variant set is replaced with probability 0.5 by a
// uniformly chosen variant, and at least one replacement is forced so a
// selected copy never silently equals its original. English sides are
// untouched; augmented pairs get a "+ortho" source_name suffix and keep
// their origin (augmentation is not back-translation).
corpus::ParallelCorpus augment_corpus(const corpus::ParallelCorpus& corpus,
                                      const RuleSet& rules, double rate, uint64_t seed);
corpus::MonoCorpus augment_corpus(const corpus::MonoCorpus& corpus, const RuleSet& rules,
                                  double rate, uint64_t seed);

}  // namespace pcmkit::ortho
