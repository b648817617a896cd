#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pcmkit/common.hpp"

namespace pcmkit::corpus {

// ISO 639-3 style code ("eng", "pcm"); must be registered.
struct LanguageTag {
  std::string code;

  LanguageTag() = default;
  explicit LanguageTag(std::string c);

  bool operator==(const LanguageTag& o) const { return code == o.code; }
  bool operator!=(const LanguageTag& o) const { return code != o.code; }
};

// Codes accepted by LanguageTag. "eng" and "pcm" are built in; tests and
// toy tasks may register more.
class LanguageRegistry {
 public:
  static bool contains(const std::string& code);
  static void add(const std::string& code);
};

enum class Origin { real, synthetic };

std::string to_string(Origin o);
Origin origin_from_string(const std::string& s);

struct SentencePair {
  std::string src;
  std::string tgt;
  LanguageTag src_lang;
  LanguageTag tgt_lang;
  Origin origin = Origin::real;
  std::string source_name;
  std::optional<std::string> key;
};

// The language pair is unordered: a direction-tagged corpus (e.g. the union
// of forward and reverse back-translations) holds pairs in both orientations.
struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  std::pair<LanguageTag, LanguageTag> langs;
  std::string name;

  size_t size() const { return pairs.size(); }
  bool accepts(const LanguageTag& a, const LanguageTag& b) const {
    return (langs.first == a && langs.second == b) || (langs.first == b && langs.second == a);
  }
};

struct MonoCorpus {
  std::vector<std::string> sentences;
  LanguageTag lang;
  std::string name;

  size_t size() const { return sentences.size(); }
};

struct SplitSpec {
  double train_frac = 0.8;
  double dev_frac = 0.1;
  double test_frac = 0.1;
  uint64_t seed = 0;

  void validate() const;
};

enum class ParallelFormat { jsonl, line_aligned };

// jsonl: `path` is the record file. line_aligned: `path` is the stem and the
// two files are `<path>.<lang-code>` with matched line counts.
ParallelCorpus ingest_parallel(const std::string& path, ParallelFormat format,
                               std::pair<LanguageTag, LanguageTag> langs,
                               const std::string& name = "");

MonoCorpus ingest_monolingual(const std::string& path, const LanguageTag& lang,
                              const std::string& name = "");

using KeyedSegment = std::pair<std::string, std::string>;  // (key, text)

struct AlignResult {
  ParallelCorpus corpus;
  std::vector<std::string> skipped;  // keys present in exactly one document
};

// Exact-match verse/segment alignment; pairs follow src document key order.
AlignResult align_by_key(const std::vector<KeyedSegment>& src_doc,
                         const std::vector<KeyedSegment>& tgt_doc,
                         std::pair<LanguageTag, LanguageTag> langs,
                         const std::string& name = "");

// "key<TAB>text" per line, for the CLI align subcommand.
std::vector<KeyedSegment> read_keyed_document(const std::string& path);

struct CleanStats {
  size_t kept = 0;
  size_t dropped_empty = 0;
  size_t dropped_length = 0;
  size_t dropped_ratio = 0;
};

struct CleanResult {
  ParallelCorpus corpus;
  CleanStats stats;
};

CleanResult clean_and_filter(const ParallelCorpus& corpus, size_t max_len = 200,
                             double max_ratio = 9.0);

ParallelCorpus deduplicate(const ParallelCorpus& corpus);

ParallelCorpus merge(const std::vector<ParallelCorpus>& corpora, const std::string& name = "");

struct SplitResult {
  ParallelCorpus train;
  ParallelCorpus dev;
  ParallelCorpus test;
};

// Deterministic shuffle under spec.seed, consecutive train/dev/test ranges,
// then train cut to its first floor(fraction * |train|) pairs. Smaller
// fractions are therefore prefixes (nested subsets) of larger ones.
SplitResult split_and_subsample(const ParallelCorpus& corpus, const SplitSpec& spec,
                                double fraction = 1.0);

// First floor(fraction * n) pairs of the seeded shuffle; the nested-subset
// property holds across fractions for a fixed seed.
ParallelCorpus subsample(const ParallelCorpus& corpus, double fraction, uint64_t seed);

// Canonical on-disk pair format: one JSON object per line with fields
// src, tgt, src_lang, tgt_lang, origin, source_name and optional key.
void write_jsonl(const ParallelCorpus& corpus, const std::string& path);
void write_line_aligned(const ParallelCorpus& corpus, const std::string& stem);
void write_monolingual(const MonoCorpus& corpus, const std::string& path);

}  // namespace pcmkit::corpus
