#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pcmkit/common.hpp"

namespace pcmkit::tok {

// Special ids shared by every vocabulary. The direction tags let one model
// serve both translation directions; <mask> backs masked-LM pre-training.
inline constexpr int32_t kPad = 0, kUnk = 1, kBos = 2, kEos = 3, kToPcm = 4, kToEng = 5,
                         kMask = 6;
inline constexpr size_t kNumSpecials = 7;
extern const std::array<const char*, kNumSpecials> kSpecialTokens;

struct Vocabulary {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int32_t> token_to_id;

  static Vocabulary with_specials();

  int32_t add(const std::string& token);  // no-op if present, returns id
  // kUnk when the token is unknown
  int32_t id_of(const std::string& token) const;
  const std::string& token_of(int32_t id) const;  // throws on out-of-range ids
  size_t size() const { return id_to_token.size(); }
};

struct MergeTable {
  std::vector<std::pair<std::string, std::string>> merges;

  size_t size() const { return merges.size(); }
};

enum class TokenizerKind { word, bpe };

std::string to_string(TokenizerKind k);
TokenizerKind tokenizer_kind_from_string(const std::string& s);

struct TokenizerSpec {
  TokenizerKind kind = TokenizerKind::word;
  Vocabulary vocab;
  std::optional<MergeTable> merges;  // present iff kind == bpe
  std::string end_of_word_marker = "</w>";

  void validate() const;
};

TokenizerSpec make_word_spec(Vocabulary vocab);
TokenizerSpec make_bpe_spec(Vocabulary vocab, MergeTable merges);

// Most frequent whitespace tokens up to `size` total entries (specials
// included); ties broken lexicographically.
Vocabulary train_word_vocab(const std::vector<std::string>& sentences, size_t size);

// Classic greedy BPE over character sequences with a separate end-of-word
// symbol. Ties between equally frequent pairs go to the lexicographically
// smallest concatenation (then smallest left symbol); training stops early
// when no adjacent pair occurs twice. Vocabulary layout: specials, then the
// character inventory in sorted order, then merge outputs in learned order.
std::pair<MergeTable, Vocabulary> train_bpe(const std::vector<std::string>& sentences,
                                            size_t num_merges,
                                            const std::string& marker = "</w>");

// Runs merges until the vocabulary reaches target_size exactly (or the
// corpus runs out of repeating pairs, in which case the result is smaller).
std::pair<MergeTable, Vocabulary> train_bpe_vocab(const std::vector<std::string>& sentences,
                                                  size_t target_size,
                                                  const std::string& marker = "</w>");

std::vector<int32_t> encode(const std::string& text, const TokenizerSpec& spec,
                            bool add_bos_eos);
// Inverse of encode up to whitespace normalization; specials are stripped
// and end-of-word markers become spaces.
std::string decode(const std::vector<int32_t>& ids, const TokenizerSpec& spec);

// One token per line, id = line index.
void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);

// One "left right" pair per line in merge order.
void save_merges(const MergeTable& merges, const std::string& path);
MergeTable load_merges(const std::string& path);

}  // namespace pcmkit::tok
