#include "pcmkit/tokenize.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace pcmkit::tok {

const std::array<const char*, kNumSpecials> kSpecialTokens = {
    "<pad>", "<unk>", "<bos>", "<eos>", "<2pcm>", "<2eng>", "<mask>"};

Vocabulary Vocabulary::with_specials() {
  Vocabulary v;
  for (const char* s : kSpecialTokens) v.add(s);
  return v;
}

int32_t Vocabulary::add(const std::string& token) {
  auto it = token_to_id.find(token);
  if (it != token_to_id.end()) return it->second;
  const auto id = static_cast<int32_t>(id_to_token.size());
  id_to_token.push_back(token);
  token_to_id.emplace(token, id);
  return id;
}

int32_t Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int32_t id) const {
  if (id < 0 || static_cast<size_t>(id) >= id_to_token.size())
    throw InvalidArgument("token id out of range: " + std::to_string(id));
  return id_to_token[static_cast<size_t>(id)];
}

std::string to_string(TokenizerKind k) { return k == TokenizerKind::word ? "word" : "bpe"; }

TokenizerKind tokenizer_kind_from_string(const std::string& s) {
  if (s == "word") return TokenizerKind::word;
  if (s == "bpe") return TokenizerKind::bpe;
  throw FormatError("unknown tokenizer kind: " + s);
}

void TokenizerSpec::validate() const {
  if ((kind == TokenizerKind::bpe) != merges.has_value())
    throw InvalidArgument("merge table must be present exactly for bpe tokenizers");
  if (vocab.size() < kNumSpecials) throw InvalidArgument("vocabulary lacks the special tokens");
  for (size_t i = 0; i < kNumSpecials; ++i) {
    if (vocab.id_to_token[i] != kSpecialTokens[i])
      throw InvalidArgument("specials must occupy the lowest ids in order");
  }
}

TokenizerSpec make_word_spec(Vocabulary vocab) {
  TokenizerSpec s;
  s.kind = TokenizerKind::word;
  s.vocab = std::move(vocab);
  s.validate();
  return s;
}

TokenizerSpec make_bpe_spec(Vocabulary vocab, MergeTable merges) {
  TokenizerSpec s;
  s.kind = TokenizerKind::bpe;
  s.vocab = std::move(vocab);
  s.merges = std::move(merges);
  s.validate();
  return s;
}

namespace {

std::map<std::string, int64_t> count_words(const std::vector<std::string>& sentences) {
  std::map<std::string, int64_t> counts;
  for (const auto& s : sentences)
    for (auto& t : str::split_ws(s)) ++counts[t];
  return counts;
}

}  // namespace

Vocabulary train_word_vocab(const std::vector<std::string>& sentences, size_t size) {
  if (size <= kNumSpecials)
    throw InvalidArgument("vocab size must exceed the special-token count");
  auto counts = count_words(sentences);
  if (counts.empty()) throw InvalidArgument("cannot train a vocabulary on an empty corpus");

  std::vector<std::pair<std::string, int64_t>> by_freq(counts.begin(), counts.end());
  std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  auto vocab = Vocabulary::with_specials();
  for (const auto& [token, n] : by_freq) {
    (void)n;
    if (vocab.size() >= size) break;
    vocab.add(token);
  }
  return vocab;
}

namespace {

struct BpeState {
  // symbol sequences per distinct word, with the word's corpus frequency
  std::vector<std::pair<std::vector<std::string>, int64_t>> words;
  std::vector<std::string> alphabet;  // sorted distinct initial symbols
};

BpeState init_bpe(const std::vector<std::string>& sentences, const std::string& marker) {
  auto counts = count_words(sentences);
  if (counts.empty()) throw InvalidArgument("cannot train a tokenizer on an empty corpus");
  BpeState st;
  std::map<std::string, bool> seen;
  for (const auto& [word, n] : counts) {
    std::vector<std::string> syms;
    for (char32_t cp : utf8::decode_all(word)) {
      std::string s;
      utf8::append(s, cp);
      syms.push_back(std::move(s));
    }
    syms.push_back(marker);
    for (const auto& s : syms) seen[s] = true;
    st.words.emplace_back(std::move(syms), n);
  }
  for (const auto& [s, used] : seen) {
    (void)used;
    st.alphabet.push_back(s);
  }
  return st;
}

// Best pair by (count, smallest concatenation, smallest left symbol); count
// must be at least 2 for a merge to happen.
std::optional<std::pair<std::string, std::string>> best_pair(const BpeState& st) {
  std::map<std::pair<std::string, std::string>, int64_t> pairs;
  for (const auto& [syms, n] : st.words)
    for (size_t i = 0; i + 1 < syms.size(); ++i) pairs[{syms[i], syms[i + 1]}] += n;

  int64_t best_count = 1;
  std::optional<std::pair<std::string, std::string>> best;
  std::string best_concat;
  for (const auto& [pr, count] : pairs) {
    if (count < 2) continue;
    const std::string concat = pr.first + pr.second;
    if (count > best_count || (count == best_count && (concat < best_concat ||
        (concat == best_concat && pr.first < best->first)))) {
      best_count = count;
      best = pr;
      best_concat = concat;
    }
  }
  return best;
}

void apply_merge(BpeState& st, const std::pair<std::string, std::string>& m) {
  const std::string joined = m.first + m.second;
  for (auto& [syms, n] : st.words) {
    (void)n;
    std::vector<std::string> out;
    out.reserve(syms.size());
    size_t i = 0;
    while (i < syms.size()) {
      if (i + 1 < syms.size() && syms[i] == m.first && syms[i + 1] == m.second) {
        out.push_back(joined);
        i += 2;
      } else {
        out.push_back(std::move(syms[i]));
        ++i;
      }
    }
    syms = std::move(out);
  }
}

std::pair<MergeTable, Vocabulary> run_bpe(const std::vector<std::string>& sentences,
                                          size_t max_merges, const std::string& marker,
                                          std::optional<size_t> target_size) {
  auto st = init_bpe(sentences, marker);
  if (target_size && *target_size < kNumSpecials + st.alphabet.size())
    throw InvalidArgument("target vocab size " + std::to_string(*target_size) +
                          " is below specials + alphabet (" +
                          std::to_string(kNumSpecials + st.alphabet.size()) + ")");

  MergeTable table;
  auto vocab = Vocabulary::with_specials();
  for (const auto& s : st.alphabet) vocab.add(s);

  while (table.size() < max_merges && (!target_size || vocab.size() < *target_size)) {
    auto m = best_pair(st);
    if (!m) break;
    apply_merge(st, *m);
    table.merges.push_back(*m);
    vocab.add(m->first + m->second);
  }
  return {std::move(table), std::move(vocab)};
}

}  // namespace

std::pair<MergeTable, Vocabulary> train_bpe(const std::vector<std::string>& sentences,
                                            size_t num_merges, const std::string& marker) {
  return run_bpe(sentences, num_merges, marker, std::nullopt);
}

std::pair<MergeTable, Vocabulary> train_bpe_vocab(const std::vector<std::string>& sentences,
                                                  size_t target_size,
                                                  const std::string& marker) {
  return run_bpe(sentences, SIZE_MAX, marker, target_size);
}

namespace {

std::vector<std::string> bpe_word_symbols(const std::string& word, const TokenizerSpec& spec) {
  std::vector<std::string> syms;
  for (char32_t cp : utf8::decode_all(word)) {
    std::string s;
    utf8::append(s, cp);
    syms.push_back(std::move(s));
  }
  syms.push_back(spec.end_of_word_marker);
  for (const auto& m : spec.merges->merges) {
    std::vector<std::string> out;
    out.reserve(syms.size());
    size_t i = 0;
    while (i < syms.size()) {
      if (i + 1 < syms.size() && syms[i] == m.first && syms[i + 1] == m.second) {
        out.push_back(m.first + m.second);
        i += 2;
      } else {
        out.push_back(std::move(syms[i]));
        ++i;
      }
    }
    syms = std::move(out);
  }
  return syms;
}

}  // namespace

std::vector<int32_t> encode(const std::string& text, const TokenizerSpec& spec,
                            bool add_bos_eos) {
  std::vector<int32_t> ids;
  if (add_bos_eos) ids.push_back(kBos);
  for (const auto& word : str::split_ws(text)) {
    if (spec.kind == TokenizerKind::word) {
      ids.push_back(spec.vocab.id_of(word));
    } else {
      for (const auto& sym : bpe_word_symbols(word, spec)) ids.push_back(spec.vocab.id_of(sym));
    }
  }
  if (add_bos_eos) ids.push_back(kEos);
  return ids;
}

std::string decode(const std::vector<int32_t>& ids, const TokenizerSpec& spec) {
  std::string out;
  for (int32_t id : ids) {
    const auto& token = spec.vocab.token_of(id);  // validates the id
    if (id < static_cast<int32_t>(kNumSpecials)) continue;
    if (spec.kind == TokenizerKind::word) {
      if (!out.empty()) out.push_back(' ');
      out += token;
    } else {
      out += token;
    }
  }
  if (spec.kind == TokenizerKind::bpe) {
    const auto& marker = spec.end_of_word_marker;
    std::string spaced;
    size_t i = 0;
    while (i < out.size()) {
      if (out.compare(i, marker.size(), marker) == 0) {
        spaced.push_back(' ');
        i += marker.size();
      } else {
        spaced.push_back(out[i]);
        ++i;
      }
    }
    out = std::move(spaced);
  }
  return str::normalize_ws(out);
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ostringstream out;
  for (const auto& t : vocab.id_to_token) out << t << '\n';
  write_file(path, out.str());
}

Vocabulary load_vocab(const std::string& path) {
  Vocabulary v;
  size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.empty()) throw FormatError("empty vocab entry at line " + std::to_string(line_no));
    if (v.token_to_id.count(line))
      throw FormatError("duplicate vocab entry at line " + std::to_string(line_no));
    v.add(line);
  }
  if (v.size() < kNumSpecials) throw FormatError("vocab file lacks the special tokens: " + path);
  return v;
}

void save_merges(const MergeTable& merges, const std::string& path) {
  std::ostringstream out;
  for (const auto& [l, r] : merges.merges) out << l << ' ' << r << '\n';
  write_file(path, out.str());
}

MergeTable load_merges(const std::string& path) {
  MergeTable t;
  size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (str::trim(line).empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 >= line.size())
      throw FormatError("malformed merge at line " + std::to_string(line_no) + " of " + path);
    t.merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  return t;
}

}  // namespace pcmkit::tok
