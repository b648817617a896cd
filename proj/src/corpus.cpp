#include "pcmkit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "pcmkit/rng.hpp"

#include <json.hpp>

namespace pcmkit::corpus {

using json = nlohmann::ordered_json;

namespace {

std::set<std::string>& registry() {
  static std::set<std::string> langs = {"eng", "pcm"};
  return langs;
}
std::mutex registry_mutex;

std::string clean_text(std::string_view raw) {
  return str::normalize_ws(str::strip_control(utf8::compose_nfc(raw)));
}

}  // namespace

LanguageTag::LanguageTag(std::string c) : code(std::move(c)) {
  if (code.empty()) throw InvalidArgument("language code must be non-empty");
  for (char ch : code) {
    if (ch >= 'A' && ch <= 'Z') throw InvalidArgument("language code must be lowercase: " + code);
  }
  if (!LanguageRegistry::contains(code))
    throw InvalidArgument("language code not registered: " + code);
}

bool LanguageRegistry::contains(const std::string& code) {
  std::lock_guard<std::mutex> lock(registry_mutex);
  return registry().count(code) != 0;
}

void LanguageRegistry::add(const std::string& code) {
  std::lock_guard<std::mutex> lock(registry_mutex);
  registry().insert(code);
}

std::string to_string(Origin o) { return o == Origin::real ? "real" : "synthetic"; }

Origin origin_from_string(const std::string& s) {
  if (s == "real") return Origin::real;
  if (s == "synthetic") return Origin::synthetic;
  throw FormatError("unknown origin value: " + s);
}

void SplitSpec::validate() const {
  if (train_frac < 0 || dev_frac < 0 || test_frac < 0)
    throw InvalidArgument("split fractions must be non-negative");
  const double sum = train_frac + dev_frac + test_frac;
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidArgument("split fractions must sum to 1, got " + std::to_string(sum));
}

namespace {

SentencePair pair_from_json(const json& rec, size_t line_no) {
  SentencePair p;
  try {
    p.src = clean_text(rec.at("src").get<std::string>());
    p.tgt = clean_text(rec.at("tgt").get<std::string>());
    p.src_lang = LanguageTag(rec.at("src_lang").get<std::string>());
    p.tgt_lang = LanguageTag(rec.at("tgt_lang").get<std::string>());
    p.origin = rec.contains("origin") ? origin_from_string(rec["origin"].get<std::string>())
                                      : Origin::real;
    p.source_name = rec.value("source_name", "");
    if (rec.contains("key") && !rec["key"].is_null())
      p.key = rec["key"].get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError("malformed record at line " + std::to_string(line_no) + ": " + e.what());
  }
  if (p.src_lang == p.tgt_lang)
    throw FormatError("src_lang equals tgt_lang at line " + std::to_string(line_no));
  return p;
}

}  // namespace

ParallelCorpus ingest_parallel(const std::string& path, ParallelFormat format,
                               std::pair<LanguageTag, LanguageTag> langs,
                               const std::string& name) {
  ParallelCorpus out;
  out.langs = langs;
  out.name = name.empty() ? path : name;

  if (format == ParallelFormat::jsonl) {
    const auto lines = read_lines(path);
    size_t line_no = 0;
    for (const auto& line : lines) {
      ++line_no;
      if (str::trim(line).empty()) continue;
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::exception& e) {
        throw FormatError("malformed record at line " + std::to_string(line_no) + ": " +
                          e.what());
      }
      auto p = pair_from_json(rec, line_no);
      if (!out.accepts(p.src_lang, p.tgt_lang))
        throw FormatError("language pair mismatch at line " + std::to_string(line_no));
      out.pairs.push_back(std::move(p));
    }
    return out;
  }

  const std::string src_path = path + "." + langs.first.code;
  const std::string tgt_path = path + "." + langs.second.code;
  const auto src_lines = read_lines(src_path);
  const auto tgt_lines = read_lines(tgt_path);
  if (src_lines.size() != tgt_lines.size()) {
    const size_t first_bad = std::min(src_lines.size(), tgt_lines.size()) + 1;
    throw FormatError("alignment error at line " + std::to_string(first_bad) + ": " + src_path +
                      " has " + std::to_string(src_lines.size()) + " lines, " + tgt_path +
                      " has " + std::to_string(tgt_lines.size()));
  }
  for (size_t i = 0; i < src_lines.size(); ++i) {
    SentencePair p;
    p.src = clean_text(src_lines[i]);
    p.tgt = clean_text(tgt_lines[i]);
    p.src_lang = langs.first;
    p.tgt_lang = langs.second;
    p.origin = Origin::real;
    p.source_name = out.name;
    out.pairs.push_back(std::move(p));
  }
  return out;
}

MonoCorpus ingest_monolingual(const std::string& path, const LanguageTag& lang,
                              const std::string& name) {
  MonoCorpus out;
  out.lang = lang;
  out.name = name.empty() ? path : name;
  const bool jsonl = str::ends_with(path, ".jsonl");
  size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (str::trim(line).empty()) continue;
    if (jsonl) {
      json rec;
      try {
        rec = json::parse(line);
        std::string text = rec.at("text").get<std::string>();
        if (rec.contains("lang") && rec["lang"].get<std::string>() != lang.code)
          throw FormatError("lang mismatch at line " + std::to_string(line_no));
        text = clean_text(text);
        if (!text.empty()) out.sentences.push_back(std::move(text));
      } catch (const json::exception& e) {
        throw FormatError("malformed record at line " + std::to_string(line_no) + ": " +
                          e.what());
      }
    } else {
      auto text = clean_text(line);
      if (!text.empty()) out.sentences.push_back(std::move(text));
    }
  }
  return out;
}

AlignResult align_by_key(const std::vector<KeyedSegment>& src_doc,
                         const std::vector<KeyedSegment>& tgt_doc,
                         std::pair<LanguageTag, LanguageTag> langs, const std::string& name) {
  auto check_unique = [](const std::vector<KeyedSegment>& doc, const char* side) {
    std::unordered_set<std::string> seen;
    for (const auto& [key, text] : doc) {
      (void)text;
      if (!seen.insert(key).second)
        throw FormatError(std::string("duplicate key in ") + side + " document: " + key);
    }
  };
  check_unique(src_doc, "source");
  check_unique(tgt_doc, "target");

  std::unordered_map<std::string, const std::string*> tgt_by_key;
  tgt_by_key.reserve(tgt_doc.size());
  for (const auto& [key, text] : tgt_doc) tgt_by_key[key] = &text;

  AlignResult result;
  result.corpus.langs = langs;
  result.corpus.name = name;
  std::unordered_set<std::string> matched;
  for (const auto& [key, text] : src_doc) {
    auto it = tgt_by_key.find(key);
    if (it == tgt_by_key.end()) {
      result.skipped.push_back(key);
      continue;
    }
    matched.insert(key);
    SentencePair p;
    p.src = clean_text(text);
    p.tgt = clean_text(*it->second);
    p.src_lang = langs.first;
    p.tgt_lang = langs.second;
    p.origin = Origin::real;
    p.source_name = name;
    p.key = key;
    result.corpus.pairs.push_back(std::move(p));
  }
  for (const auto& [key, text] : tgt_doc) {
    (void)text;
    if (!matched.count(key)) result.skipped.push_back(key);
  }
  return result;
}

std::vector<KeyedSegment> read_keyed_document(const std::string& path) {
  std::vector<KeyedSegment> out;
  size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (str::trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError("missing tab separator at line " + std::to_string(line_no) + " of " +
                        path);
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

CleanResult clean_and_filter(const ParallelCorpus& corpus, size_t max_len, double max_ratio) {
  if (max_len < 1) throw InvalidArgument("max_len must be >= 1");
  if (max_ratio < 1.0) throw InvalidArgument("max_ratio must be >= 1");
  CleanResult result;
  result.corpus.langs = corpus.langs;
  result.corpus.name = corpus.name;
  for (const auto& pair : corpus.pairs) {
    SentencePair p = pair;
    p.src = clean_text(p.src);
    p.tgt = clean_text(p.tgt);
    if (p.src.empty() || p.tgt.empty()) {
      ++result.stats.dropped_empty;
      continue;
    }
    const auto src_len = str::split_ws(p.src).size();
    const auto tgt_len = str::split_ws(p.tgt).size();
    if (src_len > max_len || tgt_len > max_len) {
      ++result.stats.dropped_length;
      continue;
    }
    const double ratio = static_cast<double>(std::max(src_len, tgt_len)) /
                         static_cast<double>(std::min(src_len, tgt_len));
    if (ratio > max_ratio) {
      ++result.stats.dropped_ratio;
      continue;
    }
    result.corpus.pairs.push_back(std::move(p));
    ++result.stats.kept;
  }
  return result;
}

ParallelCorpus deduplicate(const ParallelCorpus& corpus) {
  ParallelCorpus out;
  out.langs = corpus.langs;
  out.name = corpus.name;
  std::unordered_set<std::string> seen;
  seen.reserve(corpus.pairs.size());
  for (const auto& p : corpus.pairs) {
    // \x1f never survives control stripping, so the join is unambiguous
    std::string key = p.src + '\x1f' + p.tgt;
    if (seen.insert(std::move(key)).second) out.pairs.push_back(p);
  }
  return out;
}

ParallelCorpus merge(const std::vector<ParallelCorpus>& corpora, const std::string& name) {
  ParallelCorpus out;
  out.name = name;
  if (corpora.empty()) return out;
  out.langs = corpora.front().langs;
  for (const auto& c : corpora) {
    if (!out.accepts(c.langs.first, c.langs.second))
      throw InvalidArgument("language pair mismatch merging corpus '" + c.name + "'");
    for (const auto& p : c.pairs) out.pairs.push_back(p);
  }
  return deduplicate(out);
}

SplitResult split_and_subsample(const ParallelCorpus& corpus, const SplitSpec& spec,
                                double fraction) {
  spec.validate();
  if (fraction <= 0.0 || fraction > 1.0)
    throw InvalidArgument("fraction must be in (0, 1], got " + std::to_string(fraction));

  std::vector<size_t> order(corpus.pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(order);

  const auto n = corpus.pairs.size();
  const auto n_train = static_cast<size_t>(std::floor(spec.train_frac * static_cast<double>(n)));
  const auto n_dev = static_cast<size_t>(std::floor(spec.dev_frac * static_cast<double>(n)));
  const auto n_test = n - n_train - n_dev;
  if (n_train == 0 || n_dev == 0 || n_test == 0)
    throw InvalidArgument("empty split: " + std::to_string(n_train) + "/" +
                          std::to_string(n_dev) + "/" + std::to_string(n_test));

  const auto n_sub = static_cast<size_t>(std::floor(fraction * static_cast<double>(n_train)));
  if (n_sub == 0) throw InvalidArgument("empty train split after subsampling");

  auto take = [&](size_t begin, size_t count, const std::string& suffix) {
    ParallelCorpus c;
    c.langs = corpus.langs;
    c.name = corpus.name.empty() ? suffix : corpus.name + "." + suffix;
    c.pairs.reserve(count);
    for (size_t i = 0; i < count; ++i) c.pairs.push_back(corpus.pairs[order[begin + i]]);
    return c;
  };

  SplitResult result;
  result.train = take(0, n_sub, "train");
  result.dev = take(n_train, n_dev, "dev");
  result.test = take(n_train + n_dev, n_test, "test");
  return result;
}

ParallelCorpus subsample(const ParallelCorpus& corpus, double fraction, uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw InvalidArgument("fraction must be in (0, 1], got " + std::to_string(fraction));
  std::vector<size_t> order(corpus.pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_sub =
      static_cast<size_t>(std::floor(fraction * static_cast<double>(corpus.pairs.size())));
  ParallelCorpus out;
  out.langs = corpus.langs;
  out.name = corpus.name;
  out.pairs.reserve(n_sub);
  for (size_t i = 0; i < n_sub; ++i) out.pairs.push_back(corpus.pairs[order[i]]);
  return out;
}

void write_jsonl(const ParallelCorpus& corpus, const std::string& path) {
  std::ostringstream out;
  for (const auto& p : corpus.pairs) {
    json rec;
    rec["src"] = p.src;
    rec["tgt"] = p.tgt;
    rec["src_lang"] = p.src_lang.code;
    rec["tgt_lang"] = p.tgt_lang.code;
    rec["origin"] = to_string(p.origin);
    rec["source_name"] = p.source_name;
    if (p.key) rec["key"] = *p.key;
    out << rec.dump() << '\n';
  }
  write_file(path, out.str());
}

void write_line_aligned(const ParallelCorpus& corpus, const std::string& stem) {
  std::ostringstream src_out, tgt_out;
  for (const auto& p : corpus.pairs) {
    if (p.src_lang != corpus.langs.first)
      throw InvalidArgument("line-aligned export requires uniformly oriented pairs");
    src_out << p.src << '\n';
    tgt_out << p.tgt << '\n';
  }
  write_file(stem + "." + corpus.langs.first.code, src_out.str());
  write_file(stem + "." + corpus.langs.second.code, tgt_out.str());
}

void write_monolingual(const MonoCorpus& corpus, const std::string& path) {
  std::ostringstream out;
  for (const auto& s : corpus.sentences) out << s << '\n';
  write_file(path, out.str());
}

}  // namespace pcmkit::corpus
