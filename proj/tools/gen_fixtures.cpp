// Regenerates the fixtures under tests/fixtures. Run manually when the model
// math or the toy corpora change on purpose:
//   gen_fixtures <output-dir>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pcmkit/adapt.hpp"
#include "pcmkit/corpus.hpp"
#include "pcmkit/model.hpp"
#include "pcmkit/rng.hpp"

using namespace pcmkit;

namespace {

// Must stay in sync with golden_batch() in tests/test_model.cpp.
model::Batch golden_batch() {
  return model::make_batch({{7, 8, 9, 10}, {11, 12}}, {{13, 14, 15}, {16}});
}

void write_logits(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(&t.rows), sizeof(t.rows));
  out.write(reinterpret_cast<const char*>(&t.cols), sizeof(t.cols));
  out.write(reinterpret_cast<const char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) {
    s += l;
    s += '\n';
  }
  write_file(path, s);
}

// --- sentiment toy task ---------------------------------------------------
//
// English carries most of the supervision; Pidgin has only a couple of
// labeled examples per class plus monolingual text. The Pidgin cue words are
// mostly unshared respellings, but each polarity has one anchor word shared
// with English, and the mono corpus places unshared cues next to their
// anchors so masked-LM pre-training can tie them together. That is the
// lexifier-overlap effect the adaptive pipeline is supposed to exploit.

struct Cues {
  std::vector<std::string> pos, neg, neu;
};

const Cues kEngCues = {{"good", "great", "sweet", "fine", "lovely"},
                       {"bad", "awful", "nasty", "sour", "poor"},
                       {"normal", "plain", "common", "usual", "regular"}};

// first entry of each list is the only cue that appears with a Pidgin
// label; the last is the anchor shared with English; the middle five only
// ever occur in the monolingual text
const Cues kPcmCues = {{"gud", "beta", "fain", "sweet"},
                       {"bahd", "wowo", "sawa", "nasty"},
                       {"nomal", "odinari", "komon", "plain"}};

const std::vector<std::string> kEngTemplates = {
    "the film was CUE", "the story was CUE really", "we found the book CUE",
    "it was a CUE film", "that show was so CUE"};

const std::vector<std::string> kPcmTemplates = {
    "di film dey CUE", "di tori CUE well", "we si di buk say e CUE"};

std::string fill(const std::string& tpl, const std::string& cue) {
  auto s = tpl;
  return s.replace(s.find("CUE"), 3, cue);
}

const std::vector<std::string>& cue_list(const Cues& c, int32_t label) {
  return label == 0 ? c.pos : label == 1 ? c.neg : c.neu;
}

void gen_sentiment(const std::string& dir) {
  std::filesystem::create_directories(dir);
  Rng rng(1207);

  adapt::LabeledSet train, dev, test;
  train.name = "sent.train";
  dev.name = "sent.dev";
  test.name = "sent.test";

  // 20 English examples per class: every cue under every template
  for (int32_t label = 0; label < 3; ++label)
    for (const auto& cue : cue_list(kEngCues, label))
      for (size_t t = 0; t + 1 < kEngTemplates.size(); ++t)
        train.examples.push_back({fill(kEngTemplates[t], cue), label});

  // 2 Pidgin examples per class, all inside two fixed frames with the
  // first cue only; dev adds the shared anchor and one more frame
  for (int32_t label = 0; label < 3; ++label)
    for (size_t t = 0; t < 2; ++t)
      train.examples.push_back({fill(kPcmTemplates[t], cue_list(kPcmCues, label)[0]), label});

  for (int32_t label = 0; label < 3; ++label) {
    const auto& cues = cue_list(kPcmCues, label);
    for (size_t t = 0; t < 3; ++t) {
      dev.examples.push_back({fill(kPcmTemplates[t], cues.front()), label});
      dev.examples.push_back({fill(kPcmTemplates[t], cues.back()), label});
    }
  }

  // monolingual Pidgin. Every sentence pairs two distinct same-class cue
  // words inside a combinatorially varied frame. A tiny transformer can
  // memorize a couple hundred fixed sentences without ever relating the
  // cue words, so the corpus has to be diverse enough that clustering
  // same-class cues is the cheapest route to low masked-LM loss.
  std::vector<std::string> mono;
  const std::vector<std::string> subjects = {
      "di film", "dis tori", "dat show", "di buk",
      "di food", "di musik", "im wok",   "dia haus"};
  const std::vector<std::string> shapes = {
      "SUBJ CUE1 and e CUE2",      "SUBJ dey CUE1 e dey CUE2",
      "SUBJ CUE1 well e CUE2 gan", "dem say SUBJ CUE1 as e CUE2",
      "SUBJ na CUE1 one e CUE2",   "we si SUBJ say e CUE1 e CUE2"};
  const std::vector<std::string> tails = {"",        " today",    " no be small",
                                          " sote",   " for us",   " for here",
                                          " pass",   " well well", " as we si am"};
  auto put = [](std::string s, const std::string& key, const std::string& val) {
    return s.replace(s.find(key), key.size(), val);
  };
  for (int32_t label = 0; label < 3; ++label) {
    const auto& cues = cue_list(kPcmCues, label);
    for (const auto& subj : subjects)
      for (const auto& shape : shapes)
        for (size_t a = 0; a < cues.size(); ++a)
          for (size_t b = 0; b < cues.size(); ++b) {
            if (a == b) continue;
            // favor pairs that include a supervised cue (the labeled first
            // entry or the shared anchor) so every unlabeled cue keeps
            // co-occurring with words the classifier will actually see
            const bool supervised = a == 0 || b == 0 || a + 1 == cues.size() || b + 1 == cues.size();
            if (rng.uniform01() > (supervised ? 0.9 : 0.45)) continue;
            auto s = put(put(put(shape, "SUBJ", subj), "CUE1", cues[a]), "CUE2", cues[b]);
            mono.push_back(s + tails[rng.below(tails.size())]);
          }
  }
  const std::vector<std::string> filler = {
      "di film start late for di house", "we si di show yesterday with dem",
      "dem bring di buk come say make we look", "di tori long well well",
      "dat one na di same film",
      "people plenty for di show today"};
  for (int round = 0; round < 3; ++round)
    for (const auto& f : filler) mono.push_back(f);
  rng.shuffle(mono);

  // test: the cue words that only ever occur in the monolingual text, set
  // inside frames that never occur in any labeled example. Without reading
  // the monolingual corpus these words are untrained embeddings and the
  // test cannot be beaten; the pretrained pipeline has seen them next to
  // their labeled class-mates.
  const std::vector<std::string> frames = {
      "SUBJ dey CUE TAIL",     "SUBJ CUE well TAIL",          "SUBJ na CUE one TAIL",
      "we si SUBJ say e CUE",  "dem say SUBJ CUE TAIL",       "SUBJ CUE pass TAIL",
      "SUBJ CUE no be small TAIL"};
  auto fits = [](size_t f, const std::string& subj) {
    // skip the combinations that reproduce a labeled or dev frame
    return !((f == 0 && subj == "di film") || (f == 1 && subj == "di tori") ||
             (f == 3 && subj == "di buk"));
  };
  for (int32_t label = 0; label < 3; ++label) {
    const auto& cues = cue_list(kPcmCues, label);
    for (size_t c = 1; c + 1 < cues.size(); ++c)
      for (size_t f = 0; f < frames.size(); ++f)
        for (const auto& subj : subjects) {
          if (!fits(f, subj) || rng.uniform01() > 0.6) continue;
          auto s = put(put(frames[f], "SUBJ", subj), "CUE", cues[c]);
          if (auto pos = s.find(" TAIL"); pos != std::string::npos)
            s = s.replace(pos, 5, tails[rng.below(tails.size())]);
          test.examples.push_back({s, label});
        }
  }
  rng.shuffle(train.examples);
  rng.shuffle(dev.examples);
  rng.shuffle(test.examples);

  adapt::write_labeled(train, dir + "/train.jsonl");
  adapt::write_labeled(dev, dir + "/dev.jsonl");
  adapt::write_labeled(test, dir + "/test.jsonl");
  write_lines(dir + "/mono.txt", mono);
  std::printf("sentiment: train=%zu dev=%zu test=%zu mono=%zu\n", train.size(), dev.size(),
              test.size(), mono.size());
}

// --- bilingual grammar toy task --------------------------------------------
//
// Word-for-word translatable sentences "the S V the O (A)". Train/dev/test
// and the two monolingual files are disjoint slices of one shuffled
// enumeration, so back-translation sees genuinely new sentences.

struct DictEntry {
  const char* eng;
  const char* pcm;
};

const std::vector<DictEntry> kNouns = {{"man", "man"},       {"woman", "woman"},
                                       {"child", "pikin"},   {"farmer", "fama"},
                                       {"teacher", "ticha"}, {"dog", "dog"}};
const std::vector<DictEntry> kVerbs = {
    {"see", "si"}, {"take", "tek"}, {"want", "wan"}, {"like", "laik"}, {"follow", "folo"}};
const std::vector<DictEntry> kAdvs = {
    {"today", "tude"}, {"now", "nau"}, {"again", "agen"}, {"quickly", "sharp"}};

void gen_grammar(const std::string& dir) {
  std::filesystem::create_directories(dir);

  std::vector<corpus::SentencePair> pairs;
  const corpus::LanguageTag eng("eng"), pcm("pcm");
  for (const auto& s : kNouns)
    for (const auto& v : kVerbs)
      for (const auto& o : kNouns) {
        if (std::string(s.eng) == o.eng) continue;
        for (int a = -1; a < static_cast<int>(kAdvs.size()); ++a) {
          corpus::SentencePair p;
          p.src = std::string("the ") + s.eng + " " + v.eng + " the " + o.eng;
          p.tgt = std::string("di ") + s.pcm + " " + v.pcm + " di " + o.pcm;
          if (a >= 0) {
            p.src += std::string(" ") + kAdvs[static_cast<size_t>(a)].eng;
            p.tgt += std::string(" ") + kAdvs[static_cast<size_t>(a)].pcm;
          }
          p.src_lang = eng;
          p.tgt_lang = pcm;
          p.source_name = "grammar";
          pairs.push_back(std::move(p));
        }
      }
  Rng rng(701);
  rng.shuffle(pairs);

  auto slice = [&](size_t from, size_t to, const std::string& name) {
    corpus::ParallelCorpus c;
    c.langs = {eng, pcm};
    c.name = name;
    c.pairs.assign(pairs.begin() + static_cast<std::ptrdiff_t>(from),
                   pairs.begin() + static_cast<std::ptrdiff_t>(to));
    return c;
  };
  const auto train = slice(0, 180, "grammar.train");
  const auto dev = slice(180, 210, "grammar.dev");
  const auto test = slice(210, 240, "grammar.test");

  std::vector<std::string> mono_eng, mono_pcm;
  for (size_t i = 240; i < 320; ++i) mono_eng.push_back(pairs[i].src);
  for (size_t i = 320; i < 400; ++i) mono_pcm.push_back(pairs[i].tgt);

  corpus::write_jsonl(train, dir + "/train.jsonl");
  corpus::write_jsonl(dev, dir + "/dev.jsonl");
  corpus::write_jsonl(test, dir + "/test.jsonl");
  write_lines(dir + "/mono_eng.txt", mono_eng);
  write_lines(dir + "/mono_pcm.txt", mono_pcm);
  std::printf("grammar: combos=%zu train=%zu dev=%zu test=%zu mono=%zu+%zu\n", pairs.size(),
              train.size(), test.size(), dev.size(), mono_eng.size(), mono_pcm.size());
}

// --- tokenizer round-trip corpus -------------------------------------------

void gen_roundtrip(const std::string& path) {
  const std::vector<std::string> pool = {
      "di",    "man",   "go",    "market", "today", "pikin", "chop", "rice",  "well",
      "dem",   "dey",   "house", "tori",   "sweet", "nau",   "wan",  "si",    "buk",
      "fama",  "ticha", "woman", "folo",   "dog",   "sharp", "agen", "small", "come",
      "bring", "show",  "film",  "na",     "one",   "chop",  "wok",  "moto",  "waka",
      "sabi",  "gud",   "nomal", "beta",   "s\xe1\xba\xb9",  "ch\xe1\xbb\x8dp"};
  Rng rng(99);
  std::vector<std::string> lines;
  for (int i = 0; i < 1000; ++i) {
    const size_t len = 3 + rng.below(10);
    std::string s;
    for (size_t w = 0; w < len; ++w) {
      if (w) s += ' ';
      s += pool[static_cast<size_t>(rng.below(pool.size()))];
    }
    lines.push_back(s);
  }
  write_lines(path, lines);
  std::printf("roundtrip corpus: %zu lines\n", lines.size());
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: gen_fixtures <output-dir>\n");
    return 2;
  }
  const std::string dir = argv[1];
  std::filesystem::create_directories(dir);

  const model::ModelConfig cfg;  // library defaults: 2-2 layers, d_model 32
  const auto ckpt = model::init_model(cfg, 1234);
  model::save_checkpoint(ckpt, dir + "/golden_ckpt.bin");
  write_logits(dir + "/golden_logits.bin", model::forward(ckpt, golden_batch()));
  std::printf("wrote golden_ckpt.bin and golden_logits.bin to %s\n", dir.c_str());

  gen_sentiment(dir + "/sentiment");
  gen_grammar(dir + "/grammar");
  gen_roundtrip(dir + "/roundtrip_1k.txt");
  return 0;
}
