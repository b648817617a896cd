// Acceptance suite: one PASS/FAIL line per criterion, each with its elapsed
// time and wall-clock budget. Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pcmkit/adapt.hpp"
#include "pcmkit/cli.hpp"
#include "pcmkit/corpus.hpp"
#include "pcmkit/eval.hpp"
#include "pcmkit/model.hpp"
#include "pcmkit/ortho.hpp"
#include "pcmkit/rng.hpp"
#include "pcmkit/tokenize.hpp"

using namespace pcmkit;

namespace {

const std::string kTestDir = PCMKIT_TEST_DIR;

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& msg) {
    if (!cond && ok) {
      ok = false;
      detail = msg;
    }
  }
  void note(const std::string& msg) {
    if (ok) detail = msg;
  }
};

std::string fmt(const char* f, ...) {
  char buf[256];
  va_list args;
  va_start(args, f);
  vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

double cell_mean(const eval::EvalReport& report, const std::string& cell,
                 const std::string& metric) {
  double sum = 0.0;
  int n = 0;
  for (const auto& row : report.rows)
    if (row.cell == cell && row.metric == metric) {
      sum += row.value;
      ++n;
    }
  if (n == 0) throw InvalidArgument("no report rows for cell " + cell);
  return sum / n;
}

// 4 subjects x 4 verbs x 4 objects, word-for-word English -> Pidgin.
corpus::ParallelCorpus toy_corpus() {
  const char* esub[] = {"the man", "the woman", "the child", "the people"};
  const char* psub[] = {"di man", "di woman", "di pikin", "di pipu"};
  const char* everb[] = {"see", "take", "want", "like"};
  const char* pverb[] = {"si", "karry", "wan", "laik"};
  const char* eobj[] = {"rice", "water", "money", "fish"};
  const char* pobj[] = {"rais", "wota", "moni", "fish"};

  corpus::ParallelCorpus pc;
  pc.langs = {corpus::LanguageTag("eng"), corpus::LanguageTag("pcm")};
  pc.name = "toy";
  for (int s = 0; s < 4; ++s)
    for (int v = 0; v < 4; ++v)
      for (int o = 0; o < 4; ++o) {
        corpus::SentencePair p;
        p.src = std::string(esub[s]) + " " + everb[v] + " " + eobj[o];
        p.tgt = std::string(psub[s]) + " " + pverb[v] + " " + pobj[o];
        p.src_lang = corpus::LanguageTag("eng");
        p.tgt_lang = corpus::LanguageTag("pcm");
        p.source_name = "toy";
        pc.pairs.push_back(std::move(p));
      }
  return pc;
}

tok::TokenizerSpec toy_spec(const corpus::ParallelCorpus& pc) {
  std::vector<std::string> sents;
  for (const auto& p : pc.pairs) {
    sents.push_back(p.src);
    sents.push_back(p.tgt);
  }
  return tok::make_word_spec(tok::train_word_vocab(sents, 64));
}

Check c1_orthography() {
  Check c;
  struct Row {
    const char* base;
    const char* variant;
    ortho::VariationClass cls;
    const char* subtype;
  };
  const Row rows[] = {
      {"carry", "karry", ortho::VariationClass::alternation, "c/k"},
      {"call", "coll", ortho::VariationClass::alternation, "a/o"},
      {"our", "awa", ortho::VariationClass::conversion, "ou/a"},
      {"your", "yor", ortho::VariationClass::conversion, "ou/o"},
      {"trouble", "trobol", ortho::VariationClass::transcription, "bl/bol"},
      {"whether", "weda", ortho::VariationClass::transcription, "er/a"},
      {"he", "e", ortho::VariationClass::deletion, "initial"},
      {"different", "difren", ortho::VariationClass::deletion, "medial"},
  };
  const auto rs = ortho::builtin_rules();
  for (const auto& r : rows) {
    const auto vs = ortho::token_variants(r.base, rs, 64, 1);
    c.require(vs.contains(r.variant),
              std::string(r.base) + " -> " + r.variant + " not generated");
    const auto cls = ortho::classify_pair(r.base, r.variant, rs);
    c.require(cls.has_value() && cls->first == r.cls && cls->second == r.subtype,
              std::string(r.base) + "/" + r.variant + " misclassified");
  }
  c.note("8/8 variation-table pairs generated and classified");
  return c;
}

Check c2_bleu_oracle() {
  Check c;
  const std::vector<std::vector<std::string>> self = {
      words("dem don go market"),
      words("she dey come"),
      words("wetin you wan chop this evening for house"),
  };
  c.require(eval::corpus_bleu(self, self).score == 100.0, "identity corpus must score exactly 100");

  const std::vector<std::vector<std::string>> h0 = {words("a b c d")};
  const std::vector<std::vector<std::string>> r0 = {words("w x y z")};
  c.require(eval::corpus_bleu(h0, r0).score == 0.0, "zero overlap must score 0");
  c.require(eval::corpus_bleu(h0, r0, 4, eval::Smoothing::add_k).score == 0.0,
            "zero overlap must score 0 under smoothing");

  // clipped fixture: p = (1/7, 1/7, 1/6, 1/5), bp = 1, 100 * (1/1470)^(1/4)
  const std::vector<std::vector<std::string>> h1 = {words("the the the the the the the")};
  const std::vector<std::vector<std::string>> r1 = {words("the cat sat")};
  const double got = eval::corpus_bleu(h1, r1, 4, eval::Smoothing::add_k, 1.0).score;
  const double want = 100.0 * std::pow(1.0 / 1470.0, 0.25);
  c.require(std::abs(got - want) < 1e-6,
            fmt("clipped fixture got %.10f, want %.10f", got, want));

  std::vector<std::vector<std::string>> hyp = {
      words("di man chop rice"), words("rain dey fall"),       words("im sabi book well well"),
      words("una go soon"),      words("the cat sat"),         words("dem carry am go"),
      words("one two three"),    words("make we dey go home"),
  };
  std::vector<std::vector<std::string>> ref = {
      words("di man chop beans"), words("rain go fall"),     words("im sabi book"),
      words("una don go soon"),   words("a cat sat down"),   words("dem karry am come"),
      words("one two four five"), words("make we go house"),
  };
  const double base = eval::corpus_bleu(hyp, ref, 4, eval::Smoothing::add_k).score;
  Rng rng(911);
  std::vector<size_t> idx(hyp.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  for (int trial = 0; trial < 100; ++trial) {
    rng.shuffle(idx);
    std::vector<std::vector<std::string>> h2, r2;
    for (size_t i : idx) {
      h2.push_back(hyp[i]);
      r2.push_back(ref[i]);
    }
    c.require(eval::corpus_bleu(h2, r2, 4, eval::Smoothing::add_k).score == base,
              fmt("shuffle %d changed the corpus score", trial));
  }
  c.note("identity, zero-overlap, clipped fixture, 100 shuffles");
  return c;
}

Check c3_bpe() {
  Check c;
  std::vector<std::string> tiny;
  auto rep = [&tiny](const char* w, int n) {
    for (int i = 0; i < n; ++i) tiny.emplace_back(w);
  };
  rep("low", 5);
  rep("lower", 2);
  rep("newest", 6);
  rep("widest", 3);
  const auto [m1, v1] = tok::train_bpe(tiny, 1);
  c.require(m1.merges.size() == 1 &&
                m1.merges[0] == std::make_pair(std::string("e"), std::string("s")),
            "first merge on the low/lower/newest/widest corpus must be (e,s)");

  std::vector<std::string> lines;
  std::ifstream in(kTestDir + "/fixtures/roundtrip_1k.txt");
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  c.require(lines.size() == 1000, fmt("fixture holds %zu sentences, want 1000", lines.size()));

  const auto [merges, vocab] = tok::train_bpe(lines, 300);
  const auto spec = tok::make_bpe_spec(vocab, merges);
  size_t bad = 0;
  for (const auto& s : lines)
    if (tok::decode(tok::encode(s, spec, false), spec) != s) ++bad;
  c.require(bad == 0, fmt("%zu of 1000 sentences fail decode(encode(s)) == s", bad));

  const auto [m2, v2] = tok::train_bpe(lines, 300);
  c.require(m2.merges == merges.merges, "merge table differs between identical runs");
  c.note(fmt("first merge (e,s); 1000/1000 round trips; %zu merges reproduced", merges.size()));
  return c;
}

Check c4_grad_check() {
  Check c;
  model::ModelConfig cfg;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.heads = 2;
  cfg.d_model = 32;
  cfg.d_ff = 64;
  cfg.vocab_size = 100;
  cfg.max_len = 16;
  cfg.f64_grid = true;
  const auto ckpt = model::init_model(cfg, 4242);

  const auto batch =
      model::make_batch({{7, 8, 9, 10, 11}, {12, 13, 14}}, {{15, 16, 17}, {18, 19, 20, 21}});
  const double e_s2s = model::grad_check(ckpt, batch, 1e-4, 200, 7);

  model::MlmBatch mb;
  mb.batch = 2;
  mb.seq_len = 5;
  mb.ids = {7, tok::kMask, 9, 10, 11, 12, 13, tok::kMask, 0, 0};
  mb.lens = {5, 3};
  mb.positions = {1, 7};
  mb.labels = {8, 14};
  const double e_mlm = model::grad_check(ckpt, mb, 1e-4, 200, 8);

  const auto cb = model::make_cls_batch({{7, 8, 9, 10}, {11, 12}}, {0, 2});
  const double e_cls = model::grad_check(ckpt, cb, 1e-4, 200, 9);

  c.require(e_s2s < 1e-4, fmt("seq2seq max rel err %.3e", e_s2s));
  c.require(e_mlm < 1e-4, fmt("mlm max rel err %.3e", e_mlm));
  c.require(e_cls < 1e-4, fmt("classification max rel err %.3e", e_cls));
  c.note(fmt("200 params each; max rel err s2s %.1e, mlm %.1e, cls %.1e", e_s2s, e_mlm, e_cls));
  return c;
}

Check c5_overfit() {
  Check c;
  const auto train = toy_corpus();
  const auto spec = toy_spec(train);

  model::ModelConfig cfg;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.heads = 2;
  cfg.d_model = 32;
  cfg.d_ff = 64;
  cfg.vocab_size = static_cast<int64_t>(spec.vocab.size());
  cfg.max_len = 16;

  adapt::StagePlan plan;
  plan.stage = adapt::Stage::ft;
  plan.epochs = 250;  // 64 pairs / batch 8 = 8 steps per epoch, 2000 total
  plan.batch_size = 8;
  plan.hyper.lr = 3e-3;
  plan.hyper.warmup = 20;
  plan.seed = 5;

  const auto fwd =
      adapt::make_direction(corpus::LanguageTag("eng"), corpus::LanguageTag("pcm"));
  corpus::ParallelCorpus dev;
  dev.langs = train.langs;
  dev.name = "toy-dev";

  const auto res = adapt::finetune(model::init_model(cfg, 5), train, dev, {fwd}, spec, plan);
  c.require(res.losses.size() == 2000, fmt("expected 2000 steps, ran %zu", res.losses.size()));
  double last_epoch = 0.0;
  for (size_t i = res.losses.size() - 8; i < res.losses.size(); ++i) last_epoch += res.losses[i];
  last_epoch /= 8.0;
  c.require(last_epoch < 0.1, fmt("final-epoch per-token loss %.4f, want < 0.1", last_epoch));

  model::DecodeConfig dec;
  dec.max_len = 8;
  int exact = 0;
  for (const auto& p : train.pairs)
    if (adapt::translate_text(res.ckpt, p.src, fwd, spec, dec) == p.tgt) ++exact;
  c.require(exact >= 58, fmt("%d/64 exact greedy decodes, want >= 58", exact));

  const double bleu = adapt::evaluate_bleu(res.ckpt, train, fwd, spec, dec);
  c.require(bleu >= 90.0, fmt("train BLEU %.2f, want >= 90", bleu));
  c.note(fmt("loss %.4f, %d/64 exact, train BLEU %.1f", last_epoch, exact, bleu));
  return c;
}

Check c6_cat_ordering() {
  Check c;
  setenv("PCMKIT_DATA_DIR", (kTestDir + "/fixtures").c_str(), 1);
  const auto grid = cli::load_grid(kTestDir + "/../configs/grid-sentiment.json");
  const auto res = adapt::run_experiment(grid.cells, grid.plans, grid.registry, grid.spec);
  c.require(res.failures.empty(),
            res.failures.empty() ? "" : "cell failed: " + res.failures[0]);
  if (!c.ok) return c;
  const double init = cell_mean(res.report, "init", "macro_f1");
  const double cat = cell_mean(res.report, "cat", "macro_f1");
  c.require(cat - init >= 5.0,
            fmt("mean F1 init %.2f vs cat %.2f, gap %.2f < 5", init, cat, cat - init));
  c.note(fmt("mean F1 over 3 seeds: init %.2f, cat %.2f, gap +%.2f", init, cat, cat - init));
  return c;
}

Check c7_tat_ordering() {
  Check c;
  setenv("PCMKIT_DATA_DIR", (kTestDir + "/fixtures").c_str(), 1);
  const auto grid = cli::load_grid(kTestDir + "/../configs/grid-translation.json");
  const auto res = adapt::run_experiment(grid.cells, grid.plans, grid.registry, grid.spec);
  c.require(res.failures.empty(),
            res.failures.empty() ? "" : "cell failed: " + res.failures[0]);
  if (!c.ok) return c;
  const double ft02 = cell_mean(res.report, "ft-0.2", "bleu");
  const double tat02 = cell_mean(res.report, "tat-0.2", "bleu");
  const double ft10 = cell_mean(res.report, "ft-1.0", "bleu");
  const double tat10 = cell_mean(res.report, "tat-1.0", "bleu");
  c.require(tat02 > ft02, fmt("at 20%% data: ft %.2f, tat %.2f, no improvement", ft02, tat02));
  c.require(ft10 >= ft02, fmt("ft BLEU drops with more data: %.2f -> %.2f", ft02, ft10));
  c.require(tat10 >= tat02, fmt("tat BLEU drops with more data: %.2f -> %.2f", tat02, tat10));
  c.note(fmt("20%% data: ft %.2f vs tat %.2f (+%.2f); 100%%: ft %.2f, tat %.2f", ft02, tat02,
             tat02 - ft02, ft10, tat10));
  return c;
}

Check c8_bookkeeping() {
  Check c;
  const auto full = toy_corpus();
  const auto spec = toy_spec(full);
  const auto fwd =
      adapt::make_direction(corpus::LanguageTag("eng"), corpus::LanguageTag("pcm"));
  const auto rev = adapt::reverse(fwd);

  model::ModelConfig cfg;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.vocab_size = static_cast<int64_t>(spec.vocab.size());
  cfg.max_len = 16;

  adapt::StagePlan plan;
  plan.stage = adapt::Stage::ft;
  plan.epochs = 20;
  plan.batch_size = 8;
  plan.hyper.lr = 3e-3;
  plan.hyper.warmup = 20;
  plan.seed = 3;

  corpus::ParallelCorpus emptydev;
  emptydev.langs = full.langs;
  const auto ft =
      adapt::finetune(model::init_model(cfg, 3), full, emptydev, {fwd, rev}, spec, plan);

  corpus::MonoCorpus me;
  me.lang = corpus::LanguageTag("eng");
  me.name = "eng-mono";
  me.sentences = {"the man see rice",     "the woman take water", "the child want money",
                  "the people like fish", "the man take money",   "the woman want fish"};
  corpus::MonoCorpus mp;
  mp.lang = corpus::LanguageTag("pcm");
  mp.name = "pcm-mono";
  mp.sentences = {"di man si rais", "di woman karry wota", "di pikin wan moni",
                  "di pipu laik fish", "di man laik moni"};

  model::DecodeConfig dec;
  dec.max_len = 8;
  const auto bidi = adapt::bidirectional_bt(ft.ckpt, me, mp, fwd, rev, spec, dec);
  c.require(bidi.fwd.input == 6 && bidi.rev.input == 5, "bt input counts wrong");
  c.require(static_cast<int64_t>(bidi.corpus.size()) ==
                bidi.fwd.produced + bidi.rev.produced - bidi.duplicates,
            fmt("size contract: |union| %zu != %lld + %lld - %lld", bidi.corpus.size(),
                static_cast<long long>(bidi.fwd.produced),
                static_cast<long long>(bidi.rev.produced),
                static_cast<long long>(bidi.duplicates)));
  c.require(!bidi.corpus.pairs.empty(), "back-translation produced no pairs");
  for (const auto& p : bidi.corpus.pairs) {
    c.require(p.origin == corpus::Origin::synthetic, "bt pair not flagged synthetic");
    c.require(p.source_name == "bt", "bt pair source_name is not 'bt'");
  }

  // nested-subset property of the seeded split
  corpus::SplitSpec ss;
  ss.train_frac = 0.8;
  ss.dev_frac = 0.1;
  ss.test_frac = 0.1;
  ss.seed = 7;
  const auto q = corpus::split_and_subsample(full, ss, 0.25);
  const auto h = corpus::split_and_subsample(full, ss, 0.5);
  const auto f = corpus::split_and_subsample(full, ss, 1.0);
  auto is_prefix = [](const corpus::ParallelCorpus& a, const corpus::ParallelCorpus& b) {
    if (a.size() > b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
      if (a.pairs[i].src != b.pairs[i].src || a.pairs[i].tgt != b.pairs[i].tgt) return false;
    return true;
  };
  c.require(q.train.size() < h.train.size() && h.train.size() < f.train.size(),
            "subsampled train sizes must grow with the fraction");
  c.require(is_prefix(q.train, h.train) && is_prefix(h.train, f.train),
            "smaller-fraction train sets must be prefixes of larger ones");
  c.require(is_prefix(q.dev, f.dev) && is_prefix(f.dev, q.dev) && is_prefix(q.test, f.test) &&
                is_prefix(f.test, q.test),
            "dev/test must not depend on the train fraction");

  // synthetic pairs are rejected from dev and test splits
  adapt::DataRegistry reg;
  reg.parallel["mt.train"] = f.train;
  reg.parallel["mt.dev"] = f.dev;
  reg.parallel["mt.test"] = f.test;
  adapt::TrainPlan tp;
  tp.config = cfg;
  tp.decode = dec;
  adapt::StagePlan one = plan;
  one.epochs = 1;
  tp.stages = {one};
  std::map<std::string, adapt::TrainPlan> plans = {{"ft", tp}};
  adapt::ExperimentCell cell;
  cell.id = "ft";
  cell.variant = "ft";
  cell.data_setting = "mt";
  cell.seed = 1;
  cell.direction = fwd;

  auto poisoned = reg;
  poisoned.parallel["mt.dev"].pairs[0].origin = corpus::Origin::synthetic;
  const auto bad = adapt::run_experiment({cell}, plans, poisoned, spec, "t0");
  c.require(bad.failures.size() == 1 &&
                bad.failures[0].find("synthetic") != std::string::npos,
            "a synthetic dev pair must fail the cell");
  c.require(bad.report.rows.empty(), "failed cell must not emit report rows");

  // byte-identical reports across identically seeded runs
  const auto r1 = adapt::run_experiment({cell}, plans, reg, spec, "t0");
  const auto r2 = adapt::run_experiment({cell}, plans, reg, spec, "t0");
  c.require(r1.failures.empty(), r1.failures.empty() ? "" : r1.failures[0]);
  const auto j1 = eval::build_report(r1.report, eval::ReportFormat::json);
  const auto j2 = eval::build_report(r2.report, eval::ReportFormat::json);
  c.require(j1 == j2, "identically seeded runs produced different report bytes");
  c.note(fmt("bt union %zu pairs (dups %lld), nested splits, %zu-byte reports identical",
             bidi.corpus.size(), static_cast<long long>(bidi.duplicates), j1.size()));
  return c;
}

Check c9_presets() {
  Check c;
  auto shape = [](const model::ModelConfig& m) {
    return std::vector<int64_t>{m.enc_layers, m.dec_layers, m.heads, m.d_model, m.vocab_size};
  };
  const std::vector<int64_t> word = {4, 4, 10, 300, 4000};
  const std::vector<int64_t> bpe = {6, 6, 4, 256, 4000};
  c.require(shape(cli::model_preset("paper-word")) == word, "paper-word preset shape wrong");
  c.require(shape(cli::model_preset("paper-bpe")) == bpe, "paper-bpe preset shape wrong");
  c.require(shape(cli::load_config(kTestDir + "/../configs/paper-word.json").model) == word,
            "configs/paper-word.json does not load to (4,4,10,300), vocab 4000");
  c.require(shape(cli::load_config(kTestDir + "/../configs/paper-bpe.json").model) == bpe,
            "configs/paper-bpe.json does not load to (6,6,4,256), vocab 4000");
  c.note("paper-word (4,4,10,300), paper-bpe (6,6,4,256), shared vocab 4000");
  return c;
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    const char* label;
    double budget_s;
    Check (*fn)();
  };
  const Criterion all[] = {
      {"C1", "orthographic variant golden suite", 1, c1_orthography},
      {"C2", "corpus BLEU oracle", 5, c2_bleu_oracle},
      {"C3", "BPE first merge, round trip, determinism", 10, c3_bpe},
      {"C4", "gradients match finite differences", 120, c4_grad_check},
      {"C5", "overfits a 64-pair toy corpus", 300, c5_overfit},
      {"C6", "CaT beats init-only on synthetic sentiment", 600, c6_cat_ordering},
      {"C7", "TaT beats plain fine-tuning at 20% data", 1200, c7_tat_ordering},
      {"C8", "back-translation and split bookkeeping", 60, c8_bookkeeping},
      {"C9", "model presets", 1, c9_presets},
  };

  int failures = 0;
  for (const auto& cr : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Check res;
    try {
      res = cr.fn();
    } catch (const std::exception& e) {
      res.ok = false;
      res.detail = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (res.ok && secs > cr.budget_s) {
      res.ok = false;
      res.detail = fmt("over budget: %.1fs > %.0fs", secs, cr.budget_s);
    }
    std::printf("%s %-44s %s (%6.2fs)  %s\n", cr.id, cr.label, res.ok ? "PASS" : "FAIL", secs,
                res.detail.c_str());
    std::fflush(stdout);
    if (!res.ok) ++failures;
  }
  std::printf("%d/9 criteria passed\n", 9 - failures);
  return failures;
}
