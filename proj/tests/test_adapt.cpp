#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "pcmkit/adapt.hpp"

using namespace pcmkit;
using namespace pcmkit::adapt;

namespace {

const std::vector<std::string> kEngSents = {
    "the man go market",      "the woman stay house",   "rain fall for town",
    "the child eat rice",     "the man come home",      "the dog run fast",
    "the woman cook beans",   "the child sleep early",
};

const std::vector<std::string> kPcmSents = {
    "di man go market",       "di woman dey house",     "rain dey fall for town",
    "di pikin chop rice",     "di man dey come house",  "di dog dey run well",
    "di woman cook beans",    "di pikin sleep quick",
};

tok::TokenizerSpec toy_spec() {
  std::vector<std::string> all = kEngSents;
  all.insert(all.end(), kPcmSents.begin(), kPcmSents.end());
  all.push_back("good bad waka fine strong weak");
  return tok::make_word_spec(tok::train_word_vocab(all, 200));
}

model::ModelConfig tiny_cfg(const tok::TokenizerSpec& spec) {
  model::ModelConfig cfg;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.vocab_size = static_cast<int64_t>(spec.vocab.size());
  cfg.max_len = 32;
  return cfg;
}

bool params_equal(const ParamStore& a, const ParamStore& b) {
  if (a.items.size() != b.items.size()) return false;
  for (size_t i = 0; i < a.items.size(); ++i) {
    if (a.items[i].name != b.items[i].name) return false;
    if (!a.items[i].t.same_shape(b.items[i].t)) return false;
    for (int64_t j = 0; j < a.items[i].t.size(); ++j)
      if (a.items[i].t.v[static_cast<size_t>(j)] != b.items[i].t.v[static_cast<size_t>(j)])
        return false;
  }
  return true;
}

// Greedy decoding emits `token` until the cap: the decoder's final layer
// norm bias selects the first embedding column.
model::Checkpoint constant_emitter(const model::ModelConfig& cfg, int32_t token) {
  auto ck = model::init_model(cfg, 7);
  for (auto& e : ck.params.items) e.t.zero();
  ck.params.get("dec.ln.b").at(0, 0) = 1.0;
  ck.params.get("embed").at(token, 0) = 1.0;
  return ck;
}

optim::Hyper fast_hyper() {
  optim::Hyper h;
  h.lr = 3e-3;
  h.warmup = 10;
  return h;
}

corpus::ParallelCorpus toy_parallel(size_t n) {
  corpus::ParallelCorpus c;
  c.langs = {corpus::LanguageTag("eng"), corpus::LanguageTag("pcm")};
  c.name = "toy";
  for (size_t i = 0; i < n; ++i) {
    corpus::SentencePair p;
    p.src = kEngSents[i % kEngSents.size()];
    p.tgt = kPcmSents[i % kPcmSents.size()];
    p.src_lang = c.langs.first;
    p.tgt_lang = c.langs.second;
    c.pairs.push_back(p);
  }
  return c;
}

}  // namespace

TEST_CASE("mask_tokens selects exactly the rounded share of content positions") {
  MaskingConfig cfg;
  cfg.mask_rate = 0.15;
  cfg.seed = 5;
  const int32_t vocab = 100;

  auto ids20 = std::vector<int32_t>(20, 50);
  for (size_t i = 0; i < ids20.size(); ++i) ids20[i] = static_cast<int32_t>(10 + i);
  auto r = mask_tokens(ids20, cfg, vocab);
  CHECK(r.positions.size() == 3);
  CHECK(std::is_sorted(r.positions.begin(), r.positions.end()));
  for (size_t j = 0; j < r.positions.size(); ++j)
    CHECK(r.labels[j] == ids20[static_cast<size_t>(r.positions[j])]);
  for (size_t i = 0; i < ids20.size(); ++i) {
    const bool selected =
        std::find(r.positions.begin(), r.positions.end(), static_cast<int64_t>(i)) !=
        r.positions.end();
    if (!selected) CHECK(r.ids[i] == ids20[i]);
  }

  CHECK(mask_tokens({40, 41}, cfg, vocab).positions.size() == 1);
  cfg.mask_rate = 0.25;
  auto ten = std::vector<int32_t>{10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  CHECK(mask_tokens(ten, cfg, vocab).positions.size() == 3);  // round(2.5)
  cfg.mask_rate = 0.5;
  CHECK(mask_tokens({10, 11, 12, 13, 14, 15, 16}, cfg, vocab).positions.size() == 4);

  // specials are never selected
  cfg.mask_rate = 0.15;
  std::vector<int32_t> wrapped = {tok::kBos};
  wrapped.insert(wrapped.end(), ids20.begin(), ids20.end());
  wrapped.push_back(tok::kEos);
  auto rw = mask_tokens(wrapped, cfg, vocab);
  CHECK(rw.positions.size() == 3);
  for (int64_t p : rw.positions) {
    CHECK(p > 0);
    CHECK(p < static_cast<int64_t>(wrapped.size()) - 1);
  }

  // same seed reproduces, bit for bit
  auto r2 = mask_tokens(ids20, cfg, vocab);
  auto r3 = mask_tokens(ids20, cfg, vocab);
  CHECK(r2.ids == r3.ids);
  CHECK(r2.positions == r3.positions);
  CHECK(r2.labels == r3.labels);
}

TEST_CASE("mask_tokens input validation") {
  MaskingConfig cfg;
  CHECK_THROWS_AS(mask_tokens({}, cfg, 100), InvalidArgument);
  CHECK_THROWS_AS(mask_tokens({tok::kBos, tok::kEos, tok::kUnk}, cfg, 100), InvalidArgument);
  CHECK_THROWS_AS(mask_tokens({10, 11}, cfg, static_cast<int32_t>(tok::kNumSpecials)),
                  InvalidArgument);
  MaskingConfig bad = cfg;
  bad.mask_rate = 0.0;
  CHECK_THROWS_AS(mask_tokens({10, 11}, bad, 100), InvalidArgument);
  bad.mask_rate = 1.0;
  CHECK_THROWS_AS(mask_tokens({10, 11}, bad, 100), InvalidArgument);
  bad = cfg;
  bad.p_keep = 0.3;
  CHECK_THROWS_AS(mask_tokens({10, 11}, bad, 100), InvalidArgument);
}

TEST_CASE("mask_tokens follows the 80/10/10 rewrite scheme") {
  std::vector<int32_t> ids(60);
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int32_t>(10 + i);
  MaskingConfig cfg;
  cfg.mask_rate = 0.5;
  int64_t masked = 0, unchanged = 0, other = 0, total = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    cfg.seed = seed;
    const auto r = mask_tokens(ids, cfg, 200);
    for (size_t j = 0; j < r.positions.size(); ++j) {
      const int32_t now = r.ids[static_cast<size_t>(r.positions[j])];
      if (now == tok::kMask)
        ++masked;
      else if (now == r.labels[j])
        ++unchanged;
      else
        ++other;
      ++total;
    }
  }
  CHECK(total == 600);
  CHECK(masked > total * 7 / 10);
  CHECK(masked < total * 9 / 10);
  CHECK(unchanged > total / 25);
  CHECK(other > total / 25);
}

TEST_CASE("direction helpers resolve the built-in tags") {
  const corpus::LanguageTag eng("eng"), pcm("pcm");
  const auto spec = toy_spec();
  const auto d = make_direction(eng, pcm);
  CHECK(d.tag_token == "<2pcm>");
  CHECK(tag_id(d, spec) == tok::kToPcm);
  const auto r = reverse(d);
  CHECK(r.src_lang == pcm);
  CHECK(r.tag_token == "<2eng>");
  CHECK(tag_id(r, spec) == tok::kToEng);

  corpus::LanguageRegistry::add("yor");
  CHECK_THROWS_AS(make_direction(eng, corpus::LanguageTag("yor")), InvalidArgument);
  Direction same;
  same.src_lang = eng;
  same.tgt_lang = eng;
  same.tag_token = "<2eng>";
  CHECK_THROWS_AS(same.validate(), InvalidArgument);
  Direction fake = d;
  fake.tag_token = "market";
  CHECK_THROWS_AS(tag_id(fake, spec), InvalidArgument);
}

TEST_CASE("train plans enforce the pipeline order") {
  const auto spec = toy_spec();
  TrainPlan plan;
  plan.config = tiny_cfg(spec);
  StagePlan cat;
  cat.stage = Stage::cat;
  StagePlan tat;
  tat.stage = Stage::tat;
  StagePlan ft;
  ft.stage = Stage::ft;

  plan.stages = {cat, tat, ft};
  CHECK_NOTHROW(plan.validate());
  plan.stages = {cat, ft};
  CHECK_NOTHROW(plan.validate());
  plan.stages = {};
  CHECK_NOTHROW(plan.validate());
  plan.stages = {ft, cat};
  CHECK_THROWS_AS(plan.validate(), InvalidArgument);
  plan.stages = {ft, ft};
  CHECK_THROWS_AS(plan.validate(), InvalidArgument);

  StagePlan bad = ft;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = ft;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  CHECK(stage_from_string("tat") == Stage::tat);
  CHECK(to_string(Stage::cat) == "cat");
  CHECK_THROWS_AS(stage_from_string("warmup"), InvalidArgument);
}

TEST_CASE("cat_pretrain at zero steps only appends lineage") {
  const auto spec = toy_spec();
  const auto base = model::init_model(tiny_cfg(spec), 11);
  corpus::MonoCorpus mono{kPcmSents, corpus::LanguageTag("pcm"), "pcm-mono"};
  StagePlan plan;
  plan.stage = Stage::cat;
  plan.steps = 0;

  const auto res = cat_pretrain(base, mono, spec, plan);
  CHECK(params_equal(res.ckpt.params, base.params));
  CHECK(res.ckpt.lineage == std::vector<std::string>{"init", "cat"});
  CHECK(res.losses.empty());
  CHECK_FALSE(res.diverged);
}

TEST_CASE("cat_pretrain reduces the masked-LM loss and reproduces bitwise") {
  const auto spec = toy_spec();
  const auto base = model::init_model(tiny_cfg(spec), 11);
  corpus::MonoCorpus mono{kPcmSents, corpus::LanguageTag("pcm"), "pcm-mono"};
  StagePlan plan;
  plan.stage = Stage::cat;
  plan.steps = 150;
  plan.batch_size = 4;
  plan.hyper = fast_hyper();
  plan.seed = 3;

  const auto a = cat_pretrain(base, mono, spec, plan);
  CHECK(a.losses.size() == 150);
  CHECK(a.losses.back() < a.losses.front());
  CHECK(a.counters.at("sequences") == 600);
  CHECK_FALSE(a.diverged);
  CHECK(a.ckpt.step == 150);

  const auto b = cat_pretrain(base, mono, spec, plan);
  CHECK(params_equal(a.ckpt.params, b.ckpt.params));
}

TEST_CASE("cat_pretrain aborts on divergence with the last finite parameters") {
  const auto spec = toy_spec();
  const auto base = model::init_model(tiny_cfg(spec), 11);
  corpus::MonoCorpus mono{kPcmSents, corpus::LanguageTag("pcm"), "pcm-mono"};
  StagePlan plan;
  plan.stage = Stage::cat;
  plan.steps = 50;
  plan.batch_size = 4;
  plan.hyper.lr = 1e154;  // blows up the forward pass on the next step
  plan.hyper.warmup = 1;
  plan.hyper.clip_norm = 0.0;

  const auto res = cat_pretrain(base, mono, spec, plan);
  CHECK(res.diverged);
  CHECK(res.losses.size() < 50);
  CHECK(res.ckpt.lineage.back() == "cat");
  for (const auto& e : res.ckpt.params.items)
    for (double v : e.t.v) CHECK(std::isfinite(v));

  // a checkpoint that is already broken aborts before the first update
  auto nan_base = base;
  nan_base.params.get("embed").at(10, 0) = std::numeric_limits<double>::quiet_NaN();
  plan.hyper = fast_hyper();
  const auto res2 = cat_pretrain(nan_base, mono, spec, plan);
  CHECK(res2.diverged);
  CHECK(res2.losses.empty());
  CHECK(res2.ckpt.lineage.back() == "cat");
}

TEST_CASE("cat_pretrain rejects bad inputs") {
  const auto spec = toy_spec();
  const auto base = model::init_model(tiny_cfg(spec), 11);
  corpus::MonoCorpus mono{kPcmSents, corpus::LanguageTag("pcm"), "pcm-mono"};
  StagePlan plan;
  plan.stage = Stage::ft;
  CHECK_THROWS_AS(cat_pretrain(base, mono, spec, plan), InvalidArgument);

  plan.stage = Stage::cat;
  plan.steps = 1;
  corpus::MonoCorpus oov{{"zzz qqq xxx"}, corpus::LanguageTag("pcm"), "oov"};
  CHECK_THROWS_AS(cat_pretrain(base, oov, spec, plan), InvalidArgument);

  auto small = tiny_cfg(spec);
  small.vocab_size = 20;
  CHECK_THROWS_AS(cat_pretrain(model::init_model(small, 1), mono, spec, plan), InvalidArgument);
}

TEST_CASE("back_translate pairs every sentence with its model output") {
  const auto spec = toy_spec();
  auto cfg = tiny_cfg(spec);
  const int32_t market = spec.vocab.id_of("market");
  REQUIRE(market >= static_cast<int32_t>(tok::kNumSpecials));
  const auto ck = constant_emitter(cfg, market);
  const auto dir = make_direction(corpus::LanguageTag("pcm"), corpus::LanguageTag("eng"));
  model::DecodeConfig decode;
  decode.max_len = 3;

  corpus::MonoCorpus mono{{kPcmSents[0], kPcmSents[1], "", kPcmSents[2]},
                          corpus::LanguageTag("pcm"),
                          "pcm-mono"};
  const auto res = back_translate(ck, mono, dir, spec, decode);
  CHECK(res.stats.input == 4);
  CHECK(res.stats.produced == 3);
  CHECK(res.stats.dropped_empty == 1);
  CHECK(res.corpus.size() == 3);
  for (const auto& p : res.corpus.pairs) {
    CHECK(p.origin == corpus::Origin::synthetic);
    CHECK(p.source_name == "bt");
    CHECK(p.src_lang.code == "pcm");
    CHECK(p.tgt_lang.code == "eng");
    CHECK(p.tgt == "market market market");
  }
  CHECK(res.corpus.pairs[0].src == kPcmSents[0]);
  CHECK(res.corpus.pairs[2].src == kPcmSents[2]);

  // a model that immediately stops produces only empty outputs
  const auto quiet = constant_emitter(cfg, tok::kEos);
  const auto res2 = back_translate(quiet, mono, dir, spec, decode);
  CHECK(res2.stats.produced == 0);
  CHECK(res2.stats.dropped_empty == 4);
  CHECK(res2.corpus.size() == 0);

  corpus::MonoCorpus wrong{{"abc"}, corpus::LanguageTag("eng"), "eng-mono"};
  CHECK_THROWS_AS(back_translate(ck, wrong, dir, spec, decode), InvalidArgument);
}

TEST_CASE("bidirectional_bt unions both directions and reports duplicates") {
  const auto spec = toy_spec();
  const auto ck = constant_emitter(tiny_cfg(spec), spec.vocab.id_of("market"));
  const corpus::LanguageTag eng("eng"), pcm("pcm");
  const auto fwd = make_direction(eng, pcm);
  const auto rev = make_direction(pcm, eng);
  model::DecodeConfig decode;
  decode.max_len = 2;

  corpus::MonoCorpus mono_eng{{kEngSents[0], kEngSents[1], kEngSents[1]}, eng, "eng-mono"};
  corpus::MonoCorpus mono_pcm{{kPcmSents[0], kPcmSents[1]}, pcm, "pcm-mono"};

  const auto res = bidirectional_bt(ck, mono_eng, mono_pcm, fwd, rev, spec, decode);
  CHECK(res.fwd.produced == 3);
  CHECK(res.rev.produced == 2);
  CHECK(res.duplicates == 1);  // the repeated english sentence collapses
  CHECK(res.corpus.size() == 4);
  for (const auto& p : res.corpus.pairs) CHECK(p.origin == corpus::Origin::synthetic);

  corpus::MonoCorpus empty_pcm{{}, pcm, "empty"};
  const auto only_fwd = bidirectional_bt(ck, mono_eng, empty_pcm, fwd, rev, spec, decode);
  CHECK(only_fwd.corpus.size() == 2);  // dedup still collapses the repeat
  CHECK(only_fwd.rev.produced == 0);

  CHECK_THROWS_AS(bidirectional_bt(ck, mono_eng, mono_pcm, fwd, fwd, spec, decode),
                  InvalidArgument);
}

TEST_CASE("tat_train consumes both directions of the synthetic stream") {
  const auto spec = toy_spec();
  const auto base = model::init_model(tiny_cfg(spec), 21);
  const corpus::LanguageTag eng("eng"), pcm("pcm");
  const std::vector<Direction> dirs = {make_direction(eng, pcm), make_direction(pcm, eng)};

  corpus::ParallelCorpus d_bt;
  d_bt.langs = {eng, pcm};
  d_bt.name = "bt";
  for (size_t i = 0; i < 6; ++i) {
    corpus::SentencePair p;
    p.origin = corpus::Origin::synthetic;
    p.source_name = "bt";
    if (i % 2 == 0) {  // real english, synthetic pidgin
      p.src = kEngSents[i];
      p.tgt = kPcmSents[i];
      p.src_lang = eng;
      p.tgt_lang = pcm;
    } else {  // real pidgin, synthetic english
      p.src = kPcmSents[i];
      p.tgt = kEngSents[i];
      p.src_lang = pcm;
      p.tgt_lang = eng;
    }
    d_bt.pairs.push_back(p);
  }

  StagePlan plan;
  plan.stage = Stage::tat;
  plan.steps = 0;
  const auto zero = tat_train(base, d_bt, dirs, spec, plan);
  CHECK(params_equal(zero.ckpt.params, base.params));
  CHECK(zero.ckpt.lineage == std::vector<std::string>{"init", "tat"});

  plan.steps = 8;
  plan.batch_size = 4;
  plan.hyper = fast_hyper();
  plan.seed = 9;
  const auto res = tat_train(base, d_bt, dirs, spec, plan);
  CHECK(res.losses.size() == 8);
  CHECK(res.counters.at("<2eng>") > 0);
  CHECK(res.counters.at("<2pcm>") > 0);
  CHECK(res.counters.at("<2eng>") + res.counters.at("<2pcm>") == 32);
  CHECK(res.ckpt.lineage.back() == "tat");

  const auto res2 = tat_train(base, d_bt, dirs, spec, plan);
  CHECK(params_equal(res.ckpt.params, res2.ckpt.params));

  const std::vector<Direction> one = {make_direction(eng, pcm)};
  CHECK_THROWS_AS(tat_train(base, d_bt, one, spec, plan), InvalidArgument);
}

TEST_CASE("labeled sets round-trip through jsonl and subsample by prefix") {
  LabeledSet set;
  set.name = "toy";
  for (int i = 0; i < 10; ++i)
    set.examples.push_back({"text number " + std::to_string(i), static_cast<int32_t>(i % 3)});

  const auto dir = std::filesystem::temp_directory_path() / "pcmkit_adapt_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "labeled.jsonl").string();
  write_labeled(set, path);
  const auto back = read_labeled(path, "toy");
  REQUIRE(back.size() == set.size());
  for (size_t i = 0; i < set.size(); ++i) {
    CHECK(back.examples[i].text == set.examples[i].text);
    CHECK(back.examples[i].label == set.examples[i].label);
  }

  write_file(path, "{\"text\": \"x\", \"label\": 5}\n");
  CHECK_THROWS_AS(read_labeled(path, ""), FormatError);
  write_file(path, "{\"text\": \"x\"}\n");
  CHECK_THROWS_AS(read_labeled(path, ""), FormatError);
  write_file(path, "not json\n");
  CHECK_THROWS_AS(read_labeled(path, ""), FormatError);
  std::filesystem::remove_all(dir);

  const auto full = subsample(set, 1.0, 42);
  const auto half = subsample(set, 0.5, 42);
  CHECK(full.size() == 10);
  CHECK(half.size() == 5);
  for (size_t i = 0; i < half.size(); ++i) CHECK(half.examples[i].text == full.examples[i].text);
  CHECK_THROWS_AS(subsample(set, 0.0, 1), InvalidArgument);
  CHECK_THROWS_AS(subsample(set, 1.5, 1), InvalidArgument);
}

TEST_CASE("seq2seq finetune returns the best-dev checkpoint") {
  const auto spec = toy_spec();
  const auto base = model::init_model(tiny_cfg(spec), 31);
  const corpus::LanguageTag eng("eng"), pcm("pcm");
  const std::vector<Direction> dirs = {make_direction(eng, pcm), make_direction(pcm, eng)};
  const auto train = toy_parallel(8);
  const auto dev = toy_parallel(3);

  StagePlan plan;
  plan.stage = Stage::ft;
  plan.epochs = 3;
  plan.batch_size = 4;
  plan.hyper = fast_hyper();
  plan.seed = 17;

  const auto res = finetune(base, train, dev, dirs, spec, plan);
  CHECK(res.dev_history.size() == 3);
  CHECK(res.best_dev == *std::max_element(res.dev_history.begin(), res.dev_history.end()));
  CHECK(res.best_epoch >= 1);
  CHECK(res.best_epoch <= 3);
  CHECK(res.ckpt.lineage == std::vector<std::string>{"init", "ft"});
  CHECK(res.losses.size() == 6);  // 2 batches x 3 epochs

  const auto res2 = finetune(base, train, dev, dirs, spec, plan);
  CHECK(params_equal(res.ckpt.params, res2.ckpt.params));
  CHECK(res.best_dev == res2.best_dev);

  corpus::ParallelCorpus empty;
  empty.langs = train.langs;
  CHECK_THROWS_AS(finetune(base, empty, dev, dirs, spec, plan), InvalidArgument);
}

TEST_CASE("classification finetune learns a separable toy task") {
  const auto spec = toy_spec();
  const auto base = model::init_model(tiny_cfg(spec), 41);
  const std::vector<std::string> cue = {"good", "bad", "waka"};
  LabeledSet train, dev;
  for (int i = 0; i < 30; ++i) {
    const auto label = static_cast<int32_t>(i % 3);
    train.examples.push_back(
        {"di " + kPcmSents[static_cast<size_t>(i) % kPcmSents.size()] + " " +
             cue[static_cast<size_t>(label)],
         label});
  }
  for (int i = 0; i < 9; ++i) {
    const auto label = static_cast<int32_t>(i % 3);
    dev.examples.push_back({"dis one " + cue[static_cast<size_t>(label)] + " well", label});
  }

  StagePlan plan;
  plan.stage = Stage::ft;
  plan.epochs = 6;
  plan.batch_size = 8;
  plan.hyper = fast_hyper();
  plan.seed = 2;

  const auto res = finetune(base, train, dev, spec, plan);
  CHECK(res.dev_history.size() == 6);
  CHECK(res.best_dev == *std::max_element(res.dev_history.begin(), res.dev_history.end()));
  CHECK(res.best_dev >= 50.0);  // macro-f1 percent on a trivially separable set
  CHECK(res.losses.front() > res.losses.back());
  CHECK(res.ckpt.lineage.back() == "ft");

  const auto preds = predict_labels(res.ckpt, {"dis one good well", "dis one bad well"}, spec);
  CHECK(preds.size() == 2);
}

TEST_CASE("run_experiment handles empty grids and records failures") {
  const auto spec = toy_spec();
  const DataRegistry empty_reg;
  const auto none = run_experiment({}, {}, empty_reg, spec);
  CHECK(none.report.rows.empty());
  CHECK(none.failures.empty());

  DataRegistry reg;
  LabeledSet tiny;
  for (int i = 0; i < 6; ++i)
    tiny.examples.push_back({kPcmSents[static_cast<size_t>(i)], static_cast<int32_t>(i % 3)});
  reg.labeled["sent.train"] = tiny;
  reg.labeled["sent.dev"] = tiny;
  reg.labeled["sent.test"] = tiny;

  TrainPlan plan;
  plan.config = tiny_cfg(spec);
  StagePlan ft;
  ft.stage = Stage::ft;
  ft.epochs = 1;
  ft.batch_size = 4;
  plan.stages = {ft};

  ExperimentCell good{"ok", "base", "sent", 1, {}, {}};
  ExperimentCell bad_plan{"bad-plan", "missing", "sent", 1, {}, {}};
  ExperimentCell bad_data{"bad-data", "base", "nowhere", 1, {}, {}};
  const auto res =
      run_experiment({good, bad_plan, bad_data}, {{"base", plan}}, reg, spec, "2024-06-01");
  CHECK(res.report.rows.size() == 1);
  CHECK(res.report.rows[0].cell == "ok");
  CHECK(res.report.rows[0].metric == "macro_f1");
  CHECK(res.report.created_at == "2024-06-01");
  REQUIRE(res.failures.size() == 2);
  CHECK(res.failures[0].find("bad-plan") == 0);
  CHECK(res.failures[1].find("bad-data") == 0);

  CHECK_THROWS_AS(run_experiment({good, good}, {{"base", plan}}, reg, spec), InvalidArgument);
}

TEST_CASE("run_experiment rejects synthetic pairs in dev and test splits") {
  const auto spec = toy_spec();
  DataRegistry reg;
  reg.parallel["mt.train"] = toy_parallel(8);
  reg.parallel["mt.dev"] = toy_parallel(2);
  reg.parallel["mt.test"] = toy_parallel(2);
  reg.parallel["mt.dev"].pairs[0].origin = corpus::Origin::synthetic;

  TrainPlan plan;
  plan.config = tiny_cfg(spec);
  ExperimentCell cell{"ft", "base", "mt", 1, {},
                      make_direction(corpus::LanguageTag("eng"), corpus::LanguageTag("pcm"))};
  const auto res = run_experiment({cell}, {{"base", plan}}, reg, spec);
  CHECK(res.report.rows.empty());
  REQUIRE(res.failures.size() == 1);
  CHECK(res.failures[0].find("synthetic") != std::string::npos);
}

TEST_CASE("sentiment experiment cells run end to end deterministically") {
  const auto spec = toy_spec();
  DataRegistry reg;
  const std::vector<std::string> cue = {"good", "bad", "waka"};
  LabeledSet train, dev, test;
  for (int32_t label = 0; label < 3; ++label) {
    for (size_t k = 0; k < 6; ++k) {
      const auto text = kPcmSents[(static_cast<size_t>(label) * 6 + k) % kPcmSents.size()] +
                        " " + cue[static_cast<size_t>(label)];
      (k < 4 ? train : (k == 4 ? dev : test)).examples.push_back({text, label});
    }
  }
  reg.labeled["sent.train"] = train;
  reg.labeled["sent.dev"] = dev;
  reg.labeled["sent.test"] = test;
  reg.mono["pcm-mono"] = {kPcmSents, corpus::LanguageTag("pcm"), "pcm-mono"};

  StagePlan ft;
  ft.stage = Stage::ft;
  ft.epochs = 2;
  ft.batch_size = 4;
  ft.hyper = fast_hyper();
  StagePlan cat;
  cat.stage = Stage::cat;
  cat.data = {"pcm-mono"};
  cat.steps = 6;
  cat.batch_size = 4;
  cat.hyper = fast_hyper();

  TrainPlan init_plan;
  init_plan.config = tiny_cfg(spec);
  init_plan.stages = {ft};
  TrainPlan cat_plan = init_plan;
  cat_plan.stages = {cat, ft};

  std::vector<ExperimentCell> grid;
  for (uint64_t seed : {1u, 2u}) {
    grid.push_back({"init", "init", "sent", seed, {}, {}});
    grid.push_back({"cat", "cat", "sent", seed, {}, {}});
  }
  const std::map<std::string, TrainPlan> plans = {{"init", init_plan}, {"cat", cat_plan}};

  const auto a = run_experiment(grid, plans, reg, spec, "t0");
  CHECK(a.failures.empty());
  REQUIRE(a.report.rows.size() == 4);
  for (const auto& row : a.report.rows) {
    CHECK(row.metric == "macro_f1");
    CHECK(row.data_sizes.at("train") == 12);
    CHECK(row.data_sizes.at("test") == 3);
    if (row.cell == "cat") {
      CHECK(row.lineage == std::vector<std::string>{"init", "cat", "ft"});
      CHECK(row.data_sizes.at("mono") == 8);
    } else {
      CHECK(row.lineage == std::vector<std::string>{"init", "ft"});
    }
  }

  const auto b = run_experiment(grid, plans, reg, spec, "t0");
  REQUIRE(b.report.rows.size() == 4);
  for (size_t i = 0; i < 4; ++i) CHECK(a.report.rows[i].value == b.report.rows[i].value);
  CHECK(eval::build_report(a.report, eval::ReportFormat::json) ==
        eval::build_report(b.report, eval::ReportFormat::json));
}

TEST_CASE("translation experiment cells run the tat pipeline") {
  const auto spec = toy_spec();
  DataRegistry reg;
  reg.parallel["mt.train"] = toy_parallel(8);
  reg.parallel["mt.dev"] = toy_parallel(2);
  reg.parallel["mt.test"] = toy_parallel(3);
  reg.mono["eng-mono"] = {{kEngSents[0], kEngSents[1]}, corpus::LanguageTag("eng"), "eng-mono"};
  reg.mono["pcm-mono"] = {{kPcmSents[0], kPcmSents[1]}, corpus::LanguageTag("pcm"), "pcm-mono"};

  StagePlan ft;
  ft.stage = Stage::ft;
  ft.epochs = 1;
  ft.batch_size = 4;
  ft.hyper = fast_hyper();
  StagePlan tat;
  tat.stage = Stage::tat;
  tat.data = {"eng-mono", "pcm-mono"};
  tat.steps = 2;
  tat.generator_steps = 2;
  tat.batch_size = 4;
  tat.hyper = fast_hyper();

  TrainPlan ft_plan;
  ft_plan.config = tiny_cfg(spec);
  ft_plan.decode.max_len = 8;
  ft_plan.stages = {ft};
  TrainPlan tat_plan = ft_plan;
  tat_plan.stages = {tat, ft};

  const auto dir = make_direction(corpus::LanguageTag("eng"), corpus::LanguageTag("pcm"));
  const std::vector<ExperimentCell> grid = {
      {"ft", "ft", "mt", 1, 0.5, dir},
      {"tat", "tat", "mt", 1, 0.5, dir},
  };
  const std::map<std::string, TrainPlan> plans = {{"ft", ft_plan}, {"tat", tat_plan}};

  const auto a = run_experiment(grid, plans, reg, spec, "t0");
  CHECK(a.failures.empty());
  REQUIRE(a.report.rows.size() == 2);
  for (const auto& row : a.report.rows) {
    CHECK(row.metric == "bleu");
    CHECK(row.value >= 0.0);
    CHECK(row.value <= 100.0);
    CHECK(row.fraction == 0.5);
    CHECK(row.data_sizes.at("train") == 4);  // half of 8
  }
  CHECK(a.report.rows[0].lineage == std::vector<std::string>{"init", "ft"});
  CHECK(a.report.rows[1].lineage == std::vector<std::string>{"init", "tat", "ft"});
  CHECK(a.report.rows[1].data_sizes.count("bt") == 1);

  const auto b = run_experiment(grid, plans, reg, spec, "t0");
  for (size_t i = 0; i < 2; ++i) CHECK(a.report.rows[i].value == b.report.rows[i].value);
}
