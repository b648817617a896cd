#include "pcmkit/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <utility>

#include <json.hpp>

namespace pcmkit::adapt {

using json = nlohmann::ordered_json;

namespace {

// Reshuffling index stream: every example appears once per pass.
class OrderStream {
 public:
  OrderStream(size_t n, uint64_t seed) : rng_(seed), order_(n) {
    std::iota(order_.begin(), order_.end(), size_t{0});
    rng_.shuffle(order_);
  }

  size_t next() {
    if (pos_ >= order_.size()) {
      rng_.shuffle(order_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  Rng rng_;
  std::vector<size_t> order_;
  size_t pos_ = 0;
};

std::vector<int32_t> encode_trunc(const std::string& text, const tok::TokenizerSpec& spec,
                                  int64_t cap) {
  auto ids = tok::encode(text, spec, false);
  if (static_cast<int64_t>(ids.size()) > cap) ids.resize(static_cast<size_t>(cap));
  return ids;
}

void check_vocab(const model::Checkpoint& ckpt, const tok::TokenizerSpec& spec) {
  if (ckpt.config.vocab_size != static_cast<int64_t>(spec.vocab.size()))
    throw InvalidArgument("checkpoint vocabulary size " +
                          std::to_string(ckpt.config.vocab_size) +
                          " does not match the tokenizer's " + std::to_string(spec.vocab.size()));
}

MaskResult mask_with(const std::vector<int32_t>& ids, const MaskingConfig& cfg,
                     int32_t vocab_size, Rng& rng) {
  std::vector<int64_t> maskable;
  for (size_t i = 0; i < ids.size(); ++i)
    if (ids[i] >= static_cast<int32_t>(tok::kNumSpecials))
      maskable.push_back(static_cast<int64_t>(i));
  if (maskable.empty()) throw InvalidArgument("sequence has only special tokens");

  const auto n = static_cast<int64_t>(maskable.size());
  auto k = std::max<int64_t>(1, std::llround(cfg.mask_rate * static_cast<double>(n)));
  k = std::min(k, n);
  rng.shuffle(maskable);
  maskable.resize(static_cast<size_t>(k));
  std::sort(maskable.begin(), maskable.end());

  MaskResult res;
  res.ids = ids;
  res.positions = maskable;
  for (int64_t pos : maskable) {
    res.labels.push_back(ids[static_cast<size_t>(pos)]);
    const double u = rng.uniform01();
    if (u < cfg.p_mask) {
      res.ids[static_cast<size_t>(pos)] = tok::kMask;
    } else if (u < cfg.p_mask + cfg.p_random) {
      const auto lo = static_cast<uint64_t>(tok::kNumSpecials);
      res.ids[static_cast<size_t>(pos)] =
          static_cast<int32_t>(lo + rng.below(static_cast<uint64_t>(vocab_size) - lo));
    }
  }
  return res;
}

// One tagged training example; src is stored untagged.
struct Example {
  std::vector<int32_t> src;
  std::vector<int32_t> tgt;
  int32_t tag = 0;
  std::string tag_token;
};

const Direction* find_direction(const std::vector<Direction>& dirs,
                                const corpus::LanguageTag& src, const corpus::LanguageTag& tgt) {
  for (const auto& d : dirs)
    if (d.src_lang == src && d.tgt_lang == tgt) return &d;
  return nullptr;
}

// synth_as_source flips synthetic pairs so the model-generated text feeds
// the encoder and gold text is supervised.
std::vector<Example> examples_from_pairs(const std::vector<corpus::SentencePair>& pairs,
                                         const std::vector<Direction>& dirs,
                                         const tok::TokenizerSpec& spec, int64_t max_len,
                                         bool synth_as_source, bool both_orientations) {
  std::vector<Example> out;
  out.reserve(pairs.size() * (both_orientations ? 2 : 1));
  for (const auto& p : pairs) {
    const bool flip = synth_as_source && p.origin == corpus::Origin::synthetic;
    struct Orientation {
      const std::string* in;
      const std::string* outt;
      const corpus::LanguageTag* in_lang;
      const corpus::LanguageTag* out_lang;
    };
    std::vector<Orientation> orients;
    if (flip)
      orients.push_back({&p.tgt, &p.src, &p.tgt_lang, &p.src_lang});
    else
      orients.push_back({&p.src, &p.tgt, &p.src_lang, &p.tgt_lang});
    if (both_orientations)
      orients.push_back({orients[0].outt, orients[0].in, orients[0].out_lang, orients[0].in_lang});

    for (const auto& o : orients) {
      const Direction* d = find_direction(dirs, *o.in_lang, *o.out_lang);
      if (!d)
        throw InvalidArgument("no direction for " + o.in_lang->code + "->" + o.out_lang->code);
      Example ex;
      ex.tag = tag_id(*d, spec);
      ex.tag_token = d->tag_token;
      ex.src = encode_trunc(*o.in, spec, max_len - 1);
      ex.tgt = encode_trunc(*o.outt, spec, max_len - 1);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

model::Batch make_tagged_batch(const std::vector<Example>& exs, const std::vector<size_t>& idx) {
  std::vector<std::vector<int32_t>> src, tgt;
  src.reserve(idx.size());
  tgt.reserve(idx.size());
  for (size_t i : idx) {
    std::vector<int32_t> row;
    row.reserve(exs[i].src.size() + 1);
    row.push_back(exs[i].tag);
    row.insert(row.end(), exs[i].src.begin(), exs[i].src.end());
    src.push_back(std::move(row));
    tgt.push_back(exs[i].tgt);
  }
  return model::make_batch(src, tgt);
}

double mean_example_loss(const model::Checkpoint& ckpt, const std::vector<Example>& exs,
                         int64_t batch_size) {
  double total = 0.0;
  int64_t count = 0;
  for (size_t begin = 0; begin < exs.size(); begin += static_cast<size_t>(batch_size)) {
    std::vector<size_t> idx;
    for (size_t i = begin; i < std::min(exs.size(), begin + static_cast<size_t>(batch_size)); ++i)
      idx.push_back(i);
    const auto lr = model::seq2seq_loss(ckpt, make_tagged_batch(exs, idx));
    total += lr.loss * static_cast<double>(lr.count);
    count += lr.count;
  }
  return total / static_cast<double>(std::max<int64_t>(1, count));
}

// Steps-based training over a reshuffling stream. On divergence the
// checkpoint rolls back to the last parameters that produced a finite loss.
void run_supervised(model::Checkpoint& work, const std::vector<Example>& exs,
                    const StagePlan& plan, int64_t steps, uint64_t seed,
                    std::vector<double>& losses, std::map<std::string, int64_t>* counters,
                    bool* diverged) {
  if (steps <= 0) return;
  if (exs.empty()) throw InvalidArgument("no training examples");
  auto state = optim::make_adam_state(work.params);
  OrderStream order(exs.size(), derive_seed(seed, "order"));
  Rng drop_rng(derive_seed(seed, "dropout"));
  Rng* drop = work.config.dropout > 0.0 ? &drop_rng : nullptr;
  model::Checkpoint good = work;
  for (int64_t step = 0; step < steps; ++step) {
    std::vector<size_t> idx;
    for (int64_t b = 0; b < plan.batch_size; ++b) idx.push_back(order.next());
    const auto batch = make_tagged_batch(exs, idx);
    model::Checkpoint pre = work;
    try {
      const auto lr = optim::train_step(work, batch, state, plan.hyper, drop);
      losses.push_back(lr.loss);
    } catch (const TrainingDiverged&) {
      work = std::move(good);
      if (diverged) *diverged = true;
      return;
    }
    good = std::move(pre);
    if (counters)
      for (size_t i : idx) (*counters)[exs[i].tag_token] += 1;
  }
}

std::vector<std::vector<int32_t>> encode_cls_rows(const std::vector<LabeledExample>& exs,
                                                  const tok::TokenizerSpec& spec,
                                                  int64_t max_len) {
  std::vector<std::vector<int32_t>> rows;
  rows.reserve(exs.size());
  for (const auto& e : exs) {
    auto ids = encode_trunc(e.text, spec, max_len);
    if (ids.empty()) ids.push_back(tok::kUnk);
    rows.push_back(std::move(ids));
  }
  return rows;
}

std::vector<int32_t> predict_rows(const model::Checkpoint& ckpt,
                                  const std::vector<std::vector<int32_t>>& rows) {
  std::vector<int32_t> preds;
  preds.reserve(rows.size());
  constexpr size_t kChunk = 32;
  for (size_t begin = 0; begin < rows.size(); begin += kChunk) {
    std::vector<std::vector<int32_t>> chunk(
        rows.begin() + static_cast<int64_t>(begin),
        rows.begin() + static_cast<int64_t>(std::min(rows.size(), begin + kChunk)));
    const auto probs = model::classify(ckpt, model::make_cls_batch(chunk, {}));
    for (int64_t r = 0; r < probs.rows; ++r) {
      int32_t best = 0;
      for (int32_t c = 1; c < model::kNumClasses; ++c)
        if (probs.at(r, c) > probs.at(r, best)) best = c;
      preds.push_back(best);
    }
  }
  return preds;
}

const corpus::ParallelCorpus& lookup_parallel(const DataRegistry& reg, const std::string& name) {
  const auto it = reg.parallel.find(name);
  if (it == reg.parallel.end()) throw InvalidArgument("unknown parallel corpus: " + name);
  return it->second;
}

const corpus::MonoCorpus& lookup_mono(const DataRegistry& reg, const std::string& name) {
  const auto it = reg.mono.find(name);
  if (it == reg.mono.end()) throw InvalidArgument("unknown monolingual corpus: " + name);
  return it->second;
}

const LabeledSet& lookup_labeled(const DataRegistry& reg, const std::string& name) {
  const auto it = reg.labeled.find(name);
  if (it == reg.labeled.end()) throw InvalidArgument("unknown labeled set: " + name);
  return it->second;
}

void reject_synthetic(const corpus::ParallelCorpus& c, const std::string& split) {
  for (const auto& p : c.pairs)
    if (p.origin == corpus::Origin::synthetic)
      throw InvalidArgument("synthetic pair in the " + split + " split of " + c.name);
}

}  // namespace

void MaskingConfig::validate() const {
  if (!(mask_rate > 0.0) || !(mask_rate < 1.0))
    throw InvalidArgument("mask_rate must be in (0, 1)");
  if (p_mask < 0.0 || p_random < 0.0 || p_keep < 0.0)
    throw InvalidArgument("scheme probabilities must be non-negative");
  if (std::abs(p_mask + p_random + p_keep - 1.0) > 1e-9)
    throw InvalidArgument("scheme probabilities must sum to 1");
}

MaskResult mask_tokens(const std::vector<int32_t>& ids, const MaskingConfig& cfg,
                       int32_t vocab_size) {
  cfg.validate();
  if (ids.empty()) throw InvalidArgument("cannot mask an empty sequence");
  if (vocab_size <= static_cast<int32_t>(tok::kNumSpecials))
    throw InvalidArgument("vocabulary has no non-special tokens");
  Rng rng(derive_seed(cfg.seed, "mask_tokens"));
  return mask_with(ids, cfg, vocab_size, rng);
}

void Direction::validate() const {
  if (src_lang.code.empty() || tgt_lang.code.empty())
    throw InvalidArgument("direction languages must be set");
  if (src_lang == tgt_lang) throw InvalidArgument("direction languages must differ");
  if (tag_token.empty()) throw InvalidArgument("direction tag token must be set");
}

Direction make_direction(const corpus::LanguageTag& src, const corpus::LanguageTag& tgt) {
  Direction d;
  d.src_lang = src;
  d.tgt_lang = tgt;
  if (tgt.code == "pcm")
    d.tag_token = tok::kSpecialTokens[tok::kToPcm];
  else if (tgt.code == "eng")
    d.tag_token = tok::kSpecialTokens[tok::kToEng];
  else
    throw InvalidArgument("no built-in direction tag for target language: " + tgt.code);
  d.validate();
  return d;
}

Direction reverse(const Direction& d) { return make_direction(d.tgt_lang, d.src_lang); }

int32_t tag_id(const Direction& d, const tok::TokenizerSpec& spec) {
  d.validate();
  const int32_t id = spec.vocab.id_of(d.tag_token);
  if (id != tok::kToPcm && id != tok::kToEng)
    throw InvalidArgument("direction tag is not a direction special: " + d.tag_token);
  return id;
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::cat: return "cat";
    case Stage::tat: return "tat";
    case Stage::ft: return "ft";
  }
  throw InvalidArgument("unknown stage");
}

Stage stage_from_string(const std::string& s) {
  if (s == "cat") return Stage::cat;
  if (s == "tat") return Stage::tat;
  if (s == "ft") return Stage::ft;
  throw InvalidArgument("unknown stage: " + s);
}

void StagePlan::validate() const {
  if (steps < 0) throw InvalidArgument("steps must be non-negative");
  if (epochs < 1) throw InvalidArgument("epochs must be at least 1");
  if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
  if (generator_steps < 0) throw InvalidArgument("generator_steps must be non-negative");
  hyper.validate();
  masking.validate();
}

void TrainPlan::validate() const {
  config.validate();
  for (size_t i = 0; i < stages.size(); ++i) {
    stages[i].validate();
    if (i > 0 && !(static_cast<int>(stages[i - 1].stage) < static_cast<int>(stages[i].stage)))
      throw InvalidArgument("stages must follow the cat, tat, ft pipeline order");
  }
}

TrainResult cat_pretrain(const model::Checkpoint& ckpt, const corpus::MonoCorpus& mono,
                         const tok::TokenizerSpec& spec, const StagePlan& plan) {
  plan.validate();
  if (plan.stage != Stage::cat) throw InvalidArgument("plan stage is not cat");
  check_vocab(ckpt, spec);

  TrainResult res;
  res.ckpt = ckpt;
  res.ckpt.lineage.push_back("cat");
  if (plan.steps == 0) return res;

  std::vector<std::vector<int32_t>> pool;
  for (const auto& s : mono.sentences) {
    auto ids = encode_trunc(s, spec, ckpt.config.max_len);
    const bool maskable = std::any_of(ids.begin(), ids.end(), [](int32_t id) {
      return id >= static_cast<int32_t>(tok::kNumSpecials);
    });
    if (maskable) pool.push_back(std::move(ids));
  }
  if (pool.empty()) throw InvalidArgument("no maskable sentences in corpus " + mono.name);

  auto state = optim::make_adam_state(res.ckpt.params);
  OrderStream order(pool.size(), derive_seed(plan.seed, "cat_order"));
  Rng mask_rng(derive_seed(plan.seed, "cat_mask"));
  Rng drop_rng(derive_seed(plan.seed, "dropout"));
  Rng* drop = ckpt.config.dropout > 0.0 ? &drop_rng : nullptr;
  const auto vocab = static_cast<int32_t>(spec.vocab.size());

  model::Checkpoint good = res.ckpt;
  for (int64_t step = 0; step < plan.steps; ++step) {
    std::vector<MaskResult> rows;
    std::vector<int32_t> lens;
    int64_t seq_len = 0;
    for (int64_t b = 0; b < plan.batch_size; ++b) {
      const auto& ids = pool[order.next()];
      rows.push_back(mask_with(ids, plan.masking, vocab, mask_rng));
      lens.push_back(static_cast<int32_t>(ids.size()));
      seq_len = std::max(seq_len, static_cast<int64_t>(ids.size()));
    }
    model::MlmBatch batch;
    batch.batch = static_cast<int64_t>(rows.size());
    batch.seq_len = seq_len;
    batch.ids.assign(static_cast<size_t>(batch.batch * seq_len), tok::kPad);
    batch.lens = lens;
    for (size_t r = 0; r < rows.size(); ++r) {
      std::copy(rows[r].ids.begin(), rows[r].ids.end(),
                batch.ids.begin() + static_cast<int64_t>(r) * seq_len);
      for (size_t j = 0; j < rows[r].positions.size(); ++j) {
        batch.positions.push_back(static_cast<int64_t>(r) * seq_len + rows[r].positions[j]);
        batch.labels.push_back(rows[r].labels[j]);
      }
    }
    model::Checkpoint pre = res.ckpt;
    try {
      const auto lr = optim::train_step(res.ckpt, batch, state, plan.hyper, drop);
      res.losses.push_back(lr.loss);
    } catch (const TrainingDiverged&) {
      res.ckpt = std::move(good);
      res.diverged = true;
      return res;
    }
    good = std::move(pre);
    res.counters["sequences"] += plan.batch_size;
  }
  return res;
}

BtResult back_translate(const model::Checkpoint& ckpt, const corpus::MonoCorpus& mono,
                        const Direction& direction, const tok::TokenizerSpec& spec,
                        const model::DecodeConfig& decode) {
  direction.validate();
  check_vocab(ckpt, spec);
  if (mono.lang != direction.src_lang)
    throw InvalidArgument("monolingual corpus is " + mono.lang.code +
                          " but the direction starts from " + direction.src_lang.code);
  const int32_t tag = tag_id(direction, spec);

  BtResult res;
  res.stats.input = static_cast<int64_t>(mono.size());
  res.corpus.name = "bt";
  res.corpus.langs = {direction.src_lang, direction.tgt_lang};

  std::vector<std::vector<int32_t>> enc(mono.size());
  std::vector<size_t> live;
  for (size_t i = 0; i < mono.sentences.size(); ++i) {
    enc[i] = encode_trunc(mono.sentences[i], spec, ckpt.config.max_len - 1);
    if (enc[i].empty())
      ++res.stats.dropped_empty;
    else
      live.push_back(i);
  }

  std::vector<std::string> outputs(mono.size());
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (int64_t w = 0; w < static_cast<int64_t>(live.size()); ++w) {
    const size_t i = live[static_cast<size_t>(w)];
    try {
      outputs[i] = tok::decode(model::translate(ckpt, enc[i], tag, decode), spec);
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw Error("back-translation failed: " + error);

  for (size_t i : live) {
    if (outputs[i].empty()) {
      ++res.stats.dropped_empty;
      continue;
    }
    corpus::SentencePair p;
    p.src = mono.sentences[i];
    p.tgt = outputs[i];
    p.src_lang = direction.src_lang;
    p.tgt_lang = direction.tgt_lang;
    p.origin = corpus::Origin::synthetic;
    p.source_name = "bt";
    res.corpus.pairs.push_back(std::move(p));
  }
  res.stats.produced = static_cast<int64_t>(res.corpus.size());
  return res;
}

BidiResult bidirectional_bt(const model::Checkpoint& ckpt, const corpus::MonoCorpus& mono_src,
                            const corpus::MonoCorpus& mono_tgt, const Direction& dir_fwd,
                            const Direction& dir_rev, const tok::TokenizerSpec& spec,
                            const model::DecodeConfig& decode) {
  if (dir_fwd.src_lang != dir_rev.tgt_lang || dir_fwd.tgt_lang != dir_rev.src_lang)
    throw InvalidArgument("directions are not mutual reverses");
  auto fwd = back_translate(ckpt, mono_src, dir_fwd, spec, decode);
  auto rev = back_translate(ckpt, mono_tgt, dir_rev, spec, decode);

  corpus::ParallelCorpus joined;
  joined.name = "bt";
  joined.langs = {dir_fwd.src_lang, dir_fwd.tgt_lang};
  joined.pairs = std::move(fwd.corpus.pairs);
  joined.pairs.insert(joined.pairs.end(), rev.corpus.pairs.begin(), rev.corpus.pairs.end());

  BidiResult res;
  res.fwd = fwd.stats;
  res.rev = rev.stats;
  const auto before = joined.pairs.size();
  res.corpus = corpus::deduplicate(joined);
  res.duplicates = static_cast<int64_t>(before - res.corpus.size());
  return res;
}

TrainResult tat_train(const model::Checkpoint& ckpt, const corpus::ParallelCorpus& d_bt,
                      const std::vector<Direction>& directions, const tok::TokenizerSpec& spec,
                      const StagePlan& plan) {
  plan.validate();
  if (plan.stage != Stage::tat) throw InvalidArgument("plan stage is not tat");
  check_vocab(ckpt, spec);

  TrainResult res;
  res.ckpt = ckpt;
  res.ckpt.lineage.push_back("tat");
  if (plan.steps == 0) return res;

  const auto exs = examples_from_pairs(d_bt.pairs, directions, spec, ckpt.config.max_len, true,
                                       plan.both_orientations);
  run_supervised(res.ckpt, exs, plan, plan.steps, plan.seed, res.losses, &res.counters,
                 &res.diverged);
  return res;
}

LabeledSet read_labeled(const std::string& path, const std::string& name) {
  LabeledSet set;
  set.name = name.empty() ? path : name;
  size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (str::trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      LabeledExample ex;
      ex.text = j.at("text").get<std::string>();
      ex.label = j.at("label").get<int32_t>();
      if (ex.label < 0 || ex.label >= model::kNumClasses)
        throw InvalidArgument("label out of range");
      set.examples.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const InvalidArgument& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return set;
}

void write_labeled(const LabeledSet& set, const std::string& path) {
  std::string out;
  for (const auto& ex : set.examples) {
    json j;
    j["text"] = ex.text;
    j["label"] = ex.label;
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

LabeledSet subsample(const LabeledSet& set, double fraction, uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw InvalidArgument("fraction must be in (0, 1], got " + std::to_string(fraction));
  std::vector<size_t> order(set.examples.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  const auto n =
      static_cast<size_t>(std::floor(fraction * static_cast<double>(set.examples.size())));
  LabeledSet out;
  out.name = set.name;
  for (size_t i = 0; i < n; ++i) out.examples.push_back(set.examples[order[i]]);
  return out;
}

FtResult finetune(const model::Checkpoint& ckpt, const corpus::ParallelCorpus& train,
                  const corpus::ParallelCorpus& dev, const std::vector<Direction>& directions,
                  const tok::TokenizerSpec& spec, const StagePlan& plan) {
  plan.validate();
  if (plan.stage != Stage::ft) throw InvalidArgument("plan stage is not ft");
  check_vocab(ckpt, spec);
  if (train.pairs.empty()) throw InvalidArgument("empty fine-tuning data");

  model::Checkpoint work = ckpt;
  work.lineage.push_back("ft");
  const auto exs = examples_from_pairs(train.pairs, directions, spec, work.config.max_len, true,
                                       plan.both_orientations);
  const auto dev_exs =
      examples_from_pairs(dev.pairs, directions, spec, work.config.max_len, true, false);

  FtResult res;
  res.best_dev = -std::numeric_limits<double>::infinity();
  auto state = optim::make_adam_state(work.params);
  Rng order_rng(derive_seed(plan.seed, "ft_order"));
  Rng drop_rng(derive_seed(plan.seed, "dropout"));
  Rng* drop = work.config.dropout > 0.0 ? &drop_rng : nullptr;
  std::vector<size_t> order(exs.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int64_t epoch = 1; epoch <= plan.epochs; ++epoch) {
    order_rng.shuffle(order);
    double ep_total = 0.0;
    int64_t ep_count = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(plan.batch_size)) {
      const std::vector<size_t> idx(
          order.begin() + static_cast<int64_t>(begin),
          order.begin() + static_cast<int64_t>(
                              std::min(order.size(), begin + static_cast<size_t>(plan.batch_size))));
      const auto lr = optim::train_step(work, make_tagged_batch(exs, idx), state, plan.hyper, drop);
      res.losses.push_back(lr.loss);
      ep_total += lr.loss * static_cast<double>(lr.count);
      ep_count += lr.count;
    }
    const double metric =
        dev_exs.empty() ? -(ep_total / static_cast<double>(std::max<int64_t>(1, ep_count)))
                        : -mean_example_loss(work, dev_exs, plan.batch_size);
    res.dev_history.push_back(metric);
    if (metric > res.best_dev) {
      res.best_dev = metric;
      res.best_epoch = epoch;
      res.ckpt = work;
    }
  }
  return res;
}

FtResult finetune(const model::Checkpoint& ckpt, const LabeledSet& train, const LabeledSet& dev,
                  const tok::TokenizerSpec& spec, const StagePlan& plan) {
  plan.validate();
  if (plan.stage != Stage::ft) throw InvalidArgument("plan stage is not ft");
  check_vocab(ckpt, spec);
  if (train.examples.empty()) throw InvalidArgument("empty fine-tuning data");

  model::Checkpoint work = ckpt;
  work.lineage.push_back("ft");
  const auto rows = encode_cls_rows(train.examples, spec, work.config.max_len);
  const auto dev_rows = encode_cls_rows(dev.examples, spec, work.config.max_len);
  std::vector<int32_t> dev_gold;
  for (const auto& e : dev.examples) dev_gold.push_back(e.label);

  FtResult res;
  res.best_dev = -std::numeric_limits<double>::infinity();
  auto state = optim::make_adam_state(work.params);
  Rng order_rng(derive_seed(plan.seed, "ft_order"));
  Rng drop_rng(derive_seed(plan.seed, "dropout"));
  Rng* drop = work.config.dropout > 0.0 ? &drop_rng : nullptr;
  std::vector<size_t> order(rows.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int64_t epoch = 1; epoch <= plan.epochs; ++epoch) {
    order_rng.shuffle(order);
    double ep_total = 0.0;
    int64_t ep_count = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(plan.batch_size)) {
      std::vector<std::vector<int32_t>> ids;
      std::vector<int32_t> labels;
      for (size_t i = begin; i < std::min(order.size(), begin + static_cast<size_t>(plan.batch_size));
           ++i) {
        ids.push_back(rows[order[i]]);
        labels.push_back(train.examples[order[i]].label);
      }
      const auto lr =
          optim::train_step(work, model::make_cls_batch(ids, labels), state, plan.hyper, drop);
      res.losses.push_back(lr.loss);
      ep_total += lr.loss * static_cast<double>(lr.count);
      ep_count += lr.count;
    }
    const double metric =
        dev_rows.empty()
            ? -(ep_total / static_cast<double>(std::max<int64_t>(1, ep_count)))
            : 100.0 * eval::macro_f1(predict_rows(work, dev_rows), dev_gold);
    res.dev_history.push_back(metric);
    if (metric > res.best_dev) {
      res.best_dev = metric;
      res.best_epoch = epoch;
      res.ckpt = work;
    }
  }
  return res;
}

std::string translate_text(const model::Checkpoint& ckpt, const std::string& text,
                           const Direction& direction, const tok::TokenizerSpec& spec,
                           const model::DecodeConfig& decode) {
  check_vocab(ckpt, spec);
  const auto ids = encode_trunc(text, spec, ckpt.config.max_len - 1);
  if (ids.empty()) return "";
  return tok::decode(model::translate(ckpt, ids, tag_id(direction, spec), decode), spec);
}

std::vector<int32_t> predict_labels(const model::Checkpoint& ckpt,
                                    const std::vector<std::string>& texts,
                                    const tok::TokenizerSpec& spec) {
  check_vocab(ckpt, spec);
  std::vector<LabeledExample> exs;
  for (const auto& t : texts) exs.push_back({t, 0});
  return predict_rows(ckpt, encode_cls_rows(exs, spec, ckpt.config.max_len));
}

double evaluate_bleu(const model::Checkpoint& ckpt, const corpus::ParallelCorpus& test,
                     const Direction& direction, const tok::TokenizerSpec& spec,
                     const model::DecodeConfig& decode, eval::Smoothing smoothing) {
  direction.validate();
  if (test.pairs.empty()) throw InvalidArgument("empty test corpus");
  std::vector<std::vector<std::string>> hyps, refs;
  for (const auto& p : test.pairs) {
    const std::string* in = nullptr;
    const std::string* ref = nullptr;
    if (p.src_lang == direction.src_lang && p.tgt_lang == direction.tgt_lang) {
      in = &p.src;
      ref = &p.tgt;
    } else if (p.tgt_lang == direction.src_lang && p.src_lang == direction.tgt_lang) {
      in = &p.tgt;
      ref = &p.src;
    } else {
      throw InvalidArgument("pair languages do not match the direction");
    }
    hyps.push_back(str::split_ws(translate_text(ckpt, *in, direction, spec, decode)));
    refs.push_back(str::split_ws(*ref));
  }
  return eval::corpus_bleu(hyps, refs, 4, smoothing).score;
}

double evaluate_f1(const model::Checkpoint& ckpt, const LabeledSet& test,
                   const tok::TokenizerSpec& spec) {
  if (test.examples.empty()) throw InvalidArgument("empty test set");
  std::vector<std::string> texts;
  std::vector<int32_t> gold;
  for (const auto& e : test.examples) {
    texts.push_back(e.text);
    gold.push_back(e.label);
  }
  return 100.0 * eval::macro_f1(predict_labels(ckpt, texts, spec), gold);
}

void ExperimentCell::validate() const {
  if (id.empty()) throw InvalidArgument("experiment cell without an id");
  if (variant.empty()) throw InvalidArgument("cell " + id + " has no plan name");
  if (data_setting.empty()) throw InvalidArgument("cell " + id + " has no data setting");
  if (fraction && (*fraction <= 0.0 || *fraction > 1.0))
    throw InvalidArgument("cell " + id + " fraction must be in (0, 1]");
  if (direction) direction->validate();
}

namespace {

eval::ReportRow run_cell(const ExperimentCell& cell, const std::map<std::string, TrainPlan>& plans,
                         const DataRegistry& registry, const tok::TokenizerSpec& spec) {
  cell.validate();
  const auto pit = plans.find(cell.variant);
  if (pit == plans.end()) throw InvalidArgument("unknown plan: " + cell.variant);
  const TrainPlan& plan = pit->second;
  plan.validate();
  if (plan.config.vocab_size != static_cast<int64_t>(spec.vocab.size()))
    throw InvalidArgument("plan vocabulary size does not match the tokenizer");

  eval::ReportRow row;
  row.cell = cell.id;
  row.seed = cell.seed;
  row.fraction = cell.fraction;

  auto with_seed = [&](const StagePlan& st) {
    StagePlan s = st;
    s.seed = derive_seed(cell.seed, to_string(st.stage));
    return s;
  };

  model::Checkpoint cur = model::init_model(plan.config, cell.seed);

  if (cell.direction) {
    const Direction fwd = *cell.direction;
    const std::vector<Direction> dirs = {fwd, reverse(fwd)};
    auto train = lookup_parallel(registry, cell.data_setting + ".train");
    const auto& dev = lookup_parallel(registry, cell.data_setting + ".dev");
    const auto& test = lookup_parallel(registry, cell.data_setting + ".test");
    reject_synthetic(dev, "dev");
    reject_synthetic(test, "test");
    if (cell.fraction)
      train = corpus::subsample(train, *cell.fraction, derive_seed(cell.seed, "fraction"));
    row.data_sizes["train"] = static_cast<int64_t>(train.size());
    row.data_sizes["dev"] = static_cast<int64_t>(dev.size());
    row.data_sizes["test"] = static_cast<int64_t>(test.size());

    for (const auto& st : plan.stages) {
      const StagePlan s = with_seed(st);
      switch (s.stage) {
        case Stage::cat: {
          if (s.data.size() != 1)
            throw InvalidArgument("cat stage needs exactly one monolingual corpus");
          const auto& mono = lookup_mono(registry, s.data[0]);
          row.data_sizes["mono"] = static_cast<int64_t>(mono.size());
          cur = cat_pretrain(cur, mono, spec, s).ckpt;
          break;
        }
        case Stage::tat: {
          if (s.data.size() != 2)
            throw InvalidArgument("tat stage needs exactly two monolingual corpora");
          const auto& mono_a = lookup_mono(registry, s.data[0]);
          const auto& mono_b = lookup_mono(registry, s.data[1]);
          const Direction* bt_fwd = nullptr;
          const Direction* bt_rev = nullptr;
          for (const auto& d : dirs) {
            if (d.src_lang == mono_a.lang) bt_fwd = &d;
            if (d.src_lang == mono_b.lang) bt_rev = &d;
          }
          if (!bt_fwd || !bt_rev)
            throw InvalidArgument("monolingual corpora do not match the cell direction");
          model::Checkpoint gen = cur;
          if (s.generator_steps > 0) {
            const auto exs =
                examples_from_pairs(train.pairs, dirs, spec, cur.config.max_len, true, true);
            std::vector<double> gen_losses;
            run_supervised(gen, exs, s, s.generator_steps,
                           derive_seed(cell.seed, "generator"), gen_losses, nullptr, nullptr);
          }
          const auto bt =
              bidirectional_bt(gen, mono_a, mono_b, *bt_fwd, *bt_rev, spec, plan.decode);
          row.data_sizes["bt"] = static_cast<int64_t>(bt.corpus.size());
          cur = tat_train(cur, bt.corpus, dirs, spec, s).ckpt;
          break;
        }
        case Stage::ft: {
          const corpus::ParallelCorpus& ft_train =
              s.data.empty() ? train : lookup_parallel(registry, s.data[0]);
          if (!s.data.empty())
            row.data_sizes["train"] = static_cast<int64_t>(ft_train.size());
          cur = finetune(cur, ft_train, dev, dirs, spec, s).ckpt;
          break;
        }
      }
    }
    row.metric = "bleu";
    row.value = evaluate_bleu(cur, test, fwd, spec, plan.decode);
  } else {
    auto train = lookup_labeled(registry, cell.data_setting + ".train");
    const auto& dev = lookup_labeled(registry, cell.data_setting + ".dev");
    const auto& test = lookup_labeled(registry, cell.data_setting + ".test");
    if (cell.fraction)
      train = subsample(train, *cell.fraction, derive_seed(cell.seed, "fraction"));
    row.data_sizes["train"] = static_cast<int64_t>(train.size());
    row.data_sizes["dev"] = static_cast<int64_t>(dev.size());
    row.data_sizes["test"] = static_cast<int64_t>(test.size());

    for (const auto& st : plan.stages) {
      const StagePlan s = with_seed(st);
      switch (s.stage) {
        case Stage::cat: {
          if (s.data.size() != 1)
            throw InvalidArgument("cat stage needs exactly one monolingual corpus");
          const auto& mono = lookup_mono(registry, s.data[0]);
          row.data_sizes["mono"] = static_cast<int64_t>(mono.size());
          cur = cat_pretrain(cur, mono, spec, s).ckpt;
          break;
        }
        case Stage::tat:
          throw InvalidArgument("tat stage requires a translation cell");
        case Stage::ft: {
          const LabeledSet& ft_train =
              s.data.empty() ? train : lookup_labeled(registry, s.data[0]);
          if (!s.data.empty()) row.data_sizes["train"] = static_cast<int64_t>(ft_train.size());
          cur = finetune(cur, ft_train, dev, spec, s).ckpt;
          break;
        }
      }
    }
    row.metric = "macro_f1";
    row.value = evaluate_f1(cur, test, spec);
  }
  row.lineage = cur.lineage;
  return row;
}

}  // namespace

ExperimentResult run_experiment(const std::vector<ExperimentCell>& grid,
                                const std::map<std::string, TrainPlan>& plans,
                                const DataRegistry& registry, const tok::TokenizerSpec& spec,
                                const std::string& created_at) {
  std::set<std::pair<std::string, uint64_t>> seen;
  for (const auto& cell : grid)
    if (!seen.insert({cell.id, cell.seed}).second)
      throw InvalidArgument("duplicate grid cell: " + cell.id);

  ExperimentResult out;
  out.report.created_at = created_at;
  for (const auto& cell : grid) {
    try {
      out.report.rows.push_back(run_cell(cell, plans, registry, spec));
    } catch (const std::exception& e) {
      out.failures.push_back(cell.id + ": " + e.what());
    }
  }
  out.report.validate();
  return out;
}

}  // namespace pcmkit::adapt
