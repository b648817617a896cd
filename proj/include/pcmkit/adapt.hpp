#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pcmkit/corpus.hpp"
#include "pcmkit/eval.hpp"
#include "pcmkit/model.hpp"
#include "pcmkit/optimizer.hpp"
#include "pcmkit/tokenize.hpp"

namespace pcmkit::adapt {

struct MaskingConfig {
  double mask_rate = 0.15;
  // Of the selected positions: replaced by <mask>, replaced by a random
  // non-special token, or left as-is.
  double p_mask = 0.8;
  double p_random = 0.1;
  double p_keep = 0.1;
  uint64_t seed = 0;  // standalone mask_tokens only; stages stream from the plan seed

  void validate() const;
};

struct MaskResult {
  std::vector<int32_t> ids;        // input with masking applied
  std::vector<int64_t> positions;  // selected positions, ascending
  std::vector<int32_t> labels;     // original token at each selected position
};

// Selects exactly max(1, round(mask_rate * n)) of the n non-special
// positions without replacement, then rewrites each per the scheme
// probabilities. Errors when the sequence has no non-special tokens.
MaskResult mask_tokens(const std::vector<int32_t>& ids, const MaskingConfig& cfg,
                       int32_t vocab_size);

struct Direction {
  corpus::LanguageTag src_lang;
  corpus::LanguageTag tgt_lang;
  std::string tag_token;  // vocabulary special marking "translate into tgt_lang"

  void validate() const;
};

// Builds a direction with the built-in tag for the target language; only
// "eng" and "pcm" have tags.
Direction make_direction(const corpus::LanguageTag& src, const corpus::LanguageTag& tgt);
Direction reverse(const Direction& d);

int32_t tag_id(const Direction& d, const tok::TokenizerSpec& spec);

enum class Stage { cat, tat, ft };

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

struct StagePlan {
  Stage stage = Stage::ft;
  // Registry corpus names: cat takes one monolingual corpus, tat takes two
  // (one per language), ft takes an optional explicit train set and
  // otherwise uses the experiment cell's task data.
  std::vector<std::string> data;
  int64_t steps = 0;   // optimizer steps for cat/tat
  int64_t epochs = 1;  // passes over the train set for ft
  int64_t batch_size = 8;
  optim::Hyper hyper;
  MaskingConfig masking;           // cat; the rate/scheme fields only
  bool both_orientations = false;  // tat: also train real->synthetic; ft: also train flipped pairs
  int64_t generator_steps = 0;     // tat: supervised steps for the back-translation generator
  uint64_t seed = 0;

  void validate() const;
};

struct TrainPlan {
  model::ModelConfig config;
  model::DecodeConfig decode;  // back-translation and evaluation decoding
  std::vector<StagePlan> stages;  // ordered subset of cat, tat, ft

  void validate() const;
};

struct TrainResult {
  model::Checkpoint ckpt;
  std::vector<double> losses;  // one entry per completed optimizer step
  // tat: examples consumed per direction tag; cat: sequences consumed
  std::map<std::string, int64_t> counters;
  bool diverged = false;  // training aborted; ckpt is the last finite state
};

// Masked-LM training over the monolingual corpus for plan.steps steps.
// Appends "cat" to the lineage even at 0 steps. On divergence returns the
// checkpoint from before the failing update.
TrainResult cat_pretrain(const model::Checkpoint& ckpt, const corpus::MonoCorpus& mono,
                         const tok::TokenizerSpec& spec, const StagePlan& plan);

struct BtStats {
  int64_t input = 0;
  int64_t produced = 0;
  int64_t dropped_empty = 0;  // empty inputs or empty model outputs
};

struct BtResult {
  corpus::ParallelCorpus corpus;
  BtStats stats;
};

// Translates every sentence of `mono` (which must be in direction.src_lang)
// and pairs it with the output: src = the real sentence, tgt = the model
// translation, origin = synthetic, source_name = "bt". Pairs with empty
// translations are dropped and counted.
BtResult back_translate(const model::Checkpoint& ckpt, const corpus::MonoCorpus& mono,
                        const Direction& direction, const tok::TokenizerSpec& spec,
                        const model::DecodeConfig& decode);

struct BidiResult {
  corpus::ParallelCorpus corpus;
  BtStats fwd;
  BtStats rev;
  int64_t duplicates = 0;
};

// Union of back_translate in both directions, deduplicated; the synthetic
// side of every pair is the model-generated tgt.
BidiResult bidirectional_bt(const model::Checkpoint& ckpt, const corpus::MonoCorpus& mono_src,
                            const corpus::MonoCorpus& mono_tgt, const Direction& dir_fwd,
                            const Direction& dir_rev, const tok::TokenizerSpec& spec,
                            const model::DecodeConfig& decode);

// Supervised seq2seq training on back-translation data for plan.steps steps
// in one mixed stream. Synthetic pairs are consumed with the synthetic text
// on the source side (gold text is the target); plan.both_orientations adds
// the flipped examples. Real pairs train as stored. Appends "tat".
TrainResult tat_train(const model::Checkpoint& ckpt, const corpus::ParallelCorpus& d_bt,
                      const std::vector<Direction>& directions, const tok::TokenizerSpec& spec,
                      const StagePlan& plan);

struct LabeledExample {
  std::string text;
  int32_t label = 0;  // [0, model::kNumClasses)
};

struct LabeledSet {
  std::vector<LabeledExample> examples;
  std::string name;

  size_t size() const { return examples.size(); }
};

// One {"text", "label"} object per line.
LabeledSet read_labeled(const std::string& path, const std::string& name = "");
void write_labeled(const LabeledSet& set, const std::string& path);

// First floor(fraction * n) examples of the seeded shuffle.
LabeledSet subsample(const LabeledSet& set, double fraction, uint64_t seed);

struct FtResult {
  model::Checkpoint ckpt;           // best-dev checkpoint
  std::vector<double> losses;       // per optimizer step
  std::vector<double> dev_history;  // dev metric after each epoch
  int64_t best_epoch = 0;           // 1-based
  double best_dev = 0.0;
};

// Supervised fine-tuning for plan.epochs passes; appends "ft" and returns
// the checkpoint with the best dev metric. The dev metric is negative mean
// per-token dev loss for translation and macro-F1 (percent) for
// classification; with an empty dev set the epoch's mean train loss stands
// in (negated). Pairs train as stored src->tgt; plan.both_orientations adds
// the flipped examples.
FtResult finetune(const model::Checkpoint& ckpt, const corpus::ParallelCorpus& train,
                  const corpus::ParallelCorpus& dev, const std::vector<Direction>& directions,
                  const tok::TokenizerSpec& spec, const StagePlan& plan);
FtResult finetune(const model::Checkpoint& ckpt, const LabeledSet& train, const LabeledSet& dev,
                  const tok::TokenizerSpec& spec, const StagePlan& plan);

std::string translate_text(const model::Checkpoint& ckpt, const std::string& text,
                           const Direction& direction, const tok::TokenizerSpec& spec,
                           const model::DecodeConfig& decode);

std::vector<int32_t> predict_labels(const model::Checkpoint& ckpt,
                                    const std::vector<std::string>& texts,
                                    const tok::TokenizerSpec& spec);

// Greedy/beam-decodes the direction's source side of every pair and scores
// against the other side, on whitespace tokens. Smoothing defaults to add_k
// because desk-scale test sets rarely cover 4-grams.
double evaluate_bleu(const model::Checkpoint& ckpt, const corpus::ParallelCorpus& test,
                     const Direction& direction, const tok::TokenizerSpec& spec,
                     const model::DecodeConfig& decode,
                     eval::Smoothing smoothing = eval::Smoothing::add_k);

// Macro-F1 of predicted vs gold labels, as a percentage.
double evaluate_f1(const model::Checkpoint& ckpt, const LabeledSet& test,
                   const tok::TokenizerSpec& spec);

struct ExperimentCell {
  std::string id;            // report row id, e.g. "cat" or "tat-0.2"
  std::string variant;       // plan name
  std::string data_setting;  // registry stem; "<stem>.train/.dev/.test" must exist
  uint64_t seed = 0;
  std::optional<double> fraction;       // train subsample for learning curves
  std::optional<Direction> direction;   // translation cell; classification when absent

  void validate() const;
};

struct DataRegistry {
  std::map<std::string, corpus::ParallelCorpus> parallel;
  std::map<std::string, corpus::MonoCorpus> mono;
  std::map<std::string, LabeledSet> labeled;
};

struct ExperimentResult {
  eval::EvalReport report;            // one row per successful cell
  std::vector<std::string> failures;  // "<cell id>: <diagnostic>"
};

// Runs every cell end-to-end: resolve the task splits, apply the fraction,
// initialize from the cell seed, run the plan stages (with per-cell derived
// stage seeds), evaluate on the test split. Metric values are percentages.
// Synthetic pairs are rejected from dev/test splits. A failing cell is
// recorded and the remaining cells still run; identical inputs produce
// byte-identical metric values.
ExperimentResult run_experiment(const std::vector<ExperimentCell>& grid,
                                const std::map<std::string, TrainPlan>& plans,
                                const DataRegistry& registry, const tok::TokenizerSpec& spec,
                                const std::string& created_at = "");

}  // namespace pcmkit::adapt
