#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pcmkit/rng.hpp"
#include "pcmkit/tensor.hpp"

namespace pcmkit::model {

inline constexpr int kNumClasses = 3;  // positive / negative / neutral

struct ModelConfig {
  int64_t enc_layers = 2;
  int64_t dec_layers = 2;
  int64_t heads = 2;
  int64_t d_model = 32;
  int64_t d_ff = 128;
  int64_t vocab_size = 100;
  int64_t max_len = 128;
  double dropout = 0.0;
  std::string preset_name;
  // All math runs in double. By default parameters are kept on the 32-bit
  // float grid (init and every update round through float) so the f32
  // checkpoint format is lossless and save->load->forward is identity.
  // f64_grid disables the rounding for gradient-check verification runs.
  bool f64_grid = false;

  void validate() const;
};

// "paper-word" = 4-4 layers, 10 heads, d_model 300; "paper-bpe" = 6-6
// layers, 4 heads, d_model 256; both d_ff = 4*d_model, vocab 4000.
ModelConfig preset_config(const std::string& name);

struct Checkpoint {
  ModelConfig config;
  ParamStore params;
  std::vector<std::string> lineage;  // append-only: init, cat, tat, ft
  uint64_t seed = 0;
  int64_t step = 0;
};

Checkpoint init_model(const ModelConfig& config, uint64_t seed);

// Container layout: magic, format version, JSON metadata (config, lineage,
// seed, step), then named tensors as little-endian 32-bit floats.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Rounds every parameter through float; no-op under f64_grid.
void snap_to_f32(Checkpoint& ckpt);

// Flattened row-major id matrices; row index = example*len + position.
// Valid lengths are explicit and everything past them is padding whose
// content never influences non-pad outputs.
struct Batch {
  int64_t batch = 0;
  int64_t src_len = 0;
  int64_t tgt_len = 0;
  std::vector<int32_t> src;
  std::vector<int32_t> tgt_in;   // <bos> y1 .. yn pad..
  std::vector<int32_t> tgt_out;  // y1 .. yn <eos> pad..
  std::vector<int32_t> src_lens;
  std::vector<int32_t> tgt_lens;

  void validate(const ModelConfig& config) const;
};

// Pads and wraps target ids with bos/eos; src rows are taken as given (the
// caller prepends the direction tag).
Batch make_batch(const std::vector<std::vector<int32_t>>& src_ids,
                 const std::vector<std::vector<int32_t>>& tgt_ids);

struct MlmBatch {
  int64_t batch = 0;
  int64_t seq_len = 0;
  std::vector<int32_t> ids;  // with masking applied
  std::vector<int32_t> lens;
  std::vector<int64_t> positions;  // flat row indexes carrying an MLM label
  std::vector<int32_t> labels;     // original token at each labeled position

  void validate(const ModelConfig& config) const;
};

struct ClsBatch {
  int64_t batch = 0;
  int64_t seq_len = 0;
  std::vector<int32_t> ids;
  std::vector<int32_t> lens;
  std::vector<int32_t> labels;  // in [0, kNumClasses); empty for inference

  void validate(const ModelConfig& config) const;
};

ClsBatch make_cls_batch(const std::vector<std::vector<int32_t>>& ids,
                        const std::vector<int32_t>& labels);

// Decoder logits, row-major [batch*tgt_len, vocab_size].
Tensor forward(const Checkpoint& ckpt, const Batch& batch);

struct LossResult {
  double loss = 0.0;
  int64_t count = 0;  // tokens (seq2seq), masked positions (mlm), examples (cls)
};

// Mean cross-entropy over non-pad target tokens, optional label smoothing.
LossResult seq2seq_loss(const Checkpoint& ckpt, const Batch& batch,
                        double label_smoothing = 0.0);
// Same loss plus parameter gradients accumulated into `grads` (shaped
// params.like()). dropout_rng enables training dropout; inference paths and
// gradient checks run without it.
LossResult seq2seq_loss_grad(const Checkpoint& ckpt, const Batch& batch,
                             double label_smoothing, ParamStore& grads,
                             Rng* dropout_rng = nullptr);

// Encoder + dedicated head, cross-entropy at the labeled positions only.
LossResult mlm_loss(const Checkpoint& ckpt, const MlmBatch& batch);
LossResult mlm_loss_grad(const Checkpoint& ckpt, const MlmBatch& batch, ParamStore& grads,
                         Rng* dropout_rng = nullptr);

// Class probabilities [batch, kNumClasses] from mean-pooled encoder states.
Tensor classify(const Checkpoint& ckpt, const ClsBatch& batch);
LossResult classify_loss(const Checkpoint& ckpt, const ClsBatch& batch);
LossResult classify_loss_grad(const Checkpoint& ckpt, const ClsBatch& batch,
                              ParamStore& grads, Rng* dropout_rng = nullptr);

struct DecodeConfig {
  enum class Mode { greedy, beam };
  Mode mode = Mode::greedy;
  int beam_size = 4;
  int64_t max_len = 64;  // generated tokens, excluding bos/eos
};

// Runs the model on [tag] + src_ids; returns generated ids without specials.
// Greedy argmax (ties to the lowest id) or length-normalized beam search;
// beam_size=1 equals greedy.
std::vector<int32_t> translate(const Checkpoint& ckpt, const std::vector<int32_t>& src_ids,
                               int32_t direction_tag, const DecodeConfig& cfg);

// Max relative error |bp - fd| / (|bp| + |fd| + 1e-3) of backprop against
// central finite differences over sample_size randomly chosen parameters.
// The 1e-3 floor keeps near-zero gradients from inflating the ratio at the
// noise level of the finite difference itself. Requires dropout = 0.
double grad_check(const Checkpoint& ckpt, const Batch& batch, double eps, size_t sample_size,
                  uint64_t seed, double label_smoothing = 0.0);
double grad_check(const Checkpoint& ckpt, const MlmBatch& batch, double eps,
                  size_t sample_size, uint64_t seed);
double grad_check(const Checkpoint& ckpt, const ClsBatch& batch, double eps,
                  size_t sample_size, uint64_t seed);

// Shared finite-difference core behind the overloads above: perturbs each
// addressed coordinate in place, re-evaluates `loss`, and compares the
// central difference against the matching `analytic` entry. Exposed so the
// metric can be validated on objectives with known gradients, where central
// differences are exact up to rounding.
double grad_check_core(const std::function<double()>& loss, const std::vector<double*>& coords,
                       const std::vector<double>& analytic, double eps);

}  // namespace pcmkit::model
