#pragma once

#include <cstdint>

#include "pcmkit/model.hpp"
#include "pcmkit/rng.hpp"
#include "pcmkit/tensor.hpp"

namespace pcmkit::optim {

struct Hyper {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double clip_norm = 1.0;  // <= 0 disables clipping
  int64_t warmup = 400;
  // Inverse-sqrt decay after warmup: lr * min(step/warmup, sqrt(warmup/step)).
  // When off the schedule ramps up linearly and then stays flat.
  bool inverse_sqrt = true;
  double label_smoothing = 0.0;

  void validate() const;
};

struct AdamState {
  ParamStore m;
  ParamStore v;
  int64_t step = 0;
};

AdamState make_adam_state(const ParamStore& params);

// Effective learning rate at a 1-based step.
double lr_at(const Hyper& h, int64_t step);

double global_norm(const ParamStore& grads);

// Scales grads in place when their global norm exceeds clip_norm; returns
// the pre-clip norm.
double clip_gradients(ParamStore& grads, double clip_norm);

// One bias-corrected Adam update; parameters re-snap to the f32 grid unless
// the checkpoint config keeps the f64 grid.
void adam_update(model::Checkpoint& ckpt, const ParamStore& grads, AdamState& state,
                 const Hyper& h);

// Loss and gradients on the batch, clip, Adam update, counters advanced.
// Throws TrainingDiverged when the loss or gradient norm is non-finite.
model::LossResult train_step(model::Checkpoint& ckpt, const model::Batch& batch,
                             AdamState& state, const Hyper& h, Rng* dropout_rng = nullptr);
model::LossResult train_step(model::Checkpoint& ckpt, const model::MlmBatch& batch,
                             AdamState& state, const Hyper& h, Rng* dropout_rng = nullptr);
model::LossResult train_step(model::Checkpoint& ckpt, const model::ClsBatch& batch,
                             AdamState& state, const Hyper& h, Rng* dropout_rng = nullptr);

}  // namespace pcmkit::optim
