#include "pcmkit/optimizer.hpp"

#include <cmath>
#include <string>

namespace pcmkit::optim {

void Hyper::validate() const {
  if (lr < 0.0) throw InvalidArgument("lr must be non-negative");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw InvalidArgument("betas must be in [0, 1)");
  if (eps <= 0.0) throw InvalidArgument("optimizer eps must be positive");
  if (warmup < 1) throw InvalidArgument("warmup must be >= 1");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw InvalidArgument("label_smoothing must be in [0, 1)");
}

AdamState make_adam_state(const ParamStore& params) {
  AdamState s;
  s.m = params.like();
  s.v = params.like();
  return s;
}

double lr_at(const Hyper& h, int64_t step) {
  if (step < 1) throw InvalidArgument("step is 1-based");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(h.warmup);
  if (h.inverse_sqrt) return h.lr * std::min(s / w, std::sqrt(w / s));
  return h.lr * std::min(1.0, s / w);
}

double global_norm(const ParamStore& grads) {
  double sq = 0.0;
  for (const auto& e : grads.items)
    for (double g : e.t.v) sq += g * g;
  return std::sqrt(sq);
}

double clip_gradients(ParamStore& grads, double clip_norm) {
  const double norm = global_norm(grads);
  if (clip_norm > 0.0 && norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (auto& e : grads.items)
      for (double& g : e.t.v) g *= scale;
  }
  return norm;
}

void adam_update(model::Checkpoint& ckpt, const ParamStore& grads, AdamState& state,
                 const Hyper& h) {
  if (grads.items.size() != ckpt.params.items.size() ||
      state.m.items.size() != ckpt.params.items.size())
    throw InvalidArgument("optimizer state does not match the parameter store");
  state.step += 1;
  const double lr = lr_at(h, state.step);
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < ckpt.params.items.size(); ++i) {
    auto& p = ckpt.params.items[i].t;
    const auto& g = grads.items[i].t;
    auto& m = state.m.items[i].t;
    auto& v = state.v.items[i].t;
    if (ckpt.params.items[i].name != grads.items[i].name || !p.same_shape(g))
      throw InvalidArgument("gradient store does not match parameters at " +
                            ckpt.params.items[i].name);
    for (size_t j = 0; j < p.v.size(); ++j) {
      m.v[j] = h.beta1 * m.v[j] + (1.0 - h.beta1) * g.v[j];
      v.v[j] = h.beta2 * v.v[j] + (1.0 - h.beta2) * g.v[j] * g.v[j];
      p.v[j] -= lr * (m.v[j] / bc1) / (std::sqrt(v.v[j] / bc2) + h.eps);
    }
  }
  model::snap_to_f32(ckpt);
}

namespace {

template <typename BatchT, typename GradFn>
model::LossResult step_impl(model::Checkpoint& ckpt, const BatchT& batch, AdamState& state,
                            const Hyper& h, Rng* dropout_rng, GradFn grad_fn) {
  h.validate();
  ParamStore grads = ckpt.params.like();
  const auto res = grad_fn(ckpt, batch, grads, dropout_rng);
  if (!std::isfinite(res.loss))
    throw TrainingDiverged("non-finite loss at step " + std::to_string(state.step + 1));
  const double norm = clip_gradients(grads, h.clip_norm);
  if (!std::isfinite(norm))
    throw TrainingDiverged("non-finite gradient norm at step " + std::to_string(state.step + 1));
  adam_update(ckpt, grads, state, h);
  ckpt.step += 1;
  return res;
}

}  // namespace

model::LossResult train_step(model::Checkpoint& ckpt, const model::Batch& batch,
                             AdamState& state, const Hyper& h, Rng* dropout_rng) {
  return step_impl(ckpt, batch, state, h, dropout_rng,
                   [&h](model::Checkpoint& c, const model::Batch& b, ParamStore& g, Rng* rng) {
                     return model::seq2seq_loss_grad(c, b, h.label_smoothing, g, rng);
                   });
}

model::LossResult train_step(model::Checkpoint& ckpt, const model::MlmBatch& batch,
                             AdamState& state, const Hyper& h, Rng* dropout_rng) {
  return step_impl(ckpt, batch, state, h, dropout_rng,
                   [](model::Checkpoint& c, const model::MlmBatch& b, ParamStore& g, Rng* rng) {
                     return model::mlm_loss_grad(c, b, g, rng);
                   });
}

model::LossResult train_step(model::Checkpoint& ckpt, const model::ClsBatch& batch,
                             AdamState& state, const Hyper& h, Rng* dropout_rng) {
  return step_impl(ckpt, batch, state, h, dropout_rng,
                   [](model::Checkpoint& c, const model::ClsBatch& b, ParamStore& g, Rng* rng) {
                     return model::classify_loss_grad(c, b, g, rng);
                   });
}

}  // namespace pcmkit::optim
