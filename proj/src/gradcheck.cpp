#include <numeric>
#include <unordered_set>
#include <vector>

#include "pcmkit/model.hpp"

namespace pcmkit::model {

namespace {

// Distinct flat parameter indexes; the whole store when sample_size covers it.
std::vector<int64_t> sample_coords(const ParamStore& params, size_t sample_size, uint64_t seed) {
  const int64_t total = params.total_size();
  std::vector<int64_t> picks;
  if (sample_size >= static_cast<size_t>(total)) {
    picks.resize(static_cast<size_t>(total));
    std::iota(picks.begin(), picks.end(), 0);
    return picks;
  }
  Rng rng(derive_seed(seed, "grad_check"));
  std::unordered_set<int64_t> seen;
  while (picks.size() < sample_size) {
    const auto idx = static_cast<int64_t>(rng.below(static_cast<uint64_t>(total)));
    if (seen.insert(idx).second) picks.push_back(idx);
  }
  return picks;
}

double* locate(ParamStore& params, int64_t flat) {
  for (auto& e : params.items) {
    if (flat < e.t.size()) return &e.t.v[static_cast<size_t>(flat)];
    flat -= e.t.size();
  }
  throw InvalidArgument("parameter index out of range");
}

template <typename LossFn, typename GradFn>
double run_check(const Checkpoint& ckpt, double eps, size_t sample_size, uint64_t seed,
                 LossFn loss_fn, GradFn grad_fn) {
  if (!(eps > 0.0)) throw InvalidArgument("grad_check eps must be positive");
  if (sample_size == 0) throw InvalidArgument("grad_check sample_size must be positive");
  if (ckpt.config.dropout != 0.0) throw InvalidArgument("grad_check requires dropout = 0");

  Checkpoint work = ckpt;
  ParamStore grads = work.params.like();
  grad_fn(work, grads);

  const auto picks = sample_coords(work.params, sample_size, seed);
  std::vector<double*> coords;
  std::vector<double> analytic;
  coords.reserve(picks.size());
  analytic.reserve(picks.size());
  for (int64_t flat : picks) {
    coords.push_back(locate(work.params, flat));
    analytic.push_back(*locate(grads, flat));
  }
  return grad_check_core([&] { return loss_fn(work); }, coords, analytic, eps);
}

}  // namespace

double grad_check(const Checkpoint& ckpt, const Batch& batch, double eps, size_t sample_size,
                  uint64_t seed, double label_smoothing) {
  return run_check(
      ckpt, eps, sample_size, seed,
      [&](const Checkpoint& c) { return seq2seq_loss(c, batch, label_smoothing).loss; },
      [&](const Checkpoint& c, ParamStore& g) {
        return seq2seq_loss_grad(c, batch, label_smoothing, g).loss;
      });
}

double grad_check(const Checkpoint& ckpt, const MlmBatch& batch, double eps, size_t sample_size,
                  uint64_t seed) {
  return run_check(
      ckpt, eps, sample_size, seed,
      [&](const Checkpoint& c) { return mlm_loss(c, batch).loss; },
      [&](const Checkpoint& c, ParamStore& g) { return mlm_loss_grad(c, batch, g).loss; });
}

double grad_check(const Checkpoint& ckpt, const ClsBatch& batch, double eps, size_t sample_size,
                  uint64_t seed) {
  return run_check(
      ckpt, eps, sample_size, seed,
      [&](const Checkpoint& c) { return classify_loss(c, batch).loss; },
      [&](const Checkpoint& c, ParamStore& g) { return classify_loss_grad(c, batch, g).loss; });
}

}  // namespace pcmkit::model
