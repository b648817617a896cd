#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pcmkit/kernels.hpp"
#include "pcmkit/model.hpp"
#include "pcmkit/tokenize.hpp"

namespace pcmkit::model {

namespace {

constexpr double kLnEps = 1e-5;

void add_inplace(Tensor& a, const Tensor& b) {
  for (size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

Tensor pos_table(int64_t seq, int64_t d) {
  Tensor p(seq, d);
  for (int64_t t = 0; t < seq; ++t)
    for (int64_t i = 0; i < d; ++i) {
      const double expo = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
      const double angle = static_cast<double>(t) / std::pow(10000.0, expo);
      p.at(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return p;
}

struct DropCache {
  Tensor mask;  // 0 or 1/keep, applied multiplicatively on both passes
  bool active = false;
};

void dropout_forward(Tensor& x, double rate, Rng* rng, DropCache& dc) {
  dc.active = rng != nullptr && rate > 0.0;
  if (!dc.active) return;
  dc.mask = Tensor(x.rows, x.cols);
  const double keep = 1.0 - rate;
  for (size_t i = 0; i < x.v.size(); ++i) {
    dc.mask.v[i] = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
    x.v[i] *= dc.mask.v[i];
  }
}

void dropout_backward(Tensor& d, const DropCache& dc) {
  if (!dc.active) return;
  for (size_t i = 0; i < d.v.size(); ++i) d.v[i] *= dc.mask.v[i];
}

struct LnCache {
  Tensor xhat;
  std::vector<double> inv_std;
  Tensor out;
};

void ln_forward(const ParamStore& p, const std::string& prefix, const Tensor& x, LnCache& c) {
  const Tensor& g = p.get(prefix + ".g");
  const Tensor& b = p.get(prefix + ".b");
  c.xhat = Tensor(x.rows, x.cols);
  c.inv_std.assign(static_cast<size_t>(x.rows), 0.0);
  c.out = Tensor(x.rows, x.cols);
  kern::layernorm_rows(x.v.data(), g.v.data(), b.v.data(), c.out.v.data(), c.xhat.v.data(),
                       c.inv_std.data(), x.rows, x.cols, kLnEps);
}

void ln_backward(const ParamStore& p, const std::string& prefix, const LnCache& c,
                 const Tensor& dy, Tensor& dx, ParamStore& grads) {
  kern::layernorm_backward(c.xhat, c.inv_std, p.get(prefix + ".g"), dy, dx,
                           grads.get(prefix + ".g"), grads.get(prefix + ".b"));
}

struct AttnCache {
  Tensor q, k, v;             // projected activations, [B*Tq, d] / [B*Tk, d]
  std::vector<Tensor> probs;  // per (example, head), each [Tq, Tk]
  Tensor ctx;                 // heads concatenated back, [B*Tq, d]
};

// Scores for key positions at or past kv_lens[b] are forced to kNegInf
// before the softmax, as are future positions when causal. Every query row
// keeps at least one finite score because lengths are >= 1.
Tensor mha_forward(const ParamStore& p, const std::string& prefix, const Tensor& x_q,
                   const Tensor& x_kv, int64_t batch, int64_t heads,
                   const std::vector<int32_t>& kv_lens, bool causal, AttnCache& c) {
  const int64_t d = x_q.cols;
  const int64_t tq = x_q.rows / batch;
  const int64_t tk = x_kv.rows / batch;
  const int64_t dh = d / heads;
  kern::linear_forward(x_q, p.get(prefix + ".wq"), p.get(prefix + ".bq"), c.q);
  kern::linear_forward(x_kv, p.get(prefix + ".wk"), p.get(prefix + ".bk"), c.k);
  kern::linear_forward(x_kv, p.get(prefix + ".wv"), p.get(prefix + ".bv"), c.v);
  c.ctx = Tensor(x_q.rows, d);
  c.probs.assign(static_cast<size_t>(batch * heads), Tensor());
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor qh(tq, dh), kh(tk, dh), vh(tk, dh), s(tq, tk), ctxh(tq, dh);
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t h = 0; h < heads; ++h) {
      for (int64_t i = 0; i < tq; ++i) {
        const double* src = c.q.row(b * tq + i) + h * dh;
        std::copy(src, src + dh, qh.row(i));
      }
      for (int64_t j = 0; j < tk; ++j) {
        const double* ks = c.k.row(b * tk + j) + h * dh;
        const double* vs = c.v.row(b * tk + j) + h * dh;
        std::copy(ks, ks + dh, kh.row(j));
        std::copy(vs, vs + dh, vh.row(j));
      }
      kern::matmul_nt(qh.v.data(), kh.v.data(), s.v.data(), tq, dh, tk);
      for (int64_t i = 0; i < tq; ++i)
        for (int64_t j = 0; j < tk; ++j) {
          if (j >= kv_lens[static_cast<size_t>(b)] || (causal && j > i))
            s.at(i, j) = kern::kNegInf;
          else
            s.at(i, j) *= scale;
        }
      kern::softmax_rows(s.v.data(), tq, tk);
      c.probs[static_cast<size_t>(b * heads + h)] = s;
      kern::matmul_nn(s.v.data(), vh.v.data(), ctxh.v.data(), tq, tk, dh);
      for (int64_t i = 0; i < tq; ++i)
        std::copy(ctxh.row(i), ctxh.row(i) + dh, c.ctx.row(b * tq + i) + h * dh);
    }
  }
  Tensor out;
  kern::linear_forward(c.ctx, p.get(prefix + ".wo"), p.get(prefix + ".bo"), out);
  return out;
}

// Accumulates input gradients into d_xq / d_xkv (the same tensor may be
// passed for both in self-attention) and parameter gradients into grads.
// Masked probabilities are zero, so their score gradients vanish on their
// own and no mask is consulted here.
void mha_backward(const ParamStore& p, const std::string& prefix, const Tensor& x_q,
                  const Tensor& x_kv, int64_t batch, int64_t heads, const AttnCache& c,
                  const Tensor& d_out, Tensor& d_xq, Tensor& d_xkv, ParamStore& grads) {
  const int64_t d = x_q.cols;
  const int64_t tq = x_q.rows / batch;
  const int64_t tk = x_kv.rows / batch;
  const int64_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor d_ctx;
  kern::linear_backward(c.ctx, p.get(prefix + ".wo"), d_out, d_ctx, grads.get(prefix + ".wo"),
                        grads.get(prefix + ".bo"));

  Tensor dq(c.q.rows, d), dk(c.k.rows, d), dv(c.v.rows, d);
  Tensor qh(tq, dh), kh(tk, dh), vh(tk, dh), dctxh(tq, dh);
  Tensor dp(tq, tk), ds(tq, tk), dqh(tq, dh), dkh(tk, dh), dvh(tk, dh);
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t h = 0; h < heads; ++h) {
      for (int64_t i = 0; i < tq; ++i) {
        const double* qs = c.q.row(b * tq + i) + h * dh;
        const double* cs = d_ctx.row(b * tq + i) + h * dh;
        std::copy(qs, qs + dh, qh.row(i));
        std::copy(cs, cs + dh, dctxh.row(i));
      }
      for (int64_t j = 0; j < tk; ++j) {
        const double* ks = c.k.row(b * tk + j) + h * dh;
        const double* vs = c.v.row(b * tk + j) + h * dh;
        std::copy(ks, ks + dh, kh.row(j));
        std::copy(vs, vs + dh, vh.row(j));
      }
      const Tensor& probs = c.probs[static_cast<size_t>(b * heads + h)];
      kern::matmul_nt(dctxh.v.data(), vh.v.data(), dp.v.data(), tq, dh, tk);
      kern::matmul_tn(probs.v.data(), dctxh.v.data(), dvh.v.data(), tk, tq, dh);
      kern::softmax_backward_rows(probs.v.data(), dp.v.data(), ds.v.data(), tq, tk);
      for (auto& x : ds.v) x *= scale;
      kern::matmul_nn(ds.v.data(), kh.v.data(), dqh.v.data(), tq, tk, dh);
      kern::matmul_tn(ds.v.data(), qh.v.data(), dkh.v.data(), tk, tq, dh);
      for (int64_t i = 0; i < tq; ++i)
        std::copy(dqh.row(i), dqh.row(i) + dh, dq.row(b * tq + i) + h * dh);
      for (int64_t j = 0; j < tk; ++j) {
        std::copy(dkh.row(j), dkh.row(j) + dh, dk.row(b * tk + j) + h * dh);
        std::copy(dvh.row(j), dvh.row(j) + dh, dv.row(b * tk + j) + h * dh);
      }
    }
  }

  Tensor tmp;
  kern::linear_backward(x_q, p.get(prefix + ".wq"), dq, tmp, grads.get(prefix + ".wq"),
                        grads.get(prefix + ".bq"));
  add_inplace(d_xq, tmp);
  kern::linear_backward(x_kv, p.get(prefix + ".wk"), dk, tmp, grads.get(prefix + ".wk"),
                        grads.get(prefix + ".bk"));
  add_inplace(d_xkv, tmp);
  kern::linear_backward(x_kv, p.get(prefix + ".wv"), dv, tmp, grads.get(prefix + ".wv"),
                        grads.get(prefix + ".bv"));
  add_inplace(d_xkv, tmp);
}

struct FfCache {
  Tensor h1;  // pre-activation
  Tensor act;
};

Tensor ff_forward(const ParamStore& p, const std::string& prefix, const Tensor& x, FfCache& c) {
  kern::linear_forward(x, p.get(prefix + ".w1"), p.get(prefix + ".b1"), c.h1);
  c.act = Tensor(c.h1.rows, c.h1.cols);
  kern::relu(c.h1.v.data(), c.act.v.data(), c.h1.size());
  Tensor out;
  kern::linear_forward(c.act, p.get(prefix + ".w2"), p.get(prefix + ".b2"), out);
  return out;
}

void ff_backward(const ParamStore& p, const std::string& prefix, const Tensor& x,
                 const FfCache& c, const Tensor& d_out, Tensor& dx, ParamStore& grads) {
  Tensor d_act;
  kern::linear_backward(c.act, p.get(prefix + ".w2"), d_out, d_act, grads.get(prefix + ".w2"),
                        grads.get(prefix + ".b2"));
  Tensor d_h1(c.h1.rows, c.h1.cols);
  kern::relu_backward(c.h1.v.data(), d_act.v.data(), d_h1.v.data(), c.h1.size());
  kern::linear_backward(x, p.get(prefix + ".w1"), d_h1, dx, grads.get(prefix + ".w1"),
                        grads.get(prefix + ".b1"));
}

void embed_rows(const Checkpoint& ckpt, const std::vector<int32_t>& ids, int64_t batch,
                int64_t seq, Tensor& x) {
  const Tensor& e = ckpt.params.get("embed");
  const int64_t d = ckpt.config.d_model;
  const double scale = std::sqrt(static_cast<double>(d));
  const Tensor pos = pos_table(seq, d);
  x = Tensor(batch * seq, d);
  for (int64_t r = 0; r < x.rows; ++r) {
    const double* er = e.row(ids[static_cast<size_t>(r)]);
    const double* pr = pos.row(r % seq);
    double* xr = x.row(r);
    for (int64_t i = 0; i < d; ++i) xr[i] = er[i] * scale + pr[i];
  }
}

void embed_backward(const Checkpoint& ckpt, const std::vector<int32_t>& ids,
                    const DropCache& drop, Tensor& dx, ParamStore& grads) {
  dropout_backward(dx, drop);
  Tensor& de = grads.get("embed");
  const double scale = std::sqrt(static_cast<double>(ckpt.config.d_model));
  for (int64_t r = 0; r < dx.rows; ++r) {
    double* dst = de.row(ids[static_cast<size_t>(r)]);
    const double* src = dx.row(r);
    for (int64_t i = 0; i < dx.cols; ++i) dst[i] += src[i] * scale;
  }
}

struct EncLayerCache {
  LnCache ln1;
  AttnCache att;
  DropCache drop1;
  LnCache ln2;
  FfCache ff;
  DropCache drop2;
};

struct EncCache {
  int64_t batch = 0;
  int64_t seq = 0;
  std::vector<int32_t> ids;
  std::vector<int32_t> lens;
  DropCache embed_drop;
  std::vector<EncLayerCache> layers;
  LnCache final_ln;
};

const Tensor& encode(const Checkpoint& ckpt, const std::vector<int32_t>& ids, int64_t batch,
                     int64_t seq, const std::vector<int32_t>& lens, Rng* rng, EncCache& c) {
  const auto& p = ckpt.params;
  const auto& cfg = ckpt.config;
  c.batch = batch;
  c.seq = seq;
  c.ids = ids;
  c.lens = lens;
  Tensor x;
  embed_rows(ckpt, ids, batch, seq, x);
  dropout_forward(x, cfg.dropout, rng, c.embed_drop);
  c.layers.assign(static_cast<size_t>(cfg.enc_layers), EncLayerCache{});
  for (int64_t i = 0; i < cfg.enc_layers; ++i) {
    auto& lc = c.layers[static_cast<size_t>(i)];
    const std::string pre = "enc." + std::to_string(i);
    ln_forward(p, pre + ".ln1", x, lc.ln1);
    Tensor att =
        mha_forward(p, pre + ".att", lc.ln1.out, lc.ln1.out, batch, cfg.heads, lens, false, lc.att);
    dropout_forward(att, cfg.dropout, rng, lc.drop1);
    add_inplace(x, att);
    ln_forward(p, pre + ".ln2", x, lc.ln2);
    Tensor ff = ff_forward(p, pre + ".ff", lc.ln2.out, lc.ff);
    dropout_forward(ff, cfg.dropout, rng, lc.drop2);
    add_inplace(x, ff);
  }
  ln_forward(p, "enc.ln", x, c.final_ln);
  return c.final_ln.out;
}

void encode_backward(const Checkpoint& ckpt, const EncCache& c, const Tensor& d_enc_out,
                     ParamStore& grads) {
  const auto& p = ckpt.params;
  Tensor dx;
  ln_backward(p, "enc.ln", c.final_ln, d_enc_out, dx, grads);
  for (int64_t i = ckpt.config.enc_layers - 1; i >= 0; --i) {
    const auto& lc = c.layers[static_cast<size_t>(i)];
    const std::string pre = "enc." + std::to_string(i);
    Tensor d_branch = dx;
    dropout_backward(d_branch, lc.drop2);
    Tensor d_ln2_out;
    ff_backward(p, pre + ".ff", lc.ln2.out, lc.ff, d_branch, d_ln2_out, grads);
    Tensor d_res;
    ln_backward(p, pre + ".ln2", lc.ln2, d_ln2_out, d_res, grads);
    add_inplace(dx, d_res);

    d_branch = dx;
    dropout_backward(d_branch, lc.drop1);
    Tensor d_ln1_out(dx.rows, dx.cols);
    mha_backward(p, pre + ".att", lc.ln1.out, lc.ln1.out, c.batch, ckpt.config.heads, lc.att,
                 d_branch, d_ln1_out, d_ln1_out, grads);
    ln_backward(p, pre + ".ln1", lc.ln1, d_ln1_out, d_res, grads);
    add_inplace(dx, d_res);
  }
  embed_backward(ckpt, c.ids, c.embed_drop, dx, grads);
}

struct DecLayerCache {
  LnCache ln1;
  AttnCache self;
  DropCache drop1;
  LnCache ln2;
  AttnCache cross;
  DropCache drop2;
  LnCache ln3;
  FfCache ff;
  DropCache drop3;
};

struct DecCache {
  int64_t batch = 0;
  int64_t seq = 0;
  std::vector<int32_t> ids;
  std::vector<int32_t> lens;
  std::vector<int32_t> src_lens;
  DropCache embed_drop;
  std::vector<DecLayerCache> layers;
  LnCache final_ln;
};

const Tensor& decode(const Checkpoint& ckpt, const std::vector<int32_t>& tgt_ids, int64_t batch,
                     int64_t seq, const std::vector<int32_t>& tgt_lens, const Tensor& enc_out,
                     const std::vector<int32_t>& src_lens, Rng* rng, DecCache& c) {
  const auto& p = ckpt.params;
  const auto& cfg = ckpt.config;
  c.batch = batch;
  c.seq = seq;
  c.ids = tgt_ids;
  c.lens = tgt_lens;
  c.src_lens = src_lens;
  Tensor x;
  embed_rows(ckpt, tgt_ids, batch, seq, x);
  dropout_forward(x, cfg.dropout, rng, c.embed_drop);
  c.layers.assign(static_cast<size_t>(cfg.dec_layers), DecLayerCache{});
  for (int64_t i = 0; i < cfg.dec_layers; ++i) {
    auto& lc = c.layers[static_cast<size_t>(i)];
    const std::string pre = "dec." + std::to_string(i);
    ln_forward(p, pre + ".ln1", x, lc.ln1);
    Tensor self = mha_forward(p, pre + ".self", lc.ln1.out, lc.ln1.out, batch, cfg.heads,
                              tgt_lens, true, lc.self);
    dropout_forward(self, cfg.dropout, rng, lc.drop1);
    add_inplace(x, self);
    ln_forward(p, pre + ".ln2", x, lc.ln2);
    Tensor cross = mha_forward(p, pre + ".cross", lc.ln2.out, enc_out, batch, cfg.heads,
                               src_lens, false, lc.cross);
    dropout_forward(cross, cfg.dropout, rng, lc.drop2);
    add_inplace(x, cross);
    ln_forward(p, pre + ".ln3", x, lc.ln3);
    Tensor ff = ff_forward(p, pre + ".ff", lc.ln3.out, lc.ff);
    dropout_forward(ff, cfg.dropout, rng, lc.drop3);
    add_inplace(x, ff);
  }
  ln_forward(p, "dec.ln", x, c.final_ln);
  return c.final_ln.out;
}

void decode_backward(const Checkpoint& ckpt, const DecCache& c, const Tensor& enc_out,
                     const Tensor& d_dec_out, Tensor& d_enc_out, ParamStore& grads) {
  const auto& p = ckpt.params;
  Tensor dx;
  ln_backward(p, "dec.ln", c.final_ln, d_dec_out, dx, grads);
  for (int64_t i = ckpt.config.dec_layers - 1; i >= 0; --i) {
    const auto& lc = c.layers[static_cast<size_t>(i)];
    const std::string pre = "dec." + std::to_string(i);
    Tensor d_branch = dx;
    dropout_backward(d_branch, lc.drop3);
    Tensor d_ln3_out;
    ff_backward(p, pre + ".ff", lc.ln3.out, lc.ff, d_branch, d_ln3_out, grads);
    Tensor d_res;
    ln_backward(p, pre + ".ln3", lc.ln3, d_ln3_out, d_res, grads);
    add_inplace(dx, d_res);

    d_branch = dx;
    dropout_backward(d_branch, lc.drop2);
    Tensor d_ln2_out(dx.rows, dx.cols);
    mha_backward(p, pre + ".cross", lc.ln2.out, enc_out, c.batch, ckpt.config.heads, lc.cross,
                 d_branch, d_ln2_out, d_enc_out, grads);
    ln_backward(p, pre + ".ln2", lc.ln2, d_ln2_out, d_res, grads);
    add_inplace(dx, d_res);

    d_branch = dx;
    dropout_backward(d_branch, lc.drop1);
    Tensor d_ln1_out(dx.rows, dx.cols);
    mha_backward(p, pre + ".self", lc.ln1.out, lc.ln1.out, c.batch, ckpt.config.heads, lc.self,
                 d_branch, d_ln1_out, d_ln1_out, grads);
    ln_backward(p, pre + ".ln1", lc.ln1, d_ln1_out, d_res, grads);
    add_inplace(dx, d_res);
  }
  embed_backward(ckpt, c.ids, c.embed_drop, dx, grads);
}

Tensor tied_logits(const Checkpoint& ckpt, const Tensor& h) {
  const Tensor& e = ckpt.params.get("embed");
  Tensor logits(h.rows, e.rows);
  kern::matmul_nt(h.v.data(), e.v.data(), logits.v.data(), h.rows, h.cols, e.rows);
  return logits;
}

void tied_logits_backward(const Checkpoint& ckpt, const Tensor& h, const Tensor& dlogits,
                          Tensor& dh, ParamStore& grads) {
  const Tensor& e = ckpt.params.get("embed");
  dh = Tensor(h.rows, h.cols);
  kern::matmul_nn(dlogits.v.data(), e.v.data(), dh.v.data(), dlogits.rows, dlogits.cols, e.cols);
  kern::matmul_tn_acc(dlogits.v.data(), h.v.data(), grads.get("embed").v.data(), dlogits.cols,
                      dlogits.rows, h.cols);
}

// labels[r] < 0 marks an ignored row. Mean loss over labeled rows; when
// dlogits is given it is filled with (softmax - target)/count at labeled
// rows and zero elsewhere. The smoothed target is
// (1-smoothing)*onehot + smoothing/V.
LossResult cross_entropy(const Tensor& logits, const std::vector<int32_t>& labels,
                         double smoothing, Tensor* dlogits) {
  const int64_t vocab = logits.cols;
  int64_t count = 0;
  for (int32_t l : labels)
    if (l >= 0) ++count;
  if (count == 0) throw InvalidArgument("loss over zero labeled rows");
  if (dlogits) *dlogits = Tensor(logits.rows, vocab);
  double total = 0.0;
  std::vector<double> logp(static_cast<size_t>(vocab));
  for (int64_t r = 0; r < logits.rows; ++r) {
    const int32_t y = labels[static_cast<size_t>(r)];
    if (y < 0) continue;
    const double* x = logits.row(r);
    double mx = x[0];
    for (int64_t j = 1; j < vocab; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < vocab; ++j) sum += std::exp(x[j] - mx);
    const double lse = std::log(sum);
    double sum_logp = 0.0;
    for (int64_t j = 0; j < vocab; ++j) {
      logp[static_cast<size_t>(j)] = x[j] - mx - lse;
      sum_logp += logp[static_cast<size_t>(j)];
    }
    total -= (1.0 - smoothing) * logp[static_cast<size_t>(y)] +
             smoothing / static_cast<double>(vocab) * sum_logp;
    if (dlogits) {
      double* g = dlogits->row(r);
      const double inv = 1.0 / static_cast<double>(count);
      for (int64_t j = 0; j < vocab; ++j)
        g[j] = (std::exp(logp[static_cast<size_t>(j)]) -
                smoothing / static_cast<double>(vocab)) *
               inv;
      g[y] -= (1.0 - smoothing) * inv;
    }
  }
  return {total / static_cast<double>(count), count};
}

std::vector<int32_t> seq2seq_labels(const Batch& b) {
  std::vector<int32_t> labels(b.tgt_out.size(), -1);
  for (int64_t e = 0; e < b.batch; ++e)
    for (int64_t t = 0; t < b.tgt_lens[static_cast<size_t>(e)]; ++t)
      labels[static_cast<size_t>(e * b.tgt_len + t)] =
          b.tgt_out[static_cast<size_t>(e * b.tgt_len + t)];
  return labels;
}

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& positions) {
  Tensor out(static_cast<int64_t>(positions.size()), x.cols);
  for (size_t i = 0; i < positions.size(); ++i)
    std::copy(x.row(positions[i]), x.row(positions[i]) + x.cols,
              out.row(static_cast<int64_t>(i)));
  return out;
}

LossResult seq2seq_core(const Checkpoint& ckpt, const Batch& batch, double label_smoothing,
                        ParamStore* grads, Rng* rng) {
  batch.validate(ckpt.config);
  EncCache ec;
  DecCache dc;
  const Tensor& enc_out =
      encode(ckpt, batch.src, batch.batch, batch.src_len, batch.src_lens, rng, ec);
  const Tensor& dec_out = decode(ckpt, batch.tgt_in, batch.batch, batch.tgt_len, batch.tgt_lens,
                                 enc_out, batch.src_lens, rng, dc);
  Tensor logits = tied_logits(ckpt, dec_out);
  Tensor dlogits;
  const auto res =
      cross_entropy(logits, seq2seq_labels(batch), label_smoothing, grads ? &dlogits : nullptr);
  if (!grads) return res;
  Tensor d_dec;
  tied_logits_backward(ckpt, dec_out, dlogits, d_dec, *grads);
  Tensor d_enc(enc_out.rows, enc_out.cols);
  decode_backward(ckpt, dc, enc_out, d_dec, d_enc, *grads);
  encode_backward(ckpt, ec, d_enc, *grads);
  return res;
}

LossResult mlm_core(const Checkpoint& ckpt, const MlmBatch& batch, ParamStore* grads, Rng* rng) {
  batch.validate(ckpt.config);
  const auto& p = ckpt.params;
  EncCache ec;
  const Tensor& enc_out = encode(ckpt, batch.ids, batch.batch, batch.seq_len, batch.lens, rng, ec);
  Tensor rows = gather_rows(enc_out, batch.positions);
  Tensor h1;
  kern::linear_forward(rows, p.get("mlm.w"), p.get("mlm.b"), h1);
  Tensor act(h1.rows, h1.cols);
  kern::relu(h1.v.data(), act.v.data(), h1.size());
  Tensor logits = tied_logits(ckpt, act);
  kern::add_bias_rows(logits.v.data(), p.get("mlm.vb").v.data(), logits.rows, logits.cols);
  Tensor dlogits;
  const auto res = cross_entropy(logits, batch.labels, 0.0, grads ? &dlogits : nullptr);
  if (!grads) return res;
  Tensor& dvb = grads->get("mlm.vb");
  for (int64_t r = 0; r < dlogits.rows; ++r) {
    const double* g = dlogits.row(r);
    for (int64_t j = 0; j < dlogits.cols; ++j) dvb.v[static_cast<size_t>(j)] += g[j];
  }
  Tensor d_act;
  tied_logits_backward(ckpt, act, dlogits, d_act, *grads);
  Tensor d_h1(h1.rows, h1.cols);
  kern::relu_backward(h1.v.data(), d_act.v.data(), d_h1.v.data(), h1.size());
  Tensor d_rows;
  kern::linear_backward(rows, p.get("mlm.w"), d_h1, d_rows, grads->get("mlm.w"),
                        grads->get("mlm.b"));
  Tensor d_enc(enc_out.rows, enc_out.cols);
  for (size_t i = 0; i < batch.positions.size(); ++i) {
    double* dst = d_enc.row(batch.positions[i]);
    const double* src = d_rows.row(static_cast<int64_t>(i));
    for (int64_t j = 0; j < d_enc.cols; ++j) dst[j] += src[j];
  }
  encode_backward(ckpt, ec, d_enc, *grads);
  return res;
}

struct ClsForward {
  EncCache enc;
  Tensor pooled;
  Tensor logits;
};

void classify_forward(const Checkpoint& ckpt, const ClsBatch& batch, Rng* rng, ClsForward& f) {
  batch.validate(ckpt.config);
  const Tensor& enc_out =
      encode(ckpt, batch.ids, batch.batch, batch.seq_len, batch.lens, rng, f.enc);
  f.pooled = Tensor(batch.batch, ckpt.config.d_model);
  for (int64_t b = 0; b < batch.batch; ++b) {
    double* dst = f.pooled.row(b);
    const auto len = batch.lens[static_cast<size_t>(b)];
    for (int32_t t = 0; t < len; ++t) {
      const double* src = enc_out.row(b * batch.seq_len + t);
      for (int64_t i = 0; i < f.pooled.cols; ++i) dst[i] += src[i];
    }
    for (int64_t i = 0; i < f.pooled.cols; ++i) dst[i] /= static_cast<double>(len);
  }
  kern::linear_forward(f.pooled, ckpt.params.get("cls.w"), ckpt.params.get("cls.b"), f.logits);
}

LossResult classify_core(const Checkpoint& ckpt, const ClsBatch& batch, ParamStore* grads,
                         Rng* rng) {
  if (batch.labels.empty()) throw InvalidArgument("classification loss needs labels");
  ClsForward f;
  classify_forward(ckpt, batch, rng, f);
  Tensor dlogits;
  const auto res = cross_entropy(f.logits, batch.labels, 0.0, grads ? &dlogits : nullptr);
  if (!grads) return res;
  Tensor d_pooled;
  kern::linear_backward(f.pooled, ckpt.params.get("cls.w"), dlogits, d_pooled,
                        grads->get("cls.w"), grads->get("cls.b"));
  Tensor d_enc(batch.batch * batch.seq_len, ckpt.config.d_model);
  for (int64_t b = 0; b < batch.batch; ++b) {
    const auto len = batch.lens[static_cast<size_t>(b)];
    const double* src = d_pooled.row(b);
    for (int32_t t = 0; t < len; ++t) {
      double* dst = d_enc.row(b * batch.seq_len + t);
      for (int64_t i = 0; i < d_enc.cols; ++i) dst[i] = src[i] / static_cast<double>(len);
    }
  }
  encode_backward(ckpt, f.enc, d_enc, *grads);
  return res;
}

void log_softmax_inplace(std::vector<double>& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  const double lse = std::log(sum);
  for (double& v : x) v = v - mx - lse;
}

std::vector<int32_t> strip_specials(const std::vector<int32_t>& ids) {
  std::vector<int32_t> out;
  for (int32_t id : ids)
    if (id >= static_cast<int32_t>(tok::kNumSpecials)) out.push_back(id);
  return out;
}

}  // namespace

Tensor forward(const Checkpoint& ckpt, const Batch& batch) {
  batch.validate(ckpt.config);
  EncCache ec;
  DecCache dc;
  const Tensor& enc_out =
      encode(ckpt, batch.src, batch.batch, batch.src_len, batch.src_lens, nullptr, ec);
  const Tensor& dec_out = decode(ckpt, batch.tgt_in, batch.batch, batch.tgt_len, batch.tgt_lens,
                                 enc_out, batch.src_lens, nullptr, dc);
  return tied_logits(ckpt, dec_out);
}

LossResult seq2seq_loss(const Checkpoint& ckpt, const Batch& batch, double label_smoothing) {
  return seq2seq_core(ckpt, batch, label_smoothing, nullptr, nullptr);
}

LossResult seq2seq_loss_grad(const Checkpoint& ckpt, const Batch& batch, double label_smoothing,
                             ParamStore& grads, Rng* dropout_rng) {
  return seq2seq_core(ckpt, batch, label_smoothing, &grads, dropout_rng);
}

LossResult mlm_loss(const Checkpoint& ckpt, const MlmBatch& batch) {
  return mlm_core(ckpt, batch, nullptr, nullptr);
}

LossResult mlm_loss_grad(const Checkpoint& ckpt, const MlmBatch& batch, ParamStore& grads,
                         Rng* dropout_rng) {
  return mlm_core(ckpt, batch, &grads, dropout_rng);
}

Tensor classify(const Checkpoint& ckpt, const ClsBatch& batch) {
  ClsForward f;
  classify_forward(ckpt, batch, nullptr, f);
  Tensor probs = f.logits;
  kern::softmax_rows(probs.v.data(), probs.rows, probs.cols);
  return probs;
}

LossResult classify_loss(const Checkpoint& ckpt, const ClsBatch& batch) {
  return classify_core(ckpt, batch, nullptr, nullptr);
}

LossResult classify_loss_grad(const Checkpoint& ckpt, const ClsBatch& batch, ParamStore& grads,
                              Rng* dropout_rng) {
  return classify_core(ckpt, batch, &grads, dropout_rng);
}

std::vector<int32_t> translate(const Checkpoint& ckpt, const std::vector<int32_t>& src_ids,
                               int32_t direction_tag, const DecodeConfig& cfg) {
  ckpt.config.validate();
  if (src_ids.empty()) throw InvalidArgument("empty source sequence");
  if (direction_tag < 0 || direction_tag >= ckpt.config.vocab_size)
    throw InvalidArgument("direction tag outside the vocabulary");
  for (int32_t id : src_ids)
    if (id < 0 || id >= ckpt.config.vocab_size) throw InvalidArgument("source id out of range");
  if (cfg.beam_size < 1) throw InvalidArgument("beam_size must be >= 1");
  if (cfg.max_len < 1) throw InvalidArgument("decode max_len must be >= 1");

  std::vector<int32_t> src;
  src.reserve(src_ids.size() + 1);
  src.push_back(direction_tag);
  src.insert(src.end(), src_ids.begin(), src_ids.end());
  if (static_cast<int64_t>(src.size()) > ckpt.config.max_len)
    throw InvalidArgument("source longer than the model max_len");
  const std::vector<int32_t> src_lens{static_cast<int32_t>(src.size())};

  EncCache ec;
  const Tensor& enc_out =
      encode(ckpt, src, 1, static_cast<int64_t>(src.size()), src_lens, nullptr, ec);

  const int64_t gen_cap = std::min<int64_t>(cfg.max_len, ckpt.config.max_len - 1);

  auto next_logprobs = [&](const std::vector<int32_t>& prefix) {
    std::vector<int32_t> tgt_in;
    tgt_in.reserve(prefix.size() + 1);
    tgt_in.push_back(tok::kBos);
    tgt_in.insert(tgt_in.end(), prefix.begin(), prefix.end());
    const auto len = static_cast<int32_t>(tgt_in.size());
    DecCache dc;
    const Tensor& h = decode(ckpt, tgt_in, 1, len, {len}, enc_out, src_lens, nullptr, dc);
    const Tensor& e = ckpt.params.get("embed");
    std::vector<double> lp(static_cast<size_t>(ckpt.config.vocab_size));
    kern::matmul_nt(h.row(len - 1), e.v.data(), lp.data(), 1, h.cols, e.rows);
    log_softmax_inplace(lp);
    return lp;
  };

  if (cfg.mode == DecodeConfig::Mode::greedy) {
    std::vector<int32_t> out;
    for (int64_t step = 0; step < gen_cap; ++step) {
      const auto lp = next_logprobs(out);
      int32_t best = 0;
      for (size_t j = 1; j < lp.size(); ++j)
        if (lp[j] > lp[static_cast<size_t>(best)]) best = static_cast<int32_t>(j);
      if (best == tok::kEos) break;
      out.push_back(best);
    }
    return strip_specials(out);
  }

  struct Beam {
    std::vector<int32_t> ids;
    double sum = 0.0;
  };
  struct Done {
    std::vector<int32_t> ids;
    double norm = 0.0;
  };
  std::vector<Beam> active{Beam{}};
  std::vector<Done> done;
  const auto beam_size = static_cast<size_t>(cfg.beam_size);
  for (int64_t step = 0; step < gen_cap && !active.empty(); ++step) {
    struct Cand {
      double sum;
      size_t beam;
      int32_t token;
    };
    std::vector<Cand> cands;
    for (size_t bi = 0; bi < active.size(); ++bi) {
      const auto lp = next_logprobs(active[bi].ids);
      std::vector<int32_t> order(lp.size());
      for (size_t j = 0; j < lp.size(); ++j) order[j] = static_cast<int32_t>(j);
      const auto top = std::min(beam_size, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<int64_t>(top), order.end(),
                        [&](int32_t a, int32_t b) {
                          const double la = lp[static_cast<size_t>(a)];
                          const double lb = lp[static_cast<size_t>(b)];
                          return la != lb ? la > lb : a < b;
                        });
      for (size_t j = 0; j < top; ++j)
        cands.push_back({active[bi].sum + lp[static_cast<size_t>(order[j])], bi, order[j]});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.sum != b.sum) return a.sum > b.sum;
      if (a.beam != b.beam) return a.beam < b.beam;
      return a.token < b.token;
    });
    // The step keeps the top beam_size candidates overall: ones ending in
    // eos retire with a length-normalized score, the rest stay active.
    std::vector<Beam> next;
    size_t taken = 0;
    for (const auto& cand : cands) {
      if (taken >= beam_size) break;
      const Beam& parent = active[cand.beam];
      if (cand.token == tok::kEos) {
        done.push_back(
            {parent.ids, cand.sum / static_cast<double>(parent.ids.size() + 1)});
      } else {
        Beam b{parent.ids, cand.sum};
        b.ids.push_back(cand.token);
        next.push_back(std::move(b));
      }
      ++taken;
    }
    active = std::move(next);
    if (done.size() >= beam_size) break;
  }
  for (const auto& b : active)
    done.push_back({b.ids, b.sum / static_cast<double>(std::max<size_t>(1, b.ids.size()))});
  std::stable_sort(done.begin(), done.end(),
                   [](const Done& a, const Done& b) { return a.norm > b.norm; });
  return strip_specials(done.front().ids);
}

double grad_check_core(const std::function<double()>& loss, const std::vector<double*>& coords,
                       const std::vector<double>& analytic, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("grad_check eps must be positive");
  if (coords.size() != analytic.size())
    throw InvalidArgument("grad_check coordinate and gradient counts differ");
  double worst = 0.0;
  for (size_t i = 0; i < coords.size(); ++i) {
    double& slot = *coords[i];
    const double orig = slot;
    slot = orig + eps;
    const double lp = loss();
    slot = orig - eps;
    const double lm = loss();
    slot = orig;
    const double fd = (lp - lm) / (2.0 * eps);
    const double bp = analytic[i];
    const double rel = std::abs(bp - fd) / (std::abs(bp) + std::abs(fd) + 1e-3);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace pcmkit::model
