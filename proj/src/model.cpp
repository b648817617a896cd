#include "pcmkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string_view>

#include "pcmkit/tokenize.hpp"

#include <json.hpp>

namespace pcmkit::model {

using json = nlohmann::ordered_json;

void ModelConfig::validate() const {
  if (enc_layers < 1 || dec_layers < 1 || heads < 1 || d_model < 1 || d_ff < 1 ||
      vocab_size < 1 || max_len < 1)
    throw InvalidArgument("model dimensions must all be >= 1");
  if (d_model % heads != 0)
    throw InvalidArgument("d_model " + std::to_string(d_model) + " not divisible by heads " +
                          std::to_string(heads));
  if (vocab_size <= static_cast<int64_t>(tok::kNumSpecials))
    throw InvalidArgument("vocab_size must exceed the special-token count");
  if (dropout < 0.0 || dropout >= 1.0) throw InvalidArgument("dropout must be in [0, 1)");
}

ModelConfig preset_config(const std::string& name) {
  ModelConfig c;
  c.preset_name = name;
  c.vocab_size = 4000;
  c.max_len = 256;
  if (name == "paper-word") {
    c.enc_layers = 4;
    c.dec_layers = 4;
    c.heads = 10;
    c.d_model = 300;
    c.d_ff = 4 * 300;
  } else if (name == "paper-bpe") {
    c.enc_layers = 6;
    c.dec_layers = 6;
    c.heads = 4;
    c.d_model = 256;
    c.d_ff = 4 * 256;
  } else {
    throw InvalidArgument("unknown preset: " + name);
  }
  c.validate();
  return c;
}

namespace {

void add_attn_params(ParamStore& p, const std::string& prefix, int64_t d) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) p.add(prefix + "." + w, d, d);
  for (const char* b : {"bq", "bk", "bv", "bo"}) p.add(prefix + "." + b, 1, d);
}

void add_ln_params(ParamStore& p, const std::string& prefix, int64_t d) {
  p.add(prefix + ".g", 1, d);
  p.add(prefix + ".b", 1, d);
}

void add_ff_params(ParamStore& p, const std::string& prefix, int64_t d, int64_t d_ff) {
  p.add(prefix + ".w1", d_ff, d);
  p.add(prefix + ".b1", 1, d_ff);
  p.add(prefix + ".w2", d, d_ff);
  p.add(prefix + ".b2", 1, d);
}

ParamStore build_params(const ModelConfig& c) {
  ParamStore p;
  p.add("embed", c.vocab_size, c.d_model);
  for (int64_t i = 0; i < c.enc_layers; ++i) {
    const auto pre = "enc." + std::to_string(i);
    add_ln_params(p, pre + ".ln1", c.d_model);
    add_attn_params(p, pre + ".att", c.d_model);
    add_ln_params(p, pre + ".ln2", c.d_model);
    add_ff_params(p, pre + ".ff", c.d_model, c.d_ff);
  }
  add_ln_params(p, "enc.ln", c.d_model);
  for (int64_t i = 0; i < c.dec_layers; ++i) {
    const auto pre = "dec." + std::to_string(i);
    add_ln_params(p, pre + ".ln1", c.d_model);
    add_attn_params(p, pre + ".self", c.d_model);
    add_ln_params(p, pre + ".ln2", c.d_model);
    add_attn_params(p, pre + ".cross", c.d_model);
    add_ln_params(p, pre + ".ln3", c.d_model);
    add_ff_params(p, pre + ".ff", c.d_model, c.d_ff);
  }
  add_ln_params(p, "dec.ln", c.d_model);
  p.add("mlm.w", c.d_model, c.d_model);
  p.add("mlm.b", 1, c.d_model);
  p.add("mlm.vb", 1, c.vocab_size);
  p.add("cls.w", kNumClasses, c.d_model);
  p.add("cls.b", 1, kNumClasses);
  return p;
}

bool is_gain(const std::string& name) {
  return name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
}

bool is_bias(const std::string& name) {
  const auto dot = name.rfind('.');
  if (dot == std::string::npos) return false;
  const std::string_view leaf{name.data() + dot + 1, name.size() - dot - 1};
  return leaf[0] == 'b' || leaf == "vb";
}

}  // namespace

Checkpoint init_model(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.seed = seed;
  ckpt.lineage = {"init"};
  ckpt.params = build_params(config);

  Rng rng(derive_seed(seed, "init_model"));
  for (auto& e : ckpt.params.items) {
    if (e.name == "embed") {
      const double std = 1.0 / std::sqrt(static_cast<double>(config.d_model));
      for (auto& x : e.t.v) x = rng.normal(0.0, std);
    } else if (is_gain(e.name)) {
      std::fill(e.t.v.begin(), e.t.v.end(), 1.0);
    } else if (is_bias(e.name)) {
      e.t.zero();
    } else {
      // weight matrices stored [out, in]: Xavier uniform
      const double limit = std::sqrt(6.0 / static_cast<double>(e.t.rows + e.t.cols));
      for (auto& x : e.t.v) x = rng.uniform(-limit, limit);
    }
  }
  snap_to_f32(ckpt);
  return ckpt;
}

void snap_to_f32(Checkpoint& ckpt) {
  if (ckpt.config.f64_grid) return;
  for (auto& e : ckpt.params.items)
    for (auto& x : e.t.v) x = static_cast<double>(static_cast<float>(x));
}

namespace {

constexpr char kMagic[] = "PCMKCKPT";
constexpr uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("truncated checkpoint: " + path);
  return v;
}

json config_to_json(const ModelConfig& c) {
  json j;
  j["enc_layers"] = c.enc_layers;
  j["dec_layers"] = c.dec_layers;
  j["heads"] = c.heads;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["vocab_size"] = c.vocab_size;
  j["max_len"] = c.max_len;
  j["dropout"] = c.dropout;
  j["preset_name"] = c.preset_name;
  j["f64_grid"] = c.f64_grid;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.enc_layers = j.at("enc_layers").get<int64_t>();
  c.dec_layers = j.at("dec_layers").get<int64_t>();
  c.heads = j.at("heads").get<int64_t>();
  c.d_model = j.at("d_model").get<int64_t>();
  c.d_ff = j.at("d_ff").get<int64_t>();
  c.vocab_size = j.at("vocab_size").get<int64_t>();
  c.max_len = j.at("max_len").get<int64_t>();
  c.dropout = j.at("dropout").get<double>();
  c.preset_name = j.at("preset_name").get<std::string>();
  c.f64_grid = j.at("f64_grid").get<bool>();
  c.validate();
  return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic) - 1);
  write_pod(out, kFormatVersion);

  json meta;
  meta["config"] = config_to_json(ckpt.config);
  meta["lineage"] = ckpt.lineage;
  meta["seed"] = ckpt.seed;
  meta["step"] = ckpt.step;
  const std::string meta_s = meta.dump();
  write_pod(out, static_cast<uint64_t>(meta_s.size()));
  out.write(meta_s.data(), static_cast<std::streamsize>(meta_s.size()));

  write_pod(out, static_cast<uint64_t>(ckpt.params.items.size()));
  for (const auto& e : ckpt.params.items) {
    write_pod(out, static_cast<uint64_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_pod(out, static_cast<int64_t>(e.t.rows));
    write_pod(out, static_cast<int64_t>(e.t.cols));
    std::vector<float> buf(e.t.v.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(e.t.v[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw FormatError("not a checkpoint file: " + path);
  const auto version = read_pod<uint32_t>(in, path);
  if (version != kFormatVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));

  const auto meta_len = read_pod<uint64_t>(in, path);
  std::string meta_s(meta_len, '\0');
  in.read(meta_s.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw FormatError("truncated checkpoint: " + path);

  Checkpoint ckpt;
  try {
    const auto meta = json::parse(meta_s);
    ckpt.config = config_from_json(meta.at("config"));
    ckpt.lineage = meta.at("lineage").get<std::vector<std::string>>();
    ckpt.seed = meta.at("seed").get<uint64_t>();
    ckpt.step = meta.at("step").get<int64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
  }

  ckpt.params = build_params(ckpt.config);
  const auto n_tensors = read_pod<uint64_t>(in, path);
  if (n_tensors != ckpt.params.items.size())
    throw FormatError("checkpoint tensor count does not match its config");
  for (auto& e : ckpt.params.items) {
    const auto name_len = read_pod<uint64_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    if (!in || name != e.name)
      throw FormatError("checkpoint tensor order mismatch at " + e.name);
    const auto rows = read_pod<int64_t>(in, path);
    const auto cols = read_pod<int64_t>(in, path);
    if (rows != e.t.rows || cols != e.t.cols)
      throw FormatError("checkpoint tensor shape mismatch at " + e.name);
    std::vector<float> buf(e.t.v.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw FormatError("truncated checkpoint: " + path);
    for (size_t i = 0; i < buf.size(); ++i) e.t.v[i] = static_cast<double>(buf[i]);
  }
  return ckpt;
}

void Batch::validate(const ModelConfig& config) const {
  if (batch < 1) throw InvalidArgument("empty batch");
  if (src_len > config.max_len || tgt_len > config.max_len)
    throw InvalidArgument("sequence length exceeds max_len " + std::to_string(config.max_len));
  if (static_cast<int64_t>(src.size()) != batch * src_len ||
      static_cast<int64_t>(tgt_in.size()) != batch * tgt_len ||
      static_cast<int64_t>(tgt_out.size()) != batch * tgt_len)
    throw InvalidArgument("batch id matrices do not match their declared shape");
  if (static_cast<int64_t>(src_lens.size()) != batch ||
      static_cast<int64_t>(tgt_lens.size()) != batch)
    throw InvalidArgument("batch length vectors do not match batch size");
  for (int64_t b = 0; b < batch; ++b) {
    if (src_lens[b] < 1 || src_lens[b] > src_len || tgt_lens[b] < 1 || tgt_lens[b] > tgt_len)
      throw InvalidArgument("per-example length out of range");
  }
  for (int32_t id : src)
    if (id < 0 || id >= config.vocab_size) throw InvalidArgument("source id out of range");
  for (int32_t id : tgt_in)
    if (id < 0 || id >= config.vocab_size) throw InvalidArgument("target id out of range");
  for (int32_t id : tgt_out)
    if (id < 0 || id >= config.vocab_size) throw InvalidArgument("target id out of range");
}

Batch make_batch(const std::vector<std::vector<int32_t>>& src_ids,
                 const std::vector<std::vector<int32_t>>& tgt_ids) {
  if (src_ids.empty() || src_ids.size() != tgt_ids.size())
    throw InvalidArgument("make_batch needs equal-size non-empty src and tgt lists");
  Batch b;
  b.batch = static_cast<int64_t>(src_ids.size());
  for (const auto& s : src_ids) {
    if (s.empty()) throw InvalidArgument("empty source sequence");
    b.src_len = std::max<int64_t>(b.src_len, static_cast<int64_t>(s.size()));
  }
  for (const auto& t : tgt_ids)
    b.tgt_len = std::max<int64_t>(b.tgt_len, static_cast<int64_t>(t.size()) + 1);
  b.src.assign(b.batch * b.src_len, tok::kPad);
  b.tgt_in.assign(b.batch * b.tgt_len, tok::kPad);
  b.tgt_out.assign(b.batch * b.tgt_len, tok::kPad);
  for (int64_t i = 0; i < b.batch; ++i) {
    const auto& s = src_ids[static_cast<size_t>(i)];
    const auto& t = tgt_ids[static_cast<size_t>(i)];
    std::copy(s.begin(), s.end(), b.src.begin() + i * b.src_len);
    b.src_lens.push_back(static_cast<int32_t>(s.size()));
    b.tgt_in[static_cast<size_t>(i * b.tgt_len)] = tok::kBos;
    std::copy(t.begin(), t.end(), b.tgt_in.begin() + i * b.tgt_len + 1);
    std::copy(t.begin(), t.end(), b.tgt_out.begin() + i * b.tgt_len);
    b.tgt_out[static_cast<size_t>(i * b.tgt_len) + t.size()] = tok::kEos;
    b.tgt_lens.push_back(static_cast<int32_t>(t.size()) + 1);
  }
  return b;
}

void MlmBatch::validate(const ModelConfig& config) const {
  if (batch < 1) throw InvalidArgument("empty batch");
  if (seq_len > config.max_len) throw InvalidArgument("sequence length exceeds max_len");
  if (static_cast<int64_t>(ids.size()) != batch * seq_len ||
      static_cast<int64_t>(lens.size()) != batch)
    throw InvalidArgument("mlm batch shapes inconsistent");
  if (positions.empty()) throw InvalidArgument("mlm batch has no labeled positions");
  if (positions.size() != labels.size())
    throw InvalidArgument("mlm positions and labels differ in length");
  for (auto p : positions)
    if (p < 0 || p >= batch * seq_len) throw InvalidArgument("mlm position out of range");
  for (int32_t id : ids)
    if (id < 0 || id >= config.vocab_size) throw InvalidArgument("mlm id out of range");
  for (int32_t id : labels)
    if (id < 0 || id >= config.vocab_size) throw InvalidArgument("mlm label out of range");
}

void ClsBatch::validate(const ModelConfig& config) const {
  if (batch < 1) throw InvalidArgument("empty batch");
  if (seq_len > config.max_len) throw InvalidArgument("sequence length exceeds max_len");
  if (static_cast<int64_t>(ids.size()) != batch * seq_len ||
      static_cast<int64_t>(lens.size()) != batch)
    throw InvalidArgument("classification batch shapes inconsistent");
  for (int64_t b = 0; b < batch; ++b)
    if (lens[b] < 1 || lens[b] > seq_len)
      throw InvalidArgument("classification input empty or over-long");
  if (!labels.empty()) {
    if (static_cast<int64_t>(labels.size()) != batch)
      throw InvalidArgument("label count does not match batch size");
    for (int32_t l : labels)
      if (l < 0 || l >= kNumClasses) throw InvalidArgument("class label out of range");
  }
  for (int32_t id : ids)
    if (id < 0 || id >= config.vocab_size) throw InvalidArgument("id out of range");
}

ClsBatch make_cls_batch(const std::vector<std::vector<int32_t>>& ids,
                        const std::vector<int32_t>& labels) {
  if (ids.empty()) throw InvalidArgument("empty classification batch");
  ClsBatch b;
  b.batch = static_cast<int64_t>(ids.size());
  for (const auto& s : ids) {
    if (s.empty()) throw InvalidArgument("empty classification input");
    b.seq_len = std::max<int64_t>(b.seq_len, static_cast<int64_t>(s.size()));
  }
  b.ids.assign(b.batch * b.seq_len, tok::kPad);
  for (int64_t i = 0; i < b.batch; ++i) {
    const auto& s = ids[static_cast<size_t>(i)];
    std::copy(s.begin(), s.end(), b.ids.begin() + i * b.seq_len);
    b.lens.push_back(static_cast<int32_t>(s.size()));
  }
  b.labels = labels;
  return b;
}

}  // namespace pcmkit::model
