#include "pcmkit/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "pcmkit/ortho.hpp"

namespace pcmkit::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string fmt_exact(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string now_iso8601() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  std::string seconds() const {
    const std::chrono::duration<double> d = std::chrono::steady_clock::now() - t0;
    return fmt(d.count(), 3);
  }
};

// --- config parsing ---------------------------------------------------

[[noreturn]] void bad_key(const std::string& scope, const std::string& key) {
  throw FormatError("unknown config key: " + scope + key);
}

void check_keys(const json& j, const std::string& scope,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw FormatError("config section " + scope + "must be an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) bad_key(scope, item.key());
  }
}

double need_num(const json& v, const std::string& key) {
  if (!v.is_number()) throw FormatError("config key " + key + ": expected number");
  return v.get<double>();
}

int64_t need_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw FormatError("config key " + key + ": expected integer");
  return v.get<int64_t>();
}

bool need_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw FormatError("config key " + key + ": expected boolean");
  return v.get<bool>();
}

std::string need_str(const json& v, const std::string& key) {
  if (!v.is_string()) throw FormatError("config key " + key + ": expected string");
  return v.get<std::string>();
}

void parse_model(const json& j, const std::string& scope, model::ModelConfig& m) {
  check_keys(j, scope,
             {"enc_layers", "dec_layers", "heads", "d_model", "d_ff", "vocab_size", "max_len",
              "dropout", "f64_grid"});
  for (const auto& item : j.items()) {
    const auto& k = item.key();
    const auto key = scope + k;
    if (k == "enc_layers") m.enc_layers = need_int(item.value(), key);
    else if (k == "dec_layers") m.dec_layers = need_int(item.value(), key);
    else if (k == "heads") m.heads = need_int(item.value(), key);
    else if (k == "d_model") m.d_model = need_int(item.value(), key);
    else if (k == "d_ff") m.d_ff = need_int(item.value(), key);
    else if (k == "vocab_size") m.vocab_size = need_int(item.value(), key);
    else if (k == "max_len") m.max_len = need_int(item.value(), key);
    else if (k == "dropout") m.dropout = need_num(item.value(), key);
    else if (k == "f64_grid") m.f64_grid = need_bool(item.value(), key);
  }
}

void parse_hyper(const json& j, const std::string& scope, optim::Hyper& h) {
  check_keys(j, scope,
             {"lr", "beta1", "beta2", "eps", "clip_norm", "warmup", "inverse_sqrt",
              "label_smoothing"});
  for (const auto& item : j.items()) {
    const auto& k = item.key();
    const auto key = scope + k;
    if (k == "lr") h.lr = need_num(item.value(), key);
    else if (k == "beta1") h.beta1 = need_num(item.value(), key);
    else if (k == "beta2") h.beta2 = need_num(item.value(), key);
    else if (k == "eps") h.eps = need_num(item.value(), key);
    else if (k == "clip_norm") h.clip_norm = need_num(item.value(), key);
    else if (k == "warmup") h.warmup = need_int(item.value(), key);
    else if (k == "inverse_sqrt") h.inverse_sqrt = need_bool(item.value(), key);
    else if (k == "label_smoothing") h.label_smoothing = need_num(item.value(), key);
  }
}

void parse_masking(const json& j, const std::string& scope, adapt::MaskingConfig& m) {
  check_keys(j, scope, {"mask_rate", "p_mask", "p_random", "p_keep"});
  for (const auto& item : j.items()) {
    const auto& k = item.key();
    const auto key = scope + k;
    if (k == "mask_rate") m.mask_rate = need_num(item.value(), key);
    else if (k == "p_mask") m.p_mask = need_num(item.value(), key);
    else if (k == "p_random") m.p_random = need_num(item.value(), key);
    else if (k == "p_keep") m.p_keep = need_num(item.value(), key);
  }
}

void parse_decode(const json& j, const std::string& scope, model::DecodeConfig& d) {
  check_keys(j, scope, {"mode", "beam_size", "max_len"});
  for (const auto& item : j.items()) {
    const auto& k = item.key();
    const auto key = scope + k;
    if (k == "mode") {
      const auto mode = need_str(item.value(), key);
      if (mode == "greedy") d.mode = model::DecodeConfig::Mode::greedy;
      else if (mode == "beam") d.mode = model::DecodeConfig::Mode::beam;
      else throw FormatError("config key " + key + ": expected \"greedy\" or \"beam\"");
    } else if (k == "beam_size") {
      d.beam_size = static_cast<int>(need_int(item.value(), key));
    } else if (k == "max_len") {
      d.max_len = need_int(item.value(), key);
    }
  }
}

AppConfig config_from_parsed(const json& j) {
  AppConfig cfg;
  check_keys(j, "", {"preset", "model", "hyper", "masking", "decode"});
  if (j.contains("preset")) cfg.model = model_preset(need_str(j["preset"], "preset"));
  if (j.contains("model")) parse_model(j["model"], "model.", cfg.model);
  if (j.contains("hyper")) parse_hyper(j["hyper"], "hyper.", cfg.hyper);
  if (j.contains("masking")) parse_masking(j["masking"], "masking.", cfg.masking);
  if (j.contains("decode")) parse_decode(j["decode"], "decode.", cfg.decode);
  cfg.model.validate();
  cfg.hyper.validate();
  cfg.masking.validate();
  return cfg;
}

ordered_json config_to_json(const AppConfig& c) {
  ordered_json j;
  j["model"] = {{"enc_layers", c.model.enc_layers}, {"dec_layers", c.model.dec_layers},
                {"heads", c.model.heads},           {"d_model", c.model.d_model},
                {"d_ff", c.model.d_ff},             {"vocab_size", c.model.vocab_size},
                {"max_len", c.model.max_len},       {"dropout", c.model.dropout},
                {"f64_grid", c.model.f64_grid}};
  if (!c.model.preset_name.empty()) j["preset"] = c.model.preset_name;
  j["hyper"] = {{"lr", c.hyper.lr},
                {"beta1", c.hyper.beta1},
                {"beta2", c.hyper.beta2},
                {"eps", c.hyper.eps},
                {"clip_norm", c.hyper.clip_norm},
                {"warmup", c.hyper.warmup},
                {"inverse_sqrt", c.hyper.inverse_sqrt},
                {"label_smoothing", c.hyper.label_smoothing}};
  j["masking"] = {{"mask_rate", c.masking.mask_rate},
                  {"p_mask", c.masking.p_mask},
                  {"p_random", c.masking.p_random},
                  {"p_keep", c.masking.p_keep}};
  j["decode"] = {{"mode", c.decode.mode == model::DecodeConfig::Mode::beam ? "beam" : "greedy"},
                 {"beam_size", c.decode.beam_size},
                 {"max_len", c.decode.max_len}};
  return j;
}

json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// --- shared file plumbing ----------------------------------------------

corpus::LanguageTag lang_tag(const std::string& code) { return corpus::LanguageTag(code); }

corpus::ParallelCorpus read_parallel(const std::string& path, const std::string& src,
                                     const std::string& tgt, const std::string& name) {
  return corpus::ingest_parallel(resolve_input(path), corpus::ParallelFormat::jsonl,
                                 {lang_tag(src), lang_tag(tgt)}, name);
}

// Direction whose target side is `to`; the source is the other built-in
// language.
adapt::Direction direction_to(const std::string& to) {
  if (to == "pcm") return adapt::make_direction(lang_tag("eng"), lang_tag("pcm"));
  if (to == "eng") return adapt::make_direction(lang_tag("pcm"), lang_tag("eng"));
  throw InvalidArgument("--to must be eng or pcm, got: " + to);
}

// Plain text contributes one sentence per line; jsonl records contribute
// src/tgt or text fields.
std::vector<std::string> sentences_from_file(const std::string& path) {
  std::vector<std::string> out;
  const auto lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    const auto line = str::trim(lines[i]);
    if (line.empty()) continue;
    if (line[0] != '{') {
      out.push_back(line);
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    if (j.contains("src")) {
      out.push_back(j["src"].get<std::string>());
      if (j.contains("tgt")) out.push_back(j["tgt"].get<std::string>());
    } else if (j.contains("text")) {
      out.push_back(j["text"].get<std::string>());
    } else {
      throw FormatError(path + ":" + std::to_string(i + 1) +
                        ": record has neither src nor text");
    }
  }
  return out;
}

std::vector<int32_t> read_label_file(const std::string& path) {
  std::vector<int32_t> out;
  const auto lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    const auto line = str::trim(lines[i]);
    if (line.empty()) continue;
    try {
      size_t used = 0;
      const int v = std::stoi(line, &used);
      if (used != line.size()) throw std::invalid_argument("");
      out.push_back(static_cast<int32_t>(v));
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(i + 1) + ": expected an integer label");
    }
  }
  return out;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) {
    s += l;
    s += '\n';
  }
  write_file(path, s);
}

void write_curve(const std::string& path, const std::vector<double>& values) {
  std::vector<std::string> lines;
  lines.reserve(values.size());
  for (double v : values) lines.push_back(fmt_exact(v));
  write_lines(path, lines);
}

void add_hashed(std::vector<ManifestEntry>& entries, const std::string& path) {
  entries.push_back({path, content_hash(path)});
}

RunManifest start_manifest(const std::string& command, uint64_t seed,
                           const std::string& created_at) {
  RunManifest m;
  m.command = command;
  m.seed = seed;
  m.created_at = created_at.empty() ? now_iso8601() : created_at;
  return m;
}

// --- grid loading -------------------------------------------------------

tok::TokenizerSpec grid_tokenizer(const json& t, std::vector<std::string>& inputs) {
  check_keys(t, "tokenizer.", {"dir", "kind", "size", "sources", "marker"});
  if (t.contains("dir")) {
    const auto dir = resolve_input(need_str(t["dir"], "tokenizer.dir"));
    inputs.push_back((fs::path(dir) / "tokenizer.json").string());
    return load_tokenizer(dir);
  }
  if (!t.contains("sources"))
    throw FormatError("tokenizer needs either dir or kind/size/sources");
  std::vector<std::string> sentences;
  for (const auto& s : t["sources"]) {
    const auto path = resolve_input(need_str(s, "tokenizer.sources"));
    inputs.push_back(path);
    const auto more = sentences_from_file(path);
    sentences.insert(sentences.end(), more.begin(), more.end());
  }
  const auto kind = tok::tokenizer_kind_from_string(need_str(t.at("kind"), "tokenizer.kind"));
  const auto size = static_cast<size_t>(need_int(t.at("size"), "tokenizer.size"));
  const auto marker =
      t.contains("marker") ? need_str(t["marker"], "tokenizer.marker") : std::string("</w>");
  if (kind == tok::TokenizerKind::word)
    return tok::make_word_spec(tok::train_word_vocab(sentences, size));
  auto [merges, vocab] = tok::train_bpe_vocab(sentences, size, marker);
  return tok::make_bpe_spec(std::move(vocab), std::move(merges));
}

void grid_data(const json& d, adapt::DataRegistry& reg, std::vector<std::string>& inputs) {
  check_keys(d, "data.", {"parallel", "mono", "labeled"});
  if (d.contains("parallel")) {
    for (const auto& item : d["parallel"].items()) {
      const auto scope = "data.parallel." + item.key() + ".";
      check_keys(item.value(), scope, {"path", "src_lang", "tgt_lang"});
      const auto path = resolve_input(need_str(item.value().at("path"), scope + "path"));
      inputs.push_back(path);
      reg.parallel[item.key()] = corpus::ingest_parallel(
          path, corpus::ParallelFormat::jsonl,
          {lang_tag(need_str(item.value().at("src_lang"), scope + "src_lang")),
           lang_tag(need_str(item.value().at("tgt_lang"), scope + "tgt_lang"))},
          item.key());
    }
  }
  if (d.contains("mono")) {
    for (const auto& item : d["mono"].items()) {
      const auto scope = "data.mono." + item.key() + ".";
      check_keys(item.value(), scope, {"path", "lang"});
      const auto path = resolve_input(need_str(item.value().at("path"), scope + "path"));
      inputs.push_back(path);
      reg.mono[item.key()] = corpus::ingest_monolingual(
          path, lang_tag(need_str(item.value().at("lang"), scope + "lang")), item.key());
    }
  }
  if (d.contains("labeled")) {
    for (const auto& item : d["labeled"].items()) {
      const auto scope = "data.labeled." + item.key() + ".";
      std::string path;
      if (item.value().is_string()) {
        path = item.value().get<std::string>();
      } else {
        check_keys(item.value(), scope, {"path"});
        path = need_str(item.value().at("path"), scope + "path");
      }
      path = resolve_input(path);
      inputs.push_back(path);
      reg.labeled[item.key()] = adapt::read_labeled(path, item.key());
    }
  }
}

adapt::StagePlan grid_stage(const json& s, const std::string& scope, const AppConfig& base) {
  check_keys(s, scope,
             {"stage", "data", "steps", "epochs", "batch_size", "both_orientations",
              "generator_steps", "seed", "hyper", "masking"});
  adapt::StagePlan sp;
  sp.hyper = base.hyper;
  sp.masking = base.masking;
  sp.stage = adapt::stage_from_string(need_str(s.at("stage"), scope + "stage"));
  if (s.contains("data"))
    for (const auto& d : s["data"]) sp.data.push_back(need_str(d, scope + "data"));
  if (s.contains("steps")) sp.steps = need_int(s["steps"], scope + "steps");
  if (s.contains("epochs")) sp.epochs = need_int(s["epochs"], scope + "epochs");
  if (s.contains("batch_size")) sp.batch_size = need_int(s["batch_size"], scope + "batch_size");
  if (s.contains("both_orientations"))
    sp.both_orientations = need_bool(s["both_orientations"], scope + "both_orientations");
  if (s.contains("generator_steps"))
    sp.generator_steps = need_int(s["generator_steps"], scope + "generator_steps");
  if (s.contains("seed"))
    sp.seed = static_cast<uint64_t>(need_int(s["seed"], scope + "seed"));
  if (s.contains("hyper")) parse_hyper(s["hyper"], scope + "hyper.", sp.hyper);
  if (s.contains("masking")) parse_masking(s["masking"], scope + "masking.", sp.masking);
  return sp;
}

std::vector<adapt::ExperimentCell> grid_cells(const json& arr) {
  std::vector<adapt::ExperimentCell> cells;
  for (const auto& c : arr) {
    const auto scope = "cells[" + std::to_string(cells.size()) + "].";
    check_keys(c, scope, {"id", "variant", "data", "seed", "fraction", "src_lang", "tgt_lang"});
    adapt::ExperimentCell cell;
    cell.id = need_str(c.at("id"), scope + "id");
    cell.variant = need_str(c.at("variant"), scope + "variant");
    cell.data_setting = need_str(c.at("data"), scope + "data");
    cell.seed = static_cast<uint64_t>(need_int(c.at("seed"), scope + "seed"));
    if (c.contains("fraction")) cell.fraction = need_num(c["fraction"], scope + "fraction");
    if (c.contains("src_lang") != c.contains("tgt_lang"))
      throw FormatError(scope + "src_lang and tgt_lang must be given together");
    if (c.contains("src_lang"))
      cell.direction =
          adapt::make_direction(lang_tag(need_str(c["src_lang"], scope + "src_lang")),
                                lang_tag(need_str(c["tgt_lang"], scope + "tgt_lang")));
    cell.validate();
    cells.push_back(std::move(cell));
  }
  return cells;
}

}  // namespace

// --- public config / tokenizer / manifest -------------------------------

model::ModelConfig model_preset(const std::string& name) {
  model::ModelConfig m;
  if (name == "paper-word") {
    m.enc_layers = 4;
    m.dec_layers = 4;
    m.heads = 10;
    m.d_model = 300;
    m.d_ff = 1200;
  } else if (name == "paper-bpe") {
    m.enc_layers = 6;
    m.dec_layers = 6;
    m.heads = 4;
    m.d_model = 256;
    m.d_ff = 1024;
  } else {
    throw InvalidArgument("unknown preset: " + name);
  }
  m.vocab_size = 4000;
  m.max_len = 128;
  m.preset_name = name;
  return m;
}

AppConfig config_from_json(const std::string& text, const std::string& origin) {
  try {
    return config_from_parsed(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(origin + ": " + e.what());
  }
}

AppConfig load_config(const std::string& path) {
  const auto resolved = resolve_input(path);
  return config_from_json(read_file(resolved), resolved);
}

void save_tokenizer(const tok::TokenizerSpec& spec, const std::string& dir) {
  spec.validate();
  fs::create_directories(dir);
  ordered_json j;
  j["kind"] = tok::to_string(spec.kind);
  j["end_of_word_marker"] = spec.end_of_word_marker;
  write_file((fs::path(dir) / "tokenizer.json").string(), j.dump(2) + "\n");
  tok::save_vocab(spec.vocab, (fs::path(dir) / "vocab.txt").string());
  if (spec.merges) tok::save_merges(*spec.merges, (fs::path(dir) / "merges.txt").string());
}

tok::TokenizerSpec load_tokenizer(const std::string& dir) {
  const auto base = fs::path(resolve_input(dir));
  const auto j = parse_json_file((base / "tokenizer.json").string());
  check_keys(j, "tokenizer.", {"kind", "end_of_word_marker"});
  const auto kind = tok::tokenizer_kind_from_string(need_str(j.at("kind"), "tokenizer.kind"));
  auto vocab = tok::load_vocab((base / "vocab.txt").string());
  tok::TokenizerSpec spec;
  if (kind == tok::TokenizerKind::word) {
    spec = tok::make_word_spec(std::move(vocab));
  } else {
    spec = tok::make_bpe_spec(std::move(vocab), tok::load_merges((base / "merges.txt").string()));
  }
  if (j.contains("end_of_word_marker"))
    spec.end_of_word_marker = need_str(j["end_of_word_marker"], "tokenizer.end_of_word_marker");
  spec.validate();
  return spec;
}

std::string content_hash(const std::string& path) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(read_file(path));
  return os.str();
}

void write_manifest(const RunManifest& m, const std::string& path) {
  ordered_json j;
  j["command"] = m.command;
  j["created_at"] = m.created_at;
  j["seed"] = m.seed;
  j["config"] = m.config.empty() ? ordered_json() : ordered_json::parse(m.config);
  auto entries = [](const std::vector<ManifestEntry>& v, const char* key, const char* val) {
    ordered_json arr = ordered_json::array();
    for (const auto& e : v) arr.push_back({{key, e.name}, {val, e.value}});
    return arr;
  };
  j["inputs"] = entries(m.inputs, "path", "hash");
  j["artifacts"] = entries(m.artifacts, "path", "hash");
  j["timings"] = entries(m.timings, "stage", "seconds");
  const auto tmp = path + ".tmp";
  write_file(tmp, j.dump(2) + "\n");
  fs::rename(tmp, path);
}

RunManifest read_manifest(const std::string& path) {
  const auto j = parse_json_file(path);
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.created_at = j.at("created_at").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    if (!j.at("config").is_null()) m.config = j["config"].dump();
    auto entries = [](const json& arr, const char* key, const char* val) {
      std::vector<ManifestEntry> v;
      for (const auto& e : arr) {
        ManifestEntry entry;
        entry.name = e.at(key).get<std::string>();
        entry.value = e.at(val).is_string() ? e[val].get<std::string>() : e[val].dump();
        v.push_back(std::move(entry));
      }
      return v;
    };
    m.inputs = entries(j.at("inputs"), "path", "hash");
    m.artifacts = entries(j.at("artifacts"), "path", "hash");
    m.timings = entries(j.at("timings"), "stage", "seconds");
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return m;
}

GridFile load_grid(const std::string& path) {
  const auto resolved = resolve_input(path);
  const auto j = parse_json_file(resolved);
  check_keys(j, "", {"config", "tokenizer", "data", "plans", "cells"});
  GridFile g;
  g.inputs.push_back(resolved);
  if (j.contains("config")) g.config = config_from_parsed(j["config"]);
  if (!j.contains("tokenizer")) throw FormatError("grid is missing the tokenizer section");
  g.spec = grid_tokenizer(j["tokenizer"], g.inputs);
  if (j.contains("data")) grid_data(j["data"], g.registry, g.inputs);
  if (j.contains("plans")) {
    for (const auto& item : j["plans"].items()) {
      const auto scope = "plans." + item.key() + ".";
      check_keys(item.value(), scope, {"stages"});
      adapt::TrainPlan plan;
      plan.config = g.config.model;
      plan.config.vocab_size = static_cast<int64_t>(g.spec.vocab.size());
      plan.decode = g.config.decode;
      if (item.value().contains("stages")) {
        size_t i = 0;
        for (const auto& s : item.value()["stages"])
          plan.stages.push_back(
              grid_stage(s, scope + "stages[" + std::to_string(i++) + "].", g.config));
      }
      plan.validate();
      g.plans[item.key()] = std::move(plan);
    }
  }
  if (j.contains("cells")) g.cells = grid_cells(j["cells"]);
  return g;
}

std::string resolve_input(const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute() || fs::exists(path)) return path;
  if (const char* base = std::getenv("PCMKIT_DATA_DIR")) {
    const auto candidate = fs::path(base) / path;
    if (fs::exists(candidate)) return candidate.string();
  }
  return path;
}

// --- dispatcher ----------------------------------------------------------

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"English-Nigerian Pidgin adaptive training toolkit"};
  app.name("pcmkit");
  app.require_subcommand(1);

  // every subcommand carries these; most also take --out or --out-dir
  struct Common {
    uint64_t seed = 0;
    std::string config;
    std::string created_at;
  };

  auto add_common = [](CLI::App* sub, Common& c) {
    sub->add_option("--seed", c.seed, "root seed for this run");
    sub->add_option("--created-at", c.created_at,
                    "timestamp recorded in manifests and reports (default: now)");
  };

  // ingest ---------------------------------------------------------------
  struct {
    Common c;
    std::string in, format = "jsonl", src_lang = "eng", tgt_lang = "pcm", lang = "pcm";
    std::string name, outp;
  } ing;
  {
    auto* sub = app.add_subcommand("ingest", "read raw corpus files into the canonical jsonl");
    sub->add_option("--in", ing.in, "input file (or stem for line-aligned)")->required();
    sub->add_option("--format", ing.format, "jsonl | line-aligned | mono");
    sub->add_option("--src-lang", ing.src_lang, "source language code");
    sub->add_option("--tgt-lang", ing.tgt_lang, "target language code");
    sub->add_option("--lang", ing.lang, "language code for mono input");
    sub->add_option("--name", ing.name, "corpus name recorded on every pair");
    sub->add_option("--out", ing.outp, "output path")->required();
    add_common(sub, ing.c);
    sub->callback([&] {
      if (ing.format == "mono") {
        const auto mono =
            corpus::ingest_monolingual(resolve_input(ing.in), lang_tag(ing.lang), ing.name);
        corpus::write_monolingual(mono, ing.outp);
        out << "event=ingest format=mono sentences=" << mono.size() << " out=" << ing.outp
            << "\n";
        return;
      }
      const auto format = ing.format == "jsonl" ? corpus::ParallelFormat::jsonl
                          : ing.format == "line-aligned"
                              ? corpus::ParallelFormat::line_aligned
                              : throw InvalidArgument("--format must be jsonl, line-aligned "
                                                      "or mono, got: " +
                                                      ing.format);
      const auto c = corpus::ingest_parallel(resolve_input(ing.in), format,
                                             {lang_tag(ing.src_lang), lang_tag(ing.tgt_lang)},
                                             ing.name);
      corpus::write_jsonl(c, ing.outp);
      out << "event=ingest format=" << ing.format << " pairs=" << c.size()
          << " out=" << ing.outp << "\n";
    });
  }

  // align ----------------------------------------------------------------
  struct {
    Common c;
    std::string src, tgt, src_lang = "eng", tgt_lang = "pcm", name, outp, skipped;
  } al;
  {
    auto* sub = app.add_subcommand("align", "pair two keyed documents by exact key match");
    sub->add_option("--src", al.src, "keyed source document (key<TAB>text)")->required();
    sub->add_option("--tgt", al.tgt, "keyed target document")->required();
    sub->add_option("--src-lang", al.src_lang, "source language code");
    sub->add_option("--tgt-lang", al.tgt_lang, "target language code");
    sub->add_option("--name", al.name, "corpus name");
    sub->add_option("--out", al.outp, "output jsonl")->required();
    sub->add_option("--skipped", al.skipped, "write unmatched keys here");
    add_common(sub, al.c);
    sub->callback([&] {
      const auto res = corpus::align_by_key(
          corpus::read_keyed_document(resolve_input(al.src)),
          corpus::read_keyed_document(resolve_input(al.tgt)),
          {lang_tag(al.src_lang), lang_tag(al.tgt_lang)}, al.name);
      corpus::write_jsonl(res.corpus, al.outp);
      if (!al.skipped.empty()) write_lines(al.skipped, res.skipped);
      out << "event=align pairs=" << res.corpus.size() << " skipped=" << res.skipped.size()
          << " out=" << al.outp << "\n";
    });
  }

  // clean ----------------------------------------------------------------
  struct {
    Common c;
    std::string in, src_lang = "eng", tgt_lang = "pcm", outp;
    int64_t max_len = 200;
    double max_ratio = 9.0;
    bool dedup = false;
  } cl;
  {
    auto* sub = app.add_subcommand("clean", "drop empty, overlong and length-skewed pairs");
    sub->add_option("--in", cl.in, "input jsonl")->required();
    sub->add_option("--src-lang", cl.src_lang, "source language code");
    sub->add_option("--tgt-lang", cl.tgt_lang, "target language code");
    sub->add_option("--max-len", cl.max_len, "max tokens per side");
    sub->add_option("--max-ratio", cl.max_ratio, "max src/tgt length ratio");
    sub->add_flag("--dedup", cl.dedup, "also drop exact duplicate pairs");
    sub->add_option("--out", cl.outp, "output jsonl")->required();
    add_common(sub, cl.c);
    sub->callback([&] {
      const auto in = read_parallel(cl.in, cl.src_lang, cl.tgt_lang, "");
      auto res = corpus::clean_and_filter(in, static_cast<size_t>(cl.max_len), cl.max_ratio);
      size_t duplicates = 0;
      if (cl.dedup) {
        const auto before = res.corpus.size();
        res.corpus = corpus::deduplicate(res.corpus);
        duplicates = before - res.corpus.size();
      }
      corpus::write_jsonl(res.corpus, cl.outp);
      out << "event=clean kept=" << res.corpus.size()
          << " dropped_empty=" << res.stats.dropped_empty
          << " dropped_length=" << res.stats.dropped_length
          << " dropped_ratio=" << res.stats.dropped_ratio << " duplicates=" << duplicates
          << " out=" << cl.outp << "\n";
    });
  }

  // merge ----------------------------------------------------------------
  struct {
    Common c;
    std::vector<std::string> in;
    std::string src_lang = "eng", tgt_lang = "pcm", name, outp;
  } mg;
  {
    auto* sub = app.add_subcommand("merge", "concatenate corpora, keeping provenance tags");
    sub->add_option("--in", mg.in, "input jsonl (repeatable)")->required();
    sub->add_option("--src-lang", mg.src_lang, "source language code");
    sub->add_option("--tgt-lang", mg.tgt_lang, "target language code");
    sub->add_option("--name", mg.name, "merged corpus name");
    sub->add_option("--out", mg.outp, "output jsonl")->required();
    add_common(sub, mg.c);
    sub->callback([&] {
      std::vector<corpus::ParallelCorpus> parts;
      for (const auto& p : mg.in) parts.push_back(read_parallel(p, mg.src_lang, mg.tgt_lang, ""));
      const auto merged = corpus::merge(parts, mg.name);
      corpus::write_jsonl(merged, mg.outp);
      out << "event=merge inputs=" << parts.size() << " pairs=" << merged.size()
          << " out=" << mg.outp << "\n";
    });
  }

  // split ----------------------------------------------------------------
  struct {
    Common c;
    std::string in, src_lang = "eng", tgt_lang = "pcm", out_dir;
    double train = 0.8, dev = 0.1, test = 0.1, fraction = 1.0;
  } sp;
  {
    auto* sub = app.add_subcommand("split", "seeded train/dev/test split with optional "
                                            "train-fraction subsampling");
    sub->add_option("--in", sp.in, "input jsonl")->required();
    sub->add_option("--src-lang", sp.src_lang, "source language code");
    sub->add_option("--tgt-lang", sp.tgt_lang, "target language code");
    sub->add_option("--train-frac", sp.train, "train share");
    sub->add_option("--dev-frac", sp.dev, "dev share");
    sub->add_option("--test-frac", sp.test, "test share");
    sub->add_option("--fraction", sp.fraction, "keep this prefix fraction of train");
    sub->add_option("--out-dir", sp.out_dir, "directory for train/dev/test jsonl")->required();
    add_common(sub, sp.c);
    sub->callback([&] {
      const auto in = read_parallel(sp.in, sp.src_lang, sp.tgt_lang, "");
      corpus::SplitSpec spec{sp.train, sp.dev, sp.test, sp.c.seed};
      const auto res = corpus::split_and_subsample(in, spec, sp.fraction);
      fs::create_directories(sp.out_dir);
      const auto dir = fs::path(sp.out_dir);
      corpus::write_jsonl(res.train, (dir / "train.jsonl").string());
      corpus::write_jsonl(res.dev, (dir / "dev.jsonl").string());
      corpus::write_jsonl(res.test, (dir / "test.jsonl").string());
      auto m = start_manifest("split", sp.c.seed, sp.c.created_at);
      add_hashed(m.inputs, resolve_input(sp.in));
      for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl"})
        add_hashed(m.artifacts, (dir / f).string());
      write_manifest(m, (dir / "manifest.json").string());
      out << "event=split train=" << res.train.size() << " dev=" << res.dev.size()
          << " test=" << res.test.size() << " fraction=" << fmt(sp.fraction, 2)
          << " out_dir=" << sp.out_dir << "\n";
    });
  }

  // augment --------------------------------------------------------------
  struct {
    Common c;
    std::string in, rules, lang = "pcm", src_lang = "eng", tgt_lang = "pcm", outp;
    double rate = 0.3;
    bool mono = false;
  } au;
  {
    auto* sub = app.add_subcommand("augment", "add orthographic-variant copies of Pidgin text");
    sub->add_option("--in", au.in, "input jsonl (or mono text with --mono)")->required();
    sub->add_option("--rules", au.rules, "rule file; built-in rules when omitted");
    sub->add_flag("--mono", au.mono, "input is monolingual text");
    sub->add_option("--lang", au.lang, "language of mono input");
    sub->add_option("--src-lang", au.src_lang, "source language code");
    sub->add_option("--tgt-lang", au.tgt_lang, "target language code");
    sub->add_option("--rate", au.rate, "per-sentence augmentation probability");
    sub->add_option("--out", au.outp, "output path")->required();
    add_common(sub, au.c);
    sub->callback([&] {
      const auto rules =
          au.rules.empty() ? ortho::builtin_rules() : ortho::load_rules(resolve_input(au.rules));
      if (au.mono) {
        const auto in = corpus::ingest_monolingual(resolve_input(au.in), lang_tag(au.lang), "");
        const auto res = ortho::augment_corpus(in, rules, au.rate, au.c.seed);
        corpus::write_monolingual(res, au.outp);
        out << "event=augment before=" << in.size() << " after=" << res.size()
            << " out=" << au.outp << "\n";
        return;
      }
      const auto in = read_parallel(au.in, au.src_lang, au.tgt_lang, "");
      const auto res = ortho::augment_corpus(in, rules, au.rate, au.c.seed);
      corpus::write_jsonl(res, au.outp);
      out << "event=augment before=" << in.size() << " after=" << res.size()
          << " out=" << au.outp << "\n";
    });
  }

  // tokenize-train ---------------------------------------------------------
  struct {
    Common c;
    std::vector<std::string> in;
    std::string kind = "word", marker = "</w>", out_dir;
    int64_t size = 4000;
  } tk;
  {
    auto* sub = app.add_subcommand("tokenize-train",
                                   "train the shared vocabulary (word or bpe)");
    sub->add_option("--in", tk.in, "corpus files, jsonl or plain text (repeatable)")
        ->required();
    sub->add_option("--kind", tk.kind, "word | bpe");
    sub->add_option("--size", tk.size, "total vocabulary size including specials");
    sub->add_option("--marker", tk.marker, "bpe end-of-word marker");
    sub->add_option("--out-dir", tk.out_dir, "tokenizer bundle directory")->required();
    add_common(sub, tk.c);
    sub->callback([&] {
      Timer timer;
      std::vector<std::string> sentences;
      for (const auto& p : tk.in) {
        const auto more = sentences_from_file(resolve_input(p));
        sentences.insert(sentences.end(), more.begin(), more.end());
      }
      const auto kind = tok::tokenizer_kind_from_string(tk.kind);
      tok::TokenizerSpec spec;
      if (kind == tok::TokenizerKind::word) {
        spec = tok::make_word_spec(
            tok::train_word_vocab(sentences, static_cast<size_t>(tk.size)));
      } else {
        auto [merges, vocab] =
            tok::train_bpe_vocab(sentences, static_cast<size_t>(tk.size), tk.marker);
        spec = tok::make_bpe_spec(std::move(vocab), std::move(merges));
        spec.end_of_word_marker = tk.marker;
      }
      save_tokenizer(spec, tk.out_dir);
      auto m = start_manifest("tokenize-train", tk.c.seed, tk.c.created_at);
      for (const auto& p : tk.in) add_hashed(m.inputs, resolve_input(p));
      const auto dir = fs::path(tk.out_dir);
      add_hashed(m.artifacts, (dir / "tokenizer.json").string());
      add_hashed(m.artifacts, (dir / "vocab.txt").string());
      if (spec.merges) add_hashed(m.artifacts, (dir / "merges.txt").string());
      m.timings.push_back({"train", timer.seconds()});
      write_manifest(m, (dir / "manifest.json").string());
      out << "event=tokenize-train kind=" << tk.kind << " vocab=" << spec.vocab.size()
          << " merges=" << (spec.merges ? spec.merges->size() : 0) << " out_dir=" << tk.out_dir
          << "\n";
    });
  }

  // pretrain (CaT) ---------------------------------------------------------
  struct {
    Common c;
    std::string ckpt, tokenizer, mono, lang = "pcm", out_dir;
    int64_t steps = 100, batch_size = 8;
  } pt;
  {
    auto* sub = app.add_subcommand("pretrain",
                                   "continual masked-LM pre-training on monolingual text");
    sub->add_option("--ckpt", pt.ckpt, "starting checkpoint; a fresh model when omitted");
    sub->add_option("--config", pt.c.config, "config file for fresh models and hypers");
    sub->add_option("--tokenizer", pt.tokenizer, "tokenizer bundle directory")->required();
    sub->add_option("--mono", pt.mono, "monolingual text file")->required();
    sub->add_option("--lang", pt.lang, "language of the mono corpus");
    sub->add_option("--steps", pt.steps, "optimizer steps");
    sub->add_option("--batch-size", pt.batch_size, "sequences per step");
    sub->add_option("--out-dir", pt.out_dir, "run directory")->required();
    add_common(sub, pt.c);
    sub->callback([&] {
      Timer timer;
      const auto spec = load_tokenizer(pt.tokenizer);
      auto cfg = pt.c.config.empty() ? AppConfig{} : load_config(pt.c.config);
      cfg.model.vocab_size = static_cast<int64_t>(spec.vocab.size());
      const auto ckpt = pt.ckpt.empty() ? model::init_model(cfg.model, pt.c.seed)
                                        : model::load_checkpoint(resolve_input(pt.ckpt));
      const auto mono =
          corpus::ingest_monolingual(resolve_input(pt.mono), lang_tag(pt.lang), "mono");
      adapt::StagePlan plan;
      plan.stage = adapt::Stage::cat;
      plan.steps = pt.steps;
      plan.batch_size = pt.batch_size;
      plan.hyper = cfg.hyper;
      plan.masking = cfg.masking;
      plan.seed = pt.c.seed;
      const auto res = adapt::cat_pretrain(ckpt, mono, spec, plan);
      fs::create_directories(pt.out_dir);
      const auto dir = fs::path(pt.out_dir);
      model::save_checkpoint(res.ckpt, (dir / "model.ckpt").string());
      write_curve((dir / "losses.txt").string(), res.losses);
      auto m = start_manifest("pretrain", pt.c.seed, pt.c.created_at);
      m.config = config_to_json(cfg).dump();
      add_hashed(m.inputs, resolve_input(pt.mono));
      if (!pt.ckpt.empty()) add_hashed(m.inputs, resolve_input(pt.ckpt));
      add_hashed(m.artifacts, (dir / "model.ckpt").string());
      add_hashed(m.artifacts, (dir / "losses.txt").string());
      m.timings.push_back({"cat", timer.seconds()});
      write_manifest(m, (dir / "manifest.json").string());
      out << "event=pretrain steps=" << res.losses.size()
          << " loss_first=" << (res.losses.empty() ? "-" : fmt(res.losses.front()))
          << " loss_last=" << (res.losses.empty() ? "-" : fmt(res.losses.back()))
          << " diverged=" << (res.diverged ? 1 : 0) << " out_dir=" << pt.out_dir << "\n";
      if (res.diverged)
        throw Error("training diverged; the checkpoint holds the last finite parameters");
    });
  }

  // backtranslate ----------------------------------------------------------
  struct {
    Common c;
    std::string ckpt, tokenizer, mono, reverse_mono, lang = "pcm", to = "eng", outp;
    int64_t beam = 0, max_len = 64;
  } bt;
  {
    auto* sub = app.add_subcommand("backtranslate",
                                   "build synthetic parallel data from monolingual text");
    sub->add_option("--ckpt", bt.ckpt, "translation checkpoint")->required();
    sub->add_option("--tokenizer", bt.tokenizer, "tokenizer bundle directory")->required();
    sub->add_option("--mono", bt.mono, "monolingual text in --lang")->required();
    sub->add_option("--reverse-mono", bt.reverse_mono,
                    "also back-translate this --to-side text for bidirectional data");
    sub->add_option("--lang", bt.lang, "language of --mono");
    sub->add_option("--to", bt.to, "translation target language");
    sub->add_option("--beam", bt.beam, "beam size; 0 means greedy");
    sub->add_option("--max-len", bt.max_len, "generation length cap");
    sub->add_option("--out", bt.outp, "output jsonl")->required();
    add_common(sub, bt.c);
    sub->callback([&] {
      const auto spec = load_tokenizer(bt.tokenizer);
      const auto ckpt = model::load_checkpoint(resolve_input(bt.ckpt));
      const auto dir = adapt::make_direction(lang_tag(bt.lang), lang_tag(bt.to));
      model::DecodeConfig decode;
      decode.max_len = bt.max_len;
      if (bt.beam > 0) {
        decode.mode = model::DecodeConfig::Mode::beam;
        decode.beam_size = static_cast<int>(bt.beam);
      }
      const auto mono =
          corpus::ingest_monolingual(resolve_input(bt.mono), lang_tag(bt.lang), "mono");
      if (bt.reverse_mono.empty()) {
        const auto res = adapt::back_translate(ckpt, mono, dir, spec, decode);
        corpus::write_jsonl(res.corpus, bt.outp);
        out << "event=backtranslate pairs=" << res.corpus.size()
            << " dropped_empty=" << res.stats.dropped_empty << " out=" << bt.outp << "\n";
        return;
      }
      const auto mono_tgt = corpus::ingest_monolingual(resolve_input(bt.reverse_mono),
                                                       lang_tag(bt.to), "mono-reverse");
      const auto res = adapt::bidirectional_bt(ckpt, mono, mono_tgt, dir, adapt::reverse(dir),
                                               spec, decode);
      corpus::write_jsonl(res.corpus, bt.outp);
      out << "event=backtranslate pairs=" << res.corpus.size()
          << " forward=" << res.fwd.produced << " reverse=" << res.rev.produced
          << " duplicates=" << res.duplicates << " out=" << bt.outp << "\n";
    });
  }

  // tat ---------------------------------------------------------------------
  struct {
    Common c;
    std::string ckpt, tokenizer, btp, src_lang = "eng", tgt_lang = "pcm", out_dir;
    int64_t steps = 100, batch_size = 8;
  } tt;
  {
    auto* sub = app.add_subcommand("tat", "task-adaptive training on back-translated data");
    sub->add_option("--ckpt", tt.ckpt, "starting checkpoint")->required();
    sub->add_option("--config", tt.c.config, "config file for hypers");
    sub->add_option("--tokenizer", tt.tokenizer, "tokenizer bundle directory")->required();
    sub->add_option("--bt", tt.btp, "back-translated jsonl (both orientations welcome)")
        ->required();
    sub->add_option("--src-lang", tt.src_lang, "source language code");
    sub->add_option("--tgt-lang", tt.tgt_lang, "target language code");
    sub->add_option("--steps", tt.steps, "optimizer steps");
    sub->add_option("--batch-size", tt.batch_size, "examples per step");
    sub->add_option("--out-dir", tt.out_dir, "run directory")->required();
    add_common(sub, tt.c);
    sub->callback([&] {
      Timer timer;
      const auto spec = load_tokenizer(tt.tokenizer);
      const auto ckpt = model::load_checkpoint(resolve_input(tt.ckpt));
      const auto cfg = tt.c.config.empty() ? AppConfig{} : load_config(tt.c.config);
      const auto d_bt = read_parallel(tt.btp, tt.src_lang, tt.tgt_lang, "bt");
      const auto fwd = adapt::make_direction(lang_tag(tt.src_lang), lang_tag(tt.tgt_lang));
      adapt::StagePlan plan;
      plan.stage = adapt::Stage::tat;
      plan.steps = tt.steps;
      plan.batch_size = tt.batch_size;
      plan.hyper = cfg.hyper;
      plan.seed = tt.c.seed;
      const auto res = adapt::tat_train(ckpt, d_bt, {fwd, adapt::reverse(fwd)}, spec, plan);
      fs::create_directories(tt.out_dir);
      const auto dir = fs::path(tt.out_dir);
      model::save_checkpoint(res.ckpt, (dir / "model.ckpt").string());
      write_curve((dir / "losses.txt").string(), res.losses);
      auto m = start_manifest("tat", tt.c.seed, tt.c.created_at);
      m.config = config_to_json(cfg).dump();
      add_hashed(m.inputs, resolve_input(tt.btp));
      add_hashed(m.inputs, resolve_input(tt.ckpt));
      add_hashed(m.artifacts, (dir / "model.ckpt").string());
      add_hashed(m.artifacts, (dir / "losses.txt").string());
      m.timings.push_back({"tat", timer.seconds()});
      write_manifest(m, (dir / "manifest.json").string());
      int64_t to_pcm = 0, to_eng = 0;
      if (res.counters.count("<2pcm>")) to_pcm = res.counters.at("<2pcm>");
      if (res.counters.count("<2eng>")) to_eng = res.counters.at("<2eng>");
      out << "event=tat steps=" << res.losses.size() << " to_pcm=" << to_pcm
          << " to_eng=" << to_eng << " diverged=" << (res.diverged ? 1 : 0)
          << " out_dir=" << tt.out_dir << "\n";
      if (res.diverged)
        throw Error("training diverged; the checkpoint holds the last finite parameters");
    });
  }

  // finetune ------------------------------------------------------------------
  struct {
    Common c;
    std::string ckpt, tokenizer, task = "translate", train, dev;
    std::string src_lang = "eng", tgt_lang = "pcm", out_dir;
    int64_t epochs = 1, batch_size = 8;
    bool both = false;
  } ft;
  {
    auto* sub = app.add_subcommand("finetune", "supervised fine-tuning, translation or "
                                               "3-class classification");
    sub->add_option("--ckpt", ft.ckpt, "starting checkpoint; a fresh model when omitted");
    sub->add_option("--config", ft.c.config, "config file for fresh models and hypers");
    sub->add_option("--tokenizer", ft.tokenizer, "tokenizer bundle directory")->required();
    sub->add_option("--task", ft.task, "translate | classify");
    sub->add_option("--train", ft.train, "training data (parallel or labeled jsonl)")
        ->required();
    sub->add_option("--dev", ft.dev, "dev data for best-epoch selection");
    sub->add_option("--src-lang", ft.src_lang, "source language code");
    sub->add_option("--tgt-lang", ft.tgt_lang, "target language code");
    sub->add_option("--epochs", ft.epochs, "training epochs");
    sub->add_option("--batch-size", ft.batch_size, "examples per step");
    sub->add_flag("--both-orientations", ft.both, "also train the reverse direction");
    sub->add_option("--out-dir", ft.out_dir, "run directory")->required();
    add_common(sub, ft.c);
    sub->callback([&] {
      Timer timer;
      const auto spec = load_tokenizer(ft.tokenizer);
      auto cfg = ft.c.config.empty() ? AppConfig{} : load_config(ft.c.config);
      cfg.model.vocab_size = static_cast<int64_t>(spec.vocab.size());
      const auto ckpt = ft.ckpt.empty() ? model::init_model(cfg.model, ft.c.seed)
                                        : model::load_checkpoint(resolve_input(ft.ckpt));
      adapt::StagePlan plan;
      plan.stage = adapt::Stage::ft;
      plan.epochs = ft.epochs;
      plan.batch_size = ft.batch_size;
      plan.hyper = cfg.hyper;
      plan.both_orientations = ft.both;
      plan.seed = ft.c.seed;
      adapt::FtResult res;
      if (ft.task == "translate") {
        const auto train = read_parallel(ft.train, ft.src_lang, ft.tgt_lang, "train");
        corpus::ParallelCorpus dev;
        dev.langs = train.langs;
        if (!ft.dev.empty()) dev = read_parallel(ft.dev, ft.src_lang, ft.tgt_lang, "dev");
        const auto fwd = adapt::make_direction(lang_tag(ft.src_lang), lang_tag(ft.tgt_lang));
        res = adapt::finetune(ckpt, train, dev, {fwd, adapt::reverse(fwd)}, spec, plan);
      } else if (ft.task == "classify") {
        const auto train = adapt::read_labeled(resolve_input(ft.train), "train");
        adapt::LabeledSet dev;
        if (!ft.dev.empty()) dev = adapt::read_labeled(resolve_input(ft.dev), "dev");
        res = adapt::finetune(ckpt, train, dev, spec, plan);
      } else {
        throw InvalidArgument("--task must be translate or classify, got: " + ft.task);
      }
      fs::create_directories(ft.out_dir);
      const auto dir = fs::path(ft.out_dir);
      model::save_checkpoint(res.ckpt, (dir / "model.ckpt").string());
      write_curve((dir / "losses.txt").string(), res.losses);
      write_curve((dir / "dev_history.txt").string(), res.dev_history);
      auto m = start_manifest("finetune", ft.c.seed, ft.c.created_at);
      m.config = config_to_json(cfg).dump();
      add_hashed(m.inputs, resolve_input(ft.train));
      if (!ft.dev.empty()) add_hashed(m.inputs, resolve_input(ft.dev));
      if (!ft.ckpt.empty()) add_hashed(m.inputs, resolve_input(ft.ckpt));
      add_hashed(m.artifacts, (dir / "model.ckpt").string());
      add_hashed(m.artifacts, (dir / "losses.txt").string());
      add_hashed(m.artifacts, (dir / "dev_history.txt").string());
      m.timings.push_back({"ft", timer.seconds()});
      write_manifest(m, (dir / "manifest.json").string());
      out << "event=finetune task=" << ft.task << " epochs=" << ft.epochs
          << " best_epoch=" << res.best_epoch << " best_dev=" << fmt(res.best_dev)
          << " out_dir=" << ft.out_dir << "\n";
    });
  }

  // translate -------------------------------------------------------------
  struct {
    Common c;
    std::string ckpt, tokenizer, in, to = "pcm", outp;
    int64_t beam = 0, max_len = 64;
  } tr;
  {
    auto* sub = app.add_subcommand("translate", "translate a file of sentences, one per line");
    sub->add_option("--ckpt", tr.ckpt, "translation checkpoint")->required();
    sub->add_option("--tokenizer", tr.tokenizer, "tokenizer bundle directory")->required();
    sub->add_option("--in", tr.in, "input sentences")->required();
    sub->add_option("--to", tr.to, "target language");
    sub->add_option("--beam", tr.beam, "beam size; 0 means greedy");
    sub->add_option("--max-len", tr.max_len, "generation length cap");
    sub->add_option("--out", tr.outp, "output file; stdout when omitted");
    add_common(sub, tr.c);
    sub->callback([&] {
      const auto spec = load_tokenizer(tr.tokenizer);
      const auto ckpt = model::load_checkpoint(resolve_input(tr.ckpt));
      const auto dir = direction_to(tr.to);
      model::DecodeConfig decode;
      decode.max_len = tr.max_len;
      if (tr.beam > 0) {
        decode.mode = model::DecodeConfig::Mode::beam;
        decode.beam_size = static_cast<int>(tr.beam);
      }
      std::vector<std::string> outputs;
      for (const auto& line : read_lines(resolve_input(tr.in)))
        outputs.push_back(adapt::translate_text(ckpt, line, dir, spec, decode));
      if (tr.outp.empty()) {
        for (const auto& o : outputs) out << o << "\n";
      } else {
        write_lines(tr.outp, outputs);
        out << "event=translate sentences=" << outputs.size() << " out=" << tr.outp << "\n";
      }
    });
  }

  // classify -------------------------------------------------------------
  struct {
    Common c;
    std::string ckpt, tokenizer, in, outp;
  } cf;
  {
    auto* sub = app.add_subcommand("classify", "predict 3-class labels, one per input line");
    sub->add_option("--ckpt", cf.ckpt, "classification checkpoint")->required();
    sub->add_option("--tokenizer", cf.tokenizer, "tokenizer bundle directory")->required();
    sub->add_option("--in", cf.in, "input texts")->required();
    sub->add_option("--out", cf.outp, "output file; stdout when omitted");
    add_common(sub, cf.c);
    sub->callback([&] {
      const auto spec = load_tokenizer(cf.tokenizer);
      const auto ckpt = model::load_checkpoint(resolve_input(cf.ckpt));
      const auto labels = adapt::predict_labels(ckpt, read_lines(resolve_input(cf.in)), spec);
      std::vector<std::string> lines;
      for (int32_t l : labels) lines.push_back(std::to_string(l));
      if (cf.outp.empty()) {
        for (const auto& l : lines) out << l << "\n";
      } else {
        write_lines(cf.outp, lines);
        out << "event=classify texts=" << labels.size() << " out=" << cf.outp << "\n";
      }
    });
  }

  // evaluate -------------------------------------------------------------
  struct {
    Common c;
    std::string metric = "bleu", hyp, ref, pred, gold, smoothing = "none";
    double k = 1.0;
  } ev;
  {
    auto* sub = app.add_subcommand("evaluate", "score hypotheses (bleu) or labels (macro_f1)");
    sub->add_option("--metric", ev.metric, "bleu | macro_f1");
    sub->add_option("--hyp", ev.hyp, "hypothesis sentences, one per line");
    sub->add_option("--ref", ev.ref, "reference sentences, one per line");
    sub->add_option("--pred", ev.pred, "predicted labels, one per line");
    sub->add_option("--gold", ev.gold, "gold labels, one per line");
    sub->add_option("--smoothing", ev.smoothing, "none | add_k");
    sub->add_option("--k", ev.k, "add_k smoothing constant");
    add_common(sub, ev.c);
    sub->callback([&] {
      if (ev.metric == "bleu") {
        if (ev.hyp.empty() || ev.ref.empty())
          throw InvalidArgument("evaluate --metric bleu needs --hyp and --ref");
        auto tokenize_lines = [](const std::string& path) {
          std::vector<std::vector<std::string>> out;
          for (const auto& line : read_lines(resolve_input(path)))
            out.push_back(str::split_ws(line));
          return out;
        };
        const auto smoothing = ev.smoothing == "none" ? eval::Smoothing::none
                               : ev.smoothing == "add_k"
                                   ? eval::Smoothing::add_k
                                   : throw InvalidArgument(
                                         "--smoothing must be none or add_k, got: " +
                                         ev.smoothing);
        const auto score =
            eval::corpus_bleu(tokenize_lines(ev.hyp), tokenize_lines(ev.ref), 4, smoothing,
                              ev.k);
        out << "bleu=" << fmt(score.score) << " bp=" << fmt(score.brevity_penalty)
            << " hyp_len=" << score.hyp_len << " ref_len=" << score.ref_len << "\n";
      } else if (ev.metric == "macro_f1") {
        if (ev.pred.empty() || ev.gold.empty())
          throw InvalidArgument("evaluate --metric macro_f1 needs --pred and --gold");
        const auto f1 = eval::macro_f1(read_label_file(resolve_input(ev.pred)),
                                       read_label_file(resolve_input(ev.gold)));
        out << "macro_f1=" << fmt(100.0 * f1) << "\n";
      } else {
        throw InvalidArgument("--metric must be bleu or macro_f1, got: " + ev.metric);
      }
    });
  }

  // experiment -------------------------------------------------------------
  struct {
    Common c;
    std::string grid, out_dir;
  } ex;
  {
    auto* sub = app.add_subcommand("experiment", "run a grid of cells and write the report");
    sub->add_option("--grid", ex.grid, "grid file (see configs/schema.md)")->required();
    sub->add_option("--out-dir", ex.out_dir, "report directory")->required();
    add_common(sub, ex.c);
    sub->callback([&] {
      Timer timer;
      const auto grid = load_grid(ex.grid);
      const auto created = ex.c.created_at.empty() ? now_iso8601() : ex.c.created_at;
      const auto res =
          adapt::run_experiment(grid.cells, grid.plans, grid.registry, grid.spec, created);
      fs::create_directories(ex.out_dir);
      const auto dir = fs::path(ex.out_dir);
      write_file((dir / "report.json").string(),
                 eval::build_report(res.report, eval::ReportFormat::json));
      write_file((dir / "report.md").string(),
                 eval::build_report(res.report, eval::ReportFormat::markdown));
      write_file((dir / "report.csv").string(),
                 eval::build_report(res.report, eval::ReportFormat::csv));
      auto m = start_manifest("experiment", ex.c.seed, ex.c.created_at);
      m.created_at = created;
      m.config = config_to_json(grid.config).dump();
      for (const auto& p : grid.inputs) add_hashed(m.inputs, p);
      for (const char* f : {"report.json", "report.md", "report.csv"})
        add_hashed(m.artifacts, (dir / f).string());
      m.timings.push_back({"experiment", timer.seconds()});
      write_manifest(m, (dir / "manifest.json").string());
      out << "event=experiment cells=" << grid.cells.size()
          << " rows=" << res.report.rows.size() << " failures=" << res.failures.size()
          << " out_dir=" << ex.out_dir << "\n";
      if (!res.failures.empty()) {
        std::string msg = "experiment cells failed:";
        for (const auto& f : res.failures) msg += "\n  " + f;
        throw Error(msg);
      }
    });
  }

  // report -------------------------------------------------------------
  struct {
    Common c;
    std::string in, format = "markdown", outp;
  } rp;
  {
    auto* sub = app.add_subcommand("report", "re-render a report.json as markdown or csv");
    sub->add_option("--in", rp.in, "report.json")->required();
    sub->add_option("--format", rp.format, "json | markdown | csv");
    sub->add_option("--out", rp.outp, "output file; stdout when omitted");
    add_common(sub, rp.c);
    sub->callback([&] {
      const auto report = eval::report_from_json(read_file(resolve_input(rp.in)));
      const auto format = rp.format == "json"       ? eval::ReportFormat::json
                          : rp.format == "markdown" ? eval::ReportFormat::markdown
                          : rp.format == "csv"
                              ? eval::ReportFormat::csv
                              : throw InvalidArgument(
                                    "--format must be json, markdown or csv, got: " +
                                    rp.format);
      const auto text = eval::build_report(report, format);
      if (rp.outp.empty()) {
        out << text;
      } else {
        write_file(rp.outp, text);
        out << "event=report format=" << rp.format << " out=" << rp.outp << "\n";
      }
    });
  }

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("pcmkit");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "pcmkit: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const Error& e) {
    err << "pcmkit: error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "pcmkit: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace pcmkit::cli
