#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pcmkit/adapt.hpp"

namespace pcmkit::cli {

// Settings shared by the model-facing subcommands. Every section of the
// config file is optional; absent sections keep these defaults.
struct AppConfig {
  model::ModelConfig model;
  optim::Hyper hyper;
  adapt::MaskingConfig masking;
  model::DecodeConfig decode;
};

// "paper-word" -> 4-4 layers, 10 heads, d_model 300; "paper-bpe" -> 6-6
// layers, 4 heads, d_model 256. Both use a shared vocabulary of 4000.
model::ModelConfig model_preset(const std::string& name);

// JSON config file with optional sections preset/model/hyper/masking/decode.
// Unknown keys and wrongly typed values are rejected by name. A "preset" is
// applied first; explicit model keys override it. See configs/schema.md.
AppConfig load_config(const std::string& path);
AppConfig config_from_json(const std::string& text, const std::string& origin);

// Tokenizer bundle directory: tokenizer.json, vocab.txt and, for bpe,
// merges.txt.
void save_tokenizer(const tok::TokenizerSpec& spec, const std::string& dir);
tok::TokenizerSpec load_tokenizer(const std::string& dir);

struct ManifestEntry {
  std::string name;   // path or stage label
  std::string value;  // content hash or elapsed seconds
};

// Reproducibility record written to every run directory.
struct RunManifest {
  std::string command;
  std::string created_at;
  uint64_t seed = 0;
  std::string config;  // effective config as a JSON string; "" when unused
  std::vector<ManifestEntry> inputs;     // consumed files with content hashes
  std::vector<ManifestEntry> artifacts;  // produced files with content hashes
  std::vector<ManifestEntry> timings;    // stage label -> seconds
};

// 16 hex digits of the file's fnv1a64.
std::string content_hash(const std::string& path);

// Serialized to <path> via a temp file and rename, so a crash never leaves a
// truncated manifest behind.
void write_manifest(const RunManifest& m, const std::string& path);
RunManifest read_manifest(const std::string& path);

// Experiment grid file: tokenizer, data registry, named train plans and the
// cell list, all in one JSON document. See configs/schema.md.
struct GridFile {
  AppConfig config;
  tok::TokenizerSpec spec;
  adapt::DataRegistry registry;
  std::map<std::string, adapt::TrainPlan> plans;
  std::vector<adapt::ExperimentCell> cells;
  std::vector<std::string> inputs;  // resolved files the grid was built from
};

GridFile load_grid(const std::string& path);

// Relative input paths that do not exist locally are retried under
// $PCMKIT_DATA_DIR before being handed to the reader.
std::string resolve_input(const std::string& path);

// Full dispatcher behind the pcmkit binary; args exclude the program name.
// Returns the process exit code: 0 success, 1 runtime failure, 2 usage.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pcmkit::cli
