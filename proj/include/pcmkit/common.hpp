#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pcmkit {

inline constexpr std::string_view kVersion = "0.1.0";

// All recoverable failures surface as exceptions derived from Error; the CLI
// turns them into diagnostics + nonzero exit, library callers may catch them.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

namespace str {

std::string trim(std::string_view s);
// Collapses runs of ASCII whitespace to single spaces and trims the ends.
std::string normalize_ws(std::string_view s);
// Removes C0 control characters and DEL (tab/newline count as whitespace and
// are handled by normalize_ws instead).
std::string strip_control(std::string_view s);
std::vector<std::string> split_ws(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string lower_ascii(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);

}  // namespace str

namespace utf8 {

// Decodes one code point starting at byte i; advances i past it. Malformed
// bytes decode as U+FFFD and advance one byte.
char32_t decode(std::string_view s, size_t& i);
void append(std::string& out, char32_t cp);
std::vector<char32_t> decode_all(std::string_view s);
std::string encode_all(const std::vector<char32_t>& cps);

// Canonical composition for Latin text: combining grave/acute/circumflex/
// tilde/diaeresis/dot-below/cedilla sequences found in the corpus languages
// (English, Pidgin, Yoruba loans) compose to their precomposed forms.
// Sequences outside the table pass through unchanged.
std::string compose_nfc(std::string_view s);

}  // namespace utf8

// FNV-1a 64-bit; used for seed derivation and manifest content fingerprints.
uint64_t fnv1a64(std::string_view data, uint64_t seed = 0xcbf29ce484222325ull);

// Per-stage seeds all derive from one root seed so a single --seed pin makes
// the whole run reproducible.
uint64_t derive_seed(uint64_t root, std::string_view stage);

std::string read_file(const std::string& path);
std::vector<std::string> read_lines(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace pcmkit
