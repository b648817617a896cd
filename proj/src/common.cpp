#include "pcmkit/common.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace pcmkit {

namespace str {

namespace {
bool is_ws(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
}  // namespace

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && is_ws(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_ws(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string normalize_ws(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_ws = true;  // leading whitespace dropped
  for (char c : s) {
    if (is_ws(static_cast<unsigned char>(c))) {
      if (!in_ws) out.push_back(' ');
      in_ws = true;
    } else {
      out.push_back(c);
      in_ws = false;
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string strip_control(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (u == 0x7f || (u < 0x20 && !is_ws(u))) continue;
    out.push_back(c);
  }
  return out;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_ws(static_cast<unsigned char>(s[i]))) ++i;
    size_t j = i;
    while (j < s.size() && !is_ws(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace str

namespace utf8 {

char32_t decode(std::string_view s, size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xe0) == 0xc0) {
    len = 2;
    cp = b0 & 0x1f;
  } else if ((b0 & 0xf0) == 0xe0) {
    len = 3;
    cp = b0 & 0x0f;
  } else if ((b0 & 0xf8) == 0xf0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xfffd;
  }
  if (i + len > s.size()) {
    ++i;
    return 0xfffd;
  }
  for (int k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xc0) != 0x80) {
      ++i;
      return 0xfffd;
    }
    cp = (cp << 6) | (b & 0x3f);
  }
  i += len;
  return cp;
}

void append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

std::vector<char32_t> decode_all(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  size_t i = 0;
  while (i < s.size()) out.push_back(decode(s, i));
  return out;
}

std::string encode_all(const std::vector<char32_t>& cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t cp : cps) append(out, cp);
  return out;
}

namespace {

// (base << 21 | combining mark) -> precomposed code point. Covers the marks
// that actually occur in the corpus languages; anything else is left alone.
const std::unordered_map<uint64_t, char32_t>& compose_table() {
  static const auto* table = [] {
    auto* m = new std::unordered_map<uint64_t, char32_t>();
    auto put = [&](char32_t base, char32_t mark, char32_t comp) {
      (*m)[(static_cast<uint64_t>(base) << 21) | mark] = comp;
    };
    constexpr char32_t kGrave = 0x300, kAcute = 0x301, kCirc = 0x302,
                       kTilde = 0x303, kDiaer = 0x308, kDotBelow = 0x323,
                       kCedilla = 0x327;
    // lowercase
    put(U'a', kGrave, 0xe0); put(U'a', kAcute, 0xe1); put(U'a', kCirc, 0xe2);
    put(U'a', kTilde, 0xe3); put(U'a', kDiaer, 0xe4); put(U'a', kDotBelow, 0x1ea1);
    put(U'e', kGrave, 0xe8); put(U'e', kAcute, 0xe9); put(U'e', kCirc, 0xea);
    put(U'e', kTilde, 0x1ebd); put(U'e', kDiaer, 0xeb); put(U'e', kDotBelow, 0x1eb9);
    put(U'i', kGrave, 0xec); put(U'i', kAcute, 0xed); put(U'i', kCirc, 0xee);
    put(U'i', kTilde, 0x129); put(U'i', kDiaer, 0xef); put(U'i', kDotBelow, 0x1ecb);
    put(U'o', kGrave, 0xf2); put(U'o', kAcute, 0xf3); put(U'o', kCirc, 0xf4);
    put(U'o', kTilde, 0xf5); put(U'o', kDiaer, 0xf6); put(U'o', kDotBelow, 0x1ecd);
    put(U'u', kGrave, 0xf9); put(U'u', kAcute, 0xfa); put(U'u', kCirc, 0xfb);
    put(U'u', kTilde, 0x169); put(U'u', kDiaer, 0xfc); put(U'u', kDotBelow, 0x1ee5);
    put(U'n', kTilde, 0xf1); put(U'n', kGrave, 0x1f9);
    put(U'c', kCedilla, 0xe7);
    put(U'y', kAcute, 0xfd); put(U'y', kDiaer, 0xff);
    put(U's', kDotBelow, 0x1e63);
    // uppercase
    put(U'A', kGrave, 0xc0); put(U'A', kAcute, 0xc1); put(U'A', kCirc, 0xc2);
    put(U'A', kTilde, 0xc3); put(U'A', kDiaer, 0xc4); put(U'A', kDotBelow, 0x1ea0);
    put(U'E', kGrave, 0xc8); put(U'E', kAcute, 0xc9); put(U'E', kCirc, 0xca);
    put(U'E', kTilde, 0x1ebc); put(U'E', kDiaer, 0xcb); put(U'E', kDotBelow, 0x1eb8);
    put(U'I', kGrave, 0xcc); put(U'I', kAcute, 0xcd); put(U'I', kCirc, 0xce);
    put(U'I', kTilde, 0x128); put(U'I', kDiaer, 0xcf); put(U'I', kDotBelow, 0x1eca);
    put(U'O', kGrave, 0xd2); put(U'O', kAcute, 0xd3); put(U'O', kCirc, 0xd4);
    put(U'O', kTilde, 0xd5); put(U'O', kDiaer, 0xd6); put(U'O', kDotBelow, 0x1ecc);
    put(U'U', kGrave, 0xd9); put(U'U', kAcute, 0xda); put(U'U', kCirc, 0xdb);
    put(U'U', kTilde, 0x168); put(U'U', kDiaer, 0xdc); put(U'U', kDotBelow, 0x1ee4);
    put(U'N', kTilde, 0xd1);
    put(U'C', kCedilla, 0xc7);
    put(U'Y', kAcute, 0xdd);
    put(U'S', kDotBelow, 0x1e62);
    return m;
  }();
  return *table;
}

}  // namespace

std::string compose_nfc(std::string_view s) {
  const auto cps = decode_all(s);
  std::vector<char32_t> out;
  out.reserve(cps.size());
  const auto& table = compose_table();
  for (char32_t cp : cps) {
    if (!out.empty()) {
      const uint64_t key = (static_cast<uint64_t>(out.back()) << 21) | cp;
      auto it = table.find(key);
      if (it != table.end()) {
        out.back() = it->second;
        continue;
      }
    }
    out.push_back(cp);
  }
  return encode_all(out);
}

}  // namespace utf8

uint64_t fnv1a64(std::string_view data, uint64_t seed) {
  uint64_t h = seed;
  for (char c : data) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t derive_seed(uint64_t root, std::string_view stage) {
  uint64_t h = fnv1a64(stage);
  h ^= root + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  // final avalanche (splitmix64 tail)
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 31;
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace pcmkit
