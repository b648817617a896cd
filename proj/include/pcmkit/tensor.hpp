#pragma once

#include <cassert>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pcmkit/common.hpp"

namespace pcmkit {

// Row-major 2-D array of doubles. Batched activations are stored flattened,
// e.g. [batch*seq, d_model] with the row index b*seq + t.
struct Tensor {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int64_t r, int64_t c) : rows(r), cols(c), v(static_cast<size_t>(r * c), 0.0) {}

  double& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
  double at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }
  double* row(int64_t r) { return v.data() + r * cols; }
  const double* row(int64_t r) const { return v.data() + r * cols; }
  int64_t size() const { return rows * cols; }
  void zero() { std::fill(v.begin(), v.end(), 0.0); }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

// Named parameter tensors with a stable order; the order fixes both the
// serialization layout and the gradient/moment layout.
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor t;
  };
  std::vector<Entry> items;
  std::unordered_map<std::string, size_t> index;

  Tensor& add(const std::string& name, int64_t rows, int64_t cols) {
    if (index.count(name)) throw InvalidArgument("duplicate parameter name: " + name);
    index[name] = items.size();
    items.push_back({name, Tensor(rows, cols)});
    return items.back().t;
  }

  bool has(const std::string& name) const { return index.count(name) != 0; }

  Tensor& get(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw InvalidArgument("unknown parameter: " + name);
    return items[it->second].t;
  }
  const Tensor& get(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw InvalidArgument("unknown parameter: " + name);
    return items[it->second].t;
  }

  // Same names and shapes, zero-filled. Used for gradients and Adam moments.
  ParamStore like() const {
    ParamStore out;
    for (const auto& e : items) out.add(e.name, e.t.rows, e.t.cols);
    return out;
  }

  void zero_all() {
    for (auto& e : items) e.t.zero();
  }

  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& e : items) n += e.t.size();
    return n;
  }
};

}  // namespace pcmkit
