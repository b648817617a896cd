#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pcmkit/common.hpp"

namespace pcmkit::eval {

struct BleuScore {
  double score = 0.0;                  // 0..100
  std::array<double, 4> precisions{};  // clipped p_1..p_4 (0 past max_n)
  double brevity_penalty = 1.0;
  int64_t hyp_len = 0;
  int64_t ref_len = 0;
};

// add_k adds k to the matched and total counts of orders >= 2; unigram
// precision is never smoothed, so zero word overlap still scores 0.
enum class Smoothing { none, add_k };

// Corpus-level BLEU over token sequences: clipped n-gram counts summed over
// all pairs, uniform-weight geometric mean, brevity penalty
// exp(1 - ref_len/hyp_len) when the hypotheses are shorter. Without
// smoothing any zero precision collapses the score to 0.
BleuScore corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                      const std::vector<std::vector<std::string>>& references, int max_n = 4,
                      Smoothing smoothing = Smoothing::none, double k = 1.0);

// counts[gold][predicted] over the 3 sentiment classes.
struct ConfusionMatrix {
  std::array<std::array<int64_t, 3>, 3> counts{};

  int64_t total() const;
};

ConfusionMatrix confusion(const std::vector<int32_t>& predictions,
                          const std::vector<int32_t>& gold);

// Unweighted mean of per-class F1. A class absent from both gold and
// predictions is excluded from the mean; a class with zero precision and
// recall contributes 0.
double macro_f1(const ConfusionMatrix& cm);
double macro_f1(const std::vector<int32_t>& predictions, const std::vector<int32_t>& gold);

struct ReportRow {
  std::string cell;    // experiment cell id, e.g. "init", "ft", "cat"
  std::string metric;  // "bleu" or "macro_f1"
  double value = 0.0;
  uint64_t seed = 0;
  std::map<std::string, int64_t> data_sizes;  // named corpus sizes
  std::vector<std::string> lineage;
  std::optional<double> fraction;  // set on learning-curve cells
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::string created_at;  // caller-supplied so reports stay deterministic
  std::string toolkit_version{kVersion};

  // metric names, duplicate (cell, metric, seed) rows
  void validate() const;
};

enum class ReportFormat { json, markdown, csv };

// json is the canonical machine format (byte-deterministic for equal
// inputs); markdown pivots each metric into a cells-as-columns table with
// one row per seed plus a mean row; csv emits per-metric learning-curve
// series "fraction,<metric>" averaged over seeds.
std::string build_report(const EvalReport& report, ReportFormat format);

EvalReport report_from_json(const std::string& text);

}  // namespace pcmkit::eval
