#include "pcmkit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include <json.hpp>

namespace pcmkit::eval {

using json = nlohmann::ordered_json;

namespace {

void count_ngrams(const std::vector<std::string>& tokens, int n,
                  std::unordered_map<std::string, int64_t>& out) {
  if (static_cast<int>(tokens.size()) < n) return;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < n; ++j) {
      key += '\x1f';
      key += tokens[i + static_cast<size_t>(j)];
    }
    ++out[key];
  }
}

}  // namespace

BleuScore corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                      const std::vector<std::vector<std::string>>& references, int max_n,
                      Smoothing smoothing, double k) {
  if (hypotheses.size() != references.size())
    throw InvalidArgument("hypothesis and reference counts differ");
  if (hypotheses.empty()) throw InvalidArgument("corpus_bleu needs at least one pair");
  if (max_n < 1 || max_n > 4) throw InvalidArgument("max_n must be in [1, 4]");
  if (smoothing == Smoothing::add_k && k <= 0.0) throw InvalidArgument("add_k needs k > 0");

  BleuScore b;
  std::array<int64_t, 4> matched{}, total{};
  std::unordered_map<std::string, int64_t> hyp_counts, ref_counts;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    const auto& hyp = hypotheses[i];
    const auto& ref = references[i];
    b.hyp_len += static_cast<int64_t>(hyp.size());
    b.ref_len += static_cast<int64_t>(ref.size());
    for (int n = 1; n <= max_n; ++n) {
      hyp_counts.clear();
      ref_counts.clear();
      count_ngrams(hyp, n, hyp_counts);
      count_ngrams(ref, n, ref_counts);
      for (const auto& [gram, cnt] : hyp_counts) {
        total[static_cast<size_t>(n - 1)] += cnt;
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end())
          matched[static_cast<size_t>(n - 1)] += std::min(cnt, it->second);
      }
    }
  }

  for (int n = 1; n <= max_n; ++n) {
    double num = static_cast<double>(matched[static_cast<size_t>(n - 1)]);
    double den = static_cast<double>(total[static_cast<size_t>(n - 1)]);
    if (smoothing == Smoothing::add_k && n >= 2) {
      num += k;
      den += k;
    }
    b.precisions[static_cast<size_t>(n - 1)] = den > 0.0 ? num / den : 0.0;
  }

  if (b.hyp_len == 0) {
    b.brevity_penalty = 0.0;
    b.score = 0.0;
    return b;
  }
  b.brevity_penalty =
      b.hyp_len < b.ref_len
          ? std::exp(1.0 - static_cast<double>(b.ref_len) / static_cast<double>(b.hyp_len))
          : 1.0;

  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const double p = b.precisions[static_cast<size_t>(n - 1)];
    if (p <= 0.0) {
      b.score = 0.0;
      return b;
    }
    log_sum += std::log(p) / static_cast<double>(max_n);
  }
  b.score = 100.0 * b.brevity_penalty * std::exp(log_sum);
  return b;
}

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (const auto& row : counts)
    for (int64_t c : row) t += c;
  return t;
}

ConfusionMatrix confusion(const std::vector<int32_t>& predictions,
                          const std::vector<int32_t>& gold) {
  if (predictions.size() != gold.size())
    throw InvalidArgument("prediction and gold label counts differ");
  if (predictions.empty()) throw InvalidArgument("no labels to evaluate");
  ConfusionMatrix cm;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const int32_t p = predictions[i], g = gold[i];
    if (p < 0 || p > 2 || g < 0 || g > 2) throw InvalidArgument("label outside the 3-class set");
    ++cm.counts[static_cast<size_t>(g)][static_cast<size_t>(p)];
  }
  return cm;
}

double macro_f1(const ConfusionMatrix& cm) {
  double sum = 0.0;
  int used = 0;
  for (size_t c = 0; c < 3; ++c) {
    const int64_t tp = cm.counts[c][c];
    int64_t fp = 0, fn = 0;
    for (size_t o = 0; o < 3; ++o) {
      if (o == c) continue;
      fp += cm.counts[o][c];
      fn += cm.counts[c][o];
    }
    if (tp + fp + fn == 0) continue;  // class unseen on both sides
    const double prec = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    sum += prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    ++used;
  }
  return used > 0 ? sum / used : 0.0;
}

double macro_f1(const std::vector<int32_t>& predictions, const std::vector<int32_t>& gold) {
  return macro_f1(confusion(predictions, gold));
}

void EvalReport::validate() const {
  std::set<std::tuple<std::string, std::string, uint64_t>> seen;
  for (const auto& r : rows) {
    if (r.metric != "bleu" && r.metric != "macro_f1")
      throw InvalidArgument("unknown metric name: " + r.metric);
    if (r.cell.empty()) throw InvalidArgument("report row with empty cell id");
    if (!seen.insert({r.cell, r.metric, r.seed}).second)
      throw InvalidArgument("duplicate report row for cell " + r.cell);
  }
}

namespace {

json row_to_json(const ReportRow& r) {
  json j;
  j["cell"] = r.cell;
  j["metric"] = r.metric;
  j["value"] = r.value;
  j["seed"] = r.seed;
  j["data_sizes"] = r.data_sizes;
  j["lineage"] = r.lineage;
  if (r.fraction) j["fraction"] = *r.fraction;
  return j;
}

ReportRow row_from_json(const json& j) {
  ReportRow r;
  r.cell = j.at("cell").get<std::string>();
  r.metric = j.at("metric").get<std::string>();
  r.value = j.at("value").get<double>();
  r.seed = j.at("seed").get<uint64_t>();
  if (j.contains("data_sizes"))
    r.data_sizes = j.at("data_sizes").get<std::map<std::string, int64_t>>();
  if (j.contains("lineage")) r.lineage = j.at("lineage").get<std::vector<std::string>>();
  if (j.contains("fraction")) r.fraction = j.at("fraction").get<double>();
  return r;
}

std::string format_value(double v) {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << v;
  return os.str();
}

// first-appearance order, deduplicated
template <typename T, typename Fn>
std::vector<T> distinct(const std::vector<ReportRow>& rows, Fn key) {
  std::vector<T> out;
  for (const auto& r : rows) {
    const T k = key(r);
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  return out;
}

std::string to_markdown(const EvalReport& report) {
  std::ostringstream os;
  os << "# Evaluation report\n\n";
  if (!report.created_at.empty()) os << "created: " << report.created_at << "\n";
  os << "toolkit: " << report.toolkit_version << "\n";
  const auto metrics = distinct<std::string>(report.rows, [](const auto& r) { return r.metric; });
  for (const auto& metric : metrics) {
    std::vector<ReportRow> rows;
    for (const auto& r : report.rows)
      if (r.metric == metric) rows.push_back(r);
    const auto cells = distinct<std::string>(rows, [](const auto& r) { return r.cell; });
    const auto seeds = distinct<uint64_t>(rows, [](const auto& r) { return r.seed; });

    os << "\n## " << metric << "\n\n| model |";
    for (const auto& c : cells) os << ' ' << c << " |";
    os << "\n| --- |";
    for (size_t i = 0; i < cells.size(); ++i) os << " --- |";
    os << '\n';
    std::map<std::string, std::pair<double, int64_t>> agg;
    for (uint64_t seed : seeds) {
      os << "| seed " << seed << " |";
      for (const auto& c : cells) {
        const auto it = std::find_if(rows.begin(), rows.end(), [&](const ReportRow& r) {
          return r.cell == c && r.seed == seed;
        });
        if (it == rows.end()) {
          os << " - |";
        } else {
          os << ' ' << format_value(it->value) << " |";
          auto& a = agg[c];
          a.first += it->value;
          a.second += 1;
        }
      }
      os << '\n';
    }
    os << "| mean |";
    for (const auto& c : cells) {
      const auto it = agg.find(c);
      if (it == agg.end() || it->second.second == 0)
        os << " - |";
      else
        os << ' ' << format_value(it->second.first / static_cast<double>(it->second.second))
           << " |";
    }
    os << '\n';
  }
  return os.str();
}

std::string to_csv(const EvalReport& report) {
  std::vector<ReportRow> curve;
  for (const auto& r : report.rows)
    if (r.fraction) curve.push_back(r);
  if (curve.empty()) return "";
  std::ostringstream os;
  const auto metrics = distinct<std::string>(curve, [](const auto& r) { return r.metric; });
  bool first_block = true;
  for (const auto& metric : metrics) {
    std::map<double, std::pair<double, int64_t>> by_fraction;
    for (const auto& r : curve)
      if (r.metric == metric) {
        auto& a = by_fraction[*r.fraction];
        a.first += r.value;
        a.second += 1;
      }
    if (!first_block) os << '\n';
    first_block = false;
    os << "fraction," << metric << '\n';
    for (const auto& [frac, a] : by_fraction)
      os << frac << ',' << format_value(a.first / static_cast<double>(a.second)) << '\n';
  }
  return os.str();
}

}  // namespace

std::string build_report(const EvalReport& report, ReportFormat format) {
  report.validate();
  switch (format) {
    case ReportFormat::json: {
      json j;
      j["toolkit_version"] = report.toolkit_version;
      j["created_at"] = report.created_at;
      j["rows"] = json::array();
      for (const auto& r : report.rows) j["rows"].push_back(row_to_json(r));
      return j.dump(2) + "\n";
    }
    case ReportFormat::markdown:
      return to_markdown(report);
    case ReportFormat::csv:
      return to_csv(report);
  }
  throw InvalidArgument("unknown report format");
}

EvalReport report_from_json(const std::string& text) {
  EvalReport report;
  try {
    const auto j = json::parse(text);
    report.toolkit_version = j.value("toolkit_version", std::string(kVersion));
    report.created_at = j.value("created_at", "");
    for (const auto& r : j.at("rows")) report.rows.push_back(row_from_json(r));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad report json: ") + e.what());
  }
  report.validate();
  return report;
}

}  // namespace pcmkit::eval
