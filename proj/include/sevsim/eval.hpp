#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sevsim/conversation.hpp"
#include "sevsim/dataset.hpp"
#include "sevsim/detect.hpp"

namespace sevsim {

/// Positive class is Malicious throughout.
struct ConfusionMatrix {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;

  long total() const { return tp + fp + fn + tn; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(const std::map<std::string, Verdict>& predictions,
                                 const Dataset& truth) {
  std::map<std::string, Label> labels;
  for (const auto& r : truth.records) labels.emplace(r.id, r.label);
  ConfusionMatrix cm;
  for (const auto& [id, verdict] : predictions) {
    const auto it = labels.find(id);
    if (it == labels.end()) throw UnknownId("prediction for unknown record id: " + id);
    const bool actual_malicious = it->second == Label::Malicious;
    const bool predicted_malicious = verdict == Verdict::Malicious;
    if (predicted_malicious && actual_malicious) ++cm.tp;
    else if (predicted_malicious && !actual_malicious) ++cm.fp;
    else if (!predicted_malicious && actual_malicious) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw UndefinedMetric("accuracy over an empty confusion matrix");
  return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

inline double f1(const ConfusionMatrix& cm) {
  if (cm.tp == 0) {
    if (cm.fp == 0 && cm.fn == 0)
      throw UndefinedMetric("f1 undefined with no positives predicted or present");
    return 0.0;
  }
  const double precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  const double recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  return 2.0 * precision * recall / (precision + recall);
}

/// f1 with the undefined case mapped to nullopt instead of an error.
inline std::optional<double> try_f1(const ConfusionMatrix& cm) {
  if (cm.tp == 0 && cm.fp == 0 && cm.fn == 0) return std::nullopt;
  return f1(cm);
}

struct SliceMetrics {
  double accuracy = 0.0;
  std::optional<double> f1;
  std::size_t count = 0;
};

struct MetricsReport {
  std::string method;
  SliceMetrics overall;
  std::map<AttackerRole, SliceMetrics> per_role;
  std::map<int, SliceMetrics> per_success_level;  // accuracy only, over malicious records
  std::size_t unpredicted = 0;
};

struct EvalOptions {
  bool by_role = false;
  bool by_success_level = false;
};

/// Scores predictions against ground truth with optional per-role and
/// per-success-level breakdowns. Success-level slices hold malicious records
/// only, so their metric is recall-style accuracy.
inline MetricsReport evaluate(const std::map<std::string, Verdict>& predictions,
                              const Dataset& truth, const EvalOptions& options = {},
                              const std::string& method = "detector") {
  MetricsReport report;
  report.method = method;

  const ConfusionMatrix overall_cm = confusion(predictions, truth);
  report.overall.accuracy = accuracy(overall_cm);
  report.overall.f1 = try_f1(overall_cm);
  report.overall.count = static_cast<std::size_t>(overall_cm.total());
  report.unpredicted = truth.records.size() - predictions.size();

  std::map<std::string, const ConversationRecord*> by_id;
  for (const auto& r : truth.records) by_id.emplace(r.id, &r);

  if (options.by_role) {
    for (const AttackerRole role : all_roles()) {
      std::map<std::string, Verdict> slice;
      Dataset slice_truth;
      for (const auto& [id, verdict] : predictions) {
        if (by_id.at(id)->goal.role == role) {
          slice.emplace(id, verdict);
          slice_truth.records.push_back(*by_id.at(id));
        }
      }
      if (slice.empty()) continue;
      const ConfusionMatrix cm = confusion(slice, slice_truth);
      SliceMetrics m;
      m.accuracy = accuracy(cm);
      m.f1 = try_f1(cm);
      m.count = static_cast<std::size_t>(cm.total());
      report.per_role.emplace(role, m);
    }
  }

  if (options.by_success_level) {
    std::map<int, std::pair<std::size_t, std::size_t>> hits;  // level -> {correct, total}
    for (const auto& [id, verdict] : predictions) {
      const ConversationRecord& record = *by_id.at(id);
      if (record.label != Label::Malicious) continue;
      if (!record.annotations.success)
        throw MissingAnnotations("record " + id + " has no success label");
      const int level = static_cast<int>(*record.annotations.success);
      if (level == -1) continue;  // degenerate transcripts stay out of the slices
      auto& cell = hits[level];
      ++cell.second;
      if (verdict == Verdict::Malicious) ++cell.first;
    }
    for (const auto& [level, cell] : hits) {
      SliceMetrics m;
      m.accuracy = static_cast<double>(cell.first) / static_cast<double>(cell.second);
      m.count = cell.second;
      report.per_success_level.emplace(level, m);
    }
  }
  return report;
}

namespace detail {

inline std::string format_metric(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

}  // namespace detail

/// Deterministic CSV: method,slice,metric,value,count.
inline void emit_csv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report: " + path.string());
  out << "method,slice,metric,value,count\n";
  auto row = [&](const std::string& slice, const std::string& metric, double value,
                 std::size_t count) {
    out << report.method << ',' << slice << ',' << metric << ','
        << detail::format_metric(value) << ',' << count << '\n';
  };
  row("overall", "accuracy", report.overall.accuracy, report.overall.count);
  if (report.overall.f1) row("overall", "f1", *report.overall.f1, report.overall.count);
  for (const auto& [role, m] : report.per_role) {
    row(to_string(role), "accuracy", m.accuracy, m.count);
    if (m.f1) row(to_string(role), "f1", *m.f1, m.count);
  }
  for (const auto& [level, m] : report.per_success_level)
    row("success_" + std::to_string(level), "accuracy", m.accuracy, m.count);
  if (!out) throw IoError("write failed: " + path.string());
}

/// Table mirroring the per-role accuracy/F1 layout used in result summaries.
inline std::string format_report_table(const MetricsReport& report) {
  auto fmt = [](double v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%6.3f", v);
    return std::string(buf);
  };
  auto role_cell = [&](AttackerRole role, bool want_f1) {
    const auto it = report.per_role.find(role);
    if (it == report.per_role.end()) return std::string("   -  ");
    return fmt(want_f1 ? it->second.f1.value_or(0.0) : it->second.accuracy);
  };
  std::string out;
  out += "method: " + report.method + " (positive class: malicious)\n";
  out += "metric      AF      JO      RE      Overall\n";
  out += "accuracy  " + role_cell(AttackerRole::AF, false) + "  " +
         role_cell(AttackerRole::JO, false) + "  " + role_cell(AttackerRole::RE, false) + "  " +
         fmt(report.overall.accuracy) + "\n";
  out += "f1        " + role_cell(AttackerRole::AF, true) + "  " +
         role_cell(AttackerRole::JO, true) + "  " + role_cell(AttackerRole::RE, true) + "  " +
         fmt(report.overall.f1.value_or(0.0)) + "\n";
  return out;
}

}  // namespace sevsim
