#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sevsim/annotate.hpp"
#include "sevsim/backend.hpp"
#include "sevsim/conversation.hpp"
#include "sevsim/persona.hpp"

namespace sevsim {

using Verdict = Label;

inline Verdict verdict_from_string(const std::string& s) { return label_from_string(s); }

namespace detail {

inline bool contains_word(std::string_view haystack, std::string_view word) {
  auto lower = [](char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); };
  auto is_word_char = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
  };
  for (std::size_t i = 0; i + word.size() <= haystack.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < word.size(); ++j) {
      if (lower(haystack[i + j]) != word[j]) {
        match = false;
        break;
      }
    }
    if (!match) continue;
    const bool left_ok = i == 0 || !is_word_char(haystack[i - 1]);
    const std::size_t end = i + word.size();
    const bool right_ok = end == haystack.size() || !is_word_char(haystack[end]);
    if (left_ok && right_ok) return true;
  }
  return false;
}

inline constexpr const char* kLabelReAsk = "Answer with exactly one word: malicious or benign";

}  // namespace detail

/// Client-side stand-in for constrained decoding: a case-insensitive
/// whole-word scan for the two admissible labels.
inline Verdict parse_label(std::string_view text) {
  const bool has_malicious = detail::contains_word(text, "malicious");
  const bool has_benign = detail::contains_word(text, "benign");
  if (has_malicious && has_benign) throw Ambiguous("reply names both labels");
  if (has_malicious) return Verdict::Malicious;
  if (has_benign) return Verdict::Benign;
  throw Unparseable("reply names neither label: " + std::string(text.substr(0, 200)));
}

namespace detail {

inline Verdict classify_with_reask(std::vector<ChatMessage> request, Backend& backend,
                                   std::vector<std::string>* raw_log) {
  std::string raw = backend.complete(request).content;
  if (raw_log) raw_log->push_back(raw);
  try {
    return parse_label(raw);
  } catch (const Error&) {
    request.push_back({MessageRole::Assistant, raw});
    request.push_back({MessageRole::User, kLabelReAsk});
    raw = backend.complete(request).content;
    if (raw_log) raw_log->push_back(raw);
    return parse_label(raw);
  }
}

}  // namespace detail

inline Verdict detect_zero_shot(const ConversationRecord& record, const PromptCatalog& catalog,
                                Backend& backend, std::vector<std::string>* raw_log = nullptr) {
  std::vector<ChatMessage> request{
      {MessageRole::System, catalog.annotator_system_prompt()},
      {MessageRole::User, catalog.zero_shot_prompt(render_transcript(record))}};
  return detail::classify_with_reask(std::move(request), backend, raw_log);
}

/// One benign and one malicious exemplar precede the query, each answered in
/// the exemplar turn by its label. Exemplars must come from the training
/// split.
inline Verdict detect_few_shot(const ConversationRecord& record,
                               const ConversationRecord& example_benign,
                               const ConversationRecord& example_malicious,
                               const PromptCatalog& catalog, Backend& backend,
                               std::vector<std::string>* raw_log = nullptr) {
  if (example_benign.label != Label::Benign)
    throw LabelMismatch("benign exemplar " + example_benign.id + " is labeled malicious");
  if (example_malicious.label != Label::Malicious)
    throw LabelMismatch("malicious exemplar " + example_malicious.id + " is labeled benign");
  std::vector<ChatMessage> request{
      {MessageRole::System, catalog.annotator_system_prompt()},
      {MessageRole::User, catalog.zero_shot_prompt(render_transcript(example_benign))},
      {MessageRole::Assistant, "benign"},
      {MessageRole::User, catalog.zero_shot_prompt(render_transcript(example_malicious))},
      {MessageRole::Assistant, "malicious"},
      {MessageRole::User, catalog.zero_shot_prompt(render_transcript(record))}};
  return detail::classify_with_reask(std::move(request), backend, raw_log);
}

enum class WorkerKind { Personality, Strategy, Info };

inline std::string to_string(WorkerKind kind) {
  switch (kind) {
    case WorkerKind::Personality: return "personality";
    case WorkerKind::Strategy: return "strategy";
    case WorkerKind::Info: return "info";
  }
  return "info";
}

struct WorkerReport {
  WorkerKind kind = WorkerKind::Info;
  bool decision = false;  // Yes => true
  std::string evidence;
  std::string raw;

  friend bool operator==(const WorkerReport&, const WorkerReport&) = default;
};

struct WorkerContext {
  std::optional<PersonaProfile> persona;  // Personality worker
  std::string victim_name;                // used to render the persona description
  const Taxonomy* taxonomy = nullptr;     // Strategy worker
};

namespace detail {

inline constexpr const char* kWorkerReAsk =
    "Output valid JSON with keys decision and evidence only.";

inline std::optional<bool> parse_decision(const json& value) {
  if (!value.is_string()) return std::nullopt;
  std::string s = value.get<std::string>();
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "yes") return true;
  if (s == "no") return false;
  return std::nullopt;
}

}  // namespace detail

/// Runs one specialist worker over the conversation and normalizes its
/// {decision, evidence} reply.
inline WorkerReport run_worker(WorkerKind kind, const ConversationRecord& record,
                               const WorkerContext& context, const PromptCatalog& catalog,
                               Backend& backend) {
  const std::string conversation = render_transcript(record);
  std::string prompt;
  switch (kind) {
    case WorkerKind::Personality: {
      if (!context.persona) throw std::invalid_argument("personality worker requires a persona");
      const std::string victim =
          context.victim_name.empty() ? record.victim_name : context.victim_name;
      prompt = catalog.worker_personality_prompt(catalog.persona_description(*context.persona, victim),
                                                 conversation);
      break;
    }
    case WorkerKind::Strategy: {
      if (!context.taxonomy) throw std::invalid_argument("strategy worker requires a taxonomy");
      prompt = catalog.worker_strategy_prompt(context.taxonomy->render(), conversation);
      break;
    }
    case WorkerKind::Info: {
      prompt = catalog.worker_info_prompt(conversation);
      break;
    }
  }

  std::vector<ChatMessage> request{{MessageRole::User, prompt}};
  std::string last_raw;
  for (int attempt = 0; attempt <= 2; ++attempt) {
    if (attempt > 0) {
      request.push_back({MessageRole::Assistant, last_raw});
      request.push_back({MessageRole::User, detail::kWorkerReAsk});
    }
    last_raw = backend.complete(request).content;
    json object;
    try {
      object = extract_json_object(last_raw, {"decision", "evidence"});
    } catch (const Error&) {
      continue;
    }
    if (!object["evidence"].is_string() || object["evidence"].get<std::string>().empty()) continue;
    const auto decision = detail::parse_decision(object["decision"]);
    if (!decision) {
      throw BadDecision(object["decision"].is_string() ? object["decision"].get<std::string>()
                                                       : object["decision"].dump());
    }
    WorkerReport report;
    report.kind = kind;
    report.decision = *decision;
    report.evidence = object["evidence"].get<std::string>();
    report.raw = last_raw;
    return report;
  }
  throw ParseFailure(to_string(kind) + " worker produced no {decision, evidence} object; last: " +
                     last_raw.substr(0, 200));
}

struct OmniGuardResult {
  int score = 0;  // 1..10
  std::array<WorkerReport, 3> reports;  // Personality, Strategy, Info
  int threshold = 6;
  Verdict verdict = Verdict::Benign;
  std::string control_raw;
};

namespace detail {

inline std::string serialize_report(const WorkerReport& r) {
  return std::string("decision: ") + (r.decision ? "Yes" : "No") + "; evidence: " + r.evidence;
}

inline int parse_control_score(const std::string& reply) {
  long long value = 0;
  bool found = false;
  try {
    json object = extract_json_object(reply, {"score"});
    if (!integral_value(object["score"], value))
      throw ParseFailure("control score is not an integer: " + object["score"].dump());
    found = true;
  } catch (const ParseFailure&) {
    throw;
  } catch (const Error&) {
    // no {"score": n} object; fall back to the first bare integer
  }
  if (!found) {
    std::size_t i = 0;
    while (i < reply.size()) {
      if (std::isdigit(static_cast<unsigned char>(reply[i])) ||
          (reply[i] == '-' && i + 1 < reply.size() &&
           std::isdigit(static_cast<unsigned char>(reply[i + 1])))) {
        value = std::stoll(reply.substr(i));
        found = true;
        break;
      }
      ++i;
    }
  }
  if (!found) throw ParseFailure("control reply contains no score: " + reply.substr(0, 200));
  if (value < 1 || value > 10) throw ScoreOutOfRange(value);
  return static_cast<int>(value);
}

}  // namespace detail

/// The delegate-pattern detector: three specialist workers report to a
/// control agent that scores maliciousness 1-10; the threshold turns the
/// score into a verdict.
inline OmniGuardResult omniguard_detect(const ConversationRecord& record, PersonaProfile persona,
                                        const Taxonomy& taxonomy, const PromptCatalog& catalog,
                                        Backend& worker_backend, Backend& control_backend,
                                        int threshold = 6) {
  if (threshold < 1 || threshold > 10)
    throw std::invalid_argument("threshold must be in [1,10]");

  WorkerContext context;
  context.persona = persona;
  context.victim_name = record.victim_name;
  context.taxonomy = &taxonomy;

  OmniGuardResult result;
  result.threshold = threshold;
  const std::array<WorkerKind, 3> kinds{WorkerKind::Personality, WorkerKind::Strategy,
                                        WorkerKind::Info};
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    try {
      result.reports[i] = run_worker(kinds[i], record, context, catalog, worker_backend);
    } catch (const Error& e) {
      throw WorkerError(to_string(kinds[i]), e.what());
    }
  }

  const std::string control_prompt = catalog.control_agent_prompt(
      detail::serialize_report(result.reports[0]), detail::serialize_report(result.reports[1]),
      detail::serialize_report(result.reports[2]), render_transcript(record));
  result.control_raw =
      control_backend.complete({{MessageRole::User, control_prompt}}).content;
  result.score = detail::parse_control_score(result.control_raw);
  result.verdict = result.score >= threshold ? Verdict::Malicious : Verdict::Benign;
  return result;
}

/// One detector decision as persisted to the predictions JSONL file.
struct PredictionRow {
  std::string record_id;
  std::string method;  // "zero_shot" | "few_shot" | "omniguard"
  Verdict verdict = Verdict::Benign;
  std::optional<int> score;
  std::optional<std::array<WorkerReport, 3>> worker_reports;
  std::string raw;
};

inline void write_predictions(const std::vector<PredictionRow>& rows,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write predictions: " + path.string());
  for (const auto& row : rows) {
    json doc{{"record_id", row.record_id},
             {"method", row.method},
             {"verdict", to_string(row.verdict)},
             {"raw", row.raw}};
    if (row.score) doc["score"] = *row.score;
    if (row.worker_reports) {
      auto& list = doc["worker_reports"] = json::array();
      for (const auto& r : *row.worker_reports)
        list.push_back({{"kind", to_string(r.kind)},
                        {"decision", r.decision},
                        {"evidence", r.evidence},
                        {"raw", r.raw}});
    }
    out << doc.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::map<std::string, Verdict> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read predictions: " + path.string());
  std::map<std::string, Verdict> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) throw SchemaError("invalid JSON", line_no);
    try {
      out[doc.at("record_id").get<std::string>()] =
          verdict_from_string(doc.at("verdict").get<std::string>());
    } catch (const std::exception& e) {
      throw SchemaError(e.what(), line_no);
    }
  }
  return out;
}

}  // namespace sevsim
