#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sevsim/backend.hpp"
#include "sevsim/persona.hpp"

namespace sevsim {

enum class Speaker { Attacker, Victim };
enum class Label { Malicious, Benign };

inline std::string to_string(Speaker s) { return s == Speaker::Attacker ? "attacker" : "victim"; }
inline std::string to_string(Label l) { return l == Label::Malicious ? "malicious" : "benign"; }

inline Speaker speaker_from_string(const std::string& s) {
  if (s == "attacker") return Speaker::Attacker;
  if (s == "victim") return Speaker::Victim;
  throw Error("unknown speaker: " + s);
}

inline Label label_from_string(const std::string& s) {
  if (s == "malicious") return Label::Malicious;
  if (s == "benign") return Label::Benign;
  throw Error("unknown label: " + s);
}

struct Message {
  int index = 1;  // 1-based over the whole conversation
  Speaker speaker = Speaker::Attacker;
  std::string name;
  std::string text;

  friend bool operator==(const Message&, const Message&) = default;
};

/// Attack success, judged per conversation. Invalid marks degenerate
/// transcripts that cannot be scored.
enum class SuccessLabel : int {
  Unsuccessful = 1,
  PartiallySuccessful = 2,
  HighlySuccessful = 3,
  Invalid = -1,
};

inline SuccessLabel success_label_from_int(long long v) {
  switch (v) {
    case 1: return SuccessLabel::Unsuccessful;
    case 2: return SuccessLabel::PartiallySuccessful;
    case 3: return SuccessLabel::HighlySuccessful;
    case -1: return SuccessLabel::Invalid;
  }
  throw OutOfRange(v);
}

struct StrategyAnnotation {
  std::string main_category;
  std::string sub_category;
  int message_index = 1;

  friend bool operator==(const StrategyAnnotation&, const StrategyAnnotation&) = default;
};

struct Annotations {
  std::optional<SuccessLabel> success;
  std::optional<std::vector<StrategyAnnotation>> strategies;

  bool empty() const { return !success && !strategies; }

  friend bool operator==(const Annotations&, const Annotations&) = default;
};

struct Provenance {
  std::string attacker_backend;
  std::string victim_backend;
  GenerationParams params;
  std::vector<std::string> raw_outputs;  // one entry per model call, re-asks included

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// One simulated conversation plus everything needed to reproduce or audit it.
struct ConversationRecord {
  std::string id;
  Label label = Label::Malicious;
  AttackGoal goal;
  PersonaProfile persona;
  std::string attacker_name;
  std::string victim_name;
  int turn_budget = 10;
  std::uint64_t seed = 0;
  std::vector<Message> messages;
  std::string created_at;  // ISO-8601 UTC
  Annotations annotations;
  Provenance provenance;

  friend bool operator==(const ConversationRecord&, const ConversationRecord&) = default;
};

/// Serializes messages as numbered "index. Name: text" lines — the format fed
/// into every judge and detector prompt.
inline std::string render_transcript(const std::vector<Message>& messages) {
  std::string out;
  for (const auto& m : messages) {
    if (!out.empty()) out += '\n';
    out += std::to_string(m.index) + ". " + m.name + ": " + m.text;
  }
  return out;
}

inline std::string render_transcript(const ConversationRecord& record) {
  return render_transcript(record.messages);
}

}  // namespace sevsim
