#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sevsim/backend.hpp"
#include "sevsim/conversation.hpp"
#include "sevsim/persona.hpp"

namespace sevsim {

struct SimulationConfig {
  AttackGoal goal;
  PersonaProfile profile;
  std::string attacker_name;
  std::string victim_name;
  int turn_budget = 10;  // attacker+victim pairs; 10 pairs = 20 messages
  std::uint64_t seed = 0;
  BackendSpec attacker_backend;
  BackendSpec victim_backend;
  std::string id;  // assigned randomly when empty
};

/// Raised when a conversation dies mid-run; carries whatever transcript was
/// produced so batch runs can report per-record diagnostics.
class SimulationError : public Error {
 public:
  SimulationError(const std::string& what, std::vector<Message> partial,
                  std::vector<std::string> raw)
      : Error(what), partial_messages(std::move(partial)), raw_outputs(std::move(raw)) {}
  std::vector<Message> partial_messages;
  std::vector<std::string> raw_outputs;
};

inline Label label_from_goal(const AttackGoal& goal) {
  return goal.intent == Intent::Malicious ? Label::Malicious : Label::Benign;
}

/// Appends one attacker/victim pair. Indices must continue the context.
inline std::vector<Message> update_context(const std::vector<Message>& ctx,
                                           const Message& attacker_msg,
                                           const Message& victim_msg) {
  const int base = ctx.empty() ? 0 : ctx.back().index;
  if (attacker_msg.index != base + 1 || victim_msg.index != base + 2)
    throw IndexGap("messages " + std::to_string(attacker_msg.index) + "/" +
                   std::to_string(victim_msg.index) + " do not continue context at " +
                   std::to_string(base));
  std::vector<Message> out = ctx;
  out.push_back(attacker_msg);
  out.push_back(victim_msg);
  return out;
}

namespace detail {

inline constexpr const char* kReAskInstruction =
    "Output valid JSON with keys Name and Message only.";
inline constexpr int kMaxReAsks = 2;

/// Maps the shared transcript into a chat request from one side's point of
/// view: own prior messages become Assistant turns, the counterpart's User.
inline std::vector<ChatMessage> build_chat_request(const std::vector<Message>& ctx,
                                                   const std::string& system_prompt,
                                                   Speaker self) {
  std::vector<ChatMessage> request;
  request.reserve(ctx.size() + 1);
  request.push_back({MessageRole::System, system_prompt});
  for (const auto& m : ctx) {
    const auto role = m.speaker == self ? MessageRole::Assistant : MessageRole::User;
    request.push_back({role, m.text});
  }
  return request;
}

inline Message next_agent_message(const std::vector<Message>& ctx,
                                  const std::string& system_prompt, Backend& backend,
                                  Speaker self, std::vector<std::string>* raw_log) {
  auto request = build_chat_request(ctx, system_prompt, self);
  std::string last_raw;
  for (int attempt = 0; attempt <= kMaxReAsks; ++attempt) {
    if (attempt > 0) {
      request.push_back({MessageRole::Assistant, last_raw});
      request.push_back({MessageRole::User, kReAskInstruction});
    }
    const ChatResponse response = backend.complete(request);
    last_raw = response.content;
    if (raw_log) raw_log->push_back(response.content);
    try {
      json object = extract_json_object(response.content, {"Name", "Message"});
      if (!object["Name"].is_string() || !object["Message"].is_string()) continue;
      Message out;
      out.index = static_cast<int>(ctx.size()) + 1;
      out.speaker = self;
      out.name = object["Name"].get<std::string>();
      out.text = object["Message"].get<std::string>();
      if (out.text.empty()) continue;
      return out;
    } catch (const Error&) {
      // fall through to re-ask
    }
  }
  throw ParseFailure("no valid {Name, Message} object after " + std::to_string(kMaxReAsks) +
                     " re-asks; last output: " + last_raw.substr(0, 200));
}

}  // namespace detail

inline Message next_attacker_message(const std::vector<Message>& ctx,
                                     const std::string& system_prompt, Backend& backend,
                                     std::vector<std::string>* raw_log = nullptr) {
  if (ctx.size() % 2 != 0)
    throw std::invalid_argument("attacker speaks on even-length context");
  return detail::next_agent_message(ctx, system_prompt, backend, Speaker::Attacker, raw_log);
}

inline Message next_victim_message(const std::vector<Message>& ctx,
                                   const std::string& system_prompt, Backend& backend,
                                   std::vector<std::string>* raw_log = nullptr) {
  if (ctx.size() % 2 != 1)
    throw std::invalid_argument("victim speaks on odd-length context");
  return detail::next_agent_message(ctx, system_prompt, backend, Speaker::Victim, raw_log);
}

inline std::string iso8601_utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string random_record_id() {
  static constexpr char hex[] = "0123456789abcdef";
  std::random_device rd;
  std::string id = "c";
  for (int i = 0; i < 16; ++i) id += hex[rd() % 16];
  return id;
}

inline std::string backend_id(const BackendSpec& spec) {
  return spec.kind == BackendKind::Scripted ? "scripted" : spec.model_id;
}

/// Runs one full conversation against caller-supplied backend handles.
inline ConversationRecord simulate_with(const SimulationConfig& config,
                                        const PromptCatalog& catalog, Backend& attacker_backend,
                                        Backend& victim_backend) {
  if (config.turn_budget < 1) throw std::invalid_argument("turn_budget must be >= 1");
  const std::string attacker_sys =
      catalog.attacker_system_prompt(config.goal, config.attacker_name, config.victim_name);
  const std::string victim_sys = catalog.victim_system_prompt(config.profile, config.victim_name);

  std::vector<Message> ctx;
  std::vector<std::string> raw_outputs;
  try {
    for (int turn = 0; turn < config.turn_budget; ++turn) {
      const Message attacker_msg =
          next_attacker_message(ctx, attacker_sys, attacker_backend, &raw_outputs);
      std::vector<Message> mid = ctx;
      mid.push_back(attacker_msg);
      const Message victim_msg = next_victim_message(mid, victim_sys, victim_backend, &raw_outputs);
      ctx = update_context(ctx, attacker_msg, victim_msg);
    }
  } catch (const Error& e) {
    throw SimulationError(std::string("simulation failed at message ") +
                              std::to_string(ctx.size() + 1) + ": " + e.what(),
                          std::move(ctx), std::move(raw_outputs));
  }

  ConversationRecord record;
  record.id = config.id.empty() ? random_record_id() : config.id;
  record.label = label_from_goal(config.goal);
  record.goal = config.goal;
  record.persona = config.profile;
  record.attacker_name = config.attacker_name;
  record.victim_name = config.victim_name;
  record.turn_budget = config.turn_budget;
  record.seed = config.seed;
  record.messages = std::move(ctx);
  record.created_at = iso8601_utc_now();
  record.provenance.attacker_backend = backend_id(config.attacker_backend);
  record.provenance.victim_backend = backend_id(config.victim_backend);
  record.provenance.params = config.attacker_backend.params;
  record.provenance.raw_outputs = std::move(raw_outputs);
  return record;
}

inline ConversationRecord simulate(const SimulationConfig& config, const PromptCatalog& catalog) {
  Backend attacker_backend(config.attacker_backend);
  Backend victim_backend(config.victim_backend);
  return simulate_with(config, catalog, attacker_backend, victim_backend);
}

}  // namespace sevsim
