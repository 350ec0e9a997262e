#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "sevsim/errors.hpp"

namespace sevsim {

using json = nlohmann::json;

enum class MessageRole { System, User, Assistant };

struct ChatMessage {
  MessageRole role = MessageRole::User;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

inline std::string to_string(MessageRole role) {
  switch (role) {
    case MessageRole::System: return "system";
    case MessageRole::User: return "user";
    case MessageRole::Assistant: return "assistant";
  }
  return "user";
}

/// Sampling parameters forwarded to the model server. Simulation runs use the
/// defaults below; judging and detection lower temperature to 0.1.
struct GenerationParams {
  double temperature = 0.6;
  double top_p = 0.9;
  int max_new_tokens = 4000;

  friend bool operator==(const GenerationParams&, const GenerationParams&) = default;
};

inline GenerationParams simulation_params() { return GenerationParams{}; }
inline GenerationParams judging_params() { return GenerationParams{0.1, 0.9, 4000}; }

enum class BackendKind { Http, Scripted };

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
};

/// Where completions come from: a remote OpenAI-compatible server, or an
/// in-process list of canned responses for deterministic runs.
struct BackendSpec {
  BackendKind kind = BackendKind::Scripted;
  std::string endpoint_url;  // Http only, e.g. "http://localhost:8000/v1"
  std::string model_id;
  GenerationParams params;
  std::vector<std::string> script;  // Scripted only, served in order
  RetryPolicy retry;

  static BackendSpec http(std::string endpoint, std::string model,
                          GenerationParams p = GenerationParams{}) {
    BackendSpec spec;
    spec.kind = BackendKind::Http;
    spec.endpoint_url = std::move(endpoint);
    spec.model_id = std::move(model);
    spec.params = p;
    return spec;
  }

  static BackendSpec scripted(std::vector<std::string> responses,
                              GenerationParams p = GenerationParams{}) {
    BackendSpec spec;
    spec.kind = BackendKind::Scripted;
    spec.model_id = "scripted";
    spec.params = p;
    spec.script = std::move(responses);
    return spec;
  }

  friend bool operator==(const BackendSpec&, const BackendSpec&) = default;
};

enum class FinishReason { Stop, Length, Other };

struct ChatResponse {
  std::string content;  // raw model output, unmodified
  FinishReason finish_reason = FinishReason::Stop;
};

namespace detail {

inline void validate_params(const GenerationParams& p) {
  if (p.temperature < 0.0 || p.temperature > 2.0)
    throw std::invalid_argument("temperature must be in [0,2]");
  if (p.top_p <= 0.0 || p.top_p > 1.0) throw std::invalid_argument("top_p must be in (0,1]");
  if (p.max_new_tokens <= 0) throw std::invalid_argument("max_new_tokens must be positive");
}

inline void validate_request(const std::vector<ChatMessage>& messages) {
  if (messages.empty()) throw std::invalid_argument("chat request must contain messages");
  if (messages.front().role == MessageRole::Assistant)
    throw std::invalid_argument("first message must be System or User");
  for (const auto& m : messages) {
    if (m.role != MessageRole::System && m.content.empty())
      throw std::invalid_argument("User/Assistant message content must be non-empty");
  }
}

// Splits "http://host:port/prefix" into the httplib client origin and the
// path prefix. Scheme and host are required.
struct ParsedUrl {
  std::string origin;
  std::string path_prefix;
};

inline ParsedUrl parse_endpoint(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw std::invalid_argument("endpoint_url must include a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

}  // namespace detail

/// Chat-completion handle over one BackendSpec. Scripted backends pop their
/// canned responses in order and record every request they receive, which is
/// what the simulation tests introspect. Handles are safe to share across
/// threads.
class Backend {
 public:
  explicit Backend(BackendSpec spec) : spec_(std::move(spec)) {
    detail::validate_params(spec_.params);
    if (spec_.kind == BackendKind::Http) {
      if (spec_.endpoint_url.empty() || spec_.model_id.empty())
        throw std::invalid_argument("Http backend requires endpoint_url and model_id");
    }
  }

  const BackendSpec& spec() const { return spec_; }

  ChatResponse complete(const std::vector<ChatMessage>& messages) {
    detail::validate_request(messages);
    if (spec_.kind == BackendKind::Scripted) return complete_scripted(messages);
    return complete_http(messages);
  }

  /// Requests seen so far (scripted backends only).
  std::vector<std::vector<ChatMessage>> request_log() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return requests_;
  }

  std::size_t calls() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return calls_;
  }

 private:
  ChatResponse complete_scripted(const std::vector<ChatMessage>& messages) {
    std::lock_guard<std::mutex> lock(mutex_);
    ++calls_;
    requests_.push_back(messages);
    if (script_pos_ >= spec_.script.size())
      throw ScriptExhausted("scripted backend has no responses left (served " +
                            std::to_string(script_pos_) + ")");
    return ChatResponse{spec_.script[script_pos_++], FinishReason::Stop};
  }

  ChatResponse complete_http(const std::vector<ChatMessage>& messages) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++calls_;
    }
    const auto parsed = detail::parse_endpoint(spec_.endpoint_url);

    json body{{"model", spec_.model_id},
              {"temperature", spec_.params.temperature},
              {"top_p", spec_.params.top_p},
              {"max_tokens", spec_.params.max_new_tokens}};
    auto& msgs = body["messages"] = json::array();
    for (const auto& m : messages)
      msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (const char* key = std::getenv("SEVSIM_API_KEY"); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);

    std::string last_error;
    bool last_was_transport = true;
    auto backoff = spec_.retry.initial_backoff;
    for (int attempt = 1; attempt <= spec_.retry.max_attempts; ++attempt) {
      if (attempt > 1) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      httplib::Client client(parsed.origin);
      client.set_connection_timeout(10, 0);
      client.set_read_timeout(300, 0);
      auto res = client.Post(parsed.path_prefix + "/chat/completions", headers, payload,
                             "application/json");
      if (!res) {
        last_error = "transport failure: " + httplib::to_string(res.error());
        last_was_transport = true;
        continue;
      }
      if (res->status >= 200 && res->status < 300) return parse_completion(res->body);
      if (res->status == 429 || res->status >= 500) {
        last_error = "server returned status " + std::to_string(res->status);
        last_was_transport = false;
        continue;
      }
      throw ProtocolError("server returned status " + std::to_string(res->status) + ": " +
                          res->body);
    }
    const std::string what = last_error + " after " + std::to_string(spec_.retry.max_attempts) +
                             " attempts to " + spec_.endpoint_url;
    if (last_was_transport) throw TransportError(what);
    throw ProtocolError(what);
  }

  static ChatResponse parse_completion(const std::string& body) {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw ProtocolError("response body is not JSON");
    if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty())
      throw ProtocolError("response has no choices");
    const auto& choice = doc["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content") ||
        !choice["message"]["content"].is_string())
      throw ProtocolError("response is missing choices[0].message.content");
    ChatResponse out;
    out.content = choice["message"]["content"].get<std::string>();
    const std::string reason = choice.value("finish_reason", "stop");
    if (reason == "stop") out.finish_reason = FinishReason::Stop;
    else if (reason == "length") out.finish_reason = FinishReason::Length;
    else out.finish_reason = FinishReason::Other;
    return out;
  }

  BackendSpec spec_;
  std::size_t script_pos_ = 0;
  std::size_t calls_ = 0;
  std::vector<std::vector<ChatMessage>> requests_;
  mutable std::mutex mutex_;
};

namespace detail {

// Finds the end (one past '}') of a balanced JSON-like object starting at
// `start`, honoring string literals and escapes. Returns npos if unbalanced.
inline std::size_t balanced_object_end(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}') {
      --depth;
      if (depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

}  // namespace detail

/// Pulls the first JSON object carrying all of `required_keys` out of model
/// text that may wrap it in prose, code fences, or other objects. Values are
/// returned untouched.
inline json extract_json_object(std::string_view text, const std::set<std::string>& required_keys) {
  if (required_keys.empty()) throw std::invalid_argument("required_keys must be non-empty");

  std::optional<std::vector<std::string>> first_missing;
  bool saw_balanced = false;
  for (std::size_t pos = text.find('{'); pos != std::string_view::npos;
       pos = text.find('{', pos + 1)) {
    const std::size_t end = detail::balanced_object_end(text, pos);
    if (end == std::string_view::npos) continue;
    saw_balanced = true;
    json candidate = json::parse(text.substr(pos, end - pos), nullptr, false);
    if (candidate.is_discarded() || !candidate.is_object()) continue;  // descend into nested body
    std::vector<std::string> missing;
    for (const auto& key : required_keys)
      if (!candidate.contains(key)) missing.push_back(key);
    if (missing.empty()) return candidate;
    if (!first_missing) first_missing = std::move(missing);
    pos = end - 1;  // a parsed object is opaque; skip its body
  }
  if (first_missing) throw MissingKeys(*first_missing);
  if (saw_balanced) throw MalformedJson("balanced braces found but no parseable JSON object");
  throw NoObjectFound("no JSON object found in text");
}

namespace detail {

inline std::size_t balanced_array_end(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '[') ++depth;
    else if (c == ']') {
      --depth;
      if (depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

}  // namespace detail

/// Companion to extract_json_object for list-shaped replies: returns the
/// first parseable JSON array found in the text.
inline json extract_json_array(std::string_view text) {
  bool saw_balanced = false;
  for (std::size_t pos = text.find('['); pos != std::string_view::npos;
       pos = text.find('[', pos + 1)) {
    const std::size_t end = detail::balanced_array_end(text, pos);
    if (end == std::string_view::npos) continue;
    saw_balanced = true;
    json candidate = json::parse(text.substr(pos, end - pos), nullptr, false);
    if (!candidate.is_discarded() && candidate.is_array()) return candidate;
  }
  if (saw_balanced) throw MalformedJson("balanced brackets found but no parseable JSON array");
  throw NoObjectFound("no JSON array found in text");
}

}  // namespace sevsim
