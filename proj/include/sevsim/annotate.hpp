#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sevsim/backend.hpp"
#include "sevsim/conversation.hpp"
#include "sevsim/persona.hpp"

namespace sevsim {

struct StrategySubCategory {
  std::string name;
  std::string definition;
};

struct StrategyCategory {
  std::string name;
  std::vector<StrategySubCategory> subs;
};

/// The attack-strategy taxonomy: three mechanism families with thirteen named
/// tactics. Also renders itself into the {attack_effects}/{attack_strat}
/// prompt placeholder.
class Taxonomy {
 public:
  static Taxonomy standard() {
    Taxonomy tax;
    tax.categories_ = {
        {"Persuasion",
         {{"Similarity, Liking, and Helping",
           "People are more likely to comply with requests from individuals they perceive as "
           "similar or likable. Physical attractiveness also plays a role in increasing "
           "compliance."},
          {"Distraction",
           "Distraction can facilitate persuasion by disrupting counter-arguments and increasing "
           "compliance."},
          {"Source Credibility and Authority",
           "People tend to comply with requests from perceived authority figures. Symbols of "
           "authority like uniforms or badges can increase compliance."},
          {"Cognitive Response Model and Elaboration Likelihood Model",
           "These models explain how people process persuasive messages either through a central "
           "route (in-depth processing) or a peripheral route (superficial processing)."}}},
        {"Social Influence",
         {{"Group Influence and Conformity",
           "Individuals often conform to group behavior or beliefs due to social pressure."},
          {"Normative and Informational Influence",
           "Normative influence stems from a desire to be accepted by the group; informational "
           "influence comes from a desire to make correct decisions based on group behavior."},
          {"Social Exchange Theory and Reciprocity Norm",
           "People feel obligated to return favors, which can be exploited by attackers."},
          {"Social Responsibility Norm and Moral Duty",
           "Individuals feel a moral obligation to help others, which can be manipulated."},
          {"Self-Disclosure and Rapport Building",
           "Building a relationship through self-disclosure can lead to increased trust and "
           "compliance."}}},
        {"Cognition, Attitude, and Behavior",
         {{"Impression Management and Cognitive Dissonance",
           "People manage their behaviors to maintain a consistent self-image and reduce "
           "cognitive dissonance."},
          {"Foot-in-the-Door Technique",
           "Agreeing to a small request increases the likelihood of agreeing to a larger "
           "request."},
          {"Bystander Effect and Diffusion of Responsibility",
           "Individuals are less likely to help in the presence of others, spreading the sense "
           "of responsibility."},
          {"Scarcity and Time Pressure",
           "Perceived scarcity increases the value of an item, and time pressure can hinder "
           "logical thinking and decision-making."}}}};
    return tax;
  }

  const std::vector<StrategyCategory>& categories() const { return categories_; }

  bool contains(const std::string& main, const std::string& sub) const {
    for (const auto& cat : categories_) {
      if (cat.name != main) continue;
      for (const auto& s : cat.subs)
        if (s.name == sub) return true;
    }
    return false;
  }

  /// "Category:\n- Sub: definition" blocks, one line per tactic.
  std::string render() const {
    std::string out;
    for (const auto& cat : categories_) {
      if (!out.empty()) out += '\n';
      out += cat.name + ":";
      for (const auto& s : cat.subs) out += "\n- " + s.name + ": " + s.definition;
    }
    return out;
  }

 private:
  std::vector<StrategyCategory> categories_;
};

namespace detail {

inline constexpr const char* kJudgeReAsk = "Output valid JSON with key IsSuccessful only.";
inline constexpr const char* kStrategyReAsk =
    "Output a valid JSON list of objects with Main_category, Sub_category, and Message_id keys "
    "only.";

inline bool integral_value(const json& v, long long& out) {
  if (v.is_number_integer()) {
    out = v.get<long long>();
    return true;
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d == std::floor(d)) {
      out = static_cast<long long>(d);
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Asks the judge backend for the success label of one conversation.
inline SuccessLabel judge_success(const ConversationRecord& record, const PromptCatalog& catalog,
                                  Backend& backend, std::vector<std::string>* raw_log = nullptr) {
  if (record.messages.empty()) throw std::invalid_argument("record has no messages to judge");
  std::vector<ChatMessage> request{
      {MessageRole::System, catalog.annotator_system_prompt()},
      {MessageRole::User, catalog.judge_success_prompt(render_transcript(record))}};
  std::string last_raw;
  for (int attempt = 0; attempt <= 2; ++attempt) {
    if (attempt > 0) {
      request.push_back({MessageRole::Assistant, last_raw});
      request.push_back({MessageRole::User, detail::kJudgeReAsk});
    }
    last_raw = backend.complete(request).content;
    if (raw_log) raw_log->push_back(last_raw);
    json object;
    try {
      object = extract_json_object(last_raw, {"IsSuccessful"});
    } catch (const Error&) {
      continue;
    }
    long long value = 0;
    if (!detail::integral_value(object["IsSuccessful"], value)) continue;
    return success_label_from_int(value);  // throws OutOfRange outside {1,2,3,-1}
  }
  throw ParseFailure("judge produced no IsSuccessful object; last output: " +
                     last_raw.substr(0, 200));
}

struct RejectedStrategy {
  std::string item;  // offending element, serialized
  std::string reason;
};

struct StrategyJudgement {
  std::vector<StrategyAnnotation> accepted;
  std::vector<RejectedStrategy> rejected;
};

/// Asks the judge backend which taxonomy tactics appear in the conversation.
/// Elements that name unknown tactics or out-of-range messages are reported,
/// not silently dropped.
inline StrategyJudgement judge_strategies(const ConversationRecord& record,
                                          const Taxonomy& taxonomy, const PromptCatalog& catalog,
                                          Backend& backend,
                                          std::vector<std::string>* raw_log = nullptr) {
  if (record.messages.empty()) throw std::invalid_argument("record has no messages to judge");
  std::vector<ChatMessage> request{
      {MessageRole::System, catalog.annotator_system_prompt()},
      {MessageRole::User,
       catalog.strategy_annotation_prompt(taxonomy.render(), render_transcript(record))}};
  std::string last_raw;
  json list;
  bool parsed = false;
  for (int attempt = 0; attempt <= 2 && !parsed; ++attempt) {
    if (attempt > 0) {
      request.push_back({MessageRole::Assistant, last_raw});
      request.push_back({MessageRole::User, detail::kStrategyReAsk});
    }
    last_raw = backend.complete(request).content;
    if (raw_log) raw_log->push_back(last_raw);
    try {
      list = extract_json_array(last_raw);
      parsed = true;
    } catch (const Error&) {
    }
  }
  if (!parsed)
    throw ParseFailure("judge produced no JSON list; last output: " + last_raw.substr(0, 200));

  StrategyJudgement out;
  const int message_count = static_cast<int>(record.messages.size());
  for (const auto& item : list) {
    if (!item.is_object() || !item.contains("Main_category") || !item.contains("Sub_category") ||
        !item.contains("Message_id")) {
      out.rejected.push_back({item.dump(), "missing Main_category/Sub_category/Message_id"});
      continue;
    }
    if (!item["Main_category"].is_string() || !item["Sub_category"].is_string()) {
      out.rejected.push_back({item.dump(), "category names must be strings"});
      continue;
    }
    StrategyAnnotation ann;
    ann.main_category = item["Main_category"].get<std::string>();
    ann.sub_category = item["Sub_category"].get<std::string>();
    long long idx = 0;
    if (!detail::integral_value(item["Message_id"], idx)) {
      out.rejected.push_back({item.dump(), "Message_id must be an integer"});
      continue;
    }
    ann.message_index = static_cast<int>(idx);
    if (!taxonomy.contains(ann.main_category, ann.sub_category)) {
      out.rejected.push_back({item.dump(), "not in taxonomy"});
      continue;
    }
    if (ann.message_index < 1 || ann.message_index > message_count) {
      out.rejected.push_back({item.dump(), "index out of range"});
      continue;
    }
    out.accepted.push_back(std::move(ann));
  }
  if (out.accepted.empty() && !out.rejected.empty())
    throw AllRejected("judge returned " + std::to_string(out.rejected.size()) +
                      " strategies, none valid (first: " + out.rejected.front().reason + ")");
  return out;
}

/// Reads one annotator's spreadsheet: header `conversation_id,IsSuccessful`,
/// one row per conversation.
inline std::map<std::string, SuccessLabel> ingest_human_annotations(
    const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot read annotation CSV: " + csv_path.string());
  auto trim = [](std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    return s.substr(i);
  };
  std::string line;
  std::size_t row = 0;
  if (!std::getline(in, line)) throw SchemaError("annotation CSV is empty", 1);
  ++row;
  if (trim(line) != "conversation_id,IsSuccessful")
    throw SchemaError("expected header conversation_id,IsSuccessful", row);

  std::map<std::string, SuccessLabel> out;
  while (std::getline(in, line)) {
    ++row;
    const std::string trimmed = trim(line);
    if (trimmed.empty()) continue;
    const auto comma = trimmed.find(',');
    if (comma == std::string::npos) throw BadValue("row has no comma", row);
    const std::string id = trim(trimmed.substr(0, comma));
    const std::string value = trim(trimmed.substr(comma + 1));
    if (id.empty()) throw BadValue("empty conversation_id", row);
    if (out.count(id)) throw DuplicateId("duplicate conversation_id: " + id);
    long long v = 0;
    try {
      std::size_t used = 0;
      v = std::stoll(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw BadValue("IsSuccessful is not an integer: \"" + value + "\"", row);
    }
    if (v != 1 && v != 2 && v != 3 && v != -1)
      throw BadValue("IsSuccessful outside {1,2,3,-1}: " + value, row);
    out.emplace(id, success_label_from_int(v));
  }
  return out;
}

/// Item × category rating counts for a fixed rater panel.
struct AgreementTable {
  std::vector<std::vector<long>> counts;
};

/// Chance-corrected agreement over the table. Every row must sum to the same
/// rater count n >= 2.
inline double fleiss_kappa(const AgreementTable& table) {
  const auto& counts = table.counts;
  if (counts.empty()) throw std::invalid_argument("agreement table has no items");
  const std::size_t categories = counts.front().size();
  if (categories == 0) throw std::invalid_argument("agreement table has no categories");
  long raters = 0;
  for (const auto& c : counts.front()) raters += c;
  if (raters < 2) throw std::invalid_argument("agreement requires at least 2 raters per item");
  for (const auto& row : counts) {
    if (row.size() != categories)
      throw std::invalid_argument("agreement table rows differ in category count");
    long sum = 0;
    for (const auto c : row) {
      if (c < 0) throw std::invalid_argument("agreement counts must be non-negative");
      sum += c;
    }
    if (sum != raters) throw std::invalid_argument("agreement table rows differ in rater count");
  }

  const double items = static_cast<double>(counts.size());
  const long total_ratings = raters * counts.size();
  for (std::size_t j = 0; j < categories; ++j) {
    long column = 0;
    for (const auto& row : counts) column += row[j];
    if (column == total_ratings)
      throw DegenerateAgreement("all ratings fall in one category; kappa is undefined");
  }

  double p_bar = 0.0;
  for (const auto& row : counts) {
    long sum_sq = 0;
    for (const auto c : row) sum_sq += c * c;
    p_bar += static_cast<double>(sum_sq - raters) / (static_cast<double>(raters) * (raters - 1));
  }
  p_bar /= items;

  double p_e = 0.0;
  for (std::size_t j = 0; j < categories; ++j) {
    long column = 0;
    for (const auto& row : counts) column += row[j];
    const double p_j = static_cast<double>(column) / static_cast<double>(total_ratings);
    p_e += p_j * p_j;
  }
  return (p_bar - p_e) / (1.0 - p_e);
}

/// Pools per-rater label maps into an AgreementTable over the items every
/// rater labeled with a valid (non -1) value. Columns are the labels 1, 2, 3.
inline AgreementTable agreement_from_raters(
    const std::vector<std::map<std::string, SuccessLabel>>& raters) {
  if (raters.size() < 2) throw std::invalid_argument("agreement needs at least 2 raters");
  AgreementTable table;
  for (const auto& [id, first_label] : raters.front()) {
    std::vector<SuccessLabel> labels{first_label};
    bool complete = true;
    for (std::size_t r = 1; r < raters.size(); ++r) {
      const auto it = raters[r].find(id);
      if (it == raters[r].end()) {
        complete = false;
        break;
      }
      labels.push_back(it->second);
    }
    if (!complete) continue;
    bool valid = true;
    for (const auto l : labels)
      if (l == SuccessLabel::Invalid) valid = false;
    if (!valid) continue;
    std::vector<long> row(3, 0);
    for (const auto l : labels) row[static_cast<int>(l) - 1] += 1;
    table.counts.push_back(std::move(row));
  }
  return table;
}

}  // namespace sevsim
