#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sevsim/errors.hpp"

namespace sevsim {

enum class Trait { Openness, Conscientiousness, Extraversion, Agreeableness, Neuroticism };
enum class TraitLevel { High, Low };

struct PersonaProfile {
  Trait trait = Trait::Openness;
  TraitLevel level = TraitLevel::High;

  friend auto operator<=>(const PersonaProfile&, const PersonaProfile&) = default;
};

enum class AttackerRole { AF, JO, RE };
enum class InfoType { Pii, Financial, IntellectualProperty };
enum class Intent { Malicious, Benign };

/// Attacker conditioning: who the attacker pretends to be, what they are
/// after, and whether the run is an attack at all. Benign goals drop the
/// target-information directive entirely.
struct AttackGoal {
  AttackerRole role = AttackerRole::RE;
  InfoType info_type = InfoType::Pii;
  Intent intent = Intent::Malicious;

  friend auto operator<=>(const AttackGoal&, const AttackGoal&) = default;
};

inline std::string to_string(Trait t) {
  switch (t) {
    case Trait::Openness: return "openness";
    case Trait::Conscientiousness: return "conscientiousness";
    case Trait::Extraversion: return "extraversion";
    case Trait::Agreeableness: return "agreeableness";
    case Trait::Neuroticism: return "neuroticism";
  }
  return "openness";
}

inline std::string to_string(TraitLevel l) { return l == TraitLevel::High ? "high" : "low"; }

inline std::string to_string(AttackerRole r) {
  switch (r) {
    case AttackerRole::AF: return "AF";
    case AttackerRole::JO: return "JO";
    case AttackerRole::RE: return "RE";
  }
  return "RE";
}

inline std::string to_string(InfoType t) {
  switch (t) {
    case InfoType::Pii: return "pii";
    case InfoType::Financial: return "financial";
    case InfoType::IntellectualProperty: return "ip";
  }
  return "pii";
}

inline std::string to_string(Intent i) { return i == Intent::Malicious ? "malicious" : "benign"; }

inline Trait trait_from_string(const std::string& s) {
  if (s == "openness") return Trait::Openness;
  if (s == "conscientiousness") return Trait::Conscientiousness;
  if (s == "extraversion") return Trait::Extraversion;
  if (s == "agreeableness") return Trait::Agreeableness;
  if (s == "neuroticism") return Trait::Neuroticism;
  throw Error("unknown trait: " + s);
}

inline TraitLevel trait_level_from_string(const std::string& s) {
  if (s == "high") return TraitLevel::High;
  if (s == "low") return TraitLevel::Low;
  throw Error("unknown trait level: " + s);
}

inline AttackerRole role_from_string(const std::string& s) {
  if (s == "AF") return AttackerRole::AF;
  if (s == "JO") return AttackerRole::JO;
  if (s == "RE") return AttackerRole::RE;
  throw Error("unknown attacker role: " + s);
}

inline InfoType info_type_from_string(const std::string& s) {
  if (s == "pii") return InfoType::Pii;
  if (s == "financial") return InfoType::Financial;
  if (s == "ip") return InfoType::IntellectualProperty;
  throw Error("unknown info type: " + s);
}

inline Intent intent_from_string(const std::string& s) {
  if (s == "malicious") return Intent::Malicious;
  if (s == "benign") return Intent::Benign;
  throw Error("unknown intent: " + s);
}

constexpr std::array<Trait, 5> all_traits() {
  return {Trait::Openness, Trait::Conscientiousness, Trait::Extraversion, Trait::Agreeableness,
          Trait::Neuroticism};
}

constexpr std::array<AttackerRole, 3> all_roles() {
  return {AttackerRole::AF, AttackerRole::JO, AttackerRole::RE};
}

constexpr std::array<InfoType, 3> all_info_types() {
  return {InfoType::Pii, InfoType::Financial, InfoType::IntellectualProperty};
}

inline std::vector<PersonaProfile> all_profiles() {
  std::vector<PersonaProfile> out;
  for (Trait t : all_traits())
    for (TraitLevel l : {TraitLevel::High, TraitLevel::Low}) out.push_back({t, l});
  return out;
}

/// Phrase substituted for {attacker_role} in the malicious attacker template.
inline std::string role_phrase(AttackerRole r) {
  switch (r) {
    case AttackerRole::AF: return "funding agency";
    case AttackerRole::JO: return "journalist";
    case AttackerRole::RE: return "recruiter";
  }
  return "recruiter";
}

/// Phrase substituted for {information_type} in the malicious attacker template.
inline std::string info_type_phrase(InfoType t) {
  switch (t) {
    case InfoType::Pii: return "personally identifiable information (PII)";
    case InfoType::Financial: return "sensitive financial information";
    case InfoType::IntellectualProperty: return "intellectual property (patents and trademarks)";
  }
  return "personally identifiable information (PII)";
}

namespace detail {

inline std::string replace_all(std::string text, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

inline void text_swap(std::string& tmpl, const std::string& key, const std::string& value) {
  tmpl = replace_all(std::move(tmpl), "{" + key + "}", value);
}

inline std::string render_template(std::string tmpl,
                                   const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) text_swap(tmpl, key, value);
  return tmpl;
}

/// Returns the first {placeholder} token left in `text`, if any.
inline std::string first_placeholder(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
      ++j;
    if (j > i + 1 && j < text.size() && text[j] == '}')
      return std::string(text.substr(i, j - i + 1));
  }
  return {};
}

}  // namespace detail

/// Immutable catalog of every prompt template plus the bundled name list.
/// Templates live as UTF-8 files with {placeholder} tokens; the catalog never
/// mutates non-placeholder bytes when rendering.
class PromptCatalog {
 public:
  static PromptCatalog load(const std::filesystem::path& dir) {
    PromptCatalog cat;
    cat.dir_ = dir;
    cat.attacker_malicious_ = read_template(dir / "attacker_malicious.txt",
                                            {"attacker", "attacker_role", "information_type"});
    cat.scenario_[AttackerRole::AF] = read_template(dir / "scenario_af.txt", {"attacker", "victim"});
    cat.scenario_[AttackerRole::JO] = read_template(dir / "scenario_jo.txt", {"attacker", "victim"});
    cat.scenario_[AttackerRole::RE] = read_template(dir / "scenario_re.txt", {"attacker", "victim"});
    cat.victim_ = read_template(dir / "victim.txt", {"victim", "persona_desc"});
    for (const auto profile : all_profiles()) {
      const auto name = to_string(profile.trait) + "_" + to_string(profile.level) + ".txt";
      auto tmpl = read_template(dir / "personas" / name, {"name"});
      if (tmpl.find("{name}") == std::string::npos)
        throw CatalogError("persona template " + name + " never mentions {name}");
      cat.personas_[profile] = std::move(tmpl);
    }
    cat.annotator_system_ = read_template(dir / "annotator_system.txt", {});
    cat.judge_success_ = read_template(dir / "judge_success.txt", {"conversation"});
    cat.strategy_annotation_ =
        read_template(dir / "strategy_annotation.txt", {"attack_effects", "conversation"});
    cat.worker_personality_ = read_template(dir / "worker_personality.txt", {"trait", "conversation"});
    cat.worker_strategy_ =
        read_template(dir / "worker_strategy.txt", {"attack_strat", "conversation"});
    cat.worker_info_ = read_template(dir / "worker_info.txt", {"conversation"});
    cat.control_agent_ = read_template(
        dir / "control_agent.txt",
        {"PersonalityWorkerAgent", "StrategyWorkerAgent", "InfoWorkerAgent", "conversation"});
    cat.zero_shot_ = read_template(dir / "zero_shot.txt", {"conversation"});
    cat.load_names(dir / "names.txt");
    return cat;
  }

  const std::filesystem::path& dir() const { return dir_; }

  std::string persona_template(PersonaProfile profile) const { return personas_.at(profile); }

  std::string persona_description(PersonaProfile profile, const std::string& victim_name) const {
    require_name(victim_name, "victim_name");
    return detail::render_template(personas_.at(profile), {{"name", victim_name}});
  }

  std::string attacker_system_prompt(const AttackGoal& goal, const std::string& attacker_name,
                                     const std::string& victim_name) const {
    require_name(attacker_name, "attacker_name");
    require_name(victim_name, "victim_name");
    if (goal.intent == Intent::Malicious) {
      return detail::render_template(attacker_malicious_,
                                     {{"attacker", attacker_name},
                                      {"attacker_role", role_phrase(goal.role)},
                                      {"information_type", info_type_phrase(goal.info_type)}});
    }
    return detail::render_template(scenario_.at(goal.role),
                                   {{"attacker", attacker_name}, {"victim", victim_name}});
  }

  std::string victim_system_prompt(PersonaProfile profile, const std::string& victim_name) const {
    require_name(victim_name, "victim_name");
    return detail::render_template(
        victim_, {{"victim", victim_name},
                  {"persona_desc", persona_description(profile, victim_name)}});
  }

  std::string annotator_system_prompt() const { return annotator_system_; }

  std::string judge_success_prompt(const std::string& conversation) const {
    return detail::render_template(judge_success_, {{"conversation", conversation}});
  }

  std::string strategy_annotation_prompt(const std::string& attack_effects,
                                         const std::string& conversation) const {
    return detail::render_template(
        strategy_annotation_, {{"attack_effects", attack_effects}, {"conversation", conversation}});
  }

  std::string worker_personality_prompt(const std::string& trait_desc,
                                        const std::string& conversation) const {
    return detail::render_template(worker_personality_,
                                   {{"trait", trait_desc}, {"conversation", conversation}});
  }

  std::string worker_strategy_prompt(const std::string& attack_strat,
                                     const std::string& conversation) const {
    return detail::render_template(worker_strategy_,
                                   {{"attack_strat", attack_strat}, {"conversation", conversation}});
  }

  std::string worker_info_prompt(const std::string& conversation) const {
    return detail::render_template(worker_info_, {{"conversation", conversation}});
  }

  std::string control_agent_prompt(const std::string& personality_report,
                                   const std::string& strategy_report,
                                   const std::string& info_report,
                                   const std::string& conversation) const {
    return detail::render_template(control_agent_, {{"PersonalityWorkerAgent", personality_report},
                                                    {"StrategyWorkerAgent", strategy_report},
                                                    {"InfoWorkerAgent", info_report},
                                                    {"conversation", conversation}});
  }

  std::string zero_shot_prompt(const std::string& conversation) const {
    return detail::render_template(zero_shot_, {{"conversation", conversation}});
  }

  /// Deterministic "First Last" draw from the bundled list. The salt
  /// decorrelates streams that share a seed.
  std::string random_name(std::uint64_t seed, std::string_view salt) const {
    std::uint64_t state = mix(seed ^ fnv1a(salt));
    const auto& first = first_names_[next(state) % first_names_.size()];
    const auto& last = last_names_[next(state) % last_names_.size()];
    return first + " " + last;
  }

  std::size_t first_name_count() const { return first_names_.size(); }
  std::size_t last_name_count() const { return last_names_.size(); }

 private:
  static void require_name(const std::string& name, const char* what) {
    if (name.empty()) throw std::invalid_argument(std::string(what) + " must be non-empty");
  }

  static std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CatalogError("cannot read prompt file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    if (text.empty()) throw CatalogError("prompt file is empty: " + path.string());
    return text;
  }

  static std::string read_template(const std::filesystem::path& path,
                                   const std::set<std::string>& placeholders) {
    std::string tmpl = read_file(path);
    std::string probe = tmpl;
    for (const auto& key : placeholders) detail::text_swap(probe, key, "x");
    if (auto leftover = detail::first_placeholder(probe); !leftover.empty())
      throw CatalogError("unresolved placeholder " + leftover + " in " + path.string());
    return tmpl;
  }

  void load_names(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CatalogError("cannot read name list: " + path.string());
    std::vector<std::string>* section = nullptr;
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (line.empty()) continue;
      if (line == "[first]") section = &first_names_;
      else if (line == "[last]") section = &last_names_;
      else if (section) section->push_back(line);
      else throw CatalogError("names.txt entry before any [first]/[last] section: " + line);
    }
    if (first_names_.empty() || last_names_.empty())
      throw CatalogError("names.txt needs non-empty [first] and [last] sections");
  }

  static std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 1469598103934665603ull;
    for (const char c : text) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return h;
  }

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  static std::uint64_t next(std::uint64_t& state) {
    state = mix(state);
    return state;
  }

  std::filesystem::path dir_;
  std::string attacker_malicious_;
  std::map<AttackerRole, std::string> scenario_;
  std::string victim_;
  std::map<PersonaProfile, std::string> personas_;
  std::string annotator_system_;
  std::string judge_success_;
  std::string strategy_annotation_;
  std::string worker_personality_;
  std::string worker_strategy_;
  std::string worker_info_;
  std::string control_agent_;
  std::string zero_shot_;
  std::vector<std::string> first_names_;
  std::vector<std::string> last_names_;
};

}  // namespace sevsim
