#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sevsim/annotate.hpp"
#include "sevsim/conversation.hpp"
#include "sevsim/errors.hpp"

namespace sevsim {

inline constexpr const char* kToolVersion = "0.1.0";

struct Manifest {
  std::string tool_version = kToolVersion;
  std::string config_digest;
  std::size_t total = 0;
  std::size_t malicious = 0;
  std::size_t benign = 0;
  std::vector<std::string> notes;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

struct Dataset {
  std::vector<ConversationRecord> records;
  Manifest manifest;

  std::size_t size() const { return records.size(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

namespace detail {

inline json record_to_json(const ConversationRecord& r) {
  json doc;
  doc["id"] = r.id;
  doc["label"] = to_string(r.label);
  doc["goal"] = {{"role", to_string(r.goal.role)},
                 {"info_type", to_string(r.goal.info_type)},
                 {"intent", to_string(r.goal.intent)}};
  doc["persona"] = {{"trait", to_string(r.persona.trait)}, {"level", to_string(r.persona.level)}};
  doc["attacker_name"] = r.attacker_name;
  doc["victim_name"] = r.victim_name;
  doc["turn_budget"] = r.turn_budget;
  doc["seed"] = r.seed;
  auto& msgs = doc["messages"] = json::array();
  for (const auto& m : r.messages)
    msgs.push_back({{"index", m.index},
                    {"speaker", to_string(m.speaker)},
                    {"name", m.name},
                    {"text", m.text}});
  doc["created_at"] = r.created_at;
  if (!r.annotations.empty()) {
    json ann = json::object();
    if (r.annotations.success)
      ann["is_successful"] = static_cast<int>(*r.annotations.success);
    if (r.annotations.strategies) {
      auto& list = ann["strategies"] = json::array();
      for (const auto& s : *r.annotations.strategies)
        list.push_back({{"main_category", s.main_category},
                        {"sub_category", s.sub_category},
                        {"message_index", s.message_index}});
    }
    doc["annotations"] = std::move(ann);
  }
  doc["provenance"] = {{"backend",
                        {{"attacker", r.provenance.attacker_backend},
                         {"victim", r.provenance.victim_backend}}},
                       {"params",
                        {{"temperature", r.provenance.params.temperature},
                         {"top_p", r.provenance.params.top_p},
                         {"max_new_tokens", r.provenance.params.max_new_tokens}}},
                       {"raw_outputs", r.provenance.raw_outputs}};
  return doc;
}

inline ConversationRecord record_from_json(const json& doc, const Taxonomy& taxonomy) {
  ConversationRecord r;
  r.id = doc.at("id").get<std::string>();
  r.label = label_from_string(doc.at("label").get<std::string>());
  const auto& goal = doc.at("goal");
  r.goal.role = role_from_string(goal.at("role").get<std::string>());
  r.goal.info_type = info_type_from_string(goal.at("info_type").get<std::string>());
  r.goal.intent = intent_from_string(goal.at("intent").get<std::string>());
  const auto& persona = doc.at("persona");
  r.persona.trait = trait_from_string(persona.at("trait").get<std::string>());
  r.persona.level = trait_level_from_string(persona.at("level").get<std::string>());
  r.attacker_name = doc.at("attacker_name").get<std::string>();
  r.victim_name = doc.at("victim_name").get<std::string>();
  r.turn_budget = doc.at("turn_budget").get<int>();
  r.seed = doc.at("seed").get<std::uint64_t>();
  for (const auto& m : doc.at("messages")) {
    Message msg;
    msg.index = m.at("index").get<int>();
    msg.speaker = speaker_from_string(m.at("speaker").get<std::string>());
    msg.name = m.at("name").get<std::string>();
    msg.text = m.at("text").get<std::string>();
    r.messages.push_back(std::move(msg));
  }
  r.created_at = doc.value("created_at", "");
  if (doc.contains("annotations")) {
    const auto& ann = doc["annotations"];
    if (ann.contains("is_successful"))
      r.annotations.success = success_label_from_int(ann["is_successful"].get<long long>());
    if (ann.contains("strategies")) {
      std::vector<StrategyAnnotation> list;
      for (const auto& s : ann["strategies"]) {
        StrategyAnnotation a;
        a.main_category = s.at("main_category").get<std::string>();
        a.sub_category = s.at("sub_category").get<std::string>();
        a.message_index = s.at("message_index").get<int>();
        list.push_back(std::move(a));
      }
      r.annotations.strategies = std::move(list);
    }
  }
  if (doc.contains("provenance")) {
    const auto& prov = doc["provenance"];
    if (prov.contains("backend")) {
      r.provenance.attacker_backend = prov["backend"].value("attacker", "");
      r.provenance.victim_backend = prov["backend"].value("victim", "");
    }
    if (prov.contains("params")) {
      r.provenance.params.temperature = prov["params"].value("temperature", 0.6);
      r.provenance.params.top_p = prov["params"].value("top_p", 0.9);
      r.provenance.params.max_new_tokens = prov["params"].value("max_new_tokens", 4000);
    }
    if (prov.contains("raw_outputs"))
      r.provenance.raw_outputs = prov["raw_outputs"].get<std::vector<std::string>>();
  }

  // Cross-field checks: the label law, message alternation, and taxonomy
  // membership of persisted strategy annotations.
  if (r.label != (r.goal.intent == Intent::Malicious ? Label::Malicious : Label::Benign))
    throw Error("label does not match goal intent for record " + r.id);
  for (std::size_t i = 0; i < r.messages.size(); ++i) {
    const auto& m = r.messages[i];
    if (m.index != static_cast<int>(i) + 1)
      throw Error("message indices not consecutive in record " + r.id);
    const Speaker expected = i % 2 == 0 ? Speaker::Attacker : Speaker::Victim;
    if (m.speaker != expected) throw Error("speakers do not alternate in record " + r.id);
  }
  if (r.annotations.strategies) {
    for (const auto& s : *r.annotations.strategies) {
      if (!taxonomy.contains(s.main_category, s.sub_category))
        throw Error("strategy not in taxonomy in record " + r.id + ": " + s.sub_category);
      if (s.message_index < 1 || s.message_index > static_cast<int>(r.messages.size()))
        throw Error("strategy message_index out of range in record " + r.id);
    }
  }
  return r;
}

inline std::filesystem::path manifest_path(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p.replace_extension(".manifest.json");
  return p;
}

inline json manifest_to_json(const Manifest& m) {
  return json{{"tool_version", m.tool_version},
              {"config_digest", m.config_digest},
              {"counts", {{"total", m.total}, {"malicious", m.malicious}, {"benign", m.benign}}},
              {"notes", m.notes}};
}

inline Manifest manifest_from_json(const json& doc) {
  Manifest m;
  m.tool_version = doc.value("tool_version", "");
  m.config_digest = doc.value("config_digest", "");
  if (doc.contains("counts")) {
    m.total = doc["counts"].value("total", std::size_t{0});
    m.malicious = doc["counts"].value("malicious", std::size_t{0});
    m.benign = doc["counts"].value("benign", std::size_t{0});
  }
  if (doc.contains("notes")) m.notes = doc["notes"].get<std::vector<std::string>>();
  return m;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

/// Recomputes the manifest's count fields from the records.
inline void refresh_manifest_counts(Dataset& dataset) {
  dataset.manifest.total = dataset.records.size();
  dataset.manifest.malicious = 0;
  dataset.manifest.benign = 0;
  for (const auto& r : dataset.records) {
    if (r.label == Label::Malicious) ++dataset.manifest.malicious;
    else ++dataset.manifest.benign;
  }
}

/// One record per line; manifest written to a sibling .manifest.json. Writes
/// go through a temp file and rename so an interrupted run never leaves a
/// half-written corpus.
inline void write_jsonl(const Dataset& dataset, const std::filesystem::path& path) {
  {
    std::set<std::string> ids;
    for (const auto& r : dataset.records)
      if (!ids.insert(r.id).second) throw Error("duplicate record id: " + r.id);
  }
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write dataset: " + path.string());
    for (const auto& r : dataset.records) out << detail::record_to_json(r).dump() << '\n';
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move dataset into place: " + ec.message());

  Manifest manifest = dataset.manifest;
  manifest.total = dataset.records.size();
  manifest.malicious = manifest.benign = 0;
  for (const auto& r : dataset.records)
    (r.label == Label::Malicious ? manifest.malicious : manifest.benign)++;
  const auto mpath = detail::manifest_path(path);
  std::ofstream mout(mpath, std::ios::binary | std::ios::trunc);
  if (!mout) throw IoError("cannot write manifest: " + mpath.string());
  mout << detail::manifest_to_json(manifest).dump(2) << '\n';
}

inline Dataset read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read dataset: " + path.string());
  const Taxonomy taxonomy = Taxonomy::standard();
  Dataset dataset;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) throw SchemaError("invalid JSON", line_no);
    try {
      auto record = detail::record_from_json(doc, taxonomy);
      if (!ids.insert(record.id).second)
        throw Error("duplicate record id: " + record.id);
      dataset.records.push_back(std::move(record));
    } catch (const SchemaError&) {
      throw;
    } catch (const std::exception& e) {
      throw SchemaError(e.what(), line_no);
    }
  }
  const auto mpath = detail::manifest_path(path);
  if (std::filesystem::exists(mpath)) {
    std::ifstream min(mpath, std::ios::binary);
    json doc = json::parse(min, nullptr, false);
    if (doc.is_discarded()) throw SchemaError("invalid manifest JSON: " + mpath.string(), 0);
    dataset.manifest = detail::manifest_from_json(doc);
  } else {
    refresh_manifest_counts(dataset);
  }
  return dataset;
}

struct CellCounts {
  std::size_t total = 0;
};

struct StatsReport {
  std::size_t total = 0;
  std::map<Label, std::size_t> by_label;
  std::map<AttackerRole, std::size_t> by_role;
  std::map<InfoType, std::size_t> by_info_type;
  std::map<PersonaProfile, std::size_t> by_profile;
  struct CrossKey {
    Label label;
    AttackerRole role;
    InfoType info_type;
    PersonaProfile profile;
    friend auto operator<=>(const CrossKey&, const CrossKey&) = default;
  };
  std::map<CrossKey, std::size_t> cross;
};

inline StatsReport dataset_stats(const Dataset& dataset) {
  StatsReport report;
  for (const auto& r : dataset.records)
    ++report.cross[{r.label, r.goal.role, r.goal.info_type, r.persona}];
  for (const auto& [key, count] : report.cross) {
    report.total += count;
    report.by_label[key.label] += count;
    report.by_role[key.role] += count;
    report.by_info_type[key.info_type] += count;
    report.by_profile[key.profile] += count;
  }
  return report;
}

struct SplitSpec {
  std::optional<std::size_t> train_count;
  std::optional<double> train_fraction;
  std::uint64_t seed = 0;
  std::set<std::string> strata_keys{"label", "role"};  // of {label, role, info_type, profile}
};

namespace detail {

inline std::string stratum_key(const ConversationRecord& r, const std::set<std::string>& keys) {
  std::string out;
  for (const auto& key : keys) {
    if (!out.empty()) out += '|';
    if (key == "label") out += to_string(r.label);
    else if (key == "role") out += to_string(r.goal.role);
    else if (key == "info_type") out += to_string(r.goal.info_type);
    else if (key == "profile") out += to_string(r.persona.trait) + "_" + to_string(r.persona.level);
    else throw std::invalid_argument("unknown stratum key: " + key);
  }
  return out;
}

inline void shuffle_indices(std::vector<std::size_t>& indices, std::uint64_t seed) {
  std::uint64_t state = seed;
  for (std::size_t i = indices.size(); i > 1; --i) {
    state = splitmix64(state);
    std::swap(indices[i - 1], indices[state % i]);
  }
}

}  // namespace detail

/// Deterministic stratified partition. Per-stratum quotas follow the global
/// train fraction with largest-remainder correction so the requested train
/// size is met exactly.
inline std::pair<Dataset, Dataset> stratified_split(const Dataset& dataset,
                                                    const SplitSpec& spec) {
  if (spec.train_count.has_value() == spec.train_fraction.has_value())
    throw std::invalid_argument("set exactly one of train_count / train_fraction");
  if (dataset.records.empty()) throw EmptyStratum("cannot split an empty dataset");

  const std::size_t total = dataset.records.size();
  std::size_t target = 0;
  if (spec.train_count) {
    target = *spec.train_count;
  } else {
    if (*spec.train_fraction < 0.0 || *spec.train_fraction > 1.0)
      throw std::invalid_argument("train_fraction must be in [0,1]");
    target = static_cast<std::size_t>(std::llround(*spec.train_fraction * total));
  }
  if (target > total)
    throw SizeExceeded("requested train size " + std::to_string(target) + " exceeds dataset size " +
                       std::to_string(total));

  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < dataset.records.size(); ++i)
    strata[detail::stratum_key(dataset.records[i], spec.strata_keys)].push_back(i);

  const long double fraction = static_cast<long double>(target) / total;
  struct Quota {
    std::string key;
    std::size_t base;
    long double remainder;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [key, indices] : strata) {
    const long double exact = fraction * indices.size();
    const auto base = static_cast<std::size_t>(exact);
    quotas.push_back({key, base, exact - base});
    assigned += base;
  }
  std::vector<std::size_t> order(quotas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (quotas[a].remainder != quotas[b].remainder) return quotas[a].remainder > quotas[b].remainder;
    return quotas[a].key < quotas[b].key;
  });
  for (std::size_t i = 0; i < order.size() && assigned < target; ++i) {
    quotas[order[i]].base += 1;
    ++assigned;
  }
  if (assigned != target) throw Error("largest-remainder correction could not reach target");

  std::vector<bool> in_train(dataset.records.size(), false);
  for (const auto& q : quotas) {
    auto indices = strata[q.key];
    detail::shuffle_indices(indices, detail::splitmix64(spec.seed ^ detail::fnv1a64(q.key)));
    for (std::size_t i = 0; i < q.base; ++i) in_train[indices[i]] = true;
  }

  Dataset train, test;
  train.manifest = test.manifest = dataset.manifest;
  for (std::size_t i = 0; i < dataset.records.size(); ++i)
    (in_train[i] ? train : test).records.push_back(dataset.records[i]);
  refresh_manifest_counts(train);
  refresh_manifest_counts(test);
  return {std::move(train), std::move(test)};
}

/// Order-preserving subset.
inline Dataset filter(const Dataset& dataset,
                      const std::function<bool(const ConversationRecord&)>& predicate) {
  Dataset out;
  out.manifest = dataset.manifest;
  for (const auto& r : dataset.records)
    if (predicate(r)) out.records.push_back(r);
  refresh_manifest_counts(out);
  return out;
}

}  // namespace sevsim
