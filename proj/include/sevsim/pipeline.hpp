#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sevsim/annotate.hpp"
#include "sevsim/dataset.hpp"
#include "sevsim/detect.hpp"
#include "sevsim/persona.hpp"
#include "sevsim/simulator.hpp"

namespace sevsim {

namespace detail {

/// Runs fn(i) for i in [0, count) on a bounded pool. Exceptions must be
/// handled inside fn.
inline void parallel_for(std::size_t count, int parallelism,
                         const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  unsigned workers = parallelism > 0 ? static_cast<unsigned>(parallelism)
                                     : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline std::string zero_padded(std::size_t n, int width) {
  std::string digits = std::to_string(n);
  if (static_cast<int>(digits.size()) < width)
    digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return digits;
}

}  // namespace detail

struct RecordFailure {
  std::string id;
  std::string error;
};

/// The corpus recipe: one conversation per (role, info_type, intent, profile,
/// replicate) cell instance. Malicious and benign cells distribute their
/// budgets evenly over the persona profiles.
struct GenerationPlan {
  std::vector<AttackerRole> roles{AttackerRole::AF, AttackerRole::JO, AttackerRole::RE};
  std::vector<InfoType> info_types{InfoType::Pii, InfoType::Financial,
                                   InfoType::IntellectualProperty};
  int malicious_per_cell = 100;
  int benign_per_cell = 50;
  std::vector<PersonaProfile> profiles = all_profiles();
  int turn_budget = 10;
  std::uint64_t seed = 0;
  BackendSpec attacker_backend;
  BackendSpec victim_backend;
};

struct GenerationOutcome {
  Dataset dataset;
  std::vector<RecordFailure> failures;
};

inline std::vector<SimulationConfig> expand_plan(const GenerationPlan& plan,
                                                 const PromptCatalog& catalog) {
  if (plan.profiles.empty()) throw std::invalid_argument("plan needs at least one profile");
  if (plan.malicious_per_cell < 0 || plan.benign_per_cell < 0)
    throw std::invalid_argument("plan counts must be >= 0");
  std::vector<SimulationConfig> configs;
  std::size_t index = 0;
  for (const AttackerRole role : plan.roles) {
    for (const InfoType info : plan.info_types) {
      for (const Intent intent : {Intent::Malicious, Intent::Benign}) {
        const int cell = intent == Intent::Malicious ? plan.malicious_per_cell : plan.benign_per_cell;
        const int base = cell / static_cast<int>(plan.profiles.size());
        const int remainder = cell % static_cast<int>(plan.profiles.size());
        for (std::size_t p = 0; p < plan.profiles.size(); ++p) {
          const int quota = base + (static_cast<int>(p) < remainder ? 1 : 0);
          for (int k = 0; k < quota; ++k) {
            SimulationConfig config;
            config.goal = {role, info, intent};
            config.profile = plan.profiles[p];
            config.turn_budget = plan.turn_budget;
            config.seed = detail::splitmix64(plan.seed ^ (index + 1));
            config.attacker_backend = plan.attacker_backend;
            config.victim_backend = plan.victim_backend;
            config.id = "c" + detail::zero_padded(index + 1, 6);
            config.attacker_name =
                catalog.random_name(config.seed, "attacker/" + config.id);
            config.victim_name = catalog.random_name(config.seed, "victim/" + config.id);
            configs.push_back(std::move(config));
            ++index;
          }
        }
      }
    }
  }
  return configs;
}

/// Simulates every cell of the plan. Individual failures are reported, never
/// fatal; surviving records keep their planned order.
inline GenerationOutcome run_generation_plan(const GenerationPlan& plan,
                                             const PromptCatalog& catalog, int parallelism = 0) {
  const std::vector<SimulationConfig> configs = expand_plan(plan, catalog);
  std::vector<std::optional<ConversationRecord>> slots(configs.size());
  std::vector<std::pair<std::size_t, RecordFailure>> failures;
  std::mutex failures_mutex;

  detail::parallel_for(configs.size(), parallelism, [&](std::size_t i) {
    try {
      slots[i] = simulate(configs[i], catalog);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(failures_mutex);
      failures.push_back({i, {configs[i].id, e.what()}});
    }
  });

  GenerationOutcome outcome;
  for (auto& slot : slots)
    if (slot) outcome.dataset.records.push_back(std::move(*slot));
  std::sort(failures.begin(), failures.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [i, failure] : failures) outcome.failures.push_back(std::move(failure));
  refresh_manifest_counts(outcome.dataset);
  {
    json digest_doc{{"seed", plan.seed},
                    {"turn_budget", plan.turn_budget},
                    {"malicious_per_cell", plan.malicious_per_cell},
                    {"benign_per_cell", plan.benign_per_cell},
                    {"roles", plan.roles.size()},
                    {"info_types", plan.info_types.size()},
                    {"profiles", plan.profiles.size()},
                    {"attacker_backend", backend_id(plan.attacker_backend)},
                    {"victim_backend", backend_id(plan.victim_backend)}};
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(detail::fnv1a64(digest_doc.dump())));
    outcome.dataset.manifest.config_digest = buf;
  }
  outcome.dataset.manifest.notes.push_back(
      "benign cells balance persona profiles evenly (5 per profile at the default 50/cell), "
      "mirroring the 10-per-profile malicious quota");
  return outcome;
}

enum class AnnotationKind { Success, Strategy };

struct AnnotateOutcome {
  std::size_t annotated = 0;
  std::size_t skipped = 0;
  std::vector<RecordFailure> failures;
};

/// Judges every record in place. Already-annotated records are skipped unless
/// `force`; per-record failures leave the record untouched and are listed.
inline AnnotateOutcome annotate_dataset(Dataset& dataset, AnnotationKind kind,
                                        const BackendSpec& judge_spec,
                                        const PromptCatalog& catalog, bool force = false,
                                        int parallelism = 0) {
  const Taxonomy taxonomy = Taxonomy::standard();
  AnnotateOutcome outcome;
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& ann = dataset.records[i].annotations;
    const bool done = kind == AnnotationKind::Success ? ann.success.has_value()
                                                      : ann.strategies.has_value();
    if (done && !force) ++outcome.skipped;
    else todo.push_back(i);
  }

  std::mutex mutex;
  detail::parallel_for(todo.size(), parallelism, [&](std::size_t t) {
    ConversationRecord& record = dataset.records[todo[t]];
    try {
      Backend judge(judge_spec);
      if (kind == AnnotationKind::Success) {
        const SuccessLabel label = judge_success(record, catalog, judge);
        std::lock_guard<std::mutex> lock(mutex);
        record.annotations.success = label;
        ++outcome.annotated;
      } else {
        const StrategyJudgement judgement = judge_strategies(record, taxonomy, catalog, judge);
        std::lock_guard<std::mutex> lock(mutex);
        record.annotations.strategies = judgement.accepted;
        ++outcome.annotated;
      }
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(mutex);
      outcome.failures.push_back({record.id, e.what()});
    }
  });

  std::sort(outcome.failures.begin(), outcome.failures.end(),
            [](const RecordFailure& a, const RecordFailure& b) { return a.id < b.id; });
  return outcome;
}

struct DetectSettings {
  std::string method = "omniguard";  // "zero_shot" | "few_shot" | "omniguard"
  BackendSpec detector_backend;      // zero/few-shot
  BackendSpec worker_backend;        // omniguard
  BackendSpec control_backend;       // omniguard
  int threshold = 6;
  std::optional<ConversationRecord> exemplar_benign;     // few-shot
  std::optional<ConversationRecord> exemplar_malicious;  // few-shot
};

struct DetectOutcome {
  std::vector<PredictionRow> rows;
  std::vector<RecordFailure> failures;
};

/// Runs the configured detector over a dataset, one fresh backend per record
/// so scripted specs replay per conversation.
inline DetectOutcome detect_dataset(const Dataset& dataset, const DetectSettings& settings,
                                    const PromptCatalog& catalog, int parallelism = 0) {
  if (settings.method == "few_shot" &&
      (!settings.exemplar_benign || !settings.exemplar_malicious))
    throw std::invalid_argument("few_shot detection requires both exemplars");

  const Taxonomy taxonomy = Taxonomy::standard();
  std::vector<std::optional<PredictionRow>> slots(dataset.records.size());
  std::vector<RecordFailure> failures;
  std::mutex failures_mutex;

  detail::parallel_for(dataset.records.size(), parallelism, [&](std::size_t i) {
    const ConversationRecord& record = dataset.records[i];
    try {
      PredictionRow row;
      row.record_id = record.id;
      row.method = settings.method;
      if (settings.method == "zero_shot") {
        Backend backend(settings.detector_backend);
        std::vector<std::string> raw;
        row.verdict = detect_zero_shot(record, catalog, backend, &raw);
        row.raw = raw.empty() ? "" : raw.back();
      } else if (settings.method == "few_shot") {
        Backend backend(settings.detector_backend);
        std::vector<std::string> raw;
        row.verdict = detect_few_shot(record, *settings.exemplar_benign,
                                      *settings.exemplar_malicious, catalog, backend, &raw);
        row.raw = raw.empty() ? "" : raw.back();
      } else if (settings.method == "omniguard") {
        Backend workers(settings.worker_backend);
        Backend control(settings.control_backend);
        const OmniGuardResult result = omniguard_detect(record, record.persona, taxonomy, catalog,
                                                        workers, control, settings.threshold);
        row.verdict = result.verdict;
        row.score = result.score;
        row.worker_reports = result.reports;
        row.raw = result.control_raw;
      } else {
        throw std::invalid_argument("unknown detect method: " + settings.method);
      }
      slots[i] = std::move(row);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(failures_mutex);
      failures.push_back({record.id, e.what()});
    }
  });

  DetectOutcome outcome;
  for (auto& slot : slots)
    if (slot) outcome.rows.push_back(std::move(*slot));
  std::sort(failures.begin(), failures.end(),
            [](const RecordFailure& a, const RecordFailure& b) { return a.id < b.id; });
  outcome.failures = std::move(failures);
  return outcome;
}

}  // namespace sevsim
