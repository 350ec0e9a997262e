// sevsim — command-line driver for the conversation simulation, annotation,
// detection, and evaluation pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sevsim/sevsim.hpp"

namespace fs = std::filesystem;
using namespace sevsim;

namespace {

constexpr int kExitClean = 0;
constexpr int kExitFatal = 1;
constexpr int kExitPartial = 2;

struct CommonOptions {
  std::string config_path;
  std::string prompts_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
  std::string backend_name;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "TOML run configuration");
  cmd->add_option("--prompts", opts.prompts_dir, "prompt catalog directory");
  cmd->add_option("--seed", opts.seed, "seed override");
  cmd->add_option("--parallelism", opts.parallelism, "worker pool size (0 = cores)");
  cmd->add_option("--backend", opts.backend_name, "backend name override");
  cmd->add_flag("--force", opts.force, "redo work that already has outputs");
}

RunConfig resolve_config(const CommonOptions& opts, bool config_required) {
  RunConfig config;
  if (!opts.config_path.empty()) config = load_run_config(opts.config_path);
  else if (config_required) throw ConfigError("this command needs --config");
  if (opts.seed) config.seed = *opts.seed;
  if (opts.parallelism) config.parallelism = *opts.parallelism;
  if (!opts.prompts_dir.empty()) config.prompts_dir = opts.prompts_dir;
  return config;
}

PromptCatalog load_catalog(const RunConfig& config) {
  return PromptCatalog::load(config.prompts_dir);
}

void write_snapshot(const fs::path& out_path, const json& resolved) {
  fs::path snap = out_path;
  snap += ".config.json";
  std::ofstream out(snap, std::ios::trunc);
  if (out) out << resolved.dump(2) << '\n';
}

void report_failures(const std::vector<RecordFailure>& failures) {
  for (const auto& f : failures)
    std::cerr << "  failed " << f.id << ": " << f.error << '\n';
}

int cmd_simulate(const CommonOptions& opts, const std::string& out_path) {
  RunConfig config = resolve_config(opts, true);
  const PromptCatalog catalog = load_catalog(config);

  GenerationPlan plan;
  plan.roles = config.roles;
  plan.info_types = config.info_types;
  plan.malicious_per_cell = config.malicious_per_cell;
  plan.benign_per_cell = config.benign_per_cell;
  plan.turn_budget = config.turn_budget;
  plan.seed = config.seed;
  const std::string attacker_name =
      opts.backend_name.empty() ? config.attacker_backend : opts.backend_name;
  const std::string victim_name =
      opts.backend_name.empty() ? config.victim_backend : opts.backend_name;
  plan.attacker_backend = require_backend(config, attacker_name);
  plan.victim_backend = require_backend(config, victim_name);

  GenerationOutcome outcome = run_generation_plan(plan, catalog, config.parallelism);
  write_jsonl(outcome.dataset, out_path);
  write_snapshot(out_path, json{{"command", "simulate"},
                                {"seed", plan.seed},
                                {"turn_budget", plan.turn_budget},
                                {"malicious_per_cell", plan.malicious_per_cell},
                                {"benign_per_cell", plan.benign_per_cell},
                                {"attacker_backend", attacker_name},
                                {"victim_backend", victim_name},
                                {"records", outcome.dataset.records.size()},
                                {"failures", outcome.failures.size()}});
  std::cout << "simulated " << outcome.dataset.records.size() << " conversations ("
            << outcome.dataset.manifest.malicious << " malicious, "
            << outcome.dataset.manifest.benign << " benign) -> " << out_path << '\n';
  if (!outcome.failures.empty()) {
    std::cerr << outcome.failures.size() << " conversations failed:\n";
    report_failures(outcome.failures);
    return kExitPartial;
  }
  return kExitClean;
}

int cmd_stats(const std::string& data_path, const std::string& out_path) {
  const Dataset dataset = read_jsonl(data_path);
  const StatsReport stats = dataset_stats(dataset);

  std::cout << "total: " << stats.total << '\n';
  for (const auto& [label, n] : stats.by_label)
    std::cout << "  label " << to_string(label) << ": " << n << '\n';
  for (const auto& [role, n] : stats.by_role)
    std::cout << "  role " << to_string(role) << ": " << n << '\n';
  for (const auto& [info, n] : stats.by_info_type)
    std::cout << "  info_type " << to_string(info) << ": " << n << '\n';
  for (const auto& [profile, n] : stats.by_profile)
    std::cout << "  profile " << to_string(profile.trait) << "/" << to_string(profile.level)
              << ": " << n << '\n';

  if (!out_path.empty()) {
    json doc{{"total", stats.total}};
    for (const auto& [label, n] : stats.by_label) doc["by_label"][to_string(label)] = n;
    for (const auto& [role, n] : stats.by_role) doc["by_role"][to_string(role)] = n;
    for (const auto& [info, n] : stats.by_info_type) doc["by_info_type"][to_string(info)] = n;
    for (const auto& [profile, n] : stats.by_profile)
      doc["by_profile"][to_string(profile.trait) + "_" + to_string(profile.level)] = n;
    for (const auto& [key, n] : stats.cross)
      doc["cross"][to_string(key.label) + "|" + to_string(key.role) + "|" +
                   to_string(key.info_type) + "|" + to_string(key.profile.trait) + "_" +
                   to_string(key.profile.level)] = n;
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw IoError("cannot write stats: " + out_path);
    out << doc.dump(2) << '\n';
  }
  return kExitClean;
}

int cmd_split(const CommonOptions& opts, const std::string& data_path,
              const std::string& train_path, const std::string& test_path,
              std::optional<std::size_t> train_count, std::optional<double> train_fraction,
              const std::vector<std::string>& strata) {
  RunConfig config = resolve_config(opts, false);
  SplitSpec spec;
  spec.seed = config.seed;
  if (train_count) spec.train_count = train_count;
  else if (train_fraction) spec.train_fraction = train_fraction;
  else if (config.train_count) spec.train_count = config.train_count;
  else if (config.train_fraction) spec.train_fraction = config.train_fraction;
  else throw ConfigError("set --train-count or --train-fraction");
  if (!strata.empty()) spec.strata_keys = std::set<std::string>(strata.begin(), strata.end());
  else spec.strata_keys = config.strata_keys;

  const Dataset dataset = read_jsonl(data_path);
  auto [train, test] = stratified_split(dataset, spec);
  write_jsonl(train, train_path);
  write_jsonl(test, test_path);
  write_snapshot(train_path, json{{"command", "split"},
                                  {"seed", spec.seed},
                                  {"train", train.records.size()},
                                  {"test", test.records.size()},
                                  {"strata", json(spec.strata_keys)}});
  std::cout << "split " << dataset.records.size() << " -> " << train.records.size() << " train / "
            << test.records.size() << " test\n";
  return kExitClean;
}

int cmd_annotate(const CommonOptions& opts, const std::string& data_path, std::string out_path,
                 const std::string& kind_name) {
  RunConfig config = resolve_config(opts, true);
  const PromptCatalog catalog = load_catalog(config);
  const AnnotationKind kind =
      kind_name == "strategy" ? AnnotationKind::Strategy : AnnotationKind::Success;
  const std::string backend_name =
      opts.backend_name.empty() ? config.judge_backend : opts.backend_name;
  const BackendSpec judge_spec = require_backend(config, backend_name);

  Dataset dataset = read_jsonl(data_path);
  const AnnotateOutcome outcome =
      annotate_dataset(dataset, kind, judge_spec, catalog, opts.force, config.parallelism);
  if (out_path.empty()) out_path = data_path;
  write_jsonl(dataset, out_path);
  write_snapshot(out_path, json{{"command", "annotate"},
                                {"kind", kind_name},
                                {"backend", backend_name},
                                {"annotated", outcome.annotated},
                                {"skipped", outcome.skipped},
                                {"failures", outcome.failures.size()}});
  std::cout << "annotated " << outcome.annotated << ", skipped " << outcome.skipped << " -> "
            << out_path << '\n';
  if (!outcome.failures.empty()) {
    std::cerr << outcome.failures.size() << " records left unannotated:\n";
    report_failures(outcome.failures);
    return kExitPartial;
  }
  return kExitClean;
}

int cmd_detect(const CommonOptions& opts, const std::string& data_path,
               const std::string& out_path, std::string method, std::optional<int> threshold,
               const std::string& exemplars_path) {
  RunConfig config = resolve_config(opts, true);
  const PromptCatalog catalog = load_catalog(config);
  if (method.empty()) method = config.detect_method;

  DetectSettings settings;
  settings.method = method;
  settings.threshold = threshold.value_or(config.threshold);
  if (method == "omniguard") {
    settings.worker_backend = require_backend(config, config.worker_backend);
    settings.control_backend = require_backend(config, config.control_backend);
  } else {
    const std::string backend_name =
        opts.backend_name.empty() ? config.detector_backend : opts.backend_name;
    settings.detector_backend = require_backend(config, backend_name);
  }

  json exemplar_meta = json::object();
  if (method == "few_shot") {
    const std::string source =
        !exemplars_path.empty() ? exemplars_path : config.exemplar_dataset.string();
    if (source.empty()) throw ConfigError("few_shot needs --exemplars or detect.exemplar_dataset");
    const Dataset train = read_jsonl(source);
    auto pick = [&](Label want, const std::string& forced_id) -> ConversationRecord {
      if (!forced_id.empty()) {
        for (const auto& r : train.records)
          if (r.id == forced_id) return r;
        throw ConfigError("exemplar id not in training split: " + forced_id);
      }
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i < train.records.size(); ++i)
        if (train.records[i].label == want) candidates.push_back(i);
      if (candidates.empty())
        throw ConfigError("training split has no " + to_string(want) + " exemplar");
      detail::shuffle_indices(candidates, detail::splitmix64(config.seed ^ 0x5eedull));
      return train.records[candidates.front()];
    };
    settings.exemplar_benign = pick(Label::Benign, config.exemplar_benign_id);
    settings.exemplar_malicious = pick(Label::Malicious, config.exemplar_malicious_id);
    exemplar_meta = {{"benign", settings.exemplar_benign->id},
                     {"malicious", settings.exemplar_malicious->id}};
  }

  const Dataset dataset = read_jsonl(data_path);
  const DetectOutcome outcome = detect_dataset(dataset, settings, catalog, config.parallelism);
  write_predictions(outcome.rows, out_path);
  write_snapshot(out_path, json{{"command", "detect"},
                                {"method", method},
                                {"threshold", settings.threshold},
                                {"exemplars", exemplar_meta},
                                {"predictions", outcome.rows.size()},
                                {"failures", outcome.failures.size()}});
  std::cout << "detected " << outcome.rows.size() << " of " << dataset.records.size()
            << " records (" << method << ") -> " << out_path << '\n';
  if (!outcome.failures.empty()) {
    std::cerr << outcome.failures.size() << " records failed:\n";
    report_failures(outcome.failures);
    return kExitPartial;
  }
  return kExitClean;
}

int cmd_eval(const std::string& data_path, const std::string& predictions_path,
             const std::string& out_path, bool by_role, bool by_success,
             const std::string& method) {
  const Dataset truth = read_jsonl(data_path);
  const std::map<std::string, Verdict> predictions = read_predictions(predictions_path);
  EvalOptions options;
  options.by_role = by_role;
  options.by_success_level = by_success;
  const MetricsReport report = evaluate(predictions, truth, options, method);
  std::cout << format_report_table(report);
  for (const auto& [level, m] : report.per_success_level)
    std::cout << "success level " << level << ": accuracy "
              << detail::format_metric(m.accuracy) << " over " << m.count << '\n';
  if (report.unpredicted > 0)
    std::cout << report.unpredicted << " records had no prediction and were excluded\n";
  if (!out_path.empty()) emit_csv(report, out_path);
  return kExitClean;
}

int cmd_agreement(const std::string& data_path, const std::vector<std::string>& human_csvs) {
  const Dataset dataset = read_jsonl(data_path);
  std::vector<std::map<std::string, SuccessLabel>> raters;
  std::map<std::string, SuccessLabel> judge;
  for (const auto& r : dataset.records)
    if (r.annotations.success) judge.emplace(r.id, *r.annotations.success);
  if (judge.empty()) throw MissingAnnotations("dataset has no judge success labels");
  raters.push_back(std::move(judge));
  for (const auto& csv : human_csvs) raters.push_back(ingest_human_annotations(csv));

  const AgreementTable table = agreement_from_raters(raters);
  if (table.counts.empty()) throw MissingAnnotations("no items labeled by every rater");
  const double kappa = fleiss_kappa(table);
  std::cout << "raters: " << raters.size() << ", items: " << table.counts.size()
            << ", fleiss_kappa: " << detail::format_metric(kappa) << '\n';
  return kExitClean;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"social-engineering conversation simulation and detection toolkit"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string data_path, out_path, train_path, test_path, method, kind, exemplars_path;
  std::string predictions_path;
  std::optional<std::size_t> train_count;
  std::optional<double> train_fraction;
  std::optional<int> threshold;
  std::vector<std::string> strata, human_csvs;
  bool by_role = false, by_success = false;

  auto* simulate = app.add_subcommand("simulate", "generate a conversation corpus");
  add_common(simulate, opts);
  simulate->add_option("--out", out_path, "output JSONL path")->required();

  auto* stats = app.add_subcommand("stats", "corpus counts by label/role/info/profile");
  add_common(stats, opts);
  stats->add_option("--data", data_path, "dataset JSONL")->required();
  stats->add_option("--out", out_path, "optional JSON stats output");

  auto* split = app.add_subcommand("split", "stratified train/test split");
  add_common(split, opts);
  split->add_option("--data", data_path, "dataset JSONL")->required();
  split->add_option("--train-out", train_path, "train output path")->required();
  split->add_option("--test-out", test_path, "test output path")->required();
  split->add_option("--train-count", train_count, "records in the training split");
  split->add_option("--train-fraction", train_fraction, "fraction in the training split");
  split->add_option("--strata", strata, "stratification keys (label role info_type profile)");

  auto* annotate = app.add_subcommand("annotate", "judge success or strategies");
  add_common(annotate, opts);
  annotate->add_option("--data", data_path, "dataset JSONL")->required();
  annotate->add_option("--out", out_path, "output path (defaults to --data)");
  annotate->add_option("--kind", kind, "success|strategy")
      ->default_val("success")
      ->check(CLI::IsMember({"success", "strategy"}));

  auto* detect = app.add_subcommand("detect", "run a detector over a dataset");
  add_common(detect, opts);
  detect->add_option("--data", data_path, "dataset JSONL")->required();
  detect->add_option("--out", out_path, "predictions JSONL")->required();
  detect->add_option("--method", method, "zero_shot|few_shot|omniguard")
      ->check(CLI::IsMember({"zero_shot", "few_shot", "omniguard"}));
  detect->add_option("--threshold", threshold, "omniguard maliciousness cutoff (1-10)");
  detect->add_option("--exemplars", exemplars_path, "training split for few-shot exemplars");

  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  add_common(eval, opts);
  eval->add_option("--data", data_path, "truth dataset JSONL")->required();
  eval->add_option("--predictions", predictions_path, "predictions JSONL")->required();
  eval->add_option("--out", out_path, "CSV report path");
  eval->add_option("--method", method, "method name for the report")->default_val("detector");
  eval->add_flag("--by-role", by_role, "per-role breakdown");
  eval->add_flag("--by-success", by_success, "per-success-level breakdown");

  auto* agreement = app.add_subcommand("agreement", "inter-annotator agreement (fleiss kappa)");
  add_common(agreement, opts);
  agreement->add_option("--data", data_path, "dataset with judge labels")->required();
  agreement->add_option("--human", human_csvs, "human annotation CSV (repeatable)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(opts, out_path);
    if (stats->parsed()) return cmd_stats(data_path, out_path);
    if (split->parsed())
      return cmd_split(opts, data_path, train_path, test_path, train_count, train_fraction, strata);
    if (annotate->parsed()) return cmd_annotate(opts, data_path, out_path, kind);
    if (detect->parsed())
      return cmd_detect(opts, data_path, out_path, method, threshold, exemplars_path);
    if (eval->parsed())
      return cmd_eval(data_path, predictions_path, out_path, by_role, by_success, method);
    if (agreement->parsed()) return cmd_agreement(data_path, human_csvs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFatal;
  }
  return kExitFatal;
}
