// Command-line front end: dataset fetching, training, cross-validation,
// correctness checks, the instruction-count probe, and comparison grids.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric/run error.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "ctxenc/checksum.hpp"
#include "ctxenc/data.hpp"
#include "ctxenc/diagnostics.hpp"
#include "ctxenc/errors.hpp"
#include "ctxenc/harness.hpp"
#include "ctxenc/log.hpp"
#include "ctxenc/model.hpp"
#include "ctxenc/report.hpp"
#include "ctxenc/tables.hpp"
#include "ctxenc/version.hpp"

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace ctxenc;

constexpr int kExitSuccess = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRun = 3;

constexpr double kGradientTolerance = 1e-4;
constexpr double kOracleTolerance = 1e-10;
constexpr double kSlopeTolerance = 0.05;

std::string default_data_dir() {
  const char* env = std::getenv("CTXENC_DATA_DIR");
  return (env != nullptr && *env != '\0') ? env : "data";
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string slug(const std::string& label) {
  std::string out;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!out.empty() && out.back() != '-') {
      out.push_back('-');
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out;
}

Json dataset_checksums(const std::string& dataset, const fs::path& data_dir) {
  Json files = Json::array();
  for (const char* name : {"neg.txt", "pos.txt"}) {
    const fs::path file = data_dir / dataset / name;
    Json entry;
    entry["file"] = file.string();
    entry["sha256"] = fs::exists(file) ? sha256_hex_file(file) : "missing";
    files.push_back(std::move(entry));
  }
  Json j;
  j["dataset"] = dataset;
  j["files"] = std::move(files);
  return j;
}

Json manifest_skeleton(const std::string& command, const std::vector<std::string>& argv) {
  Json j;
  j["schema"] = "run-manifest/1";
  j["version"] = kVersion;
  j["build_revision"] = kBuildRevision;
  j["command"] = command;
  j["argv"] = argv;
  return j;
}

Json config_manifest(const ExperimentConfig& cfg) {
  // Round-trip through the report serializer so the manifest echoes exactly
  // the fields that determine the run.
  RunReport probe;
  probe.config = cfg;
  probe.build_revision = kBuildRevision;
  return Json::parse(report_to_json(probe, false)).at("config");
}

void write_manifest(const fs::path& dir, Json manifest) {
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

/// Experiment flags shared by train and cross-validate. Defaults are the
/// frozen-embedding profile; --profile learned switches the embedding block
/// unless the corresponding flags were given explicitly.
struct ExperimentOptions {
  ExperimentConfig cfg;
  std::string data_dir = default_data_dir();
  std::string default_context = "ones";
  std::string variant = "context-vector";
  std::string profile = "frozen";

  CLI::Option* embedding_dim_opt = nullptr;
  CLI::Option* position_dim_opt = nullptr;
  CLI::Option* rank_opt = nullptr;
  CLI::Option* learn_embeddings_opt = nullptr;

  void attach(CLI::App& cmd) {
    std::vector<std::string> names;
    for (const auto& spec : dataset_registry()) names.emplace_back(spec.name);
    cmd.add_option("--dataset", cfg.dataset, "Dataset name")
        ->check(CLI::IsMember(names))
        ->capture_default_str();
    cmd.add_option("--data-dir", data_dir, "Directory holding fetched datasets")
        ->envname("CTXENC_DATA_DIR")
        ->capture_default_str();
    cmd.add_option("--steps,-K,--K", cfg.steps, "Context adjustment iterations (K)")
        ->capture_default_str();
    cmd.add_flag("--recurrent,!--no-recurrent", cfg.recurrent,
                 "Share one attention step across all iterations (default on)");
    cmd.add_option("--default-context", default_context,
                   "Initial context strategy: ones, learned, or random")
        ->check(CLI::IsMember({"ones", "learned", "random"}))
        ->capture_default_str();
    cmd.add_option("--variant", variant, "Update rule: context-vector or token-wise")
        ->check(CLI::IsMember({"context-vector", "token-wise"}))
        ->capture_default_str();
    cmd.add_option("--profile", profile,
                   "Preset: frozen (500-wide fixed embeddings) or learned (250-wide trainable)")
        ->check(CLI::IsMember({"frozen", "learned"}))
        ->capture_default_str();
    embedding_dim_opt =
        cmd.add_option("--embedding-dim", cfg.embedding_dim, "Word embedding width (v)")
            ->capture_default_str();
    position_dim_opt =
        cmd.add_option("--position-dim", cfg.position_dim, "Position encoding width (p)")
            ->capture_default_str();
    rank_opt = cmd.add_option("--rank", cfg.rank, "Attention factorization rank (u)")
                   ->capture_default_str();
    learn_embeddings_opt = cmd.add_flag("--learn-embeddings,!--freeze-embeddings",
                                        cfg.learn_embeddings, "Train the embedding table");
    cmd.add_option("--min-count", cfg.min_count, "Vocabulary frequency threshold")
        ->capture_default_str();
    cmd.add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
    cmd.add_option("--batch-size", cfg.batch_size, "Documents per optimizer step")
        ->capture_default_str();
    cmd.add_option("--learning-rate", cfg.optimizer.learning_rate, "Adam learning rate")
        ->capture_default_str();
    cmd.add_option("--beta1", cfg.optimizer.beta1, "Adam beta1")->capture_default_str();
    cmd.add_option("--beta2", cfg.optimizer.beta2, "Adam beta2")->capture_default_str();
    cmd.add_option("--epsilon", cfg.optimizer.epsilon, "Adam epsilon")->capture_default_str();
    cmd.add_option("--seed", cfg.master_seed, "Master seed; every random stream derives from it")
        ->capture_default_str();
    cmd.add_option("--jobs", cfg.jobs, "Folds trained in parallel")->capture_default_str();
    cmd.add_option("--precision", cfg.precision, "Training scalar type: f64 or f32")
        ->check(CLI::IsMember({"f64", "f32"}))
        ->capture_default_str();
  }

  ExperimentConfig resolve() const {
    ExperimentConfig out = cfg;
    out.data_dir = data_dir;
    out.default_context = parse_default_context(default_context);
    out.variant = parse_step_variant(variant);
    if (profile == "learned") {
      const ExperimentConfig preset = learned_embedding_profile();
      if (embedding_dim_opt->count() == 0) out.embedding_dim = preset.embedding_dim;
      if (position_dim_opt->count() == 0) out.position_dim = preset.position_dim;
      if (rank_opt->count() == 0) out.rank = preset.rank;
      if (learn_embeddings_opt->count() == 0) out.learn_embeddings = preset.learn_embeddings;
    }
    return out;
  }
};

Dataset load_or_fail(const ExperimentConfig& cfg) {
  if (!dataset_available(cfg.dataset, cfg.data_dir)) {
    throw IoError("dataset " + cfg.dataset + " not found under " + cfg.data_dir.string() +
                  "; run `ctxenc fetch-data " + cfg.dataset + "` first");
  }
  return load_dataset(cfg.dataset, cfg.data_dir);
}

void write_run_artifacts(const fs::path& dir, const RunReport& report) {
  fs::create_directories(dir);
  write_text_file(dir / "report.json", report_to_json(report, true));
  write_text_file(dir / "report.canonical.json", report_to_json(report, false));
  write_report_csv(report, dir / "report.csv");
}

void print_run_summary(const RunReport& report) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  out << report.config.dataset << "  K=" << report.config.steps
      << (report.config.recurrent ? " recurrent" : " regular") << "  context "
      << to_string(report.config.default_context) << "  variant "
      << to_string(report.config.variant) << "\n";
  for (const auto& fr : report.folds) {
    out << "  fold " << fr.fold << ": test " << 100.0 * fr.test_accuracy << "%  dev "
        << 100.0 * fr.best_dev_accuracy << "% @ epoch " << fr.best_epoch << "  params "
        << fr.parameter_count << "  vocab " << fr.vocabulary_size << "\n";
  }
  out << "mean test accuracy " << 100.0 * report.mean_test_accuracy << "%  (stddev "
      << 100.0 * report.stddev_test_accuracy << ")\n";
  std::cout << out.str();
}

// ---------------------------------------------------------------------------
// fetch-data

std::string shell_quote(const std::string& arg) {
  std::string out = "'";
  for (char c : arg) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out.push_back(c);
    }
  }
  out.push_back('\'');
  return out;
}

fs::path locate_fetch_script(const std::string& explicit_path) {
  if (!explicit_path.empty()) {
    if (!fs::exists(explicit_path)) throw IoError("fetch script not found: " + explicit_path);
    return explicit_path;
  }
  if (const char* env = std::getenv("CTXENC_FETCH_SCRIPT"); env != nullptr && *env != '\0') {
    if (!fs::exists(env)) throw IoError(std::string("fetch script not found: ") + env);
    return env;
  }
  std::vector<fs::path> candidates = {"scripts/fetch_data.sh"};
  std::error_code ec;
  const fs::path exe = fs::read_symlink("/proc/self/exe", ec);
  if (!ec) {
    candidates.push_back(exe.parent_path() / ".." / ".." / "scripts" / "fetch_data.sh");
    candidates.push_back(exe.parent_path() / ".." / "scripts" / "fetch_data.sh");
  }
  for (const auto& candidate : candidates) {
    if (fs::exists(candidate)) return candidate;
  }
  throw IoError("cannot locate scripts/fetch_data.sh; pass --script");
}

int run_fetch_data(const std::vector<std::string>& datasets, const std::string& data_dir,
                   const std::string& from_dir, const std::string& script_path) {
  const fs::path script = locate_fetch_script(script_path);
  std::string command = "/bin/sh " + shell_quote(script.string());
  command += " --data-dir " + shell_quote(data_dir);
  if (!from_dir.empty()) command += " --from " + shell_quote(from_dir);
  std::vector<std::string> names = datasets;
  if (names.empty()) {
    for (const auto& spec : dataset_registry()) names.emplace_back(spec.name);
  }
  for (const auto& name : names) {
    if (find_dataset_spec(name) == nullptr) {
      throw InputError("unknown dataset '" + name + "'");
    }
    command += " " + shell_quote(name);
  }
  log::info("running " + command);
  const int status = std::system(command.c_str());
  if (status != 0) {
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : status;
    throw IoError("fetch script failed with status " + std::to_string(code));
  }
  for (const auto& name : names) {
    if (!dataset_available(name, data_dir)) {
      throw IoError("fetch finished but " + name + " is still missing under " + data_dir);
    }
    const Dataset ds = load_dataset(name, data_dir);
    std::cout << name << ": " << ds.size() << " documents (" << ds.class_counts[0] << " / "
              << ds.class_counts[1] << ")\n";
  }
  return kExitSuccess;
}

// ---------------------------------------------------------------------------
// train / cross-validate

int run_train(const ExperimentOptions& options, std::size_t fold, const std::string& output_dir,
              const std::vector<std::string>& argv) {
  const ExperimentConfig cfg = options.resolve();
  if (fold >= 5) throw InputError("--fold must be in [0, 5)");
  const Dataset ds = load_or_fail(cfg);
  const FoldPlan plan = make_folds(ds, cfg.master_seed);

  const std::string fingerprint = config_fingerprint(cfg);
  const fs::path dir = output_dir.empty()
                           ? fs::path("runs") / ("train-" + cfg.dataset + "-fold" +
                                                 std::to_string(fold) + "-" +
                                                 fingerprint.substr(0, 12))
                           : fs::path(output_dir);
  fs::create_directories(dir);

  const FoldResult result = train_fold(cfg, ds, plan, fold, dir / "model.bin");
  const RunReport report = summarize(cfg, {result});
  write_run_artifacts(dir, report);
  plan.save(dir / "folds.txt", ds);

  Json manifest = manifest_skeleton("train", argv);
  manifest["config"] = config_manifest(cfg);
  manifest["config_fingerprint"] = fingerprint;
  manifest["fold"] = fold;
  manifest["seeds"] = {{"master", cfg.master_seed}};
  manifest["datasets"] = Json::array({dataset_checksums(cfg.dataset, cfg.data_dir)});
  write_manifest(dir, std::move(manifest));

  print_run_summary(report);
  std::cout << "artifacts in " << dir.string() << "\n";
  return kExitSuccess;
}

int run_cross_validate(const ExperimentOptions& options, const std::string& output_dir,
                       const std::vector<std::string>& argv) {
  const ExperimentConfig cfg = options.resolve();
  const Dataset ds = load_or_fail(cfg);
  const FoldPlan plan = make_folds(ds, cfg.master_seed);

  const std::string fingerprint = config_fingerprint(cfg);
  const fs::path dir = output_dir.empty()
                           ? fs::path("runs") /
                                 ("cv-" + cfg.dataset + "-" + fingerprint.substr(0, 12))
                           : fs::path(output_dir);
  fs::create_directories(dir);
  plan.save(dir / "folds.txt", ds);

  Json manifest = manifest_skeleton("cross-validate", argv);
  manifest["config"] = config_manifest(cfg);
  manifest["config_fingerprint"] = fingerprint;
  manifest["seeds"] = {{"master", cfg.master_seed}};
  manifest["datasets"] = Json::array({dataset_checksums(cfg.dataset, cfg.data_dir)});
  write_manifest(dir, manifest);

  try {
    const RunReport report = run_experiment(cfg, ds);
    write_run_artifacts(dir, report);
    print_run_summary(report);
    std::cout << "artifacts in " << dir.string() << "\n";
    return kExitSuccess;
  } catch (const RunAborted& e) {
    if (!e.completed_folds.empty()) {
      const RunReport partial = summarize(cfg, e.completed_folds);
      write_text_file(dir / "report.partial.json", report_to_json(partial, true));
    }
    std::cerr << "error: " << e.what() << " (" << e.completed_folds.size()
              << " completed folds kept in " << dir.string() << ")\n";
    return kExitRun;
  }
}

// ---------------------------------------------------------------------------
// gradcheck / oracle-check / complexity-probe

int run_gradcheck(std::uint64_t seed, const std::string& output_dir,
                  const std::vector<std::string>& argv) {
  const std::vector<GradientCheckResult> results = run_gradient_checks(seed);
  const double max_error = max_gradient_check_error(results);

  Json rows = Json::array();
  for (const auto& r : results) {
    std::cout << "  " << r.name << ": " << r.max_rel_error << "\n";
    rows.push_back({{"name", r.name}, {"max_rel_error", r.max_rel_error}});
  }
  std::cout << "max relative error: " << max_error << " (tolerance " << kGradientTolerance
            << ")\n";

  const fs::path dir = output_dir.empty() ? fs::path("runs") / "gradcheck"
                                          : fs::path(output_dir);
  fs::create_directories(dir);
  Json j;
  j["schema"] = "gradcheck/1";
  j["seed"] = seed;
  j["tolerance"] = kGradientTolerance;
  j["max_rel_error"] = max_error;
  j["checks"] = std::move(rows);
  write_text_file(dir / "gradcheck.json", j.dump(2) + "\n");
  Json manifest = manifest_skeleton("gradcheck", argv);
  manifest["seeds"] = {{"master", seed}};
  write_manifest(dir, std::move(manifest));

  return max_error < kGradientTolerance ? kExitSuccess : kExitRun;
}

int run_oracle_check(std::size_t instances, std::uint64_t seed, const std::string& output_dir,
                     const std::vector<std::string>& argv) {
  const double max_error = attention_factorization_max_error(instances, seed);
  std::cout << "factored vs dense contraction over " << instances
            << " instances: max |difference| " << max_error << " (tolerance " << kOracleTolerance
            << ")\n";

  const fs::path dir = output_dir.empty() ? fs::path("runs") / "oracle-check"
                                          : fs::path(output_dir);
  fs::create_directories(dir);
  Json j;
  j["schema"] = "oracle-check/1";
  j["seed"] = seed;
  j["instances"] = instances;
  j["tolerance"] = kOracleTolerance;
  j["max_abs_error"] = max_error;
  write_text_file(dir / "oracle.json", j.dump(2) + "\n");
  Json manifest = manifest_skeleton("oracle-check", argv);
  manifest["seeds"] = {{"master", seed}};
  manifest["parameters"] = {{"instances", instances}};
  write_manifest(dir, std::move(manifest));

  return max_error <= kOracleTolerance ? kExitSuccess : kExitRun;
}

int run_complexity_probe(std::vector<std::size_t> lengths, std::size_t model_dim,
                         std::size_t rank, std::uint64_t seed, const std::string& output_dir,
                         const std::vector<std::string>& argv) {
  if (lengths.size() < 2) throw InputError("--n needs at least two lengths");
  const std::vector<ComplexityProbeRow> rows =
      ctxenc::run_complexity_probe(lengths, model_dim, rank, seed);

  std::ostringstream csv;
  csv << "n,context_measured,context_formula,token_wise_measured,token_wise_formula\n";
  bool counters_match = true;
  std::vector<std::uint64_t> context_counts, token_wise_counts;
  for (const auto& row : rows) {
    csv << row.n << ',' << row.context_measured << ',' << row.context_formula << ','
        << row.token_wise_measured << ',' << row.token_wise_formula << '\n';
    counters_match = counters_match && row.context_measured == row.context_formula &&
                     row.token_wise_measured == row.token_wise_formula;
    context_counts.push_back(row.context_measured);
    token_wise_counts.push_back(row.token_wise_measured);
  }
  std::cout << csv.str();

  const double context_slope = fit_log_log_slope(lengths, context_counts);
  const double token_wise_slope = fit_log_log_slope(lengths, token_wise_counts);
  std::cout << "context-vector slope: " << context_slope << " (want 1.0 +/- " << kSlopeTolerance
            << ")\n";
  std::cout << "token-wise slope: " << token_wise_slope << " (want 2.0 +/- " << kSlopeTolerance
            << ")\n";
  if (!counters_match) std::cout << "measured counts deviate from the closed form\n";

  const fs::path dir = output_dir.empty() ? fs::path("runs") / "complexity-probe"
                                          : fs::path(output_dir);
  fs::create_directories(dir);
  write_text_file(dir / "complexity.csv", csv.str());
  Json manifest = manifest_skeleton("complexity-probe", argv);
  manifest["seeds"] = {{"master", seed}};
  manifest["parameters"] = {
      {"lengths", lengths}, {"model_dim", model_dim}, {"rank", rank}};
  write_manifest(dir, std::move(manifest));

  const bool slopes_ok = std::abs(context_slope - 1.0) <= kSlopeTolerance &&
                         std::abs(token_wise_slope - 2.0) <= kSlopeTolerance;
  return (slopes_ok && counters_match) ? kExitSuccess : kExitRun;
}

// ---------------------------------------------------------------------------
// report (comparison grids)

struct GridRunOutcome {
  std::optional<RunReport> report;
  std::string error;
};

int run_report(const ExperimentOptions& options, const std::string& table,
               const std::string& output_dir, std::size_t grid_jobs,
               const std::vector<std::string>& argv) {
  ExperimentConfig base = options.resolve();
  base.jobs = 1;  // grid-level parallelism only; each run trains folds serially
  const ComparisonGrid grid = grid_by_name(table, base);

  std::vector<std::string> datasets;
  for (const auto& run : grid.runs) {
    if (std::find(datasets.begin(), datasets.end(), run.config.dataset) == datasets.end()) {
      datasets.push_back(run.config.dataset);
    }
  }
  std::string missing;
  for (const auto& name : datasets) {
    if (!dataset_available(name, base.data_dir)) missing += (missing.empty() ? "" : ", ") + name;
  }
  if (!missing.empty()) {
    throw IoError("missing datasets under " + base.data_dir.string() + ": " + missing +
                  "; run `ctxenc fetch-data` first");
  }
  std::map<std::string, Dataset> loaded;
  for (const auto& name : datasets) loaded.emplace(name, load_dataset(name, base.data_dir));

  const fs::path grid_dir =
      (output_dir.empty() ? fs::path("runs") : fs::path(output_dir)) / grid.name;
  fs::create_directories(grid_dir);

  std::vector<GridRunOutcome> outcomes(grid.runs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};

  auto execute_one = [&](std::size_t i) {
    const GridRun& run = grid.runs[i];
    const std::string fingerprint = config_fingerprint(run.config);
    const fs::path run_dir = grid_dir / (slug(run.label) + "-" + fingerprint.substr(0, 12));
    const fs::path canonical = run_dir / "report.canonical.json";
    if (fs::exists(canonical)) {
      try {
        RunReport cached = report_from_json_file(canonical);
        if (config_fingerprint(cached.config) == fingerprint) {
          log::info(grid.name + ": reusing cached run '" + run.label + "'");
          outcomes[i].report = std::move(cached);
          return;
        }
        log::warn(grid.name + ": cached run '" + run.label + "' has a stale fingerprint");
      } catch (const Error& e) {
        log::warn(grid.name + ": ignoring unreadable cache for '" + run.label + "': " +
                  e.what());
      }
    }
    log::info(grid.name + ": running '" + run.label + "' (" +
              std::to_string(i + 1) + "/" + std::to_string(grid.runs.size()) + ")");
    const RunReport report = run_experiment(run.config, loaded.at(run.config.dataset));
    write_run_artifacts(run_dir, report);
    Json manifest = manifest_skeleton("report", argv);
    manifest["grid"] = grid.name;
    manifest["label"] = run.label;
    manifest["config"] = config_manifest(run.config);
    manifest["config_fingerprint"] = fingerprint;
    manifest["seeds"] = {{"master", run.config.master_seed}};
    manifest["datasets"] =
        Json::array({dataset_checksums(run.config.dataset, run.config.data_dir)});
    write_manifest(run_dir, std::move(manifest));
    outcomes[i].report = report;
  };

  auto worker = [&]() {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.runs.size()) return;
      try {
        execute_one(i);
      } catch (const std::exception& e) {
        outcomes[i].error = e.what();
        failed.store(true);
        return;
      }
    }
  };

  const std::size_t parallel = std::max<std::size_t>(1, std::min(grid_jobs, grid.runs.size()));
  if (parallel == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < parallel; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  std::vector<RunReport> reports;
  std::string errors;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].report.has_value()) {
      reports.push_back(std::move(*outcomes[i].report));
    } else {
      errors += "  " + grid.runs[i].label + ": " +
                (outcomes[i].error.empty() ? "not run" : outcomes[i].error) + "\n";
    }
  }
  if (reports.size() != grid.runs.size()) {
    std::cerr << "error: grid incomplete; completed runs stay cached under "
              << grid_dir.string() << "\n" << errors;
    return kExitRun;
  }

  const std::string text = comparison_to_text(grid, reports);
  write_text_file(grid_dir / "comparison.txt", text);
  write_text_file(grid_dir / "comparison.json", comparison_to_json(grid, reports));

  Json manifest = manifest_skeleton("report", argv);
  manifest["grid"] = grid.name;
  manifest["seeds"] = {{"master", base.master_seed}};
  Json checksum_rows = Json::array();
  for (const auto& name : datasets) checksum_rows.push_back(dataset_checksums(name, base.data_dir));
  manifest["datasets"] = std::move(checksum_rows);
  Json run_rows = Json::array();
  for (const auto& run : grid.runs) {
    const std::string fingerprint = config_fingerprint(run.config);
    run_rows.push_back({{"label", run.label},
                        {"dir", (slug(run.label) + "-" + fingerprint.substr(0, 12))},
                        {"config_fingerprint", fingerprint}});
  }
  manifest["runs"] = std::move(run_rows);
  write_manifest(grid_dir, std::move(manifest));

  std::cout << text;
  std::cout << "artifacts in " << grid_dir.string() << "\n";
  return kExitSuccess;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> argv_echo(argv, argv + argc);

  CLI::App app{"Contextualizer sentence encoder: training, evaluation, and checks"};
  app.set_version_flag("--version", std::string(kVersion) + " (" + kBuildRevision + ")");
  app.require_subcommand(1);
  app.fallthrough();  // lets `ctxenc train --config f` reach the app-level --config
  app.set_config("--config", "",
                 "INI file of key=value defaults under [subcommand] sections; flags win");

  // fetch-data
  auto* fetch = app.add_subcommand("fetch-data", "Download and normalize the benchmark datasets");
  std::vector<std::string> fetch_datasets;
  std::string fetch_data_dir = default_data_dir();
  std::string fetch_from, fetch_script;
  fetch->add_option("datasets", fetch_datasets, "Datasets to fetch (default: all)");
  fetch->add_option("--data-dir", fetch_data_dir, "Target directory")
      ->envname("CTXENC_DATA_DIR")
      ->capture_default_str();
  fetch->add_option("--from", fetch_from,
                    "Offline mode: normalize archives/files already present in this directory");
  fetch->add_option("--script", fetch_script, "Path to fetch_data.sh (default: auto-locate)");

  // train
  auto* train = app.add_subcommand("train", "Train a single fold and save its checkpoint");
  ExperimentOptions train_options;
  train_options.attach(*train);
  std::size_t train_fold_index = 0;
  std::string train_output;
  train->add_option("--fold", train_fold_index, "Held-out fold index in [0, 5)")
      ->capture_default_str();
  train->add_option("--output-dir", train_output, "Artifact directory (default: runs/train-...)");

  // cross-validate
  auto* cv = app.add_subcommand("cross-validate", "Train all 5 folds and aggregate the metrics");
  ExperimentOptions cv_options;
  cv_options.attach(*cv);
  std::string cv_output;
  cv->add_option("--output-dir", cv_output, "Artifact directory (default: runs/cv-...)");

  // gradcheck
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "Compare every gradient against central finite differences");
  std::uint64_t gradcheck_seed = 2020;
  std::string gradcheck_output;
  gradcheck->add_option("--seed", gradcheck_seed, "Seed for the random instances")
      ->capture_default_str();
  gradcheck->add_option("--output-dir", gradcheck_output,
                        "Artifact directory (default: runs/gradcheck)");

  // oracle-check
  auto* oracle = app.add_subcommand(
      "oracle-check", "Compare factored attention weights against the dense tensor contraction");
  std::size_t oracle_instances = 1000;
  std::uint64_t oracle_seed = 2020;
  std::string oracle_output;
  oracle->add_option("--instances", oracle_instances, "Random instances to test")
      ->capture_default_str();
  oracle->add_option("--seed", oracle_seed, "Seed for the random instances")
      ->capture_default_str();
  oracle->add_option("--output-dir", oracle_output,
                     "Artifact directory (default: runs/oracle-check)");

  // complexity-probe
  auto* probe = app.add_subcommand(
      "complexity-probe", "Count multiply-accumulates per step across sequence lengths");
  std::vector<std::size_t> probe_lengths = {8, 16, 32, 64, 128};
  std::size_t probe_model_dim = 32;
  std::size_t probe_rank = 8;
  std::uint64_t probe_seed = 2020;
  std::string probe_output;
  probe->add_option("--n", probe_lengths, "Sequence lengths")
      ->delimiter(',')
      ->capture_default_str();
  probe->add_option("--model-dim", probe_model_dim, "Token vector width (m)")
      ->capture_default_str();
  probe->add_option("--rank", probe_rank, "Attention factorization rank (u)")
      ->capture_default_str();
  probe->add_option("--seed", probe_seed, "Seed for the probe inputs")->capture_default_str();
  probe->add_option("--output-dir", probe_output,
                    "Artifact directory (default: runs/complexity-probe)");

  // report
  auto* report = app.add_subcommand(
      "report", "Run a comparison grid and tabulate measured vs reference accuracy");
  ExperimentOptions report_options;
  report_options.attach(*report);
  std::string report_table;
  std::string report_output;
  std::size_t report_jobs = 1;
  report->add_option("--table", report_table, "Grid name: " + grid_names_help())->required();
  report->add_option("--output-dir", report_output, "Artifact root (default: runs)");
  report->add_option("--grid-jobs", report_jobs, "Grid runs dispatched in parallel")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (fetch->parsed()) {
      return run_fetch_data(fetch_datasets, fetch_data_dir, fetch_from, fetch_script);
    }
    if (train->parsed()) {
      return run_train(train_options, train_fold_index, train_output, argv_echo);
    }
    if (cv->parsed()) return run_cross_validate(cv_options, cv_output, argv_echo);
    if (gradcheck->parsed()) return run_gradcheck(gradcheck_seed, gradcheck_output, argv_echo);
    if (oracle->parsed()) {
      return run_oracle_check(oracle_instances, oracle_seed, oracle_output, argv_echo);
    }
    if (probe->parsed()) {
      return run_complexity_probe(probe_lengths, probe_model_dim, probe_rank, probe_seed,
                                  probe_output, argv_echo);
    }
    if (report->parsed()) {
      return run_report(report_options, report_table, report_output, report_jobs, argv_echo);
    }
    std::cerr << "error: no subcommand given\n";
    return kExitUsage;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRun;
  }
}
