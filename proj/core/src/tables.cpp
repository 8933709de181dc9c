#include "ctxenc/tables.hpp"

#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ctxenc/errors.hpp"

namespace ctxenc {

namespace {

using Json = nlohmann::ordered_json;

// Published accuracies (percent) the grids are compared against.
constexpr std::array<std::size_t, 4> kDepthValues = {1, 5, 10, 20};
constexpr std::array<double, 4> kDepthRecurrent = {57.9, 72.4, 72.8, 72.3};
constexpr std::array<double, 4> kDepthRegular = {57.8, 70.7, 72.1, 71.4};

constexpr std::array<std::size_t, 2> kContextDepths = {1, 5};
constexpr std::array<double, 2> kContextOnes = {73.1, 71.2};
constexpr std::array<double, 2> kContextLearned = {73.5, 72.2};
constexpr std::array<double, 2> kContextRandom = {57.9, 72.4};

constexpr std::array<std::string_view, 4> kBenchmarkDatasets = {"MR", "CR", "SUBJ", "MPQA"};
constexpr std::array<double, 4> kBenchmarkReference = {76.6, 79.0, 91.2, 85.3};

ExperimentConfig with_base(const ExperimentConfig& base, const ExperimentConfig& profile) {
  ExperimentConfig cfg = profile;
  cfg.data_dir = base.data_dir;
  cfg.master_seed = base.master_seed;
  cfg.epochs = base.epochs;
  cfg.batch_size = base.batch_size;
  cfg.optimizer = base.optimizer;
  cfg.min_count = base.min_count;
  cfg.precision = base.precision;
  cfg.jobs = base.jobs;
  return cfg;
}

}  // namespace

const std::vector<BaselineReference>& baseline_references() {
  static const std::vector<BaselineReference> refs = {
      {"USE (T)", {81.4, 87.4, 93.9, 87.0}},
      {"USE (D)", {74.5, 81.0, 92.7, 85.4}},
  };
  return refs;
}

ComparisonGrid depth_sweep_grid(const ExperimentConfig& base) {
  ComparisonGrid grid;
  grid.name = "depth-sweep";
  grid.description =
      "MR accuracy for K in {1,5,10,20}, recurrent and regular, frozen 500-wide "
      "embeddings, random default context";
  for (std::size_t i = 0; i < kDepthValues.size(); ++i) {
    for (const bool recurrent : {true, false}) {
      GridRun run;
      run.config = with_base(base, frozen_embedding_profile());
      run.config.dataset = "MR";
      run.config.steps = kDepthValues[i];
      run.config.recurrent = recurrent;
      run.config.default_context = DefaultContext::kRandomPerDocument;
      run.label = "K=" + std::to_string(kDepthValues[i]) +
                  (recurrent ? " recurrent" : " regular");
      run.reference_accuracy = recurrent ? kDepthRecurrent[i] : kDepthRegular[i];
      grid.runs.push_back(std::move(run));
    }
  }
  return grid;
}

ComparisonGrid default_context_sweep_grid(const ExperimentConfig& base) {
  ComparisonGrid grid;
  grid.name = "default-context-sweep";
  grid.description =
      "MR accuracy for default context in {ones, learned, random} at K in {1,5}, "
      "recurrent, frozen 500-wide embeddings";
  const std::array<std::pair<DefaultContext, const std::array<double, 2>*>, 3> strategies = {{
      {DefaultContext::kOnes, &kContextOnes},
      {DefaultContext::kLearned, &kContextLearned},
      {DefaultContext::kRandomPerDocument, &kContextRandom},
  }};
  for (const auto& [strategy, references] : strategies) {
    for (std::size_t i = 0; i < kContextDepths.size(); ++i) {
      GridRun run;
      run.config = with_base(base, frozen_embedding_profile());
      run.config.dataset = "MR";
      run.config.steps = kContextDepths[i];
      run.config.recurrent = true;
      run.config.default_context = strategy;
      run.label = std::string(to_string(strategy)) + " K=" + std::to_string(kContextDepths[i]);
      run.reference_accuracy = (*references)[i];
      grid.runs.push_back(std::move(run));
    }
  }
  return grid;
}

ComparisonGrid benchmark_suite_grid(const ExperimentConfig& base) {
  ComparisonGrid grid;
  grid.name = "benchmark-suite";
  grid.description =
      "MR, CR, SUBJ, MPQA accuracy with learned 250-wide embeddings, K=5, recurrent, "
      "random default context";
  for (std::size_t i = 0; i < kBenchmarkDatasets.size(); ++i) {
    GridRun run;
    run.config = with_base(base, learned_embedding_profile());
    run.config.dataset = std::string(kBenchmarkDatasets[i]);
    run.config.steps = 5;
    run.config.recurrent = true;
    run.config.default_context = DefaultContext::kRandomPerDocument;
    run.label = std::string(kBenchmarkDatasets[i]);
    run.reference_accuracy = kBenchmarkReference[i];
    grid.runs.push_back(std::move(run));
  }
  return grid;
}

ComparisonGrid grid_by_name(std::string_view name, const ExperimentConfig& base) {
  if (name == "depth-sweep" || name == "2") return depth_sweep_grid(base);
  if (name == "default-context-sweep" || name == "3") return default_context_sweep_grid(base);
  if (name == "benchmark-suite" || name == "4") return benchmark_suite_grid(base);
  throw InputError("unknown grid '" + std::string(name) + "' (" + grid_names_help() + ")");
}

std::string grid_names_help() {
  return "expected depth-sweep (2), default-context-sweep (3), or benchmark-suite (4)";
}

std::string comparison_to_text(const ComparisonGrid& grid,
                               const std::vector<RunReport>& reports) {
  if (reports.size() != grid.runs.size()) {
    throw DimensionError("comparison: grid has " + std::to_string(grid.runs.size()) +
                         " runs, got " + std::to_string(reports.size()) + " reports");
  }
  std::ostringstream out;
  out << grid.name << ": " << grid.description << "\n\n";
  out << std::left << std::setw(28) << "run" << std::right << std::setw(10) << "measured"
      << std::setw(11) << "reference" << std::setw(8) << "delta" << std::setw(9) << "stddev"
      << '\n';
  out << std::string(66, '-') << '\n';
  out << std::fixed << std::setprecision(1);
  for (std::size_t i = 0; i < grid.runs.size(); ++i) {
    const double measured = 100.0 * reports[i].mean_test_accuracy;
    const double stddev = 100.0 * reports[i].stddev_test_accuracy;
    out << std::left << std::setw(28) << grid.runs[i].label << std::right << std::setw(10)
        << measured << std::setw(11) << grid.runs[i].reference_accuracy << std::setw(8)
        << std::showpos << measured - grid.runs[i].reference_accuracy << std::noshowpos
        << std::setw(9) << stddev << '\n';
  }
  if (grid.name == "benchmark-suite") {
    out << '\n' << "reference baselines (not reimplemented):\n";
    for (const auto& baseline : baseline_references()) {
      out << std::left << std::setw(10) << baseline.system;
      for (double v : baseline.accuracy) out << std::right << std::setw(7) << v;
      out << '\n';
    }
  }
  return out.str();
}

std::string comparison_to_json(const ComparisonGrid& grid,
                               const std::vector<RunReport>& reports) {
  if (reports.size() != grid.runs.size()) {
    throw DimensionError("comparison: grid has " + std::to_string(grid.runs.size()) +
                         " runs, got " + std::to_string(reports.size()) + " reports");
  }
  Json j;
  j["schema"] = "comparison/1";
  j["grid"] = grid.name;
  j["description"] = grid.description;
  Json rows = Json::array();
  for (std::size_t i = 0; i < grid.runs.size(); ++i) {
    const auto& run = grid.runs[i];
    const double measured = 100.0 * reports[i].mean_test_accuracy;
    Json row;
    row["label"] = run.label;
    row["dataset"] = run.config.dataset;
    row["steps"] = run.config.steps;
    row["recurrent"] = run.config.recurrent;
    row["default_context"] = std::string(to_string(run.config.default_context));
    row["measured_accuracy"] = measured;
    row["reference_accuracy"] = run.reference_accuracy;
    row["delta"] = measured - run.reference_accuracy;
    row["stddev"] = 100.0 * reports[i].stddev_test_accuracy;
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  if (grid.name == "benchmark-suite") {
    Json dataset_names = Json::array();
    for (std::string_view name : kBenchmarkDatasets) dataset_names.push_back(std::string(name));
    Json baselines = Json::array();
    for (const auto& baseline : baseline_references()) {
      Json row;
      row["system"] = std::string(baseline.system);
      row["datasets"] = dataset_names;
      row["accuracy"] = baseline.accuracy;
      baselines.push_back(std::move(row));
    }
    j["baselines"] = std::move(baselines);
  }
  return j.dump(2) + "\n";
}

}  // namespace ctxenc
