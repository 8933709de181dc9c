#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "ctxenc/harness.hpp"

namespace ctxenc {

/// One cell of a comparison grid: a config to run and the published
/// accuracy (percent) it is compared against.
struct GridRun {
  std::string label;
  ExperimentConfig config;
  double reference_accuracy = 0.0;
};

struct ComparisonGrid {
  std::string name;
  std::string description;
  std::vector<GridRun> runs;
};

/// Reference accuracies (percent) of systems that are not reimplemented;
/// they appear in benchmark-suite reports for context only.
struct BaselineReference {
  std::string_view system;
  std::array<double, 4> accuracy;  // MR, CR, SUBJ, MPQA
};

const std::vector<BaselineReference>& baseline_references();

/// Depth sweep on MR: K in {1,5,10,20} x {recurrent, regular}, frozen
/// 500-wide embeddings, random default context. Numeric alias "2".
ComparisonGrid depth_sweep_grid(const ExperimentConfig& base);

/// Default-context sweep on MR: {ones, learned, random} x K in {1,5},
/// recurrent, frozen embeddings. Numeric alias "3".
ComparisonGrid default_context_sweep_grid(const ExperimentConfig& base);

/// Benchmark suite: MR, CR, SUBJ, MPQA with learned 250-wide embeddings,
/// K=5, recurrent, random default context. Numeric alias "4".
ComparisonGrid benchmark_suite_grid(const ExperimentConfig& base);

/// Grid by content name or numeric alias; unknown names raise input errors.
ComparisonGrid grid_by_name(std::string_view name, const ExperimentConfig& base);

/// Names (with aliases) for CLI help.
std::string grid_names_help();

/// Side-by-side text table of measured vs reference accuracy with deltas.
/// Reports must be ordered like grid.runs.
std::string comparison_to_text(const ComparisonGrid& grid,
                               const std::vector<RunReport>& reports);

/// Same comparison as machine-readable JSON.
std::string comparison_to_json(const ComparisonGrid& grid,
                               const std::vector<RunReport>& reports);

}  // namespace ctxenc
