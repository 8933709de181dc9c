#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctxenc/adam.hpp"
#include "ctxenc/data.hpp"
#include "ctxenc/errors.hpp"
#include "ctxenc/model.hpp"

namespace ctxenc {

/// Everything needed to reproduce one cross-validated run. Two presets
/// cover the benchmark configurations: frozen 500-wide random embeddings
/// and learned 250-wide embeddings, both with 20-wide position encodings.
struct ExperimentConfig {
  std::string dataset = "MR";
  std::filesystem::path data_dir = "data";
  std::size_t steps = 1;  // K, adjustment iterations
  bool recurrent = true;
  DefaultContext default_context = DefaultContext::kOnes;
  StepVariant variant = StepVariant::kContextVector;
  std::size_t embedding_dim = 500;  // v
  std::size_t position_dim = 20;    // p
  std::size_t rank = 100;           // u
  bool learn_embeddings = false;
  std::size_t min_count = 3;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  AdamOptions optimizer;
  std::uint64_t master_seed = 2020;
  std::size_t jobs = 1;            // folds trained in parallel
  std::string precision = "f64";   // f64 or f32

  std::size_t model_dim() const noexcept { return embedding_dim + position_dim; }
};

/// Frozen Uniform(-1,1) embeddings, v=500, p=20, u=100.
ExperimentConfig frozen_embedding_profile();

/// Trainable embeddings, v=250, p=20, u=100.
ExperimentConfig learned_embedding_profile();

struct FoldResult {
  std::size_t fold = 0;
  double best_dev_accuracy = 0.0;
  std::size_t best_epoch = 0;  // 1-based epoch the snapshot was taken at
  double test_accuracy = 0.0;
  std::size_t parameter_count = 0;
  std::size_t vocabulary_size = 0;
  double wall_time_seconds = 0.0;  // excluded from determinism comparisons
  std::vector<double> epoch_dev_accuracy;
  std::vector<double> epoch_mean_loss;
};

struct RunReport {
  ExperimentConfig config;
  std::vector<FoldResult> folds;
  double mean_test_accuracy = 0.0;
  double stddev_test_accuracy = 0.0;  // population standard deviation
  std::string timestamp;              // excluded from determinism comparisons
  double wall_time_seconds = 0.0;     // excluded from determinism comparisons
  std::string build_revision;
};

/// Thrown when a fold fails mid-run; carries the folds that did finish.
class RunAborted : public Error {
 public:
  RunAborted(const std::string& what, std::vector<FoldResult> completed)
      : Error(what), completed_folds(std::move(completed)) {}

  std::vector<FoldResult> completed_folds;
};

/// Trains one fold: vocabulary and embeddings from this fold's training
/// documents only, Adam on mean binary cross-entropy, per-epoch dev
/// evaluation, test accuracy from the best-dev snapshot. Deterministic
/// given (config.master_seed, fold_index).
FoldResult train_fold(const ExperimentConfig& config, const Dataset& ds, const FoldPlan& plan,
                      std::size_t fold_index);

/// As above, additionally writing the best-dev snapshot as a checkpoint.
FoldResult train_fold(const ExperimentConfig& config, const Dataset& ds, const FoldPlan& plan,
                      std::size_t fold_index, const std::filesystem::path& save_model_to);

/// All folds plus aggregate statistics. Any fold failure raises RunAborted
/// with the completed folds attached.
RunReport run_experiment(const ExperimentConfig& config, const Dataset& ds);

/// Convenience overload that loads the dataset named by the config.
RunReport run_experiment(const ExperimentConfig& config);

/// Fraction of documents whose thresholded logit (sigmoid > 0.5, i.e.
/// logit > 0) matches the label. Random default contexts draw from a
/// per-document stream derived from (context_seed_base, doc id); the
/// token-wise variant has no default context and ignores the seed.
template <class S>
double evaluate_accuracy(const ContextualizerModelT<S>& model,
                         const std::vector<EncodedDocument>& docs,
                         std::uint64_t context_seed_base = 0,
                         StepVariant variant = StepVariant::kContextVector);

/// Aggregates already-computed folds into a report (no training).
RunReport summarize(const ExperimentConfig& config, std::vector<FoldResult> folds);

}  // namespace ctxenc
