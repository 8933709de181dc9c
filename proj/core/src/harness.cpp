#include "ctxenc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <optional>
#include <sstream>
#include <thread>

#include "ctxenc/log.hpp"
#include "ctxenc/ops.hpp"
#include "ctxenc/text_encoding.hpp"
#include "ctxenc/version.hpp"

namespace ctxenc {

namespace {

// Independent seed streams per purpose, all derived from the master seed.
std::uint64_t embedding_seed(const ExperimentConfig& cfg, std::size_t fold) {
  return derive_seed(cfg.master_seed, {hash_tag("embeddings"), fold});
}
std::uint64_t init_seed(const ExperimentConfig& cfg, std::size_t fold) {
  return derive_seed(cfg.master_seed, {hash_tag("init"), fold});
}
std::uint64_t shuffle_seed(const ExperimentConfig& cfg, std::size_t fold, std::size_t epoch) {
  return derive_seed(cfg.master_seed, {hash_tag("shuffle"), fold, epoch});
}
std::uint64_t train_context_seed(const ExperimentConfig& cfg, std::size_t fold,
                                 std::size_t epoch, std::size_t doc_id) {
  return derive_seed(cfg.master_seed, {hash_tag("context-train"), fold, epoch, doc_id});
}
std::uint64_t dev_context_seed(const ExperimentConfig& cfg, std::size_t fold,
                               std::size_t epoch) {
  return derive_seed(cfg.master_seed, {hash_tag("context-dev"), fold, epoch});
}
std::uint64_t test_context_seed(const ExperimentConfig& cfg, std::size_t fold) {
  return derive_seed(cfg.master_seed, {hash_tag("context-test"), fold});
}

std::vector<std::string> document_tokens(const Dataset& ds, const Document& doc) {
  return ds.pretokenized ? whitespace_lowercase_split(doc.text) : tokenize(doc.text);
}

std::string iso8601_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buffer;
}

template <class S>
TensorT<S> document_forward(const ContextualizerModelT<S>& model, const EncodedDocument& doc,
                            StepVariant variant, Rng* context_rng) {
  if (variant == StepVariant::kTokenWise) return model.token_wise_forward(doc);
  return model.forward(doc, context_rng);
}

template <class S>
FoldResult train_fold_impl(const ExperimentConfig& cfg, const Dataset& ds, const FoldPlan& plan,
                           std::size_t fold, const std::filesystem::path* save_model) {
  const auto t0 = std::chrono::steady_clock::now();
  if (plan.size() != ds.size()) {
    throw DimensionError("train_fold: plan covers " + std::to_string(plan.size()) +
                         " documents, dataset has " + std::to_string(ds.size()));
  }
  if (fold >= plan.fold_count) throw InputError("train_fold: fold index out of range");
  if (cfg.epochs < 1) throw InputError("train_fold: epochs must be at least 1");
  if (cfg.batch_size < 1) throw InputError("train_fold: batch_size must be at least 1");

  std::vector<std::size_t> train_ids, dev_ids, test_ids;
  for (std::size_t id = 0; id < ds.size(); ++id) {
    switch (split_role(plan, id, fold)) {
      case SplitRole::kTrain: train_ids.push_back(id); break;
      case SplitRole::kDev: dev_ids.push_back(id); break;
      case SplitRole::kTest: test_ids.push_back(id); break;
    }
  }
  if (train_ids.empty()) throw InputError("train_fold: empty training split");

  // Vocabulary from the training documents only; dev and test words that
  // never appear there fall to the OOV index.
  std::vector<std::vector<std::string>> train_corpus;
  train_corpus.reserve(train_ids.size());
  for (std::size_t id : train_ids) {
    train_corpus.push_back(document_tokens(ds, ds.documents[id]));
  }
  const Vocabulary vocab = Vocabulary::build(train_corpus, cfg.min_count);

  auto embeddings = EmbeddingTableT<S>::random(vocab.size(), cfg.embedding_dim,
                                               embedding_seed(cfg, fold),
                                               cfg.learn_embeddings);
  const std::vector<S> frozen_snapshot(embeddings.vectors.values().begin(),
                                       embeddings.vectors.values().end());

  ModelDims dims;
  dims.model_dim = cfg.model_dim();
  dims.rank = cfg.rank;
  dims.steps = cfg.steps;
  dims.recurrent = cfg.recurrent;
  dims.default_context = cfg.default_context;
  Rng model_rng(init_seed(cfg, fold));
  ContextualizerModelT<S> model(dims, model_rng);
  model.attach_embeddings(std::move(embeddings), PositionEncoder(cfg.position_dim));

  auto encode_ids = [&](const std::vector<std::size_t>& ids) {
    std::vector<EncodedDocument> docs;
    docs.reserve(ids.size());
    for (std::size_t id : ids) {
      const Document& doc = ds.documents[id];
      docs.push_back(encode(document_tokens(ds, doc), vocab, doc.label, doc.id));
    }
    return docs;
  };
  const std::vector<EncodedDocument> train_docs = encode_ids(train_ids);
  const std::vector<EncodedDocument> dev_docs = encode_ids(dev_ids);
  const std::vector<EncodedDocument> test_docs = encode_ids(test_ids);
  if (dev_docs.empty()) {
    log::warn("train_fold: fold " + std::to_string(fold) +
              " has no development documents; keeping the final epoch");
  }

  AdamOptionsT<S> opt;
  opt.learning_rate = static_cast<S>(cfg.optimizer.learning_rate);
  opt.beta1 = static_cast<S>(cfg.optimizer.beta1);
  opt.beta2 = static_cast<S>(cfg.optimizer.beta2);
  opt.epsilon = static_cast<S>(cfg.optimizer.epsilon);
  AdamT<S> optimizer(model.parameters(), opt);

  FoldResult result;
  result.fold = fold;
  result.parameter_count = model.parameter_count();
  result.vocabulary_size = vocab.size();

  std::vector<double> best_params;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train_docs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(shuffle_seed(cfg, fold, epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const S inverse_batch = S(1) / static_cast<S>(stop - start);
      for (std::size_t pos = start; pos < stop; ++pos) {
        const EncodedDocument& doc = train_docs[order[pos]];
        Rng context_rng(train_context_seed(cfg, fold, epoch, doc.doc_id));
        TapeT<S> tape;
        TensorT<S> logit = document_forward(model, doc, cfg.variant, &context_rng);
        TensorT<S> loss = bce_with_logits(logit, doc.label);
        const double loss_value = static_cast<double>(loss.item());
        if (!std::isfinite(loss_value)) {
          throw RunError("train_fold: non-finite loss", epoch, batch_index);
        }
        loss_sum += loss_value;
        tape.backward(loss, inverse_batch);
      }
      optimizer.step();
    }
    result.epoch_mean_loss.push_back(loss_sum / static_cast<double>(train_docs.size()));

    if (dev_docs.empty()) {
      best_params = model.parameter_values();
      result.best_epoch = epoch;
      result.epoch_dev_accuracy.push_back(0.0);
      continue;
    }
    const double dev_accuracy =
        evaluate_accuracy(model, dev_docs, dev_context_seed(cfg, fold, epoch), cfg.variant);
    result.epoch_dev_accuracy.push_back(dev_accuracy);
    if (best_params.empty() || dev_accuracy > result.best_dev_accuracy) {
      result.best_dev_accuracy = dev_accuracy;
      result.best_epoch = epoch;
      best_params = model.parameter_values();
    }
  }

  model.set_parameter_values(best_params);
  result.test_accuracy =
      evaluate_accuracy(model, test_docs, test_context_seed(cfg, fold), cfg.variant);

  if (!cfg.learn_embeddings) {
    const auto current = model.embeddings().vectors.values();
    if (!std::equal(current.begin(), current.end(), frozen_snapshot.begin())) {
      throw ContractViolation("train_fold: frozen embeddings changed during training");
    }
  }
  if (save_model != nullptr) model.save(*save_model);

  result.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace

ExperimentConfig frozen_embedding_profile() {
  ExperimentConfig cfg;
  cfg.embedding_dim = 500;
  cfg.position_dim = 20;
  cfg.rank = 100;
  cfg.learn_embeddings = false;
  return cfg;
}

ExperimentConfig learned_embedding_profile() {
  ExperimentConfig cfg;
  cfg.embedding_dim = 250;
  cfg.position_dim = 20;
  cfg.rank = 100;
  cfg.learn_embeddings = true;
  return cfg;
}

namespace {

FoldResult train_fold_dispatch(const ExperimentConfig& config, const Dataset& ds,
                               const FoldPlan& plan, std::size_t fold_index,
                               const std::filesystem::path* save_model) {
  if (config.precision == "f64") {
    return train_fold_impl<double>(config, ds, plan, fold_index, save_model);
  }
  if (config.precision == "f32") {
    return train_fold_impl<float>(config, ds, plan, fold_index, save_model);
  }
  throw InputError("train_fold: unknown precision '" + config.precision +
                   "' (expected f64 or f32)");
}

}  // namespace

FoldResult train_fold(const ExperimentConfig& config, const Dataset& ds, const FoldPlan& plan,
                      std::size_t fold_index) {
  return train_fold_dispatch(config, ds, plan, fold_index, nullptr);
}

FoldResult train_fold(const ExperimentConfig& config, const Dataset& ds, const FoldPlan& plan,
                      std::size_t fold_index, const std::filesystem::path& save_model_to) {
  return train_fold_dispatch(config, ds, plan, fold_index, &save_model_to);
}

template <class S>
double evaluate_accuracy(const ContextualizerModelT<S>& model,
                         const std::vector<EncodedDocument>& docs,
                         std::uint64_t context_seed_base, StepVariant variant) {
  if (docs.empty()) throw InputError("evaluate_accuracy: no documents");
  std::size_t correct = 0;
  for (const auto& doc : docs) {
    Rng context_rng(derive_seed(context_seed_base, {doc.doc_id}));
    TensorT<S> logit = document_forward(model, doc, variant, &context_rng);
    const int predicted = logit.item() > S(0) ? 1 : 0;
    if (predicted == doc.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(docs.size());
}

template double evaluate_accuracy(const ContextualizerModelT<float>&,
                                  const std::vector<EncodedDocument>&, std::uint64_t,
                                  StepVariant);
template double evaluate_accuracy(const ContextualizerModelT<double>&,
                                  const std::vector<EncodedDocument>&, std::uint64_t,
                                  StepVariant);

RunReport summarize(const ExperimentConfig& config, std::vector<FoldResult> folds) {
  RunReport report;
  report.config = config;
  report.folds = std::move(folds);
  std::sort(report.folds.begin(), report.folds.end(),
            [](const FoldResult& a, const FoldResult& b) { return a.fold < b.fold; });
  if (!report.folds.empty()) {
    double sum = 0.0;
    for (const auto& fr : report.folds) sum += fr.test_accuracy;
    report.mean_test_accuracy = sum / static_cast<double>(report.folds.size());
    double var = 0.0;
    for (const auto& fr : report.folds) {
      const double d = fr.test_accuracy - report.mean_test_accuracy;
      var += d * d;
    }
    report.stddev_test_accuracy = std::sqrt(var / static_cast<double>(report.folds.size()));
  }
  report.timestamp = iso8601_now();
  report.build_revision = kBuildRevision;
  return report;
}

RunReport run_experiment(const ExperimentConfig& config, const Dataset& ds) {
  const auto t0 = std::chrono::steady_clock::now();
  const FoldPlan plan = make_folds(ds, config.master_seed);
  const std::size_t folds = plan.fold_count;
  std::vector<FoldResult> results;
  std::vector<std::string> failures;

  if (config.jobs <= 1) {
    for (std::size_t fold = 0; fold < folds; ++fold) {
      try {
        results.push_back(train_fold(config, ds, plan, fold));
        const FoldResult& fr = results.back();
        std::ostringstream msg;
        msg << config.dataset << " fold " << fold << ": test " << 100.0 * fr.test_accuracy
            << "% (best epoch " << fr.best_epoch << ", " << fr.wall_time_seconds << " s)";
        log::info(msg.str());
      } catch (const std::exception& e) {
        failures.push_back("fold " + std::to_string(fold) + ": " + e.what());
        break;
      }
    }
  } else {
    std::vector<std::optional<FoldResult>> slots(folds);
    std::vector<std::string> errors(folds);
    std::vector<std::thread> workers;
    const std::size_t parallel = std::min(config.jobs, folds);
    // Simple static partition: worker w takes folds w, w+parallel, ...
    for (std::size_t w = 0; w < parallel; ++w) {
      workers.emplace_back([&, w]() {
        for (std::size_t fold = w; fold < folds; fold += parallel) {
          try {
            slots[fold] = train_fold(config, ds, plan, fold);
          } catch (const std::exception& e) {
            errors[fold] = e.what();
          }
        }
      });
    }
    for (auto& worker : workers) worker.join();
    for (std::size_t fold = 0; fold < folds; ++fold) {
      if (slots[fold].has_value()) {
        results.push_back(std::move(*slots[fold]));
      } else {
        failures.push_back("fold " + std::to_string(fold) + ": " + errors[fold]);
      }
    }
  }

  if (!failures.empty()) {
    std::string what = "run_experiment aborted (" + failures.front() + ")";
    throw RunAborted(what, std::move(results));
  }
  RunReport report = summarize(config, std::move(results));
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

RunReport run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, load_dataset(config.dataset, config.data_dir));
}

}  // namespace ctxenc
