#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ctxenc {

struct Document {
  std::string text;
  int label = 0;       // 0 = negative class file, 1 = positive class file
  std::size_t id = 0;  // stable position in the loaded dataset
};

struct Dataset {
  std::string name;
  std::vector<Document> documents;
  std::array<std::size_t, 2> class_counts{0, 0};
  bool pretokenized = false;

  std::size_t size() const noexcept { return documents.size(); }
};

/// Registry entry for one of the supported benchmark corpora. Files are
/// expected under <data_dir>/<name>/{neg.txt,pos.txt} after normalization
/// by the fetch script.
struct DatasetSpec {
  std::string_view name;
  std::size_t expected_documents = 0;
  std::array<std::size_t, 2> expected_class_counts{0, 0};  // 0 = not pinned
  bool pretokenized = true;
  std::string_view negative_source;
  std::string_view positive_source;
  std::string_view description;
};

const std::vector<DatasetSpec>& dataset_registry();
const DatasetSpec* find_dataset_spec(std::string_view name);

/// Loads one class file per label (one document per line, UTF-8 or Latin-1;
/// Latin-1 lines are transcoded and counted in a warning). Empty lines are
/// skipped. Documents get ids 0..N-1, negatives first.
Dataset load_class_files(std::string name, const std::filesystem::path& negative_file,
                         const std::filesystem::path& positive_file, bool pretokenized);

/// Loads a registered dataset from <data_dir>/<name>/{neg.txt,pos.txt} and
/// warns when the document count deviates from the registry.
Dataset load_dataset(std::string_view name, const std::filesystem::path& data_dir);

/// True when <data_dir>/<name>/{neg.txt,pos.txt} both exist.
bool dataset_available(std::string_view name, const std::filesystem::path& data_dir);

/// Stratified 5-fold split with a stratified 10% development subset carved
/// out of every fold. A document marked dev acts as a development example
/// whenever its fold is not the held-out test fold.
struct FoldPlan {
  std::vector<std::size_t> fold_assignments;
  std::vector<bool> dev_mask;
  std::uint64_t seed = 0;
  std::size_t fold_count = 5;

  std::size_t size() const noexcept { return fold_assignments.size(); }

  /// Text manifest: header plus one "id fold dev label" row per document.
  void save(const std::filesystem::path& path, const Dataset& ds) const;
  static FoldPlan load(const std::filesystem::path& path);
};

/// Deterministic stratified split: per class, documents are shuffled with a
/// seed derived from (seed, class) and dealt round-robin across 5 folds;
/// the first ~10% of every (fold, class) cell is marked dev.
FoldPlan make_folds(const Dataset& ds, std::uint64_t seed);

/// Per-fold document roles derived from a plan.
enum class SplitRole { kTrain, kDev, kTest };

SplitRole split_role(const FoldPlan& plan, std::size_t doc_id, std::size_t test_fold);

}  // namespace ctxenc
