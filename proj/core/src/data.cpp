#include "ctxenc/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ctxenc/errors.hpp"
#include "ctxenc/log.hpp"
#include "ctxenc/rng.hpp"

namespace ctxenc {

namespace {

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto byte = static_cast<unsigned char>(s[i]);
    std::size_t continuation = 0;
    if (byte < 0x80) {
      continuation = 0;
    } else if ((byte & 0xE0) == 0xC0) {
      continuation = 1;
    } else if ((byte & 0xF0) == 0xE0) {
      continuation = 2;
    } else if ((byte & 0xF8) == 0xF0) {
      continuation = 3;
    } else {
      return false;
    }
    if (i + continuation >= s.size()) return false;
    for (std::size_t k = 1; k <= continuation; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
    }
    i += continuation + 1;
  }
  return true;
}

std::string latin1_to_utf8(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char raw : s) {
    const auto byte = static_cast<unsigned char>(raw);
    if (byte < 0x80) {
      out.push_back(raw);
    } else {
      out.push_back(static_cast<char>(0xC0 | (byte >> 6)));
      out.push_back(static_cast<char>(0x80 | (byte & 0x3F)));
    }
  }
  return out;
}

void read_class_file(const std::filesystem::path& path, int label, Dataset& ds) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("dataset: cannot open " + path.string());
  std::string line;
  std::size_t transcoded = 0;
  std::size_t skipped = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      ++skipped;
      continue;
    }
    if (!is_valid_utf8(line)) {
      line = latin1_to_utf8(line);
      ++transcoded;
    }
    Document doc;
    doc.text = std::move(line);
    doc.label = label;
    doc.id = ds.documents.size();
    ds.documents.push_back(std::move(doc));
    ++ds.class_counts[static_cast<std::size_t>(label)];
  }
  if (transcoded > 0) {
    log::warn("dataset: " + path.string() + ": transcoded " + std::to_string(transcoded) +
              " Latin-1 lines to UTF-8");
  }
  if (skipped > 0) {
    log::warn("dataset: " + path.string() + ": skipped " + std::to_string(skipped) +
              " blank lines");
  }
}

std::size_t percentile_95_length(const Dataset& ds) {
  std::vector<std::size_t> lengths;
  lengths.reserve(ds.size());
  for (const auto& doc : ds.documents) {
    std::size_t words = 0;
    bool in_word = false;
    for (char c : doc.text) {
      const bool space = c == ' ' || c == '\t';
      if (!space && !in_word) ++words;
      in_word = !space;
    }
    lengths.push_back(words);
  }
  std::sort(lengths.begin(), lengths.end());
  const std::size_t idx = (lengths.size() * 95 + 99) / 100;
  return lengths[std::min(idx == 0 ? 0 : idx - 1, lengths.size() - 1)];
}

}  // namespace

const std::vector<DatasetSpec>& dataset_registry() {
  static const std::vector<DatasetSpec> registry = {
      {"MR",
       10662,
       {5331, 5331},
       true,
       "https://www.cs.cornell.edu/people/pabo/movie-review-data/rt-polaritydata.tar.gz"
       "#rt-polaritydata/rt-polarity.neg",
       "https://www.cs.cornell.edu/people/pabo/movie-review-data/rt-polaritydata.tar.gz"
       "#rt-polaritydata/rt-polarity.pos",
       "Movie-review sentences, positive vs negative sentiment"},
      {"CR",
       3775,
       {0, 0},
       true,
       "https://raw.githubusercontent.com/harvardnlp/sent-conv-torch/master/data/custrev.neg",
       "https://raw.githubusercontent.com/harvardnlp/sent-conv-torch/master/data/custrev.pos",
       "Customer product reviews, negative vs positive opinion"},
      {"SUBJ",
       10000,
       {5000, 5000},
       true,
       "https://www.cs.cornell.edu/people/pabo/movie-review-data/rotten_imdb.tar.gz"
       "#plot.tok.gt9.5000",
       "https://www.cs.cornell.edu/people/pabo/movie-review-data/rotten_imdb.tar.gz"
       "#quote.tok.gt9.5000",
       "Objective plot sentences vs subjective review snippets"},
      {"MPQA",
       10606,
       {0, 0},
       true,
       "https://raw.githubusercontent.com/harvardnlp/sent-conv-torch/master/data/mpqa.neg",
       "https://raw.githubusercontent.com/harvardnlp/sent-conv-torch/master/data/mpqa.pos",
       "Opinion phrases, negative vs positive polarity (about 7:3)"},
  };
  return registry;
}

const DatasetSpec* find_dataset_spec(std::string_view name) {
  for (const auto& spec : dataset_registry()) {
    if (spec.name == name) return &spec;
  }
  return nullptr;
}

Dataset load_class_files(std::string name, const std::filesystem::path& negative_file,
                         const std::filesystem::path& positive_file, bool pretokenized) {
  Dataset ds;
  ds.name = std::move(name);
  ds.pretokenized = pretokenized;
  read_class_file(negative_file, 0, ds);
  read_class_file(positive_file, 1, ds);
  if (ds.class_counts[0] == 0) {
    throw FormatError("dataset " + ds.name + ": no documents in " + negative_file.string());
  }
  if (ds.class_counts[1] == 0) {
    throw FormatError("dataset " + ds.name + ": no documents in " + positive_file.string());
  }
  return ds;
}

Dataset load_dataset(std::string_view name, const std::filesystem::path& data_dir) {
  const DatasetSpec* spec = find_dataset_spec(name);
  if (spec == nullptr) {
    throw InputError("dataset: unknown name '" + std::string(name) +
                     "' (expected MR, CR, SUBJ, or MPQA)");
  }
  const std::filesystem::path dir = data_dir / std::string(name);
  Dataset ds = load_class_files(std::string(name), dir / "neg.txt", dir / "pos.txt",
                                spec->pretokenized);
  if (ds.size() != spec->expected_documents) {
    log::warn("dataset " + ds.name + ": expected " + std::to_string(spec->expected_documents) +
              " documents, loaded " + std::to_string(ds.size()));
  }
  for (std::size_t label = 0; label < 2; ++label) {
    if (spec->expected_class_counts[label] != 0 &&
        spec->expected_class_counts[label] != ds.class_counts[label]) {
      log::warn("dataset " + ds.name + ": class " + std::to_string(label) + " has " +
                std::to_string(ds.class_counts[label]) + " documents, expected " +
                std::to_string(spec->expected_class_counts[label]));
    }
  }
  log::info("dataset " + ds.name + ": " + std::to_string(ds.size()) + " documents (" +
            std::to_string(ds.class_counts[0]) + " negative, " +
            std::to_string(ds.class_counts[1]) + " positive), 95th percentile length " +
            std::to_string(percentile_95_length(ds)) + " words");
  return ds;
}

bool dataset_available(std::string_view name, const std::filesystem::path& data_dir) {
  const std::filesystem::path dir = data_dir / std::string(name);
  std::error_code ec;
  return std::filesystem::exists(dir / "neg.txt", ec) &&
         std::filesystem::exists(dir / "pos.txt", ec);
}

FoldPlan make_folds(const Dataset& ds, std::uint64_t seed) {
  constexpr std::size_t kFolds = 5;
  for (std::size_t label = 0; label < 2; ++label) {
    if (ds.class_counts[label] < 2 * kFolds) {
      throw InputError("make_folds: class " + std::to_string(label) + " has only " +
                       std::to_string(ds.class_counts[label]) +
                       " documents; need at least " + std::to_string(2 * kFolds));
    }
  }
  FoldPlan plan;
  plan.seed = seed;
  plan.fold_count = kFolds;
  plan.fold_assignments.assign(ds.size(), 0);
  plan.dev_mask.assign(ds.size(), false);
  for (std::size_t label = 0; label < 2; ++label) {
    std::vector<std::size_t> members;
    for (const auto& doc : ds.documents) {
      if (static_cast<std::size_t>(doc.label) == label) members.push_back(doc.id);
    }
    Rng rng(derive_seed(seed, {hash_tag("folds"), label}));
    rng.shuffle(members);
    for (std::size_t i = 0; i < members.size(); ++i) {
      plan.fold_assignments[members[i]] = i % kFolds;
    }
    for (std::size_t fold = 0; fold < kFolds; ++fold) {
      std::vector<std::size_t> cell;
      for (std::size_t i = fold; i < members.size(); i += kFolds) cell.push_back(members[i]);
      const auto dev_count = static_cast<std::size_t>(
          std::llround(0.1 * static_cast<double>(cell.size())));
      for (std::size_t i = 0; i < dev_count; ++i) plan.dev_mask[cell[i]] = true;
    }
  }
  return plan;
}

SplitRole split_role(const FoldPlan& plan, std::size_t doc_id, std::size_t test_fold) {
  if (doc_id >= plan.size()) throw ContractViolation("split_role: document id out of range");
  if (test_fold >= plan.fold_count) throw ContractViolation("split_role: fold out of range");
  if (plan.fold_assignments[doc_id] == test_fold) return SplitRole::kTest;
  return plan.dev_mask[doc_id] ? SplitRole::kDev : SplitRole::kTrain;
}

void FoldPlan::save(const std::filesystem::path& path, const Dataset& ds) const {
  if (ds.size() != size()) {
    throw DimensionError("fold plan: dataset has " + std::to_string(ds.size()) +
                         " documents, plan covers " + std::to_string(size()));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("fold plan: cannot open " + path.string() + " for writing");
  out << "fold-plan 1\n"
      << "seed " << seed << '\n'
      << "folds " << fold_count << '\n'
      << "docs " << size() << '\n'
      << "id fold dev label\n";
  for (std::size_t id = 0; id < size(); ++id) {
    out << id << ' ' << fold_assignments[id] << ' ' << (dev_mask[id] ? 1 : 0) << ' '
        << ds.documents[id].label << '\n';
  }
  if (!out) throw IoError("fold plan: write failed for " + path.string());
}

FoldPlan FoldPlan::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("fold plan: cannot open " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "fold-plan" || version != 1) {
    throw FormatError("fold plan: unrecognized header in " + path.string());
  }
  FoldPlan plan;
  std::string key;
  std::size_t docs = 0;
  in >> key >> plan.seed;
  if (key != "seed") throw FormatError("fold plan: expected seed in " + path.string());
  in >> key >> plan.fold_count;
  if (key != "folds") throw FormatError("fold plan: expected folds in " + path.string());
  in >> key >> docs;
  if (key != "docs" || !in) throw FormatError("fold plan: expected docs in " + path.string());
  std::string id_h, fold_h, dev_h, label_h;
  in >> id_h >> fold_h >> dev_h >> label_h;
  if (id_h != "id" || fold_h != "fold" || dev_h != "dev" || label_h != "label") {
    throw FormatError("fold plan: expected column header in " + path.string());
  }
  plan.fold_assignments.assign(docs, 0);
  plan.dev_mask.assign(docs, false);
  for (std::size_t row = 0; row < docs; ++row) {
    std::size_t id = 0, fold = 0;
    int dev = 0, label = 0;
    in >> id >> fold >> dev >> label;
    if (!in || id != row || fold >= plan.fold_count) {
      throw FormatError("fold plan: bad row " + std::to_string(row) + " in " + path.string());
    }
    plan.fold_assignments[row] = fold;
    plan.dev_mask[row] = dev != 0;
  }
  return plan;
}

}  // namespace ctxenc
