#include "ctxenc/text_encoding.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

#include "ctxenc/errors.hpp"
#include "ctxenc/ops.hpp"

namespace ctxenc {

namespace {

bool is_word_char(unsigned char c) {
  return std::isalnum(c) != 0 || c >= 0x80;
}

constexpr std::array<std::string_view, 7> kClitics = {"'s", "'re", "'ve", "'ll",
                                                      "'d", "'m", "n't"};

bool is_clitic(std::string_view s) {
  return std::find(kClitics.begin(), kClitics.end(), s) != kClitics.end();
}

/// Splits one run of word characters and apostrophes. Clitic suffixes come
/// off as their own tokens; any apostrophe that is not part of a clitic is a
/// standalone token.
void split_word_run(std::string_view run, std::vector<std::string>& out) {
  if (run.empty()) return;
  if (is_clitic(run)) {
    out.emplace_back(run);
    return;
  }
  for (std::string_view suffix : kClitics) {
    if (run.size() > suffix.size() && run.ends_with(suffix)) {
      // "n't" needs an apostrophe-free prefix check so "can't" splits as
      // ca + n't while "o'clock"-style words fall through to the generic
      // apostrophe handling below.
      split_word_run(run.substr(0, run.size() - suffix.size()), out);
      out.emplace_back(suffix);
      return;
    }
  }
  const std::size_t apos = run.find('\'');
  if (apos == std::string_view::npos) {
    out.emplace_back(run);
    return;
  }
  split_word_run(run.substr(0, apos), out);
  out.emplace_back("'");
  split_word_run(run.substr(apos + 1), out);
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string run;
  auto flush = [&] {
    if (!run.empty()) {
      split_word_run(run, tokens);
      run.clear();
    }
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (is_word_char(c) || c == '\'') {
      run.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
      if (std::isspace(c) == 0) tokens.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

std::vector<std::string> whitespace_lowercase_split(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c) != 0) {
      if (!current.empty()) {
        tokens.push_back(current);
        current.clear();
      }
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) tokens.push_back(current);
  return tokens;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus,
                             std::size_t min_count) {
  if (corpus.empty()) throw InputError("vocabulary: corpus is empty");
  if (min_count < 1) throw InputError("vocabulary: min_count must be at least 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& doc : corpus) {
    for (const auto& token : doc) ++counts[token];
  }
  Vocabulary vocab;
  vocab.min_count_ = min_count;
  vocab.tokens_.reserve(counts.size());
  for (const auto& [token, count] : counts) {
    if (count >= min_count) vocab.tokens_.push_back(token);
  }
  std::sort(vocab.tokens_.begin(), vocab.tokens_.end());
  vocab.token_to_index_.reserve(vocab.tokens_.size());
  for (std::size_t i = 0; i < vocab.tokens_.size(); ++i) {
    vocab.token_to_index_.emplace(vocab.tokens_[i], i);
  }
  return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("vocabulary: cannot open " + path.string() + " for writing");
  for (const auto& token : tokens_) out << token << '\n';
  if (!out) throw IoError("vocabulary: write failed for " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path, std::size_t min_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("vocabulary: cannot open " + path.string());
  Vocabulary vocab;
  vocab.min_count_ = min_count;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw FormatError("vocabulary: empty token line in " + path.string());
    vocab.tokens_.push_back(line);
  }
  for (std::size_t i = 1; i < vocab.tokens_.size(); ++i) {
    if (!(vocab.tokens_[i - 1] < vocab.tokens_[i])) {
      throw FormatError("vocabulary: tokens must be sorted and unique in " + path.string());
    }
  }
  vocab.token_to_index_.reserve(vocab.tokens_.size());
  for (std::size_t i = 0; i < vocab.tokens_.size(); ++i) {
    vocab.token_to_index_.emplace(vocab.tokens_[i], i);
  }
  return vocab;
}

std::vector<double> PositionEncoder::encode_position(std::size_t position) const {
  std::vector<double> row(dimension_);
  const auto pos = static_cast<double>(position);
  for (std::size_t j = 0; j < dimension_; ++j) {
    const std::size_t pair = j - (j % 2);
    const double angle =
        pos / std::pow(10000.0, static_cast<double>(pair) / static_cast<double>(dimension_));
    row[j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
  return row;
}

void save_embedding_header(const std::filesystem::path& path, std::size_t rows,
                           std::size_t cols, std::uint64_t seed, bool trainable) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("embeddings: cannot open " + path.string() + " for writing");
  out << "uniform-embedding 1\n"
      << "rows " << rows << '\n'
      << "cols " << cols << '\n'
      << "seed " << seed << '\n'
      << "trainable " << (trainable ? 1 : 0) << '\n';
  if (!out) throw IoError("embeddings: write failed for " + path.string());
}

EmbeddingHeader load_embedding_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("embeddings: cannot open " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "uniform-embedding" || version != 1) {
    throw FormatError("embeddings: unrecognized header in " + path.string());
  }
  EmbeddingHeader header;
  std::string key;
  int trainable_flag = 0;
  in >> key >> header.rows;
  if (key != "rows") throw FormatError("embeddings: expected rows in " + path.string());
  in >> key >> header.cols;
  if (key != "cols") throw FormatError("embeddings: expected cols in " + path.string());
  in >> key >> header.seed;
  if (key != "seed") throw FormatError("embeddings: expected seed in " + path.string());
  in >> key >> trainable_flag;
  if (key != "trainable" || !in) {
    throw FormatError("embeddings: expected trainable flag in " + path.string());
  }
  header.trainable = trainable_flag != 0;
  return header;
}

EncodedDocument encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                       int label, std::size_t doc_id) {
  if (tokens.empty()) throw InputError("encode: document has no tokens");
  if (label != 0 && label != 1) throw InputError("encode: label must be 0 or 1");
  EncodedDocument doc;
  doc.token_ids.reserve(tokens.size());
  for (const auto& token : tokens) doc.token_ids.push_back(vocab.index_of(token));
  doc.label = label;
  doc.doc_id = doc_id;
  return doc;
}

template <class S>
TensorT<S> document_matrix(const EmbeddingTableT<S>& embeddings, const PositionEncoder& positions,
                           const EncodedDocument& doc) {
  if (doc.token_ids.empty()) throw InputError("document_matrix: document has no tokens");
  return embed_concat(embeddings.vectors, doc.token_ids, positions.block<S>(doc.size()));
}

template TensorT<float> document_matrix(const EmbeddingTableT<float>&, const PositionEncoder&,
                                        const EncodedDocument&);
template TensorT<double> document_matrix(const EmbeddingTableT<double>&, const PositionEncoder&,
                                         const EncodedDocument&);

}  // namespace ctxenc
