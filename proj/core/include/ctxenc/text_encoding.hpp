#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxenc/rng.hpp"
#include "ctxenc/tensor.hpp"

namespace ctxenc {

/// Word-level tokenizer: lowercases ASCII, separates punctuation into
/// standalone tokens, and splits the common English clitics ('s, 're, 've,
/// 'll, 'd, 'm, n't) off their host word. Idempotent: tokenizing already
/// tokenized text yields the same tokens. Bytes >= 0x80 are treated as word
/// characters so multi-byte UTF-8 sequences stay intact.
std::vector<std::string> tokenize(const std::string& text);

/// Lowercase + whitespace split, for text that is already tokenized.
std::vector<std::string> whitespace_lowercase_split(const std::string& text);

/// Token -> dense index map. Tokens seen fewer than min_count times in the
/// corpus fall through to a reserved out-of-vocabulary index (the last one).
class Vocabulary {
 public:
  Vocabulary() = default;

  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus,
                          std::size_t min_count);

  /// Index for a token; unknown tokens map to oov_index().
  std::size_t index_of(const std::string& token) const {
    auto it = token_to_index_.find(token);
    return it == token_to_index_.end() ? oov_index() : it->second;
  }

  bool contains(const std::string& token) const {
    return token_to_index_.find(token) != token_to_index_.end();
  }

  /// Number of indices including the OOV slot.
  std::size_t size() const noexcept { return tokens_.size() + 1; }
  std::size_t oov_index() const noexcept { return tokens_.size(); }
  std::size_t min_count() const noexcept { return min_count_; }

  /// Retained tokens in index order (sorted).
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// One token per line, sorted; the OOV slot is implicit.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path, std::size_t min_count = 0);

 private:
  std::unordered_map<std::string, std::size_t> token_to_index_;
  std::vector<std::string> tokens_;
  std::size_t min_count_ = 0;
};

/// Sinusoidal position encoding. Deterministic and defined for any
/// non-negative position; no length table is required.
class PositionEncoder {
 public:
  explicit PositionEncoder(std::size_t dimension) : dimension_(dimension) {}

  std::size_t dimension() const noexcept { return dimension_; }

  /// Encoding of one position as doubles.
  std::vector<double> encode_position(std::size_t position) const;

  /// Stacked encodings for positions 0..n-1 as an [n x p] tensor.
  template <class S>
  TensorT<S> block(std::size_t n) const {
    TensorT<S> out = TensorT<S>::zeros({n, dimension_});
    for (std::size_t i = 0; i < n; ++i) {
      const std::vector<double> row = encode_position(i);
      for (std::size_t j = 0; j < dimension_; ++j) {
        out.at(i, j) = static_cast<S>(row[j]);
      }
    }
    return out;
  }

 private:
  std::size_t dimension_;
};

/// Word embedding matrix, drawn i.i.d. from Uniform(-1, 1) at a fixed seed.
/// When not trainable, the entries never change and a (seed, shape) header
/// is enough to reproduce the table exactly.
template <class S>
struct EmbeddingTableT {
  TensorT<S> vectors;  // [vocab_size x embedding_dim]
  std::uint64_t seed = 0;
  bool trainable = false;

  static EmbeddingTableT random(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                bool trainable) {
    EmbeddingTableT table;
    Rng rng(seed);
    table.vectors = TensorT<S>::uniform({rows, cols}, rng, -1.0, 1.0, trainable);
    table.seed = seed;
    table.trainable = trainable;
    return table;
  }

  std::size_t rows() const { return vectors.dim(0); }
  std::size_t cols() const { return vectors.dim(1); }
};

void save_embedding_header(const std::filesystem::path& path, std::size_t rows,
                           std::size_t cols, std::uint64_t seed, bool trainable);

struct EmbeddingHeader {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::uint64_t seed = 0;
  bool trainable = false;
};

EmbeddingHeader load_embedding_header(const std::filesystem::path& path);

template <class S>
EmbeddingTableT<S> regenerate_embedding_table(const EmbeddingHeader& header) {
  return EmbeddingTableT<S>::random(header.rows, header.cols, header.seed, header.trainable);
}

/// A document after vocabulary lookup: token ids in order plus its label.
/// The combined word+position matrix is materialized on demand by
/// document_matrix(), so embeddings can stay trainable.
struct EncodedDocument {
  std::vector<std::size_t> token_ids;
  int label = 0;
  std::size_t doc_id = 0;

  std::size_t size() const noexcept { return token_ids.size(); }
};

/// Maps tokens to ids; unknown tokens go to the OOV index. Positions are
/// implicit (0-based token order). Empty token lists are rejected.
EncodedDocument encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                       int label, std::size_t doc_id);

/// The [n x (v+p)] matrix whose row i is the embedding of token i
/// concatenated with the encoding of position i. Differentiable w.r.t. the
/// embedding table when it is trainable.
template <class S>
TensorT<S> document_matrix(const EmbeddingTableT<S>& embeddings, const PositionEncoder& positions,
                           const EncodedDocument& doc);

using EmbeddingTable = EmbeddingTableT<double>;

}  // namespace ctxenc
