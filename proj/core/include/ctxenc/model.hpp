#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ctxenc/rng.hpp"
#include "ctxenc/tensor.hpp"
#include "ctxenc/text_encoding.hpp"

namespace ctxenc {

/// How the context vector is initialized before the first adjustment step.
enum class DefaultContext {
  kOnes,               // constant all-ones vector
  kLearned,            // trainable vector, initialized to ones
  kRandomPerDocument,  // fresh Uniform(-1,1) draw for every document
};

DefaultContext parse_default_context(std::string_view name);
std::string_view to_string(DefaultContext strategy);

/// Which update rule a step applies: one shared context adjusted against all
/// tokens (linear in n), or every token adjusted against every token
/// (quadratic in n, encoder-style).
enum class StepVariant { kContextVector, kTokenWise };

std::string_view to_string(StepVariant variant);
StepVariant parse_step_variant(std::string_view name);

/// Parameters of one attention step. The weight vector for token x given
/// context c is W (Ux * Vc), a rank-u factorization of a degree-3 tensor.
template <class S>
struct AttentionStepT {
  TensorT<S> U;  // [u x m]
  TensorT<S> V;  // [u x m]
  TensorT<S> W;  // [m x u]
};

/// Pre-softmax weight vector for one token: W (Ux * Vc). Equals the
/// contraction of x and c against the dense degree-3 tensor
/// sum_r W[:,r] (x) U[r,:] (x) V[r,:].
template <class S>
TensorT<S> candidate_weights(const AttentionStepT<S>& step, const TensorT<S>& x,
                             const TensorT<S>& c);

/// Intermediate states of one forward pass: contexts c^(0)..c^(K) and the
/// normalized weight matrices for steps 1..K.
template <class S>
struct ContextTraceT {
  std::vector<TensorT<S>> contexts;
  std::vector<TensorT<S>> weights;
};

struct ModelDims {
  std::size_t model_dim = 0;  // m, per-token representation width
  std::size_t rank = 0;       // u, factorization rank of the attention tensor
  std::size_t steps = 1;      // K, number of adjustment iterations
  bool recurrent = true;      // share one (U, V, W) across all steps
  DefaultContext default_context = DefaultContext::kOnes;
};

/// Sentence encoder that iteratively adjusts a context vector against the
/// token representations, plus a single-logit affine classifier head.
/// Word embeddings and the position encoder can be attached so whole
/// documents can be run end to end; they are part of the checkpoint.
template <class S>
class ContextualizerModelT {
 public:
  ContextualizerModelT() = default;

  /// Initializes attention matrices Uniform(-limit, limit) with
  /// limit = sqrt(6 / (u + m)), the classifier at zero, and the learned
  /// default context (when used) at ones.
  ContextualizerModelT(const ModelDims& dims, Rng& rng);

  const ModelDims& dims() const noexcept { return dims_; }
  std::size_t model_dim() const noexcept { return dims_.model_dim; }
  std::size_t rank() const noexcept { return dims_.rank; }
  std::size_t steps() const noexcept { return dims_.steps; }

  /// Attention parameters used at iteration k (0-based). Recurrent models
  /// return the single shared step for every k.
  const AttentionStepT<S>& step(std::size_t k) const;
  AttentionStepT<S>& step(std::size_t k);
  std::size_t stored_step_count() const noexcept { return steps_.size(); }

  TensorT<S>& classifier_weight() noexcept { return classifier_w_; }
  TensorT<S>& classifier_bias() noexcept { return classifier_b_; }
  const TensorT<S>& learned_context() const noexcept { return learned_context_; }

  /// Binds the word embedding table and position encoder. Their widths must
  /// add up to model_dim.
  void attach_embeddings(EmbeddingTableT<S> table, PositionEncoder positions);
  bool has_embeddings() const noexcept { return embeddings_.has_value(); }
  const EmbeddingTableT<S>& embeddings() const;
  EmbeddingTableT<S>& embeddings();
  const PositionEncoder& positions() const;

  /// Trainable tensors in a fixed order: per stored step U, V, W; classifier
  /// weight and bias; the learned default context when that strategy is
  /// active; the embedding table when attached and trainable.
  std::vector<TensorT<S>> parameters() const;
  std::size_t parameter_count() const;
  std::vector<double> parameter_values() const;
  void set_parameter_values(const std::vector<double>& flat);

  /// c^(0) for one document. RandomPerDocument requires an rng.
  TensorT<S> initial_context(Rng* rng) const;

  /// Pre-softmax weights for all tokens at once, row i = W (Ux_i * Vc).
  TensorT<S> candidate_weight_matrix(const TensorT<S>& x_matrix, const TensorT<S>& c_prev,
                                     std::size_t k) const;

  /// One adjustment: softmax the candidate weights across tokens per
  /// component, then sum the weighted tokens. Returns (c_next, weights).
  std::pair<TensorT<S>, TensorT<S>> contextualize_step(const TensorT<S>& x_matrix,
                                                       const TensorT<S>& c_prev,
                                                       std::size_t k) const;

  /// Same mapping computed token by token with no matrix fusion. Reference
  /// route for instruction counting; forward only, rejects an active tape.
  std::pair<TensorT<S>, TensorT<S>> contextualize_step_per_token(const TensorT<S>& x_matrix,
                                                                 const TensorT<S>& c_prev,
                                                                 std::size_t k) const;

  /// Full pass from an already-encoded [n x m] matrix. K = 0 is allowed and
  /// classifies c^(0) directly.
  TensorT<S> forward_from_matrix(const TensorT<S>& x_matrix, const TensorT<S>& c0,
                                 ContextTraceT<S>* trace = nullptr) const;

  /// Full pass from a document; requires attached embeddings. The rng is
  /// consulted only by the RandomPerDocument strategy.
  TensorT<S> forward(const EncodedDocument& doc, Rng* context_rng = nullptr,
                     ContextTraceT<S>* trace = nullptr) const;

  /// Token-wise variant: every token is adjusted against every token with
  /// the same attention parameters (the token stands in as attender), all
  /// updates within a step computed from the pre-step states. After K steps
  /// the tokens are mean-pooled and classified.
  TensorT<S> token_wise_forward_from_matrix(const TensorT<S>& x_matrix,
                                            std::vector<TensorT<S>>* states = nullptr) const;
  TensorT<S> token_wise_forward(const EncodedDocument& doc,
                                std::vector<TensorT<S>>* states = nullptr) const;

  /// Token-by-token reference route of the token-wise step; forward only.
  TensorT<S> token_wise_step_per_token(const TensorT<S>& x_matrix, std::size_t k) const;

  void save(const std::filesystem::path& path) const;
  static ContextualizerModelT load(const std::filesystem::path& path);

 private:
  std::size_t step_index(std::size_t k) const { return dims_.recurrent ? 0 : k; }

  ModelDims dims_;
  std::vector<AttentionStepT<S>> steps_;
  TensorT<S> classifier_w_;
  TensorT<S> classifier_b_;
  TensorT<S> learned_context_;
  std::optional<EmbeddingTableT<S>> embeddings_;
  std::optional<PositionEncoder> positions_;
};

/// Exact multiply-accumulate count of one adjustment step computed token by
/// token: per evaluated pair Ux (um), Vc (um), Hadamard (u), W z (mu), plus
/// the weighted aggregation (m per token per target). The context-vector
/// rule evaluates n pairs per step, the token-wise rule n^2.
std::uint64_t step_mac_count(std::size_t n, std::size_t m, std::size_t u, StepVariant variant);

using AttentionStep = AttentionStepT<double>;
using ContextTrace = ContextTraceT<double>;
using ContextualizerModel = ContextualizerModelT<double>;

}  // namespace ctxenc
