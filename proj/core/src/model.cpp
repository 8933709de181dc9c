#include "ctxenc/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ctxenc/errors.hpp"
#include "ctxenc/ops.hpp"

namespace ctxenc {

namespace {

constexpr char kMagic[4] = {'C', 'T', 'X', 'M'};
constexpr unsigned char kVersion = 1;

constexpr unsigned kFlagRecurrent = 1u << 0;
constexpr unsigned kFlagContextShift = 1;  // bits 1-2 hold the strategy
constexpr unsigned kFlagContextMask = 3u << kFlagContextShift;
constexpr unsigned kFlagHasEmbeddings = 1u << 3;
constexpr unsigned kFlagTrainableEmbeddings = 1u << 4;

void put_bytes(std::ostream& out, const char* bytes, std::size_t n) {
  out.write(bytes, static_cast<std::streamsize>(n));
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  put_bytes(out, b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  put_bytes(out, b, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void take_bytes(std::istream& in, char* bytes, std::size_t n, const char* what) {
  in.read(bytes, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError(std::string("checkpoint: truncated while reading ") + what);
  }
}

std::uint32_t take_u32(std::istream& in, const char* what) {
  char b[4];
  take_bytes(in, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

std::uint64_t take_u64(std::istream& in, const char* what) {
  char b[8];
  take_bytes(in, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

double take_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(take_u64(in, what));
}

unsigned encode_context(DefaultContext strategy) {
  switch (strategy) {
    case DefaultContext::kOnes: return 0;
    case DefaultContext::kLearned: return 1;
    case DefaultContext::kRandomPerDocument: return 2;
  }
  throw ContractViolation("unknown default-context strategy");
}

DefaultContext decode_context(unsigned code) {
  switch (code) {
    case 0: return DefaultContext::kOnes;
    case 1: return DefaultContext::kLearned;
    case 2: return DefaultContext::kRandomPerDocument;
    default: throw FormatError("checkpoint: unknown default-context code");
  }
}

}  // namespace

DefaultContext parse_default_context(std::string_view name) {
  if (name == "ones") return DefaultContext::kOnes;
  if (name == "learned") return DefaultContext::kLearned;
  if (name == "random" || name == "random-per-document") {
    return DefaultContext::kRandomPerDocument;
  }
  throw InputError("unknown default-context strategy '" + std::string(name) +
                   "' (expected ones, learned, or random)");
}

std::string_view to_string(DefaultContext strategy) {
  switch (strategy) {
    case DefaultContext::kOnes: return "ones";
    case DefaultContext::kLearned: return "learned";
    case DefaultContext::kRandomPerDocument: return "random";
  }
  throw ContractViolation("unknown default-context strategy");
}

std::string_view to_string(StepVariant variant) {
  switch (variant) {
    case StepVariant::kContextVector: return "context-vector";
    case StepVariant::kTokenWise: return "token-wise";
  }
  throw ContractViolation("unknown step variant");
}

StepVariant parse_step_variant(std::string_view name) {
  if (name == "context-vector") return StepVariant::kContextVector;
  if (name == "token-wise") return StepVariant::kTokenWise;
  throw InputError("unknown step variant '" + std::string(name) +
                   "' (expected context-vector or token-wise)");
}

template <class S>
TensorT<S> candidate_weights(const AttentionStepT<S>& step, const TensorT<S>& x,
                             const TensorT<S>& c) {
  return matvec(step.W, hadamard(matvec(step.U, x), matvec(step.V, c)));
}

template <class S>
ContextualizerModelT<S>::ContextualizerModelT(const ModelDims& dims, Rng& rng) : dims_(dims) {
  if (dims.model_dim < 1) throw InputError("model: model_dim must be at least 1");
  if (dims.rank < 1) throw InputError("model: rank must be at least 1");
  const std::size_t m = dims.model_dim;
  const std::size_t u = dims.rank;
  const std::size_t stored = dims.recurrent ? 1 : dims.steps;
  const double limit = std::sqrt(6.0 / static_cast<double>(u + m));
  steps_.reserve(stored);
  for (std::size_t s = 0; s < stored; ++s) {
    AttentionStepT<S> step;
    step.U = TensorT<S>::uniform({u, m}, rng, -limit, limit, true);
    step.V = TensorT<S>::uniform({u, m}, rng, -limit, limit, true);
    step.W = TensorT<S>::uniform({m, u}, rng, -limit, limit, true);
    steps_.push_back(std::move(step));
  }
  classifier_w_ = TensorT<S>::zeros({m}, true);
  classifier_b_ = TensorT<S>::zeros({1}, true);
  learned_context_ =
      TensorT<S>::ones({m}, dims.default_context == DefaultContext::kLearned);
}

template <class S>
const AttentionStepT<S>& ContextualizerModelT<S>::step(std::size_t k) const {
  if (k >= dims_.steps) throw ContractViolation("model: step index out of range");
  return steps_[step_index(k)];
}

template <class S>
AttentionStepT<S>& ContextualizerModelT<S>::step(std::size_t k) {
  if (k >= dims_.steps) throw ContractViolation("model: step index out of range");
  return steps_[step_index(k)];
}

template <class S>
void ContextualizerModelT<S>::attach_embeddings(EmbeddingTableT<S> table,
                                                PositionEncoder positions) {
  if (table.cols() + positions.dimension() != dims_.model_dim) {
    throw DimensionError("model: embedding width " + std::to_string(table.cols()) +
                         " + position width " + std::to_string(positions.dimension()) +
                         " must equal model_dim " + std::to_string(dims_.model_dim));
  }
  embeddings_ = std::move(table);
  positions_ = std::move(positions);
}

template <class S>
const EmbeddingTableT<S>& ContextualizerModelT<S>::embeddings() const {
  if (!embeddings_) throw ContractViolation("model: no embeddings attached");
  return *embeddings_;
}

template <class S>
EmbeddingTableT<S>& ContextualizerModelT<S>::embeddings() {
  if (!embeddings_) throw ContractViolation("model: no embeddings attached");
  return *embeddings_;
}

template <class S>
const PositionEncoder& ContextualizerModelT<S>::positions() const {
  if (!positions_) throw ContractViolation("model: no embeddings attached");
  return *positions_;
}

template <class S>
std::vector<TensorT<S>> ContextualizerModelT<S>::parameters() const {
  std::vector<TensorT<S>> params;
  for (const auto& step : steps_) {
    params.push_back(step.U);
    params.push_back(step.V);
    params.push_back(step.W);
  }
  params.push_back(classifier_w_);
  params.push_back(classifier_b_);
  if (dims_.default_context == DefaultContext::kLearned) params.push_back(learned_context_);
  if (embeddings_ && embeddings_->trainable) params.push_back(embeddings_->vectors);
  return params;
}

template <class S>
std::size_t ContextualizerModelT<S>::parameter_count() const {
  std::size_t count = 0;
  for (const auto& p : parameters()) count += p.numel();
  return count;
}

template <class S>
std::vector<double> ContextualizerModelT<S>::parameter_values() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& p : parameters()) {
    for (std::size_t i = 0; i < p.numel(); ++i) flat.push_back(static_cast<double>(p.at(i)));
  }
  return flat;
}

template <class S>
void ContextualizerModelT<S>::set_parameter_values(const std::vector<double>& flat) {
  if (flat.size() != parameter_count()) {
    throw DimensionError("model: expected " + std::to_string(parameter_count()) +
                         " parameter values, got " + std::to_string(flat.size()));
  }
  std::size_t offset = 0;
  for (auto& p : parameters()) {
    for (std::size_t i = 0; i < p.numel(); ++i) p.at(i) = static_cast<S>(flat[offset++]);
  }
}

template <class S>
TensorT<S> ContextualizerModelT<S>::initial_context(Rng* rng) const {
  const std::size_t m = dims_.model_dim;
  switch (dims_.default_context) {
    case DefaultContext::kOnes:
      return TensorT<S>::ones({m});
    case DefaultContext::kLearned:
      return learned_context_;
    case DefaultContext::kRandomPerDocument:
      if (rng == nullptr) {
        throw ContractViolation("model: random default context needs an rng");
      }
      return TensorT<S>::uniform({m}, *rng, -1.0, 1.0, false);
  }
  throw ContractViolation("unknown default-context strategy");
}

template <class S>
TensorT<S> ContextualizerModelT<S>::candidate_weight_matrix(const TensorT<S>& x_matrix,
                                                            const TensorT<S>& c_prev,
                                                            std::size_t k) const {
  const auto& st = step(k);
  TensorT<S> ux = matmul_nt(x_matrix, st.U);               // [n x u], row i = U x_i
  TensorT<S> vc = matvec(st.V, c_prev);                    // [u]
  TensorT<S> z = row_broadcast_mul(ux, vc);                // [n x u]
  return matmul_nt(z, st.W);                               // [n x m], row i = W z_i
}

template <class S>
std::pair<TensorT<S>, TensorT<S>> ContextualizerModelT<S>::contextualize_step(
    const TensorT<S>& x_matrix, const TensorT<S>& c_prev, std::size_t k) const {
  TensorT<S> scores = candidate_weight_matrix(x_matrix, c_prev, k);
  TensorT<S> weights = softmax_over_tokens(scores);
  TensorT<S> c_next = weighted_sum_rows(weights, x_matrix);
  return {std::move(c_next), std::move(weights)};
}

template <class S>
std::pair<TensorT<S>, TensorT<S>> ContextualizerModelT<S>::contextualize_step_per_token(
    const TensorT<S>& x_matrix, const TensorT<S>& c_prev, std::size_t k) const {
  if (TapeT<S>::current() != nullptr) {
    throw ContractViolation("model: the per-token route is forward-only");
  }
  const auto& st = step(k);
  const std::size_t n = x_matrix.dim(0);
  const std::size_t m = dims_.model_dim;
  TensorT<S> scores = TensorT<S>::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    TensorT<S> cw = candidate_weights(st, row(x_matrix, i), c_prev);
    for (std::size_t j = 0; j < m; ++j) scores.at(i, j) = cw.at(j);
  }
  TensorT<S> weights = softmax_over_tokens(scores);
  TensorT<S> c_next = weighted_sum_rows(weights, x_matrix);
  return {std::move(c_next), std::move(weights)};
}

template <class S>
TensorT<S> ContextualizerModelT<S>::forward_from_matrix(const TensorT<S>& x_matrix,
                                                        const TensorT<S>& c0,
                                                        ContextTraceT<S>* trace) const {
  if (x_matrix.rank() != 2 || x_matrix.dim(1) != dims_.model_dim) {
    throw DimensionError("model: token matrix must be [n x " +
                         std::to_string(dims_.model_dim) + "], got " +
                         shape_to_string(x_matrix.shape()));
  }
  if (x_matrix.dim(0) < 1) throw InputError("model: document has no tokens");
  if (trace != nullptr) {
    trace->contexts.clear();
    trace->weights.clear();
    trace->contexts.push_back(c0);
  }
  TensorT<S> c = c0;
  for (std::size_t k = 0; k < dims_.steps; ++k) {
    auto [c_next, weights] = contextualize_step(x_matrix, c, k);
    c = std::move(c_next);
    if (trace != nullptr) {
      trace->contexts.push_back(c);
      trace->weights.push_back(std::move(weights));
    }
  }
  return affine(classifier_w_, c, classifier_b_);
}

template <class S>
TensorT<S> ContextualizerModelT<S>::forward(const EncodedDocument& doc, Rng* context_rng,
                                            ContextTraceT<S>* trace) const {
  if (!embeddings_ || !positions_) {
    throw ContractViolation("model: forward from a document needs attached embeddings");
  }
  TensorT<S> x_matrix = document_matrix(*embeddings_, *positions_, doc);
  return forward_from_matrix(x_matrix, initial_context(context_rng), trace);
}

template <class S>
TensorT<S> ContextualizerModelT<S>::token_wise_forward_from_matrix(
    const TensorT<S>& x_matrix, std::vector<TensorT<S>>* states) const {
  if (x_matrix.rank() != 2 || x_matrix.dim(1) != dims_.model_dim) {
    throw DimensionError("model: token matrix must be [n x " +
                         std::to_string(dims_.model_dim) + "], got " +
                         shape_to_string(x_matrix.shape()));
  }
  const std::size_t n = x_matrix.dim(0);
  if (n < 1) throw InputError("model: document has no tokens");
  if (states != nullptr) {
    states->clear();
    states->push_back(x_matrix);
  }
  TensorT<S> current = x_matrix;
  for (std::size_t k = 0; k < dims_.steps; ++k) {
    const auto& st = step(k);
    TensorT<S> ux = matmul_nt(current, st.U);  // shared across attenders
    std::vector<TensorT<S>> updated;
    updated.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
      TensorT<S> vxt = matvec(st.V, row(current, t));
      TensorT<S> z = row_broadcast_mul(ux, vxt);
      TensorT<S> weights = softmax_over_tokens(matmul_nt(z, st.W));
      updated.push_back(weighted_sum_rows(weights, current));
    }
    current = stack_rows(updated);
    if (states != nullptr) states->push_back(current);
  }
  return affine(classifier_w_, mean_rows(current), classifier_b_);
}

template <class S>
TensorT<S> ContextualizerModelT<S>::token_wise_forward(const EncodedDocument& doc,
                                                       std::vector<TensorT<S>>* states) const {
  if (!embeddings_ || !positions_) {
    throw ContractViolation("model: forward from a document needs attached embeddings");
  }
  TensorT<S> x_matrix = document_matrix(*embeddings_, *positions_, doc);
  return token_wise_forward_from_matrix(x_matrix, states);
}

template <class S>
TensorT<S> ContextualizerModelT<S>::token_wise_step_per_token(const TensorT<S>& x_matrix,
                                                              std::size_t k) const {
  if (TapeT<S>::current() != nullptr) {
    throw ContractViolation("model: the per-token route is forward-only");
  }
  const auto& st = step(k);
  const std::size_t n = x_matrix.dim(0);
  const std::size_t m = dims_.model_dim;
  TensorT<S> updated = TensorT<S>::zeros({n, m});
  for (std::size_t t = 0; t < n; ++t) {
    TensorT<S> attender = row(x_matrix, t);
    TensorT<S> scores = TensorT<S>::zeros({n, m});
    for (std::size_t i = 0; i < n; ++i) {
      TensorT<S> cw = candidate_weights(st, row(x_matrix, i), attender);
      for (std::size_t j = 0; j < m; ++j) scores.at(i, j) = cw.at(j);
    }
    TensorT<S> weights = softmax_over_tokens(scores);
    TensorT<S> next = weighted_sum_rows(weights, x_matrix);
    for (std::size_t j = 0; j < m; ++j) updated.at(t, j) = next.at(j);
  }
  return updated;
}

template <class S>
void ContextualizerModelT<S>::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open " + path.string() + " for writing");
  put_bytes(out, kMagic, 4);
  out.put(static_cast<char>(kVersion));
  unsigned flags = 0;
  if (dims_.recurrent) flags |= kFlagRecurrent;
  flags |= encode_context(dims_.default_context) << kFlagContextShift;
  if (embeddings_) {
    flags |= kFlagHasEmbeddings;
    if (embeddings_->trainable) flags |= kFlagTrainableEmbeddings;
  }
  out.put(static_cast<char>(flags));
  put_u32(out, static_cast<std::uint32_t>(dims_.model_dim));
  put_u32(out, static_cast<std::uint32_t>(dims_.rank));
  put_u32(out, static_cast<std::uint32_t>(dims_.steps));
  put_u32(out, static_cast<std::uint32_t>(embeddings_ ? embeddings_->rows() : 0));
  put_u32(out, static_cast<std::uint32_t>(embeddings_ ? embeddings_->cols() : 0));
  put_u32(out, static_cast<std::uint32_t>(positions_ ? positions_->dimension() : 0));
  put_u64(out, embeddings_ ? embeddings_->seed : 0);
  const std::vector<double> flat = parameter_values();
  put_u64(out, flat.size());
  for (double v : flat) put_f64(out, v);
  if (!out) throw IoError("checkpoint: write failed for " + path.string());
}

template <class S>
ContextualizerModelT<S> ContextualizerModelT<S>::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path.string());
  char magic[4];
  take_bytes(in, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic in " + path.string());
  }
  char version_byte = 0;
  take_bytes(in, &version_byte, 1, "version");
  if (static_cast<unsigned char>(version_byte) != kVersion) {
    throw FormatError("checkpoint: unsupported version in " + path.string());
  }
  char flags_byte = 0;
  take_bytes(in, &flags_byte, 1, "flags");
  const auto flags = static_cast<unsigned>(static_cast<unsigned char>(flags_byte));
  ModelDims dims;
  dims.recurrent = (flags & kFlagRecurrent) != 0;
  dims.default_context = decode_context((flags & kFlagContextMask) >> kFlagContextShift);
  dims.model_dim = take_u32(in, "model_dim");
  dims.rank = take_u32(in, "rank");
  dims.steps = take_u32(in, "steps");
  const std::uint32_t emb_rows = take_u32(in, "embedding rows");
  const std::uint32_t emb_cols = take_u32(in, "embedding cols");
  const std::uint32_t pos_dim = take_u32(in, "position dim");
  const std::uint64_t emb_seed = take_u64(in, "embedding seed");
  Rng init_rng(0);
  ContextualizerModelT model(dims, init_rng);
  if ((flags & kFlagHasEmbeddings) != 0) {
    const bool trainable = (flags & kFlagTrainableEmbeddings) != 0;
    model.attach_embeddings(EmbeddingTableT<S>::random(emb_rows, emb_cols, emb_seed, trainable),
                            PositionEncoder(pos_dim));
  }
  const std::uint64_t count = take_u64(in, "parameter count");
  if (count != model.parameter_count()) {
    throw FormatError("checkpoint: parameter count mismatch in " + path.string() +
                      " (header says " + std::to_string(count) + ", model needs " +
                      std::to_string(model.parameter_count()) + ")");
  }
  std::vector<double> flat(count);
  for (std::uint64_t i = 0; i < count; ++i) flat[i] = take_f64(in, "parameters");
  model.set_parameter_values(flat);
  return model;
}

std::uint64_t step_mac_count(std::size_t n, std::size_t m, std::size_t u, StepVariant variant) {
  const std::uint64_t per_pair = 3ull * u * m + u;
  const std::uint64_t pairs = variant == StepVariant::kContextVector
                                  ? static_cast<std::uint64_t>(n)
                                  : static_cast<std::uint64_t>(n) * n;
  return pairs * per_pair + pairs * m;
}

template TensorT<float> candidate_weights(const AttentionStepT<float>&, const TensorT<float>&,
                                          const TensorT<float>&);
template TensorT<double> candidate_weights(const AttentionStepT<double>&, const TensorT<double>&,
                                           const TensorT<double>&);
template class ContextualizerModelT<float>;
template class ContextualizerModelT<double>;

}  // namespace ctxenc
