#include "ctxenc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "ctxenc/errors.hpp"
#include "ctxenc/macs.hpp"
#include "ctxenc/ops.hpp"

namespace ctxenc {

namespace {

constexpr double kFdStep = 1e-5;

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

/// Compares reverse-mode gradients of a scalar-valued function against
/// central finite differences over every entry of every input.
GradientCheckResult check_gradients(std::string name, const std::vector<Tensor>& inputs,
                                    const std::function<Tensor()>& loss_fn) {
  std::vector<std::vector<double>> autodiff;
  {
    for (Tensor t : inputs) t.zero_grad();
    Tape tape;
    Tensor loss = loss_fn();
    tape.backward(loss);
    for (const auto& t : inputs) {
      autodiff.emplace_back(t.grad().begin(), t.grad().end());
    }
  }
  GradientCheckResult result{std::move(name), 0.0};
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    Tensor t = inputs[p];
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double original = t.at(i);
      t.at(i) = original + kFdStep;
      const double up = loss_fn().item();
      t.at(i) = original - kFdStep;
      const double down = loss_fn().item();
      t.at(i) = original;
      const double numeric = (up - down) / (2.0 * kFdStep);
      result.max_rel_error =
          std::max(result.max_rel_error, relative_error(autodiff[p][i], numeric));
    }
  }
  return result;
}

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true) {
  return Tensor::uniform(std::move(shape), rng, -1.0, 1.0, requires_grad);
}

AttentionStep random_step(std::size_t u, std::size_t m, Rng& rng) {
  AttentionStep step;
  step.U = random_tensor({u, m}, rng);
  step.V = random_tensor({u, m}, rng);
  step.W = random_tensor({m, u}, rng);
  return step;
}

ContextualizerModel tiny_model(std::size_t m, std::size_t u, std::size_t k, bool recurrent,
                               DefaultContext strategy, Rng& rng) {
  ModelDims dims;
  dims.model_dim = m;
  dims.rank = u;
  dims.steps = k;
  dims.recurrent = recurrent;
  dims.default_context = strategy;
  return ContextualizerModel(dims, rng);
}

}  // namespace

std::vector<GradientCheckResult> run_gradient_checks(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradientCheckResult> results;

  {
    Tensor a = random_tensor({4, 3}, rng), b = random_tensor({4, 3}, rng);
    Tensor r = random_tensor({4, 3}, rng, false);
    results.push_back(check_gradients("add", {a, b}, [=] { return dot(add(a, b), r); }));
    results.push_back(check_gradients("sub", {a, b}, [=] { return dot(sub(a, b), r); }));
    results.push_back(
        check_gradients("hadamard", {a, b}, [=] { return dot(hadamard(a, b), r); }));
    results.push_back(
        check_gradients("scale", {a}, [=] { return dot(scale(a, -1.7), r); }));
    results.push_back(check_gradients("sum", {a}, [=] { return sum(a); }));
    results.push_back(check_gradients("dot", {a, b}, [=] { return dot(a, b); }));
  }
  {
    Tensor m = random_tensor({3, 5}, rng), v = random_tensor({5}, rng);
    Tensor r = random_tensor({3}, rng, false);
    results.push_back(check_gradients("matvec", {m, v}, [=] { return dot(matvec(m, v), r); }));
  }
  {
    Tensor a = random_tensor({4, 5}, rng), b = random_tensor({3, 5}, rng);
    Tensor r = random_tensor({4, 3}, rng, false);
    results.push_back(
        check_gradients("matmul_nt", {a, b}, [=] { return dot(matmul_nt(a, b), r); }));
  }
  {
    Tensor a = random_tensor({4, 3}, rng), v = random_tensor({3}, rng);
    Tensor r = random_tensor({4, 3}, rng, false);
    results.push_back(check_gradients("row_broadcast_mul", {a, v},
                                      [=] { return dot(row_broadcast_mul(a, v), r); }));
  }
  {
    Tensor a = random_tensor({5, 4}, rng);
    Tensor r = random_tensor({4}, rng, false);
    results.push_back(check_gradients("row", {a}, [=] { return dot(row(a, 2), r); }));
    results.push_back(
        check_gradients("mean_rows", {a}, [=] { return dot(mean_rows(a), r); }));
  }
  {
    Tensor a = random_tensor({4, 3}, rng);
    Tensor r = random_tensor({4, 3}, rng, false);
    results.push_back(check_gradients("softmax_over_tokens", {a},
                                      [=] { return dot(softmax_over_tokens(a), r); }));
  }
  {
    Tensor w = random_tensor({4, 3}, rng), x = random_tensor({4, 3}, rng);
    Tensor r = random_tensor({3}, rng, false);
    results.push_back(check_gradients("weighted_sum_rows", {w, x},
                                      [=] { return dot(weighted_sum_rows(w, x), r); }));
  }
  {
    Tensor a = random_tensor({3}, rng), b = random_tensor({3}, rng), c = random_tensor({3}, rng);
    Tensor r = random_tensor({3, 3}, rng, false);
    results.push_back(check_gradients("stack_rows", {a, b, c}, [=] {
      return dot(stack_rows(std::vector<Tensor>{a, b, c}), r);
    }));
  }
  {
    Tensor w = random_tensor({6}, rng), x = random_tensor({6}, rng);
    Tensor b = random_tensor({1}, rng);
    results.push_back(
        check_gradients("affine", {w, x, b}, [=] { return affine(w, x, b); }));
    results.push_back(check_gradients("sigmoid", {x}, [=] {
      Tensor r = Tensor::ones({6});
      return dot(sigmoid(x), r);
    }));
  }
  {
    Tensor logit = random_tensor({1}, rng);
    results.push_back(check_gradients("bce_with_logits(label=0)", {logit},
                                      [=] { return bce_with_logits(logit, 0); }));
    results.push_back(check_gradients("bce_with_logits(label=1)", {logit},
                                      [=] { return bce_with_logits(logit, 1); }));
  }
  {
    Tensor table = random_tensor({7, 4}, rng);
    Tensor positions = random_tensor({3, 2}, rng, false);
    const std::vector<std::size_t> ids = {2, 6, 2};
    Tensor r = random_tensor({3, 6}, rng, false);
    results.push_back(check_gradients("embed_concat", {table}, [=] {
      return dot(embed_concat(table, ids, positions), r);
    }));
  }

  // End-to-end checks on tiny models: loss over all trainable tensors and
  // the input matrix.
  const auto model_check = [&](const std::string& name, bool recurrent,
                               DefaultContext strategy) {
    Rng model_rng(derive_seed(seed, {hash_tag(name)}));
    ContextualizerModel model = tiny_model(6, 2, 2, recurrent, strategy, model_rng);
    Tensor x = random_tensor({3, 6}, model_rng);
    Tensor c0_random = random_tensor({6}, model_rng, false);
    std::vector<Tensor> inputs = model.parameters();
    inputs.push_back(x);
    results.push_back(check_gradients(name, inputs, [=] {
      const Tensor c0 = strategy == DefaultContext::kLearned
                            ? Tensor(model.learned_context())
                            : c0_random;
      return bce_with_logits(model.forward_from_matrix(x, c0), 1);
    }));
  };
  model_check("model-recurrent-k2", true, DefaultContext::kOnes);
  model_check("model-non-recurrent-k2", false, DefaultContext::kOnes);
  model_check("model-learned-context", true, DefaultContext::kLearned);

  {
    Rng model_rng(derive_seed(seed, {hash_tag("model-trainable-embeddings")}));
    ContextualizerModel model =
        tiny_model(6, 2, 2, true, DefaultContext::kOnes, model_rng);
    model.attach_embeddings(EmbeddingTable::random(5, 4, 11, true), PositionEncoder(2));
    EncodedDocument doc;
    doc.token_ids = {1, 4, 1};
    doc.label = 0;
    const std::vector<Tensor> inputs = model.parameters();
    results.push_back(check_gradients("model-trainable-embeddings", inputs, [=] {
      return bce_with_logits(model.forward(doc), 0);
    }));
  }
  {
    Rng model_rng(derive_seed(seed, {hash_tag("model-token-wise")}));
    ContextualizerModel model = tiny_model(6, 2, 2, true, DefaultContext::kOnes, model_rng);
    Tensor x = random_tensor({3, 6}, model_rng);
    std::vector<Tensor> inputs = model.parameters();
    inputs.push_back(x);
    results.push_back(check_gradients("model-token-wise", inputs, [=] {
      return bce_with_logits(model.token_wise_forward_from_matrix(x), 1);
    }));
  }
  return results;
}

double max_gradient_check_error(const std::vector<GradientCheckResult>& results) {
  double worst = 0.0;
  for (const auto& r : results) worst = std::max(worst, r.max_rel_error);
  return worst;
}

std::vector<double> dense_candidate_weights(const AttentionStep& step,
                                            const std::vector<double>& x,
                                            const std::vector<double>& c) {
  const std::size_t u = step.U.dim(0);
  const std::size_t m = step.U.dim(1);
  if (x.size() != m || c.size() != m) {
    throw DimensionError("dense_candidate_weights: vectors must have length " +
                         std::to_string(m));
  }
  // T[j][a][b] = sum_r W(j,r) U(r,a) V(r,b); out[j] = sum_ab T[j][a][b] x[a] c[b].
  std::vector<double> out(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    double acc = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < m; ++b) {
        double t_jab = 0.0;
        for (std::size_t r = 0; r < u; ++r) {
          t_jab += step.W.at(j, r) * step.U.at(r, a) * step.V.at(r, b);
        }
        acc += t_jab * x[a] * c[b];
      }
    }
    out[j] = acc;
  }
  return out;
}

double attention_factorization_max_error(std::size_t instances, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t u = 1 + rng.index(8);
    const std::size_t m = 1 + rng.index(8);
    AttentionStep step = random_step(u, m, rng);
    Tensor x = random_tensor({m}, rng, false);
    Tensor c = random_tensor({m}, rng, false);
    Tensor factored = candidate_weights(step, x, c);
    const std::vector<double> dense = dense_candidate_weights(
        step, std::vector<double>(x.values().begin(), x.values().end()),
        std::vector<double>(c.values().begin(), c.values().end()));
    for (std::size_t j = 0; j < m; ++j) {
      worst = std::max(worst, std::abs(factored.at(j) - dense[j]));
    }
  }
  return worst;
}

std::uint64_t measure_step_macs(std::size_t n, std::size_t m, std::size_t u,
                                StepVariant variant, std::uint64_t seed) {
  Rng rng(seed);
  ContextualizerModel model = tiny_model(m, u, 1, true, DefaultContext::kOnes, rng);
  Tensor x = random_tensor({n, m}, rng, false);
  Tensor c = random_tensor({m}, rng, false);
  macs::CountScope scope;
  if (variant == StepVariant::kContextVector) {
    model.contextualize_step_per_token(x, c, 0);
  } else {
    model.token_wise_step_per_token(x, 0);
  }
  return scope.count();
}

std::vector<ComplexityProbeRow> run_complexity_probe(const std::vector<std::size_t>& lengths,
                                                     std::size_t m, std::size_t u,
                                                     std::uint64_t seed) {
  std::vector<ComplexityProbeRow> rows;
  rows.reserve(lengths.size());
  for (std::size_t n : lengths) {
    ComplexityProbeRow row;
    row.n = n;
    row.context_measured = measure_step_macs(n, m, u, StepVariant::kContextVector, seed);
    row.context_formula = step_mac_count(n, m, u, StepVariant::kContextVector);
    row.token_wise_measured = measure_step_macs(n, m, u, StepVariant::kTokenWise, seed);
    row.token_wise_formula = step_mac_count(n, m, u, StepVariant::kTokenWise);
    rows.push_back(row);
  }
  return rows;
}

double fit_log_log_slope(const std::vector<std::size_t>& lengths,
                         const std::vector<std::uint64_t>& counts) {
  if (lengths.size() != counts.size() || lengths.size() < 2) {
    throw InputError("fit_log_log_slope: need at least two matching points");
  }
  const auto n = static_cast<double>(lengths.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    const double lx = std::log(static_cast<double>(lengths[i]));
    const double ly = std::log(static_cast<double>(counts[i]));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-12) throw NumericError("fit_log_log_slope: degenerate inputs");
  return (n * sxy - sx * sy) / denom;
}

Dataset make_marker_dataset(std::size_t documents, std::uint64_t seed) {
  if (documents < 20 || documents % 2 != 0) {
    throw InputError("make_marker_dataset: need an even count of at least 20 documents");
  }
  static const std::vector<std::string> kFiller = {"alpha", "bravo", "carol", "delta",
                                                   "echo",  "fox",   "golf",  "hotel"};
  const std::string marker = "pipit";
  Rng rng(seed);
  Dataset ds;
  ds.name = "MARKER";
  ds.pretokenized = true;
  for (std::size_t i = 0; i < documents; ++i) {
    const int label = i % 2 == 0 ? 0 : 1;
    const std::size_t length = 6 + rng.index(7);
    std::vector<std::string> tokens;
    tokens.reserve(length + 1);
    for (std::size_t t = 0; t < length; ++t) tokens.push_back(kFiller[rng.index(kFiller.size())]);
    if (label == 1) {
      tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(rng.index(tokens.size() + 1)),
                    marker);
    }
    std::string text;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (t > 0) text.push_back(' ');
      text += tokens[t];
    }
    Document doc;
    doc.text = std::move(text);
    doc.label = label;
    doc.id = i;
    ds.documents.push_back(std::move(doc));
    ++ds.class_counts[static_cast<std::size_t>(label)];
  }
  return ds;
}

}  // namespace ctxenc
