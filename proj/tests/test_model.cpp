#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <vector>

#include "ctxenc/diagnostics.hpp"
#include "ctxenc/errors.hpp"
#include "ctxenc/model.hpp"
#include "ctxenc/ops.hpp"
#include "ctxenc/rng.hpp"

using namespace ctxenc;

namespace {

ContextualizerModel make_model(std::size_t m, std::size_t u, std::size_t steps, bool recurrent,
                               DefaultContext ctx, std::uint64_t seed) {
  ModelDims dims;
  dims.model_dim = m;
  dims.rank = u;
  dims.steps = steps;
  dims.recurrent = recurrent;
  dims.default_context = ctx;
  Rng rng(seed);
  return ContextualizerModel(dims, rng);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.numel() == b.numel());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  }
  return worst;
}

}  // namespace

TEST_CASE("enum names round-trip") {
  CHECK(parse_default_context("ones") == DefaultContext::kOnes);
  CHECK(parse_default_context("learned") == DefaultContext::kLearned);
  CHECK(parse_default_context("random") == DefaultContext::kRandomPerDocument);
  CHECK(parse_default_context("random-per-document") == DefaultContext::kRandomPerDocument);
  CHECK(to_string(DefaultContext::kRandomPerDocument) == "random");
  CHECK(parse_step_variant("context-vector") == StepVariant::kContextVector);
  CHECK(parse_step_variant("token-wise") == StepVariant::kTokenWise);
  CHECK_THROWS_AS(parse_default_context("bogus"), InputError);
  CHECK_THROWS_AS(parse_step_variant("bogus"), InputError);
}

TEST_CASE("candidate weights match a worked example") {
  // u = 1, m = 2, all-ones parameters: Ux = 3, Vc = 7, W(Ux * Vc) = (21, 21)
  AttentionStep step;
  step.U = Tensor::ones({1, 2});
  step.V = Tensor::ones({1, 2});
  step.W = Tensor::ones({2, 1});
  Tensor x = Tensor::from_values({2}, {1, 2});
  Tensor c = Tensor::from_values({2}, {3, 4});
  Tensor w = candidate_weights(step, x, c);
  CHECK(w.at(0) == doctest::Approx(21.0));
  CHECK(w.at(1) == doctest::Approx(21.0));

  const auto dense = dense_candidate_weights(step, {1, 2}, {3, 4});
  CHECK(dense[0] == doctest::Approx(21.0));
  CHECK(dense[1] == doctest::Approx(21.0));
}

TEST_CASE("candidate weight matrix equals per-row candidate weights") {
  ContextualizerModel model = make_model(5, 3, 1, true, DefaultContext::kOnes, 7);
  Rng rng(11);
  Tensor x = Tensor::uniform({4, 5}, rng, -1.0, 1.0);
  Tensor c = Tensor::uniform({5}, rng, -1.0, 1.0);
  Tensor matrix = model.candidate_weight_matrix(x, c, 0);
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor per_row = candidate_weights(model.step(0), row(x, i), c);
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(matrix.at(i, j) == doctest::Approx(per_row.at(j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("a single token absorbs all attention") {
  ContextualizerModel model = make_model(4, 2, 1, true, DefaultContext::kOnes, 3);
  Rng rng(5);
  Tensor x = Tensor::uniform({1, 4}, rng, -1.0, 1.0);
  auto [c_next, weights] = model.contextualize_step(x, Tensor::ones({4}), 0);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(weights.at(0, j) == doctest::Approx(1.0));
    CHECK(c_next.at(j) == doctest::Approx(x.at(0, j)));
  }
}

TEST_CASE("identical tokens share attention equally") {
  ContextualizerModel model = make_model(3, 2, 1, true, DefaultContext::kOnes, 9);
  Rng rng(13);
  Tensor token = Tensor::uniform({3}, rng, -1.0, 1.0);
  Tensor x = stack_rows(std::vector<Tensor>{token, token});
  auto [c_next, weights] = model.contextualize_step(x, Tensor::ones({3}), 0);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(weights.at(0, j) == doctest::Approx(0.5));
    CHECK(weights.at(1, j) == doctest::Approx(0.5));
    CHECK(c_next.at(j) == doctest::Approx(token.at(j)));
  }
}

TEST_CASE("the per-token route reproduces the fused step") {
  ContextualizerModel model = make_model(6, 4, 1, true, DefaultContext::kOnes, 21);
  Rng rng(22);
  Tensor x = Tensor::uniform({5, 6}, rng, -1.0, 1.0);
  Tensor c = Tensor::uniform({6}, rng, -1.0, 1.0);
  auto [c_fused, w_fused] = model.contextualize_step(x, c, 0);
  auto [c_ref, w_ref] = model.contextualize_step_per_token(x, c, 0);
  CHECK(max_abs_diff(c_fused, c_ref) < 1e-12);
  CHECK(max_abs_diff(w_fused, w_ref) < 1e-12);
}

TEST_CASE("the per-token route rejects an active tape") {
  ContextualizerModel model = make_model(3, 2, 1, true, DefaultContext::kOnes, 2);
  Rng rng(2);
  Tensor x = Tensor::uniform({2, 3}, rng, -1.0, 1.0);
  Tape tape;
  CHECK_THROWS_AS(model.contextualize_step_per_token(x, Tensor::ones({3}), 0),
                  ContractViolation);
  CHECK_THROWS_AS(model.token_wise_step_per_token(x, 0), ContractViolation);
}

TEST_CASE("token-wise per-token route reproduces the fused step") {
  ContextualizerModel model = make_model(4, 3, 2, true, DefaultContext::kOnes, 31);
  Rng rng(32);
  Tensor x = Tensor::uniform({4, 4}, rng, -1.0, 1.0);
  std::vector<Tensor> states;
  (void)model.token_wise_forward_from_matrix(x, &states);
  REQUIRE(states.size() == 3);  // input plus one matrix per step
  Tensor step0 = model.token_wise_step_per_token(x, 0);
  CHECK(max_abs_diff(states[1], step0) < 1e-12);
  Tensor step1 = model.token_wise_step_per_token(states[1], 1);
  CHECK(max_abs_diff(states[2], step1) < 1e-12);
}

TEST_CASE("forward trace exposes contexts and weights per step") {
  ContextualizerModel model = make_model(4, 2, 3, true, DefaultContext::kOnes, 17);
  Rng rng(18);
  Tensor x = Tensor::uniform({6, 4}, rng, -1.0, 1.0);
  ContextTrace trace;
  (void)model.forward_from_matrix(x, model.initial_context(nullptr), &trace);
  REQUIRE(trace.contexts.size() == 4);
  REQUIRE(trace.weights.size() == 3);
  for (std::size_t j = 0; j < 4; ++j) CHECK(trace.contexts[0].at(j) == 1.0);
  for (const Tensor& w : trace.weights) {
    for (std::size_t j = 0; j < 4; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < 6; ++i) col += w.at(i, j);
      CHECK(col == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("zero adjustment steps classify the default context directly") {
  ContextualizerModel model = make_model(3, 2, 0, true, DefaultContext::kOnes, 4);
  model.classifier_weight() = Tensor::from_values({3}, {1, 2, 3});
  model.classifier_bias() = Tensor::from_values({1}, {0.5});
  Rng rng(6);
  Tensor x = Tensor::uniform({5, 3}, rng, -1.0, 1.0);
  Tensor logit = model.forward_from_matrix(x, model.initial_context(nullptr));
  CHECK(logit.item() == doctest::Approx(6.5));  // <w, ones> + b
}

TEST_CASE("initial context strategies") {
  ContextualizerModel ones = make_model(4, 2, 1, true, DefaultContext::kOnes, 1);
  for (std::size_t j = 0; j < 4; ++j) CHECK(ones.initial_context(nullptr).at(j) == 1.0);

  ContextualizerModel learned = make_model(4, 2, 1, true, DefaultContext::kLearned, 1);
  Tensor c = learned.initial_context(nullptr);
  CHECK(c.same_storage(learned.learned_context()));
  for (std::size_t j = 0; j < 4; ++j) CHECK(c.at(j) == 1.0);  // initialized at ones

  ContextualizerModel random = make_model(4, 2, 1, true, DefaultContext::kRandomPerDocument, 1);
  CHECK_THROWS_AS(random.initial_context(nullptr), ContractViolation);
  Rng r1(3), r2(3);
  Tensor draw1 = random.initial_context(&r1);
  Tensor draw2 = random.initial_context(&r2);
  CHECK(max_abs_diff(draw1, draw2) == 0.0);
  Tensor draw3 = random.initial_context(&r1);  // stream advances
  CHECK(max_abs_diff(draw1, draw3) > 0.0);
}

TEST_CASE("recurrent models share one step") {
  ContextualizerModel recurrent = make_model(5, 2, 4, true, DefaultContext::kOnes, 8);
  CHECK(recurrent.stored_step_count() == 1);
  CHECK(recurrent.step(0).U.same_storage(recurrent.step(3).U));

  ContextualizerModel regular = make_model(5, 2, 4, false, DefaultContext::kOnes, 8);
  CHECK(regular.stored_step_count() == 4);
  CHECK_FALSE(regular.step(0).U.same_storage(regular.step(3).U));
  CHECK_THROWS_AS(regular.step(4), ContractViolation);
}

TEST_CASE("parameter counts follow the architecture") {
  // recurrent: 3 u m (attention) + m (classifier weight) + 1 (bias)
  const std::size_t m = 520, u = 100;
  for (std::size_t k : {1UL, 5UL, 10UL, 20UL}) {
    ContextualizerModel model = make_model(m, u, k, true, DefaultContext::kOnes, 1);
    CHECK(model.parameter_count() == 3 * u * m + m + 1);
  }
  ContextualizerModel learned = make_model(m, u, 1, true, DefaultContext::kLearned, 1);
  CHECK(learned.parameter_count() == 3 * u * m + m + 1 + m);

  ContextualizerModel regular = make_model(m, u, 20, false, DefaultContext::kOnes, 1);
  CHECK(regular.parameter_count() == 20 * 3 * u * m + m + 1);

  ContextualizerModel with_emb = make_model(12, 2, 1, true, DefaultContext::kOnes, 1);
  with_emb.attach_embeddings(EmbeddingTable::random(30, 8, 5, true), PositionEncoder(4));
  CHECK(with_emb.parameter_count() == 3 * 2 * 12 + 12 + 1 + 30 * 8);

  ContextualizerModel frozen_emb = make_model(12, 2, 1, true, DefaultContext::kOnes, 1);
  frozen_emb.attach_embeddings(EmbeddingTable::random(30, 8, 5, false), PositionEncoder(4));
  CHECK(frozen_emb.parameter_count() == 3 * 2 * 12 + 12 + 1);
}

TEST_CASE("parameter vector round-trips") {
  ContextualizerModel model = make_model(6, 3, 2, false, DefaultContext::kLearned, 44);
  std::vector<double> flat = model.parameter_values();
  CHECK(flat.size() == model.parameter_count());
  std::vector<double> doubled = flat;
  for (double& v : doubled) v *= 2.0;
  model.set_parameter_values(doubled);
  CHECK(model.parameter_values() == doubled);
  CHECK_THROWS_AS(model.set_parameter_values(std::vector<double>(flat.size() + 1, 0.0)),
                  DimensionError);
}

TEST_CASE("embedding widths must add up to the model width") {
  ContextualizerModel model = make_model(10, 2, 1, true, DefaultContext::kOnes, 1);
  CHECK_THROWS_AS(
      model.attach_embeddings(EmbeddingTable::random(5, 9, 1, false), PositionEncoder(4)),
      DimensionError);
  CHECK_THROWS_AS(model.embeddings(), ContractViolation);
}

TEST_CASE("document forward requires embeddings and consumes the context rng") {
  ContextualizerModel model = make_model(10, 3, 2, true, DefaultContext::kRandomPerDocument, 51);
  EncodedDocument doc;
  doc.token_ids = {0, 2, 1};
  doc.label = 1;
  CHECK_THROWS_AS(model.forward(doc), ContractViolation);

  model.attach_embeddings(EmbeddingTable::random(4, 6, 9, false), PositionEncoder(4));
  Rng r1(77), r2(77);
  Tensor l1 = model.forward(doc, &r1);
  Tensor l2 = model.forward(doc, &r2);
  CHECK(l1.item() == l2.item());
}

TEST_CASE("recurrent depth changes outputs but not parameters") {
  ContextualizerModel k1 = make_model(8, 3, 1, true, DefaultContext::kOnes, 60);
  ContextualizerModel k5 = make_model(8, 3, 5, true, DefaultContext::kOnes, 60);
  CHECK(k1.parameter_values() == k5.parameter_values());
  // classifier starts at zero, so give both the same nonzero head
  k1.classifier_weight() = Tensor::from_values({8}, {1, -1, 2, -2, 1, 0, 1, -1});
  k5.classifier_weight() = Tensor::from_values({8}, {1, -1, 2, -2, 1, 0, 1, -1});
  Rng rng(61);
  Tensor x = Tensor::uniform({5, 8}, rng, -1.0, 1.0);
  Tensor c0 = Tensor::ones({8});
  CHECK(k1.forward_from_matrix(x, c0).item() != k5.forward_from_matrix(x, c0).item());
}

TEST_CASE("checkpoints restore parameters, embeddings, and outputs") {
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "ctxenc_model_roundtrip.bin";

  ContextualizerModel model = make_model(10, 3, 2, false, DefaultContext::kLearned, 70);
  model.attach_embeddings(EmbeddingTable::random(9, 6, 71, true), PositionEncoder(4));
  Rng tweak(72);
  std::vector<double> values = model.parameter_values();
  for (double& v : values) v += tweak.uniform(-0.1, 0.1);
  model.set_parameter_values(values);

  EncodedDocument doc;
  doc.token_ids = {3, 1, 4, 1};
  model.save(path);
  ContextualizerModel loaded = ContextualizerModel::load(path);
  CHECK(loaded.dims().steps == 2);
  CHECK_FALSE(loaded.dims().recurrent);
  CHECK(loaded.dims().default_context == DefaultContext::kLearned);
  CHECK(loaded.parameter_values() == model.parameter_values());
  CHECK(loaded.forward(doc).item() == model.forward(doc).item());
  std::filesystem::remove(path);
}

TEST_CASE("frozen-embedding checkpoints regenerate the table from its header") {
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "ctxenc_model_frozen.bin";
  ContextualizerModel model = make_model(8, 2, 1, true, DefaultContext::kOnes, 80);
  model.attach_embeddings(EmbeddingTable::random(12, 5, 81, false), PositionEncoder(3));
  model.save(path);
  ContextualizerModel loaded = ContextualizerModel::load(path);
  CHECK(loaded.embeddings().seed == 81);
  CHECK_FALSE(loaded.embeddings().trainable);
  CHECK(max_abs_diff(loaded.embeddings().vectors, model.embeddings().vectors) == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("step MAC counts scale linearly and quadratically") {
  const std::size_t m = 16, u = 4;
  const std::uint64_t per_pair = 3 * u * m + u;
  CHECK(step_mac_count(8, m, u, StepVariant::kContextVector) == 8 * per_pair + 8 * m);
  CHECK(step_mac_count(8, m, u, StepVariant::kTokenWise) == 64 * per_pair + 64 * m);
  CHECK(step_mac_count(16, m, u, StepVariant::kContextVector) ==
        2 * step_mac_count(8, m, u, StepVariant::kContextVector));
  CHECK(step_mac_count(16, m, u, StepVariant::kTokenWise) ==
        4 * step_mac_count(8, m, u, StepVariant::kTokenWise));
}

TEST_CASE("measured MACs equal the closed form") {
  CHECK(measure_step_macs(6, 10, 3, StepVariant::kContextVector, 5) ==
        step_mac_count(6, 10, 3, StepVariant::kContextVector));
  CHECK(measure_step_macs(6, 10, 3, StepVariant::kTokenWise, 5) ==
        step_mac_count(6, 10, 3, StepVariant::kTokenWise));
}
