#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "ctxenc/errors.hpp"
#include "ctxenc/ops.hpp"
#include "ctxenc/rng.hpp"
#include "ctxenc/tensor.hpp"

using namespace ctxenc;

TEST_CASE("factories produce the expected shapes and values") {
  Tensor z = Tensor::zeros({2, 3});
  CHECK(z.rank() == 2);
  CHECK(z.dim(0) == 2);
  CHECK(z.dim(1) == 3);
  CHECK(z.numel() == 6);
  for (double v : z.values()) CHECK(v == 0.0);

  Tensor f = Tensor::full({4}, 2.5);
  for (double v : f.values()) CHECK(v == 2.5);

  Tensor o = Tensor::ones({3});
  for (double v : o.values()) CHECK(v == 1.0);

  Tensor s = Tensor::scalar(7.0);
  CHECK(s.numel() == 1);
  CHECK(s.item() == 7.0);

  Tensor m = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  CHECK(m.at(0, 0) == 1.0);
  CHECK(m.at(0, 1) == 2.0);
  CHECK(m.at(1, 0) == 3.0);
  CHECK(m.at(1, 1) == 4.0);
}

TEST_CASE("item rejects non-scalars and from_values rejects bad counts") {
  Tensor m = Tensor::zeros({2, 2});
  CHECK_THROWS_AS((void)m.item(), ContractViolation);
  CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1, 2, 3}), DimensionError);
}

TEST_CASE("copies share storage") {
  Tensor a = Tensor::zeros({3});
  Tensor b = a;
  b.at(1) = 5.0;
  CHECK(a.at(1) == 5.0);
  CHECK(a.same_storage(b));
  CHECK_FALSE(a.same_storage(Tensor::zeros({3})));
}

TEST_CASE("uniform draws are seed-deterministic and shared across scalar types") {
  Rng r1(42), r2(42), r3(42);
  Tensor a = Tensor::uniform({4, 5}, r1, -1.0, 1.0);
  Tensor b = Tensor::uniform({4, 5}, r2, -1.0, 1.0);
  TensorT<float> c = TensorT<float>::uniform({4, 5}, r3, -1.0, 1.0);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    CHECK(a.values()[i] == b.values()[i]);
    CHECK(static_cast<float>(a.values()[i]) == c.values()[i]);
    CHECK(a.values()[i] >= -1.0);
    CHECK(a.values()[i] < 1.0);
  }
}

TEST_CASE("elementwise ops compute the expected values") {
  Tape tape;
  Tensor a = Tensor::from_values({3}, {1, 2, 3});
  Tensor b = Tensor::from_values({3}, {10, 20, 30});
  CHECK(add(a, b).at(2) == 33.0);
  CHECK(sub(b, a).at(0) == 9.0);
  CHECK(hadamard(a, b).at(1) == 40.0);
  CHECK(scale(a, -2.0).at(2) == -6.0);
  CHECK(sum(a).item() == 6.0);
  CHECK(dot(a, b).item() == 140.0);
  CHECK_THROWS_AS(add(a, Tensor::zeros({4})), DimensionError);
}

TEST_CASE("matrix ops compute the expected values") {
  Tensor m = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor v = Tensor::from_values({3}, {1, 0, -1});
  Tensor mv = matvec(m, v);
  CHECK(mv.at(0) == -2.0);
  CHECK(mv.at(1) == -2.0);

  // A [2x3] times B^T with B [2x3]: out(i,j) = <A row i, B row j>
  Tensor prod = matmul_nt(m, m);
  CHECK(prod.at(0, 0) == 14.0);
  CHECK(prod.at(0, 1) == 32.0);
  CHECK(prod.at(1, 1) == 77.0);

  Tensor scaled = row_broadcast_mul(m, v);
  CHECK(scaled.at(0, 0) == 1.0);
  CHECK(scaled.at(0, 2) == -3.0);
  CHECK(scaled.at(1, 1) == 0.0);

  Tensor r = row(m, 1);
  CHECK(r.at(0) == 4.0);
  CHECK(r.at(2) == 6.0);
  CHECK_THROWS_AS(row(m, 2), DimensionError);

  Tensor mean = mean_rows(m);
  CHECK(mean.at(0) == doctest::Approx(2.5));
  CHECK(mean.at(2) == doctest::Approx(4.5));

  Tensor stacked = stack_rows(std::vector<Tensor>{v, v});
  CHECK(stacked.dim(0) == 2);
  CHECK(stacked.at(1, 2) == -1.0);
}

TEST_CASE("softmax over tokens normalizes each column and ignores shifts") {
  Tensor a = Tensor::from_values({3, 2}, {1, -5, 2, 0, 3, 5});
  Tensor s = softmax_over_tokens(a);
  for (std::size_t j = 0; j < 2; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(s.at(i, j) > 0.0);
      col += s.at(i, j);
    }
    CHECK(col == doctest::Approx(1.0).epsilon(1e-12));
  }
  // shifting any column by a constant must not change the result
  Tensor shifted = Tensor::from_values({3, 2}, {101, 995, 102, 1000, 103, 1005});
  Tensor s2 = softmax_over_tokens(shifted);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s2.at(i, 0) == doctest::Approx(s.at(i, 0)).epsilon(1e-12));
    CHECK(s2.at(i, 1) == doctest::Approx(s.at(i, 1)).epsilon(1e-12));
  }
}

TEST_CASE("weighted_sum_rows contracts weights against rows per component") {
  Tensor w = Tensor::from_values({2, 2}, {0.25, 1.0, 0.75, 0.0});
  Tensor x = Tensor::from_values({2, 2}, {4, 10, 8, 20});
  Tensor out = weighted_sum_rows(w, x);
  CHECK(out.at(0) == doctest::Approx(0.25 * 4 + 0.75 * 8));
  CHECK(out.at(1) == doctest::Approx(1.0 * 10 + 0.0 * 20));
}

TEST_CASE("classifier head ops") {
  Tensor w = Tensor::from_values({3}, {1, -1, 2});
  Tensor x = Tensor::from_values({3}, {3, 1, 0.5});
  Tensor b = Tensor::from_values({1}, {0.25});
  Tensor logit = affine(w, x, b);
  CHECK(logit.item() == doctest::Approx(3.25));

  CHECK(sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5));
  CHECK(sigmoid(Tensor::scalar(100.0)).item() == doctest::Approx(1.0));

  // loss at logit 0 is log 2 for both labels; large-logit extremes are stable
  CHECK(bce_with_logits(Tensor::scalar(0.0), 0).item() == doctest::Approx(std::log(2.0)));
  CHECK(bce_with_logits(Tensor::scalar(0.0), 1).item() == doctest::Approx(std::log(2.0)));
  CHECK(bce_with_logits(Tensor::scalar(1000.0), 1).item() == doctest::Approx(0.0));
  CHECK(std::isfinite(bce_with_logits(Tensor::scalar(-1000.0), 1).item()));
  CHECK_THROWS_AS(bce_with_logits(Tensor::scalar(0.0), 2), InputError);
}

TEST_CASE("embed_concat lays out embedding then position per row") {
  Tensor table = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor positions = Tensor::from_values({2, 2}, {0.1, 0.2, 0.3, 0.4});
  Tensor x = embed_concat(table, {2, 0}, positions);
  CHECK(x.dim(0) == 2);
  CHECK(x.dim(1) == 4);
  CHECK(x.at(0, 0) == 5.0);
  CHECK(x.at(0, 1) == 6.0);
  CHECK(x.at(0, 2) == 0.1);
  CHECK(x.at(0, 3) == 0.2);
  CHECK(x.at(1, 0) == 1.0);
  CHECK(x.at(1, 3) == 0.4);
  CHECK_THROWS_AS(embed_concat(table, {}, positions), InputError);
  CHECK_THROWS_AS(embed_concat(table, {3, 0}, positions), DimensionError);
}

TEST_CASE("backward accumulates gradients through shared inputs") {
  Tape tape;
  Tensor a = Tensor::from_values({2}, {3, 4});
  a.set_requires_grad(true);
  Tensor y = sum(add(a, a));  // d/da = 2 per entry
  backward(y);
  CHECK(a.grad()[0] == doctest::Approx(2.0));
  CHECK(a.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("backward seeds the loss gradient with the given factor") {
  Tape tape;
  Tensor a = Tensor::from_values({2}, {1, 1});
  a.set_requires_grad(true);
  backward(sum(a), 0.5);
  CHECK(a.grad()[0] == doctest::Approx(0.5));
}

TEST_CASE("backward outside a tape is a contract violation") {
  Tensor a = Tensor::scalar(1.0);
  a.set_requires_grad(true);
  CHECK_THROWS_AS(backward(a), ContractViolation);
}

TEST_CASE("ops run without a tape and record nothing") {
  Tensor a = Tensor::from_values({2}, {1, 2});
  a.set_requires_grad(true);
  Tensor y = hadamard(a, a);
  CHECK(y.at(1) == 4.0);
  CHECK(a.grad()[0] == 0.0);  // no tape, so nothing can flow back
}

TEST_CASE("nested tapes restore the outer tape") {
  Tape outer;
  Tensor a = Tensor::scalar(2.0);
  a.set_requires_grad(true);
  {
    Tape inner;
    Tensor b = Tensor::scalar(5.0);
    b.set_requires_grad(true);
    backward(scale(b, 3.0));
    CHECK(b.grad()[0] == doctest::Approx(3.0));
  }
  backward(scale(a, 7.0));
  CHECK(a.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("gradients accumulate across two backward passes") {
  Tensor a = Tensor::scalar(1.5);
  a.set_requires_grad(true);
  {
    Tape tape;
    backward(scale(a, 2.0));
  }
  {
    Tape tape;
    backward(scale(a, 3.0));
  }
  CHECK(a.grad()[0] == doctest::Approx(5.0));
  a.zero_grad();
  CHECK(a.grad()[0] == 0.0);
}

TEST_CASE("float tape works end to end") {
  TapeT<float> tape;
  TensorT<float> a = TensorT<float>::from_values({2}, {2, 3});
  a.set_requires_grad(true);
  TensorT<float> y = dot(a, a);
  backward(y);
  CHECK(a.grad()[0] == doctest::Approx(4.0f));
  CHECK(a.grad()[1] == doctest::Approx(6.0f));
}
