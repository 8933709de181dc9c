#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxenc/data.hpp"
#include "ctxenc/model.hpp"

namespace ctxenc {

/// One finite-difference comparison: the largest relative error between
/// reverse-mode and central-difference gradients over every input entry.
struct GradientCheckResult {
  std::string name;
  double max_rel_error = 0.0;
};

/// Checks every differentiable primitive plus small end-to-end models
/// (recurrent, non-recurrent, learned context, trainable embeddings,
/// token-wise). Relative error uses max(|a|, |b|, 1) as denominator.
std::vector<GradientCheckResult> run_gradient_checks(std::uint64_t seed);

double max_gradient_check_error(const std::vector<GradientCheckResult>& results);

/// Contraction of x and c against the explicit dense degree-3 tensor
/// T[j][a][b] = sum_r W(j,r) U(r,a) V(r,b), computed by triple loop.
/// Independent oracle for the factored weight computation.
std::vector<double> dense_candidate_weights(const AttentionStep& step,
                                            const std::vector<double>& x,
                                            const std::vector<double>& c);

/// Max |factored - dense| over random instances with u, m <= 8.
double attention_factorization_max_error(std::size_t instances, std::uint64_t seed);

/// Multiply-accumulates of one adjustment step measured by running the
/// token-by-token reference route under the instruction counter.
std::uint64_t measure_step_macs(std::size_t n, std::size_t m, std::size_t u,
                                StepVariant variant, std::uint64_t seed);

struct ComplexityProbeRow {
  std::size_t n = 0;
  std::uint64_t context_measured = 0;
  std::uint64_t context_formula = 0;
  std::uint64_t token_wise_measured = 0;
  std::uint64_t token_wise_formula = 0;
};

std::vector<ComplexityProbeRow> run_complexity_probe(const std::vector<std::size_t>& lengths,
                                                     std::size_t m, std::size_t u,
                                                     std::uint64_t seed);

/// Least-squares slope of log(counts) against log(lengths).
double fit_log_log_slope(const std::vector<std::size_t>& lengths,
                         const std::vector<std::uint64_t>& counts);

/// Balanced synthetic corpus where the positive class is exactly the
/// documents containing a marker token. Separable by construction, so a
/// working trainer must reach perfect test accuracy.
Dataset make_marker_dataset(std::size_t documents, std::uint64_t seed);

}  // namespace ctxenc
