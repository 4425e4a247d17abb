#pragma once

#include <span>
#include <vector>

#include "shuttle/numerics/tape.hpp"
#include "shuttle/numerics/tensor.hpp"

// Differentiable operations over Tape variables. Binary elementwise ops accept
// operands of identical shape, or one operand holding a single element.
namespace shuttle::ops {

Var matmul(const Var& a, const Var& b);     // [m x k] . [k x n]
Var matmul_bt(const Var& a, const Var& b);  // [m x k] . [n x k]^T

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);

// Softmax of a vector, or of every row of a matrix.
Var softmax(const Var& a);

Var add_bias(const Var& x, const Var& bias);  // [B x n] + [n] on every row
Var reshape(const Var& a, Shape shape);
Var sum(const Var& a);
Var mean(const Var& a);

Var concat_cols(const std::vector<Var>& parts);  // [B x k_i] -> [B x sum k_i]
Var column(const Var& a, std::size_t j);         // [B x n] -> [B x 1]
Var row_block(const Var& a, std::size_t begin, std::size_t count);  // rows [begin, begin + count)
Var scale_rows(const Var& x, const Var& w);      // [B x n] * [B x 1]

struct BatchNormResult {
  Var out;
  Tensor mean;      // per-feature batch mean
  Tensor variance;  // per-feature biased batch variance
};

// (x - E[x]) / sqrt(Var[x] + eps) + bias per feature over the batch rows,
// with the biased variance estimator. Needs at least two rows.
BatchNormResult batch_norm_train(const Var& x, const Var& bias, double eps);

// Same normalization with fixed statistics.
Var batch_norm_infer(const Var& x, const Var& bias, const Tensor& mean, const Tensor& variance, double eps);

// Mean softmax cross-entropy over rows whose label is >= 0; rows labelled -1 are ignored.
// Throws when no row carries a label.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);

// Mean squared error of a [B x 1] prediction against B targets.
Var mean_squared_error(const Var& prediction, std::span<const double> targets);

// Plain (non-differentiable) helpers.
Tensor softmax_values(const Tensor& a);
Tensor matmul_values(const Tensor& a, const Tensor& b);

}  // namespace shuttle::ops
