#include "shuttle/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "shuttle/errors.hpp"

namespace shuttle::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.data(), t.dim(0), t.dim(1)); }
MutMap as_matrix(Tensor& t) { return MutMap(t.data(), t.dim(0), t.dim(1)); }

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + to_string(t.shape()));
}

std::string pair_shapes(const Tensor& a, const Tensor& b) { return to_string(a.shape()) + " and " + to_string(b.shape()); }

template <class F>
Tensor map_values(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.size() == 1) return a.shape();
  if (a.size() == 1) return b.shape();
  throw DimensionError(std::string(op) + ": incompatible shapes " + pair_shapes(a, b));
}

// Reduces a broadcast gradient back to the operand's shape.
Tensor reduce_to(const Tensor& grad, const Shape& shape) {
  if (grad.shape() == shape) return grad;
  double s = 0.0;
  for (double g : grad.values()) s += g;
  return Tensor(shape, s);
}

double at_broadcast(const Tensor& t, std::size_t i) { return t.size() == 1 ? t[0] : t[i]; }

template <class F>
Tensor zip_values(const Tensor& a, const Tensor& b, const Shape& shape, F f) {
  Tensor out(shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(at_broadcast(a, i), at_broadcast(b, i));
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.dim(1) != b.dim(0)) throw DimensionError("matmul: inner dimensions disagree for " + pair_shapes(a, b));
  Tensor out({a.dim(0), b.dim(1)});
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
  return out;
}

Var matmul(const Var& a, const Var& b) {
  Tensor out = matmul_values(a.value(), b.value());
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b](const Tensor& g, const Tensor&, Tape& tape) {
    if (tape.requires_grad(a)) {
      Tensor da(a.shape());
      as_matrix(da).noalias() = as_matrix(g) * as_matrix(b.value()).transpose();
      tape.accumulate(a, std::move(da));
    }
    if (tape.requires_grad(b)) {
      Tensor db(b.shape());
      as_matrix(db).noalias() = as_matrix(a.value()).transpose() * as_matrix(g);
      tape.accumulate(b, std::move(db));
    }
  });
}

Var matmul_bt(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul_bt");
  require_matrix(bv, "matmul_bt");
  if (av.dim(1) != bv.dim(1)) throw DimensionError("matmul_bt: inner dimensions disagree for " + pair_shapes(av, bv));
  Tensor out({av.dim(0), bv.dim(0)});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv).transpose();
  return a.tape().record("matmul_bt", std::move(out), {a, b}, [a, b](const Tensor& g, const Tensor&, Tape& tape) {
    if (tape.requires_grad(a)) {
      Tensor da(a.shape());
      as_matrix(da).noalias() = as_matrix(g) * as_matrix(b.value());
      tape.accumulate(a, std::move(da));
    }
    if (tape.requires_grad(b)) {
      Tensor db(b.shape());
      as_matrix(db).noalias() = as_matrix(g).transpose() * as_matrix(a.value());
      tape.accumulate(b, std::move(db));
    }
  });
}

Var add(const Var& a, const Var& b) {
  const Shape shape = broadcast_shape(a.value(), b.value(), "add");
  Tensor out = zip_values(a.value(), b.value(), shape, [](double x, double y) { return x + y; });
  return a.tape().record("add", std::move(out), {a, b}, [a, b](const Tensor& g, const Tensor&, Tape& tape) {
    if (tape.requires_grad(a)) tape.accumulate(a, reduce_to(g, a.shape()));
    if (tape.requires_grad(b)) tape.accumulate(b, reduce_to(g, b.shape()));
  });
}

Var sub(const Var& a, const Var& b) {
  const Shape shape = broadcast_shape(a.value(), b.value(), "sub");
  Tensor out = zip_values(a.value(), b.value(), shape, [](double x, double y) { return x - y; });
  return a.tape().record("sub", std::move(out), {a, b}, [a, b](const Tensor& g, const Tensor&, Tape& tape) {
    if (tape.requires_grad(a)) tape.accumulate(a, reduce_to(g, a.shape()));
    if (tape.requires_grad(b)) tape.accumulate(b, reduce_to(map_values(g, [](double v) { return -v; }), b.shape()));
  });
}

Var mul(const Var& a, const Var& b) {
  const Shape shape = broadcast_shape(a.value(), b.value(), "mul");
  Tensor out = zip_values(a.value(), b.value(), shape, [](double x, double y) { return x * y; });
  return a.tape().record("mul", std::move(out), {a, b}, [a, b](const Tensor& g, const Tensor&, Tape& tape) {
    if (tape.requires_grad(a)) {
      Tensor da = zip_values(g, b.value(), g.shape(), [](double x, double y) { return x * y; });
      tape.accumulate(a, reduce_to(da, a.shape()));
    }
    if (tape.requires_grad(b)) {
      Tensor db = zip_values(g, a.value(), g.shape(), [](double x, double y) { return x * y; });
      tape.accumulate(b, reduce_to(db, b.shape()));
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = map_values(a.value(), [factor](double v) { return v * factor; });
  return a.tape().record("scale", std::move(out), {a}, [a, factor](const Tensor& g, const Tensor&, Tape& tape) {
    tape.accumulate(a, map_values(g, [factor](double v) { return v * factor; }));
  });
}

Var sigmoid(const Var& a) {
  Tensor out = map_values(a.value(), sigmoid_scalar);
  return a.tape().record("sigmoid", std::move(out), {a}, [a](const Tensor& g, const Tensor& y, Tape& tape) {
    Tensor da(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * y[i] * (1.0 - y[i]);
    tape.accumulate(a, std::move(da));
  });
}

Var tanh(const Var& a) {
  Tensor out = map_values(a.value(), [](double v) { return std::tanh(v); });
  return a.tape().record("tanh", std::move(out), {a}, [a](const Tensor& g, const Tensor& y, Tape& tape) {
    Tensor da(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * (1.0 - y[i] * y[i]);
    tape.accumulate(a, std::move(da));
  });
}

Var relu(const Var& a) {
  Tensor out = map_values(a.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  return a.tape().record("relu", std::move(out), {a}, [a](const Tensor& g, const Tensor&, Tape& tape) {
    const Tensor& x = a.value();
    Tensor da(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) da[i] = x[i] > 0.0 ? g[i] : 0.0;
    tape.accumulate(a, std::move(da));
  });
}

Tensor softmax_values(const Tensor& a) {
  if (a.empty()) throw DimensionError("softmax: empty input");
  if (a.rank() > 2) throw DimensionError("softmax: expected vector or matrix, got " + to_string(a.shape()));
  Tensor out(a.shape());
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = a.data() + r * cols;
    double* o = out.data() + r * cols;
    const double m = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (o[c] = std::exp(in[c] - m));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  return out;
}

Var softmax(const Var& a) {
  Tensor out = softmax_values(a.value());
  return a.tape().record("softmax", std::move(out), {a}, [a](const Tensor& g, const Tensor& y, Tape& tape) {
    const std::size_t rows = y.rows();
    const std::size_t cols = y.cols();
    Tensor da(y.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) da[r * cols + c] = y[r * cols + c] * (g[r * cols + c] - dot);
    }
    tape.accumulate(a, std::move(da));
  });
}

Var add_bias(const Var& x, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "add_bias");
  if (bv.rank() != 1 || bv.size() != xv.dim(1)) {
    throw DimensionError("add_bias: bias " + to_string(bv.shape()) + " does not fit " + to_string(xv.shape()));
  }
  const std::size_t rows = xv.dim(0);
  const std::size_t cols = xv.dim(1);
  Tensor out = xv;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  return x.tape().record("add_bias", std::move(out), {x, bias}, [x, bias, rows, cols](const Tensor& g, const Tensor&, Tape& tape) {
    if (tape.requires_grad(x)) tape.accumulate(x, g);
    if (tape.requires_grad(bias)) {
      Tensor db({cols}, 0.0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) db[c] += g[r * cols + c];
      tape.accumulate(bias, std::move(db));
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record("reshape", std::move(out), {a}, [a](const Tensor& g, const Tensor&, Tape& tape) {
    tape.accumulate(a, g.reshaped(a.shape()));
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape().record("sum", Tensor::scalar(s), {a}, [a](const Tensor& g, const Tensor&, Tape& tape) {
    tape.accumulate(a, Tensor(a.shape(), g[0]));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const std::size_t rows = parts.front().value().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    require_matrix(v, "concat_cols");
    if (v.dim(0) != rows) throw DimensionError("concat_cols: row counts disagree for " + pair_shapes(parts.front().value(), v));
    widths.push_back(v.dim(1));
    total += v.dim(1);
  }
  Tensor out({rows, total});
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& v = parts[i].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[i]; ++c) out(r, offset + c) = v(r, c);
    offset += widths[i];
  }
  return parts.front().tape().record(
      "concat_cols", std::move(out), parts, [parts, widths, rows, total](const Tensor& g, const Tensor&, Tape& tape) {
        std::size_t offset = 0;
        for (std::size_t i = 0; i < parts.size(); ++i) {
          if (tape.requires_grad(parts[i])) {
            Tensor d({rows, widths[i]});
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < widths[i]; ++c) d(r, c) = g[r * total + offset + c];
            tape.accumulate(parts[i], std::move(d));
          }
          offset += widths[i];
        }
      });
}

Var column(const Var& a, std::size_t j) {
  const Tensor& v = a.value();
  require_matrix(v, "column");
  if (j >= v.dim(1)) throw DimensionError("column: index " + std::to_string(j) + " out of range for " + to_string(v.shape()));
  const std::size_t rows = v.dim(0);
  Tensor out({rows, 1});
  for (std::size_t r = 0; r < rows; ++r) out[r] = v(r, j);
  return a.tape().record("column", std::move(out), {a}, [a, j, rows](const Tensor& g, const Tensor&, Tape& tape) {
    Tensor d(a.shape(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) d(r, j) = g[r];
    tape.accumulate(a, std::move(d));
  });
}

Var row_block(const Var& a, std::size_t begin, std::size_t count) {
  const Tensor& v = a.value();
  require_matrix(v, "row_block");
  if (count == 0 || begin + count > v.dim(0)) {
    throw DimensionError("row_block: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + to_string(v.shape()));
  }
  const std::size_t cols = v.dim(1);
  Tensor out({count, cols});
  std::copy_n(v.values().begin() + begin * cols, count * cols, out.values().begin());
  return a.tape().record("row_block", std::move(out), {a}, [a, begin, cols](const Tensor& g, const Tensor&, Tape& tape) {
    Tensor d(a.shape(), 0.0);
    std::copy(g.values().begin(), g.values().end(), d.values().begin() + begin * cols);
    tape.accumulate(a, std::move(d));
  });
}

Var scale_rows(const Var& x, const Var& w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_matrix(xv, "scale_rows");
  if (wv.rank() != 2 || wv.dim(0) != xv.dim(0) || wv.dim(1) != 1) {
    throw DimensionError("scale_rows: weights " + to_string(wv.shape()) + " do not fit " + to_string(xv.shape()));
  }
  const std::size_t rows = xv.dim(0);
  const std::size_t cols = xv.dim(1);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] * wv[r];
  return x.tape().record("scale_rows", std::move(out), {x, w}, [x, w, rows, cols](const Tensor& g, const Tensor&, Tape& tape) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (tape.requires_grad(x)) {
      Tensor dx(xv.shape());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] = g[r * cols + c] * wv[r];
      tape.accumulate(x, std::move(dx));
    }
    if (tape.requires_grad(w)) {
      Tensor dw(wv.shape(), 0.0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dw[r] += g[r * cols + c] * xv[r * cols + c];
      tape.accumulate(w, std::move(dw));
    }
  });
}

BatchNormResult batch_norm_train(const Var& x, const Var& bias, double eps) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "batch_norm_train");
  const std::size_t rows = xv.dim(0);
  const std::size_t cols = xv.dim(1);
  if (rows < 2) throw ContractError("batch_norm_train: batch of " + std::to_string(rows) + " rows; need at least 2");
  if (bv.rank() != 1 || bv.size() != cols) {
    throw DimensionError("batch_norm_train: bias " + to_string(bv.shape()) + " does not fit " + to_string(xv.shape()));
  }
  Tensor mu({cols}, 0.0);
  Tensor var({cols}, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) mu[c] += xv(r, c);
  for (std::size_t c = 0; c < cols; ++c) mu[c] /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = xv(r, c) - mu[c];
      var[c] += d * d;
    }
  for (std::size_t c = 0; c < cols; ++c) var[c] /= static_cast<double>(rows);

  Tensor inv_std({cols});
  for (std::size_t c = 0; c < cols; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      xhat(r, c) = (xv(r, c) - mu[c]) * inv_std[c];
      out(r, c) = xhat(r, c) + bv[c];
    }

  Var y = x.tape().record(
      "batch_norm", std::move(out), {x, bias},
      [x, bias, xhat = std::move(xhat), inv_std, rows, cols](const Tensor& g, const Tensor&, Tape& tape) {
        if (tape.requires_grad(bias)) {
          Tensor db({cols}, 0.0);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) db[c] += g(r, c);
          tape.accumulate(bias, std::move(db));
        }
        if (tape.requires_grad(x)) {
          const double n = static_cast<double>(rows);
          std::vector<double> sum_g(cols, 0.0);
          std::vector<double> sum_gx(cols, 0.0);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
              sum_g[c] += g(r, c);
              sum_gx[c] += g(r, c) * xhat(r, c);
            }
          Tensor dx(g.shape());
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
              dx(r, c) = inv_std[c] / n * (n * g(r, c) - sum_g[c] - xhat(r, c) * sum_gx[c]);
          tape.accumulate(x, std::move(dx));
        }
      });
  return {y, std::move(mu), std::move(var)};
}

Var batch_norm_infer(const Var& x, const Var& bias, const Tensor& mean, const Tensor& variance, double eps) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "batch_norm_infer");
  const std::size_t rows = xv.dim(0);
  const std::size_t cols = xv.dim(1);
  if (bv.size() != cols || mean.size() != cols || variance.size() != cols) {
    throw DimensionError("batch_norm_infer: statistics do not fit " + to_string(xv.shape()));
  }
  Tensor inv_std({cols});
  for (std::size_t c = 0; c < cols; ++c) inv_std[c] = 1.0 / std::sqrt(variance[c] + eps);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = (xv(r, c) - mean[c]) * inv_std[c] + bv[c];
  return x.tape().record("batch_norm_infer", std::move(out), {x, bias},
                         [x, bias, inv_std, rows, cols](const Tensor& g, const Tensor&, Tape& tape) {
                           if (tape.requires_grad(bias)) {
                             Tensor db({cols}, 0.0);
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t c = 0; c < cols; ++c) db[c] += g(r, c);
                             tape.accumulate(bias, std::move(db));
                           }
                           if (tape.requires_grad(x)) {
                             Tensor dx(g.shape());
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t c = 0; c < cols; ++c) dx(r, c) = g(r, c) * inv_std[c];
                             tape.accumulate(x, std::move(dx));
                           }
                         });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  require_matrix(z, "softmax_cross_entropy");
  const std::size_t rows = z.dim(0);
  const std::size_t classes = z.dim(1);
  if (labels.size() != rows) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         to_string(z.shape()));
  }
  Tensor p = softmax_values(z);
  std::vector<int> kept(labels.begin(), labels.end());
  std::size_t count = 0;
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int y = kept[r];
    if (y < 0) continue;
    if (static_cast<std::size_t>(y) >= classes) {
      throw ContractError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(classes) + ")");
    }
    // log-sum-exp form keeps large logits finite
    const double* row = z.data() + r * classes;
    const double m = *std::max_element(row, row + classes);
    double lse = 0.0;
    for (std::size_t c = 0; c < classes; ++c) lse += std::exp(row[c] - m);
    loss += m + std::log(lse) - row[y];
    ++count;
  }
  if (count == 0) throw ContractError("softmax_cross_entropy: no labelled rows");
  const double n = static_cast<double>(count);
  return logits.tape().record(
      "softmax_cross_entropy", Tensor::scalar(loss / n), {logits},
      [logits, p = std::move(p), kept = std::move(kept), classes, n](const Tensor& g, const Tensor&, Tape& tape) {
        Tensor d(p.shape(), 0.0);
        for (std::size_t r = 0; r < kept.size(); ++r) {
          if (kept[r] < 0) continue;
          for (std::size_t c = 0; c < classes; ++c) d(r, c) = g[0] * p(r, c) / n;
          d(r, static_cast<std::size_t>(kept[r])) -= g[0] / n;
        }
        tape.accumulate(logits, std::move(d));
      });
}

Var mean_squared_error(const Var& prediction, std::span<const double> targets) {
  const Tensor& p = prediction.value();
  if (p.size() != targets.size()) {
    throw DimensionError("mean_squared_error: prediction " + to_string(p.shape()) + " vs " +
                         std::to_string(targets.size()) + " targets");
  }
  std::vector<double> t(targets.begin(), targets.end());
  const double n = static_cast<double>(t.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) loss += (p[i] - t[i]) * (p[i] - t[i]);
  return prediction.tape().record(
      "mean_squared_error", Tensor::scalar(loss / n), {prediction},
      [prediction, t = std::move(t), n](const Tensor& g, const Tensor&, Tape& tape) {
        const Tensor& p = prediction.value();
        Tensor d(p.shape());
        for (std::size_t i = 0; i < t.size(); ++i) d[i] = g[0] * 2.0 * (p[i] - t[i]) / n;
        tape.accumulate(prediction, std::move(d));
      });
}

}  // namespace shuttle::ops
