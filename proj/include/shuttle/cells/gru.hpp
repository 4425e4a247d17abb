#pragma once

#include <cstddef>
#include <string>

#include "shuttle/numerics/param_store.hpp"
#include "shuttle/numerics/random.hpp"
#include "shuttle/numerics/tape.hpp"

namespace shuttle::cells {

/// Weights of one gated recurrent unit with input size `in` and state size `s`.
/// Input matrices are [s x in], recurrent matrices [s x s], biases [s].
struct GruParams {
  Tensor wz, wr, wh;
  Tensor uz, ur, uh;
  Tensor bz, br, bh;

  static GruParams zeros(std::size_t in, std::size_t s);
  /// Matrices uniform in (-1/sqrt(s), 1/sqrt(s)), biases zero.
  static GruParams random(std::size_t in, std::size_t s, Rng& rng);

  std::size_t input_size() const { return wz.dim(1); }
  std::size_t state_size() const { return wz.dim(0); }
  void validate() const;

  void register_into(ParamStore& store, const std::string& prefix) const;
};

/// Tape handles for a GRU's weights.
struct GruVars {
  Var wz, wr, wh;
  Var uz, ur, uh;
  Var bz, br, bh;

  static GruVars bind(Tape& tape, ParamStore& store, const std::string& prefix);
  static GruVars constants(Tape& tape, const GruParams& p);
};

struct GruOutput {
  Var output;
  Var state;
};

/// z = sigmoid(Wz x + Uz h + bz), r = sigmoid(Wr x + Ur h + br),
/// c = tanh(Wh x + Uh (r * h) + bh), h' = (1 - z) * h + z * c.
/// The output is the new state.
GruOutput gru_step(const GruVars& p, const Var& x, const Var& h);

std::size_t gru_param_count(std::size_t in, std::size_t s);

}  // namespace shuttle::cells
