#pragma once

#include <cstddef>
#include <string>

#include "shuttle/numerics/param_store.hpp"
#include "shuttle/numerics/random.hpp"
#include "shuttle/numerics/tape.hpp"

namespace shuttle::cells {

struct LstmGate {
  Tensor w;  // [s x in]
  Tensor u;  // [s x s]
  Tensor b;  // [s]
};

// Input, forget, candidate and output gate blocks.
struct LstmParams {
  LstmGate input, forget, cell, output;

  static LstmParams zeros(std::size_t in, std::size_t s);
  // Uniform(-1/sqrt(s), 1/sqrt(s)) matrices, zero biases except the forget bias at 1.
  static LstmParams random(std::size_t in, std::size_t s, Rng& rng);

  std::size_t input_size() const { return input.w.dim(1); }
  std::size_t state_size() const { return input.w.dim(0); }
  void validate() const;

  void register_into(ParamStore& store, const std::string& prefix) const;
};

struct LstmGateVars {
  Var w, u, b;
};

struct LstmVars {
  LstmGateVars input, forget, cell, output;

  static LstmVars bind(Tape& tape, ParamStore& store, const std::string& prefix);
  static LstmVars constants(Tape& tape, const LstmParams& p);
};

struct LstmState {
  Var h;
  Var c;
};

struct LstmOutput {
  Var output;
  LstmState state;
};

LstmOutput lstm_step(const LstmVars& p, const Var& x, const LstmState& state);

std::size_t lstm_param_count(std::size_t in, std::size_t s);

}  // namespace shuttle::cells
