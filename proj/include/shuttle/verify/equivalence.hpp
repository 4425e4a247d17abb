#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "shuttle/cells/gru.hpp"
#include "shuttle/layer/shuttle_layer.hpp"

namespace shuttle::verify {

/// Attention selection evaluated with plain loops, independent of the tape:
/// e_n = sum_i nu_i tanh((Wx x)_i + (Wo o_n)_i), alpha = softmax(e), y = sum_n alpha_n o_n.
Tensor reference_attention(const layer::AttentionParams& a, const Tensor& x, std::span<const Tensor> outputs);

struct EquivalenceResult {
  std::string name;
  std::size_t probes = 0;
  double max_deviation = 0.0;
};

/// (N=1, D=1) shuttle layer against a single GRU step.
EquivalenceResult check_single_gru(std::size_t state_size, std::size_t batch, std::size_t probes, std::uint64_t seed);
/// (N, D=1) shuttle layer against N independent GRUs followed by reference attention.
EquivalenceResult check_gru_bank(std::size_t processors, std::size_t state_size, std::size_t batch, std::size_t probes,
                                 std::uint64_t seed);
/// (N=1, D) shuttle layer against one GRU applied D times with a separate state per level.
EquivalenceResult check_shared_stack(std::size_t steps, std::size_t state_size, std::size_t batch, std::size_t probes,
                                     std::uint64_t seed);

inline constexpr double kEquivalenceTolerance = 1e-12;

}  // namespace shuttle::verify
