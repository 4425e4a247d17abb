#pragma once

#include <cstddef>
#include <string>

#include "shuttle/layer/shuttle_layer.hpp"

namespace shuttle::layer {

struct GraphCounts {
  std::size_t processor_nodes = 0;
  std::size_t input_edges = 0;
  std::size_t inter_step_edges = 0;
  std::size_t output_edges = 0;
};

struct PathwayGraph {
  std::string dot;
  GraphCounts counts;
};

// DOT digraph of the pathway topology: one node per processor@step, an input
// node feeding step 1, stride-K edges between consecutive steps, and the
// last-step nodes feeding the attention selector.
PathwayGraph pathway_graph(const ShuttleConfig& cfg);

}  // namespace shuttle::layer
