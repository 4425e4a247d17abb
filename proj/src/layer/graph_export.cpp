#include "shuttle/layer/graph_export.hpp"

#include <sstream>

namespace shuttle::layer {

namespace {

std::string node_id(std::size_t n, std::size_t d) { return "p" + std::to_string(n) + "_s" + std::to_string(d); }

}  // namespace

PathwayGraph pathway_graph(const ShuttleConfig& cfg) {
  cfg.validate();
  const std::size_t n_proc = cfg.processors;
  PathwayGraph g;
  std::ostringstream os;
  os << "digraph shuttle {\n";
  os << "  rankdir=LR;\n";
  os << "  label=\"N=" << n_proc << " D=" << cfg.steps << " K=" << cfg.stride << "\";\n";
  os << "  input [shape=box, label=\"x_t\"];\n";
  os << "  selector [shape=box, label=\"attention\"];\n";
  for (std::size_t d = 1; d <= cfg.steps; ++d) {
    os << "  subgraph cluster_step" << d << " {\n";
    os << "    label=\"step " << d << "\";\n";
    for (std::size_t n = 0; n < n_proc; ++n) {
      os << "    " << node_id(n, d) << " [label=\"p" << n << "@" << d << "\"];\n";
      ++g.counts.processor_nodes;
    }
    os << "  }\n";
  }
  for (std::size_t n = 0; n < n_proc; ++n) {
    os << "  input -> " << node_id(n, 1) << ";\n";
    ++g.counts.input_edges;
  }
  for (std::size_t d = 2; d <= cfg.steps; ++d) {
    for (std::size_t n = 0; n < n_proc; ++n) {
      const std::size_t from = (n + n_proc - cfg.stride % n_proc) % n_proc;
      os << "  " << node_id(from, d - 1) << " -> " << node_id(n, d) << ";\n";
      ++g.counts.inter_step_edges;
    }
  }
  for (std::size_t n = 0; n < n_proc; ++n) {
    os << "  " << node_id(n, cfg.steps) << " -> selector;\n";
    ++g.counts.output_edges;
  }
  os << "  input -> selector [style=dashed];\n";
  os << "}\n";
  g.dot = os.str();
  return g;
}

}  // namespace shuttle::layer
