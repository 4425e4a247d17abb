#include "shuttle/cells/param_count.hpp"

#include <string>

#include "shuttle/cells/gru.hpp"
#include "shuttle/cells/lstm.hpp"
#include "shuttle/errors.hpp"

namespace shuttle::cells {

CellKind parse_cell_kind(std::string_view name) {
  if (name == "gru") return CellKind::gru;
  if (name == "lstm") return CellKind::lstm;
  throw ContractError("unknown cell kind '" + std::string(name) + "' (expected gru or lstm)");
}

std::string_view to_string(CellKind kind) { return kind == CellKind::gru ? "gru" : "lstm"; }

std::size_t param_count(CellKind kind, std::size_t in, std::size_t s) {
  return kind == CellKind::gru ? gru_param_count(in, s) : lstm_param_count(in, s);
}

}  // namespace shuttle::cells
