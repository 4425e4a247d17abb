#pragma once

#include <cstddef>
#include <string_view>

namespace shuttle::cells {

enum class CellKind { gru, lstm };

CellKind parse_cell_kind(std::string_view name);
std::string_view to_string(CellKind kind);

// Trainable scalars of one cell: gates * (in*s + s*s + s).
std::size_t param_count(CellKind kind, std::size_t in, std::size_t s);

}  // namespace shuttle::cells
