#include "shuttle/numerics/param_store.hpp"

#include "shuttle/errors.hpp"

namespace shuttle {

std::size_t ParamStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  const std::size_t i = entries_.size();
  Tensor grad(value.shape(), 0.0);
  index_.emplace(name, i);
  entries_.push_back({std::move(name), std::move(value), std::move(grad)});
  return i;
}

std::optional<std::size_t> ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParamStore::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw ContractError("unknown parameter '" + std::string(name) + "'");
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

}  // namespace shuttle
