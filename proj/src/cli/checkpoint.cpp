#include "shuttle/cli/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "shuttle/errors.hpp"

namespace shuttle::cli {

namespace {

constexpr char kMagic[4] = {'S', 'H', 'C', 'K'};
constexpr const char* kRunningMean = "shuttle/projector/running_mean";
constexpr const char* kRunningVar = "shuttle/projector/running_var";

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  const std::uint8_t* take(std::size_t n, const char* what) {
    if (bytes_.size() - offset_ < n) {
      throw FormatError(std::string("checkpoint truncated in ") + what + " at byte offset " + std::to_string(offset_) +
                        ": expected " + std::to_string(n) + " bytes, got " + std::to_string(bytes_.size() - offset_));
    }
    const std::uint8_t* p = bytes_.data() + offset_;
    offset_ += n;
    return p;
  }
  std::uint32_t u32(const char* what) {
    const std::uint8_t* p = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    const std::uint8_t* p = take(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - offset_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kCheckpointVersion);
  const std::string cfg = ck.config.dump();
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());
  put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(static_cast<std::uint8_t>(t.value.rank()));
    for (auto e : t.value.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : t.value.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (std::memcmp(in.take(4, "magic"), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic at byte offset 0");
  const std::uint8_t version = *in.take(1, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  const std::uint32_t cfg_len = in.u32("config length");
  const auto* cfg = in.take(cfg_len, "config");
  ck.config = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(cfg), cfg_len), nullptr, false);
  if (ck.config.is_discarded()) throw FormatError("checkpoint: embedded config is not valid JSON");
  const std::uint32_t count = in.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint32_t name_len = in.u32("tensor name length");
    const auto* name = in.take(name_len, "tensor name");
    t.name.assign(reinterpret_cast<const char*>(name), name_len);
    const std::uint8_t rank = *in.take(1, "tensor rank");
    if (rank < 1 || rank > 3) throw FormatError("checkpoint: tensor '" + t.name + "' has rank " + std::to_string(rank));
    Shape shape;
    for (std::uint8_t r = 0; r < rank; ++r) shape.push_back(in.u32("tensor extent"));
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = std::bit_cast<double>(in.u64("tensor payload"));
    t.value = Tensor(std::move(shape), std::move(data));
    ck.tensors.push_back(std::move(t));
  }
  if (in.remaining() != 0) throw FormatError("checkpoint: " + std::to_string(in.remaining()) + " trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = encode_checkpoint(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint snapshot(const training::Model& model, const nlohmann::json& config) {
  Checkpoint ck{config, {}};
  for (const auto& e : model.params()) ck.tensors.push_back({e.name, e.value});
  if (const auto& stats = model.projector_stats()) {
    ck.tensors.push_back({kRunningMean, stats->mean});
    ck.tensors.push_back({kRunningVar, stats->variance});
  }
  return ck;
}

training::Model restore(const training::ModelConfig& cfg, const Checkpoint& ck) {
  // A freshly initialized model defines the expected names and shapes.
  training::Model model(cfg, 0);
  std::size_t matched = 0;
  std::optional<Tensor> mean;
  std::optional<Tensor> var;
  for (const auto& t : ck.tensors) {
    if (t.name == kRunningMean) {
      mean = t.value;
      continue;
    }
    if (t.name == kRunningVar) {
      var = t.value;
      continue;
    }
    const auto idx = model.params().find(t.name);
    if (!idx) throw FormatError("checkpoint: unexpected tensor '" + t.name + "'");
    Tensor& dst = model.params().entry(*idx).value;
    if (dst.shape() != t.value.shape()) {
      throw FormatError("checkpoint: tensor '" + t.name + "' has shape " + to_string(t.value.shape()) + ", expected " +
                        to_string(dst.shape()));
    }
    dst = t.value;
    ++matched;
  }
  if (matched != model.params().size()) {
    throw FormatError("checkpoint: holds " + std::to_string(matched) + " of " + std::to_string(model.params().size()) +
                      " parameters");
  }
  if (model.projector_stats()) {
    if (!mean || !var) throw FormatError("checkpoint: projector running statistics missing");
    auto stats = *model.projector_stats();
    if (mean->shape() != stats.mean.shape() || var->shape() != stats.variance.shape()) {
      throw FormatError("checkpoint: projector running statistics have the wrong shape");
    }
    stats.mean = *mean;
    stats.variance = *var;
    model.set_projector_stats(std::move(stats));
  }
  return model;
}

}  // namespace shuttle::cli
