#include "shuttle/tasks/feature_file.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "shuttle/errors.hpp"

namespace shuttle::tasks {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  const std::uint8_t* take(std::size_t n, const std::string& what) {
    if (bytes_.size() - offset_ < n) {
      throw FormatError("feature file truncated in " + what + " at byte offset " + std::to_string(offset_) +
                        ": expected " + std::to_string(n) + " bytes, got " + std::to_string(bytes_.size() - offset_));
    }
    const std::uint8_t* p = bytes_.data() + offset_;
    offset_ += n;
    return p;
  }

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_feature_records(std::span<const FeatureRecord> records) {
  std::vector<std::uint8_t> out(std::begin(kFeatureMagic), std::end(kFeatureMagic));
  out.push_back(kFeatureVersion);
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (r.values.size() != static_cast<std::size_t>(r.steps) * r.features) {
      throw ContractError("feature record declares " + std::to_string(r.steps) + "x" + std::to_string(r.features) +
                          " but holds " + std::to_string(r.values.size()) + " values");
    }
    put_u32(out, r.steps);
    put_u32(out, r.features);
    put_u32(out, static_cast<std::uint32_t>(r.label));
    for (float v : r.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<FeatureRecord> decode_feature_records(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const std::uint8_t* magic = in.take(4, "magic");
  if (std::memcmp(magic, kFeatureMagic, 4) != 0) throw FormatError("feature file: bad magic at byte offset 0");
  const std::uint8_t version = *in.take(1, "version");
  if (version != kFeatureVersion) {
    throw FormatError("feature file: unsupported version " + std::to_string(version) + " at byte offset 4");
  }
  const std::uint32_t count = get_u32(in.take(4, "record count"));
  std::vector<FeatureRecord> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string where = "record " + std::to_string(i);
    FeatureRecord r;
    const std::uint8_t* head = in.take(12, where + " header");
    r.steps = get_u32(head);
    r.features = get_u32(head + 4);
    r.label = static_cast<std::int32_t>(get_u32(head + 8));
    if (r.steps == 0 || r.features == 0) {
      throw FormatError("feature file: " + where + " has empty shape at byte offset " + std::to_string(in.offset() - 12));
    }
    const std::size_t n = static_cast<std::size_t>(r.steps) * r.features;
    const std::size_t start = in.offset();
    const std::uint8_t* payload = in.take(n * 4, where + " payload");
    r.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      r.values[k] = std::bit_cast<float>(get_u32(payload + 4 * k));
      if (!std::isfinite(r.values[k])) {
        throw FormatError("feature file: non-finite value in " + where + " at byte offset " + std::to_string(start + 4 * k));
      }
    }
    records.push_back(std::move(r));
  }
  if (in.remaining() != 0) {
    throw FormatError("feature file: " + std::to_string(in.remaining()) + " trailing bytes at byte offset " +
                      std::to_string(in.offset()));
  }
  return records;
}

void write_feature_file(const std::filesystem::path& path, std::span<const FeatureRecord> records) {
  const auto bytes = encode_feature_records(records);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

std::vector<FeatureRecord> read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open feature file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_feature_records(bytes);
}

std::vector<FeatureRecord> records_from_batch(const SequenceBatch& batch) {
  if (batch.regression()) throw ContractError("feature records hold class labels; regression batches cannot be stored");
  std::vector<FeatureRecord> out;
  const std::size_t t_len = batch.steps();
  const std::size_t f = batch.feature_size();
  for (std::size_t b = 0; b < batch.batch(); ++b) {
    FeatureRecord r;
    r.steps = static_cast<std::uint32_t>(t_len);
    r.features = static_cast<std::uint32_t>(f);
    r.label = batch.label(b, t_len - 1);
    r.values.reserve(t_len * f);
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t k = 0; k < f; ++k) r.values.push_back(static_cast<float>(batch.features(b, t, k)));
    out.push_back(std::move(r));
  }
  return out;
}

FeatureDataset::FeatureDataset(std::vector<FeatureRecord> records, std::size_t classes, bool shuffle, std::uint64_t seed)
    : records_(std::move(records)), classes_(classes), shuffle_(shuffle), rng_(seed) {
  if (records_.empty()) throw ContractError("feature dataset is empty");
  const auto& first = records_.front();
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.steps != first.steps || r.features != first.features) {
      throw DimensionError("feature dataset: record " + std::to_string(i) + " is " + std::to_string(r.steps) + "x" +
                           std::to_string(r.features) + ", expected " + std::to_string(first.steps) + "x" +
                           std::to_string(first.features));
    }
    if (r.label < 0 || static_cast<std::size_t>(r.label) >= classes_) {
      throw ContractError("feature dataset: record " + std::to_string(i) + " label " + std::to_string(r.label) +
                          " outside [0, " + std::to_string(classes_) + ")");
    }
  }
  order_.resize(records_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (shuffle_) reshuffle();
}

void FeatureDataset::reshuffle() { std::shuffle(order_.begin(), order_.end(), rng_.engine()); }

TaskInfo FeatureDataset::info() const {
  return {"features", records_.front().features, records_.front().steps, classes_, LossKind::labelled_steps};
}

SequenceBatch FeatureDataset::assemble(std::span<const std::size_t> order) const {
  const std::size_t t_len = records_.front().steps;
  const std::size_t f = records_.front().features;
  SequenceBatch out;
  out.task = "features";
  out.features = Tensor({order.size(), t_len, f});
  out.labels.assign(order.size() * t_len, 0);
  for (std::size_t b = 0; b < order.size(); ++b) {
    const auto& r = records_[order[b]];
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t k = 0; k < f; ++k) out.features(b, t, k) = static_cast<double>(r.values[t * f + k]);
      out.labels[b * t_len + t] = r.label;
    }
  }
  return out;
}

SequenceBatch FeatureDataset::next(std::size_t batch) {
  std::vector<std::size_t> picked;
  picked.reserve(batch);
  while (picked.size() < batch) {
    if (cursor_ == order_.size()) {
      cursor_ = 0;
      if (shuffle_) reshuffle();
    }
    picked.push_back(order_[cursor_++]);
  }
  return assemble(picked);
}

std::vector<SequenceBatch> FeatureDataset::all_batches(std::size_t batch) const {
  std::vector<std::size_t> order(records_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<SequenceBatch> out;
  for (std::size_t i = 0; i < order.size(); i += batch) {
    const std::size_t n = std::min(batch, order.size() - i);
    out.push_back(assemble(std::span<const std::size_t>(order).subspan(i, n)));
  }
  return out;
}

}  // namespace shuttle::tasks
