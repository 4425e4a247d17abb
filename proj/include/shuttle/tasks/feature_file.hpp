#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "shuttle/numerics/random.hpp"
#include "shuttle/tasks/sequence_batch.hpp"

namespace shuttle::tasks {

// Little-endian layout:
//   "SHTL" | version u8 = 1 | record count u32 |
//   per record: T u32 | F u32 | label i32 | T*F float32 values (row-major, step-major)
inline constexpr char kFeatureMagic[4] = {'S', 'H', 'T', 'L'};
inline constexpr std::uint8_t kFeatureVersion = 1;

struct FeatureRecord {
  std::uint32_t steps = 0;
  std::uint32_t features = 0;
  std::int32_t label = 0;
  std::vector<float> values;

  bool operator==(const FeatureRecord&) const = default;
};

std::vector<std::uint8_t> encode_feature_records(std::span<const FeatureRecord> records);
std::vector<FeatureRecord> decode_feature_records(std::span<const std::uint8_t> bytes);

void write_feature_file(const std::filesystem::path& path, std::span<const FeatureRecord> records);
std::vector<FeatureRecord> read_feature_file(const std::filesystem::path& path);

/// Narrows a classification batch into records using each sequence's final-step label.
std::vector<FeatureRecord> records_from_batch(const SequenceBatch& batch);

/// Serves stored sequences as batches. Without shuffling the file order is
/// preserved; with shuffling each pass uses a fresh seeded permutation.
/// All records must share T and F.
class FeatureDataset final : public SequenceSource {
 public:
  FeatureDataset(std::vector<FeatureRecord> records, std::size_t classes, bool shuffle, std::uint64_t seed);

  SequenceBatch next(std::size_t batch) override;
  TaskInfo info() const override;

  std::size_t size() const { return records_.size(); }
  /// Every record exactly once, in order, split into batches of at most `batch`.
  std::vector<SequenceBatch> all_batches(std::size_t batch) const;

 private:
  SequenceBatch assemble(std::span<const std::size_t> order) const;
  void reshuffle();

  std::vector<FeatureRecord> records_;
  std::size_t classes_;
  bool shuffle_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace shuttle::tasks
