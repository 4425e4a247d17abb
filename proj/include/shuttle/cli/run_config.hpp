#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "shuttle/tasks/sequence_batch.hpp"
#include "shuttle/training/model.hpp"
#include "shuttle/training/trainer.hpp"

namespace shuttle::cli {

using nlohmann::json;

inline constexpr int kConfigSchemaVersion = 1;

/// Every accepted key with its default value. Keys absent here are rejected.
json default_config();

/// The small configuration used by `gradcheck` when no file is given.
json gradcheck_preset();

/// Parses "--a.b=value" into the nested key path and a JSON value. Values that
/// do not parse as JSON are taken as strings.
std::pair<std::vector<std::string>, json> parse_override(const std::string& arg);

json load_json_file(const std::filesystem::path& path);

/// defaults <- user <- overrides, rejecting unknown keys and mismatched types.
json merge_config(const json& defaults, const json& user, const std::vector<std::string>& overrides);
json merge_config(const json& defaults, const std::optional<std::filesystem::path>& file,
                  const std::vector<std::string>& overrides);

struct TaskSpec {
  std::string kind;  // copy | adding | noisy | features
  json settings;
};

/// Effective, validated run configuration.
struct RunConfig {
  json effective;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir;
  training::ModelConfig model;
  training::TrainConfig train;
  TaskSpec task;
  tasks::TaskInfo task_info;
  std::size_t eval_samples = 0;
  std::size_t eval_batch = 0;
};

/// Validates every field and derives model sizes from the task.
RunConfig resolve(const json& merged);

/// Training stream for the configured task.
std::unique_ptr<tasks::SequenceSource> make_train_source(const RunConfig& cfg);
/// Fixed evaluation batches for the configured task, disjoint in seed from training.
std::vector<tasks::SequenceBatch> make_eval_batches(const RunConfig& cfg);

}  // namespace shuttle::cli
