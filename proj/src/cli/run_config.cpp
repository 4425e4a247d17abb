#include "shuttle/cli/run_config.hpp"

#include <fstream>
#include <sstream>

#include "shuttle/errors.hpp"
#include "shuttle/tasks/feature_file.hpp"
#include "shuttle/tasks/generators.hpp"
#include "shuttle/training/evaluate.hpp"

namespace shuttle::cli {

namespace {

// Keys whose default is null accept these types instead.
bool nullable_accepts(const std::string& key, const json& value) {
  if (value.is_null()) return true;
  if (key == "decay_steps") return value.is_array();
  if (key == "grad_clip_norm") return value.is_number();
  return false;
}

bool same_kind(const json& def, const json& value) {
  if (def.is_boolean()) return value.is_boolean();
  if (def.is_number_integer() || def.is_number_unsigned()) return value.is_number_integer() || value.is_number_unsigned();
  if (def.is_number()) return value.is_number();
  if (def.is_string()) return value.is_string();
  if (def.is_array()) return value.is_array();
  if (def.is_object()) return value.is_object();
  return false;
}

void merge_into(json& target, const json& src, const json& defaults, const std::string& path) {
  if (!src.is_object()) throw ContractError("config: '" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.contains(it.key())) throw ContractError("config: unknown key '" + key_path + "'");
    const json& def = defaults.at(it.key());
    if (def.is_object()) {
      merge_into(target[it.key()], it.value(), def, key_path);
      continue;
    }
    const bool ok = def.is_null() ? nullable_accepts(it.key(), it.value()) : same_kind(def, it.value());
    if (!ok) throw ContractError("config: '" + key_path + "' has the wrong type (" + it.value().dump() + ")");
    target[it.key()] = it.value();
  }
}

std::size_t positive(const json& j, const char* key, const std::string& section) {
  const auto v = j.at(key).get<long long>();
  if (v < 1) throw ContractError("config: '" + section + "." + key + "' must be >= 1");
  return static_cast<std::size_t>(v);
}

}  // namespace

json default_config() {
  return json{
      {"schema_version", kConfigSchemaVersion},
      {"seed", 1},
      {"output_dir", "run"},
      {"model",
       {{"kind", "shuttle"}, {"N", 2}, {"D", 2}, {"K", 1}, {"state_size", 32}, {"projector", true}, {"baseline_layers", 2}}},
      {"train",
       {{"optimizer", "sgd_momentum"},
        {"lr", 0.01},
        {"momentum", 0.9},
        {"rho", 0.9},
        {"rms_eps", 1e-10},
        {"decay_steps", nullptr},
        {"decay_factor", 0.1},
        {"max_iters", 1000},
        {"batch_size", 16},
        {"grad_clip_norm", nullptr}}},
      {"task",
       {{"kind", "noisy"},
        {"steps", 16},
        {"features", 8},
        {"classes", 4},
        {"noise", 1.0},
        {"prototype_seed", 7},
        {"symbols", 8},
        {"payload", 5},
        {"gap", 20},
        {"path", ""},
        {"eval_path", ""},
        {"shuffle", true}}},
      {"eval", {{"samples", 512}, {"batch_size", 64}}},
  };
}

json gradcheck_preset() {
  json j = default_config();
  j["model"].update({{"N", 3}, {"D", 2}, {"K", 1}, {"state_size", 8}, {"projector", true}});
  j["task"].update({{"kind", "noisy"}, {"steps", 5}, {"features", 5}, {"classes", 3}});
  j["train"]["batch_size"] = 4;
  return j;
}

std::pair<std::vector<std::string>, json> parse_override(const std::string& arg) {
  std::string body = arg;
  if (body.rfind("--", 0) == 0) body = body.substr(2);
  const auto eq = body.find('=');
  if (eq == std::string::npos || eq == 0) throw ContractError("override '" + arg + "' must look like --key.path=value");
  const std::string key = body.substr(0, eq);
  const std::string raw = body.substr(eq + 1);
  std::vector<std::string> path;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw ContractError("override '" + arg + "' has an empty key segment");
    path.push_back(part);
  }
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  return {path, value};
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("config: cannot open '" + path.string() + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ContractError("config: '" + path.string() + "' is not valid JSON");
  return j;
}

json merge_config(const json& defaults, const json& user, const std::vector<std::string>& overrides) {
  json merged = defaults;
  merge_into(merged, user, defaults, "");
  for (const auto& arg : overrides) {
    auto [path, value] = parse_override(arg);
    json patch = std::move(value);
    for (auto it = path.rbegin(); it != path.rend(); ++it) patch = json{{*it, std::move(patch)}};
    merge_into(merged, patch, defaults, "");
  }
  if (merged.at("schema_version").get<int>() != kConfigSchemaVersion) {
    throw ContractError("config: unsupported schema_version " + merged.at("schema_version").dump());
  }
  return merged;
}

json merge_config(const json& defaults, const std::optional<std::filesystem::path>& file,
                  const std::vector<std::string>& overrides) {
  return merge_config(defaults, file ? load_json_file(*file) : json::object(), overrides);
}

RunConfig resolve(const json& merged) {
  RunConfig rc;
  rc.effective = merged;
  try {
    const auto seed = merged.at("seed").get<long long>();
    if (seed < 0) throw ContractError("config: 'seed' must be >= 0");
    rc.seed = static_cast<std::uint64_t>(seed);
    rc.output_dir = merged.at("output_dir").get<std::string>();

    const json& task = merged.at("task");
    rc.task.kind = task.at("kind").get<std::string>();
    rc.task.settings = task;
    if (rc.task.kind == "copy") {
      tasks::CopyTask probe({positive(task, "symbols", "task"), positive(task, "payload", "task"), task.at("gap").get<std::size_t>()}, 0);
      rc.task_info = probe.info();
    } else if (rc.task.kind == "adding") {
      if (task.at("steps").get<long long>() < 2) throw ContractError("config: 'task.steps' must be >= 2 for the adding problem");
      rc.task_info = tasks::AddingProblem({task.at("steps").get<std::size_t>()}, 0).info();
    } else if (rc.task.kind == "noisy") {
      if (task.at("classes").get<long long>() < 2) throw ContractError("config: 'task.classes' must be >= 2");
      rc.task_info = {"noisy", positive(task, "features", "task"), positive(task, "steps", "task"),
                      task.at("classes").get<std::size_t>(), tasks::LossKind::labelled_steps};
    } else if (rc.task.kind == "features") {
      if (task.at("path").get<std::string>().empty()) throw ContractError("config: 'task.path' is required for feature tasks");
      if (task.at("classes").get<long long>() < 1) throw ContractError("config: 'task.classes' must be >= 1");
      const auto records = tasks::read_feature_file(task.at("path").get<std::string>());
      if (records.empty()) throw ContractError("config: feature file holds no records");
      rc.task_info = {"features", records.front().features, records.front().steps, task.at("classes").get<std::size_t>(),
                      tasks::LossKind::labelled_steps};
    } else {
      throw ContractError("config: unknown task kind '" + rc.task.kind + "'");
    }

    const json& model = merged.at("model");
    rc.model.kind = training::parse_model_kind(model.at("kind").get<std::string>());
    rc.model.shuttle.processors = positive(model, "N", "model");
    rc.model.shuttle.steps = positive(model, "D", "model");
    rc.model.shuttle.stride = positive(model, "K", "model");
    rc.model.shuttle.state_size = positive(model, "state_size", "model");
    rc.model.shuttle.projector = model.at("projector").get<bool>();
    rc.model.shuttle.input_size = rc.task_info.feature_size;
    rc.model.baseline_layers = positive(model, "baseline_layers", "model");
    rc.model.outputs = rc.task_info.classes == 0 ? 1 : rc.task_info.classes;
    rc.model.validate();

    const json& train = merged.at("train");
    rc.train.optimizer.kind = training::parse_optimizer_kind(train.at("optimizer").get<std::string>());
    rc.train.optimizer.momentum = train.at("momentum").get<double>();
    rc.train.optimizer.rho = train.at("rho").get<double>();
    rc.train.optimizer.eps = train.at("rms_eps").get<double>();
    rc.train.initial_lr = train.at("lr").get<double>();
    rc.train.decay_factor = train.at("decay_factor").get<double>();
    rc.train.max_iters = train.at("max_iters").get<std::size_t>();
    rc.train.batch_size = positive(train, "batch_size", "train");
    if (train.at("decay_steps").is_null()) {
      rc.train.decay_steps = training::proportional_decay_steps(rc.train.max_iters);
    } else {
      for (const auto& v : train.at("decay_steps")) {
        if (!v.is_number_integer() || v.get<long long>() < 0) throw ContractError("config: 'train.decay_steps' must hold iteration indices");
        rc.train.decay_steps.push_back(v.get<std::size_t>());
      }
    }
    if (!train.at("grad_clip_norm").is_null()) rc.train.grad_clip_norm = train.at("grad_clip_norm").get<double>();
    if (rc.train.optimizer.rho < 0.0 || rc.train.optimizer.rho >= 1.0) throw ContractError("config: 'train.rho' must lie in [0, 1)");
    if (!(rc.train.optimizer.eps > 0.0)) throw ContractError("config: 'train.rms_eps' must be > 0");
    rc.train.validate();
    if (rc.model.kind == training::ModelKind::shuttle && rc.model.shuttle.projector && rc.train.batch_size < 2) {
      throw ContractError("config: the projector's batch normalization needs train.batch_size >= 2");
    }

    const json& eval = merged.at("eval");
    rc.eval_samples = positive(eval, "samples", "eval");
    rc.eval_batch = positive(eval, "batch_size", "eval");
  } catch (const json::exception& e) {
    throw ContractError(std::string("config: ") + e.what());
  }
  return rc;
}

std::unique_ptr<tasks::SequenceSource> make_train_source(const RunConfig& cfg) {
  const json& t = cfg.task.settings;
  if (cfg.task.kind == "copy") {
    return std::make_unique<tasks::CopyTask>(
        tasks::CopyTaskParams{t.at("symbols").get<std::size_t>(), t.at("payload").get<std::size_t>(), t.at("gap").get<std::size_t>()},
        cfg.seed);
  }
  if (cfg.task.kind == "adding") return std::make_unique<tasks::AddingProblem>(tasks::AddingParams{t.at("steps").get<std::size_t>()}, cfg.seed);
  if (cfg.task.kind == "noisy") {
    return std::make_unique<tasks::NoisyClassification>(
        tasks::NoisyClassificationParams{t.at("classes").get<std::size_t>(), t.at("steps").get<std::size_t>(),
                                         t.at("features").get<std::size_t>(), t.at("noise").get<double>(),
                                         t.at("prototype_seed").get<std::uint64_t>()},
        cfg.seed);
  }
  return std::make_unique<tasks::FeatureDataset>(tasks::read_feature_file(t.at("path").get<std::string>()),
                                                 cfg.task_info.classes, t.at("shuffle").get<bool>(), cfg.seed);
}

std::vector<tasks::SequenceBatch> make_eval_batches(const RunConfig& cfg) {
  const json& t = cfg.task.settings;
  if (cfg.task.kind == "features") {
    const std::string eval_path = t.at("eval_path").get<std::string>();
    const std::string path = eval_path.empty() ? t.at("path").get<std::string>() : eval_path;
    tasks::FeatureDataset data(tasks::read_feature_file(path), cfg.task_info.classes, false, 0);
    return data.all_batches(cfg.eval_batch);
  }
  RunConfig shifted = cfg;
  // Held-out stream: same task, unrelated seed.
  shifted.seed = cfg.seed ^ 0x9e3779b97f4a7c15ULL;
  auto source = make_train_source(shifted);
  return training::draw_batches(*source, cfg.eval_samples, cfg.eval_batch);
}

}  // namespace shuttle::cli
