#include "shuttle/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "shuttle/cells/param_count.hpp"
#include "shuttle/cli/checkpoint.hpp"
#include "shuttle/cli/run_config.hpp"
#include "shuttle/errors.hpp"
#include "shuttle/layer/graph_export.hpp"
#include "shuttle/numerics/tape.hpp"
#include "shuttle/tasks/feature_file.hpp"
#include "shuttle/tasks/generators.hpp"
#include "shuttle/training/evaluate.hpp"
#include "shuttle/verify/equivalence.hpp"
#include "shuttle/verify/gradcheck.hpp"

namespace shuttle::cli {

namespace {

namespace fs = std::filesystem;

constexpr int kSummarySchemaVersion = 1;
constexpr std::size_t kGradCheckParamLimit = 20000;
constexpr std::size_t kEquivalenceProbes = 100;

struct Common {
  std::string config_path;
  std::optional<long long> seed;
  std::vector<std::string> overrides;

  std::optional<fs::path> file() const {
    if (config_path.empty()) return std::nullopt;
    return fs::path(config_path);
  }

  std::vector<std::string> all_overrides() const {
    std::vector<std::string> out = overrides;
    if (seed) out.push_back("--seed=" + std::to_string(*seed));
    return out;
  }
};

json metrics_json(const training::EvalMetrics& m) {
  json per_class = json::array();
  for (double a : m.per_class_accuracy) per_class.push_back(std::isnan(a) ? json(nullptr) : json(a));
  return {{"accuracy", m.accuracy},
          {"mean_loss", m.mean_loss},
          {"per_class_accuracy", per_class},
          {"attention_entropy", m.attention_entropy},
          {"samples", m.samples},
          {"scored", m.scored}};
}

json breakdown_json(const RunConfig& rc, const training::Model& model) {
  std::size_t head = model.params().value("head/W").size() + model.params().value("head/b").size();
  json j = {{"trainable", model.trainable_count()}, {"head", head}};
  if (rc.model.kind == training::ModelKind::shuttle) {
    const auto b = layer::shuttle_param_count(rc.model.shuttle);
    j.update({{"projector", b.projector},
              {"processors", b.processors},
              {"attention", b.attention},
              {"total", b.total},
              {"running_stats", b.running_stats}});
  }
  return j;
}

int cmd_train(const Common& common, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  auto overrides = common.all_overrides();
  if (!out_dir.empty()) overrides.push_back("--output_dir=\"" + out_dir + "\"");
  const RunConfig rc = resolve(merge_config(default_config(), common.file(), overrides));

  training::Model model(rc.model, rc.seed);
  auto source = make_train_source(rc);
  const auto start = std::chrono::steady_clock::now();
  training::TrainLog log;
  try {
    log = training::train(model, *source, rc.train);
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  }
  const auto eval_batches = make_eval_batches(rc);
  const auto metrics = training::evaluate(model, eval_batches);
  const double wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  fs::create_directories(rc.output_dir);
  {
    std::ofstream csv(rc.output_dir / "train_log.csv");
    if (!csv) throw FormatError("cannot write '" + (rc.output_dir / "train_log.csv").string() + "'");
    training::write_log_csv(csv, log);
  }
  save_checkpoint(rc.output_dir / "checkpoint.shck", snapshot(model, rc.effective));

  json summary = {{"schema_version", kSummarySchemaVersion},
                  {"command", "train"},
                  {"config", rc.effective},
                  {"params", breakdown_json(rc, model)},
                  {"iterations", log.rows.size()},
                  {"final_train_loss", log.rows.empty() ? json(nullptr) : json(log.rows.back().loss)},
                  {"final_train_accuracy", log.rows.empty() ? json(nullptr) : json(log.rows.back().accuracy)},
                  {"eval", metrics_json(metrics)},
                  {"wall_ms", wall_ms}};
  {
    std::ofstream js(rc.output_dir / "summary.json");
    if (!js) throw FormatError("cannot write '" + (rc.output_dir / "summary.json").string() + "'");
    js << summary.dump(2) << '\n';
  }
  out << "trained " << log.rows.size() << " iterations; eval loss " << metrics.mean_loss << ", accuracy "
      << metrics.accuracy << "; outputs in " << rc.output_dir.string() << '\n';
  return kExitOk;
}

int cmd_eval(const Common& common, const std::string& checkpoint_path, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const json base = common.file() ? load_json_file(*common.file()) : ck.config;
  const RunConfig rc = resolve(merge_config(default_config(), base, common.all_overrides()));
  training::Model model = restore(rc.model, ck);
  const auto metrics = training::evaluate(model, make_eval_batches(rc));
  out << json{{"schema_version", kSummarySchemaVersion}, {"command", "eval"}, {"eval", metrics_json(metrics)}}.dump(2)
      << '\n';
  return kExitOk;
}

int cmd_gradcheck(const Common& common, const std::string& fault_op, std::ostream& out, std::ostream& err) {
  const RunConfig rc = resolve(merge_config(gradcheck_preset(), common.file(), common.all_overrides()));
  training::Model model(rc.model, rc.seed);
  if (model.trainable_count() > kGradCheckParamLimit) {
    err << "gradcheck: model has " << model.trainable_count() << " parameters; finite differencing is limited to "
        << kGradCheckParamLimit << '\n';
    return kExitUsage;
  }
  auto source = make_train_source(rc);
  const auto batch = source->next(rc.train.batch_size);
  if (!fault_op.empty()) set_backward_fault(fault_op, 1.5);
  verify::GradCheckReport report;
  try {
    report = verify::gradient_check(model, batch);
  } catch (...) {
    clear_backward_fault();
    throw;
  }
  clear_backward_fault();

  out << std::left << std::setw(24) << "group" << std::setw(16) << "worst rel err" << "parameter\n";
  bool ok = true;
  for (const auto& g : report.groups) {
    const bool pass = g.worst_relative < verify::kGradCheckTolerance;
    ok = ok && pass;
    out << std::left << std::setw(24) << g.group << std::setw(16) << std::scientific << std::setprecision(3)
        << g.worst_relative << g.worst_param << (pass ? "" : "  FAIL") << '\n';
  }
  out << std::defaultfloat << model.trainable_count() << " parameters checked in " << report.seconds << " s: "
      << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? kExitOk : kExitVerificationFailed;
}

int cmd_params(const Common& common, std::ostream& out) {
  const RunConfig rc = resolve(merge_config(default_config(), common.file(), common.all_overrides()));
  const auto& sc = rc.model.shuttle;
  const auto b = layer::shuttle_param_count(sc);
  out << "shuttle layer N=" << sc.processors << " D=" << sc.steps << " K=" << sc.stride << " s=" << sc.state_size
      << " F=" << sc.input_size << (sc.projector ? "" : " (no projector)") << '\n';
  out << std::left << std::setw(14) << "projector" << b.projector << '\n';
  out << std::left << std::setw(14) << "processors" << b.processors << '\n';
  out << std::left << std::setw(14) << "attention" << b.attention << '\n';
  out << std::left << std::setw(14) << "total" << b.total << '\n';
  out << "running statistics (not trained): " << b.running_stats << '\n';
  out << "classifier head: " << rc.model.outputs * sc.state_size + rc.model.outputs << '\n';
  const std::size_t layers = rc.model.baseline_layers;
  for (auto kind : {cells::CellKind::gru, cells::CellKind::lstm}) {
    const std::size_t first = cells::param_count(kind, sc.input_size, sc.state_size);
    const std::size_t rest = cells::param_count(kind, sc.state_size, sc.state_size);
    out << layers << "-layer " << cells::to_string(kind) << " baseline: " << first + (layers - 1) * rest << '\n';
  }
  return kExitOk;
}

int cmd_export_graph(const Common& common, const std::string& out_path, std::ostream& out, std::ostream& err) {
  const RunConfig rc = resolve(merge_config(default_config(), common.file(), common.all_overrides()));
  const auto graph = layer::pathway_graph(rc.model.shuttle);
  std::ofstream file(out_path);
  if (!file) {
    err << "export-graph: cannot write '" << out_path << "'\n";
    return kExitUsage;
  }
  file << graph.dot;
  if (!file) {
    err << "export-graph: failed writing '" << out_path << "'\n";
    return kExitUsage;
  }
  out << "nodes " << graph.counts.processor_nodes << ", input edges " << graph.counts.input_edges
      << ", inter-step edges " << graph.counts.inter_step_edges << ", output edges " << graph.counts.output_edges << '\n';
  return kExitOk;
}

int cmd_equivalence(const Common& common, std::ostream& out) {
  const RunConfig rc = resolve(merge_config(default_config(), common.file(), common.all_overrides()));
  const std::size_t s = rc.model.shuttle.state_size;
  const std::vector<verify::EquivalenceResult> results = {
      verify::check_single_gru(s, 4, kEquivalenceProbes, rc.seed),
      verify::check_gru_bank(3, s, 4, kEquivalenceProbes, rc.seed + 1),
      verify::check_shared_stack(3, s, 4, kEquivalenceProbes, rc.seed + 2),
  };
  bool ok = true;
  for (const auto& r : results) {
    const bool pass = r.max_deviation <= verify::kEquivalenceTolerance;
    ok = ok && pass;
    out << std::left << std::setw(44) << r.name << "max |diff| " << std::scientific << std::setprecision(3)
        << r.max_deviation << " over " << r.probes << " probes " << (pass ? "PASS" : "FAIL") << '\n';
  }
  return ok ? kExitOk : kExitVerificationFailed;
}

int cmd_gen_task(const Common& common, const std::string& out_path, std::optional<long long> count, std::ostream& out) {
  const RunConfig rc = resolve(merge_config(default_config(), common.file(), common.all_overrides()));
  if (rc.task.kind != "noisy" && rc.task.kind != "features") {
    throw ContractError("gen-task: feature files hold one class label per sequence; task '" + rc.task.kind +
                        "' cannot be stored");
  }
  const std::size_t n = count ? static_cast<std::size_t>(std::max(1LL, *count)) : rc.eval_samples;
  auto source = make_train_source(rc);
  const auto records = tasks::records_from_batch(source->next(n));
  tasks::write_feature_file(out_path, records);
  out << "wrote " << records.size() << " sequences (T=" << rc.task_info.steps << ", F=" << rc.task_info.feature_size
      << ") to " << out_path << '\n';
  return kExitOk;
}

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("config", common.config_path, "JSON config file");
  cmd->add_option("--seed", common.seed, "Override the seed");
  cmd->allow_extras();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"loop-connected recurrent layer toolkit", "shuttlenet"};
  app.require_subcommand(1);

  Common common;
  std::string out_dir;
  std::string checkpoint;
  std::string fault_op;
  std::string out_path;
  std::optional<long long> count;

  auto* train = app.add_subcommand("train", "Train a model and write log, checkpoint and summary");
  add_common(train, common);
  train->add_option("--out-dir", out_dir, "Output directory (overrides output_dir)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint in inference mode");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
  add_common(gradcheck, common);
  gradcheck->add_option("--inject-fault", fault_op, "Corrupt the backward rule of an op (negative control)")
      ->group("");

  auto* params = app.add_subcommand("params", "Print the parameter breakdown");
  add_common(params, common);

  auto* graph = app.add_subcommand("export-graph", "Write the pathway topology as DOT");
  add_common(graph, common);
  graph->add_option("--out", out_path, "DOT output path")->required();

  auto* equivalence = app.add_subcommand("equivalence", "Check the degenerate-configuration equivalences");
  add_common(equivalence, common);

  auto* gen = app.add_subcommand("gen-task", "Write a synthetic task as a feature file");
  add_common(gen, common);
  gen->add_option("--out", out_path, "Feature file path")->required();
  gen->add_option("--count", count, "Number of sequences");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (auto* sub : app.get_subcommands()) {
      for (const auto& extra : sub->remaining()) {
        if (extra.rfind("--", 0) != 0 || extra.find('=') == std::string::npos) {
          err << "unrecognized argument '" << extra << "' (overrides look like --section.key=value)\n";
          return kExitUsage;
        }
        common.overrides.push_back(extra);
      }
    }
    if (!common.config_path.empty() && !fs::exists(common.config_path)) {
      err << "config file not found: " << common.config_path << '\n';
      return kExitUsage;
    }
    if (train->parsed()) return cmd_train(common, out_dir, out, err);
    if (eval->parsed()) return cmd_eval(common, checkpoint, out);
    if (gradcheck->parsed()) return cmd_gradcheck(common, fault_op, out, err);
    if (params->parsed()) return cmd_params(common, out);
    if (graph->parsed()) return cmd_export_graph(common, out_path, out, err);
    if (equivalence->parsed()) return cmd_equivalence(common, out);
    if (gen->parsed()) return cmd_gen_task(common, out_path, count, out);
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace shuttle::cli
