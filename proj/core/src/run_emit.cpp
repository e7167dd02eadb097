#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "alqueue/harness.hpp"

namespace alqueue {

namespace fs = std::filesystem;

namespace {

std::string model_file_name(int version) {
  return "model_" + std::to_string(version) + ".trees";
}

void write_summary(const std::string& path, const RunConfig& cfg,
                   const RunResult& result, const std::string& label) {
  KeyValueFile kv;
  kv.set("label", label);
  echo_config(kv, cfg);
  const Counters& c = result.counters;
  kv.set_int("counters.generated", c.generated);
  kv.set_int("counters.simulated", c.simulated);
  kv.set_int("counters.stable", c.stable);
  kv.set_int("counters.duplicates", c.duplicates);
  kv.set_int("counters.invalid", c.invalid);
  kv.set_int("counters.retrains", c.retrains);
  kv.set_int("counters.finetunes", c.finetunes);
  kv.set_int("counters.rank_passes", c.rank_passes);
  kv.set_int("counters.in_flight_at_stop", c.in_flight_at_stop);
  for (int i = 0; i < kStageCount; ++i) {
    const auto stage = static_cast<Stage>(i);
    kv.set_double(std::string("ledger.") + stage_name(stage) + "_s",
                  result.ledger.seconds(stage));
  }
  kv.set_double("ledger.total_s", result.ledger.total());
  for (int i = 0; i < kStageCount; ++i) {
    const auto stage = static_cast<Stage>(i);
    kv.set_double(std::string("ledger.") + stage_name(stage) + "_share",
                  result.ledger.share(stage));
  }
  kv.set_int("result.cum_stable", static_cast<std::int64_t>(result.d_s_star.size()));
  kv.set_double("result.r_t",
                result.d_s.empty()
                    ? 0.0
                    : static_cast<double>(result.d_s_star.size()) / result.d_s.size());
  if (result.final_rmse) kv.set_double("result.final_rmse", *result.final_rmse);
  kv.set_double("result.clock_end", result.clock_end);
  kv.set_double("result.wall_seconds", result.wall_seconds);
  kv.write(path);
}

}  // namespace

RunResult run_to_dir(const RunConfig& cfg, const World& world,
                     const std::string& out_dir, const std::string& label,
                     SaveModels save) {
  fs::create_directories(out_dir);
  RunConfig effective = cfg;
  if (save == SaveModels::All) {
    const std::string dir = out_dir;
    effective.model_observer = [dir](int version, const SurrogateEnsemble& model) {
      model.save_file((fs::path(dir) / model_file_name(version)).string());
    };
  }

  RunResult result;
  try {
    result = run_workflow(effective, world.spec, world.spec.reference,
                          world.initial_generator, &world.holdout);
  } catch (const EngineAbort& abort) {
    write_events_csv((fs::path(out_dir) / "events.csv").string(), abort.events);
    throw;
  }

  write_events_csv((fs::path(out_dir) / "events.csv").string(), result.events);
  write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(),
                    compute_metrics(result.events));
  write_summary((fs::path(out_dir) / "summary.txt").string(), cfg, result, label);
  if (save == SaveModels::Final && result.final_model) {
    result.final_model->save_file(
        (fs::path(out_dir) / model_file_name(result.counters.retrains)).string());
  }
  write_dataset_csv((fs::path(out_dir) / "results.csv").string(), result.d_s);
  return result;
}

RunResult run_preset(const std::string& name, std::uint64_t seed, const World& world,
                     const std::string& out_dir, SaveModels save) {
  const Preset* p = find_preset(name);
  if (!p) throw std::invalid_argument("unknown preset: " + name);
  if (p->kind != PresetKind::Workflow) {
    throw std::invalid_argument("preset " + name +
                                " is a reordering strategy, not a workflow preset");
  }
  RunConfig cfg = preset_config(name);
  cfg.seed = seed;
  return run_to_dir(cfg, world, out_dir, name, save);
}

ReplayOutcome replay_run_dir(const std::string& dir) {
  ReplayOutcome out;
  const auto events = read_events_csv((fs::path(dir) / "events.csv").string());
  const LogCheck check = check_event_log(events);
  out.invariants_ok = check.ok;
  out.invariant_message = check.ok ? "ok" : check.message;

  const auto rows = compute_metrics(events);
  out.replay_path = (fs::path(dir) / "metrics_replay.csv").string();
  write_metrics_csv(out.replay_path, rows);

  const auto original_path = (fs::path(dir) / "metrics.csv").string();
  std::ifstream a(original_path, std::ios::binary);
  std::ifstream b(out.replay_path, std::ios::binary);
  if (a && b) {
    const std::string sa((std::istreambuf_iterator<char>(a)),
                         std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(b)),
                         std::istreambuf_iterator<char>());
    out.metrics_match = sa == sb;
  }
  return out;
}

}  // namespace alqueue
