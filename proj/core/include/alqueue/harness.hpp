#pragma once
// Experiment harness: the preset matrix, metrics emission and replay, world
// file persistence, the offline reordering experiment, and multi-run
// comparison reports. The CLI in tools/ is a thin wrapper over this.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "alqueue/engine.hpp"
#include "alqueue/io.hpp"

namespace alqueue {

inline constexpr int kMetricsCadence = 10;  // checkpoint every N results
inline constexpr int kMetricsWindow = 100;  // trailing window for cheap scores

// Presets -------------------------------------------------------------------

enum class PresetKind : std::uint8_t { Reorder, Workflow };

struct Preset {
  std::string name;
  std::string description;
  PresetKind kind = PresetKind::Workflow;
  AcquisitionSpec acquisition;
  double ft_fraction = 0.5;
  bool active_learning = true;  // false: surrogate retraining disabled
};

const std::vector<Preset>& presets();
const Preset* find_preset(const std::string& name);

// Defaults plus the preset's deltas; throws on unknown names.
RunConfig preset_config(const std::string& name);

// Config files: flat key/value mirroring RunConfig fields (e.g. `n_target`,
// `acquisition.mode`, `latency.sim_median_s`). Present keys override `base`.
RunConfig apply_config_file(const KeyValueFile& kv, RunConfig base);
void echo_config(KeyValueFile& kv, const RunConfig& cfg);

// Metrics -------------------------------------------------------------------

struct MetricsRow {
  std::int64_t n_simulated = 0;
  std::int64_t cum_stable = 0;
  std::optional<double> holdout_rmse;  // latest retrain's figure
  double win_sa = 0.0;                 // trailing-window mean
  double win_t = 0.0;
  double r_t = 0.0;                    // cum_stable / n_simulated
};

// Pure function of the event log; the engine path and the replay tool both
// go through here, so metrics.csv is reproducible from events.csv alone.
std::vector<MetricsRow> compute_metrics(const std::vector<Event>& events);

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

// Event-log validation: per-candidate state machine, pop/rank atomicity by
// model-version stamps, non-negative queue and in-flight occupancy, and the
// final in-flight count against the STOP record.
struct LogCheck {
  bool ok = true;
  std::string message;
  Counters counters;
};
LogCheck check_event_log(const std::vector<Event>& events);

// World persistence ---------------------------------------------------------
// A world directory holds world.meta (seeds, geometry, calibration, initial
// generator), world.csv (labeled reference = pretraining set), holdout.csv,
// and pool.csv (reference rows + generator rows for offline reordering).

void save_world(const World& world, const std::string& dir);
World load_world(const std::string& dir);

// build_world + save_world; returns the built world.
World make_world(std::uint64_t seed, const std::string& out_dir,
                 const WorldBuildParams& params = {});

// Workflow runs -------------------------------------------------------------

enum class SaveModels : std::uint8_t { None, Final, All };

// Runs the workflow and writes events.csv, metrics.csv, summary.txt, and
// model_{version}.trees files per `save` into out_dir.
RunResult run_to_dir(const RunConfig& cfg, const World& world,
                     const std::string& out_dir, const std::string& label,
                     SaveModels save = SaveModels::Final);

// preset_config + seed + run_to_dir.
RunResult run_preset(const std::string& name, std::uint64_t seed, const World& world,
                     const std::string& out_dir, SaveModels save = SaveModels::Final);

// Reordering experiment ------------------------------------------------------

struct ReorderParams {
  AcquisitionSpec strategy;
  int batch = 200;
  int warm = 200;
  // Acquisition budget in records: -1 = half the pool, 0 = exhaust the pool.
  int budget = -1;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  SurrogateParams surrogate;
  Thresholds thresholds;
};

struct ReorderSeries {
  std::uint64_t seed = 0;
  std::vector<std::int64_t> n_acquired;
  std::vector<std::int64_t> cum_stable;
  std::vector<double> holdout_rmse;
};

struct ReorderResult {
  std::vector<ReorderSeries> per_seed;
  // Seed-averaged curves on the shared checkpoint grid.
  std::vector<std::int64_t> n_acquired;
  std::vector<double> mean_cum_stable;
  std::vector<double> mean_rmse;
};

// Offline: the pool is fully labeled, no oracle calls. Seeds `warm` random
// records, then repeatedly retrains on the acquired set, ranks the remainder,
// and acquires the top `batch` until the budget is spent.
ReorderResult reorder_experiment(const Dataset& pool, const Dataset& holdout,
                                 const ReorderParams& params);

void write_reorder_csv(const std::string& path, const std::string& strategy,
                       const ReorderResult& result);

// Comparison ----------------------------------------------------------------

struct RunDigest {
  std::string dir;
  std::string label;
  std::uint64_t seed = 0;
  std::int64_t cum_stable = 0;
  double r_t = 0.0;
  std::optional<double> final_rmse;
  double prioritize_share = 0.0;
  std::vector<MetricsRow> series;
};

struct Comparison {
  std::vector<RunDigest> runs;
  std::size_t aligned_rows = 0;
  std::vector<std::string> warnings;
};

// Throws on missing or corrupt run files; needs >= 2 directories.
Comparison compare_runs(const std::vector<std::string>& run_dirs);

void write_comparison_csv(const std::string& path, const Comparison& c);
std::string comparison_text(const Comparison& c);

// Replay --------------------------------------------------------------------

struct ReplayOutcome {
  bool invariants_ok = false;
  std::string invariant_message;
  bool metrics_match = false;  // vs the metrics.csv already in the directory
  std::string replay_path;
};

// Recomputes metrics from events.csv, writes metrics_replay.csv, validates
// the log invariants, and byte-compares against the existing metrics.csv.
ReplayOutcome replay_run_dir(const std::string& dir);

}  // namespace alqueue
