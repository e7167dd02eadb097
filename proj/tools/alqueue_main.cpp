// alqueue: build synthetic worlds, run prioritized generation workflows,
// replay event logs, run offline reordering experiments, and compare runs.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "alqueue/harness.hpp"

namespace fs = std::filesystem;
using namespace alqueue;

namespace {

int cmd_world(std::uint64_t seed, const std::string& out_dir, WorldBuildParams params) {
  const World world = make_world(seed, out_dir, params);
  std::printf("world written to %s\n", out_dir.c_str());
  std::printf("  latent_dim=%d scale=%s noise_sd=%s\n", world.spec.latent_dim,
              format_double(world.spec.scale).c_str(),
              format_double(world.spec.noise_sd).c_str());
  std::printf("  initial stable rate %.4f, initial mean s_sa %.4f\n",
              world.spec.initial_stable_rate, world.spec.initial_mean_sa);
  std::printf("  reference %zu, holdout %zu, pool %zu records\n",
              world.spec.reference.size(), world.holdout.size(), world.pool.size());
  return 0;
}

void print_run_summary(const std::string& label, const RunResult& r) {
  std::printf("%s: simulated %lld, stable %lld (r_t %.4f), dups %lld, invalid %lld\n",
              label.c_str(), static_cast<long long>(r.counters.simulated),
              static_cast<long long>(r.counters.stable),
              r.d_s.empty() ? 0.0
                            : static_cast<double>(r.d_s_star.size()) / r.d_s.size(),
              static_cast<long long>(r.counters.duplicates),
              static_cast<long long>(r.counters.invalid));
  std::printf("  retrains %lld, finetunes %lld, rank passes %lld, clock %.1fs, wall %.1fs\n",
              static_cast<long long>(r.counters.retrains),
              static_cast<long long>(r.counters.finetunes),
              static_cast<long long>(r.counters.rank_passes), r.clock_end,
              r.wall_seconds);
  if (r.final_rmse) std::printf("  final holdout rmse %.5f\n", *r.final_rmse);
  std::printf("  stage shares:");
  for (int i = 0; i < kStageCount; ++i) {
    const auto stage = static_cast<Stage>(i);
    std::printf(" %s %.2f%%", stage_name(stage), 100.0 * r.ledger.share(stage));
  }
  std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"active-learning queue prioritization workflow simulator"};
  app.require_subcommand(1);

  // world ---------------------------------------------------------------
  auto* world_cmd = app.add_subcommand("world", "build and persist a calibrated world");
  std::uint64_t world_seed = 1;
  std::string world_out = "world";
  WorldBuildParams build_params;
  world_cmd->add_option("--seed", world_seed, "world seed");
  world_cmd->add_option("--out", world_out, "output directory")->required();
  world_cmd->add_option("--latent-dim", build_params.latent_dim, "latent dimension");
  world_cmd->add_option("--reference-size", build_params.reference_size,
                        "reference/pretraining records");
  world_cmd->add_option("--holdout-size", build_params.holdout_size, "holdout records");
  world_cmd->add_option("--pool-size", build_params.pool_size,
                        "offline reordering pool records");

  // run -----------------------------------------------------------------
  auto* run_cmd = app.add_subcommand("run", "run a workflow preset against a world");
  std::string run_preset_name = "basic-al";
  std::uint64_t run_seed = 1;
  std::string run_world_dir;
  std::string run_out;
  std::string run_config_file;
  std::string run_mode;
  std::string run_save_models = "final";
  std::int64_t run_n_target = -1;
  run_cmd->add_option("--preset", run_preset_name, "workflow preset name");
  run_cmd->add_option("--seed", run_seed, "run seed");
  run_cmd->add_option("--world", run_world_dir, "world directory")->required();
  run_cmd->add_option("--out", run_out, "output directory")->required();
  run_cmd->add_option("--config", run_config_file,
                      "key/value config file applied over the preset");
  run_cmd->add_option("--n-target", run_n_target, "results to accumulate");
  run_cmd->add_option("--mode", run_mode, "des or parallel");
  run_cmd->add_option("--save-models", run_save_models, "none, final, or all");

  // reorder ---------------------------------------------------------------
  auto* reorder_cmd =
      app.add_subcommand("reorder", "offline queue-reordering experiment on a pool");
  std::string reorder_world_dir;
  std::string reorder_pool_file;
  std::string reorder_strategy = "exploit-only";
  std::string reorder_out;
  ReorderParams reorder_params;
  int reorder_seed_count = 5;
  int reorder_budget = -1;
  reorder_cmd->add_option("--world", reorder_world_dir, "world directory")->required();
  reorder_cmd->add_option("--pool", reorder_pool_file,
                          "pool csv (default: <world>/pool.csv)");
  reorder_cmd->add_option("--strategy", reorder_strategy, "reordering preset name");
  reorder_cmd->add_option("--batch", reorder_params.batch, "records per acquisition");
  reorder_cmd->add_option("--warm", reorder_params.warm, "random warm-start records");
  reorder_cmd->add_option("--seeds", reorder_seed_count, "number of trial seeds");
  reorder_cmd->add_option("--budget", reorder_budget,
                          "records to acquire (-1: half pool, 0: exhaust)");
  reorder_cmd->add_option("--out", reorder_out, "output directory")->required();

  // compare ---------------------------------------------------------------
  auto* compare_cmd = app.add_subcommand("compare", "compare completed run directories");
  std::vector<std::string> compare_dirs;
  std::string compare_out;
  compare_cmd->add_option("dirs", compare_dirs, "run directories")->expected(-2);
  compare_cmd->add_option("--out", compare_out, "write aligned series csv here");

  // replay ----------------------------------------------------------------
  auto* replay_cmd =
      app.add_subcommand("replay", "recompute metrics from a run's event log");
  std::string replay_dir;
  replay_cmd->add_option("dir", replay_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (world_cmd->parsed()) {
      return cmd_world(world_seed, world_out, build_params);
    }

    if (run_cmd->parsed()) {
      const World world = load_world(run_world_dir);
      RunConfig cfg = preset_config(run_preset_name);
      cfg.seed = run_seed;
      if (!run_config_file.empty()) {
        cfg = apply_config_file(KeyValueFile::read(run_config_file), cfg);
      }
      if (run_n_target > 0) cfg.n_target = run_n_target;
      if (!run_mode.empty()) {
        if (run_mode == "des") {
          cfg.mode = RunMode::DeterministicEventSim;
        } else if (run_mode == "parallel") {
          cfg.mode = RunMode::Parallel;
        } else {
          throw std::invalid_argument("--mode must be des or parallel");
        }
      }
      SaveModels save = SaveModels::Final;
      if (run_save_models == "none") {
        save = SaveModels::None;
      } else if (run_save_models == "all") {
        save = SaveModels::All;
      } else if (run_save_models != "final") {
        throw std::invalid_argument("--save-models must be none, final, or all");
      }
      const RunResult result =
          run_to_dir(cfg, world, run_out, run_preset_name, save);
      print_run_summary(run_preset_name, result);
      std::printf("run artifacts in %s\n", run_out.c_str());
      return 0;
    }

    if (reorder_cmd->parsed()) {
      const Preset* p = find_preset(reorder_strategy);
      if (!p) throw std::invalid_argument("unknown strategy: " + reorder_strategy);
      const World world = load_world(reorder_world_dir);
      const Dataset pool =
          reorder_pool_file.empty()
              ? world.pool
              : read_dataset_csv(reorder_pool_file, world.spec.maps);
      reorder_params.strategy = p->acquisition;
      reorder_params.budget = reorder_budget;
      reorder_params.seeds.clear();
      for (int s = 1; s <= reorder_seed_count; ++s) reorder_params.seeds.push_back(s);
      const ReorderResult result = reorder_experiment(pool, world.holdout, reorder_params);
      fs::create_directories(reorder_out);
      const auto csv = (fs::path(reorder_out) / ("reorder_" + reorder_strategy + ".csv")).string();
      write_reorder_csv(csv, reorder_strategy, result);
      std::printf("%s: final mean cum_stable %.1f, final mean rmse %.5f (%zu checkpoints)\n",
                  reorder_strategy.c_str(), result.mean_cum_stable.back(),
                  result.mean_rmse.back(), result.n_acquired.size());
      std::printf("series written to %s\n", csv.c_str());
      return 0;
    }

    if (compare_cmd->parsed()) {
      const Comparison c = compare_runs(compare_dirs);
      std::fputs(comparison_text(c).c_str(), stdout);
      if (!compare_out.empty()) {
        write_comparison_csv(compare_out, c);
        std::printf("aligned series written to %s\n", compare_out.c_str());
      }
      return 0;
    }

    if (replay_cmd->parsed()) {
      const ReplayOutcome out = replay_run_dir(replay_dir);
      std::printf("invariants: %s\n", out.invariants_ok ? "ok" : out.invariant_message.c_str());
      std::printf("metrics replay: %s (%s)\n",
                  out.metrics_match ? "byte-identical" : "MISMATCH",
                  out.replay_path.c_str());
      return out.invariants_ok && out.metrics_match ? 0 : 1;
    }
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 0;
}
