#pragma once
// The control loop: generation queue and prioritized queue, asynchronous
// simulation workers, surrogate retrain triggers, re-ranking, result
// accumulation, generator fine-tuning, and termination at n_target results.
// The primary execution mode is a single-threaded discrete-event simulation
// with a simulated clock; parallel mode drives the same policies with real
// threads to validate the coordinator-ownership contract.

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "alqueue/acquisition.hpp"
#include "alqueue/core.hpp"
#include "alqueue/domain.hpp"
#include "alqueue/surrogate.hpp"

namespace alqueue {

enum class Stage : std::uint8_t { Generate, FineTune, Prioritize, Validate, Simulate };
inline constexpr int kStageCount = 5;

const char* stage_name(Stage s);

// Accumulated cost per workflow stage: simulated seconds in event-sim mode,
// measured wall seconds in parallel mode.
class CostLedger {
 public:
  void account(Stage stage, double seconds);
  double seconds(Stage stage) const { return seconds_[static_cast<int>(stage)]; }
  double total() const;
  double share(Stage stage) const;  // 0 when the ledger is empty

 private:
  double seconds_[kStageCount] = {0, 0, 0, 0, 0};
};

// Simulated wall-latency parameters. Defaults mirror the reported hardware
// profile: 48 CPUs working through 1000 simulations in about two hours, one
// CPU spending ~16 s per re-prioritization, re-prioritization triggering
// ~125 times per run (hence the cooldown), and a single assembly/validation
// CPU.
struct LatencyModel {
  double sim_median_s = 345.0;
  double sim_sigma = 0.3;  // log-normal; 0 gives the constant model
  double generate_batch_s = 70.0;
  double validate_s = 3.0;  // per generated candidate
  double finetune_s = 180.0;
  double prioritize_retrain_s = 16.0;  // retrain + inference + sort
  double prioritize_rank_s = 1.0;      // cheap re-sort on batch arrival
  double retrain_cooldown_s = 60.0;    // min spacing between retrain starts
};

enum class RunMode : std::uint8_t { DeterministicEventSim, Parallel };

struct RunConfig {
  std::int64_t n_target = 1000;
  std::uint64_t seed = 1;
  AcquisitionSpec acquisition;
  double ft_fraction = 0.5;
  std::int64_t ft_trigger = 32;  // new results per generator fine-tune
  int gen_batch = 64;
  std::int64_t retrain_batch = 1;  // 0 disables the surrogate entirely
  int workers = 48;
  RunMode mode = RunMode::DeterministicEventSim;
  LatencyModel latency;
  Thresholds thresholds;
  SurrogateParams surrogate;
  FineTuneParams finetune;
  double parallel_time_scale = 0.0;  // fraction of simulated latency slept

  // Invoked on the coordinator after each model swap (checkpointing hook).
  std::function<void(int version, const SurrogateEnsemble&)> model_observer;

  void validate() const;
};

enum class EventKind : std::uint8_t {
  Gen, Rank, Pop, SimDone, Retrain, Finetune, DiscardDup, DiscardInvalid, Stop
};

const char* event_kind_name(EventKind k);
EventKind event_kind_from_name(const std::string& name);

struct Event {
  double clock = 0.0;
  EventKind kind = EventKind::Gen;
  std::int64_t candidate_id = -1;
  int model_version = 0;
  int generator_version = 0;
  std::string detail;
};

// clock,event,candidate_id,model_version,generator_version,detail
void write_events_csv(const std::string& path, const std::vector<Event>& events);
std::vector<Event> read_events_csv(const std::string& path);

// Helpers for the key=value;key=value detail field.
std::string detail_get(const std::string& detail, const std::string& key);

struct Counters {
  std::int64_t generated = 0;
  std::int64_t simulated = 0;
  std::int64_t stable = 0;
  std::int64_t duplicates = 0;
  std::int64_t invalid = 0;
  std::int64_t retrains = 0;
  std::int64_t finetunes = 0;
  std::int64_t rank_passes = 0;
  std::int64_t in_flight_at_stop = 0;
};

struct RunResult {
  Dataset d_s;
  Dataset d_s_star;
  std::vector<Event> events;
  CostLedger ledger;
  Counters counters;
  Generator final_generator;
  std::optional<SurrogateEnsemble> final_model;
  std::optional<double> final_rmse;
  double clock_end = 0.0;    // simulated (or elapsed wall) seconds
  double wall_seconds = 0.0; // real time spent executing the run
};

// Worker failures in parallel mode surface as this, carrying the event log
// accumulated so far so callers can flush it.
struct EngineAbort : std::runtime_error {
  EngineAbort(const std::string& msg, std::vector<Event> ev)
      : std::runtime_error(msg), events(std::move(ev)) {}
  std::vector<Event> events;
};

// Executes the full loop until |D_S| = n_target. `pretrain` must be labeled;
// `holdout` (optional) enables the RMSE figures attached to retrain events.
// Deterministic-event-sim runs are a pure function of (cfg, world, seed).
RunResult run_workflow(const RunConfig& cfg, const WorldSpec& world,
                       const Dataset& pretrain, const Generator& initial_generator,
                       const Dataset* holdout = nullptr);

}  // namespace alqueue
