#pragma once
// Acquisition functions: turn predictions and cheap scores into one priority
// value per queued candidate (lower value = simulated sooner) and produce the
// sorted queue ordering.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "alqueue/surrogate.hpp"

namespace alqueue {

enum class AcquisitionMode : std::uint8_t {
  Exploit,         // predicted strain
  Explore,         // most uncertain first
  Lcb,             // mean - lambda * spread
  MultiObjective,  // weighted min-max-normalized objectives
  Random,          // seeded uniform control
  Fifo,            // generation order control
};

const char* acquisition_mode_name(AcquisitionMode m);
AcquisitionMode acquisition_mode_from_name(const std::string& name);

struct AcquisitionSpec {
  AcquisitionMode mode = AcquisitionMode::Fifo;
  double lambda = 0.0;
  double w_is = 0.0;
  double w_sa = 0.0;
  double w_t = 0.0;

  // MultiObjective weights must be >= 0 and sum to 1 within 1e-9.
  void validate() const;
  bool uses_surrogate() const;
};

// One queue entry as seen by a ranking pass. For MultiObjective the three
// score fields must already be normalized over the ranking snapshot.
struct QueueView {
  std::int64_t id = 0;
  double s_sa = 0.0;
  double s_t = 0.0;
  std::optional<Prediction> pred;
};

// Priority of a single entry; lower is better. `random_key` feeds the Random
// mode stream (keyed per ranking pass). Throws if a surrogate-dependent mode
// is invoked without a prediction.
double priority(const AcquisitionSpec& spec, const QueueView& entry,
                std::uint64_t random_key);

// Min-max normalization over the snapshot; all-equal input maps to zeros.
std::vector<double> normalize_objective(const std::vector<double>& values);

// Priorities for a whole snapshot, handling the MultiObjective normalization
// internally (raw s_sa / s_t / pred.mean in, one priority per entry out).
std::vector<double> compute_priorities(const AcquisitionSpec& spec,
                                       const std::vector<QueueView>& entries,
                                       std::uint64_t random_key);

// Stable ascending sort permutation over priorities, ties to the smaller id.
// Throws on NaN (an upstream scoring bug) or length mismatch.
std::vector<std::size_t> rank(const std::vector<double>& priorities,
                              const std::vector<std::int64_t>& ids);

}  // namespace alqueue
