#include "alqueue/harness.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace alqueue {

namespace {

AcquisitionSpec make_spec(AcquisitionMode mode, double lambda = 0.0, double w_is = 0.0,
                          double w_sa = 0.0, double w_t = 0.0) {
  AcquisitionSpec s;
  s.mode = mode;
  s.lambda = lambda;
  s.w_is = w_is;
  s.w_sa = w_sa;
  s.w_t = w_t;
  return s;
}

std::vector<Preset> build_presets() {
  using M = AcquisitionMode;
  const double third = 1.0 / 3.0;
  std::vector<Preset> out;
  auto add = [&](std::string name, std::string desc, PresetKind kind,
                 AcquisitionSpec acq, double ft, bool al) {
    out.push_back(Preset{std::move(name), std::move(desc), kind, acq, ft, al});
  };

  // Offline reordering strategies (training-set-only rows).
  add("random-selection", "random queue order baseline", PresetKind::Reorder,
      make_spec(M::Random), 0.5, false);
  add("exploit-only", "order by predicted strain", PresetKind::Reorder,
      make_spec(M::Exploit), 0.5, true);
  add("ucb-small", "confidence bound, weak exploration (lambda=0.1)",
      PresetKind::Reorder, make_spec(M::Lcb, 0.1), 0.5, true);
  add("ucb-large", "confidence bound, strong exploration (lambda=2.0)",
      PresetKind::Reorder, make_spec(M::Lcb, 2.0), 0.5, true);
  add("explore-only", "order by ensemble spread", PresetKind::Reorder,
      make_spec(M::Explore), 0.5, true);

  // Primary workflow tests.
  add("basic-control", "generation order, no surrogate", PresetKind::Workflow,
      make_spec(M::Fifo), 0.5, false);
  add("basic-al", "predicted-strain ordering", PresetKind::Workflow,
      make_spec(M::Exploit), 0.5, true);

  // Fine-tune fraction tests.
  add("control-small-frac", "no surrogate, fine-tune on top 10%", PresetKind::Workflow,
      make_spec(M::Fifo), 0.1, false);
  add("control-large-frac", "no surrogate, fine-tune on top 90%", PresetKind::Workflow,
      make_spec(M::Fifo), 0.9, false);
  add("al-small-frac", "strain ordering, fine-tune on top 10%", PresetKind::Workflow,
      make_spec(M::Exploit), 0.1, true);
  add("al-large-frac", "strain ordering, fine-tune on top 90%", PresetKind::Workflow,
      make_spec(M::Exploit), 0.9, true);

  // Alternative acquisition functions.
  add("acq-sa-only", "order by synthesizability score", PresetKind::Workflow,
      make_spec(M::MultiObjective, 0.0, 0.0, 1.0, 0.0), 0.5, false);
  add("acq-t-only", "order by novelty distance", PresetKind::Workflow,
      make_spec(M::MultiObjective, 0.0, 0.0, 0.0, 1.0), 0.5, false);
  add("acq-is-sa", "strain + synthesizability, equal weights", PresetKind::Workflow,
      make_spec(M::MultiObjective, 0.0, 0.5, 0.5, 0.0), 0.5, true);
  add("acq-is-t", "strain + novelty, equal weights", PresetKind::Workflow,
      make_spec(M::MultiObjective, 0.0, 0.5, 0.0, 0.5), 0.5, true);
  add("acq-is-sa-t", "strain + synthesizability + novelty", PresetKind::Workflow,
      make_spec(M::MultiObjective, 0.0, third, third, third), 0.5, true);

  // Explore/exploit workflow trade-offs.
  add("wf-ucb-small", "workflow confidence bound, lambda=0.1", PresetKind::Workflow,
      make_spec(M::Lcb, 0.1), 0.5, true);
  add("wf-ucb-large", "workflow confidence bound, lambda=2.0", PresetKind::Workflow,
      make_spec(M::Lcb, 2.0), 0.5, true);
  add("wf-explore-only", "workflow spread-only ordering", PresetKind::Workflow,
      make_spec(M::Explore), 0.5, true);
  return out;
}

}  // namespace

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = build_presets();
  return table;
}

const Preset* find_preset(const std::string& name) {
  for (const auto& p : presets()) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

RunConfig preset_config(const std::string& name) {
  const Preset* p = find_preset(name);
  if (!p) throw std::invalid_argument("unknown preset: " + name);
  RunConfig cfg;
  cfg.acquisition = p->acquisition;
  cfg.ft_fraction = p->ft_fraction;
  cfg.retrain_batch = p->active_learning ? 1 : 0;
  return cfg;
}

RunConfig apply_config_file(const KeyValueFile& kv, RunConfig base) {
  auto want = [&](const char* key) { return kv.has(key); };
  if (want("n_target")) base.n_target = kv.get_int("n_target");
  if (want("seed")) base.seed = kv.get_uint("seed");
  if (want("acquisition.mode")) {
    base.acquisition.mode = acquisition_mode_from_name(kv.get("acquisition.mode"));
  }
  if (want("acquisition.lambda")) base.acquisition.lambda = kv.get_double("acquisition.lambda");
  if (want("acquisition.w_is")) base.acquisition.w_is = kv.get_double("acquisition.w_is");
  if (want("acquisition.w_sa")) base.acquisition.w_sa = kv.get_double("acquisition.w_sa");
  if (want("acquisition.w_t")) base.acquisition.w_t = kv.get_double("acquisition.w_t");
  if (want("ft_fraction")) base.ft_fraction = kv.get_double("ft_fraction");
  if (want("ft_trigger")) base.ft_trigger = kv.get_int("ft_trigger");
  if (want("gen_batch")) base.gen_batch = static_cast<int>(kv.get_int("gen_batch"));
  if (want("retrain_batch")) base.retrain_batch = kv.get_int("retrain_batch");
  if (want("workers")) base.workers = static_cast<int>(kv.get_int("workers"));
  if (want("mode")) {
    const auto& m = kv.get("mode");
    if (m == "des") {
      base.mode = RunMode::DeterministicEventSim;
    } else if (m == "parallel") {
      base.mode = RunMode::Parallel;
    } else {
      throw std::invalid_argument("config: mode must be des or parallel");
    }
  }
  if (want("latency.sim_median_s")) base.latency.sim_median_s = kv.get_double("latency.sim_median_s");
  if (want("latency.sim_sigma")) base.latency.sim_sigma = kv.get_double("latency.sim_sigma");
  if (want("latency.generate_batch_s")) base.latency.generate_batch_s = kv.get_double("latency.generate_batch_s");
  if (want("latency.validate_s")) base.latency.validate_s = kv.get_double("latency.validate_s");
  if (want("latency.finetune_s")) base.latency.finetune_s = kv.get_double("latency.finetune_s");
  if (want("latency.prioritize_retrain_s")) base.latency.prioritize_retrain_s = kv.get_double("latency.prioritize_retrain_s");
  if (want("latency.prioritize_rank_s")) base.latency.prioritize_rank_s = kv.get_double("latency.prioritize_rank_s");
  if (want("latency.retrain_cooldown_s")) base.latency.retrain_cooldown_s = kv.get_double("latency.retrain_cooldown_s");
  if (want("thresholds.t_is")) base.thresholds.t_is = kv.get_double("thresholds.t_is");
  if (want("thresholds.t_sa")) base.thresholds.t_sa = kv.get_double("thresholds.t_sa");
  if (want("thresholds.t_t")) base.thresholds.t_t = kv.get_double("thresholds.t_t");
  if (want("surrogate.n_trees")) base.surrogate.n_trees = static_cast<int>(kv.get_int("surrogate.n_trees"));
  if (want("surrogate.max_depth")) base.surrogate.max_depth = static_cast<int>(kv.get_int("surrogate.max_depth"));
  if (want("surrogate.min_leaf")) base.surrogate.min_leaf = static_cast<int>(kv.get_int("surrogate.min_leaf"));
  if (want("surrogate.n_threads")) base.surrogate.n_threads = static_cast<int>(kv.get_int("surrogate.n_threads"));
  if (want("finetune.eta")) base.finetune.eta = kv.get_double("finetune.eta");
  if (want("parallel_time_scale")) base.parallel_time_scale = kv.get_double("parallel_time_scale");
  return base;
}

void echo_config(KeyValueFile& kv, const RunConfig& cfg) {
  kv.set_int("n_target", cfg.n_target);
  kv.set_uint("seed", cfg.seed);
  kv.set("acquisition.mode", acquisition_mode_name(cfg.acquisition.mode));
  kv.set_double("acquisition.lambda", cfg.acquisition.lambda);
  kv.set_double("acquisition.w_is", cfg.acquisition.w_is);
  kv.set_double("acquisition.w_sa", cfg.acquisition.w_sa);
  kv.set_double("acquisition.w_t", cfg.acquisition.w_t);
  kv.set_double("ft_fraction", cfg.ft_fraction);
  kv.set_int("ft_trigger", cfg.ft_trigger);
  kv.set_int("gen_batch", cfg.gen_batch);
  kv.set_int("retrain_batch", cfg.retrain_batch);
  kv.set_int("workers", cfg.workers);
  kv.set("mode", cfg.mode == RunMode::DeterministicEventSim ? "des" : "parallel");
  kv.set_double("latency.sim_median_s", cfg.latency.sim_median_s);
  kv.set_double("latency.sim_sigma", cfg.latency.sim_sigma);
  kv.set_double("latency.generate_batch_s", cfg.latency.generate_batch_s);
  kv.set_double("latency.validate_s", cfg.latency.validate_s);
  kv.set_double("latency.finetune_s", cfg.latency.finetune_s);
  kv.set_double("latency.prioritize_retrain_s", cfg.latency.prioritize_retrain_s);
  kv.set_double("latency.prioritize_rank_s", cfg.latency.prioritize_rank_s);
  kv.set_double("latency.retrain_cooldown_s", cfg.latency.retrain_cooldown_s);
  kv.set_double("thresholds.t_is", cfg.thresholds.t_is);
  kv.set_double("thresholds.t_sa", cfg.thresholds.t_sa);
  kv.set_double("thresholds.t_t", cfg.thresholds.t_t);
  kv.set_int("surrogate.n_trees", cfg.surrogate.n_trees);
  kv.set_int("surrogate.max_depth", cfg.surrogate.max_depth);
  kv.set_int("surrogate.min_leaf", cfg.surrogate.min_leaf);
  kv.set_double("finetune.eta", cfg.finetune.eta);
}

// Metrics --------------------------------------------------------------------

std::vector<MetricsRow> compute_metrics(const std::vector<Event>& events) {
  std::vector<MetricsRow> rows;
  std::deque<std::pair<double, double>> window;  // (s_sa, s_t)
  std::int64_t n_sim = 0;
  std::int64_t cum_stable = 0;
  std::optional<double> latest_rmse;

  auto emit = [&] {
    MetricsRow row;
    row.n_simulated = n_sim;
    row.cum_stable = cum_stable;
    row.holdout_rmse = latest_rmse;
    double sa = 0.0, st = 0.0;
    for (const auto& [a, b] : window) {
      sa += a;
      st += b;
    }
    const auto w = static_cast<double>(window.size());
    row.win_sa = w > 0 ? sa / w : 0.0;
    row.win_t = w > 0 ? st / w : 0.0;
    row.r_t = n_sim > 0 ? static_cast<double>(cum_stable) / static_cast<double>(n_sim)
                        : 0.0;
    rows.push_back(row);
  };

  for (const auto& e : events) {
    switch (e.kind) {
      case EventKind::Retrain: {
        const std::string rmse = detail_get(e.detail, "rmse");
        if (!rmse.empty()) {
          latest_rmse = std::stod(rmse);
        } else {
          latest_rmse.reset();
        }
        break;
      }
      case EventKind::SimDone: {
        ++n_sim;
        if (detail_get(e.detail, "stable") == "1") ++cum_stable;
        window.emplace_back(std::stod(detail_get(e.detail, "s_sa")),
                            std::stod(detail_get(e.detail, "s_t")));
        if (window.size() > static_cast<std::size_t>(kMetricsWindow)) {
          window.pop_front();
        }
        if (n_sim % kMetricsCadence == 0) emit();
        break;
      }
      case EventKind::Stop:
        if (n_sim % kMetricsCadence != 0) emit();  // closing partial checkpoint
        break;
      default:
        break;
    }
  }
  return rows;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics: " + path);
  out << "n_simulated,cum_stable,holdout_rmse,win_sa,win_t,r_t\n";
  for (const auto& r : rows) {
    out << r.n_simulated << ',' << r.cum_stable << ',';
    if (r.holdout_rmse) out << format_double(*r.holdout_rmse);
    out << ',' << format_double(r.win_sa) << ',' << format_double(r.win_t) << ','
        << format_double(r.r_t) << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read metrics: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "n_simulated,cum_stable,holdout_rmse,win_sa,win_t,r_t") {
    throw std::runtime_error("metrics file: unexpected header in " + path);
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (int i = 0; i < 5; ++i) {
      const auto pos = line.find(',', start);
      if (pos == std::string::npos) {
        throw std::runtime_error("metrics file: short row in " + path);
      }
      cols.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    cols.push_back(line.substr(start));
    MetricsRow r;
    r.n_simulated = std::stoll(cols[0]);
    r.cum_stable = std::stoll(cols[1]);
    if (!cols[2].empty()) r.holdout_rmse = std::stod(cols[2]);
    r.win_sa = std::stod(cols[3]);
    r.win_t = std::stod(cols[4]);
    r.r_t = std::stod(cols[5]);
    rows.push_back(r);
  }
  return rows;
}

// Event-log validation --------------------------------------------------------

LogCheck check_event_log(const std::vector<Event>& events) {
  LogCheck out;
  enum class St { Queued, Invalidated, InFlight, Simulated, Dropped };
  std::unordered_map<std::int64_t, St> state;
  std::int64_t queued = 0, in_flight = 0;
  int last_rank_version = -1;
  int last_model_version = 0;
  bool saw_stop = false;
  auto fail = [&](const std::string& msg, std::size_t idx) {
    out.ok = false;
    out.message = "event " + std::to_string(idx) + ": " + msg;
  };

  for (std::size_t i = 0; i < events.size() && out.ok; ++i) {
    const Event& e = events[i];
    if (e.model_version < last_model_version) {
      fail("model version went backwards", i);
      break;
    }
    last_model_version = e.model_version;
    if (saw_stop) {
      fail("event after STOP", i);
      break;
    }
    switch (e.kind) {
      case EventKind::Gen: {
        if (state.count(e.candidate_id)) {
          fail("candidate generated twice", i);
          break;
        }
        state[e.candidate_id] = St::Queued;
        ++queued;
        ++out.counters.generated;
        break;
      }
      case EventKind::DiscardInvalid: {
        auto it = state.find(e.candidate_id);
        if (it == state.end() || it->second != St::Queued) {
          fail("invalid-discard of a non-queued candidate", i);
          break;
        }
        it->second = St::Invalidated;
        --queued;
        ++out.counters.invalid;
        break;
      }
      case EventKind::DiscardDup: {
        auto it = state.find(e.candidate_id);
        if (it == state.end() || it->second != St::Queued) {
          fail("dup-discard of a non-queued candidate", i);
          break;
        }
        it->second = St::Dropped;
        --queued;
        ++out.counters.duplicates;
        break;
      }
      case EventKind::Rank: {
        last_rank_version = e.model_version;
        ++out.counters.rank_passes;
        const std::string n = detail_get(e.detail, "n");
        if (!n.empty() && std::stoll(n) != queued) {
          fail("rank snapshot size " + n + " != queued " + std::to_string(queued), i);
        }
        break;
      }
      case EventKind::Pop: {
        auto it = state.find(e.candidate_id);
        if (it == state.end() || it->second != St::Queued) {
          fail("pop of a non-queued candidate", i);
          break;
        }
        if (last_rank_version >= 0 && e.model_version != last_rank_version) {
          fail("pop under model version " + std::to_string(e.model_version) +
                   " but queue ranked under " + std::to_string(last_rank_version),
               i);
          break;
        }
        it->second = St::InFlight;
        --queued;
        ++in_flight;
        break;
      }
      case EventKind::SimDone: {
        auto it = state.find(e.candidate_id);
        if (it == state.end() || it->second != St::InFlight) {
          fail("result for a candidate not in flight", i);
          break;
        }
        it->second = St::Simulated;
        --in_flight;
        ++out.counters.simulated;
        if (detail_get(e.detail, "stable") == "1") ++out.counters.stable;
        break;
      }
      case EventKind::Retrain:
        ++out.counters.retrains;
        break;
      case EventKind::Finetune:
        ++out.counters.finetunes;
        break;
      case EventKind::Stop: {
        saw_stop = true;
        const std::string detail = detail_get(e.detail, "in_flight");
        if (!detail.empty() && std::stoll(detail) != in_flight) {
          fail("STOP in_flight " + detail + " != tracked " + std::to_string(in_flight), i);
        }
        out.counters.in_flight_at_stop = in_flight;
        break;
      }
    }
    if (queued < 0 || in_flight < 0) fail("negative occupancy", i);
  }
  if (out.ok && !saw_stop) {
    out.ok = false;
    out.message = "log has no STOP record";
  }
  return out;
}

}  // namespace alqueue
