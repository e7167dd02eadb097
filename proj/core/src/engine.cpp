#include "alqueue/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_set>

#include "alqueue/io.hpp"
#include "alqueue/rng.hpp"

namespace alqueue {

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Generate: return "generate";
    case Stage::FineTune: return "finetune";
    case Stage::Prioritize: return "prioritize";
    case Stage::Validate: return "validate";
    case Stage::Simulate: return "simulate";
  }
  return "generate";
}

void CostLedger::account(Stage stage, double seconds) {
  if (seconds < 0.0) throw std::invalid_argument("ledger: negative cost");
  seconds_[static_cast<int>(stage)] += seconds;
}

double CostLedger::total() const {
  double acc = 0.0;
  for (double s : seconds_) acc += s;
  return acc;
}

double CostLedger::share(Stage stage) const {
  const double t = total();
  return t > 0.0 ? seconds(stage) / t : 0.0;
}

const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::Gen: return "GEN";
    case EventKind::Rank: return "RANK";
    case EventKind::Pop: return "POP";
    case EventKind::SimDone: return "SIM_DONE";
    case EventKind::Retrain: return "RETRAIN";
    case EventKind::Finetune: return "FINETUNE";
    case EventKind::DiscardDup: return "DISCARD_DUP";
    case EventKind::DiscardInvalid: return "DISCARD_INVALID";
    case EventKind::Stop: return "STOP";
  }
  return "GEN";
}

EventKind event_kind_from_name(const std::string& name) {
  static const std::pair<const char*, EventKind> table[] = {
      {"GEN", EventKind::Gen},         {"RANK", EventKind::Rank},
      {"POP", EventKind::Pop},         {"SIM_DONE", EventKind::SimDone},
      {"RETRAIN", EventKind::Retrain}, {"FINETUNE", EventKind::Finetune},
      {"DISCARD_DUP", EventKind::DiscardDup},
      {"DISCARD_INVALID", EventKind::DiscardInvalid},
      {"STOP", EventKind::Stop},
  };
  for (const auto& [n, k] : table) {
    if (name == n) return k;
  }
  throw std::invalid_argument("unknown event kind: " + name);
}

void write_events_csv(const std::string& path, const std::vector<Event>& events) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write events: " + path);
  out << "clock,event,candidate_id,model_version,generator_version,detail\n";
  char clock_buf[40];
  for (const auto& e : events) {
    std::snprintf(clock_buf, sizeof(clock_buf), "%.6f", e.clock);
    out << clock_buf << ',' << event_kind_name(e.kind) << ',' << e.candidate_id
        << ',' << e.model_version << ',' << e.generator_version << ',' << e.detail
        << '\n';
  }
}

std::vector<Event> read_events_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read events: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "clock,event,candidate_id,model_version,generator_version,detail") {
    throw std::runtime_error("events file: unexpected header in " + path);
  }
  std::vector<Event> events;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Event e;
    std::size_t start = 0;
    auto next_field = [&](bool last = false) {
      if (last) return line.substr(start);
      const auto pos = line.find(',', start);
      if (pos == std::string::npos) {
        throw std::runtime_error("events file: short row in " + path);
      }
      auto f = line.substr(start, pos - start);
      start = pos + 1;
      return f;
    };
    e.clock = std::stod(next_field());
    e.kind = event_kind_from_name(next_field());
    e.candidate_id = std::stoll(next_field());
    e.model_version = std::stoi(next_field());
    e.generator_version = std::stoi(next_field());
    e.detail = next_field(true);
    events.push_back(std::move(e));
  }
  return events;
}

std::string detail_get(const std::string& detail, const std::string& key) {
  std::size_t start = 0;
  while (start < detail.size()) {
    std::size_t end = detail.find(';', start);
    if (end == std::string::npos) end = detail.size();
    const auto eq = detail.find('=', start);
    if (eq != std::string::npos && eq < end && detail.substr(start, eq - start) == key) {
      return detail.substr(eq + 1, end - eq - 1);
    }
    start = end + 1;
  }
  return {};
}

void RunConfig::validate() const {
  if (n_target < 1) throw std::invalid_argument("config: n_target must be >= 1");
  if (!(ft_fraction > 0.0) || ft_fraction > 1.0) {
    throw std::invalid_argument("config: ft_fraction must be in (0,1]");
  }
  if (ft_trigger < 1) throw std::invalid_argument("config: ft_trigger must be >= 1");
  if (gen_batch < 1) throw std::invalid_argument("config: gen_batch must be >= 1");
  if (retrain_batch < 0) throw std::invalid_argument("config: retrain_batch must be >= 0");
  if (workers < 1) throw std::invalid_argument("config: workers must be >= 1");
  if (parallel_time_scale < 0.0) {
    throw std::invalid_argument("config: parallel_time_scale must be >= 0");
  }
  for (double v : {latency.sim_median_s, latency.sim_sigma, latency.generate_batch_s,
                   latency.validate_s, latency.finetune_s, latency.prioritize_retrain_s,
                   latency.prioritize_rank_s, latency.retrain_cooldown_s}) {
    if (!(v >= 0.0)) throw std::invalid_argument("config: latency values must be >= 0");
  }
  thresholds.validate();
  acquisition.validate();
}

namespace {

struct QueueItem {
  ScoredRecord rec;
  double priority = 0.0;
};

// State and policies shared by the event-sim and parallel drivers. The owner
// is always a single coordinator; nothing here is thread-safe by itself.
struct LoopCore {
  const RunConfig& cfg;
  const WorldSpec& world;
  const Dataset& pretrain;
  const Dataset* holdout;

  Generator generator;
  std::optional<SurrogateEnsemble> model;
  int model_version = 0;
  int rank_version = 0;

  std::vector<double> train_x;  // pretrain rows then accepted results, in order
  std::vector<double> train_y;
  Dataset d_s;
  std::deque<ScoredRecord> q_gl;
  std::vector<QueueItem> q_ul;
  std::size_t q_head = 0;
  std::unordered_set<std::uint64_t> in_flight;

  std::int64_t next_id = 1;
  std::int64_t ds_rows_in_model = 0;
  std::int64_t results_since_ft = 0;
  bool ft_requested = false;
  std::uint64_t rank_pass = 0;
  Rng producer_rng;

  Counters counters;
  std::vector<Event> events;
  CostLedger ledger;
  double clock = 0.0;

  LoopCore(const RunConfig& c, const WorldSpec& w, const Dataset& pt,
           const Generator& gen, const Dataset* ho)
      : cfg(c), world(w), pretrain(pt), holdout(ho), generator(gen),
        producer_rng(Rng::derive(c.seed, rng_tag::kProducer)) {
    train_x.reserve((pt.size() + c.n_target) * world.maps.embed_dim());
    train_y.reserve(pt.size() + c.n_target);
    for (const auto& r : pt) {
      if (!r.simulated()) {
        throw std::invalid_argument("run_workflow: pretraining record without strain");
      }
      train_x.insert(train_x.end(), r.candidate.embedding.begin(),
                     r.candidate.embedding.end());
      train_y.push_back(*r.s_is);
    }
  }

  bool model_enabled() const {
    return cfg.acquisition.uses_surrogate() || cfg.retrain_batch > 0;
  }

  std::size_t queue_size() const { return q_gl.size() + (q_ul.size() - q_head); }

  void log(EventKind kind, std::int64_t candidate_id, std::string detail) {
    events.push_back(Event{clock, kind, candidate_id, model_version,
                           generator.version, std::move(detail)});
  }

  // Fits on pretrain + accepted results; pure given the current state.
  SurrogateEnsemble fit_current(std::int64_t* ds_rows, std::optional<double>* rmse) {
    const std::uint64_t fit_seed =
        hash_at(hash_at(cfg.seed, rng_tag::kBootstrap),
                static_cast<std::uint64_t>(model_version + 1));
    SurrogateEnsemble fitted = fit_rows(train_x, train_y, world.maps.embed_dim(),
                                        cfg.surrogate, fit_seed);
    *ds_rows = static_cast<std::int64_t>(train_y.size() - pretrain.size());
    if (holdout && !holdout->empty()) {
      *rmse = holdout_rmse(fitted, *holdout);
    } else {
      rmse->reset();
    }
    return fitted;
  }

  void apply_model(SurrogateEnsemble fitted, std::int64_t ds_rows,
                   const std::optional<double>& rmse) {
    model = std::move(fitted);
    ++model_version;
    ds_rows_in_model = ds_rows;
    ++counters.retrains;
    std::string detail = "rows=" + std::to_string(train_y_size_at(ds_rows));
    detail += ";rmse=";
    if (rmse) detail += format_double(*rmse);
    log(EventKind::Retrain, -1, std::move(detail));
    if (cfg.model_observer) cfg.model_observer(model_version, *model);
  }

  std::int64_t train_y_size_at(std::int64_t ds_rows) const {
    return static_cast<std::int64_t>(pretrain.size()) + ds_rows;
  }

  std::int64_t results_since_fit() const {
    return static_cast<std::int64_t>(d_s.size()) - ds_rows_in_model;
  }

  bool retrain_due() const {
    return cfg.retrain_batch > 0 && model_enabled() &&
           needs_retrain(results_since_fit(), cfg.retrain_batch);
  }

  // Scores raw candidates, drops invalid ones, enqueues the rest.
  void deliver_batch(std::vector<Candidate> batch) {
    for (auto& c : batch) {
      ++counters.generated;
      const std::int64_t id = c.id;
      if (!validity_check(c)) {
        log(EventKind::Gen, id, {});
        log(EventKind::DiscardInvalid, id, {});
        ++counters.invalid;
        continue;
      }
      ScoredRecord r = score_candidate(std::move(c), world, /*run_oracle=*/false);
      log(EventKind::Gen, id, {});
      q_gl.push_back(std::move(r));
    }
  }

  // Rebuilds the prioritized queue from everything queued anywhere.
  void rerank() {
    std::vector<ScoredRecord> snapshot;
    snapshot.reserve(queue_size());
    for (std::size_t i = q_head; i < q_ul.size(); ++i) {
      snapshot.push_back(std::move(q_ul[i].rec));
    }
    while (!q_gl.empty()) {
      snapshot.push_back(std::move(q_gl.front()));
      q_gl.pop_front();
    }
    q_ul.clear();
    q_head = 0;
    ++rank_pass;
    ++counters.rank_passes;
    rank_version = model_version;
    if (snapshot.empty()) {
      log(EventKind::Rank, -1, "n=0");
      return;
    }

    const bool want_pred = cfg.acquisition.uses_surrogate();
    if (want_pred && !model) {
      throw std::invalid_argument("run_workflow: acquisition needs a surrogate model");
    }
    std::vector<QueueView> entries(snapshot.size());
    std::vector<std::int64_t> ids(snapshot.size());
    for (std::size_t i = 0; i < snapshot.size(); ++i) {
      entries[i].id = snapshot[i].candidate.id;
      entries[i].s_sa = snapshot[i].s_sa;
      entries[i].s_t = snapshot[i].s_t;
      if (want_pred) entries[i].pred = model->predict(snapshot[i].candidate.embedding);
      ids[i] = entries[i].id;
    }
    const std::uint64_t random_key =
        hash_at(hash_at(cfg.seed, rng_tag::kRandomAcquisition), rank_pass);
    const auto prios = compute_priorities(cfg.acquisition, entries, random_key);
    const auto perm = rank(prios, ids);
    q_ul.reserve(snapshot.size());
    for (std::size_t idx : perm) {
      q_ul.push_back(QueueItem{std::move(snapshot[idx]), prios[idx]});
    }
    log(EventKind::Rank, -1, "n=" + std::to_string(q_ul.size()));
  }

  bool key_seen(std::uint64_t key) const {
    return pretrain.contains_key(key) || d_s.contains_key(key) ||
           in_flight.count(key) != 0;
  }

  // Pops the best non-duplicate candidate; false when the queue runs dry.
  // Duplicate discards are charged to validation.
  bool pop_next(ScoredRecord* out, double* priority_out) {
    while (q_head < q_ul.size()) {
      QueueItem item = std::move(q_ul[q_head]);
      ++q_head;
      const std::uint64_t key = dedup_key(item.rec.candidate);
      if (key_seen(key)) {
        log(EventKind::DiscardDup, item.rec.candidate.id, {});
        ++counters.duplicates;
        ledger.account(Stage::Validate, cfg.latency.validate_s);
        continue;
      }
      in_flight.insert(key);
      *out = std::move(item.rec);
      *priority_out = item.priority;
      return true;
    }
    return false;
  }

  struct Accepted {
    bool inserted = false;
    bool stable = false;
  };

  Accepted accept_result(ScoredRecord rec, double s_is) {
    const std::uint64_t key = dedup_key(rec.candidate);
    in_flight.erase(key);
    rec.set_strain(s_is);
    Accepted out;
    out.stable = cfg.thresholds.stable(s_is, rec.s_sa, rec.s_t);
    const std::int64_t id = rec.candidate.id;
    std::string detail = "s_is=" + format_double(s_is) +
                         ";s_sa=" + format_double(rec.s_sa) +
                         ";s_t=" + format_double(rec.s_t) +
                         ";stable=" + (out.stable ? "1" : "0");
    const std::size_t emb_size = rec.candidate.embedding.size();
    train_x.insert(train_x.end(), rec.candidate.embedding.begin(),
                   rec.candidate.embedding.end());
    train_y.push_back(s_is);
    out.inserted = d_s.insert_unique(std::move(rec));
    if (!out.inserted) {
      // Pop-time guards make this unreachable; keep the books straight anyway.
      train_x.resize(train_x.size() - emb_size);
      train_y.pop_back();
      log(EventKind::DiscardDup, id, {});
      ++counters.duplicates;
      return out;
    }
    ++counters.simulated;
    if (out.stable) ++counters.stable;
    ++results_since_ft;
    log(EventKind::SimDone, id, std::move(detail));
    if (results_since_ft >= cfg.ft_trigger) {
      ft_requested = true;
      results_since_ft = 0;
    }
    return out;
  }

  bool finetune_feasible() const {
    if (d_s.empty()) return false;
    const auto elite_size = static_cast<std::int64_t>(
        std::ceil(cfg.ft_fraction * static_cast<double>(d_s.size())));
    return elite_size >= static_cast<std::int64_t>(generator.components.size());
  }

  Generator compute_finetune(std::size_t* elite_size) {
    Dataset elite = top_fraction(d_s, cfg.ft_fraction, ScoreField::SIs,
                                 /*lower_is_better=*/true);
    *elite_size = elite.size();
    return fine_tune(generator, elite, cfg.finetune);
  }

  void apply_generator(Generator g, std::size_t elite_size) {
    generator = std::move(g);
    ++counters.finetunes;
    log(EventKind::Finetune, -1, "elite=" + std::to_string(elite_size));
  }

  void log_stop(std::int64_t in_flight_count) {
    counters.in_flight_at_stop = in_flight_count;
    log(EventKind::Stop, -1, "in_flight=" + std::to_string(in_flight_count));
  }

  RunResult finish(double wall_seconds) {
    RunResult result;
    result.d_s_star = stable_subset(d_s, cfg.thresholds);
    result.d_s = std::move(d_s);
    result.events = std::move(events);
    result.ledger = ledger;
    result.counters = counters;
    result.final_generator = std::move(generator);
    if (model) {
      if (holdout && !holdout->empty()) result.final_rmse = holdout_rmse(*model, *holdout);
      result.final_model = std::move(model);
    }
    result.clock_end = clock;
    result.wall_seconds = wall_seconds;
    return result;
  }
};

// ---------------------------------------------------------------------------
// Deterministic event simulation: one simulated clock, (time, seq)-ordered
// events, strictly single-threaded.

class DesDriver {
 public:
  DesDriver(const RunConfig& cfg, const WorldSpec& world, const Dataset& pretrain,
            const Generator& gen, const Dataset* holdout)
      : core_(cfg, world, pretrain, gen, holdout) {}

  RunResult run() {
    const auto t0 = std::chrono::steady_clock::now();
    if (core_.model_enabled()) {
      // The loop starts with a model pre-trained on the pretraining data;
      // charged nowhere since it predates the run.
      std::int64_t ds_rows = 0;
      std::optional<double> rmse;
      auto fitted = core_.fit_current(&ds_rows, &rmse);
      core_.apply_model(std::move(fitted), ds_rows, rmse);
    }
    schedule_work();
    while (!stopped_ && !queue_.empty()) {
      auto node = queue_.extract(queue_.begin());
      DesEvent ev = std::move(node.value());
      core_.clock = ev.time;
      dispatch(std::move(ev));
      if (!stopped_) schedule_work();
    }
    if (!stopped_) {
      throw std::runtime_error("event simulation drained without reaching n_target");
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return core_.finish(wall);
  }

 private:
  enum class Kind { Wake, GenReady, AssemblyReady, FinetuneReady, RetrainReady, SimDone };

  struct DesEvent {
    double time = 0.0;
    std::uint64_t seq = 0;
    Kind kind = Kind::Wake;
    std::vector<Candidate> batch;  // GenReady
    ScoredRecord rec;              // SimDone
    double s_is = 0.0;
    double latency = 0.0;
  };

  struct EventOrder {
    bool operator()(const DesEvent& a, const DesEvent& b) const {
      if (a.time != b.time) return a.time < b.time;
      return a.seq < b.seq;
    }
  };

  void push(DesEvent ev, double at) {
    ev.time = at;
    ev.seq = seq_++;
    queue_.insert(std::move(ev));
  }

  void dispatch(DesEvent ev) {
    switch (ev.kind) {
      case Kind::Wake:
        wake_pending_ = false;
        break;
      case Kind::GenReady:
        // Off the generator, into the assembly/validation pipeline.
        assembly_queue_.push_back(std::move(ev.batch));
        gpu_busy_ = false;
        maybe_start_assembly();
        break;
      case Kind::AssemblyReady:
        core_.deliver_batch(std::move(ev.batch));
        --batches_in_pipeline_;
        assembly_busy_ = false;
        maybe_start_assembly();
        core_.ledger.account(Stage::Prioritize, core_.cfg.latency.prioritize_rank_s);
        core_.rerank();
        break;
      case Kind::FinetuneReady:
        core_.apply_generator(std::move(pending_generator_), pending_elite_size_);
        gpu_busy_ = false;
        break;
      case Kind::RetrainReady:
        core_.apply_model(std::move(pending_model_), pending_ds_rows_, pending_rmse_);
        core_.rerank();  // inference + sort cost is inside prioritize_retrain_s
        coordinator_busy_ = false;
        break;
      case Kind::SimDone: {
        --busy_workers_;
        core_.ledger.account(Stage::Simulate, ev.latency);
        core_.accept_result(std::move(ev.rec), ev.s_is);
        if (static_cast<std::int64_t>(core_.d_s.size()) >= core_.cfg.n_target) {
          core_.log_stop(busy_workers_);
          stopped_ = true;
        }
        break;
      }
    }
  }

  void schedule_work() {
    maybe_start_producer();
    maybe_start_retrain();
    assign_workers();
  }

  // The generator owns one device (fine-tuning preempts generation); the
  // assembly/validation stage owns another and runs pipelined behind it.
  void maybe_start_producer() {
    if (gpu_busy_) return;
    if (core_.ft_requested && core_.finetune_feasible()) {
      core_.ft_requested = false;
      pending_generator_ = core_.compute_finetune(&pending_elite_size_);
      core_.ledger.account(Stage::FineTune, core_.cfg.latency.finetune_s);
      push(DesEvent{.kind = Kind::FinetuneReady},
           core_.clock + core_.cfg.latency.finetune_s);
      gpu_busy_ = true;
      return;
    }
    const std::size_t incoming =
        batches_in_pipeline_ * static_cast<std::size_t>(core_.cfg.gen_batch);
    if (core_.queue_size() + incoming <
        2 * static_cast<std::size_t>(core_.cfg.gen_batch)) {
      auto batch = sample_candidates(core_.generator, core_.cfg.gen_batch,
                                     core_.producer_rng, core_.world.maps,
                                     &core_.next_id);
      core_.ledger.account(Stage::Generate, core_.cfg.latency.generate_batch_s);
      DesEvent ev;
      ev.kind = Kind::GenReady;
      ev.batch = std::move(batch);
      push(std::move(ev), core_.clock + core_.cfg.latency.generate_batch_s);
      gpu_busy_ = true;
      ++batches_in_pipeline_;
    }
  }

  void maybe_start_assembly() {
    if (assembly_busy_ || assembly_queue_.empty()) return;
    const double cost = core_.cfg.gen_batch * core_.cfg.latency.validate_s;
    core_.ledger.account(Stage::Validate, cost);
    DesEvent ev;
    ev.kind = Kind::AssemblyReady;
    ev.batch = std::move(assembly_queue_.front());
    assembly_queue_.pop_front();
    push(std::move(ev), core_.clock + cost);
    assembly_busy_ = true;
  }

  void maybe_start_retrain() {
    if (coordinator_busy_ || !core_.retrain_due()) return;
    const double ready_at =
        last_retrain_start_ + core_.cfg.latency.retrain_cooldown_s;
    if (core_.clock < ready_at) {
      if (!wake_pending_) {
        wake_pending_ = true;
        push(DesEvent{.kind = Kind::Wake}, ready_at);
      }
      return;
    }
    coordinator_busy_ = true;
    last_retrain_start_ = core_.clock;
    pending_model_ = core_.fit_current(&pending_ds_rows_, &pending_rmse_);
    core_.ledger.account(Stage::Prioritize, core_.cfg.latency.prioritize_retrain_s);
    push(DesEvent{.kind = Kind::RetrainReady},
         core_.clock + core_.cfg.latency.prioritize_retrain_s);
  }

  void assign_workers() {
    while (busy_workers_ < core_.cfg.workers) {
      ScoredRecord rec;
      double priority = 0.0;
      if (!core_.pop_next(&rec, &priority)) break;
      core_.log(EventKind::Pop, rec.candidate.id,
                "prio=" + format_double(priority));
      // The pop records rank_version implicitly: model_version at pop time
      // equals the version that ranked the queue (re-ranks happen on the
      // coordinator between events).
      const double lat = oracle_latency(rec.candidate, core_.cfg.latency.sim_median_s,
                                        core_.cfg.latency.sim_sigma);
      DesEvent ev;
      ev.kind = Kind::SimDone;
      ev.s_is = oracle_strain(rec.candidate, core_.world);
      ev.latency = lat;
      ev.rec = std::move(rec);
      push(std::move(ev), core_.clock + lat);
      ++busy_workers_;
    }
  }

  LoopCore core_;
  std::multiset<DesEvent, EventOrder> queue_;
  std::deque<std::vector<Candidate>> assembly_queue_;
  std::size_t batches_in_pipeline_ = 0;  // generating, queued, or assembling
  std::uint64_t seq_ = 0;
  bool gpu_busy_ = false;
  bool assembly_busy_ = false;
  bool coordinator_busy_ = false;
  bool wake_pending_ = false;
  bool stopped_ = false;
  int busy_workers_ = 0;
  double last_retrain_start_ = 0.0;

  Generator pending_generator_;
  std::size_t pending_elite_size_ = 0;
  SurrogateEnsemble pending_model_;
  std::int64_t pending_ds_rows_ = 0;
  std::optional<double> pending_rmse_;
};

// ---------------------------------------------------------------------------
// Parallel mode: a real worker pool around the same coordinator policies.
// Workers receive (candidate, model version) and return (candidate, strain,
// cost); every state mutation happens on the coordinator thread.

class ParallelDriver {
 public:
  ParallelDriver(const RunConfig& cfg, const WorldSpec& world, const Dataset& pretrain,
                 const Generator& gen, const Dataset* holdout)
      : core_(cfg, world, pretrain, gen, holdout) {}

  RunResult run() {
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [t0] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    if (core_.model_enabled()) {
      std::int64_t ds_rows = 0;
      std::optional<double> rmse;
      auto fitted = core_.fit_current(&ds_rows, &rmse);
      core_.apply_model(std::move(fitted), ds_rows, rmse);
    }

    std::vector<std::thread> pool;
    pool.reserve(core_.cfg.workers);
    for (int w = 0; w < core_.cfg.workers; ++w) {
      pool.emplace_back([this] { worker_loop(); });
    }
    auto join_all = [&] {
      close_tasks();
      for (auto& th : pool) th.join();
    };

    try {
      bool stopped = false;
      while (!stopped) {
        core_.clock = elapsed();
        produce_if_needed();
        dispatch_tasks();
        TaskResult res = wait_result();
        core_.clock = elapsed();
        if (!res.error.empty()) {
          throw EngineAbort("worker failed: " + res.error, core_.events);
        }
        --dispatched_;
        core_.ledger.account(Stage::Simulate, res.wall_cost);
        core_.accept_result(std::move(res.rec), res.s_is);
        if (static_cast<std::int64_t>(core_.d_s.size()) >= core_.cfg.n_target) {
          core_.log_stop(dispatched_);
          stopped = true;
          break;
        }
        maybe_retrain(elapsed);
        produce_if_needed();
        dispatch_tasks();
      }
    } catch (...) {
      join_all();
      throw;
    }
    join_all();
    return core_.finish(elapsed());
  }

 private:
  struct Task {
    ScoredRecord rec;
    int rank_version = 0;
  };
  struct TaskResult {
    ScoredRecord rec;
    double s_is = 0.0;
    double wall_cost = 0.0;
    std::string error;
  };

  void worker_loop() {
    while (true) {
      Task task;
      {
        std::unique_lock<std::mutex> lock(task_mu_);
        task_cv_.wait(lock, [&] { return tasks_closed_ || !tasks_.empty(); });
        if (tasks_.empty()) {
          if (tasks_closed_) return;
          continue;
        }
        task = std::move(tasks_.front());
        tasks_.pop_front();
      }
      TaskResult res;
      const auto w0 = std::chrono::steady_clock::now();
      try {
        res.s_is = oracle_strain(task.rec.candidate, core_.world);
        if (core_.cfg.parallel_time_scale > 0.0) {
          const double lat =
              oracle_latency(task.rec.candidate, core_.cfg.latency.sim_median_s,
                             core_.cfg.latency.sim_sigma);
          std::this_thread::sleep_for(std::chrono::duration<double>(
              lat * core_.cfg.parallel_time_scale));
        }
      } catch (const std::exception& ex) {
        res.error = ex.what();
      }
      res.wall_cost =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - w0).count();
      res.rec = std::move(task.rec);
      {
        std::lock_guard<std::mutex> lock(result_mu_);
        results_.push_back(std::move(res));
      }
      result_cv_.notify_one();
    }
  }

  void close_tasks() {
    {
      std::lock_guard<std::mutex> lock(task_mu_);
      tasks_closed_ = true;
    }
    task_cv_.notify_all();
  }

  TaskResult wait_result() {
    std::unique_lock<std::mutex> lock(result_mu_);
    result_cv_.wait(lock, [&] { return !results_.empty(); });
    TaskResult res = std::move(results_.front());
    results_.pop_front();
    return res;
  }

  void produce_if_needed() {
    if (core_.ft_requested && core_.finetune_feasible()) {
      core_.ft_requested = false;
      const auto f0 = std::chrono::steady_clock::now();
      std::size_t elite_size = 0;
      Generator g = core_.compute_finetune(&elite_size);
      core_.ledger.account(Stage::FineTune, std::chrono::duration<double>(
          std::chrono::steady_clock::now() - f0).count());
      core_.apply_generator(std::move(g), elite_size);
    }
    while (core_.queue_size() < 2 * static_cast<std::size_t>(core_.cfg.gen_batch)) {
      const auto g0 = std::chrono::steady_clock::now();
      auto batch = sample_candidates(core_.generator, core_.cfg.gen_batch,
                                     core_.producer_rng, core_.world.maps,
                                     &core_.next_id);
      core_.deliver_batch(std::move(batch));
      core_.ledger.account(Stage::Generate, std::chrono::duration<double>(
          std::chrono::steady_clock::now() - g0).count());
      core_.rerank();
    }
  }

  template <typename ElapsedFn>
  void maybe_retrain(ElapsedFn&& elapsed) {
    if (!core_.retrain_due()) return;
    const auto r0 = std::chrono::steady_clock::now();
    std::int64_t ds_rows = 0;
    std::optional<double> rmse;
    auto fitted = core_.fit_current(&ds_rows, &rmse);
    core_.clock = elapsed();
    core_.apply_model(std::move(fitted), ds_rows, rmse);
    core_.rerank();
    core_.ledger.account(Stage::Prioritize, std::chrono::duration<double>(
        std::chrono::steady_clock::now() - r0).count());
  }

  void dispatch_tasks() {
    bool pushed = false;
    {
      // dispatched_ counts tasks queued or running; results decrement it.
      std::lock_guard<std::mutex> lock(task_mu_);
      while (dispatched_ < core_.cfg.workers) {
        ScoredRecord rec;
        double priority = 0.0;
        if (!core_.pop_next(&rec, &priority)) break;
        core_.log(EventKind::Pop, rec.candidate.id, "prio=" + format_double(priority));
        tasks_.push_back(Task{std::move(rec), core_.rank_version});
        ++dispatched_;
        pushed = true;
      }
    }
    if (pushed) task_cv_.notify_all();
  }

  LoopCore core_;
  std::mutex task_mu_;
  std::condition_variable task_cv_;
  std::deque<Task> tasks_;
  bool tasks_closed_ = false;
  std::mutex result_mu_;
  std::condition_variable result_cv_;
  std::deque<TaskResult> results_;
  int dispatched_ = 0;
};

}  // namespace

RunResult run_workflow(const RunConfig& cfg, const WorldSpec& world,
                       const Dataset& pretrain, const Generator& initial_generator,
                       const Dataset* holdout) {
  cfg.validate();
  initial_generator.validate();
  if (pretrain.empty() && cfg.retrain_batch > 0) {
    throw std::invalid_argument("run_workflow: retraining requires pretraining data");
  }
  if (cfg.mode == RunMode::DeterministicEventSim) {
    return DesDriver(cfg, world, pretrain, initial_generator, holdout).run();
  }
  return ParallelDriver(cfg, world, pretrain, initial_generator, holdout).run();
}

}  // namespace alqueue
