#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "alqueue/harness.hpp"
#include "alqueue/rng.hpp"

namespace alqueue {

ReorderResult reorder_experiment(const Dataset& pool, const Dataset& holdout,
                                 const ReorderParams& params) {
  if (params.warm < 1 || params.batch < 1) {
    throw std::invalid_argument("reorder: warm and batch must be >= 1");
  }
  if (static_cast<std::size_t>(params.batch) > pool.size()) {
    throw std::invalid_argument("reorder: batch larger than pool");
  }
  if (static_cast<std::size_t>(params.warm) >= pool.size()) {
    throw std::invalid_argument("reorder: warm start exhausts the pool");
  }
  if (params.seeds.empty()) throw std::invalid_argument("reorder: no seeds");
  params.strategy.validate();
  for (const auto& r : pool) {
    if (!r.simulated()) {
      throw std::invalid_argument("reorder: pool record without oracle strain");
    }
  }

  const std::size_t n = pool.size();
  std::size_t budget = n;
  if (params.budget < 0) {
    budget = n / 2;
  } else if (params.budget > 0) {
    budget = std::min<std::size_t>(params.budget, n);
  }
  budget = std::max<std::size_t>(budget, params.warm);

  ReorderResult result;
  for (const std::uint64_t seed : params.seeds) {
    ReorderSeries series;
    series.seed = seed;

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng warm_rng = Rng::derive(seed, rng_tag::kReorderWarm);
    for (int i = 0; i < params.warm; ++i) {
      const auto j = i + static_cast<std::size_t>(warm_rng.next_below(n - i));
      std::swap(order[i], order[j]);
    }
    std::vector<std::uint32_t> acquired(order.begin(), order.begin() + params.warm);
    std::vector<std::uint32_t> remaining(order.begin() + params.warm, order.end());

    std::int64_t cum_stable = 0;
    for (std::uint32_t idx : acquired) {
      const auto& r = pool[idx];
      if (params.thresholds.stable(*r.s_is, r.s_sa, r.s_t)) ++cum_stable;
    }

    SurrogateEnsemble model;
    std::uint64_t step = 0;
    auto retrain_and_record = [&] {
      Dataset train;
      for (std::uint32_t idx : acquired) train.insert_unique(pool[idx]);
      const std::uint64_t fit_seed = hash_at(hash_at(seed, rng_tag::kBootstrap), step);
      model = fit(train, params.surrogate, fit_seed);
      series.n_acquired.push_back(static_cast<std::int64_t>(acquired.size()));
      series.cum_stable.push_back(cum_stable);
      series.holdout_rmse.push_back(holdout_rmse(model, holdout));
      ++step;
    };
    retrain_and_record();

    while (acquired.size() < budget && !remaining.empty()) {
      const bool want_pred = params.strategy.uses_surrogate();
      std::vector<QueueView> entries(remaining.size());
      std::vector<std::int64_t> ids(remaining.size());
      for (std::size_t i = 0; i < remaining.size(); ++i) {
        const auto& r = pool[remaining[i]];
        entries[i].id = r.candidate.id;
        entries[i].s_sa = r.s_sa;
        entries[i].s_t = r.s_t;
        if (want_pred) entries[i].pred = model.predict(r.candidate.embedding);
        ids[i] = r.candidate.id;
      }
      const std::uint64_t random_key =
          hash_at(hash_at(seed, rng_tag::kRandomAcquisition), step);
      const auto prios = compute_priorities(params.strategy, entries, random_key);
      const auto perm = rank(prios, ids);

      const std::size_t take = std::min<std::size_t>(
          {static_cast<std::size_t>(params.batch), remaining.size(),
           budget - acquired.size()});
      std::vector<bool> taken(remaining.size(), false);
      for (std::size_t i = 0; i < take; ++i) {
        const std::uint32_t idx = remaining[perm[i]];
        taken[perm[i]] = true;
        acquired.push_back(idx);
        const auto& r = pool[idx];
        if (params.thresholds.stable(*r.s_is, r.s_sa, r.s_t)) ++cum_stable;
      }
      std::vector<std::uint32_t> rest;
      rest.reserve(remaining.size() - take);
      for (std::size_t i = 0; i < remaining.size(); ++i) {
        if (!taken[i]) rest.push_back(remaining[i]);
      }
      remaining = std::move(rest);
      retrain_and_record();
    }
    result.per_seed.push_back(std::move(series));
  }

  // Seeds share the checkpoint grid (same warm/batch/budget), so averaging is
  // pointwise.
  const auto& grid = result.per_seed.front().n_acquired;
  for (const auto& s : result.per_seed) {
    if (s.n_acquired != grid) {
      throw std::logic_error("reorder: checkpoint grids diverged across seeds");
    }
  }
  result.n_acquired = grid;
  result.mean_cum_stable.assign(grid.size(), 0.0);
  result.mean_rmse.assign(grid.size(), 0.0);
  for (const auto& s : result.per_seed) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      result.mean_cum_stable[i] += static_cast<double>(s.cum_stable[i]);
      result.mean_rmse[i] += s.holdout_rmse[i];
    }
  }
  const auto n_seeds = static_cast<double>(result.per_seed.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    result.mean_cum_stable[i] /= n_seeds;
    result.mean_rmse[i] /= n_seeds;
  }
  return result;
}

void write_reorder_csv(const std::string& path, const std::string& strategy,
                       const ReorderResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write reorder results: " + path);
  out << "strategy,seed,step,n_acquired,cum_stable,holdout_rmse\n";
  for (const auto& s : result.per_seed) {
    for (std::size_t i = 0; i < s.n_acquired.size(); ++i) {
      out << strategy << ',' << s.seed << ',' << i << ',' << s.n_acquired[i] << ','
          << s.cum_stable[i] << ',' << format_double(s.holdout_rmse[i]) << '\n';
    }
  }
  for (std::size_t i = 0; i < result.n_acquired.size(); ++i) {
    out << strategy << ",mean," << i << ',' << result.n_acquired[i] << ','
        << format_double(result.mean_cum_stable[i]) << ','
        << format_double(result.mean_rmse[i]) << '\n';
  }
}

}  // namespace alqueue
