#include "alqueue/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "alqueue/rng.hpp"

namespace alqueue {

const char* acquisition_mode_name(AcquisitionMode m) {
  switch (m) {
    case AcquisitionMode::Exploit: return "exploit";
    case AcquisitionMode::Explore: return "explore";
    case AcquisitionMode::Lcb: return "lcb";
    case AcquisitionMode::MultiObjective: return "multi";
    case AcquisitionMode::Random: return "random";
    case AcquisitionMode::Fifo: return "fifo";
  }
  return "fifo";
}

AcquisitionMode acquisition_mode_from_name(const std::string& name) {
  if (name == "exploit") return AcquisitionMode::Exploit;
  if (name == "explore") return AcquisitionMode::Explore;
  if (name == "lcb") return AcquisitionMode::Lcb;
  if (name == "multi") return AcquisitionMode::MultiObjective;
  if (name == "random") return AcquisitionMode::Random;
  if (name == "fifo") return AcquisitionMode::Fifo;
  throw std::invalid_argument("unknown acquisition mode: " + name);
}

void AcquisitionSpec::validate() const {
  if (w_is < 0.0 || w_sa < 0.0 || w_t < 0.0) {
    throw std::invalid_argument("acquisition: negative objective weight");
  }
  if (mode == AcquisitionMode::MultiObjective &&
      std::abs(w_is + w_sa + w_t - 1.0) > 1e-9) {
    throw std::invalid_argument("acquisition: multi-objective weights must sum to 1");
  }
}

bool AcquisitionSpec::uses_surrogate() const {
  switch (mode) {
    case AcquisitionMode::Exploit:
    case AcquisitionMode::Explore:
    case AcquisitionMode::Lcb:
      return true;
    case AcquisitionMode::MultiObjective:
      return w_is > 0.0;
    case AcquisitionMode::Random:
    case AcquisitionMode::Fifo:
      return false;
  }
  return false;
}

double priority(const AcquisitionSpec& spec, const QueueView& entry,
                std::uint64_t random_key) {
  auto need_pred = [&]() -> const Prediction& {
    if (!entry.pred) {
      throw std::invalid_argument("acquisition: surrogate mode without a prediction");
    }
    return *entry.pred;
  };
  switch (spec.mode) {
    case AcquisitionMode::Exploit:
      return need_pred().mean;
    case AcquisitionMode::Explore:
      return -need_pred().spread;
    case AcquisitionMode::Lcb:
      return need_pred().mean - spec.lambda * need_pred().spread;
    case AcquisitionMode::MultiObjective: {
      double v = spec.w_sa * entry.s_sa + spec.w_t * entry.s_t;
      if (spec.w_is > 0.0) v += spec.w_is * need_pred().mean;
      return v;
    }
    case AcquisitionMode::Random:
      return Rng(hash_at(random_key, static_cast<std::uint64_t>(entry.id))).next_double();
    case AcquisitionMode::Fifo:
      return static_cast<double>(entry.id);
  }
  throw std::invalid_argument("acquisition: bad mode");
}

std::vector<double> normalize_objective(const std::vector<double>& values) {
  if (values.empty()) {
    throw std::invalid_argument("normalize_objective: empty input");
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> out(values.size(), 0.0);
  if (hi == lo) return out;  // degenerate range: everything maps to 0
  const double inv = 1.0 / (hi - lo);
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - lo) * inv;
  return out;
}

std::vector<double> compute_priorities(const AcquisitionSpec& spec,
                                       const std::vector<QueueView>& entries,
                                       std::uint64_t random_key) {
  spec.validate();
  std::vector<double> out(entries.size());
  if (entries.empty()) return out;

  if (spec.mode == AcquisitionMode::MultiObjective) {
    const std::size_t n = entries.size();
    std::vector<double> sa(n), st(n), is(n);
    for (std::size_t i = 0; i < n; ++i) {
      sa[i] = entries[i].s_sa;
      st[i] = entries[i].s_t;
    }
    std::vector<QueueView> norm(entries);
    if (spec.w_is > 0.0) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!entries[i].pred) {
          throw std::invalid_argument("acquisition: surrogate mode without a prediction");
        }
        is[i] = entries[i].pred->mean;
      }
      const auto is_n = normalize_objective(is);
      for (std::size_t i = 0; i < n; ++i) norm[i].pred = Prediction{is_n[i], 0.0};
    }
    const auto sa_n = normalize_objective(sa);
    const auto st_n = normalize_objective(st);
    for (std::size_t i = 0; i < n; ++i) {
      norm[i].s_sa = sa_n[i];
      norm[i].s_t = st_n[i];
      out[i] = priority(spec, norm[i], random_key);
    }
    return out;
  }

  for (std::size_t i = 0; i < entries.size(); ++i) {
    out[i] = priority(spec, entries[i], random_key);
  }
  return out;
}

std::vector<std::size_t> rank(const std::vector<double>& priorities,
                              const std::vector<std::int64_t>& ids) {
  if (priorities.size() != ids.size()) {
    throw std::invalid_argument("rank: one priority per candidate required");
  }
  for (double p : priorities) {
    if (std::isnan(p)) throw std::invalid_argument("rank: NaN priority");
  }
  std::vector<std::size_t> perm(priorities.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    if (priorities[a] != priorities[b]) return priorities[a] < priorities[b];
    return ids[a] < ids[b];
  });
  return perm;
}

}  // namespace alqueue
