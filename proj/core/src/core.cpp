#include "alqueue/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "alqueue/rng.hpp"

namespace alqueue {

const char* origin_name(Origin o) {
  switch (o) {
    case Origin::Generated: return "generated";
    case Origin::Pretraining: return "pretraining";
    case Origin::Reference: return "reference";
    case Origin::Holdout: return "holdout";
  }
  return "generated";
}

Origin origin_from_name(const std::string& name) {
  if (name == "generated") return Origin::Generated;
  if (name == "pretraining") return Origin::Pretraining;
  if (name == "reference") return Origin::Reference;
  if (name == "holdout") return Origin::Holdout;
  throw std::invalid_argument("unknown origin: " + name);
}

void ScoredRecord::set_strain(double value) {
  if (s_is.has_value()) throw std::logic_error("oracle strain already set");
  s_is = value;
}

double score_value(const ScoredRecord& r, ScoreField f) {
  switch (f) {
    case ScoreField::SSa: return r.s_sa;
    case ScoreField::ST: return r.s_t;
    case ScoreField::SIs:
      if (!r.s_is) throw std::invalid_argument("record has no oracle strain");
      return *r.s_is;
  }
  throw std::invalid_argument("bad score field");
}

void Thresholds::validate() const {
  for (double v : {t_is, t_sa, t_t}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("thresholds must be finite and >= 0");
    }
  }
}

std::uint64_t dedup_key(const Candidate& c) {
  std::uint64_t h = 0x243F6A8885A308D3ull;  // arbitrary nonzero start
  for (std::size_t i = 0; i < c.embedding.size(); ++i) {
    const auto q = static_cast<std::uint64_t>(
        static_cast<std::int64_t>(std::llround(c.embedding[i] * 1e4)));
    h = mix64(h + kGolden * (i + 1) + q);
  }
  // mix64 is bijective, so a one-bit fingerprint difference at equal
  // embeddings always yields a different key.
  return mix64(h ^ c.fingerprint);
}

bool Dataset::insert_unique(ScoredRecord r) {
  const std::uint64_t key = dedup_key(r.candidate);
  if (index_.count(key) != 0) return false;
  index_.emplace(key, records_.size());
  records_.push_back(std::move(r));
  return true;
}

const ScoredRecord* Dataset::find_key(std::uint64_t key) const {
  auto it = index_.find(key);
  return it == index_.end() ? nullptr : &records_[it->second];
}

Dataset stable_subset(const Dataset& d, const Thresholds& t) {
  t.validate();
  for (const auto& r : d) {
    if (!r.simulated()) {
      throw std::invalid_argument("stable_subset: record without oracle strain");
    }
  }
  Dataset out;
  for (const auto& r : d) {
    if (t.stable(*r.s_is, r.s_sa, r.s_t)) out.insert_unique(r);
  }
  return out;
}

Dataset top_fraction(const Dataset& d, double frac, ScoreField by, bool lower_is_better) {
  if (d.empty()) throw std::invalid_argument("top_fraction: empty dataset");
  if (!(frac > 0.0) || frac > 1.0) {
    throw std::invalid_argument("top_fraction: frac must be in (0,1]");
  }
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double va = score_value(d[a], by);
    const double vb = score_value(d[b], by);
    if (va != vb) return lower_is_better ? va < vb : va > vb;
    return d[a].candidate.id < d[b].candidate.id;
  });
  // ceil, so any positive fraction keeps at least one record.
  const auto keep = static_cast<std::size_t>(
      std::ceil(frac * static_cast<double>(d.size())));
  Dataset out;
  for (std::size_t i = 0; i < keep && i < order.size(); ++i) {
    out.insert_unique(d[order[i]]);
  }
  return out;
}

}  // namespace alqueue
