#include "alqueue/domain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace alqueue {

FeatureMaps::FeatureMaps(int latent_dim, std::uint64_t feature_map_seed,
                         std::uint64_t fingerprint_seed, int embed_dim)
    : latent_dim_(latent_dim), embed_dim_(embed_dim) {
  if (latent_dim < 1 || embed_dim < 1) {
    throw std::invalid_argument("FeatureMaps: dimensions must be positive");
  }
  Rng fm = Rng::derive(feature_map_seed, rng_tag::kFeatureMap);
  weights_.resize(static_cast<std::size_t>(embed_dim_) * latent_dim_);
  // Row scale 0.5/sqrt(k) keeps tanh inputs sub-unit for latents several
  // units from the origin; saturated embeddings would alias distant latents
  // onto the same corner and make their strain unlearnable.
  const double row_scale = 0.5 / std::sqrt(static_cast<double>(latent_dim_));
  for (auto& w : weights_) w = row_scale * fm.next_normal();
  bias_.resize(embed_dim_);
  for (auto& b : bias_) b = 0.25 * fm.next_normal();

  Rng fp = Rng::derive(fingerprint_seed, rng_tag::kFingerprint);
  planes_.resize(static_cast<std::size_t>(kFingerprintBits) * embed_dim_);
  for (auto& h : planes_) h = fp.next_normal();
}

std::vector<double> FeatureMaps::featurize(const std::vector<double>& latent) const {
  if (static_cast<int>(latent.size()) != latent_dim_) {
    throw std::invalid_argument("featurize: latent length mismatch");
  }
  std::vector<double> emb(embed_dim_);
  for (int i = 0; i < embed_dim_; ++i) {
    double acc = bias_[i];
    const double* row = &weights_[static_cast<std::size_t>(i) * latent_dim_];
    for (int j = 0; j < latent_dim_; ++j) acc += row[j] * latent[j];
    emb[i] = std::tanh(acc);
  }
  return emb;
}

std::uint64_t FeatureMaps::fingerprint_of(const std::vector<double>& embedding) const {
  if (static_cast<int>(embedding.size()) != embed_dim_) {
    throw std::invalid_argument("fingerprint_of: embedding length mismatch");
  }
  std::uint64_t bits = 0;
  for (int j = 0; j < kFingerprintBits; ++j) {
    double acc = 0.0;
    const double* row = &planes_[static_cast<std::size_t>(j) * embed_dim_];
    for (int i = 0; i < embed_dim_; ++i) acc += row[i] * embedding[i];
    if (acc > 0.0) bits |= (1ull << j);
  }
  return bits;
}

void FeatureMaps::refeaturize(Candidate& c) const {
  c.embedding = featurize(c.latent);
  c.fingerprint = fingerprint_of(c.embedding);
}

double tanimoto(std::uint64_t a, std::uint64_t b) {
  const int inter = std::popcount(a & b);
  const int uni = std::popcount(a | b);
  if (uni == 0) return 0.0;  // two empty sets: identical by convention
  return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

double novelty_score(const Candidate& c, const Dataset& reference) {
  if (reference.empty()) {
    throw std::invalid_argument("novelty_score: empty reference set");
  }
  double best = 1.0;
  for (const auto& r : reference) {
    best = std::min(best, tanimoto(c.fingerprint, r.candidate.fingerprint));
    if (best == 0.0) break;
  }
  return best;
}

void Generator::validate() const {
  if (latent_dim < 1) throw std::invalid_argument("generator: latent_dim < 1");
  if (components.empty()) throw std::invalid_argument("generator: no components");
  double wsum = 0.0;
  for (const auto& comp : components) {
    if (comp.weight <= 0.0) throw std::invalid_argument("generator: non-positive weight");
    if (static_cast<int>(comp.mean.size()) != latent_dim ||
        static_cast<int>(comp.sd.size()) != latent_dim) {
      throw std::invalid_argument("generator: component dimension mismatch");
    }
    for (double s : comp.sd) {
      if (s < 0.0) throw std::invalid_argument("generator: negative sd");
    }
    wsum += comp.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-9) {
    throw std::invalid_argument("generator: weights must sum to 1");
  }
}

std::vector<double> Generator::sample_latent(Rng& rng) const {
  const double u = rng.next_double();
  std::size_t pick = components.size() - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < components.size(); ++i) {
    acc += components[i].weight;
    if (u < acc) {
      pick = i;
      break;
    }
  }
  const Component& comp = components[pick];
  std::vector<double> latent(latent_dim);
  for (int j = 0; j < latent_dim; ++j) {
    latent[j] = comp.mean[j] + comp.sd[j] * rng.next_normal();
  }
  return latent;
}

double sa_score(const Candidate& c, const WorldSpec& world) {
  double dot = world.sa_offset;
  for (std::size_t i = 0; i < c.embedding.size(); ++i) {
    dot += world.sa_direction[i] * c.embedding[i];
  }
  return 1.0 / (1.0 + std::exp(-dot));
}

double oracle_strain(const Candidate& c, const WorldSpec& world) {
  double d2 = 0.0;
  for (int j = 0; j < world.latent_dim; ++j) {
    const double diff = c.latent[j] - world.z_star[j];
    d2 += diff * diff;
  }
  double noise = 1.0;
  if (world.noise_sd > 0.0) {
    Rng g = Rng::derive(dedup_key(c), rng_tag::kOracleNoise);
    noise = std::exp(world.noise_sd * g.next_normal());
  }
  return d2 / world.scale * noise;
}

double oracle_latency(const Candidate& c, double median_s, double sigma) {
  if (sigma <= 0.0) return median_s;
  Rng g = Rng::derive(dedup_key(c), rng_tag::kSimLatency);
  return median_s * std::exp(sigma * g.next_normal());
}

bool validity_check(const Candidate& c) {
  for (double v : c.latent) {
    if (std::abs(v) > kLatentBound) return false;
  }
  return true;
}

std::vector<Candidate> sample_candidates(const Generator& g, int n, Rng& rng,
                                         const FeatureMaps& maps,
                                         std::int64_t* next_id, Origin origin) {
  if (n < 1) throw std::invalid_argument("sample_candidates: n < 1");
  std::vector<Candidate> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Candidate c;
    c.id = (*next_id)++;
    c.origin = origin;
    c.latent = g.sample_latent(rng);
    maps.refeaturize(c);
    out.push_back(std::move(c));
  }
  return out;
}

Generator fine_tune(const Generator& g, const Dataset& elite, const FineTuneParams& params) {
  g.validate();
  const int K = static_cast<int>(g.components.size());
  const int k = g.latent_dim;
  const auto n = static_cast<int>(elite.size());
  if (n < K) {
    std::ostringstream msg;
    msg << "fine_tune: elite size " << n << " below component count " << K;
    throw std::invalid_argument(msg.str());
  }

  // Lloyd iterations seeded at the current component means; this keeps a
  // stable component<->cluster pairing for the blend below.
  std::vector<std::vector<double>> centers(K);
  for (int c = 0; c < K; ++c) centers[c] = g.components[c].mean;
  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < params.kmeans_iters; ++iter) {
    for (int i = 0; i < n; ++i) {
      const auto& x = elite[i].candidate.latent;
      double best = 0.0;
      int best_c = 0;
      for (int c = 0; c < K; ++c) {
        double d2 = 0.0;
        for (int j = 0; j < k; ++j) {
          const double diff = x[j] - centers[c][j];
          d2 += diff * diff;
        }
        if (c == 0 || d2 < best) {
          best = d2;
          best_c = c;
        }
      }
      assign[i] = best_c;
    }
    std::vector<std::vector<double>> sums(K, std::vector<double>(k, 0.0));
    std::vector<int> counts(K, 0);
    for (int i = 0; i < n; ++i) {
      ++counts[assign[i]];
      const auto& x = elite[i].candidate.latent;
      for (int j = 0; j < k; ++j) sums[assign[i]][j] += x[j];
    }
    for (int c = 0; c < K; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its center
      for (int j = 0; j < k; ++j) centers[c][j] = sums[c][j] / counts[c];
    }
  }

  // Per-cluster diagonal sample variance and size-proportional weights.
  std::vector<int> counts(K, 0);
  for (int i = 0; i < n; ++i) ++counts[assign[i]];
  std::vector<std::vector<double>> var(K, std::vector<double>(k, params.variance_floor));
  for (int c = 0; c < K; ++c) {
    if (counts[c] < 2) continue;  // undersized cluster: estimate stays floored
    std::vector<double> acc(k, 0.0);
    for (int i = 0; i < n; ++i) {
      if (assign[i] != c) continue;
      const auto& x = elite[i].candidate.latent;
      for (int j = 0; j < k; ++j) {
        const double diff = x[j] - centers[c][j];
        acc[j] += diff * diff;
      }
    }
    for (int j = 0; j < k; ++j) {
      var[c][j] = std::max(params.variance_floor, acc[j] / (counts[c] - 1));
    }
  }

  Generator out = g;
  const double eta = params.eta;
  for (int c = 0; c < K; ++c) {
    auto& comp = out.components[c];
    const auto& old = g.components[c];
    const double est_weight = static_cast<double>(counts[c]) / n;
    const bool have_estimate = counts[c] > 0;
    comp.weight = (1.0 - eta) * old.weight + eta * est_weight;
    for (int j = 0; j < k; ++j) {
      const double est_mean = have_estimate ? centers[c][j] : old.mean[j];
      const double old_var = old.sd[j] * old.sd[j];
      const double est_var = have_estimate ? var[c][j] : old_var;
      comp.mean[j] = (1.0 - eta) * old.mean[j] + eta * est_mean;
      const double blended = (1.0 - eta) * old_var + eta * est_var;
      comp.sd[j] = std::sqrt(std::max(params.variance_floor, blended));
    }
  }
  // Counts partition the elite, so blended weights stay on the simplex up to
  // rounding; renormalize to keep the invariant exact over long runs.
  double wsum = 0.0;
  for (const auto& comp : out.components) wsum += comp.weight;
  for (auto& comp : out.components) comp.weight /= wsum;
  out.version = g.version + 1;
  out.validate();
  return out;
}

ScoredRecord score_candidate(Candidate c, const WorldSpec& world, bool run_oracle) {
  ScoredRecord r;
  r.candidate = std::move(c);
  r.s_sa = sa_score(r.candidate, world);
  r.s_t = novelty_score(r.candidate, world.reference);
  if (run_oracle) r.s_is = oracle_strain(r.candidate, world);
  return r;
}

namespace {

// Uniform direction on the unit sphere in R^dim.
std::vector<double> random_direction(Rng& rng, int dim) {
  std::vector<double> v(dim);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (auto& x : v) {
      x = rng.next_normal();
      norm2 += x * x;
    }
  } while (norm2 == 0.0);
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : v) x *= inv;
  return v;
}

Generator make_mixture(Rng& rng, int k, int K, const std::vector<double>& z_star,
                       double r_lo, double r_hi, double sd_lo, double sd_hi) {
  Generator g;
  g.latent_dim = k;
  g.components.resize(K);
  for (auto& comp : g.components) {
    comp.weight = 1.0 / K;
    const auto dir = random_direction(rng, k);
    const double radius = r_lo + (r_hi - r_lo) * rng.next_double();
    const double sd = sd_lo + (sd_hi - sd_lo) * rng.next_double();
    comp.mean.resize(k);
    comp.sd.assign(k, sd);
    for (int j = 0; j < k; ++j) comp.mean[j] = z_star[j] + radius * dir[j];
  }
  g.validate();
  return g;
}

// Reference population: one dominant tight cluster (most of the mass sits in
// a small, redundant neighborhood) plus broad low-weight satellites. Uniform
// sampling of this population spends most of its budget on near-duplicates.
Generator make_reference_mixture(Rng& rng, int k, int K,
                                 const std::vector<double>& z_star) {
  Generator g;
  g.latent_dim = k;
  g.components.resize(K);
  for (int c = 0; c < K; ++c) {
    auto& comp = g.components[c];
    const bool core = c == 0;
    comp.weight = core ? 0.7 : 0.3 / (K - 1);
    const auto dir = random_direction(rng, k);
    const double radius = core ? 1.5 + rng.next_double()
                               : 1.0 + 2.0 * rng.next_double();
    const double sd = core ? 0.3 : 0.9 + 0.2 * rng.next_double();
    comp.mean.resize(k);
    comp.sd.assign(k, sd);
    for (int j = 0; j < k; ++j) comp.mean[j] = z_star[j] + radius * dir[j];
  }
  g.validate();
  return g;
}

// Same support, equal component mass: used for holdout draws so sparse
// regions of the population are represented in the evaluation set.
Generator equal_weight_copy(const Generator& g) {
  Generator out = g;
  for (auto& comp : out.components) {
    comp.weight = 1.0 / static_cast<double>(out.components.size());
  }
  return out;
}

// Fills a dataset with labeled draws whose dedup keys avoid `taken`.
void fill_labeled(Dataset* out, int want, const Generator& gen, Rng& rng,
                  const WorldSpec& world, std::int64_t* next_id, Origin origin,
                  const Dataset* avoid_a, const Dataset* avoid_b) {
  int guard = 0;
  while (static_cast<int>(out->size()) < want) {
    if (++guard > want * 20) {
      throw std::runtime_error("world build: could not draw enough unique candidates");
    }
    auto cands = sample_candidates(gen, 64, rng, world.maps, next_id, origin);
    for (auto& c : cands) {
      if (static_cast<int>(out->size()) >= want) break;
      const std::uint64_t key = dedup_key(c);
      if (avoid_a && avoid_a->contains_key(key)) continue;
      if (avoid_b && avoid_b->contains_key(key)) continue;
      out->insert_unique(score_candidate(std::move(c), world, /*run_oracle=*/true));
    }
  }
}

}  // namespace

World build_world(std::uint64_t seed, const WorldBuildParams& params) {
  const std::uint64_t fm_seed = hash_at(seed, rng_tag::kFeatureMap);
  const std::uint64_t fp_seed = hash_at(seed, rng_tag::kFingerprint);
  WorldSpec spec(params.latent_dim, fm_seed, fp_seed);
  spec.seed = seed;
  spec.noise_sd = params.noise_sd;
  const int k = params.latent_dim;

  Rng geo = Rng::derive(seed, rng_tag::kWorldGeometry);
  spec.z_star.resize(k);
  for (auto& z : spec.z_star) z = 0.5 * geo.next_normal();
  spec.sa_direction = random_direction(geo, kEmbedDim);

  Rng gen_rng = Rng::derive(seed, rng_tag::kGeneratorInit);
  Generator initial = make_mixture(gen_rng, k, params.generator_components,
                                   spec.z_star, 2.0, 4.0, 0.45, 0.65);
  Rng ref_rng = Rng::derive(seed, rng_tag::kReferenceMixture);
  Generator reference_mixture =
      make_reference_mixture(ref_rng, k, params.generator_components, spec.z_star);

  // Calibration draws from the initial generator; scale then sa offset.
  Rng cal_rng = Rng::derive(seed, rng_tag::kCalibration);
  std::int64_t cal_id = -1'000'000'000;  // calibration ids never meet run ids
  std::vector<Candidate> sample = sample_candidates(
      initial, params.calibration_samples, cal_rng, spec.maps, &cal_id);

  std::vector<double> d2_noise(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double d2 = 0.0;
    for (int j = 0; j < k; ++j) {
      const double diff = sample[i].latent[j] - spec.z_star[j];
      d2 += diff * diff;
    }
    double noise = 1.0;
    if (spec.noise_sd > 0.0) {
      Rng g = Rng::derive(dedup_key(sample[i]), rng_tag::kOracleNoise);
      noise = std::exp(spec.noise_sd * g.next_normal());
    }
    d2_noise[i] = d2 * noise;
  }
  const Thresholds defaults;
  auto stable_rate_at = [&](double scale) {
    int stable = 0;
    for (double v : d2_noise) {
      if (v / scale < defaults.t_is) ++stable;
    }
    return static_cast<double>(stable) / static_cast<double>(d2_noise.size());
  };
  double lo = 1e-6, hi = 1e9;
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);  // log bisection: rate is monotone in scale
    if (stable_rate_at(mid) < params.target_stable_rate) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  spec.scale = std::sqrt(lo * hi);
  spec.initial_stable_rate = stable_rate_at(spec.scale);
  if (std::abs(spec.initial_stable_rate - params.target_stable_rate) >
      params.stable_rate_tolerance) {
    std::ostringstream msg;
    msg << "world build: stable-rate calibration failed, reached "
        << spec.initial_stable_rate << " (target " << params.target_stable_rate
        << " +/- " << params.stable_rate_tolerance << ", scale " << spec.scale << ")";
    throw std::runtime_error(msg.str());
  }

  std::vector<double> dots(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double dot = 0.0;
    for (int j = 0; j < kEmbedDim; ++j) {
      dot += spec.sa_direction[j] * sample[i].embedding[j];
    }
    dots[i] = dot;
  }
  auto mean_sa_at = [&](double offset) {
    double acc = 0.0;
    for (double dot : dots) acc += 1.0 / (1.0 + std::exp(-(dot + offset)));
    return acc / static_cast<double>(dots.size());
  };
  double olo = -40.0, ohi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (olo + ohi);
    if (mean_sa_at(mid) < params.target_mean_sa) {
      olo = mid;
    } else {
      ohi = mid;
    }
  }
  spec.sa_offset = 0.5 * (olo + ohi);
  spec.initial_mean_sa = mean_sa_at(spec.sa_offset);

  // Labeled datasets. Reference first (novelty needs it), then holdout and
  // pool kept key-disjoint from it and from each other.
  std::int64_t next_id = 1;
  World world{std::move(spec), std::move(initial), Dataset{}, Dataset{}};

  {
    Rng draws = Rng::derive(seed, rng_tag::kReferenceDraws);
    Dataset ref;
    int guard = 0;
    while (static_cast<int>(ref.size()) < params.reference_size) {
      if (++guard > params.reference_size * 20) {
        throw std::runtime_error("world build: reference draw stalled");
      }
      auto cands = sample_candidates(reference_mixture, 64, draws, world.spec.maps,
                                     &next_id, Origin::Pretraining);
      for (auto& c : cands) {
        if (static_cast<int>(ref.size()) >= params.reference_size) break;
        ScoredRecord r;
        r.candidate = std::move(c);
        r.s_sa = sa_score(r.candidate, world.spec);
        r.s_is = oracle_strain(r.candidate, world.spec);
        ref.insert_unique(std::move(r));
      }
    }
    world.spec.reference = std::move(ref);
    // Reference members score novelty against the full reference set, so
    // each gets s_t = 0 by construction; fill explicitly for the record.
    for (std::size_t i = 0; i < world.spec.reference.size(); ++i) {
      auto& r = world.spec.reference.mutable_record(i);
      r.s_t = novelty_score(r.candidate, world.spec.reference);
    }
  }

  {
    // Holdout spans both populations with equal mass per component, so the
    // evaluation set covers sparse regions the size-weighted pool underplays.
    Rng draws = Rng::derive(seed, rng_tag::kHoldoutDraws);
    const Generator ref_even = equal_weight_copy(reference_mixture);
    const Generator gen_even = equal_weight_copy(world.initial_generator);
    fill_labeled(&world.holdout, params.holdout_size / 2, ref_even, draws,
                 world.spec, &next_id, Origin::Holdout, &world.spec.reference, nullptr);
    fill_labeled(&world.holdout, params.holdout_size, gen_even, draws,
                 world.spec, &next_id, Origin::Holdout, &world.spec.reference, nullptr);
  }

  {
    Rng draws = Rng::derive(seed, rng_tag::kPoolDraws);
    Dataset pool;
    for (const auto& r : world.spec.reference) pool.insert_unique(r);
    fill_labeled(&pool, params.pool_size, world.initial_generator, draws, world.spec,
                 &next_id, Origin::Generated, &world.holdout, nullptr);
    world.pool = std::move(pool);
  }

  return world;
}

}  // namespace alqueue
