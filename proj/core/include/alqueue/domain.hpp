#pragma once
// Synthetic design space: latent-space generator, frozen feature/fingerprint
// maps, cheap scores, the expensive strain oracle, and generator fine-tuning.

#include <cstdint>
#include <vector>

#include "alqueue/core.hpp"
#include "alqueue/rng.hpp"

namespace alqueue {

inline constexpr int kEmbedDim = 38;
inline constexpr int kFingerprintBits = 64;
inline constexpr double kLatentBound = 6.0;     // validity cut per coordinate
inline constexpr double kVarianceFloor = 1e-3;  // fine-tune collapse guard

// Frozen affine-plus-tanh featurizer and random-hyperplane fingerprint.
// Both are pure functions of their seeds; loaders recompute embeddings and
// fingerprints instead of trusting stored ones.
class FeatureMaps {
 public:
  FeatureMaps(int latent_dim, std::uint64_t feature_map_seed,
              std::uint64_t fingerprint_seed, int embed_dim = kEmbedDim);

  // tanh(A*latent + b) componentwise; throws on length mismatch.
  std::vector<double> featurize(const std::vector<double>& latent) const;

  // Bit j set iff h_j . embedding > 0; throws on length mismatch.
  std::uint64_t fingerprint_of(const std::vector<double>& embedding) const;

  // Recomputes embedding and fingerprint from the latent in place.
  void refeaturize(Candidate& c) const;

  int latent_dim() const { return latent_dim_; }
  int embed_dim() const { return embed_dim_; }

 private:
  int latent_dim_;
  int embed_dim_;
  std::vector<double> weights_;  // embed_dim x latent_dim, row-major
  std::vector<double> bias_;
  std::vector<double> planes_;  // kFingerprintBits x embed_dim, row-major
};

// Jaccard distance over fingerprint bit-sets; two empty sets compare as
// identical (0).
double tanimoto(std::uint64_t a, std::uint64_t b);

// Minimum tanimoto distance to the reference set; throws if it is empty.
double novelty_score(const Candidate& c, const Dataset& reference);

// Weighted diagonal-Gaussian mixture over latent space. Stands in for the
// generative model; fine_tune re-estimates it from elite latents.
struct Generator {
  struct Component {
    double weight = 0.0;
    std::vector<double> mean;
    std::vector<double> sd;  // per-coordinate, >= 0
  };

  int latent_dim = 0;
  std::vector<Component> components;
  int version = 0;

  // Weights positive and summing to 1 (1e-9), sds >= 0, dims consistent.
  void validate() const;

  std::vector<double> sample_latent(Rng& rng) const;
};

struct FineTuneParams {
  double eta = 0.5;       // blend toward the elite estimate
  int kmeans_iters = 25;
  double variance_floor = kVarianceFloor;
};

// Ground truth behind the three scores plus the frozen maps and the
// reference set used for novelty (doubles as the pretraining data).
struct WorldSpec {
  int latent_dim = 8;
  std::uint64_t seed = 0;
  std::uint64_t feature_map_seed = 0;
  std::uint64_t fingerprint_seed = 0;
  std::vector<double> z_star;
  double scale = 1.0;     // strain steepness divisor, calibrated
  double noise_sd = 0.05; // log-normal oracle noise
  std::vector<double> sa_direction;  // unit vector in embedding space
  double sa_offset = 0.0;            // calibrated logistic shift
  FeatureMaps maps;
  Dataset reference;  // labeled; also serves as D_PT

  // Calibration record, persisted with the world.
  double initial_stable_rate = 0.0;
  double initial_mean_sa = 0.0;

  WorldSpec(int k, std::uint64_t fm_seed, std::uint64_t fp_seed)
      : latent_dim(k), feature_map_seed(fm_seed), fingerprint_seed(fp_seed),
        maps(k, fm_seed, fp_seed) {}
};

// logistic(sa_direction . embedding + sa_offset) in (0,1); lower = easier.
double sa_score(const Candidate& c, const WorldSpec& world);

// (||latent - z_star||^2 / scale) * exp(noise_sd * g), g standard normal
// keyed by dedup_key(c): a pure function of the candidate.
double oracle_strain(const Candidate& c, const WorldSpec& world);

// Simulated oracle wall-latency in seconds, also keyed by the candidate.
// sigma = 0 gives the constant model.
double oracle_latency(const Candidate& c, double median_s, double sigma);

// False iff any latent coordinate exceeds kLatentBound in magnitude.
bool validity_check(const Candidate& c);

// Draws n candidates: component by weight, then the diagonal Gaussian;
// embeddings and fingerprints filled in, ids assigned from *next_id.
std::vector<Candidate> sample_candidates(const Generator& g, int n, Rng& rng,
                                         const FeatureMaps& maps,
                                         std::int64_t* next_id,
                                         Origin origin = Origin::Generated);

// Re-estimates the mixture from elite latents (k-means from the current
// means, 25 Lloyd iterations), blends with the old parameters, floors the
// variances, bumps the version. Throws if |elite| < component count.
Generator fine_tune(const Generator& g, const Dataset& elite,
                    const FineTuneParams& params = {});

// World construction --------------------------------------------------------

struct WorldBuildParams {
  int latent_dim = 8;
  int generator_components = 4;
  int reference_size = 3000;
  int holdout_size = 3000;
  int pool_size = 6000;          // reference + fresh generator samples
  int calibration_samples = 10000;
  double target_stable_rate = 0.05;
  double stable_rate_tolerance = 0.01;
  double target_mean_sa = 0.10;
  double noise_sd = 0.05;
};

// Fully built world: calibrated spec, the initial generator, and the three
// labeled datasets (reference doubles as pretraining and lives in the spec).
struct World {
  WorldSpec spec;
  Generator initial_generator;
  Dataset holdout;  // disjoint from reference by dedup key
  Dataset pool;     // reference rows + generator rows, for offline reordering
};

// Deterministic for a fixed seed. Throws std::runtime_error with diagnostics
// if calibration cannot reach the target stable rate.
World build_world(std::uint64_t seed, const WorldBuildParams& params = {});

// Labels a candidate with its cheap scores (and optionally the oracle).
ScoredRecord score_candidate(Candidate c, const WorldSpec& world, bool run_oracle);

}  // namespace alqueue
