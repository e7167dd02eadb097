#pragma once
// Shared domain types: candidates, scored records, deduplicated datasets,
// thresholds, and the selection operations every other module builds on.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace alqueue {

enum class Origin : std::uint8_t { Generated, Pretraining, Reference, Holdout };

const char* origin_name(Origin o);
Origin origin_from_name(const std::string& name);

// One generated design. The embedding is always featurize(latent) and the
// fingerprint is always fingerprint_of(embedding); constructors in the
// domain module enforce that, loaders recompute both.
struct Candidate {
  std::int64_t id = 0;
  std::vector<double> latent;
  std::vector<double> embedding;
  std::uint64_t fingerprint = 0;  // bit j = membership of feature-set element j
  Origin origin = Origin::Generated;
};

// Candidate plus its cheap scores; the oracle strain is attached exactly once
// after simulation.
struct ScoredRecord {
  Candidate candidate;
  double s_sa = 0.0;  // synthesizability analogue in [0,1], lower better
  double s_t = 0.0;   // novelty distance in [0,1], lower better
  std::optional<double> s_is;

  bool simulated() const { return s_is.has_value(); }
  // Throws std::logic_error if a strain is already present.
  void set_strain(double value);
};

enum class ScoreField : std::uint8_t { SIs, SSa, ST };

double score_value(const ScoredRecord& r, ScoreField f);

// Stability/selection thresholds; a score of 1.0 disables the corresponding
// cheap-score cut since both cheap scores live in [0,1].
struct Thresholds {
  double t_is = 0.25;
  double t_sa = 1.0;
  double t_t = 1.0;

  void validate() const;  // finite and >= 0
  bool stable(double s_is, double s_sa, double s_t) const {
    return s_is < t_is && s_sa < t_sa && s_t < t_t;
  }
};

// Key for the uniqueness assumption: fingerprint bit-set combined with the
// embedding quantized to 4 decimal places, passed through a bijective mixer.
// Candidates differing in a single fingerprint bit are guaranteed distinct
// keys; distinct embeddings collide only by 64-bit hash accident.
std::uint64_t dedup_key(const Candidate& c);

// Ordered record collection with key-uniqueness enforced on insert.
class Dataset {
 public:
  Dataset() = default;

  // False (and no mutation) when the dedup key is already present.
  bool insert_unique(ScoredRecord r);

  bool contains_key(std::uint64_t key) const { return index_.count(key) != 0; }
  const ScoredRecord* find_key(std::uint64_t key) const;

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const ScoredRecord& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<ScoredRecord>& records() const { return records_; }

  // Mutable access for attaching oracle results; the index is keyed on the
  // candidate, which set_strain does not touch.
  ScoredRecord& mutable_record(std::size_t i) { return records_[i]; }

  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

 private:
  std::vector<ScoredRecord> records_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

// Records passing every threshold, order preserved. Throws
// std::invalid_argument if any record lacks a strain.
Dataset stable_subset(const Dataset& d, const Thresholds& t);

// Best ceil(frac*|d|) records by the named score, best first, ties to the
// smaller candidate id. frac in (0,1]; throws on an empty dataset or an
// unpopulated score.
Dataset top_fraction(const Dataset& d, double frac, ScoreField by, bool lower_is_better);

}  // namespace alqueue
