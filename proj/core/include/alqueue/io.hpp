#pragma once
// Dataset CSV persistence and the flat key/value text format used by world
// metadata, run configs, and run summaries. Embeddings and fingerprints are
// never stored; loaders recompute them from the latent via the feature maps.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "alqueue/core.hpp"
#include "alqueue/domain.hpp"

namespace alqueue {

// %.17g: shortest text that round-trips a double exactly.
std::string format_double(double v);

// Columns: id,origin,latent_0..latent_{k-1},s_sa,s_t,s_is (empty = pending).
void write_dataset_csv(const std::string& path, const Dataset& d);
Dataset read_dataset_csv(const std::string& path, const FeatureMaps& maps);

// Flat `key value` lines; '#' starts a comment. Keys are unique.
class KeyValueFile {
 public:
  static KeyValueFile read(const std::string& path);

  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);
  void set_int(const std::string& key, std::int64_t value);
  void set_uint(const std::string& key, std::uint64_t value);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;

  // Insertion order is preserved when writing.
  void write(const std::string& path) const;
  const std::vector<std::string>& keys() const { return order_; }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

std::string join_doubles(const std::vector<double>& v, char sep = ',');
std::vector<double> split_doubles(const std::string& s, char sep = ',');

}  // namespace alqueue
