#include <filesystem>
#include <stdexcept>

#include "alqueue/harness.hpp"

namespace alqueue {

namespace fs = std::filesystem;

void save_world(const World& world, const std::string& dir) {
  fs::create_directories(dir);
  const WorldSpec& w = world.spec;
  KeyValueFile kv;
  kv.set_int("format", 1);
  kv.set_uint("seed", w.seed);
  kv.set_int("latent_dim", w.latent_dim);
  kv.set_int("embed_dim", w.maps.embed_dim());
  kv.set_uint("feature_map_seed", w.feature_map_seed);
  kv.set_uint("fingerprint_seed", w.fingerprint_seed);
  kv.set("z_star", join_doubles(w.z_star));
  kv.set_double("scale", w.scale);
  kv.set_double("noise_sd", w.noise_sd);
  kv.set("sa_direction", join_doubles(w.sa_direction));
  kv.set_double("sa_offset", w.sa_offset);
  kv.set_double("initial_stable_rate", w.initial_stable_rate);
  kv.set_double("initial_mean_sa", w.initial_mean_sa);
  const Generator& g = world.initial_generator;
  kv.set_int("generator.components", static_cast<std::int64_t>(g.components.size()));
  kv.set_int("generator.version", g.version);
  for (std::size_t i = 0; i < g.components.size(); ++i) {
    const std::string p = "generator." + std::to_string(i) + ".";
    kv.set_double(p + "weight", g.components[i].weight);
    kv.set(p + "mean", join_doubles(g.components[i].mean));
    kv.set(p + "sd", join_doubles(g.components[i].sd));
  }
  kv.write((fs::path(dir) / "world.meta").string());
  write_dataset_csv((fs::path(dir) / "world.csv").string(), w.reference);
  write_dataset_csv((fs::path(dir) / "holdout.csv").string(), world.holdout);
  write_dataset_csv((fs::path(dir) / "pool.csv").string(), world.pool);
}

World load_world(const std::string& dir) {
  const auto meta_path = (fs::path(dir) / "world.meta").string();
  KeyValueFile kv = KeyValueFile::read(meta_path);
  if (kv.get_int("format") != 1) {
    throw std::runtime_error("world.meta: unsupported format in " + dir);
  }
  const int k = static_cast<int>(kv.get_int("latent_dim"));
  WorldSpec spec(k, kv.get_uint("feature_map_seed"), kv.get_uint("fingerprint_seed"));
  spec.seed = kv.get_uint("seed");
  spec.z_star = split_doubles(kv.get("z_star"));
  spec.scale = kv.get_double("scale");
  spec.noise_sd = kv.get_double("noise_sd");
  spec.sa_direction = split_doubles(kv.get("sa_direction"));
  spec.sa_offset = kv.get_double("sa_offset");
  spec.initial_stable_rate = kv.get_double("initial_stable_rate");
  spec.initial_mean_sa = kv.get_double("initial_mean_sa");
  if (static_cast<int>(spec.z_star.size()) != k ||
      static_cast<int>(spec.sa_direction.size()) != spec.maps.embed_dim()) {
    throw std::runtime_error("world.meta: inconsistent dimensions in " + dir);
  }

  Generator g;
  g.latent_dim = k;
  g.version = static_cast<int>(kv.get_int("generator.version"));
  const auto n_comp = kv.get_int("generator.components");
  for (std::int64_t i = 0; i < n_comp; ++i) {
    const std::string p = "generator." + std::to_string(i) + ".";
    Generator::Component comp;
    comp.weight = kv.get_double(p + "weight");
    comp.mean = split_doubles(kv.get(p + "mean"));
    comp.sd = split_doubles(kv.get(p + "sd"));
    g.components.push_back(std::move(comp));
  }
  g.validate();

  spec.reference = read_dataset_csv((fs::path(dir) / "world.csv").string(), spec.maps);
  World world{std::move(spec), std::move(g), Dataset{}, Dataset{}};
  world.holdout =
      read_dataset_csv((fs::path(dir) / "holdout.csv").string(), world.spec.maps);
  world.pool = read_dataset_csv((fs::path(dir) / "pool.csv").string(), world.spec.maps);
  return world;
}

World make_world(std::uint64_t seed, const std::string& out_dir,
                 const WorldBuildParams& params) {
  World world = build_world(seed, params);
  save_world(world, out_dir);
  return world;
}

}  // namespace alqueue
