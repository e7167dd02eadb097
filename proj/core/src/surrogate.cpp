#include "alqueue/surrogate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "alqueue/rng.hpp"

namespace alqueue {

namespace {

std::uint64_t double_bits(double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, sizeof(u));
  return u;
}

// Canonicalized training table: unique rows in first-appearance order with
// gcd-reduced multiplicities, plus a per-feature global sort shared by all
// trees of a fit. Features are kept column-major so split scans stay within
// one small array per feature.
struct TrainTable {
  int dim = 0;
  std::size_t n_unique = 0;
  std::vector<double> x;          // n_unique x dim, row-major (dedup/equality)
  std::vector<double> xcol;       // dim x n_unique, column-major (split scans)
  std::vector<double> y;          // n_unique
  std::vector<std::uint64_t> w;   // reduced multiplicities
  std::uint64_t total = 0;        // sum of reduced multiplicities = draws per tree
  std::vector<double> cum;        // cumulative multiplicities for CDF inversion
  std::vector<std::uint32_t> order;  // dim x n_unique, ids sorted by feature value
};

TrainTable canonicalize(const std::vector<double>& features,
                        const std::vector<double>& targets, int dim) {
  const std::size_t n = targets.size();
  TrainTable t;
  t.dim = dim;

  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets;
  buckets.reserve(n * 2);
  std::vector<std::uint64_t> counts;
  counts.reserve(n);
  auto rows_equal = [&](std::uint32_t a, std::size_t row) {
    if (double_bits(t.y[a]) != double_bits(targets[row])) return false;
    const double* pa = &t.x[static_cast<std::size_t>(a) * dim];
    const double* pb = &features[row * dim];
    for (int j = 0; j < dim; ++j) {
      if (double_bits(pa[j]) != double_bits(pb[j])) return false;
    }
    return true;
  };
  for (std::size_t row = 0; row < n; ++row) {
    std::uint64_t h = 0x9AE16A3B2F90404Full;
    for (int j = 0; j < dim; ++j) {
      h = mix64(h + kGolden * (j + 1) + double_bits(features[row * dim + j]));
    }
    h = mix64(h ^ double_bits(targets[row]));
    auto& bucket = buckets[h];
    bool found = false;
    for (std::uint32_t id : bucket) {
      if (rows_equal(id, row)) {
        ++counts[id];
        found = true;
        break;
      }
    }
    if (!found) {
      const auto id = static_cast<std::uint32_t>(counts.size());
      bucket.push_back(id);
      counts.push_back(1);
      t.x.insert(t.x.end(), features.begin() + row * dim,
                 features.begin() + (row + 1) * dim);
      t.y.push_back(targets[row]);
    }
  }
  t.n_unique = counts.size();

  std::uint64_t g = 0;
  for (std::uint64_t c : counts) g = std::gcd(g, c);
  t.w.resize(t.n_unique);
  t.cum.resize(t.n_unique);
  double acc = 0.0;
  for (std::size_t i = 0; i < t.n_unique; ++i) {
    t.w[i] = counts[i] / g;
    t.total += t.w[i];
    acc += static_cast<double>(t.w[i]);
    t.cum[i] = acc;
  }

  t.xcol.resize(t.x.size());
  for (std::size_t i = 0; i < t.n_unique; ++i) {
    for (int f = 0; f < dim; ++f) {
      t.xcol[static_cast<std::size_t>(f) * t.n_unique + i] = t.x[i * dim + f];
    }
  }
  t.order.resize(static_cast<std::size_t>(dim) * t.n_unique);
  for (int f = 0; f < dim; ++f) {
    std::uint32_t* ord = &t.order[static_cast<std::size_t>(f) * t.n_unique];
    const double* col = &t.xcol[static_cast<std::size_t>(f) * t.n_unique];
    std::iota(ord, ord + t.n_unique, 0u);
    std::stable_sort(ord, ord + t.n_unique, [col](std::uint32_t a, std::uint32_t b) {
      return col[a] < col[b];
    });
  }
  return t;
}

// Breadth-first builder over flat per-feature index buffers. Every feature's
// section holds the node's rows contiguously and in sorted order, so a level
// is one split-scan pass plus one stable partition pass, with no per-node
// allocation. Node RNG streams are keyed by creation order, which depends
// only on (seed, tree index).
struct TreeBuilder {
  const TrainTable& t;
  const SurrogateParams& params;
  std::uint64_t tree_key = 0;
  int features_per_split = 0;

  struct RowStat {
    double y = 0.0;
    double w = 0.0;  // bootstrap count; 0 = row not in this tree's sample
  };
  std::vector<RowStat> yw;              // per unique row
  std::vector<std::uint8_t> in_sample;  // per unique row: bootstrap count > 0
  std::vector<std::uint32_t> cur;       // dim sections of m row ids each
  std::vector<std::uint32_t> nxt;
  std::vector<std::uint8_t> goes_left;  // per unique row, valid per split node
  std::vector<int> feats;               // subsample scratch
  std::vector<TreeNode> nodes;
  std::uint64_t node_counter = 0;

  struct Pending {
    std::int32_t node = 0;
    std::uint32_t beg = 0;  // segment offsets within every feature section
    std::uint32_t end = 0;
  };

  const double* col(int f) const {
    return &t.xcol[static_cast<std::size_t>(f) * t.n_unique];
  }

  Tree build(std::size_t m) {
    std::vector<Pending> level{Pending{0, 0, static_cast<std::uint32_t>(m)}};
    nodes.emplace_back();
    std::vector<Pending> next_level;
    std::vector<std::uint32_t> left_rows(1);

    for (int depth = 0; depth <= params.max_depth && !level.empty(); ++depth) {
      next_level.clear();
      left_rows.assign(level.size(), 0);
      for (std::size_t li = 0; li < level.size(); ++li) {
        Pending& p = level[li];
        const std::uint64_t my_counter = node_counter++;
        double w_sum = 0.0, wy_sum = 0.0;
        double y_min = 0.0, y_max = 0.0;
        for (std::uint32_t i = p.beg; i < p.end; ++i) {
          const RowStat& rs = yw[cur[i]];
          if (i == p.beg) {
            y_min = y_max = rs.y;
          } else {
            y_min = std::min(y_min, rs.y);
            y_max = std::max(y_max, rs.y);
          }
          w_sum += rs.w;
          wy_sum += rs.w * rs.y;
        }
        nodes[p.node].value = wy_sum / w_sum;
        if (depth >= params.max_depth || y_min == y_max ||
            w_sum < 2.0 * params.min_leaf) {
          continue;  // stays a leaf
        }

        Rng node_rng = Rng::derive(tree_key, my_counter);
        feats.resize(t.dim);
        std::iota(feats.begin(), feats.end(), 0);
        for (int i = 0; i < features_per_split; ++i) {
          const auto j = i + static_cast<int>(node_rng.next_below(t.dim - i));
          std::swap(feats[i], feats[j]);
        }

        bool have_split = false;
        double best_score = 0.0, best_thr = 0.0;
        int best_f = -1;
        for (int fi = 0; fi < features_per_split; ++fi) {
          const int f = feats[fi];
          const double* xv = col(f);
          const std::uint32_t* seg = &cur[static_cast<std::size_t>(f) * t.n_unique];
          double wl = 0.0, wyl = 0.0;
          double prev_val = xv[seg[p.beg]];
          for (std::uint32_t i = p.beg; i < p.end; ++i) {
            const std::uint32_t id = seg[i];
            const double v = xv[id];
            if (v != prev_val) {
              // Boundary between distinct values: candidate threshold.
              if (wl >= params.min_leaf && (w_sum - wl) >= params.min_leaf) {
                const double wr = w_sum - wl;
                const double wyr = wy_sum - wyl;
                const double score = wyl * wyl / wl + wyr * wyr / wr;
                double thr = prev_val + 0.5 * (v - prev_val);
                if (!(thr < v)) thr = prev_val;  // adjacent floats: close left side
                if (!have_split || score > best_score ||
                    (score == best_score &&
                     (f < best_f || (f == best_f && thr < best_thr)))) {
                  have_split = true;
                  best_score = score;
                  best_f = f;
                  best_thr = thr;
                }
              }
              prev_val = v;
            }
            const RowStat& rs = yw[id];
            wl += rs.w;
            wyl += rs.w * rs.y;
          }
        }
        if (!have_split) continue;

        const double* xbest = col(best_f);
        std::uint32_t n_left = 0;
        const std::uint32_t* seg0 = &cur[0];  // feature-0 section holds the same ids
        for (std::uint32_t i = p.beg; i < p.end; ++i) {
          const std::uint32_t id = seg0[i];
          const bool left = xbest[id] <= best_thr;
          goes_left[id] = left;
          n_left += left;
        }
        left_rows[li] = n_left;

        const auto left_idx = static_cast<std::int32_t>(nodes.size());
        nodes.emplace_back();
        nodes.emplace_back();
        nodes[p.node].feature = best_f;
        nodes[p.node].threshold = best_thr;
        nodes[p.node].left = left_idx;
        nodes[p.node].right = left_idx + 1;
        next_level.push_back(Pending{left_idx, p.beg, p.beg + n_left});
        next_level.push_back(Pending{left_idx + 1, p.beg + n_left, p.end});
      }

      if (next_level.empty()) break;
      // Stable partition of every feature section around each split node.
      for (int f = 0; f < t.dim; ++f) {
        const std::uint32_t* src = &cur[static_cast<std::size_t>(f) * t.n_unique];
        std::uint32_t* dst = &nxt[static_cast<std::size_t>(f) * t.n_unique];
        for (std::size_t li = 0; li < level.size(); ++li) {
          const Pending& p = level[li];
          if (nodes[p.node].feature < 0) continue;
          std::uint32_t lw = p.beg;
          std::uint32_t rw = p.beg + left_rows[li];
          for (std::uint32_t i = p.beg; i < p.end; ++i) {
            const std::uint32_t id = src[i];
            if (goes_left[id]) {
              dst[lw++] = id;
            } else {
              dst[rw++] = id;
            }
          }
        }
      }
      cur.swap(nxt);
      level.swap(next_level);
    }
    return Tree{std::move(nodes)};
  }
};

// Pre-order node layout for the persisted format and cheap prediction walks.
Tree to_preorder(const Tree& tree) {
  Tree out;
  out.nodes.reserve(tree.nodes.size());
  struct Frame {
    std::int32_t src;
    std::int32_t parent;
    bool is_left;
  };
  std::vector<Frame> stack{{0, -1, false}};
  while (!stack.empty()) {
    const Frame fr = stack.back();
    stack.pop_back();
    const auto idx = static_cast<std::int32_t>(out.nodes.size());
    out.nodes.push_back(tree.nodes[fr.src]);
    if (fr.parent >= 0) {
      (fr.is_left ? out.nodes[fr.parent].left : out.nodes[fr.parent].right) = idx;
    }
    const TreeNode& src = tree.nodes[fr.src];
    if (src.feature >= 0) {
      // Right pushed first so the left subtree lands immediately after us.
      stack.push_back({src.right, idx, false});
      stack.push_back({src.left, idx, true});
    }
  }
  return out;
}

// The builder is reused across a thread's trees; all reset work is O(rows).
Tree fit_one_tree(TreeBuilder& b, std::uint64_t seed, int tree_index) {
  const TrainTable& t = b.t;
  b.tree_key = hash_at(hash_at(seed, rng_tag::kBootstrap), tree_index);
  b.features_per_split = (t.dim + 2) / 3;  // ceil(dim / 3)
  b.nodes.clear();
  b.node_counter = 0;
  b.yw.resize(t.n_unique);
  for (std::size_t i = 0; i < t.n_unique; ++i) b.yw[i] = {t.y[i], 0.0};

  Rng draw_rng = Rng::derive(b.tree_key, rng_tag::kBootstrap);
  if (t.total == t.n_unique) {
    // Duplicate-free data: CDF inversion reduces to floor(u * n).
    const double n = static_cast<double>(t.n_unique);
    for (std::uint64_t i = 0; i < t.total; ++i) {
      auto idx = static_cast<std::size_t>(draw_rng.next_double() * n);
      if (idx >= t.n_unique) idx = t.n_unique - 1;
      b.yw[idx].w += 1.0;
    }
  } else {
    const double total = static_cast<double>(t.total);
    for (std::uint64_t i = 0; i < t.total; ++i) {
      const double u = draw_rng.next_double() * total;
      const auto it = std::upper_bound(t.cum.begin(), t.cum.end(), u);
      const auto idx = static_cast<std::size_t>(
          std::min<std::ptrdiff_t>(it - t.cum.begin(),
                                   static_cast<std::ptrdiff_t>(t.n_unique) - 1));
      b.yw[idx].w += 1.0;
    }
  }

  std::size_t m = 0;
  b.in_sample.resize(t.n_unique);
  for (std::size_t i = 0; i < t.n_unique; ++i) {
    b.in_sample[i] = b.yw[i].w > 0.0;
    m += b.in_sample[i];
  }
  b.cur.resize(t.order.size());
  b.nxt.resize(t.order.size());
  b.goes_left.resize(t.n_unique);
  for (int f = 0; f < t.dim; ++f) {
    const std::uint32_t* ord = &t.order[static_cast<std::size_t>(f) * t.n_unique];
    std::uint32_t* dst = &b.cur[static_cast<std::size_t>(f) * t.n_unique];
    std::size_t w = 0;
    for (std::size_t i = 0; i < t.n_unique; ++i) {
      if (b.in_sample[ord[i]]) dst[w++] = ord[i];
    }
  }
  return to_preorder(b.build(m));
}

}  // namespace

SurrogateEnsemble fit_rows(const std::vector<double>& features,
                           const std::vector<double>& targets, int dim,
                           const SurrogateParams& params, std::uint64_t seed) {
  if (targets.empty()) throw std::invalid_argument("fit: empty training set");
  if (dim < 1 || features.size() != targets.size() * static_cast<std::size_t>(dim)) {
    throw std::invalid_argument("fit: feature matrix shape mismatch");
  }
  if (params.n_trees < 1 || params.max_depth < 0 || params.min_leaf < 1) {
    throw std::invalid_argument("fit: bad tree parameters");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const TrainTable table = canonicalize(features, targets, dim);

  SurrogateEnsemble e;
  e.params_ = params;
  e.bootstrap_seed_ = seed;
  e.trained_on_ = targets.size();
  e.embed_dim_ = dim;
  e.trees_.resize(params.n_trees);

  const int threads = std::max(1, params.n_threads);
  if (threads == 1) {
    TreeBuilder builder{table, params};
    for (int i = 0; i < params.n_trees; ++i) {
      e.trees_[i] = fit_one_tree(builder, seed, i);
    }
  } else {
    // The seed -> tree mapping is per index, so the partition of indices
    // across threads cannot change the result.
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        TreeBuilder builder{table, params};
        for (int i = next.fetch_add(1); i < params.n_trees; i = next.fetch_add(1)) {
          e.trees_[i] = fit_one_tree(builder, seed, i);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  e.fit_seconds_ = std::chrono::duration<double>(
      std::chrono::steady_clock::now() - t0).count();
  return e;
}

SurrogateEnsemble fit(const Dataset& train, const SurrogateParams& params,
                      std::uint64_t seed) {
  if (train.empty()) throw std::invalid_argument("fit: empty training set");
  const int dim = static_cast<int>(train[0].candidate.embedding.size());
  std::vector<double> features;
  features.reserve(train.size() * dim);
  std::vector<double> targets;
  targets.reserve(train.size());
  for (const auto& r : train) {
    if (!r.simulated()) throw std::invalid_argument("fit: record without oracle strain");
    features.insert(features.end(), r.candidate.embedding.begin(),
                    r.candidate.embedding.end());
    targets.push_back(*r.s_is);
  }
  return fit_rows(features, targets, dim, params, seed);
}

Prediction SurrogateEnsemble::predict(const std::vector<double>& embedding) const {
  if (trees_.empty()) throw std::logic_error("predict: ensemble not trained");
  if (static_cast<int>(embedding.size()) != embed_dim_) {
    throw std::invalid_argument("predict: embedding length mismatch");
  }
  const std::size_t n = trees_.size();
  double sum = 0.0;
  std::vector<double> outs(n);
  for (std::size_t i = 0; i < n; ++i) {
    outs[i] = trees_[i].predict(embedding);
    sum += outs[i];
  }
  Prediction p;
  p.mean = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double v : outs) ss += (v - p.mean) * (v - p.mean);
    p.spread = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return p;
}

double holdout_rmse(const SurrogateEnsemble& e, const Dataset& holdout) {
  if (holdout.empty()) throw std::invalid_argument("holdout_rmse: empty holdout");
  double acc = 0.0;
  for (const auto& r : holdout) {
    if (!r.simulated()) {
      throw std::invalid_argument("holdout_rmse: record without oracle strain");
    }
    const double diff = *r.s_is - e.predict(r.candidate.embedding).mean;
    acc += diff * diff;
  }
  return std::sqrt(acc / static_cast<double>(holdout.size()));
}

bool needs_retrain(std::int64_t results_since_fit, std::int64_t batch) {
  if (batch < 1) throw std::invalid_argument("needs_retrain: batch must be >= 1");
  return results_since_fit >= batch;
}

void SurrogateEnsemble::save(std::ostream& out) const {
  out << "alqueue-trees v1\n";
  out << "n_trees " << trees_.size() << " max_depth " << params_.max_depth
      << " min_leaf " << params_.min_leaf << " seed " << bootstrap_seed_
      << " trained_on " << trained_on_ << " embed_dim " << embed_dim_ << "\n";
  char buf[64];
  for (std::size_t i = 0; i < trees_.size(); ++i) {
    out << "tree " << i << " nodes " << trees_[i].nodes.size() << "\n";
    for (const auto& nd : trees_[i].nodes) {
      std::snprintf(buf, sizeof(buf), "%.17g", nd.threshold);
      out << nd.feature << ' ' << buf << ' ' << nd.left << ' ' << nd.right << ' ';
      std::snprintf(buf, sizeof(buf), "%.17g", nd.value);
      out << buf << "\n";
    }
  }
}

void SurrogateEnsemble::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  save(out);
}

SurrogateEnsemble SurrogateEnsemble::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "alqueue-trees v1") {
    throw std::runtime_error("model file: bad magic");
  }
  SurrogateEnsemble e;
  std::size_t n_trees = 0;
  {
    std::getline(in, line);
    std::istringstream hdr(line);
    std::string kw;
    hdr >> kw >> n_trees >> kw >> e.params_.max_depth >> kw >> e.params_.min_leaf >>
        kw >> e.bootstrap_seed_ >> kw >> e.trained_on_ >> kw >> e.embed_dim_;
    if (!hdr) throw std::runtime_error("model file: bad header");
  }
  e.params_.n_trees = static_cast<int>(n_trees);
  e.trees_.resize(n_trees);
  for (std::size_t i = 0; i < n_trees; ++i) {
    std::getline(in, line);
    std::istringstream th(line);
    std::string kw;
    std::size_t idx = 0, n_nodes = 0;
    th >> kw >> idx >> kw >> n_nodes;
    if (!th || idx != i) throw std::runtime_error("model file: bad tree header");
    e.trees_[i].nodes.resize(n_nodes);
    for (auto& nd : e.trees_[i].nodes) {
      std::getline(in, line);
      std::istringstream ns(line);
      ns >> nd.feature >> nd.threshold >> nd.left >> nd.right >> nd.value;
      if (!ns) throw std::runtime_error("model file: bad node line");
    }
  }
  return e;
}

SurrogateEnsemble SurrogateEnsemble::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read model file: " + path);
  return load(in);
}

}  // namespace alqueue
