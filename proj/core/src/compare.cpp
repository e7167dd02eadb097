#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "alqueue/harness.hpp"

namespace alqueue {

namespace fs = std::filesystem;

Comparison compare_runs(const std::vector<std::string>& run_dirs) {
  if (run_dirs.size() < 2) {
    throw std::invalid_argument("compare: need at least two run directories");
  }
  Comparison c;
  std::size_t min_rows = SIZE_MAX;
  for (const auto& dir : run_dirs) {
    const auto summary_path = (fs::path(dir) / "summary.txt").string();
    const auto metrics_path = (fs::path(dir) / "metrics.csv").string();
    RunDigest d;
    d.dir = dir;
    const KeyValueFile kv = KeyValueFile::read(summary_path);
    d.label = kv.get("label");
    d.seed = kv.get_uint("seed");
    d.cum_stable = kv.get_int("result.cum_stable");
    d.r_t = kv.get_double("result.r_t");
    if (kv.has("result.final_rmse")) d.final_rmse = kv.get_double("result.final_rmse");
    d.prioritize_share = kv.get_double("ledger.prioritize_share");
    d.series = read_metrics_csv(metrics_path);
    min_rows = std::min(min_rows, d.series.size());
    c.runs.push_back(std::move(d));
  }
  c.aligned_rows = min_rows;
  for (const auto& d : c.runs) {
    if (d.series.size() != min_rows) {
      c.warnings.push_back("run " + d.dir + " has " + std::to_string(d.series.size()) +
                           " checkpoints; aligned series truncated to " +
                           std::to_string(min_rows));
    }
  }
  return c;
}

void write_comparison_csv(const std::string& path, const Comparison& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write comparison: " + path);
  out << "n_simulated";
  for (std::size_t i = 0; i < c.runs.size(); ++i) {
    out << ",run" << i << "_cum_stable,run" << i << "_r_t,run" << i << "_rmse";
  }
  out << '\n';
  for (std::size_t row = 0; row < c.aligned_rows; ++row) {
    out << c.runs.front().series[row].n_simulated;
    for (const auto& d : c.runs) {
      const MetricsRow& m = d.series[row];
      out << ',' << m.cum_stable << ',' << format_double(m.r_t) << ',';
      if (m.holdout_rmse) out << format_double(*m.holdout_rmse);
    }
    out << '\n';
  }
}

std::string comparison_text(const Comparison& c) {
  std::ostringstream out;
  char line[256];
  out << "run comparison (" << c.runs.size() << " runs, " << c.aligned_rows
      << " aligned checkpoints)\n";
  std::snprintf(line, sizeof(line), "%-4s %-20s %-6s %10s %8s %12s %12s\n", "idx",
                "label", "seed", "stable", "r_t", "final_rmse", "prio_share");
  out << line;
  const RunDigest& base = c.runs.front();
  for (std::size_t i = 0; i < c.runs.size(); ++i) {
    const RunDigest& d = c.runs[i];
    std::string rmse = d.final_rmse ? [&] {
      char b[32];
      std::snprintf(b, sizeof(b), "%.4f", *d.final_rmse);
      return std::string(b);
    }() : std::string("-");
    std::snprintf(line, sizeof(line), "%-4zu %-20s %-6llu %10lld %8.4f %12s %11.2f%%\n",
                  i, d.label.c_str(), static_cast<unsigned long long>(d.seed),
                  static_cast<long long>(d.cum_stable), d.r_t, rmse.c_str(),
                  100.0 * d.prioritize_share);
    out << line;
  }
  out << "deltas vs run 0:\n";
  for (std::size_t i = 0; i < c.runs.size(); ++i) {
    const RunDigest& d = c.runs[i];
    const double dstable = static_cast<double>(d.cum_stable - base.cum_stable);
    const double drt = d.r_t - base.r_t;
    double drmse = 0.0;
    const bool have_rmse = d.final_rmse && base.final_rmse;
    if (have_rmse) drmse = *d.final_rmse - *base.final_rmse;
    std::snprintf(line, sizeof(line), "%-4zu %-20s stable%+9.1f  r_t%+8.4f  rmse%s\n", i,
                  d.label.c_str(), dstable, drt,
                  have_rmse ? [&] {
                    char b[32];
                    std::snprintf(b, sizeof(b), "%+8.4f", drmse);
                    return std::string(b);
                  }().c_str()
                            : "      -");
    out << line;
  }
  for (const auto& w : c.warnings) out << "warning: " << w << '\n';
  return out.str();
}

}  // namespace alqueue
