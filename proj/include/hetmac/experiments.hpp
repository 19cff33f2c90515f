#pragma once
// Experiment drivers behind the CLI subcommands: parameter sweeps, the
// analytic-vs-simulated comparison tables, and the oracle cross-check
// suite. All outputs are deterministic CSV keyed by (config, seed).

#include <cstdint>
#include <string>
#include <vector>

#include "hetmac/config.hpp"
#include "hetmac/estimators.hpp"

namespace hetmac {

struct RunReport {
  bool ok = true;
  std::vector<std::string> outputs;  // files written
  std::vector<std::string> failures; // human-readable check failures
};

RunReport run_experiment(const ExperimentConfig& cfg);

RunReport run_estimate_sweep(const ExperimentConfig& cfg);
RunReport run_threshold_sweep(const ExperimentConfig& cfg);
RunReport run_mac_sim(const ExperimentConfig& cfg);
RunReport run_analysis_table(const ExperimentConfig& cfg);
RunReport run_validate(const ExperimentConfig& cfg);

// Mean total slot count of the three protocols over `reps` shared
// realizations at one parameter point. Used by the sweep, the threshold
// bisection, and tests. Draw order per realization is fixed (every node's
// activity uniform, then its hash), so results at different q values are
// positively coupled when seed and point_label coincide.
struct SlotMeans {
  double method1 = 0, method1_se = 0;
  double method2 = 0, method2_se = 0;
  double baseline = 0, baseline_se = 0;
};
SlotMeans mean_slot_counts(int T, int D, std::uint64_t n_all, int s_w,
                           const std::vector<double>& q, HashMode mode,
                           long reps, std::uint64_t seed,
                           std::uint64_t point_label, int jobs);

// Smallest q (equal across classes) at which the protocol's mean slot count
// reaches the T-repetition baseline, found by bisection on common random
// numbers. Returns 0 or 1 when there is no crossing inside (0, 1).
double activity_threshold(Protocol p, int T, int D, std::uint64_t n_all,
                          int s_w, long reps, double tol, std::uint64_t seed,
                          int jobs);

// Basic line chart for a CSV produced by the runners: x_col against each of
// y_cols, written as SVG. Rows whose chosen fields are non-numeric are
// skipped.
void render_line_chart(const std::string& csv_path, const std::string& x_col,
                       const std::vector<std::string>& y_cols,
                       const std::string& out_svg);

} // namespace hetmac
