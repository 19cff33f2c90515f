#pragma once
// Experiment configuration: one JSON file drives one CLI run. The schema is
// strict (unknown keys are errors, with the offending path reported) and a
// canonical resolved dump is embedded in every output file so results are
// reproducible from the artifact alone.

#include <cstdint>
#include <string>
#include <vector>

#include "hetmac/core.hpp"
#include "hetmac/macsim.hpp"

namespace hetmac {

struct SweepAxis {
  std::string variable = "q"; // "q" sweeps all classes; "q1".."qT" just one
  double from = 0.0;
  double to = 1.0;
  double step = 0.05;
};

struct EstimateSweepConfig {
  int T = 4;
  int D = 100;               // nodes per class
  std::uint64_t n_all = 262144; // ID-space size per class (bitmap length source)
  int s_w = 5;
  HashMode hash_mode = HashMode::REDRAW;
  std::vector<double> q; // per-class activity probability; default 0.2 each
  SweepAxis sweep;
  long reps = 2000;
};

struct ThresholdSweepConfig {
  std::vector<int> T_values{5, 6};
  int D = 100;
  // Bitmap sizing for the crossover experiment. Kept well above D so the
  // baseline pays for the full ID space while the multiplexed methods only
  // pay per collision.
  std::uint64_t n_all = 262144;
  int s_w = 5;
  long reps = 4000;
  double q_tol = 0.005; // bisection stops at this interval width
};

struct MacSimSweepConfig {
  MacConfig mac;
  std::vector<double> lambda_sweep{0.2, 0.5, 1.0, 1.5, 2.0, 3.0};
  std::vector<MacMode> modes{MacMode::PROPOSED, MacMode::IDEAL};
  long frames = 2000;
  long warmup = 200;
  int batches = 10;
  bool per_frame_csv = false; // additionally dump per-frame metrics
};

struct AnalysisTableConfig {
  std::vector<int> T_values{2, 3, 4, 5, 6};
  std::vector<double> n_values{1, 10, 100};
  std::vector<int> s_values{0, 1, 2, 3, 4};
  int s_w = 5;
  long mc_reps = 20000; // 0 skips the Monte Carlo columns
  std::vector<int> W_values{50};
  std::vector<int> d_values{1, 5};
  std::vector<int> n_mac_values{5, 20};
  long frame_samples = 20000; // 0 skips the frame-process columns
};

struct ExperimentConfig {
  std::string kind; // estimate-sweep | threshold-sweep | mac-sim |
                    // analysis-table | validate
  std::uint64_t seed = 1;
  std::string out = "out";
  long reps = 0; // > 0 overrides the per-experiment default
  int jobs = 1;
  EstimateSweepConfig estimate;
  ThresholdSweepConfig threshold;
  MacSimSweepConfig macsim;
  AnalysisTableConfig analysis;
};

// Parses and validates; throws InvalidParameter naming the bad key/value.
ExperimentConfig parse_config_json(const std::string& text,
                                   const std::string& origin);
ExperimentConfig load_config(const std::string& path);

// Canonical one-line JSON with every resolved value, stable across runs.
std::string resolved_config_json(const ExperimentConfig& cfg);

const char* hash_mode_name(HashMode m);
const char* mac_mode_name(MacMode m);

} // namespace hetmac
