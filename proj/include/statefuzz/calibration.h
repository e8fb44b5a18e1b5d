#pragma once

// Calibration of the state-distance threshold from repeated seed executions,
// and the in-campaign rule that widens it under a storm of new states.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "statefuzz/input.h"
#include "statefuzz/tlsh.h"

namespace statefuzz {

struct CalibrationConfig {
  int repetitions = 3;       // extra runs per seed after the reference run
  double percentile = 0.90;  // in (0, 1]
  uint32_t eps_min = 5;
  uint32_t eps_max = 100;
  uint32_t adjust_step = 10;
  int adjust_trigger = 5;  // consecutive new-state inputs
};

using DigestSequence = std::vector<std::optional<TlshDigest>>;
// Executes one input and returns its per-iteration digests.
using DigestRunner = std::function<DigestSequence(const FuzzInput&)>;

struct SeedCalibrationStats {
  size_t seed_index = 0;
  size_t reference_iterations = 0;
  size_t compared = 0;
  size_t length_mismatches = 0;
  uint32_t min_distance = 0;
  uint32_t max_distance = 0;
  double mean_distance = 0.0;
};

struct CalibrationResult {
  uint32_t epsilon = 0;
  uint32_t raw_percentile = 0;  // before clamping (0 when the pool is empty)
  bool clamped = false;
  bool empty_pool = false;
  std::vector<uint32_t> pool;
  std::vector<SeedCalibrationStats> per_seed;
  std::vector<DigestSequence> reference_runs;  // one per seed

  nlohmann::json ToJson() const;
};

// Nearest-rank percentile: sorted[ceil(p * n)] with 1-based indexing.
// `values` need not be sorted; must be non-empty.
uint32_t NearestRankPercentile(std::vector<uint32_t> values, double p);

uint32_t ClampEpsilon(uint32_t value, const CalibrationConfig& cfg);

CalibrationResult Calibrate(std::span<const FuzzInput> seeds, const DigestRunner& run,
                            const CalibrationConfig& cfg);

struct EpsilonState {
  uint32_t epsilon = 5;
  int consecutive_new_states = 0;
};

EpsilonState ObserveInputResult(EpsilonState es, bool produced_new_state,
                                const CalibrationConfig& cfg);

}  // namespace statefuzz
