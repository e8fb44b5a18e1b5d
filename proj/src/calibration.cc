#include "statefuzz/calibration.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace statefuzz {

uint32_t NearestRankPercentile(std::vector<uint32_t> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty list");
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("percentile must be in (0, 1]");
  std::sort(values.begin(), values.end());
  // The epsilon guards against p * n landing a hair above an integer.
  auto rank = static_cast<size_t>(std::ceil(p * static_cast<double>(values.size()) - 1e-9));
  rank = std::clamp<size_t>(rank, 1, values.size());
  return values[rank - 1];
}

uint32_t ClampEpsilon(uint32_t value, const CalibrationConfig& cfg) {
  return std::clamp(value, cfg.eps_min, cfg.eps_max);
}

CalibrationResult Calibrate(std::span<const FuzzInput> seeds, const DigestRunner& run,
                            const CalibrationConfig& cfg) {
  if (seeds.empty()) throw std::invalid_argument("calibration needs at least one seed");
  CalibrationResult result;
  for (size_t s = 0; s < seeds.size(); ++s) {
    DigestSequence reference = run(seeds[s]);
    SeedCalibrationStats stats;
    stats.seed_index = s;
    stats.reference_iterations = reference.size();
    std::vector<uint32_t> seed_distances;
    for (int r = 0; r < cfg.repetitions; ++r) {
      const DigestSequence repeat = run(seeds[s]);
      if (repeat.size() != reference.size()) {
        ++stats.length_mismatches;
        spdlog::warn("calibration: seed {} repetition {} has {} iterations, reference has {}",
                     s, r + 1, repeat.size(), reference.size());
      }
      const size_t n = std::min(repeat.size(), reference.size());
      for (size_t i = 0; i < n; ++i) {
        if (!reference[i] || !repeat[i]) continue;
        seed_distances.push_back(TlshDistance(*reference[i], *repeat[i]));
      }
    }
    stats.compared = seed_distances.size();
    if (!seed_distances.empty()) {
      auto [mn, mx] = std::minmax_element(seed_distances.begin(), seed_distances.end());
      stats.min_distance = *mn;
      stats.max_distance = *mx;
      stats.mean_distance =
          std::accumulate(seed_distances.begin(), seed_distances.end(), 0.0) /
          static_cast<double>(seed_distances.size());
    }
    result.pool.insert(result.pool.end(), seed_distances.begin(), seed_distances.end());
    result.per_seed.push_back(stats);
    result.reference_runs.push_back(std::move(reference));
  }

  if (result.pool.empty()) {
    spdlog::warn("calibration: empty distance pool; using epsilon {}", cfg.eps_min);
    result.empty_pool = true;
    result.epsilon = cfg.eps_min;
    return result;
  }
  result.raw_percentile = NearestRankPercentile(result.pool, cfg.percentile);
  result.epsilon = ClampEpsilon(result.raw_percentile, cfg);
  result.clamped = result.epsilon != result.raw_percentile;
  return result;
}

nlohmann::json CalibrationResult::ToJson() const {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : per_seed) {
    seeds.push_back({{"seed", s.seed_index},
                     {"reference_iterations", s.reference_iterations},
                     {"compared", s.compared},
                     {"length_mismatches", s.length_mismatches},
                     {"min", s.min_distance},
                     {"max", s.max_distance},
                     {"mean", s.mean_distance}});
  }
  return {{"per_seed", seeds},
          {"pool_size", pool.size()},
          {"raw_percentile", raw_percentile},
          {"epsilon", epsilon},
          {"clamped", clamped},
          {"empty_pool", empty_pool}};
}

EpsilonState ObserveInputResult(EpsilonState es, bool produced_new_state,
                                const CalibrationConfig& cfg) {
  if (!produced_new_state) {
    es.consecutive_new_states = 0;
    return es;
  }
  if (++es.consecutive_new_states >= cfg.adjust_trigger) {
    es.epsilon = std::min(es.epsilon + cfg.adjust_step, cfg.eps_max);
    es.consecutive_new_states = 0;
  }
  return es;
}

}  // namespace statefuzz
