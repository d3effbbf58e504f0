// The paired Fisher randomization test: re-randomize treatment within matched
// pairs, rebuild the statistic's distribution, and report p-values and
// critical values.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "matchinf/core.hpp"
#include "matchinf/estimators.hpp"
#include "matchinf/matching.hpp"
#include "matchinf/rng.hpp"

namespace matchinf {

enum class TestMode { exhaustive, sampled };

struct RandomizationResult {
    double tau_obs = 0.0;
    std::vector<double> draws;        // tau* values, one per assignment draw
    double p_value = 1.0;
    double critical_value = 0.0;      // inf{t : P(|tau*| <= t) >= 1 - alpha}
    TestMode mode = TestMode::sampled;
    int b = 0;                        // draw count in sampled mode
    std::uint64_t seed = 0;
    std::string statistic_name;
};

// A statistic evaluated on (data, pairing, pseudo-assignment). z_star has
// length n; entries outside the matched set equal the observed z.
using PairedStatistic =
    std::function<double(const Dataset&, const PairMatching&, std::span<const std::uint8_t> z_star)>;

struct NamedStatistic {
    std::string name;
    PairedStatistic fn;
};

// Registered statistics.
NamedStatistic dm_randomization_statistic();
// Re-fits the matched-sample regression (design z-0.5, 1, x, g_S) per draw and
// returns the treatment coefficient.
NamedStatistic reg_randomization_statistic(FeatureSpec spec = baseline_spec());

// One pseudo-assignment: within each pair the two labels are kept or swapped
// with probability 1/2 each, independently across pairs; unmatched units keep
// their observed label.
std::vector<std::uint8_t> permute_within_pairs(const Dataset& dataset, const PairMatching& pairs, Rng& rng);

struct TestPlan {
    TestMode mode = TestMode::sampled;
    int b = 1000;                 // sampled-mode draw count
    std::uint64_t seed = 0;       // draw-stream seed
    double alpha = 0.05;          // level for the reported critical value
    bool parallel = true;         // draw loop may use the OpenMP pool
};

// Exhaustive mode enumerates all 2^N1 sign assignments (N1 <= 20 enforced);
// the p-value is the exact fraction with |tau*| >= |tau_obs|. Sampled mode
// draws B assignments keyed by (seed, draw index) and applies the add-one rule
// (1 + count) / (B + 1). Identical output regardless of thread count.
RandomizationResult randomization_pvalue(const Dataset& dataset, const PairMatching& pairs,
                                         const NamedStatistic& statistic, const TestPlan& plan);

// Left-continuous inf-quantile of |draws| at 1 - alpha.
double randomization_critical_value(std::span<const double> draws, double alpha);

// Test report JSON text (statistic name, mode, B, p_value, tau_obs,
// critical_value, seed).
std::string test_report_json(const RandomizationResult& result);

}  // namespace matchinf
