// Experiment configuration: pipeline naming, JSON (de)serialization with
// strict key checking, and the built-in experiment presets.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "matchinf/dgp.hpp"

namespace matchinf {

// Which matcher, which statistic(s), which inference method a trial runs.
enum class Pipeline {
    pair_dm_rand,                // optimal pairs + difference-of-means + randomization p
    pair_reg_rand,               // optimal pairs + regression statistic + randomization p
    pair_hc,                     // optimal pairs + baseline-model HC p-value
    pair_hc_strategies,          // optimal pairs + HC p-values for all three modeling strategies
    replacement_hc,              // with-replacement + weighted regression + HC p-value
    replacement_hc_strategies,   // with-replacement + all three strategies
    unmatched_hc,                // full sample + HC p-value (no matching)
    unmatched_hc_strategies,     // full sample + all three strategies
};

std::string to_string(Pipeline p);
Pipeline pipeline_from_string(const std::string& s);
bool pipeline_uses_pairs(Pipeline p);
bool pipeline_uses_replacement(Pipeline p);
bool pipeline_uses_strategies(Pipeline p);

struct ExperimentConfig {
    DgpSpec dgp;
    Pipeline pipeline = Pipeline::pair_dm_rand;
    std::vector<int> sizes;            // sample sizes, each >= 1
    int replications = 500;            // R >= 1
    int permutations = 1000;           // B >= 1
    double alpha = 0.05;               // in (0,1)
    double balance_alpha = 0.10;       // Hotelling diagnostic level
    std::uint64_t seed = 20260823;     // master seed
    std::string report_path;           // optional output paths ("" = do not write)
    std::string plot_path;
};

void validate(const ExperimentConfig& config);

// Strict JSON parsing: unknown keys anywhere in the document are rejected.
ExperimentConfig parse_config_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& config);  // full echo, round-trips

// Built-in experiment presets addressed by id:
//   fig1  bias/Type-I scaling of the paired test under a logistic 4-D design
//   ex1   1-D linear-propensity invalidity of the difference-of-means test
//   ex2   disc-covariate invalidity of the difference-of-means test
//   ex3   variance mismatch of the regression-adjusted randomization test
//   prop2 valid regime for the difference-of-means randomization test
//   prop3 valid regime for the regression-adjusted randomization test
//   thm1  HC p-value robustness under local misspecification (pair matching)
//   thm2  HC robustness with replacement matching and multiplicity weights
//   thm3  model-dependence agreement across the three strategies
// scale: "desk" (default, minutes) or "full" (2000-replication final runs).
std::vector<std::string> known_experiment_ids();
ExperimentConfig experiment_preset(const std::string& id, const std::string& scale = "desk");

}  // namespace matchinf
