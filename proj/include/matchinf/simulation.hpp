// Monte Carlo driver: runs replicated trials of a configured pipeline across
// sample sizes, aggregates rejection rates and bias, and writes reports.
#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "matchinf/config.hpp"

namespace matchinf {

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

// One replication. Fields not produced by the configured pipeline stay NaN
// (or -1 for integer counts / decisions).
struct TrialRecord {
    int n = 0;
    int trial_index = 0;
    std::uint64_t seed = 0;
    int n_treated = -1;
    int n_matched_pairs = -1;        // pairs formed (pair pipelines only)
    double tau_dm = kUnset;          // difference-of-means point estimate
    double bias_dm = kUnset;         // tau_dm minus the true effect (0 under the null)
    double tau_reg = kUnset;         // regression point estimate (baseline model)
    double p_rand_dm = kUnset;       // randomization p-values
    double p_rand_reg = kUnset;
    double p_hc_baseline = kUnset;   // HC p-values for the three strategies
    double p_hc_saturated = kUnset;
    double p_hc_selected = kUnset;
    int phi1 = -1;                   // decisions 1{p_hc_k < alpha}
    int phi2 = -1;
    int phi3 = -1;
    double balance_statistic = kUnset;
    double balance_p = kUnset;
    int balance_reject = -1;         // 1{balance_p < balance_alpha}
    double total_cost = kUnset;      // pair-matching objective
    double imbalance_norm = kUnset;  // Euclidean norm of the mean covariate gap
    bool degenerate = false;         // matching impossible; p-values recorded as 1
};

struct SizeAggregate {
    int n = 0;
    int trials = 0;
    double mean_abs_bias = kUnset;        // mean |tau_dm| over trials
    double reject_rate_dm = kUnset;       // randomization tests at level alpha
    double reject_rate_reg = kUnset;
    double reject_rate_hc1 = kUnset;      // baseline strategy
    double reject_rate_hc2 = kUnset;      // saturated strategy
    double reject_rate_hc3 = kUnset;      // selected strategy
    double agreement_rate = kUnset;       // all three strategies agree at alpha
    double balance_detect_rate = kUnset;  // Hotelling p < balance_alpha
};

struct SimulationReport {
    ExperimentConfig config;
    std::vector<SizeAggregate> by_size;
    std::vector<TrialRecord> trials;   // all records, size-major then trial order
    double bias_slope = kUnset;        // log-log slope of mean_abs_bias vs n
    double elapsed_seconds = 0.0;
    int threads_used = 1;
};

// Runs one replication; deterministic in (config, n, trial_index, master seed).
TrialRecord run_trial(const ExperimentConfig& config, int n, int trial_index);

// Runs the full grid. Trials run in parallel when `parallel` and OpenMP are
// available; results are bit-identical to the serial path.
SimulationReport run_experiment(const ExperimentConfig& config, bool parallel = true);

// Least-squares slope of log(mean_abs_bias) on log(n). Requires >= 2 distinct
// sample sizes with positive mean absolute bias; throws ContractError.
double bias_slope(const std::vector<SizeAggregate>& by_size);

// Agreement summary of the three modeling strategies (per sample size).
struct ModelDependenceSummary {
    int n = 0;
    double agreement_rate = kUnset;
    double reject_rate_hc1 = kUnset;
    double reject_rate_hc2 = kUnset;
    double reject_rate_hc3 = kUnset;
};
std::vector<ModelDependenceSummary> model_dependence_experiment(const ExperimentConfig& config,
                                                                bool parallel = true);

// CSV with the fixed header
// n,mean_abs_bias,reject_rate_dm,reject_rate_reg,reject_rate_hc1,reject_rate_hc2,reject_rate_hc3,agreement_rate,balance_detect_rate
void write_plot_csv(const SimulationReport& report, const std::string& path);
std::string plot_csv_text(const SimulationReport& report);

void write_report_json(const SimulationReport& report, const std::string& path);
std::string report_json_text(const SimulationReport& report);

int resolve_thread_count(int requested);  // requested<=0: env MATCHINF_THREADS, else hardware

}  // namespace matchinf
