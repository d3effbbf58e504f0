// Test statistics and model-based inference on matched samples: the
// difference-of-means statistic, (weighted) linear regression with
// heteroskedasticity-consistent sandwich variances, one-shot model selection,
// and the Hotelling T^2 balance diagnostic.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "matchinf/core.hpp"
#include "matchinf/linalg.hpp"
#include "matchinf/matching.hpp"

namespace matchinf {

// A named bounded nonlinear basis x -> R^k (k may be 0).
struct NonlinearBasis {
    std::string id = "none";
    int k = 0;
    std::function<void(std::span<const double> x, std::span<double> out)> eval;
};

// Regression feature layout. Evaluating on (x, z) yields the design row
//   (z - 0.5, 1, x, g_S(x))
// where S selects components of the nonlinear basis g.
struct FeatureSpec {
    NonlinearBasis g;          // may be empty
    std::vector<int> include;  // S: sorted subset of {0, ..., g.k-1}

    int n_columns(int d) const { return 2 + d + static_cast<int>(include.size()); }
    std::string id(int d) const;  // short label like "z+1+x" / "z+1+x+g[cos_pi:0,2]"
};

// Baseline spec: no nonlinear terms.
FeatureSpec baseline_spec();
// Saturated spec: all k components of g included.
FeatureSpec saturated_spec(const NonlinearBasis& g);

struct RegressionFit {
    double tau_hat = 0.0;                    // treatment coefficient (first column)
    std::vector<double> other_coefficients;  // (gamma, beta, h_S) in column order
    std::vector<double> residuals;           // y - fit, one per row of the design
    double hc_variance_tau = 0.0;
    std::vector<double> weights_used;
    double t_stat = 0.0;                     // tau_hat / sqrt(hc_variance_tau)
    Matrix hc_covariance;                    // full sandwich, all coefficients
    std::vector<int> index_set;              // dataset rows used, in design order
    FeatureSpec spec;
};

// (1/N1) sum of treated-minus-matched-control outcome differences.
double dm_statistic(const Dataset& dataset, const PairMatching& pairs);
double dm_statistic(const Dataset& dataset, const ReplacementMatching& matching);

// Weighted least squares of y on the FeatureSpec design over index_set.
// weights aligns with index_set; all-ones gives the ordinary fit, multiplicity
// weights give the with-replacement weighted fit. The sandwich filling uses
// squared weights. Throws SingularDesign on rank deficiency.
RegressionFit fit_linear(const Dataset& dataset, std::span<const int> index_set,
                         std::span<const double> weights, const FeatureSpec& spec);

// Design matrix over index_set. When z_override is non-empty it must have one
// entry per dataset row; the z column is taken from it instead of the data
// (used by the randomization test, which re-fits under pseudo-assignments).
Matrix build_design(const Dataset& dataset, std::span<const int> index_set, const FeatureSpec& spec,
                    std::span<const std::uint8_t> z_override);
RegressionFit fit_linear_with_design(const Dataset& dataset, std::span<const int> index_set,
                                     std::span<const double> weights, const FeatureSpec& spec,
                                     const Matrix& design);

// The tau-coordinate HC0 sandwich variance of a fit.
double hc_variance(const RegressionFit& fit);

enum class Sidedness { one, two };

// Normal-reference p-value from t = tau_hat / sqrt(hc_variance_tau).
// Two-sided: 2 Phi(-|t|); one-sided: Phi(-t). Zero variance is an error.
double hc_pvalue(const RegressionFit& fit, Sidedness sidedness);

// Fit the saturated model, drop every g component whose HC z-test p-value
// exceeds level, return the pruned spec (single pass).
FeatureSpec select_model(const Dataset& dataset, std::span<const int> index_set,
                         std::span<const double> weights, const NonlinearBasis& g, double level);

struct HotellingResult {
    double statistic = 0.0;  // T^2
    double p = 1.0;          // F-reference p-value
};

// Two-sample Hotelling T^2 on covariate means between treated and control
// units of index_set. Requires both groups present and a nonsingular pooled
// covariance.
HotellingResult hotelling_t2(const Dataset& dataset, std::span<const int> index_set);

}  // namespace matchinf
