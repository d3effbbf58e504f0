// Data-generating processes for the simulation studies, the bounded-nonlinear
// local misspecification transform, and closed-form oracle constants.
//
// Samples carry a hidden truth record (propensities, conditional means,
// potential outcomes) next to the observable Dataset; only the simulation
// harness may read it.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "matchinf/core.hpp"
#include "matchinf/estimators.hpp"
#include "matchinf/rng.hpp"

namespace matchinf {

// X ~ U(0,1); Z|X ~ Bernoulli(theta0 + theta1 x); Y|X ~ N(beta0 + beta1 x, sigma^2).
struct LinearPropensity1D {
    double theta0 = 0.2;
    double theta1 = 0.5;
    double beta0 = 0.0;
    double beta1 = 1.0;
    double sigma = 1.0;
};

// X ~ Uniform(unit disc); Z|X ~ Bernoulli{0.35 (1 + theta^T x)}; Y|X ~ N(theta^T x, sigma^2).
struct DiscPropensity2D {
    std::array<double, 2> theta{1.0, 0.0};
    double sigma = 1.0;
};

// X ~ U([-1,1]^4); Z|X ~ Bernoulli{scale / (1 + exp(1.1 - x1))}; Y|X ~ N(3 x1, 1).
// scale < ~0.94 keeps every propensity below 0.45.
struct LogisticPropensity4D {
    double propensity_scale = 1.0;
};

// X ~ U([-1,1]); Z|X ~ Bernoulli(base + amplitude cos(pi x)); Y|X ~ N(beta x, sigma^2).
// A strongly nonlinear bounded propensity for misspecification contrasts.
struct CosinePropensity1D {
    double base = 0.22;
    double amplitude = 0.18;
    double beta = 1.0;
    double sigma = 1.0;
};

// Discrete covariates drawn in duplicated blocks so that every treated unit is
// guaranteed an exact-match control: each block holds two units with one
// shared covariate cell (each coordinate uniform on {0..levels-1}); block
// treatment patterns (1,0) / (0,1) / (0,0) have probabilities q/2, q/2, 1-q.
// Y = sum(x) + N(0,1); the sharp null holds.
struct ExactMatchNull {
    int d = 2;
    int levels = 3;
    double q = 0.6;
};

// Bounded nonlinearity added to both potential outcomes: y += (c^T g(x)) / sqrt(n).
struct LocalMisspec {
    NonlinearBasis g;
    std::vector<double> c;  // length g.k
};

struct DgpSpec {
    std::variant<LinearPropensity1D, DiscPropensity2D, LogisticPropensity4D, CosinePropensity1D, ExactMatchNull>
        variant;
    std::optional<LocalMisspec> misspec;

    int dim() const;
    std::string id() const;
};

// Validates parameter ranges (Bernoulli probabilities in [0,1] etc).
// Throws ConfigError on invalid parameters.
void validate(const DgpSpec& spec);

// Hidden per-unit ground truth, index-aligned with the sampled Dataset.
struct TruthRecord {
    std::vector<double> propensity;
    std::vector<double> mu;  // conditional mean of Y given X (before misspec term)
    std::vector<double> y0;
    std::vector<double> y1;
};

struct SampleResult {
    Dataset data;
    TruthRecord truth;
};

// n i.i.d. draws. Under every spec here the sharp null holds: y0 == y1.
SampleResult sample(const DgpSpec& spec, int n, Rng& rng);

// Exact model propensity at x; throws ContractError outside the support.
double propensity(const DgpSpec& spec, std::span<const double> x);

// Closed-form asymptotic matching discrepancy for the 1-D linear-propensity
// model: {2(theta0+theta1) - 1}^3 / {3 theta1^2 (2 theta0 + theta1)}.
double theoretical_delta(double theta0, double theta1);

// Named bounded bases (every component bounded by 1 in absolute value):
//   "none"       k = 0
//   "cos_pi"     k = d, components cos(pi x_j)
//   "tanh2"      k = d, components tanh(2 x_j)
//   "gauss_bump" k = 1, exp(-||x||^2)
NonlinearBasis bounded_g_library(const std::string& id, int d);

}  // namespace matchinf
