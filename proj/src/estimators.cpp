#include "matchinf/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "matchinf/numeric.hpp"

namespace matchinf {

std::string FeatureSpec::id(int d) const {
    (void)d;
    std::ostringstream out;
    out << "z+1+x";
    if (!include.empty()) {
        out << "+g[" << g.id << ":";
        for (std::size_t i = 0; i < include.size(); ++i) {
            if (i) out << ",";
            out << include[i];
        }
        out << "]";
    }
    return out.str();
}

FeatureSpec baseline_spec() { return FeatureSpec{}; }

FeatureSpec saturated_spec(const NonlinearBasis& g) {
    FeatureSpec spec;
    spec.g = g;
    spec.include.resize(g.k);
    for (int i = 0; i < g.k; ++i) spec.include[i] = i;
    return spec;
}

double dm_statistic(const Dataset& data, const PairMatching& pairs) {
    if (pairs.pairs.empty()) throw DegenerateDesign("difference of means: no pairs");
    std::vector<double> diffs;
    diffs.reserve(pairs.pairs.size());
    for (const auto& [t, c] : pairs.pairs) diffs.push_back(data.unit(t).y - data.unit(c).y);
    return mean(diffs);
}

double dm_statistic(const Dataset& data, const ReplacementMatching& matching) {
    if (matching.match_of.empty()) throw DegenerateDesign("difference of means: empty matching");
    std::vector<double> diffs;
    diffs.reserve(matching.match_of.size());
    for (int t : data.treated_indices()) {
        diffs.push_back(data.unit(t).y - data.unit(matching.match_of.at(t)).y);
    }
    return mean(diffs);
}

namespace {

// Design row (z - 1/2, 1, x, g_S(x)) for one unit.
void fill_design_row(const Unit& u, double z_value, const FeatureSpec& spec, int d, std::span<double> row,
                     std::vector<double>& gbuf) {
    row[0] = z_value - 0.5;
    row[1] = 1.0;
    for (int j = 0; j < d; ++j) row[2 + j] = u.x[j];
    if (!spec.include.empty()) {
        gbuf.resize(spec.g.k);
        spec.g.eval(u.x, gbuf);
        for (std::size_t s = 0; s < spec.include.size(); ++s) {
            row[2 + d + static_cast<int>(s)] = gbuf[spec.include[s]];
        }
    }
}

}  // namespace

Matrix build_design(const Dataset& data, std::span<const int> index_set, const FeatureSpec& spec,
                    std::span<const std::uint8_t> z_override) {
    const int d = data.d();
    const int p = spec.n_columns(d);
    const int n = static_cast<int>(index_set.size());
    Matrix x(n, p);
    std::vector<double> gbuf;
    std::vector<double> row(p);
    for (int r = 0; r < n; ++r) {
        const int idx = index_set[r];
        const Unit& u = data.unit(idx);
        const double z = z_override.empty() ? static_cast<double>(u.z) : static_cast<double>(z_override[idx]);
        fill_design_row(u, z, spec, d, row, gbuf);
        for (int jj = 0; jj < p; ++jj) x(r, jj) = row[jj];
    }
    return x;
}

RegressionFit fit_linear_with_design(const Dataset& data, std::span<const int> index_set,
                                     std::span<const double> weights, const FeatureSpec& spec,
                                     const Matrix& design) {
    const int n = design.rows();
    const int p = design.cols();
    if (n < p) {
        throw SingularDesign("regression: " + std::to_string(n) + " rows for " + std::to_string(p) +
                             " columns");
    }
    std::vector<double> y(n);
    for (int r = 0; r < n; ++r) y[r] = data.unit(index_set[r]).y;

    std::vector<double> w(weights.begin(), weights.end());
    if (w.empty()) w.assign(n, 1.0);
    if (static_cast<int>(w.size()) != n) throw ContractError("regression: weight/index length mismatch");

    const LeastSquares ls = solve_least_squares(design, y, w, true);

    RegressionFit fit;
    fit.spec = spec;
    fit.index_set.assign(index_set.begin(), index_set.end());
    fit.weights_used = w;
    fit.tau_hat = ls.coef[0];
    fit.other_coefficients.assign(ls.coef.begin() + 1, ls.coef.end());
    fit.residuals.resize(n);
    for (int r = 0; r < n; ++r) {
        double pred = 0.0;
        for (int jj = 0; jj < p; ++jj) pred += design(r, jj) * ls.coef[jj];
        fit.residuals[r] = y[r] - pred;
    }

    // Sandwich: bread (X'WX)^{-1}, filling sum_i w_i^2 e_i^2 psi_i psi_i'.
    Matrix meat(p, p);
    for (int r = 0; r < n; ++r) {
        const double f = w[r] * w[r] * fit.residuals[r] * fit.residuals[r];
        if (f == 0.0) continue;
        for (int a = 0; a < p; ++a) {
            const double fa = f * design(r, a);
            for (int b = a; b < p; ++b) meat(a, b) += fa * design(r, b);
        }
    }
    for (int a = 0; a < p; ++a) {
        for (int b = a + 1; b < p; ++b) meat(b, a) = meat(a, b);
    }
    Matrix half(p, p);  // bread * meat
    for (int a = 0; a < p; ++a) {
        for (int b = 0; b < p; ++b) {
            double s = 0.0;
            for (int k = 0; k < p; ++k) s += ls.xtwx_inverse(a, k) * meat(k, b);
            half(a, b) = s;
        }
    }
    fit.hc_covariance = Matrix(p, p);
    for (int a = 0; a < p; ++a) {
        for (int b = 0; b < p; ++b) {
            double s = 0.0;
            for (int k = 0; k < p; ++k) s += half(a, k) * ls.xtwx_inverse(k, b);
            fit.hc_covariance(a, b) = s;
        }
    }
    fit.hc_variance_tau = fit.hc_covariance(0, 0);
    fit.t_stat = fit.hc_variance_tau > 0.0 ? fit.tau_hat / std::sqrt(fit.hc_variance_tau) : 0.0;
    return fit;
}

RegressionFit fit_linear(const Dataset& data, std::span<const int> index_set, std::span<const double> weights,
                         const FeatureSpec& spec) {
    if (index_set.empty()) throw DegenerateDesign("regression: empty index set");
    const Matrix design = build_design(data, index_set, spec, {});
    return fit_linear_with_design(data, index_set, weights, spec, design);
}

double hc_variance(const RegressionFit& fit) { return fit.hc_variance_tau; }

double hc_pvalue(const RegressionFit& fit, Sidedness sidedness) {
    if (!(fit.hc_variance_tau > 0.0)) {
        throw DegenerateDesign("sandwich variance is not positive; no test available");
    }
    const double t = fit.tau_hat / std::sqrt(fit.hc_variance_tau);
    if (sidedness == Sidedness::two) return 2.0 * normal_cdf(-std::abs(t));
    return normal_cdf(-t);
}

FeatureSpec select_model(const Dataset& data, std::span<const int> index_set, std::span<const double> weights,
                         const NonlinearBasis& g, double level) {
    const FeatureSpec full = saturated_spec(g);
    if (g.k == 0) return full;
    const RegressionFit fit = fit_linear(data, index_set, weights, full);
    const int d = data.d();
    FeatureSpec pruned;
    pruned.g = g;
    for (int s = 0; s < g.k; ++s) {
        const int col = 2 + d + s;
        const double var = fit.hc_covariance(col, col);
        if (!(var > 0.0)) continue;  // unidentifiable component: drop
        const double coef = fit.other_coefficients[col - 1];
        const double z = coef / std::sqrt(var);
        const double p = 2.0 * normal_cdf(-std::abs(z));
        if (p <= level) pruned.include.push_back(s);
    }
    return pruned;
}

HotellingResult hotelling_t2(const Dataset& data, std::span<const int> index_set) {
    const int d = data.d();
    std::vector<int> g1, g0;
    for (int idx : index_set) (data.unit(idx).z == 1 ? g1 : g0).push_back(idx);
    const int n1 = static_cast<int>(g1.size());
    const int n0 = static_cast<int>(g0.size());
    if (n1 < 2 || n0 < 2) throw DegenerateDesign("balance diagnostic needs >= 2 units per arm");
    if (n1 + n0 - 2 < d + 1) {
        throw DegenerateDesign("balance diagnostic needs n1 + n0 - 2 > covariate dimension");
    }

    std::vector<double> m1(d, 0.0), m0(d, 0.0);
    for (int idx : g1) {
        for (int j = 0; j < d; ++j) m1[j] += data.unit(idx).x[j];
    }
    for (int idx : g0) {
        for (int j = 0; j < d; ++j) m0[j] += data.unit(idx).x[j];
    }
    for (int j = 0; j < d; ++j) {
        m1[j] /= n1;
        m0[j] /= n0;
    }

    Matrix pooled(d, d);
    auto accumulate = [&](const std::vector<int>& idxs, const std::vector<double>& m) {
        for (int idx : idxs) {
            for (int a = 0; a < d; ++a) {
                const double ca = data.unit(idx).x[a] - m[a];
                for (int b = a; b < d; ++b) pooled(a, b) += ca * (data.unit(idx).x[b] - m[b]);
            }
        }
    };
    accumulate(g1, m1);
    accumulate(g0, m0);
    for (int a = 0; a < d; ++a) {
        for (int b = a; b < d; ++b) {
            pooled(a, b) /= (n1 + n0 - 2);
            pooled(b, a) = pooled(a, b);
        }
    }

    std::vector<double> delta(d);
    for (int j = 0; j < d; ++j) delta[j] = m1[j] - m0[j];
    const std::vector<double> solved = solve_least_squares(pooled, delta, {}, false).coef;
    double quad = 0.0;
    for (int j = 0; j < d; ++j) quad += delta[j] * solved[j];

    HotellingResult res;
    res.statistic = std::max(0.0, static_cast<double>(n1) * n0 / (n1 + n0) * quad);
    const double df2 = n1 + n0 - d - 1.0;
    const double f_stat = res.statistic * df2 / (d * (n1 + n0 - 2.0));
    res.p = 1.0 - f_cdf(f_stat, d, df2);
    return res;
}

}  // namespace matchinf
