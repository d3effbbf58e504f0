#include "matchinf/dgp.hpp"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "matchinf/errors.hpp"

namespace matchinf {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

struct DimVisitor {
    int operator()(const LinearPropensity1D&) const { return 1; }
    int operator()(const DiscPropensity2D&) const { return 2; }
    int operator()(const LogisticPropensity4D&) const { return 4; }
    int operator()(const CosinePropensity1D&) const { return 1; }
    int operator()(const ExactMatchNull& e) const { return e.d; }
};

struct IdVisitor {
    std::string operator()(const LinearPropensity1D& p) const {
        std::ostringstream s;
        s << "linear_propensity_1d(theta0=" << p.theta0 << ",theta1=" << p.theta1 << ",beta0=" << p.beta0
          << ",beta1=" << p.beta1 << ",sigma=" << p.sigma << ")";
        return s.str();
    }
    std::string operator()(const DiscPropensity2D& p) const {
        std::ostringstream s;
        s << "disc_propensity_2d(theta=[" << p.theta[0] << "," << p.theta[1] << "],sigma=" << p.sigma << ")";
        return s.str();
    }
    std::string operator()(const LogisticPropensity4D& p) const {
        std::ostringstream s;
        s << "logistic_propensity_4d(scale=" << p.propensity_scale << ")";
        return s.str();
    }
    std::string operator()(const CosinePropensity1D& p) const {
        std::ostringstream s;
        s << "cosine_propensity_1d(base=" << p.base << ",amplitude=" << p.amplitude << ",beta=" << p.beta
          << ",sigma=" << p.sigma << ")";
        return s.str();
    }
    std::string operator()(const ExactMatchNull& p) const {
        std::ostringstream s;
        s << "exact_match_null(d=" << p.d << ",levels=" << p.levels << ",q=" << p.q << ")";
        return s.str();
    }
};

}  // namespace

int DgpSpec::dim() const { return std::visit(DimVisitor{}, variant); }

std::string DgpSpec::id() const {
    std::string base = std::visit(IdVisitor{}, variant);
    if (misspec) {
        std::ostringstream s;
        s << base << "+misspec(" << misspec->g.id << ",c=[";
        for (std::size_t i = 0; i < misspec->c.size(); ++i) {
            if (i) s << ",";
            s << misspec->c[i];
        }
        s << "])";
        return s.str();
    }
    return base;
}

void validate(const DgpSpec& spec) {
    struct Visitor {
        void operator()(const LinearPropensity1D& p) const {
            if (!(p.theta1 != 0.0)) throw ConfigError("linear_propensity_1d: theta1 must be nonzero");
            const double lo = std::min(p.theta0, p.theta0 + p.theta1);
            const double hi = std::max(p.theta0, p.theta0 + p.theta1);
            if (lo < 0.0 || hi > 1.0) {
                throw ConfigError("linear_propensity_1d: propensity range [" + std::to_string(lo) + "," +
                                  std::to_string(hi) + "] leaves [0,1]");
            }
            if (!(p.sigma > 0.0)) throw ConfigError("linear_propensity_1d: sigma must be positive");
        }
        void operator()(const DiscPropensity2D& p) const {
            const double norm = std::sqrt(p.theta[0] * p.theta[0] + p.theta[1] * p.theta[1]);
            if (0.35 * (1.0 + norm) > 1.0 || 0.35 * (1.0 - norm) < 0.0) {
                throw ConfigError("disc_propensity_2d: |theta| must be at most 1 to keep the propensity in [0,1]");
            }
            if (!(p.sigma > 0.0)) throw ConfigError("disc_propensity_2d: sigma must be positive");
        }
        void operator()(const LogisticPropensity4D& p) const {
            if (!(p.propensity_scale > 0.0) || p.propensity_scale > 1.0) {
                throw ConfigError("logistic_propensity_4d: propensity_scale must lie in (0,1]");
            }
        }
        void operator()(const CosinePropensity1D& p) const {
            if (p.base - std::abs(p.amplitude) < 0.0 || p.base + std::abs(p.amplitude) > 1.0) {
                throw ConfigError("cosine_propensity_1d: base +- amplitude leaves [0,1]");
            }
            if (!(p.sigma > 0.0)) throw ConfigError("cosine_propensity_1d: sigma must be positive");
        }
        void operator()(const ExactMatchNull& p) const {
            if (p.d < 1) throw ConfigError("exact_match_null: d must be >= 1");
            if (p.levels < 1) throw ConfigError("exact_match_null: levels must be >= 1");
            if (!(p.q >= 0.0 && p.q <= 1.0)) throw ConfigError("exact_match_null: q must lie in [0,1]");
        }
    };
    std::visit(Visitor{}, spec.variant);
    if (spec.misspec) {
        const LocalMisspec& m = *spec.misspec;
        if (static_cast<int>(m.c.size()) != m.g.k) {
            throw ConfigError("misspecification: coefficient length " + std::to_string(m.c.size()) +
                              " does not match basis size " + std::to_string(m.g.k));
        }
        if (m.g.k > 0 && !m.g.eval) throw ConfigError("misspecification: basis has no evaluator");
    }
}

double propensity(const DgpSpec& spec, std::span<const double> x) {
    if (static_cast<int>(x.size()) != spec.dim()) {
        throw ContractError("propensity: point dimension does not match the model");
    }
    struct Visitor {
        std::span<const double> x;
        double operator()(const LinearPropensity1D& p) const {
            if (x[0] < 0.0 || x[0] > 1.0) throw ContractError("propensity: x outside [0,1]");
            return p.theta0 + p.theta1 * x[0];
        }
        double operator()(const DiscPropensity2D& p) const {
            if (x[0] * x[0] + x[1] * x[1] > 1.0 + 1e-12) throw ContractError("propensity: x outside the unit disc");
            return 0.35 * (1.0 + p.theta[0] * x[0] + p.theta[1] * x[1]);
        }
        double operator()(const LogisticPropensity4D& p) const {
            for (double v : x) {
                if (v < -1.0 || v > 1.0) throw ContractError("propensity: x outside [-1,1]^4");
            }
            return p.propensity_scale / (1.0 + std::exp(1.1 - x[0]));
        }
        double operator()(const CosinePropensity1D& p) const {
            if (x[0] < -1.0 || x[0] > 1.0) throw ContractError("propensity: x outside [-1,1]");
            return p.base + p.amplitude * std::cos(kPi * x[0]);
        }
        double operator()(const ExactMatchNull& p) const {
            // Marginal treatment probability of a unit is q/2 by construction.
            return p.q / 2.0;
        }
    };
    return std::visit(Visitor{x}, spec.variant);
}

SampleResult sample(const DgpSpec& spec, int n, Rng& rng) {
    validate(spec);
    if (n < 1) throw ContractError("sample: n must be >= 1");
    const int d = spec.dim();

    std::vector<Unit> units;
    units.reserve(n);
    TruthRecord truth;
    truth.propensity.reserve(n);
    truth.mu.reserve(n);

    struct Visitor {
        int n;
        int d;
        Rng& rng;
        std::vector<Unit>& units;
        TruthRecord& truth;

        void push(std::vector<double> x, double e, double mu, double noise, int z) {
            Unit u;
            u.x = std::move(x);
            u.y = mu + noise;
            u.z = z;
            units.push_back(std::move(u));
            truth.propensity.push_back(e);
            truth.mu.push_back(mu);
        }

        void operator()(const LinearPropensity1D& p) {
            for (int i = 0; i < n; ++i) {
                const double x = rng.uniform();
                const double e = p.theta0 + p.theta1 * x;
                const int z = rng.bernoulli(e) ? 1 : 0;
                const double mu = p.beta0 + p.beta1 * x;
                push({x}, e, mu, p.sigma * rng.normal(), z);
            }
        }
        void operator()(const DiscPropensity2D& p) {
            for (int i = 0; i < n; ++i) {
                double x1, x2;
                do {  // rejection sampling of the unit disc
                    x1 = 2.0 * rng.uniform() - 1.0;
                    x2 = 2.0 * rng.uniform() - 1.0;
                } while (x1 * x1 + x2 * x2 > 1.0);
                const double e = 0.35 * (1.0 + p.theta[0] * x1 + p.theta[1] * x2);
                const int z = rng.bernoulli(e) ? 1 : 0;
                const double mu = p.theta[0] * x1 + p.theta[1] * x2;
                push({x1, x2}, e, mu, p.sigma * rng.normal(), z);
            }
        }
        void operator()(const LogisticPropensity4D& p) {
            for (int i = 0; i < n; ++i) {
                std::vector<double> x(4);
                for (double& v : x) v = 2.0 * rng.uniform() - 1.0;
                const double e = p.propensity_scale / (1.0 + std::exp(1.1 - x[0]));
                const int z = rng.bernoulli(e) ? 1 : 0;
                const double mu = 3.0 * x[0];
                push(std::move(x), e, mu, rng.normal(), z);
            }
        }
        void operator()(const CosinePropensity1D& p) {
            for (int i = 0; i < n; ++i) {
                const double x = 2.0 * rng.uniform() - 1.0;
                const double e = p.base + p.amplitude * std::cos(kPi * x);
                const int z = rng.bernoulli(e) ? 1 : 0;
                const double mu = p.beta * x;
                push({x}, e, mu, p.sigma * rng.normal(), z);
            }
        }
        void operator()(const ExactMatchNull& p) {
            // Units arrive in duplicated-covariate blocks of two; an odd n
            // truncates the final block after its first unit.
            int produced = 0;
            while (produced < n) {
                std::vector<double> cell(p.d);
                for (double& v : cell) v = static_cast<double>(rng.below(static_cast<std::uint64_t>(p.levels)));
                const double u = rng.uniform();
                int z_first = 0, z_second = 0;
                if (u < p.q / 2.0) {
                    z_first = 1;
                } else if (u < p.q) {
                    z_second = 1;
                }
                double mu = 0.0;
                for (double v : cell) mu += v;
                push(cell, p.q / 2.0, mu, rng.normal(), z_first);
                ++produced;
                if (produced == n) break;
                push(cell, p.q / 2.0, mu, rng.normal(), z_second);
                ++produced;
            }
        }
    };
    Visitor visitor{n, d, rng, units, truth};
    std::visit(visitor, spec.variant);

    // Sharp null: both potential outcomes equal the realized outcome, and the
    // bounded local perturbation is added to both.
    if (spec.misspec && spec.misspec->g.k > 0) {
        const LocalMisspec& m = *spec.misspec;
        std::vector<double> gbuf(m.g.k);
        const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
        for (Unit& u : units) {
            m.g.eval(u.x, gbuf);
            double shift = 0.0;
            for (int k = 0; k < m.g.k; ++k) shift += m.c[k] * gbuf[k];
            u.y += shift * inv_sqrt_n;
        }
    }
    truth.y0.reserve(n);
    truth.y1.reserve(n);
    for (const Unit& u : units) {
        truth.y0.push_back(u.y);
        truth.y1.push_back(u.y);
    }

    SampleResult out{Dataset(std::move(units), d), std::move(truth)};
    return out;
}

double theoretical_delta(double theta0, double theta1) {
    const double a = 2.0 * (theta0 + theta1) - 1.0;
    return a * a * a / (3.0 * theta1 * theta1 * (2.0 * theta0 + theta1));
}

NonlinearBasis bounded_g_library(const std::string& id, int d) {
    NonlinearBasis g;
    g.id = id;
    if (id == "none") {
        g.k = 0;
        return g;
    }
    if (id == "cos_pi") {
        g.k = d;
        g.eval = [d](std::span<const double> x, std::span<double> out) {
            for (int j = 0; j < d; ++j) out[j] = std::cos(kPi * x[j]);
        };
        return g;
    }
    if (id == "tanh2") {
        g.k = d;
        g.eval = [d](std::span<const double> x, std::span<double> out) {
            for (int j = 0; j < d; ++j) out[j] = std::tanh(2.0 * x[j]);
        };
        return g;
    }
    if (id == "gauss_bump") {
        g.k = 1;
        g.eval = [](std::span<const double> x, std::span<double> out) {
            double q = 0.0;
            for (double v : x) q += v * v;
            out[0] = std::exp(-q);
        };
        return g;
    }
    throw ConfigError("unknown nonlinear basis id: " + id);
}

}  // namespace matchinf
