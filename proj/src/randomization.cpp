#include "matchinf/randomization.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "matchinf/numeric.hpp"

namespace matchinf {

NamedStatistic dm_randomization_statistic() {
    NamedStatistic s;
    s.name = "dm";
    s.fn = [](const Dataset& data, const PairMatching& pairs, std::span<const std::uint8_t> z_star) {
        std::vector<double> diffs;
        diffs.reserve(pairs.pairs.size());
        for (const auto& [t, c] : pairs.pairs) {
            const double d = data.unit(t).y - data.unit(c).y;
            diffs.push_back(z_star[t] == 1 ? d : -d);
        }
        return mean(diffs);
    };
    return s;
}

NamedStatistic reg_randomization_statistic(FeatureSpec spec) {
    NamedStatistic s;
    s.name = "reg";
    s.fn = [spec = std::move(spec)](const Dataset& data, const PairMatching& pairs,
                                    std::span<const std::uint8_t> z_star) {
        const Matrix design = build_design(data, pairs.matched_set, spec, z_star);
        return fit_linear_with_design(data, pairs.matched_set, {}, spec, design).tau_hat;
    };
    return s;
}

namespace {

std::vector<std::uint8_t> observed_assignment(const Dataset& data) {
    std::vector<std::uint8_t> z(data.n());
    for (int i = 0; i < data.n(); ++i) z[i] = static_cast<std::uint8_t>(data.unit(i).z);
    return z;
}

// Assignment for one enumeration mask / sampled draw: bit b set means pair b
// has its labels swapped.
void apply_mask(const PairMatching& pairs, std::uint64_t mask, std::span<const std::uint8_t> base,
                std::vector<std::uint8_t>& out) {
    out.assign(base.begin(), base.end());
    for (std::size_t b = 0; b < pairs.pairs.size(); ++b) {
        if ((mask >> b) & 1u) {
            const auto& [t, c] = pairs.pairs[b];
            out[t] = 0;
            out[c] = 1;
        }
    }
}

}  // namespace

std::vector<std::uint8_t> permute_within_pairs(const Dataset& data, const PairMatching& pairs, Rng& rng) {
    std::vector<std::uint8_t> z = observed_assignment(data);
    for (const auto& [t, c] : pairs.pairs) {
        if (rng.bernoulli(0.5)) {
            z[t] = 0;
            z[c] = 1;
        }
    }
    return z;
}

RandomizationResult randomization_pvalue(const Dataset& data, const PairMatching& pairs,
                                         const NamedStatistic& statistic, const TestPlan& plan) {
    if (pairs.pairs.empty()) throw DegenerateDesign("randomization test: no pairs");
    const int n1 = pairs.n1();
    const std::vector<std::uint8_t> base = observed_assignment(data);

    RandomizationResult res;
    res.mode = plan.mode;
    res.seed = plan.seed;
    res.statistic_name = statistic.name;
    res.tau_obs = statistic.fn(data, pairs, base);
    const double threshold = std::abs(res.tau_obs) - 1e-12 * (1.0 + std::abs(res.tau_obs));

    bool parallel = plan.parallel;
#ifdef _OPENMP
    if (omp_in_parallel()) parallel = false;
#else
    parallel = false;
#endif

    if (plan.mode == TestMode::exhaustive) {
        if (n1 > 20) {
            throw ContractError("exhaustive mode needs at most 20 pairs (got " + std::to_string(n1) +
                                "); use sampled mode");
        }
        const std::uint64_t total = std::uint64_t{1} << n1;
        res.b = static_cast<int>(total);
        res.draws.resize(total);
        std::int64_t count = 0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : count) if (parallel)
#endif
        for (std::int64_t m = 0; m < static_cast<std::int64_t>(total); ++m) {
            std::vector<std::uint8_t> z;
            apply_mask(pairs, static_cast<std::uint64_t>(m), base, z);
            const double v = statistic.fn(data, pairs, z);
            res.draws[static_cast<std::size_t>(m)] = v;
            if (std::abs(v) >= threshold) ++count;
        }
        res.p_value = static_cast<double>(count) / static_cast<double>(total);
    } else {
        if (plan.b < 1) throw ContractError("sampled mode needs b >= 1");
        res.b = plan.b;
        res.draws.resize(plan.b);
        std::int64_t count = 0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : count) if (parallel)
#endif
        for (std::int64_t bidx = 0; bidx < plan.b; ++bidx) {
            Rng rng = Rng::derive(plan.seed, stream::draw, static_cast<std::uint64_t>(bidx));
            std::vector<std::uint8_t> z(base.begin(), base.end());
            for (const auto& [t, c] : pairs.pairs) {
                if (rng.bernoulli(0.5)) {
                    z[t] = 0;
                    z[c] = 1;
                }
            }
            const double v = statistic.fn(data, pairs, z);
            res.draws[static_cast<std::size_t>(bidx)] = v;
            if (std::abs(v) >= threshold) ++count;
        }
        res.p_value = (1.0 + static_cast<double>(count)) / (static_cast<double>(plan.b) + 1.0);
    }
    res.critical_value = randomization_critical_value(res.draws, plan.alpha);
    return res;
}

double randomization_critical_value(std::span<const double> draws, double alpha) {
    if (draws.empty()) throw ContractError("critical value of an empty draw set");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError("alpha must lie in (0,1)");
    std::vector<double> mags(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i) mags[i] = std::abs(draws[i]);
    std::sort(mags.begin(), mags.end());
    const double target = (1.0 - alpha) * static_cast<double>(mags.size());
    std::size_t rank = static_cast<std::size_t>(std::ceil(target));
    if (rank < 1) rank = 1;
    if (rank > mags.size()) rank = mags.size();
    return mags[rank - 1];
}

std::string test_report_json(const RandomizationResult& result) {
    std::ostringstream out;
    out << "{\n";
    out << "  \"statistic\": \"" << result.statistic_name << "\",\n";
    out << "  \"mode\": \"" << (result.mode == TestMode::exhaustive ? "exhaustive" : "sampled") << "\",\n";
    out << "  \"draws\": " << result.b << ",\n";
    out << "  \"tau_obs\": " << format_double(result.tau_obs) << ",\n";
    out << "  \"p_value\": " << format_double(result.p_value) << ",\n";
    out << "  \"critical_value\": " << format_double(result.critical_value) << ",\n";
    out << "  \"seed\": " << result.seed << "\n";
    out << "}\n";
    return out.str();
}

}  // namespace matchinf
