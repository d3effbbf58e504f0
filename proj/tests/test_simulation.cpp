#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "matchinf/config.hpp"
#include "matchinf/dgp.hpp"
#include "matchinf/errors.hpp"
#include "matchinf/simulation.hpp"

using namespace matchinf;

namespace {

ExperimentConfig block_null_config(int n, int reps) {
    ExperimentConfig c;
    c.dgp.variant = ExactMatchNull{2, 3, 0.6};
    c.pipeline = Pipeline::pair_dm_rand;
    c.sizes = {n};
    c.replications = reps;
    c.permutations = 200;
    c.seed = 20260823;
    return c;
}

bool is_set(double v) { return std::isfinite(v); }

}  // namespace

TEST_CASE("duplicated-block draws admit perfect matchings in every trial") {
    const ExperimentConfig config = block_null_config(40, 60);
    const SimulationReport report = run_experiment(config, false);
    REQUIRE(static_cast<int>(report.trials.size()) == 60);
    int informative = 0;
    for (const TrialRecord& rec : report.trials) {
        if (rec.degenerate) continue;  // no treated units drawn
        ++informative;
        CHECK(rec.total_cost == 0.0);
        CHECK(rec.imbalance_norm == 0.0);
        CHECK(rec.n_matched_pairs == rec.n_treated);
        CHECK(rec.p_rand_dm >= 0.0);
        CHECK(rec.p_rand_dm <= 1.0);
    }
    CHECK(informative >= 55);
}

TEST_CASE("degenerate trials are conservative, not fatal") {
    // At n = 4 with q = 0.6, some trials draw zero treated units; the record
    // must fall back to p = 1 and no rejection.
    const ExperimentConfig config = block_null_config(4, 120);
    const SimulationReport report = run_experiment(config, false);
    int degenerate = 0;
    for (const TrialRecord& rec : report.trials) {
        if (!rec.degenerate) continue;
        ++degenerate;
        CHECK(rec.p_rand_dm == 1.0);
    }
    CHECK(degenerate >= 1);
}

TEST_CASE("identical configurations replay byte-identically") {
    const ExperimentConfig config = block_null_config(30, 25);
    const SimulationReport a = run_experiment(config, false);
    const SimulationReport b = run_experiment(config, false);
    CHECK(report_json_text(a) == report_json_text(b));
    CHECK(plot_csv_text(a) == plot_csv_text(b));
}

TEST_CASE("parallel execution is byte-identical to serial execution") {
    setenv("MATCHINF_THREADS", "3", 1);
    const ExperimentConfig config = block_null_config(40, 30);
    const SimulationReport serial = run_experiment(config, false);
    const SimulationReport parallel = run_experiment(config, true);
    unsetenv("MATCHINF_THREADS");
    CHECK(report_json_text(serial) == report_json_text(parallel));
    CHECK(plot_csv_text(serial) == plot_csv_text(parallel));
}

TEST_CASE("adding replications extends, never rewrites, earlier trials") {
    ExperimentConfig small = block_null_config(30, 8);
    ExperimentConfig large = block_null_config(30, 16);
    const SimulationReport a = run_experiment(small, false);
    const SimulationReport b = run_experiment(large, false);
    for (int i = 0; i < 8; ++i) {
        CHECK(a.trials[i].seed == b.trials[i].seed);
        CHECK(a.trials[i].tau_dm == b.trials[i].tau_dm);
        CHECK(a.trials[i].p_rand_dm == b.trials[i].p_rand_dm);
        CHECK(a.trials[i].total_cost == b.trials[i].total_cost);
    }
}

TEST_CASE("run_trial is deterministic and matches the harness records") {
    const ExperimentConfig config = block_null_config(30, 5);
    const SimulationReport report = run_experiment(config, false);
    for (int t = 0; t < 5; ++t) {
        const TrialRecord solo = run_trial(config, 30, t);
        CHECK(solo.seed == report.trials[t].seed);
        CHECK(solo.tau_dm == report.trials[t].tau_dm);
        CHECK(solo.p_rand_dm == report.trials[t].p_rand_dm);
        CHECK(solo.n_treated == report.trials[t].n_treated);
    }
}

TEST_CASE("per-size aggregates are the documented functions of the trial records") {
    const ExperimentConfig config = block_null_config(40, 40);
    const SimulationReport report = run_experiment(config, false);
    REQUIRE(report.by_size.size() == 1);
    const SizeAggregate& agg = report.by_size[0];
    CHECK(agg.n == 40);
    CHECK(agg.trials == 40);

    double bias_sum = 0.0;
    int bias_count = 0, dm_reject = 0, dm_count = 0, bal_detect = 0, bal_count = 0;
    for (const TrialRecord& rec : report.trials) {
        if (is_set(rec.bias_dm)) {
            bias_sum += std::fabs(rec.bias_dm);
            ++bias_count;
        }
        if (is_set(rec.p_rand_dm)) {
            ++dm_count;
            if (rec.p_rand_dm < config.alpha) ++dm_reject;
        }
        if (is_set(rec.balance_p)) {
            ++bal_count;
            if (rec.balance_p < config.balance_alpha) ++bal_detect;
        }
    }
    REQUIRE(bias_count > 0);
    CHECK(agg.mean_abs_bias == doctest::Approx(bias_sum / bias_count).epsilon(1e-12));
    CHECK(agg.reject_rate_dm == doctest::Approx(double(dm_reject) / dm_count).epsilon(1e-12));
    if (bal_count > 0) {
        CHECK(agg.balance_detect_rate == doctest::Approx(double(bal_detect) / bal_count).epsilon(1e-12));
    }
    // Fields outside this pipeline stay unset.
    CHECK_FALSE(is_set(agg.reject_rate_hc1));
    CHECK_FALSE(is_set(agg.agreement_rate));
}

TEST_CASE("log-log slope recovery on synthetic aggregates") {
    auto make = [](std::vector<std::pair<int, double>> pts) {
        std::vector<SizeAggregate> out;
        for (auto [n, b] : pts) {
            SizeAggregate a;
            a.n = n;
            a.mean_abs_bias = b;
            out.push_back(a);
        }
        return out;
    };
    // bias = 3 n^{-1/2} -> slope -1/2 exactly.
    CHECK(bias_slope(make({{100, 0.3}, {400, 0.15}, {1600, 0.075}})) ==
          doctest::Approx(-0.5).epsilon(1e-9));
    CHECK(bias_slope(make({{100, 0.2}, {1000, 0.2}})) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(bias_slope(make({{100, 0.2}})), ContractError);
    CHECK_THROWS_AS(bias_slope(make({{100, 0.0}, {200, 0.0}})), ContractError);
    CHECK_THROWS_AS(bias_slope(make({{100, 0.2}, {100, 0.1}})), ContractError);  // one distinct size
}

TEST_CASE("matching keeps a positive average gap under one-sided overlap") {
    // With the logistic propensity every treated unit sits where controls are
    // scarcer above than below, so the matched difference-of-means lands above
    // zero in most trials.
    ExperimentConfig config;
    config.dgp.variant = LogisticPropensity4D{1.0};
    config.pipeline = Pipeline::pair_dm_rand;
    config.sizes = {2000};
    config.replications = 200;
    config.permutations = 1;  // randomization p-values are irrelevant here
    config.seed = 20260823;
    const SimulationReport report = run_experiment(config, true);
    int positive = 0;
    double mean = 0.0;
    for (const TrialRecord& rec : report.trials) {
        REQUIRE(is_set(rec.bias_dm));
        if (rec.bias_dm > 0) ++positive;
        mean += rec.bias_dm;
    }
    mean /= 200;
    CHECK(positive > 120);
    CHECK(mean > 0.02);
}

TEST_CASE("strategy agreement is exact when there is nothing to disagree about") {
    // Without a nonlinear term the saturated and selected models coincide with
    // the baseline, so the three decisions agree in every trial.
    ExperimentConfig config;
    config.dgp.variant = LinearPropensity1D{0.2, 0.5, 0.0, 1.0, 1.0};
    config.pipeline = Pipeline::pair_hc_strategies;
    config.sizes = {120, 160};
    config.replications = 30;
    config.permutations = 1;
    config.seed = 99;
    const std::vector<ModelDependenceSummary> summary = model_dependence_experiment(config, false);
    REQUIRE(summary.size() == 2);
    for (const ModelDependenceSummary& s : summary) {
        CHECK(s.agreement_rate == 1.0);
        CHECK(s.reject_rate_hc1 == s.reject_rate_hc2);
        CHECK(s.reject_rate_hc2 == s.reject_rate_hc3);
    }
    ExperimentConfig bad = config;
    bad.pipeline = Pipeline::pair_hc;
    CHECK_THROWS_AS(model_dependence_experiment(bad, false), ConfigError);
}

TEST_CASE("plot text carries one fixed header and one row per size") {
    const ExperimentConfig config = block_null_config(30, 6);
    SimulationReport report = run_experiment(config, false);
    const std::string text = plot_csv_text(report);
    CHECK(text.rfind("n,mean_abs_bias,reject_rate_dm,reject_rate_reg,reject_rate_hc1,reject_rate_hc2,"
                     "reject_rate_hc3,agreement_rate,balance_detect_rate\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);  // header + one size
    CHECK(text.find("\n30,") != std::string::npos);
}

TEST_CASE("configuration JSON: defaults, round trip, and error naming") {
    const ExperimentConfig c = parse_config_json(R"({
        "dgp": {"id": "linear_propensity_1d", "theta0": 0.2, "theta1": 0.5},
        "pipeline": "pair_dm_rand",
        "sizes": [100, 200]
    })");
    CHECK(c.replications == 500);
    CHECK(c.permutations == 1000);
    CHECK(c.alpha == 0.05);
    CHECK(c.balance_alpha == 0.10);
    CHECK(c.seed == 20260823);
    CHECK(c.sizes == std::vector<int>{100, 200});

    // Full echo parses back to the same canonical text.
    const std::string echoed = config_to_json(c);
    CHECK(config_to_json(parse_config_json(echoed)) == echoed);

    CHECK_THROWS_WITH_AS(parse_config_json(R"({"dgp": {"id": "linear_propensity_1d"}, "sizes": [10],
                                               "replicatons": 5})"),
                         doctest::Contains("replicatons"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_json(R"({"dgp": {"id": "linear_propensity_1d", "thta0": 1}, "sizes": [10]})"),
                         doctest::Contains("thta0"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_json("{not json"), doctest::Contains("malformed JSON"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_json(R"({"dgp": {"id": "mystery_model"}, "sizes": [10]})"),
                         doctest::Contains("mystery_model"), ConfigError);
    CHECK_THROWS_AS(parse_config_json(R"({"sizes": [10]})"), ConfigError);  // dgp required
    CHECK_THROWS_AS(parse_config_json(R"({"dgp": {"id": "linear_propensity_1d"}})"), ConfigError);
}

TEST_CASE("pipeline names round-trip") {
    using P = Pipeline;
    for (P p : {P::pair_dm_rand, P::pair_reg_rand, P::pair_hc, P::pair_hc_strategies, P::replacement_hc,
                P::replacement_hc_strategies, P::unmatched_hc, P::unmatched_hc_strategies}) {
        CHECK(pipeline_from_string(to_string(p)) == p);
    }
    CHECK_THROWS_AS(pipeline_from_string("bogus"), ConfigError);
    CHECK(pipeline_uses_pairs(P::pair_reg_rand));
    CHECK_FALSE(pipeline_uses_pairs(P::replacement_hc));
    CHECK(pipeline_uses_replacement(P::replacement_hc_strategies));
    CHECK(pipeline_uses_strategies(P::unmatched_hc_strategies));
    CHECK_FALSE(pipeline_uses_strategies(P::pair_hc));
}

TEST_CASE("experiment presets are valid and the catalog is closed") {
    const std::vector<std::string> ids = known_experiment_ids();
    REQUIRE(ids.size() == 9);
    for (const std::string& id : ids) {
        const ExperimentConfig desk = experiment_preset(id, "desk");
        validate(desk);
        const ExperimentConfig full = experiment_preset(id, "full");
        validate(full);
        CHECK(full.replications >= desk.replications);
    }
    // Spot checks: the qualitative structure of two presets.
    const ExperimentConfig fig1 = experiment_preset("fig1", "desk");
    CHECK(fig1.sizes.size() == 4);
    CHECK(fig1.pipeline == Pipeline::pair_dm_rand);
    const ExperimentConfig thm3 = experiment_preset("thm3", "desk");
    CHECK(thm3.pipeline == Pipeline::replacement_hc_strategies);
    CHECK(thm3.dgp.misspec.has_value());
    CHECK_THROWS_WITH_AS(experiment_preset("fig9", "desk"), doctest::Contains("fig1"), ConfigError);
    CHECK_THROWS_AS(experiment_preset("fig1", "galactic"), ConfigError);
}

TEST_CASE("experiment validation rejects inconsistent settings") {
    ExperimentConfig c = block_null_config(30, 5);
    c.sizes.clear();
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = block_null_config(30, 5);
    c.replications = 0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = block_null_config(30, 5);
    c.alpha = 1.0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = block_null_config(-4, 5);
    CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("thread count resolution order: argument, environment, hardware") {
    CHECK(resolve_thread_count(4) == 4);
    setenv("MATCHINF_THREADS", "7", 1);
    CHECK(resolve_thread_count(0) == 7);
    setenv("MATCHINF_THREADS", "garbage", 1);
    CHECK(resolve_thread_count(0) >= 1);  // unparseable env falls through
    unsetenv("MATCHINF_THREADS");
    CHECK(resolve_thread_count(0) >= 1);
    CHECK(resolve_thread_count(-3) >= 1);
}
