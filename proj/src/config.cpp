#include "matchinf/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "matchinf/errors.hpp"

namespace matchinf {

namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void unknown_key(const std::string& where, const std::string& key) {
    throw ConfigError("unknown key \"" + key + "\" in " + where);
}

void check_keys(const Json& obj, const std::string& where, const std::set<std::string>& allowed) {
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key())) unknown_key(where, item.key());
    }
}

double get_number(const Json& obj, const std::string& where, const std::string& key, double fallback) {
    if (!obj.contains(key)) return fallback;
    const Json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
    return v.get<double>();
}

int get_int(const Json& obj, const std::string& where, const std::string& key, int fallback) {
    if (!obj.contains(key)) return fallback;
    const Json& v = obj.at(key);
    if (!v.is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
    return v.get<int>();
}

std::string get_string(const Json& obj, const std::string& where, const std::string& key,
                       const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const Json& v = obj.at(key);
    if (!v.is_string()) throw ConfigError(where + "." + key + " must be a string");
    return v.get<std::string>();
}

}  // namespace

std::string to_string(Pipeline p) {
    switch (p) {
        case Pipeline::pair_dm_rand: return "pair_dm_rand";
        case Pipeline::pair_reg_rand: return "pair_reg_rand";
        case Pipeline::pair_hc: return "pair_hc";
        case Pipeline::pair_hc_strategies: return "pair_hc_strategies";
        case Pipeline::replacement_hc: return "replacement_hc";
        case Pipeline::replacement_hc_strategies: return "replacement_hc_strategies";
        case Pipeline::unmatched_hc: return "unmatched_hc";
        case Pipeline::unmatched_hc_strategies: return "unmatched_hc_strategies";
    }
    throw ContractError("unhandled pipeline value");
}

Pipeline pipeline_from_string(const std::string& s) {
    for (Pipeline p : {Pipeline::pair_dm_rand, Pipeline::pair_reg_rand, Pipeline::pair_hc,
                       Pipeline::pair_hc_strategies, Pipeline::replacement_hc,
                       Pipeline::replacement_hc_strategies, Pipeline::unmatched_hc,
                       Pipeline::unmatched_hc_strategies}) {
        if (to_string(p) == s) return p;
    }
    throw ConfigError("unknown pipeline id: \"" + s +
                      "\" (known: pair_dm_rand, pair_reg_rand, pair_hc, pair_hc_strategies, "
                      "replacement_hc, replacement_hc_strategies, unmatched_hc, unmatched_hc_strategies)");
}

bool pipeline_uses_pairs(Pipeline p) {
    return p == Pipeline::pair_dm_rand || p == Pipeline::pair_reg_rand || p == Pipeline::pair_hc ||
           p == Pipeline::pair_hc_strategies;
}

bool pipeline_uses_replacement(Pipeline p) {
    return p == Pipeline::replacement_hc || p == Pipeline::replacement_hc_strategies;
}

bool pipeline_uses_strategies(Pipeline p) {
    return p == Pipeline::pair_hc_strategies || p == Pipeline::replacement_hc_strategies ||
           p == Pipeline::unmatched_hc_strategies;
}

void validate(const ExperimentConfig& config) {
    validate(config.dgp);
    if (config.sizes.empty()) throw ConfigError("sizes must contain at least one sample size");
    for (int n : config.sizes) {
        if (n < 1) throw ConfigError("sample sizes must be strictly positive, got " + std::to_string(n));
    }
    if (config.replications < 1) throw ConfigError("replications must be >= 1");
    if (config.permutations < 1) throw ConfigError("permutations must be >= 1");
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    if (!(config.balance_alpha > 0.0 && config.balance_alpha < 1.0)) {
        throw ConfigError("balance_alpha must lie in (0,1)");
    }
}

namespace {

DgpSpec parse_dgp(const Json& obj) {
    if (!obj.is_object()) throw ConfigError("dgp must be an object");
    const std::string id = get_string(obj, "dgp", "id", "");
    if (id.empty()) throw ConfigError("dgp.id is required");

    DgpSpec spec;
    if (id == "linear_propensity_1d") {
        check_keys(obj, "dgp", {"id", "theta0", "theta1", "beta0", "beta1", "sigma", "misspec"});
        LinearPropensity1D p;
        p.theta0 = get_number(obj, "dgp", "theta0", p.theta0);
        p.theta1 = get_number(obj, "dgp", "theta1", p.theta1);
        p.beta0 = get_number(obj, "dgp", "beta0", p.beta0);
        p.beta1 = get_number(obj, "dgp", "beta1", p.beta1);
        p.sigma = get_number(obj, "dgp", "sigma", p.sigma);
        spec.variant = p;
    } else if (id == "disc_propensity_2d") {
        check_keys(obj, "dgp", {"id", "theta", "sigma", "misspec"});
        DiscPropensity2D p;
        if (obj.contains("theta")) {
            const Json& t = obj.at("theta");
            if (!t.is_array() || t.size() != 2 || !t[0].is_number() || !t[1].is_number()) {
                throw ConfigError("dgp.theta must be an array of two numbers");
            }
            p.theta = {t[0].get<double>(), t[1].get<double>()};
        }
        p.sigma = get_number(obj, "dgp", "sigma", p.sigma);
        spec.variant = p;
    } else if (id == "logistic_propensity_4d") {
        check_keys(obj, "dgp", {"id", "propensity_scale", "misspec"});
        LogisticPropensity4D p;
        p.propensity_scale = get_number(obj, "dgp", "propensity_scale", p.propensity_scale);
        spec.variant = p;
    } else if (id == "cosine_propensity_1d") {
        check_keys(obj, "dgp", {"id", "base", "amplitude", "beta", "sigma", "misspec"});
        CosinePropensity1D p;
        p.base = get_number(obj, "dgp", "base", p.base);
        p.amplitude = get_number(obj, "dgp", "amplitude", p.amplitude);
        p.beta = get_number(obj, "dgp", "beta", p.beta);
        p.sigma = get_number(obj, "dgp", "sigma", p.sigma);
        spec.variant = p;
    } else if (id == "exact_match_null") {
        check_keys(obj, "dgp", {"id", "d", "levels", "q", "misspec"});
        ExactMatchNull p;
        p.d = get_int(obj, "dgp", "d", p.d);
        p.levels = get_int(obj, "dgp", "levels", p.levels);
        p.q = get_number(obj, "dgp", "q", p.q);
        spec.variant = p;
    } else {
        throw ConfigError("unknown dgp.id: \"" + id +
                          "\" (known: linear_propensity_1d, disc_propensity_2d, logistic_propensity_4d, "
                          "cosine_propensity_1d, exact_match_null)");
    }

    if (obj.contains("misspec")) {
        const Json& m = obj.at("misspec");
        if (!m.is_object()) throw ConfigError("dgp.misspec must be an object");
        check_keys(m, "dgp.misspec", {"g", "c"});
        const std::string gid = get_string(m, "dgp.misspec", "g", "");
        if (gid.empty()) throw ConfigError("dgp.misspec.g is required");
        LocalMisspec mis;
        mis.g = bounded_g_library(gid, spec.dim());
        if (!m.contains("c") || !m.at("c").is_array()) {
            throw ConfigError("dgp.misspec.c must be an array of numbers");
        }
        for (const Json& v : m.at("c")) {
            if (!v.is_number()) throw ConfigError("dgp.misspec.c must be an array of numbers");
            mis.c.push_back(v.get<double>());
        }
        spec.misspec = std::move(mis);
    }
    return spec;
}

Json dgp_to_json(const DgpSpec& spec) {
    Json obj;
    struct Visitor {
        Json& obj;
        void operator()(const LinearPropensity1D& p) const {
            obj["id"] = "linear_propensity_1d";
            obj["theta0"] = p.theta0;
            obj["theta1"] = p.theta1;
            obj["beta0"] = p.beta0;
            obj["beta1"] = p.beta1;
            obj["sigma"] = p.sigma;
        }
        void operator()(const DiscPropensity2D& p) const {
            obj["id"] = "disc_propensity_2d";
            obj["theta"] = {p.theta[0], p.theta[1]};
            obj["sigma"] = p.sigma;
        }
        void operator()(const LogisticPropensity4D& p) const {
            obj["id"] = "logistic_propensity_4d";
            obj["propensity_scale"] = p.propensity_scale;
        }
        void operator()(const CosinePropensity1D& p) const {
            obj["id"] = "cosine_propensity_1d";
            obj["base"] = p.base;
            obj["amplitude"] = p.amplitude;
            obj["beta"] = p.beta;
            obj["sigma"] = p.sigma;
        }
        void operator()(const ExactMatchNull& p) const {
            obj["id"] = "exact_match_null";
            obj["d"] = p.d;
            obj["levels"] = p.levels;
            obj["q"] = p.q;
        }
    };
    std::visit(Visitor{obj}, spec.variant);
    if (spec.misspec) {
        Json m;
        m["g"] = spec.misspec->g.id;
        m["c"] = spec.misspec->c;
        obj["misspec"] = std::move(m);
    }
    return obj;
}

}  // namespace

ExperimentConfig parse_config_json(const std::string& text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
    check_keys(doc, "config",
               {"dgp", "pipeline", "sizes", "replications", "permutations", "alpha", "balance_alpha", "seed",
                "report_path", "plot_path"});
    if (!doc.contains("dgp")) throw ConfigError("config.dgp is required");

    ExperimentConfig config;
    config.dgp = parse_dgp(doc.at("dgp"));
    config.pipeline = pipeline_from_string(get_string(doc, "config", "pipeline", "pair_dm_rand"));
    if (doc.contains("sizes")) {
        const Json& sizes = doc.at("sizes");
        if (!sizes.is_array() || sizes.empty()) throw ConfigError("config.sizes must be a non-empty array");
        config.sizes.clear();
        for (const Json& v : sizes) {
            if (!v.is_number_integer()) throw ConfigError("config.sizes entries must be integers");
            config.sizes.push_back(v.get<int>());
        }
    } else {
        throw ConfigError("config.sizes is required");
    }
    config.replications = get_int(doc, "config", "replications", config.replications);
    config.permutations = get_int(doc, "config", "permutations", config.permutations);
    config.alpha = get_number(doc, "config", "alpha", config.alpha);
    config.balance_alpha = get_number(doc, "config", "balance_alpha", config.balance_alpha);
    if (doc.contains("seed")) {
        const Json& v = doc.at("seed");
        if (!v.is_number_unsigned() && !v.is_number_integer()) {
            throw ConfigError("config.seed must be a non-negative integer");
        }
        config.seed = v.get<std::uint64_t>();
    }
    config.report_path = get_string(doc, "config", "report_path", "");
    config.plot_path = get_string(doc, "config", "plot_path", "");
    validate(config);
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config_json(buf.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string config_to_json(const ExperimentConfig& config) {
    Json doc;
    doc["dgp"] = dgp_to_json(config.dgp);
    doc["pipeline"] = to_string(config.pipeline);
    doc["sizes"] = config.sizes;
    doc["replications"] = config.replications;
    doc["permutations"] = config.permutations;
    doc["alpha"] = config.alpha;
    doc["balance_alpha"] = config.balance_alpha;
    doc["seed"] = config.seed;
    doc["report_path"] = config.report_path;
    doc["plot_path"] = config.plot_path;
    return doc.dump(2) + "\n";
}

std::vector<std::string> known_experiment_ids() {
    return {"fig1", "ex1", "ex2", "ex3", "prop2", "prop3", "thm1", "thm2", "thm3"};
}

ExperimentConfig experiment_preset(const std::string& id, const std::string& scale) {
    if (scale != "desk" && scale != "full") {
        throw ConfigError("unknown scale \"" + scale + "\" (known: desk, full)");
    }
    const bool full = scale == "full";

    ExperimentConfig c;
    c.permutations = 1000;
    c.alpha = 0.05;
    c.balance_alpha = 0.10;
    c.seed = 20260823;

    if (id == "fig1") {
        // Bias decay and Type I error growth of the paired difference-of-means
        // randomization test under the 4-D logistic design.
        c.dgp.variant = LogisticPropensity4D{};
        c.pipeline = Pipeline::pair_dm_rand;
        c.sizes = full ? std::vector<int>{250, 500, 1000, 2000} : std::vector<int>{200, 400, 800, 1600};
        c.replications = full ? 2000 : 500;
    } else if (id == "ex1") {
        // 1-D linear propensity: matching discrepancy does not vanish fast
        // enough, so the difference-of-means test over-rejects.
        c.dgp.variant = LinearPropensity1D{0.2, 0.5, 0.0, 1.0, 1.0};
        c.pipeline = Pipeline::pair_dm_rand;
        c.sizes = {2000};
        c.replications = full ? 2000 : 300;
    } else if (id == "ex2") {
        // Uniform-disc covariates: a continuous 2-D design where exact
        // balance is unattainable and the test is again invalid.
        c.dgp.variant = DiscPropensity2D{};
        c.pipeline = Pipeline::pair_dm_rand;
        c.sizes = {2000};
        c.replications = full ? 2000 : 300;
    } else if (id == "ex3") {
        // Regression-adjusted statistic with a correct linear model: the
        // randomization distribution mismatches the sampling distribution.
        c.dgp.variant = LinearPropensity1D{0.2, 0.5, 0.0, 1.0, 1.0};
        c.pipeline = Pipeline::pair_reg_rand;
        c.sizes = {2000};
        c.replications = full ? 2000 : 500;
    } else if (id == "prop2") {
        // Valid regime for the difference-of-means test: one continuous
        // covariate, propensity bounded below 0.45, Lipschitz linear outcome.
        c.dgp.variant = LinearPropensity1D{0.2, 0.2, 0.0, 1.0, 1.0};
        c.pipeline = Pipeline::pair_dm_rand;
        c.sizes = {2000};
        c.replications = full ? 2000 : 500;
    } else if (id == "prop3") {
        // Valid regime for the regression-adjusted test: 4-D design with the
        // propensity capped below 0.45 and a correctly specified outcome.
        c.dgp.variant = LogisticPropensity4D{0.9};
        c.pipeline = Pipeline::pair_reg_rand;
        c.sizes = {2000};
        c.replications = full ? 2000 : 500;
    } else if (id == "thm1") {
        // Sandwich-variance robustness under a root-n local nonlinearity with
        // pair matching; propensity stays below 0.45 everywhere.
        c.dgp.variant = CosinePropensity1D{};
        LocalMisspec m;
        m.g = bounded_g_library("cos_pi", 1);
        m.c = {2.0};
        c.dgp.misspec = std::move(m);
        c.pipeline = Pipeline::pair_hc;
        c.sizes = {2000};
        c.replications = full ? 2000 : 500;
    } else if (id == "thm2") {
        // With-replacement matching plus multiplicity-weighted regression
        // stays robust even when some propensities exceed one half.
        c.dgp.variant = LinearPropensity1D{0.2, 0.5, 0.0, 1.0, 1.0};
        LocalMisspec m;
        m.g = bounded_g_library("cos_pi", 1);
        m.c = {2.0};
        c.dgp.misspec = std::move(m);
        c.pipeline = Pipeline::replacement_hc;
        c.sizes = {2000};
        c.replications = full ? 2000 : 500;
    } else if (id == "thm3") {
        // Model dependence: the three modeling strategies agree with high
        // probability on the matched sample.
        c.dgp.variant = LogisticPropensity4D{};
        LocalMisspec m;
        m.g = bounded_g_library("cos_pi", 4);
        m.c = {2.0, 0.0, 0.0, 0.0};
        c.dgp.misspec = std::move(m);
        c.pipeline = Pipeline::replacement_hc_strategies;
        c.sizes = {2000};
        c.replications = full ? 2000 : 500;
    } else {
        std::string ids;
        for (const std::string& known : known_experiment_ids()) {
            if (!ids.empty()) ids += ", ";
            ids += known;
        }
        throw ConfigError("unknown experiment id \"" + id + "\" (known: " + ids + ")");
    }
    validate(c);
    return c;
}

}  // namespace matchinf
