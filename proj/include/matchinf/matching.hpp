// Matching schemes: optimal pair matching (minimum total Mahalanobis distance,
// solved exactly) and nearest-neighbor matching with replacement (multiplicity
// weights, auxiliary-uniform tie-breaking).
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "matchinf/core.hpp"
#include "matchinf/linalg.hpp"

namespace matchinf {

// Injective treated -> control assignment minimizing the total distance.
struct PairMatching {
    std::vector<std::pair<int, int>> pairs;  // (treated_index, control_index), ascending treated_index
    std::vector<int> matched_set;            // M: all matched unit indices, ascending
    double total_cost = 0.0;                 // sum of per-pair metric distances

    int n1() const { return static_cast<int>(pairs.size()); }
};

// Nearest-control map with controls reusable; W_i counts how many treated
// units map to control i (W_i = 1 for every treated unit).
struct ReplacementMatching {
    std::unordered_map<int, int> match_of;   // treated_index -> control_index
    std::vector<int> matched_set;            // M_r: treated + used controls, ascending
    std::unordered_map<int, int> weights;    // unit index -> W_i (only units in M_r)
};

// Exact solution of the assignment problem over sqrt-form Mahalanobis costs.
// Shortest-augmenting-path solver in general; an equivalent sorted
// dynamic program when d == 1. The result is deterministic. When equal-cost
// optima exist, instances within the general solver's size budget are
// canonicalized to the lexicographically smallest pair list; for d == 1 the
// canonical re-solve triggers on ties the recursion detects (equal branch
// costs), while crossing-equivalent optima -- two pairs whose controls both
// lie beyond both treated values on the same side -- keep the deterministic
// order-preserving optimum.
// Throws DegenerateDesign when N1 = 0 or N1 > N0.
PairMatching optimal_pair_match(const Dataset& dataset, const Metric& metric);

// Each treated unit keeps its nearest control (distance ties within 1e-12
// relative resolved by per-unit auxiliary uniforms drawn from tiebreak_seed:
// among tied controls j, pick the minimizer of |U_i - U_j|).
// Throws DegenerateDesign when N1 = 0 or N0 = 0.
ReplacementMatching match_with_replacement(const Dataset& dataset, const Metric& metric, std::uint64_t tiebreak_seed);

// Mean treated-minus-matched-control covariate difference (d-vector).
std::vector<double> covariate_imbalance(const Dataset& dataset, const PairMatching& matching);
std::vector<double> covariate_imbalance(const Dataset& dataset, const ReplacementMatching& matching);

// Matching export CSV: rows `treated_index,control_index,distance,weight`.
void save_matching_csv(const Dataset& dataset, const Metric& metric, const PairMatching& m, const std::string& path);
void save_matching_csv(const Dataset& dataset, const Metric& metric, const ReplacementMatching& m, const std::string& path);

}  // namespace matchinf
