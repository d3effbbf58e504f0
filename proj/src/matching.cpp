#include "matchinf/matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "matchinf/numeric.hpp"
#include "matchinf/rng.hpp"

namespace matchinf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Dense shortest-augmenting-path assignment solver (rows <= cols required).
// Returns one minimum-cost assignment plus optimal duals (u, v). Every
// minimum-cost assignment is supported on edges with zero reduced cost
// c(i,j) - u[i] - v[j], which is what the canonicalization step exploits.
struct AssignmentResult {
    std::vector<int> col_of_row;  // row -> assigned column
    std::vector<double> u, v;     // dual prices
};

AssignmentResult solve_assignment(int nr, int nc, const std::vector<double>& cost) {
    AssignmentResult res;
    res.col_of_row.assign(nr, -1);
    res.u.assign(nr, 0.0);
    res.v.assign(nc, 0.0);
    std::vector<int> row_of_col(nc, -1);
    std::vector<int> path(nc, -1);
    std::vector<double> shortest(nc, kInf);
    std::vector<char> in_sr(nr, 0), in_sc(nc, 0);
    std::vector<int> remaining(nc);

    for (int cur = 0; cur < nr; ++cur) {
        std::fill(shortest.begin(), shortest.end(), kInf);
        std::fill(in_sr.begin(), in_sr.end(), 0);
        std::fill(in_sc.begin(), in_sc.end(), 0);
        int num_remaining = nc;
        for (int t = 0; t < nc; ++t) remaining[t] = t;

        double min_val = 0.0;
        int i = cur;
        int sink = -1;
        while (sink == -1) {
            in_sr[i] = 1;
            const double* crow = cost.data() + static_cast<std::size_t>(i) * nc;
            int best_t = -1;
            double lowest = kInf;
            for (int t = 0; t < num_remaining; ++t) {
                const int j = remaining[t];
                const double r = min_val + crow[j] - res.u[i] - res.v[j];
                if (r < shortest[j]) {
                    path[j] = i;
                    shortest[j] = r;
                }
                // Prefer an unassigned column on ties so augmentation ends sooner.
                if (shortest[j] < lowest || (shortest[j] == lowest && row_of_col[j] == -1)) {
                    lowest = shortest[j];
                    best_t = t;
                }
            }
            min_val = lowest;
            const int j = remaining[best_t];
            if (row_of_col[j] == -1) {
                sink = j;
            } else {
                i = row_of_col[j];
            }
            in_sc[j] = 1;
            remaining[best_t] = remaining[--num_remaining];
        }

        res.u[cur] += min_val;
        for (int r = 0; r < nr; ++r) {
            if (in_sr[r] && r != cur) res.u[r] += min_val - shortest[res.col_of_row[r]];
        }
        for (int j = 0; j < nc; ++j) {
            if (in_sc[j]) res.v[j] -= min_val - shortest[j];
        }
        int j = sink;
        while (true) {
            const int r = path[j];
            row_of_col[j] = r;
            std::swap(res.col_of_row[r], j);
            if (r == cur) break;
        }
    }
    return res;
}

// Lexicographically smallest assignment within the zero-reduced-cost
// ("tight") edge graph of the SQUARED problem (dummy rows with zero cost make
// n_rows == n_cols). Squaring matters: with fewer rows than columns a swap
// along tight edges preserves total cost only if the column leaving the
// matching has zero dual price, and in the square graph no column ever
// leaves, so every reachable matching is optimal (within nr * tol).
// Processes the real rows in order, forcing the smallest tight column that
// still leaves everything else matchable.
class TightGraphCanonicalizer {
public:
    TightGraphCanonicalizer(int rows_to_fix, int nc, std::vector<std::vector<int>> adj,
                            std::vector<int> col_of_row)
        : rows_to_fix_(rows_to_fix), nr_(static_cast<int>(adj.size())), adj_(std::move(adj)),
          col_of_row_(std::move(col_of_row)), row_of_col_(nc, -1), col_fixed_(nc, 0), visited_(nr_, 0) {
        for (int r = 0; r < nr_; ++r) row_of_col_[col_of_row_[r]] = r;
    }

    std::vector<int> run() {
        for (int r = 0; r < rows_to_fix_; ++r) {
            for (int j : adj_[r]) {
                if (j == col_of_row_[r]) break;  // current column reached: already smallest
                if (col_fixed_[j]) continue;
                const int displaced = row_of_col_[j];
                const int old = col_of_row_[r];
                // Tentatively take j for row r; the displaced row (if any) must
                // find another column. Its search may use r's old column.
                row_of_col_[old] = -1;
                col_of_row_[r] = j;
                row_of_col_[j] = r;
                bool ok = true;
                if (displaced != -1) {
                    std::fill(visited_.begin(), visited_.end(), 0);
                    visited_[r] = 1;
                    col_of_row_[displaced] = -1;
                    ok = augment(displaced);
                }
                if (ok) break;
                // Roll back.
                if (displaced != -1) col_of_row_[displaced] = j;
                col_of_row_[r] = old;
                row_of_col_[old] = r;
                row_of_col_[j] = displaced;
            }
            col_fixed_[col_of_row_[r]] = 1;
        }
        return col_of_row_;
    }

private:
    bool augment(int r) {
        for (int j : adj_[r]) {
            if (col_fixed_[j]) continue;
            const int occupant = row_of_col_[j];
            if (occupant == r) continue;
            if (occupant == -1) {
                col_of_row_[r] = j;
                row_of_col_[j] = r;
                return true;
            }
            if (visited_[occupant]) continue;
            visited_[occupant] = 1;
            const int saved = col_of_row_[occupant];
            col_of_row_[occupant] = -1;
            if (augment(occupant)) {
                col_of_row_[r] = j;
                row_of_col_[j] = r;
                return true;
            }
            col_of_row_[occupant] = saved;
        }
        return false;
    }

    int rows_to_fix_;
    int nr_;
    std::vector<std::vector<int>> adj_;
    std::vector<int> col_of_row_;
    std::vector<int> row_of_col_;
    std::vector<char> col_fixed_;
    std::vector<char> visited_;
};

std::vector<int> canonicalize_assignment(int nr, int nc, const std::vector<double>& cost,
                                         const AssignmentResult& base) {
    // The squared graph carries up to nc^2 dummy edges; past the size budget,
    // keep the solver's (deterministic) optimum as-is.
    if (static_cast<std::size_t>(nc) * static_cast<std::size_t>(nc) > 4'000'000) return base.col_of_row;

    double max_cost = 0.0;
    for (double c : cost) max_cost = std::max(max_cost, c);
    const double tol = 1e-9 * (1.0 + max_cost);

    std::vector<std::vector<int>> adj(nc);  // square graph: rows nr..nc-1 are dummies
    bool any_choice = false;
    for (int i = 0; i < nr; ++i) {
        const double* crow = cost.data() + static_cast<std::size_t>(i) * nc;
        for (int j = 0; j < nc; ++j) {
            if (crow[j] - base.u[i] - base.v[j] <= tol) adj[i].push_back(j);
        }
        if (adj[i].size() > 1) any_choice = true;
    }
    if (!any_choice) return base.col_of_row;  // real rows are forced: unique optimum

    // Dummy rows cost 0 everywhere with zero dual, so their tight columns are
    // exactly those with zero price; the solver leaves every unassigned column
    // at price zero, which makes "base + dummies on the free columns" an
    // optimal square assignment under the same duals.
    std::vector<char> col_used(nc, 0);
    for (int i = 0; i < nr; ++i) col_used[base.col_of_row[i]] = 1;
    std::vector<int> col_of_row = base.col_of_row;
    col_of_row.resize(nc);
    int next_dummy = nr;
    for (int j = 0; j < nc; ++j) {
        if (!col_used[j]) col_of_row[next_dummy++] = j;
    }
    for (int i = nr; i < nc; ++i) {
        for (int j = 0; j < nc; ++j) {
            if (-base.v[j] <= tol) adj[i].push_back(j);
        }
    }
    std::vector<int> canonical = TightGraphCanonicalizer(nr, nc, std::move(adj), std::move(col_of_row)).run();
    canonical.resize(nr);
    return canonical;
}

// Exact 1-D assignment via the non-crossing property: with both sides sorted,
// an optimal assignment pairs treated values to controls in order, so a
// row-by-row running-minimum recursion solves it. f(i,j) = best cost of
// matching the first i treated among the first j controls:
//   f(i,j) = min(f(i,j-1), f(i-1,j-1) + |t_i - c_j|).
// Backtracking bits are packed (one per DP cell). Returns, per sorted treated
// position, the sorted control position; `exact_tie_seen` reports whether any
// cell had exactly equal branch costs (multiple optima possible).
std::vector<int> solve_sorted_1d(const std::vector<double>& t, const std::vector<double>& c,
                                 bool* exact_tie_seen) {
    const int n1 = static_cast<int>(t.size());
    const int n0 = static_cast<int>(c.size());
    const std::size_t words_per_row = static_cast<std::size_t>(n0) / 64 + 1;
    std::vector<std::uint64_t> take_bits(words_per_row * static_cast<std::size_t>(n1), 0);
    std::vector<double> prev(n0 + 1, 0.0), curr(n0 + 1, kInf);
    bool tie = false;

    for (int i = 1; i <= n1; ++i) {
        std::uint64_t* bits = take_bits.data() + static_cast<std::size_t>(i - 1) * words_per_row;
        const double ti = t[i - 1];
        curr[i - 1] = kInf;
        for (int j = i; j <= n0; ++j) {
            const double take = prev[j - 1] + std::abs(ti - c[j - 1]);
            const double skip = curr[j - 1];
            if (take < skip) {
                curr[j] = take;
                bits[(j - 1) >> 6] |= std::uint64_t{1} << ((j - 1) & 63);
            } else {
                if (take == skip) tie = true;
                curr[j] = skip;
            }
        }
        std::swap(prev, curr);
    }
    if (exact_tie_seen) *exact_tie_seen = tie;

    std::vector<int> col_of_row(n1, -1);
    int j = n0;
    for (int i = n1; i >= 1; --i) {
        const std::uint64_t* bits = take_bits.data() + static_cast<std::size_t>(i - 1) * words_per_row;
        while (!((bits[(j - 1) >> 6] >> ((j - 1) & 63)) & 1u)) --j;
        col_of_row[i - 1] = j - 1;
        --j;
    }
    return col_of_row;
}

std::vector<double> build_cost_matrix(const Dataset& data, const Metric& metric,
                                      const std::vector<int>& treated, const std::vector<int>& controls) {
    const std::size_t n1 = treated.size();
    const std::size_t n0 = controls.size();
    std::vector<double> cost(n1 * n0);
    for (std::size_t i = 0; i < n1; ++i) {
        const Unit& t = data.unit(treated[i]);
        double* row = cost.data() + i * n0;
        for (std::size_t j = 0; j < n0; ++j) {
            row[j] = mahalanobis_distance(t.x, data.unit(controls[j]).x, metric);
        }
    }
    return cost;
}

}  // namespace

PairMatching optimal_pair_match(const Dataset& data, const Metric& metric) {
    const std::vector<int>& treated = data.treated_indices();
    const std::vector<int>& controls = data.control_indices();
    const int n1 = data.n1();
    const int n0 = data.n0();
    if (n1 == 0) throw DegenerateDesign("pair matching: no treated units");
    if (n1 > n0) {
        throw DegenerateDesign("pair matching: more treated (" + std::to_string(n1) + ") than controls (" +
                               std::to_string(n0) + ")");
    }
    if (metric.dim() != data.d()) throw ContractError("pair matching: metric dimension mismatch");

    std::vector<int> col_of_row;  // treated-list position -> control-list position
    const std::size_t cells = static_cast<std::size_t>(n1) * static_cast<std::size_t>(n0);
    const bool small_enough_for_solver = cells <= 4'000'000;

    if (data.d() == 1) {
        // The metric is a positive scalar here, so raw coordinates give the
        // same minimizers; distances are rescaled when costs are reported.
        std::vector<std::pair<double, int>> ts(n1), cs(n0);
        for (int i = 0; i < n1; ++i) ts[i] = {data.unit(treated[i]).x[0], i};
        for (int j = 0; j < n0; ++j) cs[j] = {data.unit(controls[j]).x[0], j};
        std::sort(ts.begin(), ts.end());
        std::sort(cs.begin(), cs.end());
        std::vector<double> tv(n1), cv(n0);
        for (int i = 0; i < n1; ++i) tv[i] = ts[i].first;
        for (int j = 0; j < n0; ++j) cv[j] = cs[j].first;

        bool tie = false;
        const std::vector<int> sorted_assign = solve_sorted_1d(tv, cv, &tie);
        if (tie && small_enough_for_solver) {
            // Equal-cost optima exist: fall back to the general solver so the
            // canonical (lexicographically smallest) optimum is returned.
            const std::vector<double> cost = build_cost_matrix(data, metric, treated, controls);
            const AssignmentResult base = solve_assignment(n1, n0, cost);
            col_of_row = canonicalize_assignment(n1, n0, cost, base);
        } else {
            col_of_row.assign(n1, -1);
            for (int i = 0; i < n1; ++i) col_of_row[ts[i].second] = cs[sorted_assign[i]].second;
        }
    } else {
        const std::vector<double> cost = build_cost_matrix(data, metric, treated, controls);
        const AssignmentResult base = solve_assignment(n1, n0, cost);
        col_of_row = small_enough_for_solver ? canonicalize_assignment(n1, n0, cost, base) : base.col_of_row;
    }

    PairMatching out;
    out.pairs.reserve(n1);
    for (int i = 0; i < n1; ++i) out.pairs.emplace_back(treated[i], controls[col_of_row[i]]);
    std::sort(out.pairs.begin(), out.pairs.end());
    std::vector<double> dists(n1);
    for (int i = 0; i < n1; ++i) {
        const auto& [ti, ci] = out.pairs[i];
        dists[i] = mahalanobis_distance(data.unit(ti).x, data.unit(ci).x, metric);
        out.matched_set.push_back(ti);
        out.matched_set.push_back(ci);
    }
    out.total_cost = pairwise_sum(dists);
    std::sort(out.matched_set.begin(), out.matched_set.end());
    return out;
}

ReplacementMatching match_with_replacement(const Dataset& data, const Metric& metric,
                                           std::uint64_t tiebreak_seed) {
    const std::vector<int>& treated = data.treated_indices();
    const std::vector<int>& controls = data.control_indices();
    if (treated.empty()) throw DegenerateDesign("replacement matching: no treated units");
    if (controls.empty()) throw DegenerateDesign("replacement matching: no control units");
    if (metric.dim() != data.d()) throw ContractError("replacement matching: metric dimension mismatch");

    ReplacementMatching out;
    std::vector<int> tied;
    for (int t : treated) {
        const Unit& ut = data.unit(t);
        double best = kInf;
        for (int c : controls) {
            best = std::min(best, mahalanobis_distance(ut.x, data.unit(c).x, metric));
        }
        tied.clear();
        const double cutoff = best * (1.0 + 1e-12);
        for (int c : controls) {
            if (mahalanobis_distance(ut.x, data.unit(c).x, metric) <= cutoff) tied.push_back(c);
        }
        int chosen = tied.front();
        if (tied.size() > 1) {
            // Auxiliary per-unit uniforms; the tied control whose uniform is
            // closest to the treated unit's wins. Deterministic in the seed.
            const double u_t = uniform_at(tiebreak_seed, stream::tiebreak, static_cast<std::uint64_t>(t));
            double best_gap = kInf;
            for (int c : tied) {
                const double gap =
                    std::abs(u_t - uniform_at(tiebreak_seed, stream::tiebreak, static_cast<std::uint64_t>(c)));
                if (gap < best_gap) {
                    best_gap = gap;
                    chosen = c;
                }
            }
        }
        out.match_of.emplace(t, chosen);
        out.weights[t] = 1;          // treated weights are exactly 1
        out.weights[chosen] += 1;    // controls accumulate one per treated matched to them
    }
    for (const auto& [unit, w] : out.weights) {
        (void)w;
        out.matched_set.push_back(unit);
    }
    std::sort(out.matched_set.begin(), out.matched_set.end());
    return out;
}

std::vector<double> covariate_imbalance(const Dataset& data, const PairMatching& matching) {
    std::vector<double> diff(data.d(), 0.0);
    if (matching.pairs.empty()) return diff;
    for (const auto& [t, c] : matching.pairs) {
        for (int j = 0; j < data.d(); ++j) diff[j] += data.unit(t).x[j] - data.unit(c).x[j];
    }
    for (double& v : diff) v /= matching.n1();
    return diff;
}

std::vector<double> covariate_imbalance(const Dataset& data, const ReplacementMatching& matching) {
    std::vector<double> diff(data.d(), 0.0);
    if (matching.match_of.empty()) return diff;
    for (int t : data.treated_indices()) {
        const int c = matching.match_of.at(t);
        for (int j = 0; j < data.d(); ++j) diff[j] += data.unit(t).x[j] - data.unit(c).x[j];
    }
    for (double& v : diff) v /= static_cast<double>(matching.match_of.size());
    return diff;
}

namespace {

void write_matching_rows(std::ostream& out, const Dataset& data, const Metric& metric,
                         const std::vector<std::pair<int, int>>& rows,
                         const std::unordered_map<int, int>* weights) {
    out << "treated_index,control_index,distance,weight\n";
    for (const auto& [t, c] : rows) {
        const double dist = mahalanobis_distance(data.unit(t).x, data.unit(c).x, metric);
        const int w = weights ? weights->at(c) : 1;
        out << t << "," << c << "," << format_double(dist) << "," << w << "\n";
    }
}

}  // namespace

void save_matching_csv(const Dataset& data, const Metric& metric, const PairMatching& m,
                       const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open output file: " + path);
    write_matching_rows(out, data, metric, m.pairs, nullptr);
    if (!out) throw IoError("failed while writing: " + path);
}

void save_matching_csv(const Dataset& data, const Metric& metric, const ReplacementMatching& m,
                       const std::string& path) {
    std::vector<std::pair<int, int>> rows;
    rows.reserve(m.match_of.size());
    for (const auto& [t, c] : m.match_of) rows.emplace_back(t, c);
    std::sort(rows.begin(), rows.end());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open output file: " + path);
    write_matching_rows(out, data, metric, rows, &m.weights);
    if (!out) throw IoError("failed while writing: " + path);
}

}  // namespace matchinf
