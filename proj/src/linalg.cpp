#include "matchinf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace matchinf {

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool Matrix::symmetric(double rel_tol) const {
    if (rows_ != cols_) return false;
    double scale = 0.0;
    for (double v : a_) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return true;
    for (int i = 0; i < rows_; ++i) {
        for (int j = i + 1; j < cols_; ++j) {
            if (std::abs((*this)(i, j) - (*this)(j, i)) > rel_tol * scale) return false;
        }
    }
    return true;
}

Matrix sample_covariance(const Dataset& dataset) {
    const int n = dataset.n();
    const int d = dataset.d();
    if (n < 2) throw ContractError("sample covariance needs at least 2 units, got " + std::to_string(n));
    std::vector<double> mean(d, 0.0);
    for (const Unit& u : dataset.units()) {
        for (int j = 0; j < d; ++j) mean[j] += u.x[j];
    }
    for (int j = 0; j < d; ++j) mean[j] /= n;
    Matrix cov(d, d);
    for (const Unit& u : dataset.units()) {
        for (int j = 0; j < d; ++j) {
            const double cj = u.x[j] - mean[j];
            for (int k = j; k < d; ++k) cov(j, k) += cj * (u.x[k] - mean[k]);
        }
    }
    for (int j = 0; j < d; ++j) {
        for (int k = j; k < d; ++k) {
            cov(j, k) /= (n - 1);
            cov(k, j) = cov(j, k);
        }
    }
    return cov;
}

namespace {

// LDLT factorization of a symmetric matrix. Returns false when any pivot is
// below `min_pivot` (treated as numerically singular / not PD).
bool ldlt_factor(const Matrix& a, double min_pivot, std::vector<double>& l, std::vector<double>& d) {
    const int n = a.rows();
    l.assign(static_cast<std::size_t>(n) * n, 0.0);
    d.assign(n, 0.0);
    auto lref = [&](int i, int j) -> double& { return l[static_cast<std::size_t>(i) * n + j]; };
    for (int j = 0; j < n; ++j) {
        double dj = a(j, j);
        for (int k = 0; k < j; ++k) dj -= lref(j, k) * lref(j, k) * d[k];
        if (!(dj > min_pivot)) return false;
        d[j] = dj;
        lref(j, j) = 1.0;
        for (int i = j + 1; i < n; ++i) {
            double v = a(i, j);
            for (int k = 0; k < j; ++k) v -= lref(i, k) * lref(j, k) * d[k];
            lref(i, j) = v / dj;
        }
    }
    return true;
}

}  // namespace

Metric build_metric(const Matrix& cov) {
    if (!cov.symmetric(1e-9)) throw ContractError("covariance matrix is not symmetric");
    const int n = cov.rows();
    double max_diag = 0.0;
    for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(cov(i, i)));

    Metric metric;
    std::vector<double> l, d;
    if (max_diag == 0.0 || !ldlt_factor(cov, 1e-10 * max_diag, l, d)) {
        metric.inverse_matrix = Matrix::identity(n);
        metric.used_identity_fallback = true;
        return metric;
    }
    // Columns of the inverse by solving L D L^T x = e_k.
    auto lref = [&](int i, int j) { return l[static_cast<std::size_t>(i) * n + j]; };
    Matrix inv(n, n);
    std::vector<double> w(n);
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) {
            double v = (i == k) ? 1.0 : 0.0;
            for (int j = 0; j < i; ++j) v -= lref(i, j) * w[j];
            w[i] = v;
        }
        for (int i = 0; i < n; ++i) w[i] /= d[i];
        for (int i = n - 1; i >= 0; --i) {
            double v = w[i];
            for (int j = i + 1; j < n; ++j) v -= lref(j, i) * w[j];
            w[i] = v;
        }
        for (int i = 0; i < n; ++i) inv(i, k) = w[i];
    }
    // Symmetrize away round-off so mahalanobis(a,b) == mahalanobis(b,a) exactly.
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double s = 0.5 * (inv(i, j) + inv(j, i));
            inv(i, j) = s;
            inv(j, i) = s;
        }
    }
    metric.inverse_matrix = std::move(inv);
    return metric;
}

double mahalanobis_squared(std::span<const double> a, std::span<const double> b, const Metric& m) {
    const int d = m.dim();
    if (static_cast<int>(a.size()) != d || static_cast<int>(b.size()) != d) {
        throw ContractError("mahalanobis: vector length does not match metric dimension");
    }
    double q = 0.0;
    for (int i = 0; i < d; ++i) {
        const double di = a[i] - b[i];
        double row = 0.0;
        for (int j = 0; j < d; ++j) row += m.inverse_matrix(i, j) * (a[j] - b[j]);
        q += di * row;
    }
    return std::max(q, 0.0);
}

double mahalanobis_distance(std::span<const double> a, std::span<const double> b, const Metric& m) {
    return std::sqrt(mahalanobis_squared(a, b, m));
}

LeastSquares solve_least_squares(const Matrix& x, std::span<const double> y, std::span<const double> w,
                                 bool want_xtwx_inverse) {
    const int n = x.rows();
    const int p = x.cols();
    if (static_cast<int>(y.size()) != n) throw ContractError("least squares: y length does not match rows");
    if (!w.empty() && static_cast<int>(w.size()) != n) {
        throw ContractError("least squares: weight length does not match rows");
    }
    if (n < p) throw SingularDesign("least squares: fewer rows (" + std::to_string(n) + ") than columns (" +
                                    std::to_string(p) + ")");

    // Scale rows by sqrt(w): minimizing ||sqrt(W)(y - X beta)||.
    Matrix a(n, p);
    std::vector<double> b(n);
    for (int i = 0; i < n; ++i) {
        const double s = w.empty() ? 1.0 : std::sqrt(std::max(w[i], 0.0));
        for (int j = 0; j < p; ++j) a(i, j) = s * x(i, j);
        b[i] = s * y[i];
    }

    // Column-pivoted Householder QR on `a`, transformations applied to `b`.
    std::vector<int> perm(p);
    for (int j = 0; j < p; ++j) perm[j] = j;
    std::vector<double> beta_perm(p, 0.0);
    double max_pivot = 0.0;
    for (int k = 0; k < p; ++k) {
        // Pivot: bring the column with the largest remaining norm to position k.
        int best = k;
        double best_norm = -1.0;
        for (int j = k; j < p; ++j) {
            double nrm = 0.0;
            for (int i = k; i < n; ++i) nrm += a(i, j) * a(i, j);
            if (nrm > best_norm) {
                best_norm = nrm;
                best = j;
            }
        }
        if (best != k) {
            for (int i = 0; i < n; ++i) std::swap(a(i, k), a(i, best));
            std::swap(perm[k], perm[best]);
        }

        // Householder vector for column k.
        double norm = std::sqrt(best_norm);
        if (k == 0) max_pivot = norm;
        if (norm <= 1e-10 * max_pivot || norm == 0.0) {
            throw SingularDesign("least squares: design matrix is rank deficient (pivot " +
                                 std::to_string(k) + ")");
        }
        const double alpha = (a(k, k) >= 0.0) ? -norm : norm;
        std::vector<double> v(n - k);
        v[0] = a(k, k) - alpha;
        for (int i = k + 1; i < n; ++i) v[i - k] = a(i, k);
        double vtv = 0.0;
        for (double t : v) vtv += t * t;
        a(k, k) = alpha;
        for (int i = k + 1; i < n; ++i) a(i, k) = 0.0;
        if (vtv > 0.0) {
            for (int j = k + 1; j < p; ++j) {
                double dot = 0.0;
                for (int i = k; i < n; ++i) dot += v[i - k] * a(i, j);
                const double f = 2.0 * dot / vtv;
                for (int i = k; i < n; ++i) a(i, j) -= f * v[i - k];
            }
            double dotb = 0.0;
            for (int i = k; i < n; ++i) dotb += v[i - k] * b[i];
            const double fb = 2.0 * dotb / vtv;
            for (int i = k; i < n; ++i) b[i] -= fb * v[i - k];
        }
    }

    // Back substitution: R beta_perm = Q^T b (first p rows).
    for (int i = p - 1; i >= 0; --i) {
        double v = b[i];
        for (int j = i + 1; j < p; ++j) v -= a(i, j) * beta_perm[j];
        beta_perm[i] = v / a(i, i);
    }

    LeastSquares out;
    out.coef.assign(p, 0.0);
    for (int j = 0; j < p; ++j) out.coef[perm[j]] = beta_perm[j];

    if (want_xtwx_inverse) {
        // (X^T W X)^{-1} = P R^{-1} R^{-T} P^T. Compute R^{-1} column-wise.
        Matrix rinv(p, p);
        for (int k = 0; k < p; ++k) {
            for (int i = p - 1; i >= 0; --i) {
                double v = (i == k) ? 1.0 : 0.0;
                for (int j = i + 1; j < p; ++j) v -= a(i, j) * rinv(j, k);
                rinv(i, k) = v / a(i, i);
            }
        }
        Matrix inv(p, p);
        for (int i = 0; i < p; ++i) {
            for (int j = i; j < p; ++j) {
                double s = 0.0;
                for (int k = std::max(i, j); k < p; ++k) s += rinv(i, k) * rinv(j, k);
                inv(perm[i], perm[j]) = s;
                inv(perm[j], perm[i]) = s;
            }
        }
        out.xtwx_inverse = std::move(inv);
    }
    return out;
}

std::vector<double> symmetric_eigenvalues(Matrix a) {
    if (!a.symmetric(1e-9)) throw ContractError("eigenvalues: matrix is not symmetric");
    const int n = a.rows();
    // Cyclic Jacobi rotations until off-diagonal mass is negligible.
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        }
        if (off < 1e-26) break;
        for (int pi = 0; pi < n; ++pi) {
            for (int qi = pi + 1; qi < n; ++qi) {
                if (a(pi, qi) == 0.0) continue;
                const double theta = (a(qi, qi) - a(pi, pi)) / (2.0 * a(pi, qi));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, pi);
                    const double akq = a(k, qi);
                    a(k, pi) = c * akp - s * akq;
                    a(k, qi) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(pi, k);
                    const double aqk = a(qi, k);
                    a(pi, k) = c * apk - s * aqk;
                    a(qi, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (int i = 0; i < n; ++i) ev[i] = a(i, i);
    std::sort(ev.begin(), ev.end());
    return ev;
}

}  // namespace matchinf
