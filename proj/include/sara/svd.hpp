// svd.hpp - one-sided Jacobi singular value decomposition.
//
// W (m x n) is factored as u * diag(s) * vt with s descending and both factor
// sets orthonormal. The routine is pure and deterministic: no randomness, a
// fixed sweep order, and a sign convention (largest-|entry| element of each u
// column made non-negative, ties to the lowest row index) make repeated calls
// bit-identical.

#ifndef SARA_SVD_HPP
#define SARA_SVD_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "sara/matrix.hpp"

namespace sara {

struct SvdResult {
    Matrix u;               // m x r
    std::vector<double> s;  // length r = min(m, n), descending, non-negative
    Matrix vt;              // r x n
};

namespace detail {

// Hestenes one-sided Jacobi on A (m x n, m >= n). Columns of A are rotated
// towards mutual orthogonality; V accumulates the rotations. A pair is rotated
// while |a_i . a_j| > 1e-14 * ||a_i|| * ||a_j||, capped at 60 sweeps.
struct JacobiFactors {
    Matrix u;
    std::vector<double> s;
    Matrix v; // n x n, columns are right singular vectors
};

inline JacobiFactors jacobi_tall(const Matrix& w) {
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    Matrix a = w;
    Matrix v = Matrix::identity(n);

    constexpr double tol = 1e-14;
    constexpr int max_sweeps = 60;

    double worst = 0.0;
    bool converged = false;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        converged = true;
        worst = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t k = 0; k < m; ++k) {
                    const double ai = a(k, i), aj = a(k, j);
                    alpha += ai * ai;
                    beta += aj * aj;
                    gamma += ai * aj;
                }
                const double denom = std::sqrt(alpha) * std::sqrt(beta);
                if (denom == 0.0 || std::abs(gamma) <= tol * denom) {
                    continue;
                }
                converged = false;
                worst = std::max(worst, std::abs(gamma) / denom);

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < m; ++k) {
                    const double ai = a(k, i), aj = a(k, j);
                    a(k, i) = c * ai - s * aj;
                    a(k, j) = s * ai + c * aj;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vi = v(k, i), vj = v(k, j);
                    v(k, i) = c * vi - s * vj;
                    v(k, j) = s * vi + c * vj;
                }
            }
        }
    }
    if (!converged) {
        throw std::runtime_error("svd: no convergence after 60 sweeps; max off-diagonal residual " +
                                 std::to_string(worst));
    }

    // column norms are the singular values; sort descending (stable for ties)
    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            acc += a(k, j) * a(k, j);
        }
        norms[j] = std::sqrt(acc);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    JacobiFactors f;
    f.u = Matrix(m, n);
    f.s.resize(n);
    f.v = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        f.s[j] = norms[src];
        if (norms[src] > 0.0) {
            for (std::size_t k = 0; k < m; ++k) {
                f.u(k, j) = a(k, src) / norms[src];
            }
        }
        for (std::size_t k = 0; k < n; ++k) {
            f.v(k, j) = v(k, src);
        }
    }

    // exactly-zero columns carry no direction; complete u to an orthonormal
    // set from canonical basis vectors (first workable index wins)
    for (std::size_t j = 0; j < n; ++j) {
        if (f.s[j] > 0.0) {
            continue;
        }
        for (std::size_t cand = 0; cand < m; ++cand) {
            std::vector<double> r(m, 0.0);
            r[cand] = 1.0;
            for (std::size_t c = 0; c < n; ++c) {
                if (c == j || (f.s[c] == 0.0 && c > j)) {
                    continue; // only project against columns already defined
                }
                double dot = f.u(cand, c);
                for (std::size_t k = 0; k < m; ++k) {
                    r[k] -= dot * f.u(k, c);
                }
            }
            double rn = 0.0;
            for (double x : r) {
                rn += x * x;
            }
            rn = std::sqrt(rn);
            if (rn > 0.5) {
                for (std::size_t k = 0; k < m; ++k) {
                    f.u(k, j) = r[k] / rn;
                }
                break;
            }
        }
    }
    return f;
}

inline void apply_sign_convention(Matrix& u, Matrix& vt) {
    for (std::size_t j = 0; j < u.cols(); ++j) {
        std::size_t imax = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < u.rows(); ++i) {
            const double v = std::abs(u(i, j));
            if (v > best) {
                best = v;
                imax = i;
            }
        }
        if (u(imax, j) < 0.0) {
            for (std::size_t i = 0; i < u.rows(); ++i) {
                u(i, j) = -u(i, j);
            }
            for (std::size_t k = 0; k < vt.cols(); ++k) {
                vt(j, k) = -vt(j, k);
            }
        }
    }
}

} // namespace detail

inline SvdResult svd(const Matrix& w) {
    if (w.rows() < 1 || w.cols() < 1) {
        throw std::invalid_argument("svd: matrix must be at least 1x1, got " + w.shape_str());
    }
    require_finite(w, "svd");

    SvdResult out;
    if (w.rows() >= w.cols()) {
        detail::JacobiFactors f = detail::jacobi_tall(w);
        out.u = std::move(f.u);
        out.s = std::move(f.s);
        out.vt = transpose(f.v);
    } else {
        // factor the transpose and swap roles of the singular vectors
        detail::JacobiFactors f = detail::jacobi_tall(transpose(w));
        out.u = f.v;
        out.s = std::move(f.s);
        out.vt = transpose(f.u);
    }
    detail::apply_sign_convention(out.u, out.vt);
    return out;
}

inline SvdResult truncate_svd(const SvdResult& f, std::size_t k) {
    if (k < 1 || k > f.s.size()) {
        throw std::invalid_argument("truncate_svd: k = " + std::to_string(k) +
                                    " out of range [1, " + std::to_string(f.s.size()) + "]");
    }
    SvdResult t;
    t.u = Matrix(f.u.rows(), k);
    for (std::size_t i = 0; i < f.u.rows(); ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            t.u(i, j) = f.u(i, j);
        }
    }
    t.s.assign(f.s.begin(), f.s.begin() + static_cast<std::ptrdiff_t>(k));
    t.vt = Matrix(k, f.vt.cols());
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < f.vt.cols(); ++j) {
            t.vt(i, j) = f.vt(i, j);
        }
    }
    return t;
}

// u * diag(s) * vt
inline Matrix svd_reconstruct(const SvdResult& f) {
    return matmul(scale_cols(f.u, f.s), f.vt);
}

} // namespace sara

#endif // SARA_SVD_HPP
