#ifndef MUCOR_SPARSE_HPP
#define MUCOR_SPARSE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mucor {

/// Compressed sparse row matrix, float64.
struct SparseMatrix {
    int rows = 0, cols = 0;
    std::vector<int> row_ptr;  // length rows+1
    std::vector<int> col_idx;
    std::vector<double> vals;

    void apply(const double* x, double* y) const {
        for (int r = 0; r < rows; ++r) {
            double s = 0.0;
            for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += vals[k] * x[col_idx[k]];
            y[r] = s;
        }
    }

    [[nodiscard]] std::vector<double> apply(const std::vector<double>& x) const {
        if (static_cast<int>(x.size()) != cols) throw std::invalid_argument("apply: size mismatch");
        std::vector<double> y(static_cast<size_t>(rows));
        apply(x.data(), y.data());
        return y;
    }

    /// y += alpha * A^T x. Deterministic (fixed row order).
    void apply_transpose_add(const double* x, double* y, double alpha = 1.0) const {
        for (int r = 0; r < rows; ++r) {
            const double xr = alpha * x[r];
            if (xr == 0.0) continue;
            for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) y[col_idx[k]] += vals[k] * xr;
        }
    }

    [[nodiscard]] std::vector<double> diagonal() const {
        std::vector<double> d(static_cast<size_t>(rows), 0.0);
        for (int r = 0; r < rows; ++r)
            for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                if (col_idx[k] == r) d[r] += vals[k];
        return d;
    }

    [[nodiscard]] double sum() const { return std::accumulate(vals.begin(), vals.end(), 0.0); }
};

/// Accumulates (row, col, value) entries; duplicates are summed on build.
struct TripletBuilder {
    int rows, cols;
    std::vector<int> r, c;
    std::vector<double> v;

    TripletBuilder(int rows_, int cols_) : rows(rows_), cols(cols_) {}

    void add(int row, int col, double val) {
        r.push_back(row);
        c.push_back(col);
        v.push_back(val);
    }

    [[nodiscard]] SparseMatrix build() const {
        SparseMatrix m;
        m.rows = rows;
        m.cols = cols;
        std::vector<size_t> order(r.size());
        std::iota(order.begin(), order.end(), size_t{0});
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (r[a] != r[b]) return r[a] < r[b];
            if (c[a] != c[b]) return c[a] < c[b];
            return a < b;  // stable: duplicates summed in insertion order
        });
        m.row_ptr.assign(static_cast<size_t>(rows) + 1, 0);
        // Merge duplicates in one pass over the sorted order.
        int cur_row = -1, cur_col = -1;
        for (size_t idx : order) {
            if (r[idx] == cur_row && c[idx] == cur_col) {
                m.vals.back() += v[idx];
            } else {
                cur_row = r[idx];
                cur_col = c[idx];
                m.col_idx.push_back(cur_col);
                m.vals.push_back(v[idx]);
                m.row_ptr[static_cast<size_t>(cur_row) + 1]++;
            }
        }
        for (int i = 0; i < rows; ++i) m.row_ptr[static_cast<size_t>(i) + 1] += m.row_ptr[i];
        return m;
    }
};

/// Restrict A to the rows/columns listed in `keep` (in the given order).
[[nodiscard]] inline SparseMatrix restrict_to(const SparseMatrix& A, const std::vector<int>& keep) {
    std::vector<int> inv(static_cast<size_t>(A.cols), -1);
    for (size_t i = 0; i < keep.size(); ++i) inv[static_cast<size_t>(keep[i])] = static_cast<int>(i);
    TripletBuilder t(static_cast<int>(keep.size()), static_cast<int>(keep.size()));
    for (size_t i = 0; i < keep.size(); ++i) {
        const int r = keep[i];
        for (int k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k) {
            const int cj = inv[static_cast<size_t>(A.col_idx[k])];
            if (cj >= 0) t.add(static_cast<int>(i), cj, A.vals[k]);
        }
    }
    return t.build();
}

struct SolveReport {
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;  // relative to ||b||
};

namespace solver_detail {
inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}
inline double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }
}  // namespace solver_detail

/// Preconditioned conjugate gradient for SPD operators.
/// `project`, when given, is applied to residual and iterates each
/// iteration (used to pin the constant null space of periodic problems).
template <class Apply>
SolveReport cg_solve(int n, Apply&& apply, const std::vector<double>& b, std::vector<double>& x,
                     double rel_tol, int max_iter, const std::vector<double>* jacobi = nullptr,
                     const std::function<void(std::vector<double>&)>& project = nullptr) {
    using solver_detail::dot;
    using solver_detail::norm;
    std::vector<double> r(b), z(static_cast<size_t>(n)), p(static_cast<size_t>(n)),
        Ap(static_cast<size_t>(n));
    if (static_cast<int>(x.size()) != n) x.assign(static_cast<size_t>(n), 0.0);
    apply(x.data(), Ap.data());
    for (int i = 0; i < n; ++i) r[i] -= Ap[i];
    if (project) project(r);
    const double bnorm = std::max(norm(b), 1e-300);
    auto precond = [&](const std::vector<double>& in, std::vector<double>& out) {
        if (jacobi)
            for (int i = 0; i < n; ++i) out[i] = in[i] / (*jacobi)[i];
        else
            out = in;
    };
    precond(r, z);
    if (project) project(z);
    p = z;
    double rz = dot(r, z);
    SolveReport rep;
    for (int it = 0; it < max_iter; ++it) {
        rep.iterations = it;
        rep.residual = norm(r) / bnorm;
        if (rep.residual <= rel_tol) {
            rep.converged = true;
            return rep;
        }
        apply(p.data(), Ap.data());
        const double pAp = dot(p, Ap);
        if (pAp == 0.0) break;
        const double alpha = rz / pAp;
        for (int i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * Ap[i];
        }
        if (project) project(r);
        precond(r, z);
        if (project) project(z);
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    rep.residual = norm(r) / bnorm;
    rep.converged = rep.residual <= rel_tol;
    return rep;
}

/// Jacobi-preconditioned BiCGStab for general (nonsymmetric) operators.
template <class Apply>
SolveReport bicgstab_solve(int n, Apply&& apply, const std::vector<double>& b,
                           std::vector<double>& x, double rel_tol, int max_iter,
                           const std::vector<double>* jacobi = nullptr) {
    using solver_detail::dot;
    using solver_detail::norm;
    if (static_cast<int>(x.size()) != n) x.assign(static_cast<size_t>(n), 0.0);
    std::vector<double> r(static_cast<size_t>(n)), rhat, p(static_cast<size_t>(n), 0.0),
        v(static_cast<size_t>(n), 0.0), s(static_cast<size_t>(n)), t(static_cast<size_t>(n)),
        phat(static_cast<size_t>(n)), shat(static_cast<size_t>(n));
    apply(x.data(), r.data());
    for (int i = 0; i < n; ++i) r[i] = b[i] - r[i];
    rhat = r;
    const double bnorm = std::max(norm(b), 1e-300);
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    auto precond = [&](const std::vector<double>& in, std::vector<double>& out) {
        if (jacobi)
            for (int i = 0; i < n; ++i) out[i] = in[i] / (*jacobi)[i];
        else
            out = in;
    };
    SolveReport rep;
    for (int it = 0; it < max_iter; ++it) {
        rep.iterations = it;
        rep.residual = norm(r) / bnorm;
        if (rep.residual <= rel_tol) {
            rep.converged = true;
            return rep;
        }
        const double rho_new = dot(rhat, r);
        if (rho_new == 0.0) break;
        if (it == 0) {
            p = r;
        } else {
            const double beta = (rho_new / rho) * (alpha / omega);
            for (int i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        rho = rho_new;
        precond(p, phat);
        apply(phat.data(), v.data());
        const double rhv = dot(rhat, v);
        if (rhv == 0.0) break;
        alpha = rho / rhv;
        for (int i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
        if (norm(s) / bnorm <= rel_tol) {
            for (int i = 0; i < n; ++i) x[i] += alpha * phat[i];
            r = s;
            rep.iterations = it + 1;
            rep.residual = norm(r) / bnorm;
            rep.converged = true;
            return rep;
        }
        precond(s, shat);
        apply(shat.data(), t.data());
        const double tt = dot(t, t);
        if (tt == 0.0) break;
        omega = dot(t, s) / tt;
        for (int i = 0; i < n; ++i) {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        if (omega == 0.0) break;
    }
    rep.residual = norm(r) / bnorm;
    rep.converged = rep.residual <= rel_tol;
    return rep;
}

/// Dense matrix with LU (partial pivoting); used for small systems where
/// iterative-solver noise would contaminate gradient verification.
struct DenseLu {
    int n = 0;
    std::vector<double> a;  // row-major, overwritten by factors
    std::vector<int> piv;
    bool factored = false;

    explicit DenseLu(int n_ = 0) : n(n_), a(static_cast<size_t>(n_) * n_, 0.0) {}

    double& at(int r, int c) { return a[static_cast<size_t>(r) * n + c]; }
    [[nodiscard]] double at(int r, int c) const { return a[static_cast<size_t>(r) * n + c]; }

    void factor() {
        piv.assign(static_cast<size_t>(n), 0);
        for (int k = 0; k < n; ++k) {
            int p = k;
            double best = std::fabs(at(k, k));
            for (int r = k + 1; r < n; ++r)
                if (std::fabs(at(r, k)) > best) {
                    best = std::fabs(at(r, k));
                    p = r;
                }
            if (best == 0.0) throw std::runtime_error("DenseLu: singular matrix");
            piv[k] = p;
            if (p != k)
                for (int c = 0; c < n; ++c) std::swap(at(k, c), at(p, c));
            const double inv = 1.0 / at(k, k);
            for (int r = k + 1; r < n; ++r) {
                const double l = at(r, k) * inv;
                at(r, k) = l;
                if (l != 0.0)
                    for (int c = k + 1; c < n; ++c) at(r, c) -= l * at(k, c);
            }
        }
        factored = true;
    }

    /// Solve A x = b in place.
    void solve(std::vector<double>& b) const {
        for (int k = 0; k < n; ++k)
            if (piv[k] != k) std::swap(b[k], b[piv[k]]);
        for (int r = 1; r < n; ++r) {
            double s = b[r];
            for (int c = 0; c < r; ++c) s -= at(r, c) * b[c];
            b[r] = s;
        }
        for (int r = n - 1; r >= 0; --r) {
            double s = b[r];
            for (int c = r + 1; c < n; ++c) s -= at(r, c) * b[c];
            b[r] = s / at(r, r);
        }
    }

    /// Solve A^T x = b in place (same factorization).
    void solve_transpose(std::vector<double>& b) const {
        // A = P^T L U, so A^T = U^T L^T P: forward with U^T, back with L^T,
        // then undo the row swaps in reverse order.
        for (int r = 0; r < n; ++r) {
            double s = b[r];
            for (int c = 0; c < r; ++c) s -= at(c, r) * b[c];
            b[r] = s / at(r, r);
        }
        for (int r = n - 1; r >= 0; --r) {
            double s = b[r];
            for (int c = r + 1; c < n; ++c) s -= at(c, r) * b[c];
            b[r] = s;
        }
        for (int k = n - 1; k >= 0; --k)
            if (piv[k] != k) std::swap(b[k], b[piv[k]]);
    }
};

}  // namespace mucor

#endif  // MUCOR_SPARSE_HPP
