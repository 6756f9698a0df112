#ifndef MUCOR_FEM_NONLINEAR_HPP
#define MUCOR_FEM_NONLINEAR_HPP

// Newton-Raphson paths for the state-dependent first-continuum
// permeability kappa1(x, u1) = kappa1*(x) * exp(beta*u1), plus the
// single-continuum fine-scale reference solver. Included via fem.hpp.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mucor/fem.hpp"

namespace mucor {

namespace fem_detail {

/// CSR of (M/tau + A + Ds*M) restricted rows/cols: the single-continuum
/// implicit operator. Ds scales rows of M by the nodal sigma values.
[[nodiscard]] inline SparseMatrix implicit_operator(const SparseMatrix& Mi, const SparseMatrix& Ai,
                                                    const std::vector<double>* sigma_int,
                                                    double tau) {
    TripletBuilder t(Mi.rows, Mi.cols);
    for (int r = 0; r < Mi.rows; ++r) {
        const double srow = sigma_int ? (*sigma_int)[static_cast<size_t>(r)] : 0.0;
        for (int k = Mi.row_ptr[r]; k < Mi.row_ptr[r + 1]; ++k)
            t.add(r, Mi.col_idx[k], Mi.vals[k] * (1.0 / tau + srow));
        for (int k = Ai.row_ptr[r]; k < Ai.row_ptr[r + 1]; ++k)
            t.add(r, Ai.col_idx[k], Ai.vals[k]);
    }
    return t.build();
}

[[nodiscard]] inline SparseMatrix csr_sum(const SparseMatrix& A, const SparseMatrix& B) {
    TripletBuilder t(A.rows, A.cols);
    for (int r = 0; r < A.rows; ++r)
        for (int k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k) t.add(r, A.col_idx[k], A.vals[k]);
    for (int r = 0; r < B.rows; ++r)
        for (int k = B.row_ptr[r]; k < B.row_ptr[r + 1]; ++k) t.add(r, B.col_idx[k], B.vals[k]);
    return t.build();
}

inline SolveReport solve_csr(const SparseMatrix& S, const std::vector<double>& b,
                             std::vector<double>& x, double rel_tol, bool symmetric_spd) {
    if (S.rows <= 512) {
        DenseLu lu(S.rows);
        for (int r = 0; r < S.rows; ++r)
            for (int k = S.row_ptr[r]; k < S.row_ptr[r + 1]; ++k) lu.at(r, S.col_idx[k]) = S.vals[k];
        lu.factor();
        x = b;
        lu.solve(x);
        return {true, 1, 0.0};
    }
    const auto d = S.diagonal();
    auto op = [&S](const double* in, double* out) { S.apply(in, out); };
    if (symmetric_spd) return cg_solve(S.rows, op, b, x, rel_tol, 10 * S.rows, &d);
    return bicgstab_solve(S.rows, op, b, x, rel_tol, 10 * S.rows, &d);
}

/// Nodal tensors of kappa1*(x)*exp(beta*u1) at the current iterate.
[[nodiscard]] inline NodalTensorField scaled_kappa1(const NodalTensorField& kstar, double beta,
                                                    const std::vector<double>& u1) {
    NodalTensorField k(kstar.grid);
    for (size_t i = 0; i < k.k11.size(); ++i) {
        const double s = std::exp(beta * u1[i]);
        k.k11[i] = kstar.k11[i] * s;
        k.k12[i] = kstar.k12[i] * s;
        k.k22[i] = kstar.k22[i] * s;
    }
    return k;
}

/// d(A1(u1) u1)/du1 minus A1 itself: the quadrature-exact extra Jacobian
/// block G with G[a][m] = int beta*exp(beta*u_m) N_m (grad u . kappa1*_m grad psi_a).
[[nodiscard]] inline SparseMatrix assemble_newton_extra(const StructuredGrid& grid,
                                                        const NodalTensorField& kstar, double beta,
                                                        const std::vector<double>& u1) {
    const auto& tb = q1::tables();
    const double detJ = grid.hx * grid.hy / 4.0;
    const double sx = 2.0 / grid.hx, sy = 2.0 / grid.hy;
    TripletBuilder t(grid.node_count(), grid.node_count());
    int loc[4];
    for (int cj = 0; cj < grid.ny; ++cj)
        for (int ci = 0; ci < grid.nx; ++ci) {
            q1::element_nodes(grid, ci, cj, loc);
            double ge[4][4] = {};
            for (int q = 0; q < 4; ++q) {
                double ux = 0.0, uy = 0.0;
                for (int n = 0; n < 4; ++n) {
                    const auto id = static_cast<size_t>(loc[n]);
                    ux += tb.dxi[q][n] * sx * u1[id];
                    uy += tb.deta[q][n] * sy * u1[id];
                }
                for (int m = 0; m < 4; ++m) {
                    const auto id = static_cast<size_t>(loc[m]);
                    const double c = beta * std::exp(beta * u1[id]);
                    const double vx = c * (kstar.k11[id] * ux + kstar.k12[id] * uy);
                    const double vy = c * (kstar.k12[id] * ux + kstar.k22[id] * uy);
                    const double w = detJ * tb.N[q][m];
                    for (int a = 0; a < 4; ++a)
                        ge[a][m] += w * (tb.dxi[q][a] * sx * vx + tb.deta[q][a] * sy * vy);
                }
            }
            for (int a = 0; a < 4; ++a)
                for (int m = 0; m < 4; ++m) t.add(loc[a], loc[m], ge[a][m]);
        }
    return t.build();
}

}  // namespace fem_detail

struct NewtonReport {
    int iterations = 0;
    std::vector<double> residuals;  // 2-norm of the coupled residual, per check
    bool converged = false;
};

struct NonlinearSolveResult {
    DualTrajectory traj;
    std::vector<NewtonReport> newton;  // one per time step
};

/// Backward-Euler march of the coupled model with
/// kappa1(x, u1) = kappa1*(x) * exp(beta*u1). Each step runs the
/// sequential Newton procedure: solve the (linear) u2 equation at the
/// current u1 iterate, then one Jacobian solve for the u1 update,
/// repeating until the coupled residual 2-norm drops below newton_tol.
[[nodiscard]] inline NonlinearSolveResult solve_dual_nonlinear(
    const StructuredGrid& grid, const CoefficientFields& coeffs, double beta, double tau,
    int n_steps, double newton_tol = 1e-10, int max_iter = 20) {
    const DirichletMap dm(grid);
    const SparseMatrix M = assemble_mass(grid);
    const SparseMatrix Mi = restrict_to(M, dm.interior);
    const int n = static_cast<int>(dm.interior.size());

    NonlinearSolveResult out;
    out.traj = DualTrajectory(grid, tau, n_steps);
    out.newton.resize(static_cast<size_t>(n_steps));

    for (int k = 1; k <= n_steps; ++k) {
        const auto& sigma = coeffs.sigma_at(k);
        fem_detail::check_sigma_size(sigma, grid);
        const auto sigma_int = dm.restrict_vec(sigma);
        const SparseMatrix A2i =
            restrict_to(assemble_stiffness(grid, coeffs.kappa2_at(k)), dm.interior);
        const SparseMatrix S2 = fem_detail::implicit_operator(Mi, A2i, &sigma_int, tau);

        const auto F1 = M.apply(coeffs.f_at(k));
        std::vector<double> F2;
        if (coeffs.has_f2()) F2 = M.apply(coeffs.f2_at(k));

        const auto& u1_prev = out.traj.u1[static_cast<size_t>(k - 1)];
        const auto& u2_prev = out.traj.u2[static_cast<size_t>(k - 1)];
        std::vector<double> u1 = u1_prev;  // warm start from the previous step
        std::vector<double> u2 = u2_prev;
        auto& rep = out.newton[static_cast<size_t>(k - 1)];

        for (int it = 0;; ++it) {
            // u2 equation is linear in u2 for fixed u1:
            // (M/tau + A2 + Ds*M) u2 = M u2_prev/tau + Ds*M u1 + F2
            const auto mu2p = M.apply(u2_prev);
            const auto mu1 = M.apply(u1);
            std::vector<double> rhs2(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                const auto id = static_cast<size_t>(dm.interior[static_cast<size_t>(i)]);
                rhs2[static_cast<size_t>(i)] = mu2p[id] / tau +
                                               sigma[id] * mu1[id] +
                                               (coeffs.has_f2() ? F2[id] : 0.0);
            }
            std::vector<double> u2_int;
            const auto rep2 = fem_detail::solve_csr(S2, rhs2, u2_int, 1e-12, false);
            if (!rep2.converged)
                throw std::runtime_error("solve_dual_nonlinear: u2 solve stalled at step " +
                                         std::to_string(k));
            u2 = dm.expand(u2_int, grid.node_count());

            // Coupled residual at (u1, u2), interior rows.
            const NodalTensorField k1 = fem_detail::scaled_kappa1(coeffs.kappa1, beta, u1);
            const SparseMatrix A1 = assemble_stiffness(grid, k1);
            const auto a1u = A1.apply(u1);
            const auto mu1d = M.apply(u1);
            const auto mu2d = M.apply(u2);
            const auto mu1p = M.apply(u1_prev);
            double rnorm2 = 0.0;
            std::vector<double> R1(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                const auto id = static_cast<size_t>(dm.interior[static_cast<size_t>(i)]);
                const double ex = sigma[id] * (mu1d[id] - mu2d[id]);
                const double r1 = (mu1d[id] - mu1p[id]) / tau + a1u[id] + ex - F1[id];
                R1[static_cast<size_t>(i)] = r1;
                rnorm2 += r1 * r1;
            }
            // Row-2 residual: recompute directly (u2 solve leaves it at
            // solver precision, but it is part of the reported norm).
            {
                const auto a2u = A2i.apply(dm.restrict_vec(u2));
                const auto mu2i = Mi.apply(dm.restrict_vec(u2));
                const auto mu2pi = Mi.apply(dm.restrict_vec(u2_prev));
                const auto mu1i = Mi.apply(dm.restrict_vec(u1));
                for (int i = 0; i < n; ++i) {
                    const double ex = sigma_int[static_cast<size_t>(i)] *
                                      (mu2i[static_cast<size_t>(i)] - mu1i[static_cast<size_t>(i)]);
                    const double r2 = (mu2i[static_cast<size_t>(i)] - mu2pi[static_cast<size_t>(i)]) / tau +
                                      a2u[static_cast<size_t>(i)] + ex -
                                      (coeffs.has_f2()
                                           ? F2[static_cast<size_t>(dm.interior[static_cast<size_t>(i)])]
                                           : 0.0);
                    rnorm2 += r2 * r2;
                }
            }
            const double rnorm = std::sqrt(rnorm2);
            rep.residuals.push_back(rnorm);
            if (rnorm <= newton_tol) {
                rep.converged = true;
                break;
            }
            if (it >= max_iter) {
                std::string hist;
                for (double r : rep.residuals) hist += " " + std::to_string(r);
                throw std::runtime_error("solve_dual_nonlinear: Newton stalled at step " +
                                         std::to_string(k) + "; residual history:" + hist);
            }

            // Jacobian solve for the u1 update:
            // (M/tau + A1(u1) + G(u1) + Ds*M) du1 = -R1
            const SparseMatrix G = fem_detail::assemble_newton_extra(grid, coeffs.kappa1, beta, u1);
            const SparseMatrix J = fem_detail::csr_sum(
                fem_detail::implicit_operator(Mi, restrict_to(A1, dm.interior), &sigma_int, tau),
                restrict_to(G, dm.interior));
            std::vector<double> neg(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) neg[static_cast<size_t>(i)] = -R1[static_cast<size_t>(i)];
            std::vector<double> du;
            const auto repj = fem_detail::solve_csr(J, neg, du, 1e-12, false);
            if (!repj.converged)
                throw std::runtime_error("solve_dual_nonlinear: Jacobian solve stalled at step " +
                                         std::to_string(k));
            for (int i = 0; i < n; ++i)
                u1[static_cast<size_t>(dm.interior[static_cast<size_t>(i)])] +=
                    du[static_cast<size_t>(i)];
            rep.iterations = it + 1;
        }
        out.traj.u1[static_cast<size_t>(k)] = u1;
        out.traj.u2[static_cast<size_t>(k)] = u2;
    }
    return out;
}

/// Single-continuum fine-scale reference: backward Euler with
/// kappa(x, u) = kappa(x) * exp(beta*u) (cellwise kappa, exp evaluated at
/// quadrature points). beta = 0 takes the plain SPD path.
[[nodiscard]] inline std::vector<NodalField> solve_fine_reference(const ScalarCellField& kappa,
                                                                  double beta,
                                                                  const std::vector<double>& f_nodal,
                                                                  double tau, int n_steps,
                                                                  double newton_tol = 1e-10,
                                                                  int max_iter = 20) {
    const StructuredGrid& grid = kappa.grid;
    if (static_cast<int>(f_nodal.size()) != grid.node_count())
        throw std::invalid_argument("solve_fine_reference: source length != node count");
    const DirichletMap dm(grid);
    const SparseMatrix M = assemble_mass(grid);
    const SparseMatrix Mi = restrict_to(M, dm.interior);
    const int n = static_cast<int>(dm.interior.size());
    const auto F = M.apply(f_nodal);
    std::vector<double> F_int(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        F_int[static_cast<size_t>(i)] = F[static_cast<size_t>(dm.interior[static_cast<size_t>(i)])];

    std::vector<NodalField> snaps;
    snaps.reserve(static_cast<size_t>(n_steps));
    std::vector<double> u(static_cast<size_t>(grid.node_count()), 0.0);

    if (beta == 0.0) {
        const SparseMatrix Ai = restrict_to(assemble_stiffness_cell(grid, kappa), dm.interior);
        const SparseMatrix S = fem_detail::implicit_operator(Mi, Ai, nullptr, tau);
        const auto d = S.diagonal();
        auto op = [&S](const double* in, double* out) { S.apply(in, out); };
        std::vector<double> u_int(static_cast<size_t>(n), 0.0);
        for (int k = 1; k <= n_steps; ++k) {
            auto rhs = Mi.apply(u_int);
            for (int i = 0; i < n; ++i)
                rhs[static_cast<size_t>(i)] = rhs[static_cast<size_t>(i)] / tau +
                                              F_int[static_cast<size_t>(i)];
            const auto rep = cg_solve(n, op, rhs, u_int, 1e-10, 10 * n, &d);
            if (!rep.converged)
                throw std::runtime_error("solve_fine_reference: CG stalled at step " +
                                         std::to_string(k) + ", residual " +
                                         std::to_string(rep.residual));
            NodalField snap(grid);
            snap.values = dm.expand(u_int, grid.node_count());
            snaps.push_back(std::move(snap));
        }
        return snaps;
    }

    // Newton path: quadrature-point coefficient kappa_cell * exp(beta*u(qp)).
    const auto& tb = q1::tables();
    const double detJ = grid.hx * grid.hy / 4.0;
    const double sx = 2.0 / grid.hx, sy = 2.0 / grid.hy;
    auto assemble_A_G = [&](const std::vector<double>& uu, SparseMatrix& A, SparseMatrix& G) {
        TripletBuilder ta(grid.node_count(), grid.node_count());
        TripletBuilder tg(grid.node_count(), grid.node_count());
        int loc[4];
        for (int cj = 0; cj < grid.ny; ++cj)
            for (int ci = 0; ci < grid.nx; ++ci) {
                q1::element_nodes(grid, ci, cj, loc);
                const double kc = kappa.values[static_cast<size_t>(grid.cell_id(ci, cj))];
                double ae[4][4] = {}, ge[4][4] = {};
                for (int q = 0; q < 4; ++q) {
                    double uq = 0.0, ux = 0.0, uy = 0.0;
                    for (int m = 0; m < 4; ++m) {
                        const auto id = static_cast<size_t>(loc[m]);
                        uq += tb.N[q][m] * uu[id];
                        ux += tb.dxi[q][m] * sx * uu[id];
                        uy += tb.deta[q][m] * sy * uu[id];
                    }
                    const double kq = kc * std::exp(beta * uq);
                    for (int a = 0; a < 4; ++a) {
                        const double gax = tb.dxi[q][a] * sx, gay = tb.deta[q][a] * sy;
                        for (int b = 0; b < 4; ++b)
                            ae[a][b] += detJ * kq *
                                        (gax * tb.dxi[q][b] * sx + gay * tb.deta[q][b] * sy);
                        const double gdotu = gax * ux + gay * uy;
                        for (int m = 0; m < 4; ++m)
                            ge[a][m] += detJ * beta * kq * tb.N[q][m] * gdotu;
                    }
                }
                for (int a = 0; a < 4; ++a)
                    for (int b = 0; b < 4; ++b) {
                        ta.add(loc[a], loc[b], ae[a][b]);
                        tg.add(loc[a], loc[b], ge[a][b]);
                    }
            }
        A = ta.build();
        G = tg.build();
    };

    for (int k = 1; k <= n_steps; ++k) {
        const std::vector<double> u_prev = u;
        const auto mup = M.apply(u_prev);
        for (int it = 0;; ++it) {
            SparseMatrix A, G;
            assemble_A_G(u, A, G);
            const auto au = A.apply(u);
            const auto mu = M.apply(u);
            std::vector<double> R(static_cast<size_t>(n));
            double rnorm2 = 0.0;
            for (int i = 0; i < n; ++i) {
                const auto id = static_cast<size_t>(dm.interior[static_cast<size_t>(i)]);
                const double r = (mu[id] - mup[id]) / tau + au[id] - F[id];
                R[static_cast<size_t>(i)] = r;
                rnorm2 += r * r;
            }
            if (std::sqrt(rnorm2) <= newton_tol) break;
            if (it >= max_iter)
                throw std::runtime_error("solve_fine_reference: Newton stalled at step " +
                                         std::to_string(k) + ", residual " +
                                         std::to_string(std::sqrt(rnorm2)));
            const SparseMatrix J = fem_detail::csr_sum(
                fem_detail::implicit_operator(Mi, restrict_to(A, dm.interior), nullptr, tau),
                restrict_to(G, dm.interior));
            std::vector<double> neg(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) neg[static_cast<size_t>(i)] = -R[static_cast<size_t>(i)];
            std::vector<double> du;
            const auto repj = fem_detail::solve_csr(J, neg, du, 1e-12, false);
            if (!repj.converged)
                throw std::runtime_error("solve_fine_reference: Jacobian solve stalled at step " +
                                         std::to_string(k));
            for (int i = 0; i < n; ++i)
                u[static_cast<size_t>(dm.interior[static_cast<size_t>(i)])] +=
                    du[static_cast<size_t>(i)];
        }
        NodalField snap(grid);
        snap.values = u;
        snaps.push_back(std::move(snap));
    }
    return snaps;
}

}  // namespace mucor

#endif  // MUCOR_FEM_NONLINEAR_HPP
