#ifndef MUCOR_FEM_HPP
#define MUCOR_FEM_HPP

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mucor/fields.hpp"
#include "mucor/grid.hpp"
#include "mucor/sparse.hpp"

namespace mucor {

// ---------------------------------------------------------------------------
// Q1 reference element, 2x2 Gauss quadrature.
// Local node order: (0,0), (1,0), (0,1), (1,1); exact for the bilinear
// mass integrand and for stiffness with bilinear coefficients.
// ---------------------------------------------------------------------------
namespace q1 {

struct Tables {
    double N[4][4];     // [qp][node]
    double dxi[4][4];   // dN/dxi
    double deta[4][4];  // dN/deta
};

inline const Tables& tables() {
    static const Tables t = [] {
        Tables tb{};
        const double g = 1.0 / std::sqrt(3.0);
        const double qx[4] = {-g, g, -g, g};
        const double qy[4] = {-g, -g, g, g};
        for (int q = 0; q < 4; ++q) {
            const double xi = qx[q], eta = qy[q];
            tb.N[q][0] = 0.25 * (1 - xi) * (1 - eta);
            tb.N[q][1] = 0.25 * (1 + xi) * (1 - eta);
            tb.N[q][2] = 0.25 * (1 - xi) * (1 + eta);
            tb.N[q][3] = 0.25 * (1 + xi) * (1 + eta);
            tb.dxi[q][0] = -0.25 * (1 - eta);
            tb.dxi[q][1] = 0.25 * (1 - eta);
            tb.dxi[q][2] = -0.25 * (1 + eta);
            tb.dxi[q][3] = 0.25 * (1 + eta);
            tb.deta[q][0] = -0.25 * (1 - xi);
            tb.deta[q][1] = -0.25 * (1 + xi);
            tb.deta[q][2] = 0.25 * (1 - xi);
            tb.deta[q][3] = 0.25 * (1 + xi);
        }
        return tb;
    }();
    return t;
}

inline void element_nodes(const StructuredGrid& g, int ci, int cj, int loc[4]) {
    loc[0] = g.node_id(ci, cj);
    loc[1] = g.node_id(ci + 1, cj);
    loc[2] = g.node_id(ci, cj + 1);
    loc[3] = g.node_id(ci + 1, cj + 1);
}

}  // namespace q1

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// Consistent Q1 mass matrix; total sum equals |Omega| = 1.
[[nodiscard]] inline SparseMatrix assemble_mass(const StructuredGrid& grid) {
    const auto& tb = q1::tables();
    const double detJ = grid.hx * grid.hy / 4.0;
    TripletBuilder t(grid.node_count(), grid.node_count());
    int loc[4];
    for (int cj = 0; cj < grid.ny; ++cj)
        for (int ci = 0; ci < grid.nx; ++ci) {
            q1::element_nodes(grid, ci, cj, loc);
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) {
                    double s = 0.0;
                    for (int q = 0; q < 4; ++q) s += tb.N[q][a] * tb.N[q][b];
                    t.add(loc[a], loc[b], detJ * s);
                }
        }
    return t.build();
}

/// Stiffness with a nodal 2x2 tensor coefficient, interpolated bilinearly
/// to quadrature points inside each element. Row sums vanish (constants in
/// the kernel) until Dirichlet rows are eliminated.
[[nodiscard]] inline SparseMatrix assemble_stiffness(const StructuredGrid& grid,
                                                     const NodalTensorField& kappa) {
    kappa.validate_spd();
    const auto& tb = q1::tables();
    const double detJ = grid.hx * grid.hy / 4.0;
    const double sx = 2.0 / grid.hx, sy = 2.0 / grid.hy;
    TripletBuilder t(grid.node_count(), grid.node_count());
    int loc[4];
    for (int cj = 0; cj < grid.ny; ++cj)
        for (int ci = 0; ci < grid.nx; ++ci) {
            q1::element_nodes(grid, ci, cj, loc);
            double ke[4][4] = {};
            for (int q = 0; q < 4; ++q) {
                double k11 = 0.0, k12 = 0.0, k22 = 0.0;
                for (int n = 0; n < 4; ++n) {
                    const auto id = static_cast<size_t>(loc[n]);
                    k11 += tb.N[q][n] * kappa.k11[id];
                    k12 += tb.N[q][n] * kappa.k12[id];
                    k22 += tb.N[q][n] * kappa.k22[id];
                }
                double gx[4], gy[4];
                for (int n = 0; n < 4; ++n) {
                    gx[n] = tb.dxi[q][n] * sx;
                    gy[n] = tb.deta[q][n] * sy;
                }
                for (int a = 0; a < 4; ++a)
                    for (int b = 0; b < 4; ++b)
                        ke[a][b] += detJ * (k11 * gx[a] * gx[b] + k22 * gy[a] * gy[b] +
                                            k12 * (gx[a] * gy[b] + gy[a] * gx[b]));
            }
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) t.add(loc[a], loc[b], ke[a][b]);
        }
    return t.build();
}

/// Stiffness with a cellwise-constant scalar coefficient (fine-scale solver).
[[nodiscard]] inline SparseMatrix assemble_stiffness_cell(const StructuredGrid& grid,
                                                          const ScalarCellField& kappa) {
    const auto& tb = q1::tables();
    const double detJ = grid.hx * grid.hy / 4.0;
    const double sx = 2.0 / grid.hx, sy = 2.0 / grid.hy;
    TripletBuilder t(grid.node_count(), grid.node_count());
    int loc[4];
    for (int cj = 0; cj < grid.ny; ++cj)
        for (int ci = 0; ci < grid.nx; ++ci) {
            q1::element_nodes(grid, ci, cj, loc);
            const double k = kappa.values[static_cast<size_t>(grid.cell_id(ci, cj))];
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) {
                    double s = 0.0;
                    for (int q = 0; q < 4; ++q)
                        s += tb.dxi[q][a] * sx * tb.dxi[q][b] * sx +
                             tb.deta[q][a] * sy * tb.deta[q][b] * sy;
                    t.add(loc[a], loc[b], detJ * k * s);
                }
        }
    return t.build();
}

/// Cotangents of the stiffness bilinear form with respect to the nodal
/// tensor entries: given row vector lam and column vector u (full nodal,
/// zero on the boundary), returns d(lam^T A(kappa) u)/d(kappa_node) per
/// component. Nodes on the boundary receive contributions too: their
/// tensor values shape the coefficient inside adjacent elements.
[[nodiscard]] inline NodalTensorField stiffness_kappa_vjp(const StructuredGrid& grid,
                                                          const std::vector<double>& lam,
                                                          const std::vector<double>& u) {
    const auto& tb = q1::tables();
    const double detJ = grid.hx * grid.hy / 4.0;
    const double sx = 2.0 / grid.hx, sy = 2.0 / grid.hy;
    NodalTensorField cot(grid);
    int loc[4];
    for (int cj = 0; cj < grid.ny; ++cj)
        for (int ci = 0; ci < grid.nx; ++ci) {
            q1::element_nodes(grid, ci, cj, loc);
            for (int q = 0; q < 4; ++q) {
                double lx = 0.0, ly = 0.0, ux = 0.0, uy = 0.0;
                for (int n = 0; n < 4; ++n) {
                    const auto id = static_cast<size_t>(loc[n]);
                    lx += tb.dxi[q][n] * sx * lam[id];
                    ly += tb.deta[q][n] * sy * lam[id];
                    ux += tb.dxi[q][n] * sx * u[id];
                    uy += tb.deta[q][n] * sy * u[id];
                }
                const double w11 = detJ * lx * ux;
                const double w22 = detJ * ly * uy;
                const double w12 = detJ * (lx * uy + ly * ux);
                for (int n = 0; n < 4; ++n) {
                    const auto id = static_cast<size_t>(loc[n]);
                    cot.k11[id] += tb.N[q][n] * w11;
                    cot.k12[id] += tb.N[q][n] * w12;
                    cot.k22[id] += tb.N[q][n] * w22;
                }
            }
        }
    return cot;
}

// ---------------------------------------------------------------------------
// Dirichlet handling: the solvers work on interior degrees of freedom only;
// boundary values are identically zero.
// ---------------------------------------------------------------------------
struct DirichletMap {
    std::vector<int> interior;     // interior node ids in grid order
    std::vector<int> full_to_int;  // -1 for boundary nodes

    explicit DirichletMap(const StructuredGrid& grid)
        : interior(grid.interior_nodes()), full_to_int(static_cast<size_t>(grid.node_count()), -1) {
        for (size_t i = 0; i < interior.size(); ++i)
            full_to_int[static_cast<size_t>(interior[i])] = static_cast<int>(i);
    }

    [[nodiscard]] std::vector<double> restrict_vec(const std::vector<double>& full) const {
        std::vector<double> v(interior.size());
        for (size_t i = 0; i < interior.size(); ++i)
            v[i] = full[static_cast<size_t>(interior[i])];
        return v;
    }

    [[nodiscard]] std::vector<double> expand(const std::vector<double>& inner, int node_count) const {
        std::vector<double> full(static_cast<size_t>(node_count), 0.0);
        for (size_t i = 0; i < interior.size(); ++i)
            full[static_cast<size_t>(interior[i])] = inner[i];
        return full;
    }
};

// ---------------------------------------------------------------------------
// Coefficients of the two-continuum model. Time-varying entries hold one
// value per step (evaluated at t_{k+1}, fully implicit); a single entry
// means time-independent.
// ---------------------------------------------------------------------------
struct CoefficientFields {
    NodalTensorField kappa1;                   // homogenized tensor, static
    std::vector<NodalTensorField> kappa2;      // second-continuum tensor
    std::vector<std::vector<double>> sigma;    // nodal transfer coefficient
    std::vector<std::vector<double>> f;        // nodal source, first continuum
    std::vector<std::vector<double>> f2;       // optional source, second continuum

    template <class T>
    static const T& at_step(const std::vector<T>& seq, int k) {
        if (seq.empty()) throw std::logic_error("CoefficientFields: empty sequence");
        return seq.size() == 1 ? seq[0] : seq.at(static_cast<size_t>(k - 1));
    }
    [[nodiscard]] const NodalTensorField& kappa2_at(int k) const { return at_step(kappa2, k); }
    [[nodiscard]] const std::vector<double>& sigma_at(int k) const { return at_step(sigma, k); }
    [[nodiscard]] const std::vector<double>& f_at(int k) const { return at_step(f, k); }
    [[nodiscard]] bool has_f2() const { return !f2.empty(); }
    [[nodiscard]] const std::vector<double>& f2_at(int k) const { return at_step(f2, k); }
    [[nodiscard]] bool time_dependent() const { return kappa2.size() > 1 || sigma.size() > 1; }
};

/// Nodal values of (u1, u2) at steps 0..N_t; step 0 is the zero initial
/// condition and boundary nodes stay zero. The same container carries
/// adjoint states.
struct DualTrajectory {
    StructuredGrid grid;
    double tau = 0.0;
    int n_steps = 0;
    std::vector<std::vector<double>> u1;  // size n_steps+1, each node_count
    std::vector<std::vector<double>> u2;

    DualTrajectory() = default;
    DualTrajectory(const StructuredGrid& g, double tau_, int n)
        : grid(g),
          tau(tau_),
          n_steps(n),
          u1(static_cast<size_t>(n) + 1, std::vector<double>(static_cast<size_t>(g.node_count()), 0.0)),
          u2(static_cast<size_t>(n) + 1, std::vector<double>(static_cast<size_t>(g.node_count()), 0.0)) {}

    [[nodiscard]] double final_time() const { return tau * n_steps; }
};

enum class SolverKind { automatic, dense, iterative };

/// The coupled backward-Euler system on interior DOFs:
///   [ M/tau + A1 + Ds*M      -Ds*M        ] [u1]   [ M u1_prev / tau + F1 ]
///   [     -Ds*M          M/tau + A2 + Ds*M] [u2] = [ M u2_prev / tau + F2 ]
/// where (Ds*M v)_i = sigma_i (M v)_i. The sign-unconstrained sigma makes
/// the operator nonsymmetric, hence BiCGStab for large systems; small
/// systems are LU-factored exactly, which also gives transposed solves for
/// the adjoint recursion.
struct CoupledSystem {
    int n = 0;  // interior dof count per continuum
    double tau = 0.0;
    const SparseMatrix* Mi = nullptr;
    SparseMatrix A1i, A2i;
    std::vector<double> sigma_int;
    SolverKind kind = SolverKind::automatic;
    double rel_tol = 1e-10;

    mutable std::optional<DenseLu> lu;  // cached factorization

    [[nodiscard]] bool use_dense() const {
        if (kind == SolverKind::dense) return true;
        if (kind == SolverKind::iterative) return false;
        return 2 * n <= 1024;
    }

    void apply(const double* x, double* y) const {
        const double* x1 = x;
        const double* x2 = x + n;
        std::vector<double> m1(static_cast<size_t>(n)), m2(static_cast<size_t>(n));
        Mi->apply(x1, m1.data());
        Mi->apply(x2, m2.data());
        std::vector<double> a1(static_cast<size_t>(n)), a2(static_cast<size_t>(n));
        A1i.apply(x1, a1.data());
        A2i.apply(x2, a2.data());
        for (int i = 0; i < n; ++i) {
            const double ex = sigma_int[static_cast<size_t>(i)] *
                              (m1[static_cast<size_t>(i)] - m2[static_cast<size_t>(i)]);
            y[i] = m1[static_cast<size_t>(i)] / tau + a1[static_cast<size_t>(i)] + ex;
            y[n + i] = m2[static_cast<size_t>(i)] / tau + a2[static_cast<size_t>(i)] - ex;
        }
    }

    /// Transpose action: (Ds*M)^T = M*Ds, i.e. scale first, then mass.
    void apply_transpose(const double* x, double* y) const {
        const double* x1 = x;
        const double* x2 = x + n;
        std::vector<double> s(static_cast<size_t>(n)), ms(static_cast<size_t>(n));
        std::vector<double> m1(static_cast<size_t>(n)), m2(static_cast<size_t>(n));
        Mi->apply(x1, m1.data());
        Mi->apply(x2, m2.data());
        for (int i = 0; i < n; ++i)
            s[static_cast<size_t>(i)] = sigma_int[static_cast<size_t>(i)] * (x1[i] - x2[i]);
        Mi->apply(s.data(), ms.data());
        std::vector<double> a1(static_cast<size_t>(n)), a2(static_cast<size_t>(n));
        A1i.apply_transpose_add(x1, a1.data());  // A symmetric, kept for clarity
        A2i.apply_transpose_add(x2, a2.data());
        for (int i = 0; i < n; ++i) {
            y[i] = m1[static_cast<size_t>(i)] / tau + a1[static_cast<size_t>(i)] +
                   ms[static_cast<size_t>(i)];
            y[n + i] = m2[static_cast<size_t>(i)] / tau + a2[static_cast<size_t>(i)] -
                       ms[static_cast<size_t>(i)];
        }
    }

    [[nodiscard]] std::vector<double> jacobi_diag() const {
        std::vector<double> d(static_cast<size_t>(2 * n), 0.0);
        const auto md = Mi->diagonal();
        const auto a1d = A1i.diagonal();
        const auto a2d = A2i.diagonal();
        for (int i = 0; i < n; ++i) {
            const double sm = sigma_int[static_cast<size_t>(i)] * md[static_cast<size_t>(i)];
            d[static_cast<size_t>(i)] = md[static_cast<size_t>(i)] / tau +
                                        a1d[static_cast<size_t>(i)] + sm;
            d[static_cast<size_t>(n + i)] = md[static_cast<size_t>(i)] / tau +
                                            a2d[static_cast<size_t>(i)] + sm;
            if (d[static_cast<size_t>(i)] == 0.0) d[static_cast<size_t>(i)] = 1.0;
            if (d[static_cast<size_t>(n + i)] == 0.0) d[static_cast<size_t>(n + i)] = 1.0;
        }
        return d;
    }

    void ensure_factored() const {
        if (lu && lu->factored) return;
        DenseLu f(2 * n);
        std::vector<double> e(static_cast<size_t>(2 * n), 0.0), col(static_cast<size_t>(2 * n));
        // column-by-column build keeps this simple; systems here are small
        for (int c = 0; c < 2 * n; ++c) {
            e[static_cast<size_t>(c)] = 1.0;
            apply(e.data(), col.data());
            e[static_cast<size_t>(c)] = 0.0;
            for (int r = 0; r < 2 * n; ++r) f.at(r, c) = col[static_cast<size_t>(r)];
        }
        f.factor();
        lu = std::move(f);
    }

    [[nodiscard]] SolveReport solve(const std::vector<double>& b, std::vector<double>& x,
                                    bool transpose = false) const {
        if (use_dense()) {
            ensure_factored();
            x = b;
            if (transpose)
                lu->solve_transpose(x);
            else
                lu->solve(x);
            return {true, 1, 0.0};
        }
        const auto d = jacobi_diag();
        const int cap = 10 * 2 * n;
        if (transpose) {
            auto op = [this](const double* in, double* out) { apply_transpose(in, out); };
            return bicgstab_solve(2 * n, op, b, x, rel_tol, cap, &d);
        }
        auto op = [this](const double* in, double* out) { apply(in, out); };
        return bicgstab_solve(2 * n, op, b, x, rel_tol, cap, &d);
    }
};

namespace fem_detail {

inline std::vector<double> mass_source(const SparseMatrix& M, const std::vector<double>& f_nodal) {
    return M.apply(f_nodal);
}

inline void check_sigma_size(const std::vector<double>& sigma, const StructuredGrid& g) {
    if (static_cast<int>(sigma.size()) != g.node_count())
        throw std::invalid_argument("sigma: expected one nodal value per node");
}

}  // namespace fem_detail

/// One backward-Euler step of the coupled linear system. States are full
/// nodal vectors (boundary zeros); returns the new (u1, u2).
inline void step_dual_linear(const StructuredGrid& grid, const DirichletMap& dm,
                             const SparseMatrix& M, const CoupledSystem& sys,
                             const std::vector<double>& f_nodal,
                             const std::vector<double>* f2_nodal, double tau,
                             const std::vector<double>& u1_prev, const std::vector<double>& u2_prev,
                             std::vector<double>& u1_next, std::vector<double>& u2_next) {
    const int n = static_cast<int>(dm.interior.size());
    std::vector<double> rhs(static_cast<size_t>(2 * n));
    // M u_prev / tau restricted to interior rows (boundary columns are zero)
    const auto mf1 = M.apply(u1_prev);
    const auto mf2 = M.apply(u2_prev);
    const auto F1 = fem_detail::mass_source(M, f_nodal);
    std::vector<double> F2;
    if (f2_nodal) F2 = fem_detail::mass_source(M, *f2_nodal);
    for (int i = 0; i < n; ++i) {
        const auto id = static_cast<size_t>(dm.interior[static_cast<size_t>(i)]);
        rhs[static_cast<size_t>(i)] = mf1[id] / tau + F1[id];
        rhs[static_cast<size_t>(n + i)] = mf2[id] / tau + (f2_nodal ? F2[id] : 0.0);
    }
    std::vector<double> x;
    const auto rep = sys.solve(rhs, x);
    if (!rep.converged)
        throw std::runtime_error("step_dual_linear: solver stalled at relative residual " +
                                 std::to_string(rep.residual) + " after " +
                                 std::to_string(rep.iterations) + " iterations");
    u1_next.assign(static_cast<size_t>(grid.node_count()), 0.0);
    u2_next.assign(static_cast<size_t>(grid.node_count()), 0.0);
    for (int i = 0; i < n; ++i) {
        u1_next[static_cast<size_t>(dm.interior[static_cast<size_t>(i)])] = x[static_cast<size_t>(i)];
        u2_next[static_cast<size_t>(dm.interior[static_cast<size_t>(i)])] =
            x[static_cast<size_t>(n + i)];
    }
}

/// Work shared by the forward solve and the adjoint recursion: interior
/// mass matrix and per-step coupled operators (one when time-independent).
struct LinearForwardWorkspace {
    StructuredGrid grid;
    DirichletMap dm;
    SparseMatrix M;   // full
    SparseMatrix Mi;  // interior
    std::vector<std::unique_ptr<CoupledSystem>> systems;  // size 1 or n_steps
    SolverKind kind;
    double tau;
    int n_steps;

    LinearForwardWorkspace(const StructuredGrid& g, const CoefficientFields& coeffs, double tau_,
                           int n_steps_, SolverKind kind_ = SolverKind::automatic)
        : grid(g), dm(g), M(assemble_mass(g)), Mi(restrict_to(M, dm.interior)), kind(kind_),
          tau(tau_), n_steps(n_steps_) {
        const SparseMatrix A1 = assemble_stiffness(g, coeffs.kappa1);
        const SparseMatrix A1i = restrict_to(A1, dm.interior);
        const int per_step = coeffs.time_dependent() ? n_steps_ : 1;
        for (int k = 1; k <= per_step; ++k) {
            auto sys = std::make_unique<CoupledSystem>();
            sys->n = static_cast<int>(dm.interior.size());
            sys->tau = tau_;
            sys->Mi = &Mi;
            sys->A1i = A1i;
            const auto& k2 = coeffs.kappa2_at(k);
            fem_detail::check_sigma_size(coeffs.sigma_at(k), g);
            sys->A2i = restrict_to(assemble_stiffness(g, k2), dm.interior);
            sys->sigma_int = dm.restrict_vec(coeffs.sigma_at(k));
            sys->kind = kind_;
            systems.push_back(std::move(sys));
        }
    }

    [[nodiscard]] const CoupledSystem& system_at(int k) const {
        return systems.size() == 1 ? *systems[0] : *systems.at(static_cast<size_t>(k - 1));
    }
};

/// March the coupled linear model from the zero initial state, recording
/// every step.
[[nodiscard]] inline DualTrajectory solve_dual_linear(const LinearForwardWorkspace& ws,
                                                      const CoefficientFields& coeffs) {
    DualTrajectory traj(ws.grid, ws.tau, ws.n_steps);
    for (int k = 1; k <= ws.n_steps; ++k) {
        try {
            step_dual_linear(ws.grid, ws.dm, ws.M, ws.system_at(k), coeffs.f_at(k),
                             coeffs.has_f2() ? &coeffs.f2_at(k) : nullptr, ws.tau,
                             traj.u1[static_cast<size_t>(k - 1)], traj.u2[static_cast<size_t>(k - 1)],
                             traj.u1[static_cast<size_t>(k)], traj.u2[static_cast<size_t>(k)]);
        } catch (const std::exception& e) {
            throw std::runtime_error("solve_dual_linear: step " + std::to_string(k) + ": " +
                                     e.what());
        }
    }
    return traj;
}

[[nodiscard]] inline DualTrajectory solve_dual_linear(const StructuredGrid& grid,
                                                      const CoefficientFields& coeffs, double tau,
                                                      int n_steps,
                                                      SolverKind kind = SolverKind::automatic) {
    LinearForwardWorkspace ws(grid, coeffs, tau, n_steps, kind);
    return solve_dual_linear(ws, coeffs);
}

}  // namespace mucor

#include "mucor/fem_nonlinear.hpp"
#include "mucor/fem_average.hpp"

#endif  // MUCOR_FEM_HPP
