#ifndef MUCOR_HOMOGENIZE_HPP
#define MUCOR_HOMOGENIZE_HPP

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mucor/fem.hpp"
#include "mucor/fields.hpp"
#include "mucor/grid.hpp"
#include "mucor/parallel.hpp"
#include "mucor/sparse.hpp"

namespace mucor {

/// Periodic correctors on one coarse block's fine subgrid. Values are
/// stored on the full (nx+1)x(ny+1) node lattice with the right/top rows
/// duplicating the left/bottom ones (periodic identification), and are
/// normalized to zero mean over the cell.
struct CellProblemSolution {
    int block = -1;
    int nx = 0, ny = 0;
    std::vector<double> n1, n2;  // correctors for the x and y directions

    [[nodiscard]] double value(const std::vector<double>& c, int i, int j) const {
        return c[static_cast<size_t>(j * (nx + 1) + i)];
    }
};

namespace homog_detail {

/// Exact element integrals of corrector derivatives on a hx-by-hy cell,
/// local node order (0,0),(1,0),(0,1),(1,1):
///   int dN/dx = hy/2 * (-v0 + v1 - v2 + v3)
///   int dN/dy = hx/2 * (-v0 - v1 + v2 + v3)
inline double int_dx(const double v[4], double hy) {
    return 0.5 * hy * (-v[0] + v[1] - v[2] + v[3]);
}
inline double int_dy(const double v[4], double hx) {
    return 0.5 * hx * (-v[0] - v[1] + v[2] + v[3]);
}

}  // namespace homog_detail

/// Solve the two periodic cell problems on one block:
///   -div(kappa grad N_l) = d(kappa)/dy_l  (weak form, periodic, zero mean)
/// The block is treated as the periodicity cell; the effective tensor is
/// invariant under uniform rescaling, so the block's own grid coordinates
/// serve directly.
[[nodiscard]] inline CellProblemSolution solve_cell_problem(const ScalarCellField& block_kappa,
                                                            int block_index = -1) {
    const StructuredGrid& g = block_kappa.grid;
    if (g.nx < 2 || g.ny < 2)
        throw std::invalid_argument("solve_cell_problem: block subgrid must be at least 2x2 cells");
    const int nx = g.nx, ny = g.ny;
    const int n_unknown = nx * ny;  // periodic node lattice
    const auto pid = [nx](int i, int j) { return j * nx + i; };

    // Assemble the periodic stiffness matrix and both right-hand sides.
    const auto& tb = q1::tables();
    const double detJ = g.hx * g.hy / 4.0;
    const double sx = 2.0 / g.hx, sy = 2.0 / g.hy;
    double eref[4][4];  // unit-coefficient element stiffness
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            double s = 0.0;
            for (int q = 0; q < 4; ++q)
                s += tb.dxi[q][a] * sx * tb.dxi[q][b] * sx + tb.deta[q][a] * sy * tb.deta[q][b] * sy;
            eref[a][b] = detJ * s;
        }
    TripletBuilder t(n_unknown, n_unknown);
    std::vector<double> rhs1(static_cast<size_t>(n_unknown), 0.0);
    std::vector<double> rhs2(static_cast<size_t>(n_unknown), 0.0);
    for (int cj = 0; cj < ny; ++cj)
        for (int ci = 0; ci < nx; ++ci) {
            const double k = block_kappa.values[static_cast<size_t>(g.cell_id(ci, cj))];
            const int ip = (ci + 1) % nx, jp = (cj + 1) % ny;
            const int loc[4] = {pid(ci, cj), pid(ip, cj), pid(ci, jp), pid(ip, jp)};
            for (int a = 0; a < 4; ++a) {
                for (int b = 0; b < 4; ++b) t.add(loc[a], loc[b], k * eref[a][b]);
                // -k * int_e dpsi_a/dy_l, exact for Q1
                double s1 = 0.0, s2 = 0.0;
                for (int q = 0; q < 4; ++q) {
                    s1 += detJ * tb.dxi[q][a] * sx;
                    s2 += detJ * tb.deta[q][a] * sy;
                }
                rhs1[static_cast<size_t>(loc[a])] -= k * s1;
                rhs2[static_cast<size_t>(loc[a])] -= k * s2;
            }
        }
    const SparseMatrix A = t.build();
    const auto diag = A.diagonal();
    auto op = [&A](const double* in, double* out) { A.apply(in, out); };
    auto project = [n_unknown](std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= n_unknown;
        for (double& x : v) x -= mean;
    };

    auto solve_one = [&](std::vector<double>& rhs, const char* which) {
        project(rhs);  // compatibility: rhs must be orthogonal to constants
        std::vector<double> x(static_cast<size_t>(n_unknown), 0.0);
        const auto rep =
            cg_solve(n_unknown, op, rhs, x, 1e-10, 10 * n_unknown, &diag,
                     std::function<void(std::vector<double>&)>(project));
        if (!rep.converged)
            throw std::runtime_error(std::string("solve_cell_problem: CG stalled on corrector ") +
                                     which + " after " + std::to_string(rep.iterations) +
                                     " iterations, residual " + std::to_string(rep.residual));
        project(x);  // zero-mean normalization
        return x;
    };
    const auto x1 = solve_one(rhs1, "N1");
    const auto x2 = solve_one(rhs2, "N2");

    CellProblemSolution sol;
    sol.block = block_index;
    sol.nx = nx;
    sol.ny = ny;
    const auto unwrap = [&](const std::vector<double>& x) {
        std::vector<double> full(static_cast<size_t>((nx + 1) * (ny + 1)));
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i <= nx; ++i)
                full[static_cast<size_t>(j * (nx + 1) + i)] =
                    x[static_cast<size_t>(pid(i % nx, j % ny))];
        return full;
    };
    sol.n1 = unwrap(x1);
    sol.n2 = unwrap(x2);
    return sol;
}

/// Effective tensor of one block:
///   kstar_cl = |Y|^-1 int kappa * (delta_cl + dN_l/dy_c)
/// evaluated with exact per-element integrals. The off-diagonal pair is
/// equal up to solver tolerance and is stored symmetrized.
[[nodiscard]] inline std::array<double, 3> effective_tensor(const ScalarCellField& block_kappa,
                                                            const CellProblemSolution& sol) {
    const StructuredGrid& g = block_kappa.grid;
    if (sol.nx != g.nx || sol.ny != g.ny)
        throw std::invalid_argument("effective_tensor: correctors do not match the block");
    double k11 = 0.0, k12 = 0.0, k21 = 0.0, k22 = 0.0;
    for (int cj = 0; cj < g.ny; ++cj)
        for (int ci = 0; ci < g.nx; ++ci) {
            const double k = block_kappa.values[static_cast<size_t>(g.cell_id(ci, cj))];
            double v1[4], v2[4];
            const int ids[4][2] = {{ci, cj}, {ci + 1, cj}, {ci, cj + 1}, {ci + 1, cj + 1}};
            for (int a = 0; a < 4; ++a) {
                v1[a] = sol.value(sol.n1, ids[a][0], ids[a][1]);
                v2[a] = sol.value(sol.n2, ids[a][0], ids[a][1]);
            }
            const double area = g.hx * g.hy;
            k11 += k * (area + homog_detail::int_dx(v1, g.hy));
            k21 += k * homog_detail::int_dy(v1, g.hx);
            k12 += k * homog_detail::int_dx(v2, g.hy);
            k22 += k * (area + homog_detail::int_dy(v2, g.hx));
        }
    const double Y = 1.0;  // block grid spans the unit cell: |Y| = nx*hx * ny*hy
    k11 /= Y;
    k12 /= Y;
    k21 /= Y;
    k22 /= Y;
    const double off = 0.5 * (k12 + k21);
    if (!(k11 > 0.0 && k22 > 0.0 && k11 * k22 - off * off > 0.0))
        throw std::runtime_error(
            "effective_tensor: non-SPD result (k11=" + std::to_string(k11) +
            ", k22=" + std::to_string(k22) + ", k12=" + std::to_string(off) + ")");
    return {k11, off, k22};
}

/// Per-block homogenization of a fine permeability field. Blocks are
/// independent and solved in parallel; results merge by block index.
/// R=1 blocks are single cells, where the effective tensor is the cell
/// value itself.
[[nodiscard]] inline TensorCellField upscale(const ScalarCellField& fine_kappa,
                                             const StructuredGrid& coarse) {
    const StructuredGrid& fg = fine_kappa.grid;
    if (!fg.has_parent() || fg.parent_nx != coarse.nx || fg.parent_ny != coarse.ny)
        throw std::invalid_argument("upscale: fine grid does not refine the coarse grid");
    const int R = fg.refinement;
    TensorCellField out(coarse);
    std::vector<std::string> errors(static_cast<size_t>(coarse.cell_count()));
    parallel_for(coarse.cell_count(), [&](int b) {
        try {
            if (R == 1) {
                const double k = fine_kappa.values[static_cast<size_t>(b)];
                out.k11[static_cast<size_t>(b)] = k;
                out.k12[static_cast<size_t>(b)] = 0.0;
                out.k22[static_cast<size_t>(b)] = k;
                return;
            }
            const StructuredGrid bg = build_grid(R, R);
            std::vector<double> kv(static_cast<size_t>(R) * R);
            const auto cells = fg.cells_in_block(b);
            for (size_t c = 0; c < cells.size(); ++c)
                kv[c] = fine_kappa.values[static_cast<size_t>(cells[c])];
            const ScalarCellField block(bg, std::move(kv));
            const auto sol = solve_cell_problem(block, b);
            const auto ks = effective_tensor(block, sol);
            out.k11[static_cast<size_t>(b)] = ks[0];
            out.k12[static_cast<size_t>(b)] = ks[1];
            out.k22[static_cast<size_t>(b)] = ks[2];
        } catch (const std::exception& e) {
            errors[static_cast<size_t>(b)] = e.what();
        }
    });
    for (int b = 0; b < coarse.cell_count(); ++b)
        if (!errors[static_cast<size_t>(b)].empty())
            throw std::runtime_error("upscale: block " + std::to_string(b) + ": " +
                                     errors[static_cast<size_t>(b)]);
    out.validate();
    return out;
}

/// Push per-cell tensors to nodes with the fixed 2x2 averaging kernel
/// (interior nodes: mean of 4 neighbors; edges/corners: mean of existing
/// neighbors). Constants are preserved.
[[nodiscard]] inline NodalTensorField interpolate_to_nodes(const TensorCellField& tensors) {
    NodalTensorField out(tensors.grid);
    out.k11 = kernel_to_nodes(tensors.grid, tensors.k11);
    out.k12 = kernel_to_nodes(tensors.grid, tensors.k12);
    out.k22 = kernel_to_nodes(tensors.grid, tensors.k22);
    return out;
}

}  // namespace mucor

#endif  // MUCOR_HOMOGENIZE_HPP
