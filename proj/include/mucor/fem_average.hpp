#ifndef MUCOR_FEM_AVERAGE_HPP
#define MUCOR_FEM_AVERAGE_HPP

// Coarse-block averaging of fine-scale snapshots. Included via fem.hpp.

#include <stdexcept>
#include <vector>

#include "mucor/fields.hpp"
#include "mucor/grid.hpp"

namespace mucor {

/// Area-weighted mean of a fine nodal field over each coarse block:
/// trapezoid weights, which equal the exact integral mean of the bilinear
/// interpolant. Exact for linear fields.
[[nodiscard]] inline std::vector<double> block_means(const NodalField& fine,
                                                     const StructuredGrid& coarse) {
    const StructuredGrid& fg = fine.grid;
    if (!fg.has_parent() || fg.parent_nx != coarse.nx || fg.parent_ny != coarse.ny)
        throw std::invalid_argument("block_means: fine grid does not refine the coarse grid");
    const int R = fg.refinement;
    std::vector<double> means(static_cast<size_t>(coarse.cell_count()), 0.0);
    for (int bj = 0; bj < coarse.ny; ++bj)
        for (int bi = 0; bi < coarse.nx; ++bi) {
            double acc = 0.0, wsum = 0.0;
            for (int j = 0; j <= R; ++j)
                for (int i = 0; i <= R; ++i) {
                    double w = 1.0;
                    if (i == 0 || i == R) w *= 0.5;
                    if (j == 0 || j == R) w *= 0.5;
                    acc += w * fine.values[static_cast<size_t>(
                                   fg.node_id(bi * R + i, bj * R + j))];
                    wsum += w;
                }
            means[static_cast<size_t>(coarse.cell_id(bi, bj))] = acc / wsum;
        }
    return means;
}

/// Fixed 2x2 averaging kernel from per-cell values to nodes: interior
/// nodes average their 4 adjacent cells, edge/corner nodes the existing
/// 2 or 1. Preserves constants.
[[nodiscard]] inline std::vector<double> kernel_to_nodes(const StructuredGrid& grid,
                                                         const std::vector<double>& cell_values) {
    if (static_cast<int>(cell_values.size()) != grid.cell_count())
        throw std::invalid_argument("kernel_to_nodes: value count != cell count");
    std::vector<double> nodal(static_cast<size_t>(grid.node_count()), 0.0);
    for (int j = 0; j <= grid.ny; ++j)
        for (int i = 0; i <= grid.nx; ++i) {
            double acc = 0.0;
            int cnt = 0;
            const int cis[2] = {i - 1, i};
            const int cjs[2] = {j - 1, j};
            for (int cj : cjs)
                for (int ci : cis)
                    if (ci >= 0 && ci < grid.nx && cj >= 0 && cj < grid.ny) {
                        acc += cell_values[static_cast<size_t>(grid.cell_id(ci, cj))];
                        ++cnt;
                    }
            nodal[static_cast<size_t>(grid.node_id(i, j))] = acc / cnt;
        }
    return nodal;
}

/// Coarse representation of a fine snapshot: per-block means pushed to
/// coarse nodes with the 2x2 kernel. The result lives in the coarse
/// solution space, so Dirichlet-constrained (boundary) entries are zero.
[[nodiscard]] inline NodalField coarse_average(const NodalField& fine,
                                               const StructuredGrid& coarse) {
    NodalField out(coarse);
    out.values = kernel_to_nodes(coarse, block_means(fine, coarse));
    out.apply_dirichlet();
    return out;
}

}  // namespace mucor

#endif  // MUCOR_FEM_AVERAGE_HPP
