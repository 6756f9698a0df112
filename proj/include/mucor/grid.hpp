#ifndef MUCOR_GRID_HPP
#define MUCOR_GRID_HPP

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mucor {

/// Uniform rectangular mesh on the unit square [0,1]^2.
///
/// Nodes are numbered row-major with the y index outermost:
/// node(i, j) = j*(nx+1) + i, so node 0 is (0,0) and the last node is (1,1).
/// Cells follow the same convention: cell(i, j) = j*nx + i.
///
/// A grid produced by refine() remembers its parent dimensions and the
/// refinement factor so fine cells can be mapped back to coarse blocks.
struct StructuredGrid {
    int nx = 0;  ///< cells along x
    int ny = 0;  ///< cells along y
    double hx = 0.0;
    double hy = 0.0;

    // Set when this grid was produced by refine(); refinement == 1 and
    // parent_nx == 0 otherwise.
    int refinement = 1;
    int parent_nx = 0;
    int parent_ny = 0;

    [[nodiscard]] int node_count() const { return (nx + 1) * (ny + 1); }
    [[nodiscard]] int cell_count() const { return nx * ny; }

    [[nodiscard]] int node_id(int i, int j) const { return j * (nx + 1) + i; }
    [[nodiscard]] int cell_id(int i, int j) const { return j * nx + i; }

    [[nodiscard]] int node_ix(int id) const { return id % (nx + 1); }
    [[nodiscard]] int node_iy(int id) const { return id / (nx + 1); }
    [[nodiscard]] int cell_ix(int id) const { return id % nx; }
    [[nodiscard]] int cell_iy(int id) const { return id / nx; }

    /// Exact float64 node coordinates: node(i,j) = (i*hx, j*hy).
    [[nodiscard]] double node_x(int id) const { return node_ix(id) * hx; }
    [[nodiscard]] double node_y(int id) const { return node_iy(id) * hy; }

    [[nodiscard]] bool is_boundary_node(int id) const {
        const int i = node_ix(id), j = node_iy(id);
        return i == 0 || i == nx || j == 0 || j == ny;
    }

    [[nodiscard]] std::vector<int> interior_nodes() const {
        std::vector<int> ids;
        ids.reserve(std::max(0, (nx - 1) * (ny - 1)));
        for (int j = 1; j < ny; ++j)
            for (int i = 1; i < nx; ++i) ids.push_back(node_id(i, j));
        return ids;
    }

    [[nodiscard]] std::vector<int> boundary_nodes() const {
        std::vector<int> ids;
        for (int id = 0; id < node_count(); ++id)
            if (is_boundary_node(id)) ids.push_back(id);
        return ids;
    }

    [[nodiscard]] bool has_parent() const { return parent_nx > 0; }

    /// Coarse block containing a fine cell. Only valid on refined grids.
    [[nodiscard]] int block_of_cell(int cell) const {
        if (!has_parent()) throw std::logic_error("grid has no parent; block_of_cell undefined");
        const int i = cell_ix(cell) / refinement;
        const int j = cell_iy(cell) / refinement;
        return j * parent_nx + i;
    }

    /// Fine cells contained in a coarse block, in row-major order.
    [[nodiscard]] std::vector<int> cells_in_block(int block) const {
        if (!has_parent()) throw std::logic_error("grid has no parent; cells_in_block undefined");
        const int bi = block % parent_nx;
        const int bj = block / parent_nx;
        if (bi < 0 || bj < 0 || bj >= parent_ny)
            throw std::out_of_range("block index out of range");
        std::vector<int> cells;
        cells.reserve(refinement * refinement);
        for (int j = bj * refinement; j < (bj + 1) * refinement; ++j)
            for (int i = bi * refinement; i < (bi + 1) * refinement; ++i)
                cells.push_back(cell_id(i, j));
        return cells;
    }
};

/// Build an nx-by-ny grid on the unit square. Rejects non-positive counts.
[[nodiscard]] inline StructuredGrid build_grid(int nx, int ny) {
    if (nx < 1 || ny < 1) throw std::invalid_argument("build_grid: cell counts must be >= 1");
    StructuredGrid g;
    g.nx = nx;
    g.ny = ny;
    g.hx = 1.0 / nx;
    g.hy = 1.0 / ny;
    return g;
}

/// Refine each cell of `coarse` into R x R fine cells.
/// The result records the coarse dimensions so block_of_cell works.
[[nodiscard]] inline StructuredGrid refine(const StructuredGrid& coarse, int R) {
    if (R < 1) throw std::invalid_argument("refine: factor must be >= 1");
    StructuredGrid g = build_grid(coarse.nx * R, coarse.ny * R);
    g.refinement = R;
    g.parent_nx = coarse.nx;
    g.parent_ny = coarse.ny;
    return g;
}

}  // namespace mucor

#endif  // MUCOR_GRID_HPP
