#ifndef MUCOR_FIELDS_HPP
#define MUCOR_FIELDS_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mucor/grid.hpp"

namespace mucor {

namespace detail {
inline void require_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}
}  // namespace detail

/// One positive scalar per cell (permeability on the fine grid).
struct ScalarCellField {
    StructuredGrid grid;
    std::vector<double> values;  // cell-major, length grid.cell_count()

    ScalarCellField() = default;
    ScalarCellField(const StructuredGrid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
        validate();
    }
    ScalarCellField(const StructuredGrid& g, double fill)
        : grid(g), values(static_cast<size_t>(g.cell_count()), fill) {
        validate();
    }

    void validate() const {
        if (static_cast<int>(values.size()) != grid.cell_count())
            throw std::invalid_argument("ScalarCellField: value count != cell count");
        detail::require_finite(values, "ScalarCellField");
        for (double x : values)
            if (x <= 0.0) throw std::invalid_argument("ScalarCellField: permeability must be > 0");
    }

    [[nodiscard]] double operator()(int i, int j) const { return values[grid.cell_id(i, j)]; }
};

/// One symmetric 2x2 tensor per cell, stored as (k11, k12, k22).
struct TensorCellField {
    StructuredGrid grid;
    std::vector<double> k11, k12, k22;

    TensorCellField() = default;
    explicit TensorCellField(const StructuredGrid& g)
        : grid(g),
          k11(static_cast<size_t>(g.cell_count()), 0.0),
          k12(static_cast<size_t>(g.cell_count()), 0.0),
          k22(static_cast<size_t>(g.cell_count()), 0.0) {}

    void validate() const {
        const auto n = static_cast<size_t>(grid.cell_count());
        if (k11.size() != n || k12.size() != n || k22.size() != n)
            throw std::invalid_argument("TensorCellField: component length != cell count");
        detail::require_finite(k11, "TensorCellField");
        detail::require_finite(k12, "TensorCellField");
        detail::require_finite(k22, "TensorCellField");
        for (size_t c = 0; c < n; ++c)
            if (!(k11[c] > 0.0 && k22[c] > 0.0 && k11[c] * k22[c] - k12[c] * k12[c] > 0.0))
                throw std::invalid_argument("TensorCellField: tensor not SPD at cell " +
                                            std::to_string(c));
    }
};

/// One scalar per node. Entries at Dirichlet-constrained (boundary) nodes
/// are zero whenever the field represents a member of the solution space.
struct NodalField {
    StructuredGrid grid;
    std::vector<double> values;  // node-major, length grid.node_count()

    NodalField() = default;
    explicit NodalField(const StructuredGrid& g)
        : grid(g), values(static_cast<size_t>(g.node_count()), 0.0) {}
    NodalField(const StructuredGrid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
        if (static_cast<int>(values.size()) != grid.node_count())
            throw std::invalid_argument("NodalField: value count != node count");
        detail::require_finite(values, "NodalField");
    }

    [[nodiscard]] double operator()(int i, int j) const { return values[grid.node_id(i, j)]; }
    double& operator()(int i, int j) { return values[grid.node_id(i, j)]; }

    /// Zero out Dirichlet-constrained entries.
    void apply_dirichlet() {
        for (int id = 0; id < grid.node_count(); ++id)
            if (grid.is_boundary_node(id)) values[static_cast<size_t>(id)] = 0.0;
    }
};

/// One symmetric 2x2 tensor per node (interpolated effective permeability,
/// or the output of the diagonal permeability network).
struct NodalTensorField {
    StructuredGrid grid;
    std::vector<double> k11, k12, k22;

    NodalTensorField() = default;
    explicit NodalTensorField(const StructuredGrid& g)
        : grid(g),
          k11(static_cast<size_t>(g.node_count()), 0.0),
          k12(static_cast<size_t>(g.node_count()), 0.0),
          k22(static_cast<size_t>(g.node_count()), 0.0) {}

    void validate_spd() const {
        const auto n = static_cast<size_t>(grid.node_count());
        if (k11.size() != n || k12.size() != n || k22.size() != n)
            throw std::invalid_argument("NodalTensorField: component length != node count");
        for (size_t i = 0; i < n; ++i)
            if (!(std::isfinite(k11[i]) && std::isfinite(k12[i]) && std::isfinite(k22[i]) &&
                  k11[i] > 0.0 && k22[i] > 0.0 && k11[i] * k22[i] - k12[i] * k12[i] > 0.0))
                throw std::invalid_argument("NodalTensorField: tensor not SPD at node " +
                                            std::to_string(i));
    }
};

}  // namespace mucor

#endif  // MUCOR_FIELDS_HPP
