#include <catch2/catch_amalgamated.hpp>

#include "mucor/grid.hpp"

using namespace mucor;

TEST_CASE("grid numbering is row-major with y outermost", "[grid]") {
    const auto g = build_grid(4, 3);
    CHECK(g.node_count() == 20);
    CHECK(g.cell_count() == 12);
    CHECK(g.node_id(0, 0) == 0);
    CHECK(g.node_id(4, 0) == 4);
    CHECK(g.node_id(0, 1) == 5);
    CHECK(g.node_id(4, 3) == 19);
    CHECK(g.cell_id(3, 2) == 11);
    for (int id = 0; id < g.node_count(); ++id) {
        CHECK(g.node_id(g.node_ix(id), g.node_iy(id)) == id);
    }
    for (int id = 0; id < g.cell_count(); ++id) {
        CHECK(g.cell_id(g.cell_ix(id), g.cell_iy(id)) == id);
    }
}

TEST_CASE("node coordinates span the unit square exactly", "[grid]") {
    const auto g = build_grid(5, 2);
    CHECK(g.hx == 1.0 / 5);
    CHECK(g.hy == 1.0 / 2);
    CHECK(g.node_x(0) == 0.0);
    CHECK(g.node_y(0) == 0.0);
    const int last = g.node_count() - 1;
    CHECK(g.node_x(last) == 1.0);
    CHECK(g.node_y(last) == 1.0);
    CHECK(g.node_x(g.node_id(3, 1)) == Catch::Approx(0.6).margin(1e-15));
}

TEST_CASE("boundary and interior nodes partition the lattice", "[grid]") {
    const auto g = build_grid(6, 4);
    const auto interior = g.interior_nodes();
    const auto boundary = g.boundary_nodes();
    CHECK(static_cast<int>(interior.size()) == 5 * 3);
    CHECK(static_cast<int>(interior.size() + boundary.size()) == g.node_count());
    for (int id : interior) CHECK_FALSE(g.is_boundary_node(id));
    for (int id : boundary) CHECK(g.is_boundary_node(id));
    // interior_nodes is sorted ascending (used as the restriction map).
    CHECK(std::is_sorted(interior.begin(), interior.end()));
}

TEST_CASE("refine remembers the parent and maps cells to blocks", "[grid]") {
    const auto coarse = build_grid(3, 2);
    const auto fine = refine(coarse, 4);
    CHECK(fine.nx == 12);
    CHECK(fine.ny == 8);
    CHECK(fine.refinement == 4);
    CHECK(fine.has_parent());
    CHECK_FALSE(coarse.has_parent());

    // Every fine cell lands in exactly one block and the blocks tile the grid.
    std::vector<int> counts(static_cast<size_t>(coarse.cell_count()), 0);
    for (int c = 0; c < fine.cell_count(); ++c) counts[static_cast<size_t>(fine.block_of_cell(c))]++;
    for (int n : counts) CHECK(n == 16);

    // cells_in_block inverts block_of_cell.
    for (int b = 0; b < coarse.cell_count(); ++b) {
        const auto cells = fine.cells_in_block(b);
        REQUIRE(cells.size() == 16);
        for (int c : cells) CHECK(fine.block_of_cell(c) == b);
    }
}

TEST_CASE("grid constructors reject bad arguments", "[grid]") {
    CHECK_THROWS_AS(build_grid(0, 3), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(3, -1), std::invalid_argument);
    CHECK_THROWS_AS(refine(build_grid(2, 2), 0), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(2, 2).block_of_cell(0), std::logic_error);
    CHECK_THROWS_AS(build_grid(2, 2).cells_in_block(0), std::logic_error);
    CHECK_THROWS_AS(refine(build_grid(2, 2), 2).cells_in_block(99), std::out_of_range);
}
