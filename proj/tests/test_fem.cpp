#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mucor/fem.hpp"

using namespace mucor;

namespace {

constexpr double kPi = 3.14159265358979323846;

NodalTensorField constant_tensor(const StructuredGrid& g, double a, double b, double c = 0.0) {
    NodalTensorField t(g);
    for (int n = 0; n < g.node_count(); ++n) {
        t.k11[static_cast<size_t>(n)] = a;
        t.k22[static_cast<size_t>(n)] = b;
        t.k12[static_cast<size_t>(n)] = c;
    }
    return t;
}

std::vector<double> linear_field(const StructuredGrid& g, double ax, double ay) {
    std::vector<double> u(static_cast<size_t>(g.node_count()));
    for (int n = 0; n < g.node_count(); ++n)
        u[static_cast<size_t>(n)] = ax * g.node_x(n) + ay * g.node_y(n);
    return u;
}

double quad_form(const SparseMatrix& A, const std::vector<double>& u, const std::vector<double>& v) {
    const auto Av = A.apply(v);
    double s = 0.0;
    for (size_t i = 0; i < u.size(); ++i) s += u[i] * Av[i];
    return s;
}

}  // namespace

TEST_CASE("mass matrix integrates to the domain area", "[fem]") {
    const auto g = build_grid(6, 4);
    const auto M = assemble_mass(g);
    CHECK(M.sum() == Catch::Approx(1.0).epsilon(1e-13));

    // Interior node diagonal: 4 elements, each contributing hx*hy/9.
    const auto d = M.diagonal();
    const int mid = g.node_id(3, 2);
    CHECK(d[static_cast<size_t>(mid)] == Catch::Approx(4.0 * g.hx * g.hy / 9.0).epsilon(1e-13));
    // Corner node: one element.
    CHECK(d[0] == Catch::Approx(g.hx * g.hy / 9.0).epsilon(1e-13));
}

TEST_CASE("mass matrix integrates bilinear products exactly", "[fem]") {
    const auto g = build_grid(5, 7);
    const auto M = assemble_mass(g);
    // u = x, v = y: integral of x*y over the unit square is 1/4.
    const auto u = linear_field(g, 1.0, 0.0);
    const auto v = linear_field(g, 0.0, 1.0);
    CHECK(quad_form(M, u, v) == Catch::Approx(0.25).epsilon(1e-13));
    // u = v = x: integral of x^2 is 1/3.
    CHECK(quad_form(M, u, u) == Catch::Approx(1.0 / 3.0).epsilon(1e-13));
}

TEST_CASE("unit-coefficient element stiffness matches the known stencil", "[fem]") {
    const auto g = build_grid(1, 1);  // single square element
    const auto A = assemble_stiffness(g, constant_tensor(g, 1.0, 1.0));
    // Reference Q1 Laplacian on a square: diag 2/3, edge-neighbors -1/6,
    // diagonal corner -1/3. Local order (0,0),(1,0),(0,1),(1,1).
    const double ref[4][4] = {{2.0 / 3, -1.0 / 6, -1.0 / 6, -1.0 / 3},
                              {-1.0 / 6, 2.0 / 3, -1.0 / 3, -1.0 / 6},
                              {-1.0 / 6, -1.0 / 3, 2.0 / 3, -1.0 / 6},
                              {-1.0 / 3, -1.0 / 6, -1.0 / 6, 2.0 / 3}};
    for (int r = 0; r < 4; ++r) {
        std::vector<double> e(4, 0.0);
        e[static_cast<size_t>(r)] = 1.0;
        const auto row = A.apply(e);  // column r of symmetric A
        for (int c = 0; c < 4; ++c) CHECK(row[c] == Catch::Approx(ref[r][c]).margin(1e-14));
    }
}

TEST_CASE("stiffness energy of linear fields is exact for constant tensors", "[fem]") {
    const auto g = build_grid(4, 6);
    const double a = 2.0, b = 5.0, c = 1.0;
    const auto A = assemble_stiffness(g, constant_tensor(g, a, b, c));
    const double ax = 0.7, ay = -1.3;
    const auto u = linear_field(g, ax, ay);
    // grad u = (ax, ay): energy = a*ax^2 + 2*c*ax*ay + b*ay^2.
    const double expect = a * ax * ax + 2.0 * c * ax * ay + b * ay * ay;
    CHECK(quad_form(A, u, u) == Catch::Approx(expect).epsilon(1e-13));

    // Constants lie in the kernel: row sums vanish.
    const std::vector<double> ones(static_cast<size_t>(g.node_count()), 1.0);
    const auto r = A.apply(ones);
    for (double x : r) CHECK(std::fabs(x) < 1e-13);
}

TEST_CASE("cell-coefficient stiffness agrees with the nodal-tensor assembly", "[fem]") {
    const auto g = build_grid(3, 5);
    const double k = 3.25;
    const auto Acell = assemble_stiffness_cell(g, ScalarCellField(g, k));
    const auto Anodal = assemble_stiffness(g, constant_tensor(g, k, k));
    REQUIRE(Acell.vals.size() == Anodal.vals.size());
    REQUIRE(Acell.col_idx == Anodal.col_idx);
    for (size_t i = 0; i < Acell.vals.size(); ++i)
        CHECK(Acell.vals[i] == Catch::Approx(Anodal.vals[i]).margin(1e-14));
}

TEST_CASE("stiffness tensor cotangents reproduce the bilinear form exactly", "[fem]") {
    // A(kappa) is linear in kappa, so lam^T A(delta) u must equal the
    // inner product of the returned cotangents with delta.
    const auto g = build_grid(4, 4);
    std::mt19937_64 gen(5);
    auto unif = [&] { return static_cast<double>(gen() >> 11) * 0x1p-53 - 0.5; };

    std::vector<double> lam(static_cast<size_t>(g.node_count()), 0.0);
    std::vector<double> u(static_cast<size_t>(g.node_count()), 0.0);
    for (int id : g.interior_nodes()) {
        lam[static_cast<size_t>(id)] = unif();
        u[static_cast<size_t>(id)] = unif();
    }

    NodalTensorField delta(g);
    for (int n = 0; n < g.node_count(); ++n) {
        delta.k11[static_cast<size_t>(n)] = 2.0 + unif();
        delta.k22[static_cast<size_t>(n)] = 2.0 + unif();
        delta.k12[static_cast<size_t>(n)] = 0.3 * unif();
    }

    const auto cot = stiffness_kappa_vjp(g, lam, u);
    double via_cot = 0.0;
    for (int n = 0; n < g.node_count(); ++n) {
        const auto i = static_cast<size_t>(n);
        via_cot += cot.k11[i] * delta.k11[i] + cot.k12[i] * delta.k12[i] + cot.k22[i] * delta.k22[i];
    }
    const auto Adelta = assemble_stiffness(g, delta);
    CHECK(via_cot == Catch::Approx(quad_form(Adelta, lam, u)).epsilon(1e-12));
}

TEST_CASE("dirichlet map restrict and expand invert each other", "[fem]") {
    const auto g = build_grid(5, 3);
    const DirichletMap dm(g);
    std::vector<double> full(static_cast<size_t>(g.node_count()));
    for (size_t i = 0; i < full.size(); ++i) full[i] = static_cast<double>(i) + 1.0;
    const auto inner = dm.restrict_vec(full);
    REQUIRE(inner.size() == static_cast<size_t>(4 * 2));
    const auto back = dm.expand(inner, g.node_count());
    for (int id = 0; id < g.node_count(); ++id) {
        if (g.is_boundary_node(id)) {
            CHECK(back[static_cast<size_t>(id)] == 0.0);
        } else {
            CHECK(back[static_cast<size_t>(id)] == full[static_cast<size_t>(id)]);
        }
    }
}

TEST_CASE("coupled operator transpose satisfies the adjoint identity", "[fem]") {
    const auto g = build_grid(5, 5);
    const DirichletMap dm(g);
    const auto M = assemble_mass(g);
    const auto Mi = restrict_to(M, dm.interior);
    const int n = static_cast<int>(dm.interior.size());

    CoupledSystem sys;
    sys.n = n;
    sys.tau = 0.1;
    sys.Mi = &Mi;
    sys.A1i = restrict_to(assemble_stiffness(g, constant_tensor(g, 2.0, 1.0, 0.2)), dm.interior);
    sys.A2i = restrict_to(assemble_stiffness(g, constant_tensor(g, 1.0, 3.0)), dm.interior);
    std::mt19937_64 gen(17);
    auto unif = [&] { return static_cast<double>(gen() >> 11) * 0x1p-53 - 0.5; };
    sys.sigma_int.resize(static_cast<size_t>(n));
    for (auto& s : sys.sigma_int) s = 2.0 * unif();  // sign-indefinite transfer

    std::vector<double> x(static_cast<size_t>(2 * n)), y(static_cast<size_t>(2 * n));
    for (auto& v : x) v = unif();
    for (auto& v : y) v = unif();
    std::vector<double> Sx(x.size()), Sty(y.size());
    sys.apply(x.data(), Sx.data());
    sys.apply_transpose(y.data(), Sty.data());
    double lhs = 0.0, rhs = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        lhs += Sx[i] * y[i];
        rhs += x[i] * Sty[i];
    }
    CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("dense and iterative coupled solves agree", "[fem]") {
    const auto g = build_grid(6, 6);
    const DirichletMap dm(g);
    const auto M = assemble_mass(g);
    const auto Mi = restrict_to(M, dm.interior);
    const int n = static_cast<int>(dm.interior.size());

    auto make_sys = [&](SolverKind kind) {
        CoupledSystem sys;
        sys.n = n;
        sys.tau = 0.05;
        sys.Mi = &Mi;
        sys.A1i = restrict_to(assemble_stiffness(g, constant_tensor(g, 1.5, 1.0)), dm.interior);
        sys.A2i = restrict_to(assemble_stiffness(g, constant_tensor(g, 1.0, 2.0)), dm.interior);
        sys.sigma_int.assign(static_cast<size_t>(n), 0.7);
        sys.kind = kind;
        sys.rel_tol = 1e-13;
        return sys;
    };

    std::mt19937_64 gen(23);
    std::vector<double> b(static_cast<size_t>(2 * n));
    for (auto& v : b) v = static_cast<double>(gen() >> 11) * 0x1p-53 - 0.5;

    const auto dense_sys = make_sys(SolverKind::dense);
    const auto iter_sys = make_sys(SolverKind::iterative);
    std::vector<double> xd, xi;
    REQUIRE(dense_sys.solve(b, xd).converged);
    REQUIRE(iter_sys.solve(b, xi).converged);
    for (int i = 0; i < 2 * n; ++i) CHECK(xd[i] == Catch::Approx(xi[i]).margin(1e-9));

    // Transposed solve really inverts the transpose.
    std::vector<double> xt;
    REQUIRE(dense_sys.solve(b, xt, /*transpose=*/true).converged);
    std::vector<double> back(b.size());
    dense_sys.apply_transpose(xt.data(), back.data());
    for (size_t i = 0; i < b.size(); ++i) CHECK(back[i] == Catch::Approx(b[i]).margin(1e-10));
}

TEST_CASE("decoupled second continuum stays at rest without a source", "[fem]") {
    const auto g = build_grid(8, 8);
    CoefficientFields coeffs;
    coeffs.kappa1 = constant_tensor(g, 1.0, 1.0);
    coeffs.kappa2 = {constant_tensor(g, 2.0, 2.0)};
    coeffs.sigma = {std::vector<double>(static_cast<size_t>(g.node_count()), 0.0)};
    std::vector<double> f(static_cast<size_t>(g.node_count()));
    for (int n = 0; n < g.node_count(); ++n)
        f[static_cast<size_t>(n)] = std::sin(kPi * g.node_x(n)) * std::sin(kPi * g.node_y(n));
    coeffs.f = {f};

    const auto traj = solve_dual_linear(g, coeffs, 0.1, 5);
    for (int k = 0; k <= 5; ++k)
        for (double v : traj.u2[static_cast<size_t>(k)]) CHECK(v == 0.0);
    // u1 must actually move.
    double norm1 = 0.0;
    for (double v : traj.u1[5]) norm1 += v * v;
    CHECK(norm1 > 1e-6);
}

TEST_CASE("swapping the two continua swaps the solution components", "[fem]") {
    const auto g = build_grid(6, 6);
    const auto Ka = constant_tensor(g, 2.0, 1.0, 0.1);
    const auto Kb = constant_tensor(g, 1.0, 3.0);
    std::vector<double> fa(static_cast<size_t>(g.node_count())), fb(fa.size());
    for (int n = 0; n < g.node_count(); ++n) {
        fa[static_cast<size_t>(n)] = std::sin(kPi * g.node_x(n)) * std::sin(kPi * g.node_y(n));
        fb[static_cast<size_t>(n)] = g.node_x(n) * (1.0 - g.node_x(n));
    }
    const std::vector<double> sigma(static_cast<size_t>(g.node_count()), 0.5);

    CoefficientFields ab;
    ab.kappa1 = Ka;
    ab.kappa2 = {Kb};
    ab.sigma = {sigma};
    ab.f = {fa};
    ab.f2 = {fb};
    CoefficientFields ba;
    ba.kappa1 = Kb;
    ba.kappa2 = {Ka};
    ba.sigma = {sigma};
    ba.f = {fb};
    ba.f2 = {fa};

    const auto t_ab = solve_dual_linear(g, ab, 0.2, 4);
    const auto t_ba = solve_dual_linear(g, ba, 0.2, 4);
    for (int k = 0; k <= 4; ++k)
        for (int n = 0; n < g.node_count(); ++n) {
            const auto i = static_cast<size_t>(n);
            CHECK(t_ab.u1[static_cast<size_t>(k)][i] ==
                  Catch::Approx(t_ba.u2[static_cast<size_t>(k)][i]).margin(1e-11));
            CHECK(t_ab.u2[static_cast<size_t>(k)][i] ==
                  Catch::Approx(t_ba.u1[static_cast<size_t>(k)][i]).margin(1e-11));
        }
}

TEST_CASE("block means and node kernel preserve constants and linears", "[fem]") {
    const auto coarse = build_grid(4, 3);
    const auto fine = refine(coarse, 5);

    NodalField lin(fine);
    for (int n = 0; n < fine.node_count(); ++n)
        lin.values[static_cast<size_t>(n)] = 2.0 * fine.node_x(n) - fine.node_y(n) + 0.25;
    const auto means = block_means(lin, coarse);
    // Trapezoid block averaging is exact for linear fields: the mean over a
    // block equals the value at its center.
    for (int bj = 0; bj < coarse.ny; ++bj)
        for (int bi = 0; bi < coarse.nx; ++bi) {
            const double cx = (bi + 0.5) * coarse.hx, cy = (bj + 0.5) * coarse.hy;
            CHECK(means[static_cast<size_t>(coarse.cell_id(bi, bj))] ==
                  Catch::Approx(2.0 * cx - cy + 0.25).margin(1e-13));
        }

    // Constant fields pass through the node kernel unchanged.
    const auto nodal =
        kernel_to_nodes(coarse, std::vector<double>(static_cast<size_t>(coarse.cell_count()), 3.5));
    for (double v : nodal) CHECK(v == Catch::Approx(3.5).margin(1e-14));

    // coarse_average lands in the coarse solution space: boundary zeros.
    const auto avg = coarse_average(lin, coarse);
    for (int id : coarse.boundary_nodes()) CHECK(avg.values[static_cast<size_t>(id)] == 0.0);
}

TEST_CASE("nonlinear solver with beta=0 reproduces the linear march", "[fem]") {
    const auto g = build_grid(7, 7);
    CoefficientFields coeffs;
    coeffs.kappa1 = constant_tensor(g, 1.3, 0.9);
    coeffs.kappa2 = {constant_tensor(g, 1.0, 1.0)};
    std::vector<double> sigma(static_cast<size_t>(g.node_count()));
    std::vector<double> f(static_cast<size_t>(g.node_count()));
    for (int n = 0; n < g.node_count(); ++n) {
        sigma[static_cast<size_t>(n)] = 0.4 + 0.2 * g.node_x(n);
        f[static_cast<size_t>(n)] = 1.0 + std::sin(kPi * g.node_x(n)) * std::sin(kPi * g.node_y(n));
    }
    coeffs.sigma = {sigma};
    coeffs.f = {f};

    const auto linear = solve_dual_linear(g, coeffs, 0.1, 3);
    const auto nl = solve_dual_nonlinear(g, coeffs, 0.0, 0.1, 3, 1e-13);
    for (int k = 0; k <= 3; ++k)
        for (int n = 0; n < g.node_count(); ++n) {
            const auto i = static_cast<size_t>(n);
            CHECK(nl.traj.u1[static_cast<size_t>(k)][i] ==
                  Catch::Approx(linear.u1[static_cast<size_t>(k)][i]).margin(1e-9));
            CHECK(nl.traj.u2[static_cast<size_t>(k)][i] ==
                  Catch::Approx(linear.u2[static_cast<size_t>(k)][i]).margin(1e-9));
        }
    for (const auto& rep : nl.newton) CHECK(rep.converged);
}

TEST_CASE("newton converges fast for a mild nonlinearity", "[fem]") {
    const auto g = build_grid(8, 8);
    CoefficientFields coeffs;
    coeffs.kappa1 = constant_tensor(g, 1.0, 1.0);
    coeffs.kappa2 = {constant_tensor(g, 1.0, 1.0)};
    coeffs.sigma = {std::vector<double>(static_cast<size_t>(g.node_count()), 1.0)};
    std::vector<double> f(static_cast<size_t>(g.node_count()));
    for (int n = 0; n < g.node_count(); ++n)
        f[static_cast<size_t>(n)] = 4.0 * std::sin(kPi * g.node_x(n)) * std::sin(kPi * g.node_y(n));
    coeffs.f = {f};

    const auto nl = solve_dual_nonlinear(g, coeffs, 0.05, 0.1, 4, 1e-11);
    for (const auto& rep : nl.newton) {
        CHECK(rep.converged);
        CHECK(rep.iterations <= 6);
        REQUIRE_FALSE(rep.residuals.empty());
        CHECK(rep.residuals.back() < 1e-11);
    }

    // The nonlinearity must actually bite: solutions differ from beta=0.
    const auto lin = solve_dual_linear(g, coeffs, 0.1, 4);
    double diff = 0.0;
    for (int n = 0; n < g.node_count(); ++n)
        diff = std::max(diff, std::fabs(nl.traj.u1[4][static_cast<size_t>(n)] -
                                        lin.u1[4][static_cast<size_t>(n)]));
    CHECK(diff > 1e-7);
}

TEST_CASE("backward euler converges to a manufactured solution", "[fem]") {
    // Exact solution u1 = u2 = t sin(pi x) sin(pi y) with unit tensors and
    // sigma = 1. The transfer term vanishes since u1 == u2, leaving
    // f = (1 + 2 pi^2 t) sin(pi x) sin(pi y) for both continua.
    auto run = [](int n, double tau, int steps) {
        const auto g = build_grid(n, n);
        CoefficientFields coeffs;
        coeffs.kappa1 = constant_tensor(g, 1.0, 1.0);
        coeffs.kappa2 = {constant_tensor(g, 1.0, 1.0)};
        coeffs.sigma = {std::vector<double>(static_cast<size_t>(g.node_count()), 1.0)};
        std::vector<std::vector<double>> fs;
        for (int k = 1; k <= steps; ++k) {
            std::vector<double> f(static_cast<size_t>(g.node_count()));
            const double t = k * tau;
            for (int id = 0; id < g.node_count(); ++id)
                f[static_cast<size_t>(id)] = (1.0 + 2.0 * kPi * kPi * t) *
                                             std::sin(kPi * g.node_x(id)) *
                                             std::sin(kPi * g.node_y(id));
            fs.push_back(std::move(f));
        }
        coeffs.f = fs;
        coeffs.f2 = fs;
        const auto traj = solve_dual_linear(g, coeffs, tau, steps);
        const auto M = assemble_mass(g);
        std::vector<double> err(static_cast<size_t>(g.node_count()));
        const double T = steps * tau;
        for (int id = 0; id < g.node_count(); ++id)
            err[static_cast<size_t>(id)] = traj.u1[static_cast<size_t>(steps)][static_cast<size_t>(id)] -
                                           T * std::sin(kPi * g.node_x(id)) *
                                               std::sin(kPi * g.node_y(id));
        return std::sqrt(quad_form(M, err, err));
    };

    // Halving h with tau ~ h^2 should cut the L2 error by about 4.
    const double e1 = run(4, 0.04, 10);
    const double e2 = run(8, 0.01, 40);
    CHECK(e1 / e2 == Catch::Approx(4.0).margin(0.5));
}
