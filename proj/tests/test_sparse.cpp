#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mucor/sparse.hpp"

using namespace mucor;

namespace {

SparseMatrix random_sparse(int n, uint64_t seed, double density = 0.3) {
    std::mt19937_64 gen(seed);
    auto unif = [&] { return static_cast<double>(gen() >> 11) * 0x1p-53; };
    TripletBuilder t(n, n);
    for (int r = 0; r < n; ++r) {
        t.add(r, r, 2.0 + unif());  // keep it comfortably nonsingular
        for (int c = 0; c < n; ++c)
            if (c != r && unif() < density) t.add(r, c, unif() - 0.5);
    }
    return t.build();
}

std::vector<double> random_vec(int n, uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = static_cast<double>(gen() >> 11) * 0x1p-53 - 0.5;
    return v;
}

}  // namespace

TEST_CASE("triplet builder sums duplicates and sorts columns", "[sparse]") {
    TripletBuilder t(2, 3);
    t.add(0, 2, 1.0);
    t.add(0, 0, 2.0);
    t.add(0, 2, 0.5);  // duplicate of (0,2)
    t.add(1, 1, -1.0);
    const auto m = t.build();
    REQUIRE(m.row_ptr == std::vector<int>{0, 2, 3});
    CHECK(m.col_idx == std::vector<int>{0, 2, 1});
    CHECK(m.vals == std::vector<double>{2.0, 1.5, -1.0});
    CHECK(m.sum() == Catch::Approx(2.5));
}

TEST_CASE("apply matches a dense reference", "[sparse]") {
    const int n = 17;
    const auto A = random_sparse(n, 3);
    const auto x = random_vec(n, 4);

    // Dense reference.
    std::vector<double> dense(static_cast<size_t>(n) * n, 0.0);
    for (int r = 0; r < n; ++r)
        for (int k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k)
            dense[static_cast<size_t>(r) * n + A.col_idx[k]] += A.vals[k];

    const auto y = A.apply(x);
    for (int r = 0; r < n; ++r) {
        double ref = 0.0;
        for (int c = 0; c < n; ++c) ref += dense[static_cast<size_t>(r) * n + c] * x[c];
        CHECK(y[r] == Catch::Approx(ref).margin(1e-14));
    }
}

TEST_CASE("apply_transpose_add satisfies the adjoint identity", "[sparse]") {
    const int n = 23;
    const auto A = random_sparse(n, 11);
    const auto x = random_vec(n, 12);
    const auto y = random_vec(n, 13);

    // <Ax, y> == <x, A^T y> for every x, y.
    const auto Ax = A.apply(x);
    std::vector<double> Aty(static_cast<size_t>(n), 0.0);
    A.apply_transpose_add(y.data(), Aty.data());
    double lhs = 0.0, rhs = 0.0;
    for (int i = 0; i < n; ++i) {
        lhs += Ax[i] * y[i];
        rhs += x[i] * Aty[i];
    }
    CHECK(lhs == Catch::Approx(rhs).epsilon(1e-13));

    // alpha scaling and accumulation semantics.
    std::vector<double> acc(static_cast<size_t>(n), 1.0);
    A.apply_transpose_add(y.data(), acc.data(), 2.0);
    for (int i = 0; i < n; ++i) CHECK(acc[i] == Catch::Approx(1.0 + 2.0 * Aty[i]).margin(1e-13));
}

TEST_CASE("restrict_to keeps the selected principal submatrix", "[sparse]") {
    TripletBuilder t(4, 4);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) t.add(r, c, 10.0 * r + c);
    const auto A = t.build();
    const std::vector<int> keep{1, 3};
    const auto B = restrict_to(A, keep);
    REQUIRE(B.rows == 2);
    const auto d = B.diagonal();
    CHECK(d[0] == 11.0);
    CHECK(d[1] == 33.0);
    const auto y = B.apply(std::vector<double>{1.0, 1.0});
    CHECK(y[0] == 11.0 + 13.0);
    CHECK(y[1] == 31.0 + 33.0);
}

TEST_CASE("cg solves an SPD system to the requested tolerance", "[sparse]") {
    const int n = 40;
    // SPD: tridiagonal Laplacian plus identity.
    TripletBuilder t(n, n);
    for (int i = 0; i < n; ++i) {
        t.add(i, i, 3.0);
        if (i > 0) t.add(i, i - 1, -1.0);
        if (i + 1 < n) t.add(i, i + 1, -1.0);
    }
    const auto A = t.build();
    const auto b = random_vec(n, 21);
    std::vector<double> x;
    const auto diag = A.diagonal();
    const auto rep = cg_solve(
        n, [&](const double* in, double* out) { A.apply(in, out); }, b, x, 1e-12, 500, &diag);
    REQUIRE(rep.converged);
    const auto r = A.apply(x);
    double err = 0.0;
    for (int i = 0; i < n; ++i) err = std::max(err, std::fabs(r[i] - b[i]));
    CHECK(err < 1e-10);
}

TEST_CASE("bicgstab solves a nonsymmetric system", "[sparse]") {
    const int n = 30;
    const auto A = random_sparse(n, 31, 0.2);
    const auto b = random_vec(n, 32);
    std::vector<double> x;
    const auto diag = A.diagonal();
    const auto rep = bicgstab_solve(
        n, [&](const double* in, double* out) { A.apply(in, out); }, b, x, 1e-12, 2000, &diag);
    REQUIRE(rep.converged);
    const auto r = A.apply(x);
    double err = 0.0;
    for (int i = 0; i < n; ++i) err = std::max(err, std::fabs(r[i] - b[i]));
    CHECK(err < 1e-9);
}

TEST_CASE("dense LU solves both A x = b and A^T x = b", "[sparse]") {
    const int n = 12;
    std::mt19937_64 gen(77);
    DenseLu lu(n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            lu.at(r, c) = static_cast<double>(gen() >> 11) * 0x1p-53 - 0.5 + (r == c ? 4.0 : 0.0);
    const auto original = lu.a;
    lu.factor();

    auto matvec = [&](const std::vector<double>& x, bool transpose) {
        std::vector<double> y(static_cast<size_t>(n), 0.0);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                y[transpose ? c : r] += original[static_cast<size_t>(r) * n + c] * x[transpose ? r : c];
        return y;
    };

    const auto b = random_vec(n, 78);
    auto x = b;
    lu.solve(x);
    auto Ax = matvec(x, false);
    for (int i = 0; i < n; ++i) CHECK(Ax[i] == Catch::Approx(b[i]).margin(1e-12));

    auto xt = b;
    lu.solve_transpose(xt);
    auto Atx = matvec(xt, true);
    for (int i = 0; i < n; ++i) CHECK(Atx[i] == Catch::Approx(b[i]).margin(1e-12));
}

TEST_CASE("dense LU reports singular matrices", "[sparse]") {
    DenseLu lu(2);
    lu.at(0, 0) = 1.0;
    lu.at(0, 1) = 2.0;
    lu.at(1, 0) = 2.0;
    lu.at(1, 1) = 4.0;
    CHECK_THROWS_AS(lu.factor(), std::runtime_error);
}
