#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mucor/train.hpp"

using namespace mucor;

namespace {

constexpr double kPi = 3.14159265358979323846;

NodalTensorField constant_tensor(const StructuredGrid& g, double a, double b) {
    NodalTensorField t(g);
    for (int n = 0; n < g.node_count(); ++n) {
        t.k11[static_cast<size_t>(n)] = a;
        t.k22[static_cast<size_t>(n)] = b;
    }
    return t;
}

CoarseProblem toy_problem(int n, int steps, double tau) {
    CoarseProblem p;
    p.grid = build_grid(n, n);
    p.tau = tau;
    p.n_steps = steps;
    p.kappa1 = constant_tensor(p.grid, 1.2, 0.8);
    std::vector<double> f(static_cast<size_t>(p.grid.node_count()));
    for (int id = 0; id < p.grid.node_count(); ++id)
        f[static_cast<size_t>(id)] = 2.0 * std::sin(kPi * p.grid.node_x(id)) *
                                         std::sin(kPi * p.grid.node_y(id)) +
                                     1.0;
    p.f = {std::move(f)};
    return p;
}

TrustedData mismatched_data(const CoarseProblem& p) {
    CoarseProblem truth = p;
    for (auto& v : truth.kappa1.k11) v *= 1.3;
    for (auto& v : truth.kappa1.k22) v *= 0.8;
    CoefficientFields coeffs;
    coeffs.kappa1 = truth.kappa1;
    coeffs.kappa2 = {constant_tensor(p.grid, 1.0, 1.0)};
    coeffs.sigma = {std::vector<double>(static_cast<size_t>(p.grid.node_count()), 0.3)};
    coeffs.f = p.f;
    const auto traj = solve_dual_linear(p.grid, coeffs, p.tau, p.n_steps);
    TrustedData data;
    data.grid = p.grid;
    data.tau = p.tau;
    const auto N = static_cast<size_t>(p.grid.node_count());
    for (int k = 1; k <= p.n_steps; ++k) {
        data.values.push_back(traj.u1[static_cast<size_t>(k)]);
        data.mask.emplace_back(N, 1);
    }
    return data;
}

CorrectionModel small_model(uint64_t seed) {
    CorrectionModel m;
    m.kappa_net = mlp_init({2, 6, 2}, Activation::tanh, Activation::abs, seed);
    m.sigma_net = mlp_init({2, 6, 1}, Activation::leaky_relu, Activation::identity, seed + 1, 0.2);
    return m;
}

}  // namespace

TEST_CASE("adam with constant gradient moves by the learning rate", "[train]") {
    // With g == const, bias correction gives m_hat = g, v_hat = g^2, so
    // every update is alpha * g / (|g| + eps) ~ alpha * sign(g).
    AdamState st(1, 0.05);
    std::vector<double> theta{1.0};
    for (int k = 1; k <= 5; ++k) {
        const double before = theta[0];
        adam_step(st, theta, {2.0});
        CHECK(before - theta[0] == Catch::Approx(0.05).epsilon(1e-7));
    }
    CHECK(st.step == 5);
}

TEST_CASE("adam validates shapes and rejects non-finite gradients", "[train]") {
    AdamState st(2, 0.1);
    std::vector<double> theta{0.0, 0.0};
    CHECK_THROWS_AS(adam_step(st, theta, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(adam_step(st, theta, {1.0, std::nan("")}), std::invalid_argument);
    // Failed updates must not advance the step counter.
    CHECK(st.step == 0);
}

TEST_CASE("training lowers the loss and is deterministic", "[train]") {
    const auto problem = toy_problem(4, 3, 0.1);
    const auto data = mismatched_data(problem);
    const auto init = small_model(3);

    TrainingConfig cfg;
    cfg.epochs = 150;
    cfg.learning_rate = 2e-3;
    cfg.seed = 9;
    cfg.grad_mode = GradMode::discrete_adjoint;

    const auto r1 = train(cfg, problem, init, data);
    REQUIRE(static_cast<int>(r1.loss_history.size()) == cfg.epochs);
    CHECK(r1.skipped == 0);
    CHECK(r1.loss_history.back() < 0.5 * r1.loss_history.front());

    const auto r2 = train(cfg, problem, init, data);
    CHECK(r1.loss_history == r2.loss_history);  // bit-exact reproducibility
    CHECK(r1.model.kappa_net.theta == r2.model.kappa_net.theta);
    CHECK(r1.model.sigma_net.theta == r2.model.sigma_net.theta);
}

TEST_CASE("training respects the sampling spec", "[train]") {
    const auto problem = toy_problem(4, 4, 0.1);
    const auto data = mismatched_data(problem);
    const auto init = small_model(5);

    TrainingConfig cfg;
    cfg.epochs = 40;
    cfg.learning_rate = 1e-3;
    cfg.seed = 13;
    cfg.sampling.mode = SampleMode::time_prefix;
    cfg.sampling.t_star = 0.2;  // first 2 of 4 steps observed

    const auto r = train(cfg, problem, init, data);
    REQUIRE(r.loss_history.size() == 40);

    // The recorded loss is the sampled one: recompute it independently.
    auto model = init;
    const auto sampled = sample_trusted_data(data, cfg.sampling, cfg.seed);
    const auto run = forward_correction(problem, model);
    const auto M = assemble_mass(problem.grid);
    CHECK(r.loss_history.front() ==
          Catch::Approx(relative_l2_loss(run.traj, sampled, M)).epsilon(1e-14));
    CHECK(relative_l2_loss(run.traj, sampled, M) != relative_l2_loss(run.traj, data, M));
}

TEST_CASE("training writes checkpoints that reload", "[train]") {
    const auto dir = std::filesystem::temp_directory_path() / "mucor_train_test";
    std::filesystem::create_directories(dir);

    const auto problem = toy_problem(3, 2, 0.1);
    const auto data = mismatched_data(problem);
    const auto init = small_model(7);

    TrainingConfig cfg;
    cfg.epochs = 10;
    cfg.learning_rate = 1e-3;
    cfg.checkpoint_stem = (dir / "model").string();

    const auto r = train(cfg, problem, init, data);
    const auto kappa = load_checkpoint(cfg.checkpoint_stem + ".kappa");
    const auto sigma = load_checkpoint(cfg.checkpoint_stem + ".sigma");
    CHECK(kappa.theta == r.model.kappa_net.theta);
    CHECK(sigma.theta == r.model.sigma_net.theta);
}

TEST_CASE("training aborts after ten consecutive failures", "[train]") {
    auto problem = toy_problem(3, 2, 0.1);
    // Poison the source: every forward solve returns NaN, every epoch skips.
    problem.f[0][5] = std::numeric_limits<double>::quiet_NaN();
    const auto init = small_model(1);

    // Trusted data built from the clean problem so only the forward pass
    // is poisoned.
    const auto data = mismatched_data(toy_problem(3, 2, 0.1));

    TrainingConfig cfg;
    cfg.epochs = 50;
    cfg.learning_rate = 1e-3;
    CHECK_THROWS_WITH(train(cfg, problem, init, data),
                      Catch::Matchers::ContainsSubstring("10 consecutive"));
}

TEST_CASE("loss history file format", "[train]") {
    const auto dir = std::filesystem::temp_directory_path() / "mucor_train_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "loss.csv").string();
    write_loss_history({12.5, 6.25, 3.0}, path);
    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "epoch,loss_percent");
    REQUIRE(std::getline(in, line));
    CHECK(line == "1,12.5");
    REQUIRE(std::getline(in, line));
    CHECK(line == "2,6.25");
}
