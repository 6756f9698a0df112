#ifndef MUCOR_EXPERIMENT_HPP
#define MUCOR_EXPERIMENT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mucor/channel.hpp"
#include "mucor/field_io.hpp"
#include "mucor/fields.hpp"
#include "mucor/grid.hpp"
#include "mucor/homogenize.hpp"
#include "mucor/loss.hpp"
#include "mucor/train.hpp"

namespace mucor {

// ---------------------------------------------------------------------------
// Experiment configuration: one JSON document with sections
// {grid, time, field, physics, networks, training, output}.
// ---------------------------------------------------------------------------

struct SourceSpec {
    std::string kind = "sine";  // sine: a*sin(pi x)*sin(pi y) + c | constant: c
                                // gaussian: a*exp(-((x-x0)^2+(y-y0)^2)/(2 w^2)) + c
    double amplitude = 1.0;
    double offset = 0.0;
    double x0 = 0.5, y0 = 0.5, width = 0.05;
};

struct NetSection {
    int hidden_layers = 5;
    int width = 100;
    uint64_t seed = 0;
};

struct ExperimentConfig {
    // grid
    int nx = 10, ny = 10, refinement = 10;
    // time
    double T = 1.0, tau = 0.1;
    // field
    std::string channel_spec_path;
    // physics
    double beta = 0.0;
    SourceSpec source;
    // networks
    NetSection kappa_net, sigma_net;
    bool nets_time_dependent = false;
    // training
    TrainingConfig training;
    double fd_step = 1e-6;
    // output
    std::string output_dir = "out";
    // provenance
    std::string config_path;

    [[nodiscard]] int n_steps() const {
        const double steps = T / tau;
        const auto n = static_cast<int>(std::llround(steps));
        if (n < 1 || std::fabs(steps - n) > 1e-9 * std::max(1.0, steps))
            throw std::invalid_argument("ExperimentConfig: T/tau must be a positive integer");
        return n;
    }

    void validate() const {
        if (nx < 1 || ny < 1 || refinement < 1)
            throw std::invalid_argument("ExperimentConfig: bad grid section");
        if (T <= 0.0 || tau <= 0.0) throw std::invalid_argument("ExperimentConfig: bad time section");
        (void)n_steps();
        if (beta < 0.0) throw std::invalid_argument("ExperimentConfig: beta must be nonnegative");
        if (channel_spec_path.empty())
            throw std::invalid_argument("ExperimentConfig: missing field.channel_spec");
        if (!std::filesystem::exists(channel_spec_path))
            throw std::invalid_argument("ExperimentConfig: channel spec not found: " +
                                        channel_spec_path);
        if (kappa_net.hidden_layers < 1 || kappa_net.width < 1 || sigma_net.hidden_layers < 1 ||
            sigma_net.width < 1)
            throw std::invalid_argument("ExperimentConfig: bad network section");
        training.validate();
    }
};

namespace exp_detail {

inline SourceSpec source_from_json(const nlohmann::json& j) {
    SourceSpec s;
    s.kind = j.value("kind", std::string("sine"));
    if (s.kind != "sine" && s.kind != "constant" && s.kind != "gaussian")
        throw std::invalid_argument("source.kind must be sine | constant | gaussian");
    s.amplitude = j.value("amplitude", 1.0);
    s.offset = j.value("offset", 0.0);
    s.x0 = j.value("x0", 0.5);
    s.y0 = j.value("y0", 0.5);
    s.width = j.value("width", 0.05);
    if (s.kind == "gaussian" && s.width <= 0.0)
        throw std::invalid_argument("source.width must be positive");
    return s;
}

inline NetSection net_from_json(const nlohmann::json& j) {
    NetSection n;
    n.hidden_layers = j.value("hidden_layers", 5);
    n.width = j.value("width", 100);
    n.seed = j.value("seed", std::uint64_t{0});
    return n;
}

inline SampleSpec sampling_from_json(const nlohmann::json& j) {
    SampleSpec s;
    const auto mode = j.value("mode", std::string("full"));
    if (mode == "full") {
        s.mode = SampleMode::full;
    } else if (mode == "time-prefix") {
        s.mode = SampleMode::time_prefix;
        s.t_star = j.at("t_star").get<double>();
    } else if (mode == "spatial-ratio") {
        s.mode = SampleMode::spatial_ratio;
        s.ratio = j.at("ratio").get<double>();
    } else {
        throw std::invalid_argument("sampling.mode must be full | time-prefix | spatial-ratio");
    }
    return s;
}

}  // namespace exp_detail

[[nodiscard]] inline ExperimentConfig experiment_from_json(const nlohmann::json& j,
                                                           const std::filesystem::path& base_dir) {
    ExperimentConfig cfg;
    const auto& grid = j.at("grid");
    cfg.nx = grid.at("nx").get<int>();
    cfg.ny = grid.at("ny").get<int>();
    cfg.refinement = grid.at("refinement").get<int>();
    const auto& time = j.at("time");
    cfg.T = time.at("T").get<double>();
    cfg.tau = time.at("tau").get<double>();
    const auto& field = j.at("field");
    {
        std::filesystem::path p = field.at("channel_spec").get<std::string>();
        if (p.is_relative()) p = base_dir / p;
        cfg.channel_spec_path = p.lexically_normal().string();
    }
    const auto& phys = j.at("physics");
    cfg.beta = phys.value("beta", 0.0);
    if (phys.contains("source")) cfg.source = exp_detail::source_from_json(phys.at("source"));
    const auto& nets = j.at("networks");
    cfg.kappa_net = exp_detail::net_from_json(nets.at("kappa"));
    cfg.sigma_net = exp_detail::net_from_json(nets.at("sigma"));
    cfg.nets_time_dependent = nets.value("time_dependent", false);
    const auto& tr = j.at("training");
    cfg.training.epochs = tr.value("epochs", 12000);
    cfg.training.learning_rate = tr.value("learning_rate", 1e-4);
    cfg.training.seed = tr.value("seed", std::uint64_t{0});
    cfg.training.grad_mode = grad_mode_from_name(tr.value("grad_mode", std::string("discrete")));
    if (tr.contains("sampling")) cfg.training.sampling = exp_detail::sampling_from_json(tr.at("sampling"));
    cfg.training.checkpoint_every = tr.value("checkpoint_every", 0);
    cfg.training.log_every = tr.value("log_every", 0);
    cfg.fd_step = tr.value("fd_step", 1e-6);
    {
        std::filesystem::path out = j.value("output", std::string("out"));
        if (out.is_relative()) out = base_dir / out;
        cfg.output_dir = out.lexically_normal().string();
    }
    return cfg;
}

[[nodiscard]] inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("config " + path + " is not valid JSON: " + e.what());
    }
    auto cfg = experiment_from_json(j, std::filesystem::absolute(path).parent_path());
    cfg.config_path = std::filesystem::absolute(path).lexically_normal().string();
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Builders shared by the CLI and the test drivers.
// ---------------------------------------------------------------------------

[[nodiscard]] inline StructuredGrid coarse_grid_of(const ExperimentConfig& cfg) {
    return build_grid(cfg.nx, cfg.ny);
}

[[nodiscard]] inline StructuredGrid fine_grid_of(const ExperimentConfig& cfg) {
    return refine(coarse_grid_of(cfg), cfg.refinement);
}

[[nodiscard]] inline std::vector<double> render_source(const SourceSpec& spec,
                                                       const StructuredGrid& grid) {
    std::vector<double> f(static_cast<size_t>(grid.node_count()));
    constexpr double pi = 3.14159265358979323846;
    for (int n = 0; n < grid.node_count(); ++n) {
        if (spec.kind == "constant") {
            f[static_cast<size_t>(n)] = spec.offset;
        } else if (spec.kind == "gaussian") {
            const double dx = grid.node_x(n) - spec.x0;
            const double dy = grid.node_y(n) - spec.y0;
            f[static_cast<size_t>(n)] =
                spec.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * spec.width * spec.width)) +
                spec.offset;
        } else {
            f[static_cast<size_t>(n)] =
                spec.amplitude * std::sin(pi * grid.node_x(n)) * std::sin(pi * grid.node_y(n)) +
                spec.offset;
        }
    }
    return f;
}

/// Fresh networks in the layout the experiments use: the kappa-net maps
/// (x,y[,t]) to the two diagonal tensor entries through tanh layers and an
/// absolute-value output; the sigma-net maps the same inputs to the scalar
/// transfer coefficient through leaky-relu layers (slope 0.2).
[[nodiscard]] inline CorrectionModel build_model(const ExperimentConfig& cfg) {
    const int din = cfg.nets_time_dependent ? 3 : 2;
    std::vector<int> kw{din};
    for (int l = 0; l < cfg.kappa_net.hidden_layers; ++l) kw.push_back(cfg.kappa_net.width);
    kw.push_back(2);
    std::vector<int> sw{din};
    for (int l = 0; l < cfg.sigma_net.hidden_layers; ++l) sw.push_back(cfg.sigma_net.width);
    sw.push_back(1);
    CorrectionModel model;
    model.kappa_net = mlp_init(kw, Activation::tanh, Activation::abs, cfg.kappa_net.seed);
    model.sigma_net = mlp_init(sw, Activation::leaky_relu, Activation::identity, cfg.sigma_net.seed, 0.2);
    model.validate();
    return model;
}

/// The coarse problem for a given homogenized nodal tensor.
[[nodiscard]] inline CoarseProblem build_problem(const ExperimentConfig& cfg,
                                                 NodalTensorField kappa_star_nodal) {
    CoarseProblem p;
    p.grid = coarse_grid_of(cfg);
    p.tau = cfg.tau;
    p.n_steps = cfg.n_steps();
    p.kappa1 = std::move(kappa_star_nodal);
    p.f = {render_source(cfg.source, p.grid)};
    p.beta = cfg.beta;
    p.validate();
    return p;
}

/// The uncorrected coarse model: transfer coefficient zero, so the first
/// continuum decouples and reproduces the plain homogenized solve.
[[nodiscard]] inline DualTrajectory solve_homogenized_baseline(const CoarseProblem& problem) {
    CoefficientFields coeffs;
    coeffs.kappa1 = problem.kappa1;
    NodalTensorField unit(problem.grid);
    std::fill(unit.k11.begin(), unit.k11.end(), 1.0);
    std::fill(unit.k22.begin(), unit.k22.end(), 1.0);
    coeffs.kappa2 = {unit};
    coeffs.sigma = {std::vector<double>(static_cast<size_t>(problem.grid.node_count()), 0.0)};
    coeffs.f = problem.f;
    coeffs.f2 = problem.f2;
    if (problem.beta == 0.0)
        return solve_dual_linear(problem.grid, coeffs, problem.tau, problem.n_steps, problem.solver);
    return solve_dual_nonlinear(problem.grid, coeffs, problem.beta, problem.tau, problem.n_steps,
                                problem.newton_tol, problem.newton_max_iter)
        .traj;
}

/// End-to-end reference data: generate the fine channel field, solve the
/// fine-scale problem, block-average every step onto the coarse grid.
[[nodiscard]] inline ScalarCellField generate_fine_field(const ExperimentConfig& cfg) {
    const auto spec = load_channel_spec(cfg.channel_spec_path);
    return generate_channel_field(spec, fine_grid_of(cfg));
}

[[nodiscard]] inline TrustedData compute_reference(const ExperimentConfig& cfg,
                                                   const ScalarCellField& fine_kappa) {
    const auto fine = fine_grid_of(cfg);
    const auto f_fine = render_source(cfg.source, fine);
    const auto snaps =
        solve_fine_reference(fine_kappa, cfg.beta, f_fine, cfg.tau, cfg.n_steps());
    return make_trusted_data(snaps, coarse_grid_of(cfg), cfg.tau, cfg.channel_spec_path,
                             cfg.beta == 0.0 ? "cg-1e-10" : "newton-1e-10");
}

}  // namespace mucor

#endif  // MUCOR_EXPERIMENT_HPP
