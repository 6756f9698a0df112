#ifndef MUCOR_TRAIN_HPP
#define MUCOR_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mucor/adam.hpp"
#include "mucor/adjoint.hpp"
#include "mucor/fem.hpp"
#include "mucor/loss.hpp"
#include "mucor/mlp.hpp"

namespace mucor {

enum class GradMode { discrete_adjoint, continuous_adjoint, finite_difference };

[[nodiscard]] inline GradMode grad_mode_from_name(const std::string& s) {
    if (s == "discrete") return GradMode::discrete_adjoint;
    if (s == "continuous") return GradMode::continuous_adjoint;
    if (s == "fd") return GradMode::finite_difference;
    throw std::invalid_argument("unknown gradient mode: " + s +
                                " (expected discrete | continuous | fd)");
}

[[nodiscard]] inline std::string grad_mode_name(GradMode m) {
    switch (m) {
        case GradMode::discrete_adjoint: return "discrete";
        case GradMode::continuous_adjoint: return "continuous";
        case GradMode::finite_difference: return "fd";
    }
    throw std::logic_error("grad_mode_name: unknown mode");
}

/// The two learnable networks, packed back-to-back into one parameter
/// vector so a single optimizer state covers both.
struct CorrectionModel {
    Mlp kappa_net;
    Mlp sigma_net;

    [[nodiscard]] bool time_dependent() const { return kappa_net.input_dim() == 3; }

    void validate() const {
        kappa_net.validate();
        sigma_net.validate();
        if (kappa_net.output_dim() != 2)
            throw std::invalid_argument("CorrectionModel: kappa-net must have 2 outputs");
        if (sigma_net.output_dim() != 1)
            throw std::invalid_argument("CorrectionModel: sigma-net must have 1 output");
        if (kappa_net.input_dim() != sigma_net.input_dim())
            throw std::invalid_argument("CorrectionModel: networks must share the input dimension");
    }

    [[nodiscard]] size_t param_count() const { return kappa_net.theta.size() + sigma_net.theta.size(); }

    [[nodiscard]] std::vector<double> pack() const {
        std::vector<double> theta;
        theta.reserve(param_count());
        theta.insert(theta.end(), kappa_net.theta.begin(), kappa_net.theta.end());
        theta.insert(theta.end(), sigma_net.theta.begin(), sigma_net.theta.end());
        return theta;
    }

    void unpack(const std::vector<double>& theta) {
        if (theta.size() != param_count())
            throw std::invalid_argument("CorrectionModel: packed length " +
                                        std::to_string(theta.size()) + " != " +
                                        std::to_string(param_count()));
        std::copy(theta.begin(), theta.begin() + static_cast<long>(kappa_net.theta.size()),
                  kappa_net.theta.begin());
        std::copy(theta.begin() + static_cast<long>(kappa_net.theta.size()), theta.end(),
                  sigma_net.theta.begin());
    }

    [[nodiscard]] static GradientPair split(const CorrectionModel& model,
                                            const std::vector<double>& packed) {
        GradientPair g;
        g.kappa.assign(packed.begin(), packed.begin() + static_cast<long>(model.kappa_net.theta.size()));
        g.sigma.assign(packed.begin() + static_cast<long>(model.kappa_net.theta.size()), packed.end());
        return g;
    }

    [[nodiscard]] static std::vector<double> join(const GradientPair& g) {
        std::vector<double> packed;
        packed.reserve(g.kappa.size() + g.sigma.size());
        packed.insert(packed.end(), g.kappa.begin(), g.kappa.end());
        packed.insert(packed.end(), g.sigma.begin(), g.sigma.end());
        return packed;
    }
};

/// Everything about one coarse two-continuum setup that training does not
/// change: grid, homogenized tensor, sources, stepping, nonlinearity.
struct CoarseProblem {
    StructuredGrid grid;
    double tau = 0.0;
    int n_steps = 0;
    NodalTensorField kappa1;
    std::vector<std::vector<double>> f;   // nodal source, size 1 or n_steps
    std::vector<std::vector<double>> f2;  // optional second-continuum source
    double beta = 0.0;                    // kappa1 * exp(beta*u1) when > 0
    SolverKind solver = SolverKind::automatic;
    double newton_tol = 1e-11;
    int newton_max_iter = 25;

    void validate() const {
        if (tau <= 0.0) throw std::invalid_argument("CoarseProblem: tau must be positive");
        if (n_steps < 1) throw std::invalid_argument("CoarseProblem: need at least one step");
        if (beta < 0.0) throw std::invalid_argument("CoarseProblem: beta must be nonnegative");
        kappa1.validate_spd();
        if (f.empty()) throw std::invalid_argument("CoarseProblem: missing source");
        const auto N = static_cast<size_t>(grid.node_count());
        for (const auto& fk : f)
            if (fk.size() != N) throw std::invalid_argument("CoarseProblem: source length != nodes");
        for (const auto& fk : f2)
            if (fk.size() != N) throw std::invalid_argument("CoarseProblem: f2 length != nodes");
    }
};

/// One forward evaluation of the corrected model: network coefficient
/// fields, the trajectory, and (linear path) the factorizable systems the
/// adjoint will reuse.
struct ForwardRun {
    DualTrajectory traj;
    CoefficientFields coeffs;
    std::vector<KappaNetEval> kappa_evals;           // size 1 or n_steps
    std::vector<NewtonReport> newton;                // nonlinear path only
    std::unique_ptr<LinearForwardWorkspace> ws;      // linear path only
};

[[nodiscard]] inline ForwardRun forward_correction(const CoarseProblem& problem,
                                                   const CorrectionModel& model) {
    problem.validate();
    model.validate();
    ForwardRun run;
    run.coeffs.kappa1 = problem.kappa1;
    const int slots = model.time_dependent() ? problem.n_steps : 1;
    for (int s = 1; s <= slots; ++s) {
        const double t = model.time_dependent() ? problem.tau * s : 0.0;
        run.kappa_evals.push_back(kappa_net_eval(model.kappa_net, problem.grid, t));
        run.coeffs.kappa2.push_back(run.kappa_evals.back().tensors);
        run.coeffs.sigma.push_back(sigma_net_eval(model.sigma_net, problem.grid, t));
    }
    run.coeffs.f = problem.f;
    run.coeffs.f2 = problem.f2;
    if (problem.beta == 0.0) {
        run.ws = std::make_unique<LinearForwardWorkspace>(problem.grid, run.coeffs, problem.tau,
                                                          problem.n_steps, problem.solver);
        run.traj = solve_dual_linear(*run.ws, run.coeffs);
    } else {
        auto res = solve_dual_nonlinear(problem.grid, run.coeffs, problem.beta, problem.tau,
                                        problem.n_steps, problem.newton_tol,
                                        problem.newton_max_iter);
        run.traj = std::move(res.traj);
        run.newton = std::move(res.newton);
    }
    return run;
}

/// Gradient of relative_l2_loss with respect to both networks, in the
/// requested mode. The finite-difference mode re-solves the forward
/// problem per parameter and exists as the oracle, not for training at
/// scale.
[[nodiscard]] inline GradientPair compute_gradient(const CoarseProblem& problem,
                                                   const CorrectionModel& model,
                                                   const ForwardRun& run, const TrustedData& data,
                                                   GradMode mode, double fd_step = 1e-6) {
    switch (mode) {
        case GradMode::discrete_adjoint:
            if (problem.beta == 0.0)
                return gradient_discrete(*run.ws, run.traj, data, model.kappa_net, model.sigma_net,
                                         run.kappa_evals);
            return gradient_discrete_nonlinear(problem.grid, problem.kappa1, problem.beta,
                                               run.coeffs, run.traj, data, model.kappa_net,
                                               model.sigma_net, run.kappa_evals, problem.solver);
        case GradMode::continuous_adjoint: {
            if (problem.beta != 0.0)
                throw std::invalid_argument(
                    "compute_gradient: the continuous-adjoint mode covers the linear model only");
            const auto lam = adjoint_solve_continuous(*run.ws, run.traj, data);
            return gradient_continuous(*run.ws, lam, run.traj, model.kappa_net, model.sigma_net,
                                       run.kappa_evals);
        }
        case GradMode::finite_difference: {
            const SparseMatrix M = assemble_mass(problem.grid);
            CorrectionModel probe = model;
            auto loss_fn = [&](const std::vector<double>& theta) {
                probe.unpack(theta);
                const auto r = forward_correction(problem, probe);
                return relative_l2_loss(r.traj, data, M);
            };
            const auto g = gradient_fd(loss_fn, model.pack(), fd_step);
            return CorrectionModel::split(model, g);
        }
    }
    throw std::logic_error("compute_gradient: unknown mode");
}

struct TrainingConfig {
    int epochs = 12000;
    double learning_rate = 1e-4;
    uint64_t seed = 0;  // sampling seed (network seeds live in the Mlp instances)
    GradMode grad_mode = GradMode::discrete_adjoint;
    SampleSpec sampling;
    int checkpoint_every = 0;          // epochs between checkpoint rewrites; 0 = final only
    std::string checkpoint_stem;       // empty disables checkpoint files
    int log_every = 0;                 // stdout cadence; 0 = silent

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("TrainingConfig: epochs must be >= 1");
        if (learning_rate <= 0.0)
            throw std::invalid_argument("TrainingConfig: learning rate must be positive");
    }
};

struct TrainResult {
    CorrectionModel model;
    std::vector<double> loss_history;  // one entry per epoch (NaN where skipped)
    int skipped = 0;
};

inline void write_loss_history(const std::vector<double>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_loss_history: cannot write " + path);
    out << "epoch,loss_percent\n";
    char buf[64];
    for (size_t e = 0; e < history.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, history[e]);
        out << buf;
    }
}

/// The optimization loop: forward solve, loss, gradient, Adam update.
/// Non-finite losses or gradients (the sign-unconstrained transfer
/// coefficient can destabilize the coupled system) skip the update and
/// abort after 10 consecutive failures. Fully deterministic given the
/// model seeds and the sampling seed.
[[nodiscard]] inline TrainResult train(const TrainingConfig& cfg, const CoarseProblem& problem,
                                       const CorrectionModel& init_model, const TrustedData& data) {
    cfg.validate();
    problem.validate();
    init_model.validate();
    const TrustedData observed = sample_trusted_data(data, cfg.sampling, cfg.seed);

    TrainResult result;
    result.model = init_model;
    result.loss_history.reserve(static_cast<size_t>(cfg.epochs));
    AdamState opt(result.model.param_count(), cfg.learning_rate);
    std::vector<double> theta = result.model.pack();
    int consecutive_failures = 0;

    auto checkpoint = [&](void) {
        if (cfg.checkpoint_stem.empty()) return;
        save_checkpoint(result.model.kappa_net, cfg.checkpoint_stem + ".kappa");
        save_checkpoint(result.model.sigma_net, cfg.checkpoint_stem + ".sigma");
    };

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        result.model.unpack(theta);
        double loss = std::numeric_limits<double>::quiet_NaN();
        bool ok = false;
        std::string why;
        std::vector<double> grad;
        try {
            const ForwardRun run = forward_correction(problem, result.model);
            const SparseMatrix* M = nullptr;
            SparseMatrix M_local;
            if (run.ws) {
                M = &run.ws->M;
            } else {
                M_local = assemble_mass(problem.grid);
                M = &M_local;
            }
            loss = relative_l2_loss(run.traj, observed, *M);
            if (std::isfinite(loss)) {
                grad = CorrectionModel::join(
                    compute_gradient(problem, result.model, run, observed, cfg.grad_mode));
                ok = true;
                for (double g : grad)
                    if (!std::isfinite(g)) {
                        ok = false;
                        why = "non-finite gradient";
                        break;
                    }
            } else {
                why = "non-finite loss";
            }
        } catch (const std::exception& e) {
            why = e.what();
        }
        result.loss_history.push_back(loss);
        if (ok) {
            consecutive_failures = 0;
            adam_step(opt, theta, grad);
        } else {
            ++result.skipped;
            ++consecutive_failures;
            std::fprintf(stderr, "[train] epoch %d skipped: %s\n", epoch, why.c_str());
            if (consecutive_failures >= 10)
                throw std::runtime_error("train: 10 consecutive failed epochs, last: " + why);
        }
        if (cfg.log_every > 0 && (epoch % cfg.log_every == 0 || epoch == cfg.epochs))
            std::fprintf(stdout, "[train] epoch %d loss %.6f%%\n", epoch, loss);
        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            result.model.unpack(theta);
            checkpoint();
        }
    }
    result.model.unpack(theta);
    checkpoint();
    return result;
}

}  // namespace mucor

#endif  // MUCOR_TRAIN_HPP
