#ifndef MUCOR_ADJOINT_HPP
#define MUCOR_ADJOINT_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mucor/fem.hpp"
#include "mucor/loss.hpp"
#include "mucor/mlp.hpp"

namespace mucor {

/// Parameter gradients of the training loss for the two networks.
struct GradientPair {
    std::vector<double> kappa;  // with respect to the kappa-net parameters
    std::vector<double> sigma;  // with respect to the sigma-net parameters
};

namespace adj_detail {

/// Loss value plus its derivative with respect to the first-continuum
/// states: source[k-1] = (200/den) * P M P e_k on the full node set.
struct LossParts {
    double num = 0.0, den = 0.0, loss = 0.0;
    std::vector<std::vector<double>> source;
};

[[nodiscard]] inline LossParts linearize_loss(const DualTrajectory& traj, const TrustedData& data,
                                              const SparseMatrix& M) {
    data.validate();
    if (traj.n_steps != data.n_steps())
        throw std::invalid_argument("linearize_loss: step counts differ");
    LossParts parts;
    parts.source.resize(static_cast<size_t>(data.n_steps()));
    std::vector<std::vector<double>> masked_err(static_cast<size_t>(data.n_steps()));
    for (int k = 1; k <= data.n_steps(); ++k) {
        const auto& mask = data.mask_at(k);
        masked_err[static_cast<size_t>(k - 1)] = loss_detail::masked_difference(
            traj.u1[static_cast<size_t>(k)], data.values_at(k), mask);
        const auto Me = M.apply(masked_err[static_cast<size_t>(k - 1)]);
        double s = 0.0;
        for (size_t i = 0; i < Me.size(); ++i)
            s += masked_err[static_cast<size_t>(k - 1)][i] * Me[i];
        parts.num += s;
        parts.den += loss_detail::masked_quadratic(M, data.values_at(k), mask);
    }
    if (parts.den <= 0.0)
        throw std::runtime_error("linearize_loss: zero reference norm over the mask");
    parts.loss = 100.0 * parts.num / parts.den;
    const double scale = 200.0 / parts.den;
    for (int k = 1; k <= data.n_steps(); ++k) {
        const auto& mask = data.mask_at(k);
        const auto Me = M.apply(masked_err[static_cast<size_t>(k - 1)]);
        auto& src = parts.source[static_cast<size_t>(k - 1)];
        src.assign(Me.size(), 0.0);
        for (size_t i = 0; i < Me.size(); ++i)
            if (mask[i]) src[i] = scale * Me[i];
    }
    return parts;
}

/// Per-step (or accumulated, for time-independent nets) cotangents of the
/// nodal coefficient fields, waiting to be pulled through the networks.
class NetCotangents {
  public:
    NetCotangents(const StructuredGrid& grid, int n_steps, bool time_dependent)
        : grid_(&grid), time_dep_(time_dependent) {
        const auto N = static_cast<size_t>(grid.node_count());
        const size_t slots = time_dependent ? static_cast<size_t>(n_steps) : 1;
        ck11_.assign(slots, std::vector<double>(N, 0.0));
        ck22_.assign(slots, std::vector<double>(N, 0.0));
        csigma_.assign(slots, std::vector<double>(N, 0.0));
    }

    /// Add step k's contribution: the derivative of
    ///   -w * lambda' (dB/dtheta) x
    /// with respect to the nodal kappa2 tensor entries and sigma values.
    void accumulate(int k, const DirichletMap& dm, const SparseMatrix& M,
                    const std::vector<double>& lam1_full, const std::vector<double>& lam2_full,
                    const std::vector<double>& u1_full, const std::vector<double>& u2_full,
                    double weight) {
        const size_t slot = time_dep_ ? static_cast<size_t>(k - 1) : 0;
        const auto kv = stiffness_kappa_vjp(*grid_, lam2_full, u2_full);
        auto& c11 = ck11_[slot];
        auto& c22 = ck22_[slot];
        for (size_t m = 0; m < c11.size(); ++m) {
            c11[m] -= weight * kv.k11[m];
            c22[m] -= weight * kv.k22[m];
        }
        std::vector<double> diff(u1_full.size());
        for (size_t i = 0; i < diff.size(); ++i) diff[i] = u1_full[i] - u2_full[i];
        const auto mdiff = M.apply(diff);
        auto& cs = csigma_[slot];
        for (int id : dm.interior) {
            const auto i = static_cast<size_t>(id);
            cs[i] -= weight * (lam1_full[i] - lam2_full[i]) * mdiff[i];
        }
    }

    [[nodiscard]] GradientPair finalize(const Mlp& kappa_net, const Mlp& sigma_net,
                                        const std::vector<KappaNetEval>& kappa_evals,
                                        double tau) const {
        const auto N = static_cast<size_t>(grid_->node_count());
        std::vector<double> kin, kcot, sin_, scot;
        for (size_t s = 0; s < ck11_.size(); ++s) {
            const double t = time_dep_ ? tau * static_cast<double>(s + 1) : 0.0;
            const auto& ev = kappa_evals.at(kappa_evals.size() == 1 ? 0 : s);
            const auto kpts = node_inputs(kappa_net, *grid_, t);
            kin.insert(kin.end(), kpts.begin(), kpts.end());
            const auto spts = node_inputs(sigma_net, *grid_, t);
            sin_.insert(sin_.end(), spts.begin(), spts.end());
            for (size_t m = 0; m < N; ++m) {
                kcot.push_back(static_cast<double>(ev.dfac1[m]) * ck11_[s][m]);
                kcot.push_back(static_cast<double>(ev.dfac2[m]) * ck22_[s][m]);
                scot.push_back(csigma_[s][m]);
            }
        }
        GradientPair g;
        g.kappa = mlp_vjp(kappa_net, kin, kcot);
        g.sigma = mlp_vjp(sigma_net, sin_, scot);
        return g;
    }

  private:
    const StructuredGrid* grid_;
    bool time_dep_;
    std::vector<std::vector<double>> ck11_, ck22_, csigma_;
};

inline void check_gradient_inputs(const DualTrajectory& traj, const Mlp& kappa_net,
                                  const Mlp& sigma_net,
                                  const std::vector<KappaNetEval>& kappa_evals) {
    if (kappa_net.input_dim() != sigma_net.input_dim())
        throw std::invalid_argument("gradient: the two networks must share the input dimension");
    const bool time_dep = kappa_net.input_dim() == 3;
    const size_t want = time_dep ? static_cast<size_t>(traj.n_steps) : 1;
    if (kappa_evals.size() != want)
        throw std::invalid_argument("gradient: expected " + std::to_string(want) +
                                    " kappa-net evaluations, got " +
                                    std::to_string(kappa_evals.size()));
}

}  // namespace adj_detail

/// Exact gradient of relative_l2_loss under the discrete scheme: the
/// backward recursion
///   B_k' lam_k = g_k + blockdiag(M/tau) lam_{k+1},   lam_{Nt+1} = 0
/// through transposed solves of the forward systems, with parameter
/// cotangents pulled through the stiffness assembly, the transfer-term
/// scaling, and finally the networks.
[[nodiscard]] inline GradientPair gradient_discrete(const LinearForwardWorkspace& ws,
                                                    const DualTrajectory& traj,
                                                    const TrustedData& data, const Mlp& kappa_net,
                                                    const Mlp& sigma_net,
                                                    const std::vector<KappaNetEval>& kappa_evals) {
    adj_detail::check_gradient_inputs(traj, kappa_net, sigma_net, kappa_evals);
    const auto lin = adj_detail::linearize_loss(traj, data, ws.M);
    const int n = static_cast<int>(ws.dm.interior.size());
    adj_detail::NetCotangents acc(ws.grid, traj.n_steps, kappa_net.input_dim() == 3);
    std::vector<double> lam1(static_cast<size_t>(n), 0.0), lam2(static_cast<size_t>(n), 0.0);
    std::vector<double> rhs(static_cast<size_t>(2 * n)), sol;
    for (int k = traj.n_steps; k >= 1; --k) {
        const auto m1 = ws.Mi.apply(lam1);
        const auto m2 = ws.Mi.apply(lam2);
        const auto g_int = ws.dm.restrict_vec(lin.source[static_cast<size_t>(k - 1)]);
        for (int i = 0; i < n; ++i) {
            rhs[static_cast<size_t>(i)] = g_int[static_cast<size_t>(i)] +
                                          m1[static_cast<size_t>(i)] / ws.tau;
            rhs[static_cast<size_t>(n + i)] = m2[static_cast<size_t>(i)] / ws.tau;
        }
        const auto rep = ws.system_at(k).solve(rhs, sol, /*transpose=*/true);
        if (!rep.converged)
            throw std::runtime_error("gradient_discrete: transposed solve stalled at step " +
                                     std::to_string(k) + ", residual " +
                                     std::to_string(rep.residual));
        lam1.assign(sol.begin(), sol.begin() + n);
        lam2.assign(sol.begin() + n, sol.end());
        acc.accumulate(k, ws.dm, ws.M, ws.dm.expand(lam1, ws.grid.node_count()),
                       ws.dm.expand(lam2, ws.grid.node_count()), traj.u1[static_cast<size_t>(k)],
                       traj.u2[static_cast<size_t>(k)], 1.0);
    }
    return acc.finalize(kappa_net, sigma_net, kappa_evals, traj.tau);
}

/// Backward Euler on the continuous adjoint system (primal operator, not
/// its transpose), marching from lambda(T) = 0 with the misfit source
///   (200 / (tau * den)) P M P (u1_k - U_k)
/// in the first continuum. The scaling makes the assembled gradient
/// approximate the same percentage-loss derivative the discrete mode
/// computes exactly; the two agree in the limit tau, h -> 0.
[[nodiscard]] inline DualTrajectory adjoint_solve_continuous(const LinearForwardWorkspace& ws,
                                                             const DualTrajectory& traj,
                                                             const TrustedData& data) {
    const auto lin = adj_detail::linearize_loss(traj, data, ws.M);
    const int n = static_cast<int>(ws.dm.interior.size());
    DualTrajectory lam(ws.grid, ws.tau, traj.n_steps);
    std::vector<double> l1(static_cast<size_t>(n), 0.0), l2(static_cast<size_t>(n), 0.0);
    std::vector<double> rhs(static_cast<size_t>(2 * n)), sol;
    for (int k = traj.n_steps; k >= 1; --k) {
        const auto m1 = ws.Mi.apply(l1);
        const auto m2 = ws.Mi.apply(l2);
        const auto g_int = ws.dm.restrict_vec(lin.source[static_cast<size_t>(k - 1)]);
        for (int i = 0; i < n; ++i) {
            rhs[static_cast<size_t>(i)] = g_int[static_cast<size_t>(i)] / ws.tau +
                                          m1[static_cast<size_t>(i)] / ws.tau;
            rhs[static_cast<size_t>(n + i)] = m2[static_cast<size_t>(i)] / ws.tau;
        }
        const auto rep = ws.system_at(k).solve(rhs, sol, /*transpose=*/false);
        if (!rep.converged)
            throw std::runtime_error("adjoint_solve_continuous: solve stalled at step " +
                                     std::to_string(k) + ", residual " +
                                     std::to_string(rep.residual));
        l1.assign(sol.begin(), sol.begin() + n);
        l2.assign(sol.begin() + n, sol.end());
        lam.u1[static_cast<size_t>(k)] = ws.dm.expand(l1, ws.grid.node_count());
        lam.u2[static_cast<size_t>(k)] = ws.dm.expand(l2, ws.grid.node_count());
    }
    return lam;
}

/// Rectangle-rule assembly (weight tau, steps 1..N_t) of the continuous
/// gradient formula from an adjoint trajectory produced by
/// adjoint_solve_continuous.
[[nodiscard]] inline GradientPair gradient_continuous(const LinearForwardWorkspace& ws,
                                                      const DualTrajectory& lam,
                                                      const DualTrajectory& traj,
                                                      const Mlp& kappa_net, const Mlp& sigma_net,
                                                      const std::vector<KappaNetEval>& kappa_evals) {
    adj_detail::check_gradient_inputs(traj, kappa_net, sigma_net, kappa_evals);
    if (lam.n_steps != traj.n_steps)
        throw std::invalid_argument("gradient_continuous: trajectory step counts differ");
    adj_detail::NetCotangents acc(ws.grid, traj.n_steps, kappa_net.input_dim() == 3);
    for (int k = 1; k <= traj.n_steps; ++k)
        acc.accumulate(k, ws.dm, ws.M, lam.u1[static_cast<size_t>(k)],
                       lam.u2[static_cast<size_t>(k)], traj.u1[static_cast<size_t>(k)],
                       traj.u2[static_cast<size_t>(k)], ws.tau);
    return acc.finalize(kappa_net, sigma_net, kappa_evals, traj.tau);
}

/// Discrete-adjoint gradient for the state-dependent first-continuum
/// permeability: the backward recursion runs through the transposed full
/// Newton Jacobian at each converged step (implicit function theorem), so
/// the result is exact up to the Newton tolerance.
[[nodiscard]] inline GradientPair gradient_discrete_nonlinear(
    const StructuredGrid& grid, const NodalTensorField& kappa1_star, double beta,
    const CoefficientFields& coeffs, const DualTrajectory& traj, const TrustedData& data,
    const Mlp& kappa_net, const Mlp& sigma_net, const std::vector<KappaNetEval>& kappa_evals,
    SolverKind kind = SolverKind::automatic) {
    adj_detail::check_gradient_inputs(traj, kappa_net, sigma_net, kappa_evals);
    const DirichletMap dm(grid);
    const SparseMatrix M = assemble_mass(grid);
    const SparseMatrix Mi = restrict_to(M, dm.interior);
    const auto lin = adj_detail::linearize_loss(traj, data, M);
    const int n = static_cast<int>(dm.interior.size());
    adj_detail::NetCotangents acc(grid, traj.n_steps, kappa_net.input_dim() == 3);
    std::vector<double> lam1(static_cast<size_t>(n), 0.0), lam2(static_cast<size_t>(n), 0.0);
    std::vector<double> rhs(static_cast<size_t>(2 * n)), sol;
    for (int k = traj.n_steps; k >= 1; --k) {
        const auto& u1 = traj.u1[static_cast<size_t>(k)];
        CoupledSystem sys;
        sys.n = n;
        sys.tau = traj.tau;
        sys.Mi = &Mi;
        const auto k1 = fem_detail::scaled_kappa1(kappa1_star, beta, u1);
        sys.A1i = fem_detail::csr_sum(
            restrict_to(assemble_stiffness(grid, k1), dm.interior),
            restrict_to(fem_detail::assemble_newton_extra(grid, kappa1_star, beta, u1),
                        dm.interior));
        sys.A2i = restrict_to(assemble_stiffness(grid, coeffs.kappa2_at(k)), dm.interior);
        sys.sigma_int = dm.restrict_vec(coeffs.sigma_at(k));
        sys.kind = kind;
        const auto m1 = Mi.apply(lam1);
        const auto m2 = Mi.apply(lam2);
        const auto g_int = dm.restrict_vec(lin.source[static_cast<size_t>(k - 1)]);
        for (int i = 0; i < n; ++i) {
            rhs[static_cast<size_t>(i)] = g_int[static_cast<size_t>(i)] +
                                          m1[static_cast<size_t>(i)] / traj.tau;
            rhs[static_cast<size_t>(n + i)] = m2[static_cast<size_t>(i)] / traj.tau;
        }
        const auto rep = sys.solve(rhs, sol, /*transpose=*/true);
        if (!rep.converged)
            throw std::runtime_error(
                "gradient_discrete_nonlinear: transposed solve stalled at step " +
                std::to_string(k));
        lam1.assign(sol.begin(), sol.begin() + n);
        lam2.assign(sol.begin() + n, sol.end());
        acc.accumulate(k, dm, M, dm.expand(lam1, grid.node_count()),
                       dm.expand(lam2, grid.node_count()), traj.u1[static_cast<size_t>(k)],
                       traj.u2[static_cast<size_t>(k)], 1.0);
    }
    return acc.finalize(kappa_net, sigma_net, kappa_evals, traj.tau);
}

/// Central-difference gradient of an arbitrary loss closure; the testing
/// oracle for the adjoint modes. O(#theta) loss evaluations.
template <class LossFn>
[[nodiscard]] std::vector<double> gradient_fd(LossFn&& loss, std::vector<double> theta,
                                              double step) {
    if (step <= 0.0) throw std::invalid_argument("gradient_fd: step must be positive");
    std::vector<double> g(theta.size());
    for (size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + step;
        const double lp = loss(theta);
        theta[i] = keep - step;
        const double lm = loss(theta);
        theta[i] = keep;
        if (!std::isfinite(lp) || !std::isfinite(lm))
            throw std::runtime_error("gradient_fd: non-finite loss near component " +
                                     std::to_string(i));
        g[i] = (lp - lm) / (2.0 * step);
    }
    return g;
}

}  // namespace mucor

#endif  // MUCOR_ADJOINT_HPP
