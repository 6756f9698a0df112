#ifndef MUCOR_LOSS_HPP
#define MUCOR_LOSS_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mucor/fem.hpp"
#include "mucor/field_io.hpp"
#include "mucor/fields.hpp"
#include "mucor/grid.hpp"
#include "mucor/sparse.hpp"

namespace mucor {

/// Coarse-grid reference values with an observation mask. values[k] and
/// mask[k] belong to time step k+1 (time (k+1)*tau); the zero initial
/// state carries no information and is not stored. Masked-out entries are
/// invisible to all loss and gradient code.
struct TrustedData {
    StructuredGrid grid;
    double tau = 0.0;
    std::vector<std::vector<double>> values;
    std::vector<std::vector<uint8_t>> mask;
    // provenance of the reference run
    int fine_refinement = 0;
    std::string field_spec;
    std::string solver_note;

    [[nodiscard]] int n_steps() const { return static_cast<int>(values.size()); }
    [[nodiscard]] const std::vector<double>& values_at(int step) const {
        return values.at(static_cast<size_t>(step - 1));
    }
    [[nodiscard]] const std::vector<uint8_t>& mask_at(int step) const {
        return mask.at(static_cast<size_t>(step - 1));
    }

    [[nodiscard]] size_t observed_count() const {
        size_t c = 0;
        for (const auto& m : mask)
            for (uint8_t b : m) c += b ? 1 : 0;
        return c;
    }

    void validate() const {
        if (tau <= 0.0) throw std::invalid_argument("TrustedData: tau must be positive");
        if (values.empty()) throw std::invalid_argument("TrustedData: no steps");
        if (mask.size() != values.size())
            throw std::invalid_argument("TrustedData: mask/value step counts differ");
        const auto N = static_cast<size_t>(grid.node_count());
        for (size_t k = 0; k < values.size(); ++k) {
            if (values[k].size() != N || mask[k].size() != N)
                throw std::invalid_argument("TrustedData: step " + std::to_string(k + 1) +
                                            " shape does not match the grid");
            for (double v : values[k])
                if (!std::isfinite(v))
                    throw std::invalid_argument("TrustedData: non-finite value at step " +
                                                std::to_string(k + 1));
        }
        if (observed_count() == 0) throw std::invalid_argument("TrustedData: empty observation mask");
    }
};

/// Block-average a fine-grid trajectory (steps 1..N_t) onto the coarse
/// grid, producing fully observed trusted data. Averages live in the
/// coarse solution space, so boundary entries are zero.
[[nodiscard]] inline TrustedData make_trusted_data(const std::vector<NodalField>& fine_steps,
                                                   const StructuredGrid& coarse, double tau,
                                                   std::string field_spec = {},
                                                   std::string solver_note = {}) {
    if (fine_steps.empty()) throw std::invalid_argument("make_trusted_data: no fine snapshots");
    TrustedData data;
    data.grid = coarse;
    data.tau = tau;
    data.fine_refinement = fine_steps.front().grid.refinement;
    data.field_spec = std::move(field_spec);
    data.solver_note = std::move(solver_note);
    const auto N = static_cast<size_t>(coarse.node_count());
    for (const auto& snap : fine_steps) {
        data.values.push_back(coarse_average(snap, coarse).values);
        data.mask.emplace_back(N, 1);
    }
    data.validate();
    return data;
}

namespace loss_detail {

/// (Pv)' M (Pv) where P zeroes masked-out entries.
inline double masked_quadratic(const SparseMatrix& M, const std::vector<double>& v,
                               const std::vector<uint8_t>& mask) {
    std::vector<double> pv(v.size(), 0.0);
    for (size_t i = 0; i < v.size(); ++i)
        if (mask[i]) pv[i] = v[i];
    const auto Mpv = M.apply(pv);
    double s = 0.0;
    for (size_t i = 0; i < v.size(); ++i) s += pv[i] * Mpv[i];
    return s;
}

inline std::vector<double> masked_difference(const std::vector<double>& u,
                                             const std::vector<double>& U,
                                             const std::vector<uint8_t>& mask) {
    std::vector<double> e(u.size(), 0.0);
    for (size_t i = 0; i < u.size(); ++i)
        if (mask[i]) e[i] = u[i] - U[i];
    return e;
}

}  // namespace loss_detail

/// Mass-weighted relative misfit of the first continuum against the
/// trusted data, in percent:
///   100 * sum_n (P e_n)' M (P e_n) / sum_n (P U_n)' M (P U_n),
/// e_n = u1_n - U_n, P the observation mask at step n.
[[nodiscard]] inline double relative_l2_loss(const DualTrajectory& traj, const TrustedData& data,
                                             const SparseMatrix& M) {
    data.validate();
    if (traj.n_steps != data.n_steps())
        throw std::invalid_argument("relative_l2_loss: step counts differ");
    if (traj.grid.node_count() != data.grid.node_count())
        throw std::invalid_argument("relative_l2_loss: grids differ");
    double num = 0.0, den = 0.0;
    for (int k = 1; k <= data.n_steps(); ++k) {
        const auto& mask = data.mask_at(k);
        const auto e = loss_detail::masked_difference(traj.u1[static_cast<size_t>(k)],
                                                      data.values_at(k), mask);
        num += loss_detail::masked_quadratic(M, e, mask);
        den += loss_detail::masked_quadratic(M, data.values_at(k), mask);
    }
    if (den <= 0.0) throw std::runtime_error("relative_l2_loss: zero reference norm over the mask");
    return 100.0 * num / den;
}

/// One row of the per-step error table.
struct ErrorRow {
    int step = 0;
    double t = 0.0;
    double error_percent = 0.0;
};

/// Per-step restriction of the training misfit: for each step n,
///   100 * (P e_n)' M (P e_n) / (P U_n)' M (P U_n).
[[nodiscard]] inline std::vector<ErrorRow> evaluate(const DualTrajectory& traj,
                                                    const TrustedData& data,
                                                    const SparseMatrix& M) {
    data.validate();
    if (traj.n_steps != data.n_steps())
        throw std::invalid_argument("evaluate: step counts differ");
    std::vector<ErrorRow> rows;
    rows.reserve(static_cast<size_t>(data.n_steps()));
    for (int k = 1; k <= data.n_steps(); ++k) {
        const auto& mask = data.mask_at(k);
        const auto e = loss_detail::masked_difference(traj.u1[static_cast<size_t>(k)],
                                                      data.values_at(k), mask);
        const double num = loss_detail::masked_quadratic(M, e, mask);
        const double den = loss_detail::masked_quadratic(M, data.values_at(k), mask);
        if (den <= 0.0)
            throw std::runtime_error("evaluate: zero reference norm at step " + std::to_string(k));
        rows.push_back({k, data.tau * k, 100.0 * num / den});
    }
    return rows;
}

inline void write_error_table(const std::vector<ErrorRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_error_table: cannot write " + path);
    out << "step,t,error_percent\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.step, r.t, r.error_percent);
        out << buf;
    }
}

enum class SampleMode { full, time_prefix, spatial_ratio };

struct SampleSpec {
    SampleMode mode = SampleMode::full;
    double t_star = 0.0;  // time-prefix: keep steps with t_n <= t_star
    double ratio = 1.0;   // spatial-ratio: keep floor(ratio * node_count) nodes
};

/// Restrict the observation mask. Time-prefix keeps all steps with
/// t_n <= t*; spatial-ratio fixes one uniformly drawn node subset (without
/// replacement) and applies it at every step. Deterministic given seed;
/// draws avoid std::uniform_int_distribution, whose output is
/// implementation-defined.
[[nodiscard]] inline TrustedData sample_trusted_data(const TrustedData& full, const SampleSpec& spec,
                                                     uint64_t seed) {
    full.validate();
    TrustedData out = full;
    switch (spec.mode) {
        case SampleMode::full: break;
        case SampleMode::time_prefix: {
            const double guard = full.tau * 1e-9;
            for (int k = 1; k <= full.n_steps(); ++k)
                if (full.tau * k > spec.t_star + guard)
                    out.mask[static_cast<size_t>(k - 1)].assign(
                        static_cast<size_t>(full.grid.node_count()), 0);
            break;
        }
        case SampleMode::spatial_ratio: {
            if (!(spec.ratio > 0.0 && spec.ratio <= 1.0))
                throw std::invalid_argument("sample_trusted_data: ratio must lie in (0, 1]");
            const int N = full.grid.node_count();
            const int keep = static_cast<int>(std::floor(spec.ratio * N));
            if (keep < 1) throw std::invalid_argument("sample_trusted_data: ratio keeps zero nodes");
            std::vector<int> ids(static_cast<size_t>(N));
            for (int i = 0; i < N; ++i) ids[static_cast<size_t>(i)] = i;
            std::mt19937_64 gen(seed);
            for (int i = 0; i < keep; ++i) {  // partial Fisher-Yates
                const auto span = static_cast<uint64_t>(N - i);
                const int j = i + static_cast<int>(gen() % span);
                std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
            }
            std::vector<uint8_t> selected(static_cast<size_t>(N), 0);
            for (int i = 0; i < keep; ++i) selected[static_cast<size_t>(ids[static_cast<size_t>(i)])] = 1;
            for (auto& m : out.mask)
                for (size_t i = 0; i < m.size(); ++i) m[i] = m[i] && selected[i] ? 1 : 0;
            break;
        }
    }
    if (out.observed_count() == 0)
        throw std::runtime_error("sample_trusted_data: sampling left no observed entries");
    return out;
}

/// Store trusted data as one nodal-field CSV per step plus an index file
/// listing the mask alongside; used by the CLI to hand reference data
/// between commands.
inline void store_trusted_data(const TrustedData& data, const std::string& stem) {
    data.validate();
    std::vector<NodalField> snaps;
    snaps.reserve(data.values.size());
    for (const auto& v : data.values) {
        NodalField f(data.grid);
        f.values = v;
        snaps.push_back(std::move(f));
    }
    store_time_series(snaps, data.tau, stem);
    std::ofstream mk(stem + ".mask.csv");
    if (!mk) throw std::runtime_error("store_trusted_data: cannot write " + stem + ".mask.csv");
    mk << "step,node,observed\n";
    for (int k = 1; k <= data.n_steps(); ++k) {
        const auto& m = data.mask_at(k);
        for (size_t i = 0; i < m.size(); ++i)
            mk << k << "," << i << "," << static_cast<int>(m[i]) << "\n";
    }
    std::ofstream meta(stem + ".meta.csv");
    if (!meta) throw std::runtime_error("store_trusted_data: cannot write " + stem + ".meta.csv");
    meta << "fine_refinement,field_spec,solver_note\n";
    meta << data.fine_refinement << "," << data.field_spec << "," << data.solver_note << "\n";
}

[[nodiscard]] inline TrustedData load_trusted_data(const std::string& stem,
                                                   const StructuredGrid& grid) {
    const auto snaps = load_time_series(stem);
    TrustedData data;
    data.grid = grid;
    {
        std::ifstream idx(stem + ".index.csv");
        if (!idx) throw std::runtime_error("load_trusted_data: missing " + stem + ".index.csv");
        std::string line;
        std::getline(idx, line);  // header
        if (!std::getline(idx, line))
            throw std::runtime_error("load_trusted_data: empty index " + stem + ".index.csv");
        const auto p1 = line.find(','), p2 = line.find(',', p1 + 1);
        data.tau = std::stod(line.substr(p1 + 1, p2 - p1 - 1));  // t of step 1
    }
    const auto N = static_cast<size_t>(grid.node_count());
    for (const auto& snap : snaps) {
        if (snap.values.size() != N)
            throw std::runtime_error("load_trusted_data: snapshot size does not match the grid");
        data.values.push_back(snap.values);
        data.mask.emplace_back(N, 1);
    }
    std::ifstream mk(stem + ".mask.csv");
    if (mk) {
        std::string line;
        std::getline(mk, line);  // header
        while (std::getline(mk, line)) {
            if (line.empty()) continue;
            int step = 0, node = 0, obs = 0;
            if (std::sscanf(line.c_str(), "%d,%d,%d", &step, &node, &obs) != 3)
                throw std::runtime_error("load_trusted_data: malformed mask row: " + line);
            data.mask.at(static_cast<size_t>(step - 1)).at(static_cast<size_t>(node)) =
                obs ? 1 : 0;
        }
    }
    std::ifstream meta(stem + ".meta.csv");
    if (meta) {
        std::string line;
        std::getline(meta, line);
        if (std::getline(meta, line)) {
            const auto c1 = line.find(',');
            if (c1 != std::string::npos) {
                data.fine_refinement = std::stoi(line.substr(0, c1));
                const auto c2 = line.find(',', c1 + 1);
                if (c2 != std::string::npos) {
                    data.field_spec = line.substr(c1 + 1, c2 - c1 - 1);
                    data.solver_note = line.substr(c2 + 1);
                }
            }
        }
    }
    data.validate();
    return data;
}

}  // namespace mucor

#endif  // MUCOR_LOSS_HPP
