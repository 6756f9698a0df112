// mucor: multiscale-correction experiments from the command line.
//
// Subcommands cover the full pipeline: gen-field (fine permeability from a
// channel spec), reference (fine solve + block averaging), homogenize
// (per-block effective tensors), solve (coarse model, homogenized or
// corrected), train (network optimization), eval (per-step error table),
// gradcheck (adjoint vs finite differences). Every command writes its
// artifacts plus a manifest JSON into the output directory and exits 0 on
// success, 1 with a one-line `error: ...` otherwise.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mucor/mucor.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonOpts {
    std::string config_path;
    std::string output_override;
    std::string grad_mode_override;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

mucor::ExperimentConfig load_cfg(const CommonOpts& opts) {
    auto cfg = mucor::load_experiment_config(opts.config_path);
    if (!opts.output_override.empty())
        cfg.output_dir = fs::absolute(opts.output_override).lexically_normal().string();
    if (opts.seed_given) {
        cfg.kappa_net.seed = opts.seed;
        cfg.sigma_net.seed = opts.seed + 1;
        cfg.training.seed = opts.seed;
    }
    if (!opts.grad_mode_override.empty())
        cfg.training.grad_mode = mucor::grad_mode_from_name(opts.grad_mode_override);
    fs::create_directories(cfg.output_dir);
    return cfg;
}

/// Collects input/output artifact hashes and writes
/// <output>/<command>.manifest.json. Manifests carry wall time, so they
/// are the one artifact class exempt from bit-exact replay comparisons.
class ManifestWriter {
  public:
    ManifestWriter(std::string command, const mucor::ExperimentConfig& cfg)
        : command_(std::move(command)), dir_(cfg.output_dir),
          t0_(std::chrono::steady_clock::now()) {
        j_["command"] = command_;
        j_["config"] = cfg.config_path;
        j_["config_sha256"] = mucor::sha256_file(cfg.config_path);
        j_["seeds"] = {{"kappa_net", cfg.kappa_net.seed},
                       {"sigma_net", cfg.sigma_net.seed},
                       {"training", cfg.training.seed}};
        j_["threads"] = mucor::max_threads();
        j_["versions"] = {{"mucor", kVersion}, {"compiler", __VERSION__}};
    }

    void input(const fs::path& p) { inputs_.push_back(p); }
    void output(const fs::path& p) { outputs_.push_back(p); }

    /// Register every file of a time-series stem (index + steps + extras).
    void output_stem(const std::string& stem) {
        const fs::path dir = fs::path(stem).parent_path();
        const std::string base = fs::path(stem).filename().string();
        for (const auto& entry : fs::directory_iterator(dir)) {
            const auto name = entry.path().filename().string();
            if (name.rfind(base + ".", 0) == 0) outputs_.push_back(entry.path());
        }
    }

    void finish() {
        json in = json::object(), out = json::object();
        for (const auto& p : inputs_) in[p.string()] = mucor::sha256_file(p.string());
        for (const auto& p : outputs_)
            out[fs::relative(p, dir_).string()] = mucor::sha256_file(p.string());
        j_["inputs"] = in;
        j_["outputs"] = out;
        j_["wall_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
        std::ofstream f(dir_ / (command_ + ".manifest.json"));
        if (!f) throw std::runtime_error("cannot write manifest in " + dir_.string());
        f << j_.dump(2) << "\n";
    }

  private:
    std::string command_;
    fs::path dir_;
    std::chrono::steady_clock::time_point t0_;
    json j_;
    std::vector<fs::path> inputs_, outputs_;
};

fs::path fine_kappa_path(const mucor::ExperimentConfig& cfg) {
    return fs::path(cfg.output_dir) / "fine_kappa.csv";
}
fs::path kappa_star_path(const mucor::ExperimentConfig& cfg) {
    return fs::path(cfg.output_dir) / "kappa_star.csv";
}
std::string reference_stem(const mucor::ExperimentConfig& cfg) {
    return (fs::path(cfg.output_dir) / "reference").string();
}
std::string default_model_stem(const mucor::ExperimentConfig& cfg) {
    return (fs::path(cfg.output_dir) / "model").string();
}

void require_file(const fs::path& p, const std::string& producer) {
    if (!fs::exists(p))
        throw std::runtime_error("missing input " + p.string() + " (run `mucor " + producer +
                                 "` first)");
}

mucor::ScalarCellField load_fine_field_checked(const mucor::ExperimentConfig& cfg) {
    require_file(fine_kappa_path(cfg), "gen-field");
    auto field = mucor::load_cell_field(fine_kappa_path(cfg).string());
    const auto fine = mucor::fine_grid_of(cfg);
    if (field.grid.nx != fine.nx || field.grid.ny != fine.ny)
        throw std::runtime_error("fine field " + fine_kappa_path(cfg).string() +
                                 " does not match the configured grid");
    // stored grids do not carry block structure; rebuild on the refined grid
    mucor::ScalarCellField on_fine(fine, std::move(field.values));
    return on_fine;
}

mucor::NodalTensorField load_kappa_star_nodal(const mucor::ExperimentConfig& cfg,
                                              ManifestWriter& man) {
    require_file(kappa_star_path(cfg), "homogenize");
    man.input(kappa_star_path(cfg));
    auto tensors = mucor::load_tensor_field(kappa_star_path(cfg).string());
    const auto coarse = mucor::coarse_grid_of(cfg);
    if (tensors.grid.nx != coarse.nx || tensors.grid.ny != coarse.ny)
        throw std::runtime_error("homogenized field " + kappa_star_path(cfg).string() +
                                 " does not match the configured coarse grid");
    return mucor::interpolate_to_nodes(tensors);
}

mucor::TrustedData load_reference_checked(const mucor::ExperimentConfig& cfg, ManifestWriter& man) {
    const auto stem = reference_stem(cfg);
    require_file(stem + ".index.csv", "reference");
    man.input(stem + ".index.csv");
    return mucor::load_trusted_data(stem, mucor::coarse_grid_of(cfg));
}

mucor::CorrectionModel load_model_checked(const std::string& stem) {
    for (const char* part : {".kappa", ".sigma"}) {
        for (const char* ext : {".json", ".bin"}) {
            const fs::path p = stem + part + ext;
            if (!fs::exists(p))
                throw std::runtime_error("missing model checkpoint " + p.string() +
                                         " (run `mucor train` first)");
        }
    }
    mucor::CorrectionModel model;
    model.kappa_net = mucor::load_checkpoint(stem + ".kappa");
    model.sigma_net = mucor::load_checkpoint(stem + ".sigma");
    model.validate();
    return model;
}

// ---------------------------------------------------------------------------

int cmd_gen_field(const mucor::ExperimentConfig& cfg) {
    ManifestWriter man("gen-field", cfg);
    man.input(cfg.channel_spec_path);
    const auto field = mucor::generate_fine_field(cfg);
    mucor::store_field(field, fine_kappa_path(cfg).string());
    man.output(fine_kappa_path(cfg));
    man.finish();
    std::printf("gen-field: wrote %s (%d x %d cells)\n", fine_kappa_path(cfg).string().c_str(),
                field.grid.nx, field.grid.ny);
    return 0;
}

int cmd_reference(const mucor::ExperimentConfig& cfg) {
    ManifestWriter man("reference", cfg);
    man.input(fine_kappa_path(cfg));
    const auto fine_kappa = load_fine_field_checked(cfg);
    const auto data = mucor::compute_reference(cfg, fine_kappa);
    mucor::store_trusted_data(data, reference_stem(cfg));
    man.output_stem(reference_stem(cfg));
    man.finish();
    std::printf("reference: %d steps averaged onto the %d x %d coarse grid\n", data.n_steps(),
                cfg.nx, cfg.ny);
    return 0;
}

int cmd_homogenize(const mucor::ExperimentConfig& cfg) {
    ManifestWriter man("homogenize", cfg);
    man.input(fine_kappa_path(cfg));
    const auto fine_kappa = load_fine_field_checked(cfg);
    const auto tensors = mucor::upscale(fine_kappa, mucor::coarse_grid_of(cfg));
    mucor::store_field(tensors, kappa_star_path(cfg).string());
    man.output(kappa_star_path(cfg));
    man.finish();
    std::printf("homogenize: wrote %s (%d blocks, refinement %d)\n",
                kappa_star_path(cfg).string().c_str(), tensors.grid.cell_count(), cfg.refinement);
    return 0;
}

int cmd_solve(const mucor::ExperimentConfig& cfg, const std::string& model_stem) {
    ManifestWriter man("solve", cfg);
    const auto kappa_star = load_kappa_star_nodal(cfg, man);
    const auto problem = mucor::build_problem(cfg, kappa_star);
    mucor::DualTrajectory traj;
    if (model_stem.empty()) {
        traj = mucor::solve_homogenized_baseline(problem);
    } else {
        for (const char* part : {".kappa.json", ".kappa.bin", ".sigma.json", ".sigma.bin"})
            man.input(model_stem + part);
        const auto model = load_model_checked(model_stem);
        traj = mucor::forward_correction(problem, model).traj;
    }
    const auto out = fs::path(cfg.output_dir);
    std::vector<mucor::NodalField> u1, u2;
    for (int k = 1; k <= traj.n_steps; ++k) {
        mucor::NodalField s1(problem.grid), s2(problem.grid);
        s1.values = traj.u1[static_cast<size_t>(k)];
        s2.values = traj.u2[static_cast<size_t>(k)];
        u1.push_back(std::move(s1));
        u2.push_back(std::move(s2));
    }
    mucor::store_time_series(u1, cfg.tau, (out / "solution_u1").string());
    man.output_stem((out / "solution_u1").string());
    if (!model_stem.empty()) {
        mucor::store_time_series(u2, cfg.tau, (out / "solution_u2").string());
        man.output_stem((out / "solution_u2").string());
    }
    man.finish();
    std::printf("solve: %s model, %d steps written\n",
                model_stem.empty() ? "homogenized" : "corrected", traj.n_steps);
    return 0;
}

int cmd_train(const mucor::ExperimentConfig& cfg) {
    ManifestWriter man("train", cfg);
    const auto kappa_star = load_kappa_star_nodal(cfg, man);
    const auto data = load_reference_checked(cfg, man);
    const auto problem = mucor::build_problem(cfg, kappa_star);
    if (data.n_steps() != problem.n_steps)
        throw std::runtime_error("reference has " + std::to_string(data.n_steps()) +
                                 " steps but the config asks for " +
                                 std::to_string(problem.n_steps));
    auto model = mucor::build_model(cfg);
    auto tcfg = cfg.training;
    tcfg.checkpoint_stem = default_model_stem(cfg);
    const auto result = mucor::train(tcfg, problem, model, data);
    const auto out = fs::path(cfg.output_dir);
    mucor::write_loss_history(result.loss_history, (out / "loss_history.csv").string());
    man.output(out / "loss_history.csv");
    for (const char* part : {".kappa.json", ".kappa.bin", ".sigma.json", ".sigma.bin"})
        man.output(default_model_stem(cfg) + part);
    man.finish();
    std::printf("train: %d epochs, final loss %.6f%%, %d skipped, checkpoints at %s.{kappa,sigma}\n",
                tcfg.epochs, result.loss_history.back(), result.skipped,
                default_model_stem(cfg).c_str());
    return 0;
}

int cmd_eval(const mucor::ExperimentConfig& cfg, const std::string& model_stem_opt) {
    ManifestWriter man("eval", cfg);
    const auto kappa_star = load_kappa_star_nodal(cfg, man);
    const auto data = load_reference_checked(cfg, man);
    const auto problem = mucor::build_problem(cfg, kappa_star);
    const std::string stem = model_stem_opt.empty() ? default_model_stem(cfg) : model_stem_opt;
    for (const char* part : {".kappa.json", ".kappa.bin", ".sigma.json", ".sigma.bin"})
        man.input(stem + part);
    const auto model = load_model_checked(stem);
    const mucor::SparseMatrix M = mucor::assemble_mass(problem.grid);

    const auto corrected = mucor::forward_correction(problem, model).traj;
    const auto rows = mucor::evaluate(corrected, data, M);
    const auto baseline = mucor::solve_homogenized_baseline(problem);
    const auto base_rows = mucor::evaluate(baseline, data, M);

    const auto out = fs::path(cfg.output_dir);
    mucor::write_error_table(rows, (out / "error_table.csv").string());
    mucor::write_error_table(base_rows, (out / "baseline_error_table.csv").string());
    man.output(out / "error_table.csv");
    man.output(out / "baseline_error_table.csv");
    man.finish();
    for (size_t i = 0; i < rows.size(); ++i)
        std::printf("eval: t=%.6g corrected %.6f%% homogenized %.6f%%\n", rows[i].t,
                    rows[i].error_percent, base_rows[i].error_percent);
    return 0;
}

int cmd_gradcheck(const mucor::ExperimentConfig& cfg) {
    ManifestWriter man("gradcheck", cfg);
    // Self-contained small instance: 3x3 coarse grid, two steps, tiny nets.
    mucor::CoarseProblem p;
    p.grid = mucor::build_grid(3, 3);
    p.tau = 0.1;
    p.n_steps = 2;
    p.kappa1 = mucor::NodalTensorField(p.grid);
    std::fill(p.kappa1.k11.begin(), p.kappa1.k11.end(), 1.0);
    std::fill(p.kappa1.k22.begin(), p.kappa1.k22.end(), 1.0);
    mucor::SourceSpec src;
    src.kind = "sine";
    src.amplitude = 2.0;
    src.offset = 1.0;
    p.f = {mucor::render_source(src, p.grid)};
    p.beta = cfg.beta;

    mucor::CorrectionModel model;
    model.kappa_net = mucor::mlp_init({2, 4, 2}, mucor::Activation::tanh, mucor::Activation::abs,
                                      cfg.kappa_net.seed);
    model.sigma_net = mucor::mlp_init({2, 4, 1}, mucor::Activation::leaky_relu,
                                      mucor::Activation::identity, cfg.sigma_net.seed, 0.2);

    // Trusted data from a perturbed-coefficient run, so the misfit and its
    // gradient are nonzero.
    auto p_ref = p;
    for (auto& v : p_ref.kappa1.k11) v *= 1.3;
    for (auto& v : p_ref.kappa1.k22) v *= 0.8;
    const auto ref_traj = mucor::solve_homogenized_baseline(p_ref);
    std::vector<mucor::NodalField> snaps;
    for (int k = 1; k <= p.n_steps; ++k) {
        mucor::NodalField s(p.grid);
        s.values = ref_traj.u1[static_cast<size_t>(k)];
        snaps.push_back(std::move(s));
    }
    mucor::TrustedData data;
    data.grid = p.grid;
    data.tau = p.tau;
    for (const auto& s : snaps) {
        data.values.push_back(s.values);
        data.mask.emplace_back(static_cast<size_t>(p.grid.node_count()), 1);
    }
    data.validate();

    const auto run = mucor::forward_correction(p, model);
    const auto mode = cfg.training.grad_mode == mucor::GradMode::finite_difference
                          ? mucor::GradMode::discrete_adjoint
                          : cfg.training.grad_mode;
    const auto adj = mucor::CorrectionModel::join(
        mucor::compute_gradient(p, model, run, data, mode));
    const auto fd = mucor::CorrectionModel::join(
        mucor::compute_gradient(p, model, run, data, mucor::GradMode::finite_difference,
                                cfg.fd_step));

    double max_rel = 0.0;
    size_t compared = 0, skipped_small = 0;
    for (size_t i = 0; i < fd.size(); ++i) {
        const double scale = std::max(std::fabs(fd[i]), std::fabs(adj[i]));
        if (scale <= 1e-12) {
            ++skipped_small;
            continue;
        }
        max_rel = std::max(max_rel, std::fabs(adj[i] - fd[i]) / scale);
        ++compared;
    }
    const double tol = 1e-5;
    const bool pass = max_rel <= tol;

    const auto out = fs::path(cfg.output_dir) / "gradcheck.txt";
    std::ofstream rep(out);
    rep << "mode: " << mucor::grad_mode_name(mode) << "\n"
        << "fd_step: " << cfg.fd_step << "\n"
        << "parameters: " << fd.size() << "\n"
        << "compared: " << compared << "\n"
        << "skipped_below_1e-12: " << skipped_small << "\n"
        << "max_rel_err: " << max_rel << "\n"
        << "tolerance: " << tol << "\n"
        << "result: " << (pass ? "PASS" : "FAIL") << "\n";
    rep.close();
    man.output(out);
    man.finish();
    std::printf("gradcheck: max rel err %.3e over %zu components (tolerance %.0e): %s\n", max_rel,
                compared, tol, pass ? "PASS" : "FAIL");
    return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiscale flow-model correction experiments"};
    app.require_subcommand(1);
    CommonOpts opts;
    std::string solve_model, eval_model;

    auto add_common = [&opts](CLI::App* sub, bool needs_grad_mode) {
        sub->add_option("--config", opts.config_path, "experiment config JSON")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--output", opts.output_override, "output directory (overrides config)");
        sub->add_option("--seed", opts.seed, "seed override for networks and sampling")
            ->each([&opts](const std::string&) { opts.seed_given = true; });
        if (needs_grad_mode)
            sub->add_option("--grad-mode", opts.grad_mode_override,
                            "gradient mode: discrete | continuous | fd");
    };

    auto* gen = app.add_subcommand("gen-field", "generate the fine channel permeability field");
    add_common(gen, false);
    auto* ref = app.add_subcommand("reference", "fine-scale solve and block averaging");
    add_common(ref, false);
    auto* hom = app.add_subcommand("homogenize", "per-block effective tensors");
    add_common(hom, false);
    auto* slv = app.add_subcommand("solve", "coarse forward solve");
    add_common(slv, false);
    slv->add_option("--model", solve_model, "checkpoint stem for the corrected model");
    auto* trn = app.add_subcommand("train", "optimize the correction networks");
    add_common(trn, true);
    auto* evl = app.add_subcommand("eval", "per-step error table for a trained model");
    add_common(evl, false);
    evl->add_option("--model", eval_model, "checkpoint stem (default <output>/model)");
    auto* gck = app.add_subcommand("gradcheck", "adjoint gradient vs finite differences");
    add_common(gck, true);

    CLI11_PARSE(app, argc, argv);

    try {
        const auto cfg = load_cfg(opts);
        if (gen->parsed()) return cmd_gen_field(cfg);
        if (ref->parsed()) return cmd_reference(cfg);
        if (hom->parsed()) return cmd_homogenize(cfg);
        if (slv->parsed()) return cmd_solve(cfg, solve_model);
        if (trn->parsed()) return cmd_train(cfg);
        if (evl->parsed()) return cmd_eval(cfg, eval_model);
        if (gck->parsed()) return cmd_gradcheck(cfg);
        std::fprintf(stderr, "error: no subcommand\n");
        return 1;
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (auto& c : msg)
            if (c == '\n') c = ' ';
        std::fprintf(stderr, "error: %s\n", msg.c_str());
        return 1;
    }
}
