#ifndef MUCOR_MLP_HPP
#define MUCOR_MLP_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mucor/fields.hpp"
#include "mucor/grid.hpp"

namespace mucor {

enum class Activation { tanh, leaky_relu, identity, abs };

[[nodiscard]] inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::leaky_relu: return "leaky-relu";
        case Activation::identity: return "identity";
        case Activation::abs: return "abs";
    }
    throw std::logic_error("activation_name: unknown tag");
}

[[nodiscard]] inline Activation activation_from_name(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "leaky-relu") return Activation::leaky_relu;
    if (s == "identity") return Activation::identity;
    if (s == "abs") return Activation::abs;
    throw std::invalid_argument("unknown activation: " + s);
}

/// Dense feed-forward network with one flat float64 parameter vector.
/// Layout per layer l: weight matrix W_l (widths[l+1] x widths[l],
/// row-major) followed by the bias vector b_l. Evaluation is pure.
struct Mlp {
    std::vector<int> widths;  // [input, hidden..., output]
    Activation hidden = Activation::tanh;
    Activation output = Activation::identity;
    double leaky_slope = 0.2;
    uint64_t seed = 0;
    std::vector<double> theta;

    [[nodiscard]] int layer_count() const { return static_cast<int>(widths.size()) - 1; }
    [[nodiscard]] int input_dim() const { return widths.front(); }
    [[nodiscard]] int output_dim() const { return widths.back(); }

    [[nodiscard]] size_t param_count() const {
        size_t n = 0;
        for (int l = 0; l + 1 < static_cast<int>(widths.size()); ++l)
            n += (static_cast<size_t>(widths[l]) + 1) * static_cast<size_t>(widths[l + 1]);
        return n;
    }

    /// Offset of layer l's weight block in theta; biases follow the weights.
    [[nodiscard]] size_t layer_offset(int l) const {
        size_t off = 0;
        for (int k = 0; k < l; ++k)
            off += (static_cast<size_t>(widths[k]) + 1) * static_cast<size_t>(widths[k + 1]);
        return off;
    }

    void validate() const {
        if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
        for (int w : widths)
            if (w < 1) throw std::invalid_argument("Mlp: layer widths must be >= 1");
        if (theta.size() != param_count())
            throw std::invalid_argument("Mlp: parameter vector length " + std::to_string(theta.size()) +
                                        " != expected " + std::to_string(param_count()));
        for (double p : theta)
            if (!std::isfinite(p)) throw std::invalid_argument("Mlp: non-finite parameter");
    }
};

namespace mlp_detail {

inline double act(Activation a, double z, double c) {
    switch (a) {
        case Activation::tanh: return std::tanh(z);
        case Activation::leaky_relu: return z > 0.0 ? z : c * z;
        case Activation::identity: return z;
        case Activation::abs: return std::fabs(z);
    }
    return z;
}

/// Derivative with respect to the pre-activation; abs uses sign with
/// subgradient 0 at exactly 0 so reverse and forward mode agree.
inline double act_prime(Activation a, double z, double c) {
    switch (a) {
        case Activation::tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::leaky_relu: return z > 0.0 ? 1.0 : c;
        case Activation::identity: return 1.0;
        case Activation::abs: return z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0);
    }
    return 1.0;
}

}  // namespace mlp_detail

/// Deterministic initialization: weights uniform in (-1,1)/sqrt(fan_in)
/// drawn from mt19937_64(seed) via the top 53 bits, biases zero. The draw
/// order (layers in order, weights row-major, biases skipped) is part of
/// the reproducibility contract.
[[nodiscard]] inline Mlp mlp_init(std::vector<int> widths, Activation hidden, Activation output,
                                  uint64_t seed, double leaky_slope = 0.2) {
    Mlp net;
    net.widths = std::move(widths);
    net.hidden = hidden;
    net.output = output;
    net.leaky_slope = leaky_slope;
    net.seed = seed;
    if (net.widths.size() < 2)
        throw std::invalid_argument("mlp_init: need at least input and output widths");
    net.theta.assign(net.param_count(), 0.0);
    std::mt19937_64 gen(seed);
    auto unit = [&gen] {  // uniform in [0,1) with full 53-bit resolution
        return static_cast<double>(gen() >> 11) * 0x1.0p-53;
    };
    size_t off = 0;
    for (int l = 0; l + 1 < static_cast<int>(net.widths.size()); ++l) {
        const int fan_in = net.widths[l], fan_out = net.widths[l + 1];
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c)
                net.theta[off + static_cast<size_t>(r) * fan_in + c] = (2.0 * unit() - 1.0) * scale;
        off += static_cast<size_t>(fan_in + 1) * fan_out;  // biases stay zero
    }
    net.validate();
    return net;
}

/// Layer-by-layer cache of one forward pass: pre-activations z[l] and
/// activations a[l] (a[0] = input), needed by the reverse pass.
struct MlpTape {
    std::vector<std::vector<double>> a, z;
};

inline void mlp_forward_one(const Mlp& net, const double* x, double* y, MlpTape* tape = nullptr) {
    const int L = net.layer_count();
    std::vector<double> cur(x, x + net.input_dim());
    if (tape) {
        tape->a.assign(static_cast<size_t>(L) + 1, {});
        tape->z.assign(static_cast<size_t>(L), {});
        tape->a[0] = cur;
    }
    for (int l = 0; l < L; ++l) {
        const int nin = net.widths[l], nout = net.widths[l + 1];
        const double* W = net.theta.data() + net.layer_offset(l);
        const double* b = W + static_cast<size_t>(nin) * nout;
        std::vector<double> nxt(static_cast<size_t>(nout));
        const Activation a = (l + 1 == L) ? net.output : net.hidden;
        for (int r = 0; r < nout; ++r) {
            double s = b[r];
            const double* Wr = W + static_cast<size_t>(r) * nin;
            for (int c = 0; c < nin; ++c) s += Wr[c] * cur[static_cast<size_t>(c)];
            if (tape) {
                if (tape->z[static_cast<size_t>(l)].empty())
                    tape->z[static_cast<size_t>(l)].resize(static_cast<size_t>(nout));
                tape->z[static_cast<size_t>(l)][static_cast<size_t>(r)] = s;
            }
            nxt[static_cast<size_t>(r)] = mlp_detail::act(a, s, net.leaky_slope);
        }
        cur = std::move(nxt);
        if (tape) tape->a[static_cast<size_t>(l) + 1] = cur;
    }
    for (int r = 0; r < net.output_dim(); ++r) {
        if (!std::isfinite(cur[static_cast<size_t>(r)]))
            throw std::runtime_error("mlp_forward: non-finite output");
        y[r] = cur[static_cast<size_t>(r)];
    }
}

/// Batch forward: inputs row-major (n_points x input_dim), outputs
/// row-major (n_points x output_dim).
[[nodiscard]] inline std::vector<double> mlp_forward(const Mlp& net,
                                                     const std::vector<double>& inputs) {
    const int din = net.input_dim(), dout = net.output_dim();
    if (inputs.size() % static_cast<size_t>(din) != 0)
        throw std::invalid_argument("mlp_forward: input size not a multiple of the input dimension");
    const size_t n = inputs.size() / static_cast<size_t>(din);
    std::vector<double> out(n * static_cast<size_t>(dout));
    for (size_t p = 0; p < n; ++p)
        mlp_forward_one(net, inputs.data() + p * din, out.data() + p * dout);
    return out;
}

/// Reverse mode: sum over the batch of (d output / d theta)^T cotangent.
/// Exact through tanh / leaky-relu / abs (abs contributes sign(z), 0 at 0).
[[nodiscard]] inline std::vector<double> mlp_vjp(const Mlp& net, const std::vector<double>& inputs,
                                                 const std::vector<double>& cotangents) {
    const int din = net.input_dim(), dout = net.output_dim(), L = net.layer_count();
    if (inputs.size() % static_cast<size_t>(din) != 0)
        throw std::invalid_argument("mlp_vjp: input size not a multiple of the input dimension");
    const size_t n = inputs.size() / static_cast<size_t>(din);
    if (cotangents.size() != n * static_cast<size_t>(dout))
        throw std::invalid_argument("mlp_vjp: cotangent shape does not match the output shape");
    std::vector<double> grad(net.param_count(), 0.0);
    MlpTape tape;
    std::vector<double> y(static_cast<size_t>(dout));
    for (size_t p = 0; p < n; ++p) {
        mlp_forward_one(net, inputs.data() + p * din, y.data(), &tape);
        // delta starts as cotangent pulled through the output activation
        std::vector<double> delta(static_cast<size_t>(dout));
        for (int r = 0; r < dout; ++r)
            delta[static_cast<size_t>(r)] =
                cotangents[p * dout + static_cast<size_t>(r)] *
                mlp_detail::act_prime(net.output, tape.z[static_cast<size_t>(L) - 1][static_cast<size_t>(r)],
                                      net.leaky_slope);
        for (int l = L - 1; l >= 0; --l) {
            const int nin = net.widths[l], nout = net.widths[l + 1];
            const size_t off = net.layer_offset(l);
            const double* al = tape.a[static_cast<size_t>(l)].data();
            double* gW = grad.data() + off;
            double* gb = gW + static_cast<size_t>(nin) * nout;
            for (int r = 0; r < nout; ++r) {
                const double d = delta[static_cast<size_t>(r)];
                double* gWr = gW + static_cast<size_t>(r) * nin;
                for (int c = 0; c < nin; ++c) gWr[c] += d * al[c];
                gb[r] += d;
            }
            if (l > 0) {
                const double* W = net.theta.data() + off;
                std::vector<double> prev(static_cast<size_t>(nin), 0.0);
                for (int r = 0; r < nout; ++r) {
                    const double d = delta[static_cast<size_t>(r)];
                    const double* Wr = W + static_cast<size_t>(r) * nin;
                    for (int c = 0; c < nin; ++c) prev[static_cast<size_t>(c)] += Wr[c] * d;
                }
                for (int c = 0; c < nin; ++c)
                    prev[static_cast<size_t>(c)] *= mlp_detail::act_prime(
                        net.hidden, tape.z[static_cast<size_t>(l) - 1][static_cast<size_t>(c)],
                        net.leaky_slope);
                delta = std::move(prev);
            }
        }
    }
    return grad;
}

/// Analytic forward mode: directional derivative of the batch outputs
/// along a parameter direction dtheta. Counterpart of mlp_vjp for the
/// <v, J u> = <J^T v, u> consistency property.
[[nodiscard]] inline std::vector<double> mlp_jvp(const Mlp& net, const std::vector<double>& inputs,
                                                 const std::vector<double>& dtheta) {
    const int din = net.input_dim(), dout = net.output_dim(), L = net.layer_count();
    if (dtheta.size() != net.param_count())
        throw std::invalid_argument("mlp_jvp: direction length does not match the parameter count");
    if (inputs.size() % static_cast<size_t>(din) != 0)
        throw std::invalid_argument("mlp_jvp: input size not a multiple of the input dimension");
    const size_t n = inputs.size() / static_cast<size_t>(din);
    std::vector<double> out(n * static_cast<size_t>(dout));
    for (size_t p = 0; p < n; ++p) {
        std::vector<double> a(inputs.data() + p * din, inputs.data() + p * din + din);
        std::vector<double> da(static_cast<size_t>(din), 0.0);
        for (int l = 0; l < L; ++l) {
            const int nin = net.widths[l], nout = net.widths[l + 1];
            const size_t off = net.layer_offset(l);
            const double* W = net.theta.data() + off;
            const double* b = W + static_cast<size_t>(nin) * nout;
            const double* dW = dtheta.data() + off;
            const double* db = dW + static_cast<size_t>(nin) * nout;
            const Activation act = (l + 1 == L) ? net.output : net.hidden;
            std::vector<double> na(static_cast<size_t>(nout)), nda(static_cast<size_t>(nout));
            for (int r = 0; r < nout; ++r) {
                double z = b[r], dz = db[r];
                const double* Wr = W + static_cast<size_t>(r) * nin;
                const double* dWr = dW + static_cast<size_t>(r) * nin;
                for (int c = 0; c < nin; ++c) {
                    z += Wr[c] * a[static_cast<size_t>(c)];
                    dz += dWr[c] * a[static_cast<size_t>(c)] + Wr[c] * da[static_cast<size_t>(c)];
                }
                na[static_cast<size_t>(r)] = mlp_detail::act(act, z, net.leaky_slope);
                nda[static_cast<size_t>(r)] = mlp_detail::act_prime(act, z, net.leaky_slope) * dz;
            }
            a = std::move(na);
            da = std::move(nda);
        }
        for (int r = 0; r < dout; ++r) out[p * dout + static_cast<size_t>(r)] = da[static_cast<size_t>(r)];
    }
    return out;
}

/// Nodal input coordinates for a network: (x, y) for 2-input nets,
/// (x, y, t) for 3-input (time-dependent) nets.
[[nodiscard]] inline std::vector<double> node_inputs(const Mlp& net, const StructuredGrid& grid,
                                                     double t) {
    const int din = net.input_dim();
    if (din != 2 && din != 3)
        throw std::invalid_argument("node_inputs: network input dimension must be 2 or 3");
    std::vector<double> pts(static_cast<size_t>(grid.node_count()) * din);
    for (int n = 0; n < grid.node_count(); ++n) {
        pts[static_cast<size_t>(n) * din + 0] = grid.node_x(n);
        pts[static_cast<size_t>(n) * din + 1] = grid.node_y(n);
        if (din == 3) pts[static_cast<size_t>(n) * din + 2] = t;
    }
    return pts;
}

/// Nodal diagonal tensors from a 2-output network, with an SPD floor.
/// dfac1/dfac2 hold the exact derivative of each stored tensor entry with
/// respect to the raw network output: sign(raw) where the floor is
/// inactive, 0 where the entry was clamped. Multiplying tensor cotangents
/// by these factors before mlp_vjp keeps gradients exact.
struct KappaNetEval {
    NodalTensorField tensors;
    std::vector<int8_t> dfac1, dfac2;
    int floored = 0;
};

inline constexpr double kKappaNetFloor = 1e-8;

[[nodiscard]] inline KappaNetEval kappa_net_eval(const Mlp& net, const StructuredGrid& grid,
                                                 double t = 0.0) {
    if (net.output_dim() != 2)
        throw std::invalid_argument("kappa_net_eval: network output width must be 2");
    const auto raw = mlp_forward(net, node_inputs(net, grid, t));
    KappaNetEval ev{NodalTensorField(grid), {}, {}, 0};
    const size_t N = static_cast<size_t>(grid.node_count());
    ev.dfac1.assign(N, 0);
    ev.dfac2.assign(N, 0);
    for (size_t n = 0; n < N; ++n) {
        const double r1 = raw[2 * n], r2 = raw[2 * n + 1];
        double d1 = std::fabs(r1), d2 = std::fabs(r2);
        if (d1 < kKappaNetFloor) {
            d1 = kKappaNetFloor;
            ++ev.floored;
        } else {
            ev.dfac1[n] = r1 > 0.0 ? 1 : -1;
        }
        if (d2 < kKappaNetFloor) {
            d2 = kKappaNetFloor;
            ++ev.floored;
        } else {
            ev.dfac2[n] = r2 > 0.0 ? 1 : -1;
        }
        ev.tensors.k11[n] = d1;
        ev.tensors.k12[n] = 0.0;
        ev.tensors.k22[n] = d2;
    }
    return ev;
}

/// Nodal transfer-coefficient values from a 1-output network.
[[nodiscard]] inline std::vector<double> sigma_net_eval(const Mlp& net, const StructuredGrid& grid,
                                                        double t = 0.0) {
    if (net.output_dim() != 1)
        throw std::invalid_argument("sigma_net_eval: network output width must be 1");
    return mlp_forward(net, node_inputs(net, grid, t));
}

/// Checkpoint: <stem>.bin holds theta as raw little-endian float64;
/// <stem>.json describes the architecture and seed.
inline void save_checkpoint(const Mlp& net, const std::string& stem) {
    net.validate();
    nlohmann::json j;
    j["widths"] = net.widths;
    j["hidden"] = activation_name(net.hidden);
    j["output"] = activation_name(net.output);
    j["leaky_slope"] = net.leaky_slope;
    j["seed"] = net.seed;
    j["param_count"] = net.param_count();
    std::ofstream js(stem + ".json");
    if (!js) throw std::runtime_error("save_checkpoint: cannot write " + stem + ".json");
    js << j.dump(2) << "\n";
    std::ofstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("save_checkpoint: cannot write " + stem + ".bin");
    bin.write(reinterpret_cast<const char*>(net.theta.data()),
              static_cast<std::streamsize>(net.theta.size() * sizeof(double)));
    if (!bin) throw std::runtime_error("save_checkpoint: short write to " + stem + ".bin");
}

[[nodiscard]] inline Mlp load_checkpoint(const std::string& stem) {
    std::ifstream js(stem + ".json");
    if (!js) throw std::runtime_error("load_checkpoint: missing sidecar " + stem + ".json");
    nlohmann::json j;
    js >> j;
    Mlp net;
    net.widths = j.at("widths").get<std::vector<int>>();
    net.hidden = activation_from_name(j.at("hidden").get<std::string>());
    net.output = activation_from_name(j.at("output").get<std::string>());
    net.leaky_slope = j.at("leaky_slope").get<double>();
    net.seed = j.at("seed").get<uint64_t>();
    net.theta.assign(net.param_count(), 0.0);
    std::ifstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("load_checkpoint: missing parameters " + stem + ".bin");
    bin.read(reinterpret_cast<char*>(net.theta.data()),
             static_cast<std::streamsize>(net.theta.size() * sizeof(double)));
    if (bin.gcount() != static_cast<std::streamsize>(net.theta.size() * sizeof(double)))
        throw std::runtime_error("load_checkpoint: truncated parameter file " + stem + ".bin");
    net.validate();
    return net;
}

}  // namespace mucor

#endif  // MUCOR_MLP_HPP
