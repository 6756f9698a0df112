#ifndef MUCOR_ADAM_HPP
#define MUCOR_ADAM_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mucor {

/// First/second moment accumulators for Adam, one slot per parameter.
struct AdamState {
    std::vector<double> m, v;
    long step = 0;
    double alpha = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    explicit AdamState(size_t n, double alpha_ = 1e-4)
        : m(n, 0.0), v(n, 0.0), alpha(alpha_) {}
};

/// One bias-corrected Adam update, in place. Deterministic; rejects
/// non-finite gradients so a bad epoch cannot poison the moments.
inline void adam_step(AdamState& st, std::vector<double>& theta, const std::vector<double>& grad) {
    if (theta.size() != grad.size() || theta.size() != st.m.size() || st.m.size() != st.v.size())
        throw std::invalid_argument("adam_step: parameter/gradient/state sizes disagree (" +
                                    std::to_string(theta.size()) + ", " + std::to_string(grad.size()) +
                                    ", " + std::to_string(st.m.size()) + ")");
    for (double g : grad)
        if (!std::isfinite(g)) throw std::invalid_argument("adam_step: non-finite gradient component");
    st.step += 1;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (size_t i = 0; i < theta.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
        const double mhat = st.m[i] / c1;
        const double vhat = st.v[i] / c2;
        theta[i] -= st.alpha * mhat / (std::sqrt(vhat) + st.eps);
    }
}

}  // namespace mucor

#endif  // MUCOR_ADAM_HPP
