#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "lgnn/tensor.hpp"

namespace lgnn {

class NonDeterministicForward : public Error {
public:
    using Error::Error;
};

struct GradCheckEntry {
    std::string name;
    std::size_t elements = 0;
    /// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|), with |.| the Euclidean
    /// norm over the tensor's elements.
    double rel_err = 0.0;
    double max_abs_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;

    double max_rel_err() const {
        double m = 0.0;
        for (const auto& e : entries) m = std::max(m, e.rel_err);
        return m;
    }
    bool passes(double tol) const { return max_rel_err() <= tol; }
};

struct NamedParam {
    std::string name;
    Tensor<double> tensor;
};

/// Compares tape gradients of a scalar forward closure against central
/// finite differences.
///
/// `forward` must build the loss on the tape it is given and must not
/// depend on anything but the parameter values. It is evaluated twice up
/// front; differing results raise NonDeterministicForward.
inline GradCheckReport grad_check(const std::function<Tensor<double>(Tape<double>&)>& forward,
                                  std::vector<NamedParam> params, double eps = 1e-4) {
    auto eval = [&]() {
        auto tape = Tape<double>::inference();
        return forward(tape).item();
    };
    const double f0 = eval();
    const double f1 = eval();
    if (std::memcmp(&f0, &f1, sizeof(double)) != 0)
        throw NonDeterministicForward("grad_check: forward evaluations differ");

    for (auto& p : params) {
        p.tensor.set_requires_grad(true);
        p.tensor.clear_grad();
    }
    {
        Tape<double> tape;
        auto loss = forward(tape);
        tape.backward(loss);
    }

    GradCheckReport report;
    for (auto& p : params) {
        std::vector<double> g_ad(p.tensor.size(), 0.0);
        if (p.tensor.has_grad()) std::copy(p.tensor.grad().begin(), p.tensor.grad().end(), g_ad.begin());
        GradCheckEntry entry{p.name, p.tensor.size(), 0.0, 0.0};
        double diff2 = 0.0, ad2 = 0.0, fd2 = 0.0;
        auto values = p.tensor.data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double orig = values[i];
            values[i] = orig + eps;
            const double up = eval();
            values[i] = orig - eps;
            const double down = eval();
            values[i] = orig;
            const double fd = (up - down) / (2.0 * eps);
            const double d = g_ad[i] - fd;
            diff2 += d * d;
            ad2 += g_ad[i] * g_ad[i];
            fd2 += fd * fd;
            entry.max_abs_err = std::max(entry.max_abs_err, std::abs(d));
        }
        entry.rel_err = std::sqrt(diff2) / std::max(1e-8, std::sqrt(ad2) + std::sqrt(fd2));
        report.entries.push_back(entry);
        p.tensor.clear_grad();
    }
    return report;
}

}  // namespace lgnn
