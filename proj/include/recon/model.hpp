#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include "recon/linalg.hpp"
#include "recon/rng.hpp"

namespace recon {

// Single-hidden-layer MLP  x -> w2 * relu(w1 x + b1).
// No output bias, so phi(x, t*theta) = t^2 * phi(x, theta) for t > 0.
struct MlpParams {
    std::size_t d = 0;  // input dim
    std::size_t h = 0;  // hidden width
    std::size_t c = 0;  // outputs (1 = binary)
    Matrix w1;          // h x d
    Vec b1;             // h
    Matrix w2;          // c x h

    std::size_t param_count() const { return h * d + h + c * h; }

    void check_shapes() const {
        if (w1.rows != h || w1.cols != d || b1.size() != h || w2.rows != c || w2.cols != h)
            throw std::invalid_argument("MlpParams: inconsistent shapes");
    }
};

struct ActivationMode {
    bool soft = false;
    double alpha = 0.0;  // soft-backward sharpness, > 0 when soft

    static ActivationMode hard() { return {false, 0.0}; }
    static ActivationMode soft_backward(double alpha) {
        if (!(alpha > 0.0)) throw std::invalid_argument("SoftBackward: alpha must be > 0");
        return {true, alpha};
    }

    // derivative used in place of step(z) on the backward pass
    double backward(double z) const {
        if (!soft) return z > 0.0 ? 1.0 : 0.0;
        return sigmoid(alpha * z);
    }

    static double sigmoid(double s) {
        if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
        const double e = std::exp(s);
        return e / (1.0 + e);
    }
};

inline MlpParams make_mlp(std::size_t d, std::size_t h, std::size_t c) {
    MlpParams p;
    p.d = d;
    p.h = h;
    p.c = c;
    p.w1 = Matrix(h, d);
    p.b1.assign(h, 0.0);
    p.w2 = Matrix(c, h);
    return p;
}

// Uniform +-1/sqrt(fan_in) per layer.
inline MlpParams init_mlp(std::size_t d, std::size_t h, std::size_t c, std::uint64_t seed) {
    MlpParams p = make_mlp(d, h, c);
    Rng rng(seed);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& v : p.w1.a) v = rng.uniform(-s1, s1);
    for (auto& v : p.b1) v = rng.uniform(-s1, s1);
    const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
    for (auto& v : p.w2.a) v = rng.uniform(-s2, s2);
    return p;
}

inline Vec preactivations(const MlpParams& p, const double* x) {
    Vec z(p.h);
    matvec(p.w1, x, z.data());
    for (std::size_t k = 0; k < p.h; ++k) z[k] += p.b1[k];
    return z;
}

inline Vec forward(const MlpParams& p, const Vec& x) {
    p.check_shapes();
    if (x.size() != p.d) throw std::invalid_argument("forward: x has wrong dimension");
    Vec z = preactivations(p, x.data());
    for (auto& v : z) v = std::max(v, 0.0);
    return matvec(p.w2, z);
}

// Flatten order: w1 row-major, then b1, then w2 row-major.
inline Vec flatten(const MlpParams& p) {
    p.check_shapes();
    Vec out;
    out.reserve(p.param_count());
    out.insert(out.end(), p.w1.a.begin(), p.w1.a.end());
    out.insert(out.end(), p.b1.begin(), p.b1.end());
    out.insert(out.end(), p.w2.a.begin(), p.w2.a.end());
    return out;
}

inline MlpParams unflatten(const Vec& v, std::size_t d, std::size_t h, std::size_t c) {
    MlpParams p = make_mlp(d, h, c);
    if (v.size() != p.param_count()) throw std::invalid_argument("unflatten: length != param count");
    std::copy(v.begin(), v.begin() + h * d, p.w1.a.begin());
    std::copy(v.begin() + h * d, v.begin() + h * d + h, p.b1.begin());
    std::copy(v.begin() + h * d + h, v.end(), p.w2.a.begin());
    return p;
}

inline void check_label(const MlpParams& p, int y) {
    if (p.c == 1) {
        if (y != 1 && y != -1) throw std::invalid_argument("label must be +-1 for binary model");
    } else {
        if (y < 0 || static_cast<std::size_t>(y) >= p.c)
            throw std::invalid_argument("label out of range: " + std::to_string(y));
    }
}

// Runner-up index for the multiclass margin; ties broken toward the
// smallest index among j != y.
inline std::size_t margin_runner_up(const Vec& logits, int y) {
    std::size_t jstar = 0;
    bool found = false;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        if (j == static_cast<std::size_t>(y)) continue;
        if (!found || logits[j] > logits[jstar]) {
            jstar = j;
            found = true;
        }
    }
    return jstar;
}

// Binary: y * phi(x).  Multiclass: phi(x)_y - max_{j != y} phi(x)_j.
inline double margin(const MlpParams& p, const Vec& x, int y) {
    check_label(p, y);
    const Vec out = forward(p, x);
    if (p.c == 1) return static_cast<double>(y) * out[0];
    return out[y] - out[margin_runner_up(out, y)];
}

// Gradient of the margin w.r.t. the flattened parameters.
// Under SoftBackward the relu derivative is sigmoid(alpha*z) in the backward
// pass; the forward activation stays hard relu.
inline Vec param_gradient_of_margin(const MlpParams& p, const Vec& x, int y, ActivationMode mode) {
    p.check_shapes();
    check_label(p, y);
    if (x.size() != p.d) throw std::invalid_argument("param_gradient_of_margin: x has wrong dimension");

    const Vec z = preactivations(p, x.data());
    Vec a(p.h), s(p.h);
    for (std::size_t k = 0; k < p.h; ++k) {
        a[k] = std::max(z[k], 0.0);
        s[k] = mode.backward(z[k]);
    }

    // margin = v . (w2 a); v = y for binary, e_y - e_jstar for multiclass
    Vec u(p.h, 0.0);  // w2^T v
    std::size_t jstar = 0;
    if (p.c == 1) {
        for (std::size_t k = 0; k < p.h; ++k) u[k] = static_cast<double>(y) * p.w2(0, k);
    } else {
        Vec out = matvec(p.w2, a);
        jstar = margin_runner_up(out, y);
        for (std::size_t k = 0; k < p.h; ++k)
            u[k] = p.w2(static_cast<std::size_t>(y), k) - p.w2(jstar, k);
    }

    Vec g(p.param_count(), 0.0);
    double* gw1 = g.data();
    double* gb1 = g.data() + p.h * p.d;
    double* gw2 = g.data() + p.h * p.d + p.h;
    for (std::size_t k = 0; k < p.h; ++k) {
        const double q = u[k] * s[k];
        for (std::size_t j = 0; j < p.d; ++j) gw1[k * p.d + j] = q * x[j];
        gb1[k] = q;
    }
    if (p.c == 1) {
        for (std::size_t k = 0; k < p.h; ++k) gw2[k] = static_cast<double>(y) * a[k];
    } else {
        for (std::size_t k = 0; k < p.h; ++k) {
            gw2[static_cast<std::size_t>(y) * p.h + k] = a[k];
            gw2[jstar * p.h + k] -= a[k];
        }
    }
    return g;
}

inline MlpParams scale_params(const MlpParams& p, double t) {
    MlpParams q = p;
    for (auto& v : q.w1.a) v *= t;
    for (auto& v : q.b1) v *= t;
    for (auto& v : q.w2.a) v *= t;
    return q;
}

}  // namespace recon
