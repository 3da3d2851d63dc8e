#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "recon/data.hpp"
#include "recon/linalg.hpp"
#include "recon/rng.hpp"

namespace recon {

// Frozen two-layer tanh feature map F(s) = A2 tanh(A1 s + c1), the
// desk-scale stand-in for a pretrained backbone. Smooth everywhere, so
// inversion gradients always exist.
struct ToyBackbone {
    ImageShape shape;   // input (ch,H,W), d_s = ch*H*W
    std::size_t d = 0;  // embedding dim
    std::size_t k = 0;  // hidden width
    std::uint64_t seed = 0;
    Matrix a1;  // k x d_s
    Vec c1;     // k
    Matrix a2;  // d x k

    std::size_t input_dim() const { return shape.pixels(); }
};

inline ToyBackbone make_toy_backbone(ImageShape shape, std::size_t d, std::size_t k,
                                     std::uint64_t seed) {
    if (shape.pixels() == 0 || d == 0 || k == 0)
        throw std::invalid_argument("make_toy_backbone: zero dimension");
    ToyBackbone bb;
    bb.shape = shape;
    bb.d = d;
    bb.k = k;
    bb.seed = seed;
    Rng rng(seed);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(shape.pixels()));
    bb.a1 = Matrix(k, shape.pixels());
    for (auto& v : bb.a1.a) v = rng.uniform(-s1, s1);
    bb.c1.assign(k, 0.0);
    for (auto& v : bb.c1) v = rng.uniform(-0.1, 0.1);
    const double s2 = 1.0 / std::sqrt(static_cast<double>(k));
    bb.a2 = Matrix(d, k);
    for (auto& v : bb.a2.a) v = rng.uniform(-s2, s2);
    return bb;
}

inline Vec embed_one(const ToyBackbone& bb, const double* s) {
    Vec z(bb.k);
    matvec(bb.a1, s, z.data());
    for (std::size_t i = 0; i < bb.k; ++i) z[i] = std::tanh(z[i] + bb.c1[i]);
    Vec out(bb.d);
    matvec(bb.a2, z.data(), out.data());
    return out;
}

inline Matrix embed(const ToyBackbone& bb, const Matrix& images) {
    if (images.cols != bb.input_dim()) throw std::invalid_argument("embed: shape mismatch");
    Matrix out(images.rows, bb.d);
    for (std::size_t i = 0; i < images.rows; ++i) {
        const Vec e = embed_one(bb, images.row(i));
        std::copy(e.begin(), e.end(), out.row(i));
    }
    return out;
}

enum class InversionObjective { Cosine, Mse };

struct InversionConfig {
    InversionObjective objective = InversionObjective::Cosine;
    double lr = 0.05;
    std::size_t iterations = 5000;
    double tv_weight = 0.0;   // quadratic neighbor-difference smoothness penalty
    bool box_constrain = false;
    std::uint64_t seed = 0;
};

struct InversionResult {
    Vec image;   // d_s
    Vec trace;   // objective per iteration (cosine value or mse value)
};

namespace detail {

// Quantize the mantissa so the kept direction is identical for t and any
// rounded positive rescaling t' = fl(a*t): the optimization then depends on
// the target only through this direction, making cosine inversion exactly
// scale-invariant as a function.
inline double quantize_mantissa(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    bits &= ~((std::uint64_t{1} << 25) - 1);
    std::memcpy(&v, &bits, sizeof bits);
    return v;
}

inline Vec unit_direction_quantized(const Vec& t) {
    const double n = norm2(t);
    if (n == 0.0) throw std::invalid_argument("invert: zero target under cosine objective");
    Vec q(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) q[i] = quantize_mantissa(t[i] / n);
    return q;
}

// sum of squared forward differences across H and W, per channel
inline double tv_value_grad(const Vec& img, const ImageShape& sh, Vec& grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double val = 0.0;
    for (std::size_t c = 0; c < sh.ch; ++c) {
        const std::size_t base = c * sh.h * sh.w;
        for (std::size_t y = 0; y < sh.h; ++y) {
            for (std::size_t x = 0; x < sh.w; ++x) {
                const std::size_t idx = base + y * sh.w + x;
                if (x + 1 < sh.w) {
                    const double dlt = img[idx + 1] - img[idx];
                    val += dlt * dlt;
                    grad[idx + 1] += 2.0 * dlt;
                    grad[idx] -= 2.0 * dlt;
                }
                if (y + 1 < sh.h) {
                    const double dlt = img[idx + sh.w] - img[idx];
                    val += dlt * dlt;
                    grad[idx + sh.w] += 2.0 * dlt;
                    grad[idx] -= 2.0 * dlt;
                }
            }
        }
    }
    return val;
}

}  // namespace detail

// Gradient ascent on cosine(F(nu), target) or descent on ||F(nu) - target||^2
// over the raw input, from a seeded N(0, 0.1) start. Optional smoothness
// penalty and per-step box clamp to [0,1].
inline InversionResult invert(const ToyBackbone& bb, const Vec& target, const InversionConfig& cfg) {
    if (target.size() != bb.d) throw std::invalid_argument("invert: target has wrong dimension");
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("invert: lr must be > 0");
    if (!all_finite(target)) throw std::invalid_argument("invert: non-finite target");

    const bool cosine_mode = cfg.objective == InversionObjective::Cosine;
    Vec dir;  // unit target direction (cosine mode only)
    if (cosine_mode) dir = detail::unit_direction_quantized(target);
    const double dir_norm = cosine_mode ? norm2(dir) : 0.0;

    const std::size_t ds = bb.input_dim();
    InversionResult res;
    res.image.assign(ds, 0.0);
    Rng rng(cfg.seed);
    for (auto& v : res.image) v = rng.normal(0.0, 0.1);
    if (cfg.box_constrain)
        for (auto& v : res.image) v = std::clamp(v, 0.0, 1.0);
    res.trace.reserve(cfg.iterations);

    Vec z(bb.k), tk(bb.k), e(bb.d), ge(bb.d), gk(bb.k), gimg(ds), tvgrad(ds);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        matvec(bb.a1, res.image.data(), z.data());
        for (std::size_t i = 0; i < bb.k; ++i) tk[i] = std::tanh(z[i] + bb.c1[i]);
        matvec(bb.a2, tk.data(), e.data());

        double objective;
        if (cosine_mode) {
            const double en = norm2(e);
            if (en == 0.0) {
                // flat spot; nudge by leaving the gradient at zero
                res.trace.push_back(0.0);
                continue;
            }
            const double ip = dot(e.data(), dir.data(), bb.d);
            const double cs = ip / (en * dir_norm);
            objective = cs;
            // d cos / d e = dir/(|e||dir|) - cs * e / |e|^2
            for (std::size_t i = 0; i < bb.d; ++i)
                ge[i] = dir[i] / (en * dir_norm) - cs * e[i] / (en * en);
        } else {
            double mse = 0.0;
            for (std::size_t i = 0; i < bb.d; ++i) {
                const double dlt = e[i] - target[i];
                mse += dlt * dlt;
                ge[i] = -2.0 * dlt;  // ascent direction of -mse
            }
            objective = mse;
        }

        matTvec(bb.a2, ge.data(), gk.data());
        for (std::size_t i = 0; i < bb.k; ++i) gk[i] *= 1.0 - tk[i] * tk[i];
        matTvec(bb.a1, gk.data(), gimg.data());

        if (cfg.tv_weight > 0.0) {
            detail::tv_value_grad(res.image, bb.shape, tvgrad);
            for (std::size_t i = 0; i < ds; ++i) gimg[i] -= cfg.tv_weight * tvgrad[i];
        }
        for (std::size_t i = 0; i < ds; ++i) res.image[i] += cfg.lr * gimg[i];
        if (cfg.box_constrain)
            for (auto& v : res.image) v = std::clamp(v, 0.0, 1.0);
        res.trace.push_back(objective);
    }
    return res;
}

struct NormRatioRow {
    std::size_t train_index;
    std::size_t candidate;  // row in the pool matrix
    double cosine;
    double train_norm;      // ||F(s)||
    double candidate_norm;  // ||xhat||
    double ratio;           // candidate_norm / train_norm
};

// Per training embedding: its nearest candidate by cosine with the two
// norms and their ratio.
inline std::vector<NormRatioRow> norm_ratio_report(const Matrix& train_embeds, const Matrix& pool) {
    if (pool.rows == 0) throw std::invalid_argument("norm_ratio_report: empty pool");
    if (train_embeds.cols != pool.cols)
        throw std::invalid_argument("norm_ratio_report: dimension mismatch");
    std::vector<NormRatioRow> rows;
    for (std::size_t i = 0; i < train_embeds.rows; ++i) {
        const double* t = train_embeds.row(i);
        const double tn = std::sqrt(dot(t, t, train_embeds.cols));
        NormRatioRow row{i, 0, -2.0, tn, 0.0, 0.0};
        for (std::size_t j = 0; j < pool.rows; ++j) {
            const double* x = pool.row(j);
            const double xn = std::sqrt(dot(x, x, pool.cols));
            if (xn == 0.0 || tn == 0.0) continue;
            const double cs = dot(t, x, pool.cols) / (tn * xn);
            if (cs > row.cosine) {
                row.cosine = cs;
                row.candidate = j;
                row.candidate_norm = xn;
            }
        }
        row.ratio = row.train_norm > 0.0 ? row.candidate_norm / row.train_norm : 0.0;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace recon
