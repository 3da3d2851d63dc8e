#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "recon/model.hpp"
#include "recon/rng.hpp"

namespace recon {

struct ReconConfig {
    std::size_t m = 500;        // candidates
    double sigma = 0.1;         // init std of xhat
    double lr = 0.01;           // step size
    double lambda_min = 0.1;    // soft floor on lambda
    double alpha = 100.0;       // soft-backward sharpness
    std::size_t iterations = 10000;
    double penalty_weight = 1.0;
    std::uint64_t seed = 0;

    void validate(std::size_t classes) const {
        if (m < 2 || m % classes != 0)
            throw std::invalid_argument("ReconConfig: m must be >= 2 and divisible by #classes");
        if (!(sigma > 0.0) || !(lr > 0.0) || !(alpha > 0.0))
            throw std::invalid_argument("ReconConfig: sigma, lr, alpha must be > 0");
        if (lambda_min < 0.0 || penalty_weight < 0.0)
            throw std::invalid_argument("ReconConfig: lambda_min, penalty_weight must be >= 0");
    }
};

struct CandidatePool {
    Matrix xhat;          // m x d
    Vec lambda;           // m, >= 0
    std::vector<int> y;   // m, balanced across classes
    int run_id = 0;
    double final_loss = 0.0;
    bool failed = false;

    std::size_t m() const { return xhat.rows; }
    std::size_t d() const { return xhat.cols; }
};

struct SweepSpec {
    std::size_t runs = 50;
    std::size_t m = 500;
    std::size_t iterations = 10000;
    double penalty_weight = 1.0;
    std::uint64_t master_seed = 0;
    // hyperparameter distributions
    double lr_min = 1e-6, lr_max = 1.0;            // log-uniform
    double sigma_min = 1e-6, sigma_max = 1.0;      // log-uniform
    double lambda_min_lo = 0.01, lambda_min_hi = 0.5;  // uniform
    double alpha_lo = 10.0, alpha_hi = 500.0;          // uniform
};

// Balanced candidate labels: first half +1 / second half -1 for binary,
// round-robin 0..C-1 otherwise.
inline std::vector<int> balanced_labels(std::size_t m, std::size_t classes) {
    std::vector<int> y(m);
    if (classes == 2) {
        for (std::size_t i = 0; i < m; ++i) y[i] = i < m / 2 ? 1 : -1;
    } else {
        for (std::size_t i = 0; i < m; ++i) y[i] = static_cast<int>(i % classes);
    }
    return y;
}

namespace detail {

// One fused evaluation of the reconstruction loss and both gradient blocks.
// theta is fixed; g_i uses hard relu forward values and sigmoid(alpha z)
// as the activation derivative, so the loss is the one recon_loss reports
// and the gradients are its exact derivatives (a.e.).
struct ReconEval {
    const MlpParams& p;
    double alpha, lambda_min, penalty_weight;
    std::size_t classes;

    // scratch
    Matrix gw1, r2;           // h x d, c x h accumulators / residual
    Vec gb1;                  // h
    Vec z, a, s, u, q, t, w, logits, r2tv;

    ReconEval(const MlpParams& params, double alpha_, double lambda_min_, double pw,
              std::size_t classes_)
        : p(params), alpha(alpha_), lambda_min(lambda_min_), penalty_weight(pw), classes(classes_),
          gw1(params.h, params.d), r2(params.c, params.h), gb1(params.h), z(params.h), a(params.h),
          s(params.h), u(params.h), q(params.h), t(params.h), w(params.h), logits(params.c),
          r2tv(params.h) {}

    // Returns the loss; when grad_x / grad_lambda are non-null fills them.
    double operator()(const Matrix& xhat, const Vec& lambda, const std::vector<int>& y,
                      Matrix* grad_x, Vec* grad_lambda) {
        const std::size_t m = xhat.rows, h = p.h, d = p.d, c = p.c;
        std::fill(gw1.a.begin(), gw1.a.end(), 0.0);
        std::fill(gb1.begin(), gb1.end(), 0.0);
        std::fill(r2.a.begin(), r2.a.end(), 0.0);

        // q_i, a_i and the accumulated sum live in two passes so only O(h)
        // per-candidate state is kept; z is recomputed in the second pass.
        std::vector<std::size_t> jstars(c > 1 ? m : 0);
        for (std::size_t i = 0; i < m; ++i) {
            const double* x = xhat.row(i);
            matvec(p.w1, x, z.data());
            for (std::size_t k = 0; k < h; ++k) {
                z[k] += p.b1[k];
                a[k] = std::max(z[k], 0.0);
                s[k] = ActivationMode::sigmoid(alpha * z[k]);
            }
            const double li = lambda[i];
            if (c == 1) {
                const double yy = static_cast<double>(y[i]);
                const double* w2r = p.w2.row(0);
                double* r2r = r2.row(0);
                for (std::size_t k = 0; k < h; ++k) {
                    const double qk = yy * w2r[k] * s[k];
                    gb1[k] += li * qk;
                    r2r[k] += li * yy * a[k];
                    double* gr = gw1.row(k);
                    const double lq = li * qk;
                    for (std::size_t j = 0; j < d; ++j) gr[j] += lq * x[j];
                }
            } else {
                matvec(p.w2, a.data(), logits.data());
                const std::size_t jstar = margin_runner_up(logits, y[i]);
                jstars[i] = jstar;
                const std::size_t yi = static_cast<std::size_t>(y[i]);
                for (std::size_t k = 0; k < h; ++k) {
                    const double uk = p.w2(yi, k) - p.w2(jstar, k);
                    const double qk = uk * s[k];
                    gb1[k] += li * qk;
                    r2(yi, k) += li * a[k];
                    r2(jstar, k) -= li * a[k];
                    double* gr = gw1.row(k);
                    const double lq = li * qk;
                    for (std::size_t j = 0; j < d; ++j) gr[j] += lq * x[j];
                }
            }
        }
        // residual blocks: R1 = w1 - GW1 (reuse gw1), rb = b1 - Gb1 (reuse gb1),
        // R2 = w2 - GW2 (reuse r2)
        double loss = 0.0;
        for (std::size_t ii = 0; ii < gw1.a.size(); ++ii) {
            gw1.a[ii] = p.w1.a[ii] - gw1.a[ii];
            loss += gw1.a[ii] * gw1.a[ii];
        }
        for (std::size_t k = 0; k < h; ++k) {
            gb1[k] = p.b1[k] - gb1[k];
            loss += gb1[k] * gb1[k];
        }
        for (std::size_t ii = 0; ii < r2.a.size(); ++ii) {
            r2.a[ii] = p.w2.a[ii] - r2.a[ii];
            loss += r2.a[ii] * r2.a[ii];
        }
        for (std::size_t i = 0; i < m; ++i) {
            const double gap = std::max(0.0, lambda_min - lambda[i]);
            loss += penalty_weight * gap * gap;
        }
        if (!grad_x && !grad_lambda) return loss;

        const Matrix& r1 = gw1;
        const Vec& rb = gb1;
        for (std::size_t i = 0; i < m; ++i) {
            const double* x = xhat.row(i);
            matvec(p.w1, x, z.data());
            for (std::size_t k = 0; k < h; ++k) {
                z[k] += p.b1[k];
                a[k] = std::max(z[k], 0.0);
                s[k] = ActivationMode::sigmoid(alpha * z[k]);
            }
            if (c == 1) {
                const double yy = static_cast<double>(y[i]);
                const double* w2r = p.w2.row(0);
                const double* r2r = r2.row(0);
                for (std::size_t k = 0; k < h; ++k) {
                    u[k] = yy * w2r[k];
                    r2tv[k] = yy * r2r[k];
                }
            } else {
                const std::size_t yi = static_cast<std::size_t>(y[i]);
                const std::size_t jstar = jstars[i];
                for (std::size_t k = 0; k < h; ++k) {
                    u[k] = p.w2(yi, k) - p.w2(jstar, k);
                    r2tv[k] = r2(yi, k) - r2(jstar, k);
                }
            }
            // t = R1 x + rb
            matvec(r1, x, t.data());
            double gdotr = 0.0;
            for (std::size_t k = 0; k < h; ++k) {
                t[k] += rb[k];
                q[k] = u[k] * s[k];
                gdotr += q[k] * t[k] + r2tv[k] * a[k];
            }
            if (grad_lambda)
                (*grad_lambda)[i] =
                    -2.0 * gdotr - 2.0 * penalty_weight * std::max(0.0, lambda_min - lambda[i]);
            if (grad_x) {
                for (std::size_t k = 0; k < h; ++k) {
                    const double ds = alpha * s[k] * (1.0 - s[k]);  // d sigma(alpha z)/dz
                    w[k] = u[k] * ds * t[k] + r2tv[k] * (z[k] > 0.0 ? 1.0 : 0.0);
                }
                double* gx = grad_x->row(i);
                matTvec(r1, q.data(), gx);  // R1^T q
                for (std::size_t k = 0; k < h; ++k) {
                    const double wk = w[k];
                    if (wk == 0.0) continue;
                    const double* w1r = p.w1.row(k);
                    for (std::size_t j = 0; j < d; ++j) gx[j] += wk * w1r[j];
                }
                const double scale = -2.0 * lambda[i];
                for (std::size_t j = 0; j < d; ++j) gx[j] *= scale;
            }
        }
        return loss;
    }
};

}  // namespace detail

inline std::size_t pool_classes(const MlpParams& p) { return p.c == 1 ? 2 : p.c; }

// || theta - sum_i lambda_i g_i ||^2 + penalty_weight * sum_i max(0, lambda_min - lambda_i)^2
// with g_i = param_gradient_of_margin(theta, xhat_i, y_i, SoftBackward(alpha)).
inline double recon_loss(const MlpParams& theta, const CandidatePool& pool, double alpha,
                         double lambda_min = 0.0, double penalty_weight = 1.0) {
    if (pool.d() != theta.d) throw std::invalid_argument("recon_loss: dimension mismatch");
    detail::ReconEval eval(theta, alpha, lambda_min, penalty_weight, pool_classes(theta));
    const double loss = eval(pool.xhat, pool.lambda, pool.y, nullptr, nullptr);
    if (!std::isfinite(loss)) throw std::runtime_error("recon_loss: non-finite value");
    return loss;
}

struct ReconGrad {
    Matrix grad_xhat;  // m x d
    Vec grad_lambda;   // m
};

inline ReconGrad recon_grad(const MlpParams& theta, const CandidatePool& pool, double alpha,
                            double lambda_min = 0.0, double penalty_weight = 1.0) {
    if (pool.d() != theta.d) throw std::invalid_argument("recon_grad: dimension mismatch");
    detail::ReconEval eval(theta, alpha, lambda_min, penalty_weight, pool_classes(theta));
    ReconGrad g;
    g.grad_xhat = Matrix(pool.m(), pool.d());
    g.grad_lambda.assign(pool.m(), 0.0);
    const double loss = eval(pool.xhat, pool.lambda, pool.y, &g.grad_xhat, &g.grad_lambda);
    if (!std::isfinite(loss)) throw std::runtime_error("recon_grad: non-finite value");
    return g;
}

// Joint gradient descent on (xhat, lambda) with projection lambda >= 0.
// The step halves while a proposal fails to descend and recovers by
// doubling after accepted steps, capped at cfg.lr.
inline CandidatePool run_reconstruction(const MlpParams& theta, const ReconConfig& cfg,
                                        std::size_t classes) {
    cfg.validate(classes);
    if (theta.c > 1 && classes != theta.c)
        throw std::invalid_argument("run_reconstruction: classes != model outputs");

    CandidatePool pool;
    pool.y = balanced_labels(cfg.m, classes);
    pool.lambda.assign(cfg.m, 0.0);
    pool.xhat = Matrix(cfg.m, theta.d);
    Rng rng(cfg.seed);
    for (std::size_t i = 0; i < cfg.m; ++i) pool.lambda[i] = rng.uniform();
    for (auto& v : pool.xhat.a) v = rng.normal(0.0, cfg.sigma);

    detail::ReconEval eval(theta, cfg.alpha, cfg.lambda_min, cfg.penalty_weight, classes);
    Matrix gx(cfg.m, theta.d), gx_new(cfg.m, theta.d);
    Vec gl(cfg.m), gl_new(cfg.m);
    Matrix x_new(cfg.m, theta.d);
    Vec l_new(cfg.m);

    double loss = eval(pool.xhat, pool.lambda, pool.y, &gx, &gl);
    if (!std::isfinite(loss)) {
        pool.failed = true;
        pool.final_loss = loss;
        return pool;
    }
    double step = cfg.lr;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        bool accepted = false;
        for (int tries = 0; tries < 64; ++tries) {
            for (std::size_t ii = 0; ii < x_new.a.size(); ++ii)
                x_new.a[ii] = pool.xhat.a[ii] - step * gx.a[ii];
            for (std::size_t i = 0; i < cfg.m; ++i)
                l_new[i] = std::max(pool.lambda[i] - step * gl[i], 0.0);
            const double nl = eval(x_new, l_new, pool.y, &gx_new, &gl_new);
            if (std::isfinite(nl) && nl <= loss) {
                pool.xhat.a.swap(x_new.a);
                pool.lambda.swap(l_new);
                gx.a.swap(gx_new.a);
                gl.swap(gl_new);
                loss = nl;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // converged to step-size limit
        step = std::min(step * 2.0, cfg.lr);
    }
    pool.final_loss = loss;
    if (!std::isfinite(loss)) pool.failed = true;
    return pool;
}

// Hyperparameters for run r of a sweep, drawn per Appendix-style
// distributions from a per-run seed derived from the master seed.
inline ReconConfig sweep_run_config(const SweepSpec& spec, std::size_t run_index) {
    const std::uint64_t run_seed = derive_seed(spec.master_seed, run_index);
    Rng hp(run_seed);
    ReconConfig cfg;
    cfg.m = spec.m;
    cfg.iterations = spec.iterations;
    cfg.penalty_weight = spec.penalty_weight;
    cfg.lr = hp.log_uniform(spec.lr_min, spec.lr_max);
    cfg.sigma = hp.log_uniform(spec.sigma_min, spec.sigma_max);
    cfg.lambda_min = hp.uniform(spec.lambda_min_lo, spec.lambda_min_hi);
    cfg.alpha = hp.uniform(spec.alpha_lo, spec.alpha_hi);
    cfg.seed = derive_seed(run_seed, 0x5eedULL);
    return cfg;
}

// Independent runs; merge order is the run index, so worker count never
// changes the result. Failed runs are flagged and kept.
inline std::vector<CandidatePool> run_sweep(const MlpParams& theta, const SweepSpec& spec,
                                            std::size_t classes, std::size_t workers = 1) {
    std::vector<CandidatePool> pools(spec.runs);
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            const std::size_t r = next.fetch_add(1);
            if (r >= spec.runs) return;
            const ReconConfig cfg = sweep_run_config(spec, r);
            pools[r] = run_reconstruction(theta, cfg, classes);
            pools[r].run_id = static_cast<int>(r);
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> ts;
        for (std::size_t t = 0; t < workers; ++t) ts.emplace_back(work);
        for (auto& t : ts) t.join();
    }
    return pools;
}

struct AmBaselineResult {
    Matrix x;                  // count x d
    std::vector<bool> failed;  // per-candidate divergence flag
};

// Activation-maximization baseline: gradient descent of the training loss
// over the input, hard relu backward.
inline AmBaselineResult activation_maximization_baseline(const MlpParams& theta, int y,
                                                         std::size_t count, double lr,
                                                         std::size_t iterations,
                                                         std::uint64_t seed) {
    check_label(theta, y);
    AmBaselineResult res;
    res.x = Matrix(count, theta.d);
    res.failed.assign(count, false);
    Rng rng(seed);
    for (auto& v : res.x.a) v = rng.normal();

    Vec z(theta.h), gout(theta.c), ga(theta.h), gx(theta.d), probs(theta.c);
    for (std::size_t i = 0; i < count; ++i) {
        double* x = res.x.row(i);
        for (std::size_t it = 0; it < iterations; ++it) {
            matvec(theta.w1, x, z.data());
            for (std::size_t k = 0; k < theta.h; ++k) z[k] += theta.b1[k];
            Vec a(theta.h);
            for (std::size_t k = 0; k < theta.h; ++k) a[k] = std::max(z[k], 0.0);
            Vec out = matvec(theta.w2, a);
            if (theta.c == 1) {
                const double t = static_cast<double>(y) * out[0];
                gout[0] = -static_cast<double>(y) * ActivationMode::sigmoid(-t);
            } else {
                double mx = out[0];
                for (double v : out) mx = std::max(mx, v);
                double denom = 0.0;
                for (std::size_t j = 0; j < theta.c; ++j) {
                    probs[j] = std::exp(out[j] - mx);
                    denom += probs[j];
                }
                for (std::size_t j = 0; j < theta.c; ++j)
                    gout[j] = probs[j] / denom - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0);
            }
            for (std::size_t k = 0; k < theta.h; ++k) {
                if (z[k] <= 0.0) {
                    ga[k] = 0.0;
                    continue;
                }
                double s = 0.0;
                for (std::size_t j = 0; j < theta.c; ++j) s += gout[j] * theta.w2(j, k);
                ga[k] = s;
            }
            matTvec(theta.w1, ga.data(), gx.data());
            bool ok = true;
            for (std::size_t j = 0; j < theta.d; ++j) {
                x[j] -= lr * gx[j];
                if (!std::isfinite(x[j])) ok = false;
            }
            if (!ok) {
                res.failed[i] = true;
                break;
            }
        }
    }
    return res;
}

}  // namespace recon
