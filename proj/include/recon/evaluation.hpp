#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "recon/data.hpp"
#include "recon/model.hpp"
#include "recon/reconstruction.hpp"

namespace recon {

inline double cosine(const Vec& u, const Vec& v) { return cosine_similarity(u, v); }

// Global single-window SSIM with C1=(0.01)^2, C2=(0.03)^2 for dynamic
// range 1; statistics over all pixels per channel, averaged across channels.
inline double ssim(const Vec& a, const Vec& b, const ImageShape& shape) {
    if (a.size() != b.size() || a.size() != shape.pixels())
        throw std::invalid_argument("ssim: shape mismatch");
    const double c1 = 1e-4, c2 = 9e-4;
    const std::size_t per = shape.h * shape.w;
    double total = 0.0;
    for (std::size_t ch = 0; ch < shape.ch; ++ch) {
        const double* pa = a.data() + ch * per;
        const double* pb = b.data() + ch * per;
        double mua = 0.0, mub = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            mua += pa[i];
            mub += pb[i];
        }
        mua /= static_cast<double>(per);
        mub /= static_cast<double>(per);
        double va = 0.0, vb = 0.0, cov = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            const double da = pa[i] - mua, db = pb[i] - mub;
            va += da * da;
            vb += db * db;
            cov += da * db;
        }
        va /= static_cast<double>(per);
        vb /= static_cast<double>(per);
        cov /= static_cast<double>(per);
        total += ((2.0 * mua * mub + c1) * (2.0 * cov + c2)) /
                 ((mua * mua + mub * mub + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(shape.ch);
}

struct MatchRow {
    std::size_t train_index = 0;
    int label = 0;
    double margin = std::numeric_limits<double>::quiet_NaN();
    int best_run = -1;
    std::size_t best_candidate = 0;  // index within its pool
    double best_cosine = -2.0;
    std::optional<double> ssim;  // filled only for image-space evaluations
};

struct EvalReport {
    std::vector<MatchRow> rows;  // one per training sample
    // top-k (train, pool, candidate) matches by cosine for the inversion stage
    struct TopK {
        std::size_t train_index;
        int run_id;
        std::size_t candidate;
        double cosine;
    };
    std::vector<TopK> topk;
};

// Pairs each training embedding with its nearest candidate by cosine;
// same-label candidates only when label_filter is set. Also emits the top-k
// matches for the inversion stage (default 40).
inline EvalReport match(const EmbeddingDataset& train, const std::vector<CandidatePool>& pools,
                        bool label_filter = true, std::size_t top_k = 40) {
    if (pools.empty()) throw std::invalid_argument("match: no pools");
    for (const auto& p : pools)
        if (p.d() != train.d()) throw std::invalid_argument("match: dimension mismatch");

    EvalReport report;
    report.rows.resize(train.n());
    for (std::size_t i = 0; i < train.n(); ++i) {
        MatchRow row;
        row.train_index = i;
        row.label = train.y[i];
        const double* t = train.x.row(i);
        const double tn = std::sqrt(dot(t, t, train.d()));
        if (tn == 0.0) throw std::invalid_argument("match: zero-norm training embedding");
        for (const auto& pool : pools) {
            for (std::size_t j = 0; j < pool.m(); ++j) {
                if (label_filter && pool.y[j] != train.y[i]) continue;
                const double* x = pool.xhat.row(j);
                const double xn = std::sqrt(dot(x, x, pool.d()));
                if (xn == 0.0) continue;  // dead candidate, nothing to match
                const double cs = dot(t, x, train.d()) / (tn * xn);
                if (cs > row.best_cosine) {
                    row.best_cosine = cs;
                    row.best_run = pool.run_id;
                    row.best_candidate = j;
                }
            }
        }
        report.rows[i] = row;
    }

    std::vector<std::size_t> order(report.rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (report.rows[a].best_cosine != report.rows[b].best_cosine)
            return report.rows[a].best_cosine > report.rows[b].best_cosine;
        return a < b;
    });
    const std::size_t take = std::min(top_k, order.size());
    for (std::size_t t = 0; t < take; ++t) {
        const MatchRow& r = report.rows[order[t]];
        if (r.best_run < 0) continue;
        report.topk.push_back({r.train_index, r.best_run, r.best_candidate, r.best_cosine});
    }
    return report;
}

struct ReverseMatchRow {
    int run_id;
    std::size_t candidate;
    int label;
    std::size_t nearest_train;
    double cosine;
};

// Diagnostic candidate -> train matching (the evaluation direction stays
// train -> candidate).
inline std::vector<ReverseMatchRow> reverse_match(const EmbeddingDataset& train,
                                                  const std::vector<CandidatePool>& pools,
                                                  bool label_filter = true) {
    if (pools.empty()) throw std::invalid_argument("reverse_match: no pools");
    std::vector<ReverseMatchRow> rows;
    for (const auto& pool : pools) {
        for (std::size_t j = 0; j < pool.m(); ++j) {
            const double* x = pool.xhat.row(j);
            const double xn = std::sqrt(dot(x, x, pool.d()));
            ReverseMatchRow row{pool.run_id, j, pool.y[j], 0, -2.0};
            if (xn > 0.0) {
                for (std::size_t i = 0; i < train.n(); ++i) {
                    if (label_filter && train.y[i] != pool.y[j]) continue;
                    const double* t = train.x.row(i);
                    const double tn = std::sqrt(dot(t, t, train.d()));
                    if (tn == 0.0) continue;
                    const double cs = dot(t, x, train.d()) / (tn * xn);
                    if (cs > row.cosine) {
                        row.cosine = cs;
                        row.nearest_train = i;
                    }
                }
            }
            rows.push_back(row);
        }
    }
    return rows;
}

struct GoodCounts {
    std::size_t n_good = 0;
    double fraction = 0.0;
};

inline GoodCounts count_good(const EvalReport& report, double cosine_threshold = 0.75,
                             std::optional<double> ssim_threshold = std::nullopt) {
    if (report.rows.empty()) throw std::invalid_argument("count_good: empty report");
    std::size_t good = 0;
    for (const auto& r : report.rows) {
        if (r.best_cosine <= cosine_threshold) continue;
        if (ssim_threshold && (!r.ssim || *r.ssim <= *ssim_threshold)) continue;
        ++good;
    }
    return {good, static_cast<double>(good) / static_cast<double>(report.rows.size())};
}

namespace detail {

inline Vec average_ranks(const Vec& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    Vec ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

struct SpearmanResult {
    double rho = 0.0;
    bool tie_degenerate = false;  // one side constant; rho reported as 0
};

inline SpearmanResult spearman(const Vec& a, const Vec& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: bad input");
    const Vec ra = detail::average_ranks(a);
    const Vec rb = detail::average_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
        cov += (ra[i] - ma) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return {0.0, true};
    return {cov / std::sqrt(va * vb), false};
}

struct MarginQualityRow {
    std::size_t train_index;
    double margin;
    double best_cosine;
};

struct MarginQualityResult {
    std::vector<MarginQualityRow> rows;
    SpearmanResult rho;  // |margin| vs best cosine
};

inline MarginQualityResult margin_vs_quality(const MlpParams& theta, const EmbeddingDataset& train,
                                             const EvalReport& report) {
    if (report.rows.size() != train.n())
        throw std::invalid_argument("margin_vs_quality: report does not match dataset");
    MarginQualityResult res;
    Vec absmargin(train.n()), cosines(train.n());
    for (std::size_t i = 0; i < train.n(); ++i) {
        Vec x(train.x.row(i), train.x.row(i) + train.d());
        const double m = margin(theta, x, train.y[i]);
        res.rows.push_back({i, m, report.rows[i].best_cosine});
        absmargin[i] = std::abs(m);
        cosines[i] = report.rows[i].best_cosine;
    }
    res.rho = spearman(absmargin, cosines);
    return res;
}

}  // namespace recon
