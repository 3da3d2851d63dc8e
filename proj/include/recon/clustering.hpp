#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "recon/linalg.hpp"

namespace recon {

struct ClusterResult {
    std::vector<std::size_t> assignment;  // candidate index -> cluster id
    std::vector<std::size_t> sizes;       // per cluster id
    std::size_t maxclust = 0;
    // linkage is "average", metric is "cosine" by construction
};

// D_ij = 1 - cos(x_i, x_j); errors on zero-norm rows.
inline Matrix cosine_distance_matrix(const Matrix& pool) {
    const std::size_t m = pool.rows, d = pool.cols;
    Vec norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        norms[i] = std::sqrt(dot(pool.row(i), pool.row(i), d));
        if (norms[i] == 0.0)
            throw std::invalid_argument("cosine_distance_matrix: zero-norm row " + std::to_string(i));
    }
    Matrix dist(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        dist(i, i) = 0.0;
        for (std::size_t j = i + 1; j < m; ++j) {
            const double c = dot(pool.row(i), pool.row(j), d) / (norms[i] * norms[j]);
            dist(i, j) = 1.0 - c;
            dist(j, i) = 1.0 - c;
        }
    }
    return dist;
}

// Agglomerative merge with unweighted average linkage (Lance-Williams
// update), stopped at exactly min(maxclust, m) clusters. Merge ties break
// toward the smallest pair of current cluster anchor indices; final ids are
// numbered by each cluster's smallest member.
inline ClusterResult agglomerate(const Matrix& distances, std::size_t maxclust) {
    const std::size_t m = distances.rows;
    if (distances.cols != m) throw std::invalid_argument("agglomerate: distance matrix not square");
    if (maxclust < 1) throw std::invalid_argument("agglomerate: maxclust must be >= 1");
    const std::size_t target = std::min(maxclust, m);

    Matrix d = distances;
    std::vector<bool> active(m, true);
    std::vector<std::size_t> size(m, 1);
    std::vector<std::vector<std::size_t>> members(m);
    for (std::size_t i = 0; i < m; ++i) members[i] = {i};

    // nearest active neighbor cache per anchor (j > not required; full scan)
    std::vector<std::size_t> nn(m, 0);
    std::vector<double> nnd(m, std::numeric_limits<double>::infinity());
    auto rescan = [&](std::size_t i) {
        nnd[i] = std::numeric_limits<double>::infinity();
        nn[i] = i;
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i || !active[j]) continue;
            if (d(i, j) < nnd[i] || (d(i, j) == nnd[i] && j < nn[i])) {
                nnd[i] = d(i, j);
                nn[i] = j;
            }
        }
    };
    for (std::size_t i = 0; i < m; ++i) rescan(i);

    std::size_t nclusters = m;
    while (nclusters > target) {
        // global minimum with smallest (min(i,nn), max) pair on ties
        std::size_t bi = m, bj = m;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m; ++i) {
            if (!active[i]) continue;
            const std::size_t j = nn[i];
            if (!active[j] || j == i) {
                rescan(i);
            }
            const std::size_t lo = std::min(i, nn[i]), hi = std::max(i, nn[i]);
            const double v = nnd[i];
            if (v < best || (v == best && (lo < bi || (lo == bi && hi < bj)))) {
                best = v;
                bi = lo;
                bj = hi;
            }
        }
        // merge bj into bi; average linkage update
        const double na = static_cast<double>(size[bi]);
        const double nb = static_cast<double>(size[bj]);
        for (std::size_t k = 0; k < m; ++k) {
            if (!active[k] || k == bi || k == bj) continue;
            const double nd = (na * d(bi, k) + nb * d(bj, k)) / (na + nb);
            d(bi, k) = nd;
            d(k, bi) = nd;
        }
        active[bj] = false;
        size[bi] += size[bj];
        members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
        members[bj].clear();
        --nclusters;
        rescan(bi);
        for (std::size_t k = 0; k < m; ++k) {
            if (!active[k] || k == bi) continue;
            if (nn[k] == bi || nn[k] == bj) {
                rescan(k);
            } else if (d(bi, k) < nnd[k] || (d(bi, k) == nnd[k] && bi < nn[k])) {
                nnd[k] = d(bi, k);
                nn[k] = bi;
            }
        }
    }

    // stable ids: order clusters by smallest member index
    std::vector<std::size_t> anchors;
    for (std::size_t i = 0; i < m; ++i)
        if (active[i]) anchors.push_back(i);
    std::vector<std::size_t> first(anchors.size());
    for (std::size_t t = 0; t < anchors.size(); ++t)
        first[t] = *std::min_element(members[anchors[t]].begin(), members[anchors[t]].end());
    std::vector<std::size_t> order(anchors.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return first[a] < first[b]; });

    ClusterResult res;
    res.maxclust = maxclust;
    res.assignment.assign(m, 0);
    res.sizes.assign(anchors.size(), 0);
    for (std::size_t t = 0; t < order.size(); ++t) {
        for (std::size_t idx : members[anchors[order[t]]]) res.assignment[idx] = t;
        res.sizes[t] = members[anchors[order[t]]].size();
    }
    return res;
}

enum class RepresentativeMode { Mean, NearestToMean };

struct Representative {
    std::size_t cluster_id;
    std::size_t size;
    Vec vec;
};

// The k largest clusters (ties -> smaller cluster id first); Mean is the
// arithmetic member mean, NearestToMean the member with the highest cosine
// to that mean (ties and a zero mean -> lowest member index).
inline std::vector<Representative> representatives(const Matrix& pool, const ClusterResult& result,
                                                   std::size_t k_largest, RepresentativeMode mode) {
    if (k_largest < 1) throw std::invalid_argument("representatives: k_largest must be >= 1");
    const std::size_t nclusters = result.sizes.size();
    std::vector<std::size_t> order(nclusters);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (result.sizes[a] != result.sizes[b]) return result.sizes[a] > result.sizes[b];
        return a < b;
    });

    std::vector<std::vector<std::size_t>> members(nclusters);
    for (std::size_t i = 0; i < result.assignment.size(); ++i)
        members[result.assignment[i]].push_back(i);

    std::vector<Representative> reps;
    const std::size_t take = std::min(k_largest, nclusters);
    for (std::size_t t = 0; t < take; ++t) {
        const std::size_t cid = order[t];
        Vec mean(pool.cols, 0.0);
        for (std::size_t idx : members[cid])
            for (std::size_t j = 0; j < pool.cols; ++j) mean[j] += pool(idx, j);
        for (auto& v : mean) v /= static_cast<double>(members[cid].size());
        if (mode == RepresentativeMode::Mean) {
            reps.push_back({cid, result.sizes[cid], std::move(mean)});
            continue;
        }
        const double mn = norm2(mean);
        std::size_t best = members[cid].front();
        double bestcos = -2.0;
        for (std::size_t idx : members[cid]) {
            double cs = -2.0;
            const double xn = std::sqrt(dot(pool.row(idx), pool.row(idx), pool.cols));
            if (mn > 0.0 && xn > 0.0) cs = dot(pool.row(idx), mean.data(), pool.cols) / (mn * xn);
            if (cs > bestcos) {
                bestcos = cs;
                best = idx;
            }
        }
        reps.push_back({cid, result.sizes[cid], Vec(pool.row(best), pool.row(best) + pool.cols)});
    }
    return reps;
}

struct MaxclustSweepRow {
    std::size_t maxclust;
    RepresentativeMode mode;
    std::size_t n_good;
};

// For each maxclust and both representative modes: cluster, take the
// k largest representatives and count those within the cosine threshold of
// some training sample. The train set is used for scoring only.
inline std::vector<MaxclustSweepRow> maxclust_sweep(const Matrix& pool,
                                                    const std::vector<std::size_t>& maxclusts,
                                                    std::size_t k_largest, const Matrix& train,
                                                    double cosine_threshold) {
    if (pool.rows == 0) throw std::invalid_argument("maxclust_sweep: empty pool");
    const Matrix dist = cosine_distance_matrix(pool);
    std::vector<MaxclustSweepRow> rows;
    for (std::size_t mc : maxclusts) {
        const ClusterResult cr = agglomerate(dist, mc);
        for (RepresentativeMode mode : {RepresentativeMode::Mean, RepresentativeMode::NearestToMean}) {
            const auto reps = representatives(pool, cr, k_largest, mode);
            std::size_t good = 0;
            for (const auto& rep : reps) {
                if (norm2(rep.vec) == 0.0) continue;
                double best = -2.0;
                for (std::size_t i = 0; i < train.rows; ++i)
                    best = std::max(best, cosine_similarity(rep.vec.data(), train.row(i), train.cols));
                if (best > cosine_threshold) ++good;
            }
            rows.push_back({mc, mode, good});
        }
    }
    return rows;
}

}  // namespace recon
