#pragma once

// Independent scalar-loop implementations used as test oracles. Nothing here
// calls into the library's kernels.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline Rows to_rows(const couplegen::Matrix& m)
{
    Rows r(m.rows(), std::vector<double>(m.cols()));
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            r[i][j] = m(i, j);
        }
    }
    return r;
}

inline Rows project(const Rows& x, const Rows& w)
{
    Rows out(x.size(), std::vector<double>(w[0].size(), 0.0));
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = 0; j < w[0].size(); ++j) {
            long double acc = 0;
            for (std::size_t k = 0; k < w.size(); ++k) {
                acc += static_cast<long double>(x[i][k]) * w[k][j];
            }
            out[i][j] = static_cast<double>(acc);
        }
    }
    return out;
}

// softmax(q k^T / norm) v, one query at a time, in long double.
inline Rows attend(const Rows& q, const Rows& k, const Rows& v, double norm)
{
    Rows out(q.size(), std::vector<double>(v[0].size(), 0.0));
    for (std::size_t i = 0; i < q.size(); ++i) {
        std::vector<long double> s(k.size());
        long double peak = -std::numeric_limits<long double>::infinity();
        for (std::size_t j = 0; j < k.size(); ++j) {
            long double dot = 0;
            for (std::size_t c = 0; c < q[i].size(); ++c) {
                dot += static_cast<long double>(q[i][c]) * k[j][c];
            }
            s[j] = dot / norm;
            peak = std::max(peak, s[j]);
        }
        long double total = 0;
        for (auto& x : s) {
            x = std::exp(x - peak);
            total += x;
        }
        for (std::size_t c = 0; c < v[0].size(); ++c) {
            long double acc = 0;
            for (std::size_t j = 0; j < k.size(); ++j) {
                acc += s[j] / total * v[j][c];
            }
            out[i][c] = static_cast<double>(acc);
        }
    }
    return out;
}

inline Rows concat(std::initializer_list<Rows> parts)
{
    Rows out;
    for (const auto& p : parts) {
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

inline Rows scale(Rows m, double f)
{
    for (auto& r : m) {
        for (auto& x : r) {
            x *= f;
        }
    }
    return m;
}

/// QKV-level attention: project per stream, then concatenate.
inline Rows joint(const Rows& text, const Rows& image, const Rows& wq, const Rows& wk,
                  const Rows& wv, double norm)
{
    return attend(concat({project(text, wq), project(image, wq)}),
                  concat({project(text, wk), project(image, wk)}),
                  concat({project(text, wv), project(image, wv)}), norm);
}

/// Key-scaled three-stream attention. A stream whose key scale is exactly 0 is
/// left out of the keys and values altogether.
inline Rows coupled(const Rows& bg, const Rows& ent, const Rows& img, const Rows& wq,
                    const Rows& wk, const Rows& wv, double theta, double norm)
{
    const Rows q = concat({project(bg, wq), project(ent, wq), project(img, wq)});
    Rows k, v;
    if (theta != 1.0) {
        k = concat({k, scale(project(bg, wk), 1.0 - theta)});
        v = concat({v, project(bg, wv)});
    }
    if (theta != 0.0) {
        k = concat({k, scale(project(ent, wk), theta)});
        v = concat({v, project(ent, wv)});
    }
    return attend(q, concat({k, project(img, wk)}), concat({v, project(img, wv)}), norm);
}

/// Embedding-level attention: concatenate, then project as one sequence.
inline Rows branch(const Rows& text, const Rows& image, const Rows& wq, const Rows& wk,
                   const Rows& wv, double norm)
{
    const Rows x = concat({text, image});
    return attend(project(x, wq), project(x, wk), project(x, wv), norm);
}

/// Exhaustive minimization of sum (x_i - v_i)^2 over monotone sequences on the
/// grid {lo, lo + h, ..., hi}, by dynamic programming over prefix minima.
inline std::vector<double> grid_monotone_projection(const std::vector<double>& v, double lo,
                                                    double hi, double h)
{
    const std::size_t g = static_cast<std::size_t>(std::llround((hi - lo) / h)) + 1;
    const std::size_t n = v.size();
    std::vector<std::vector<double>> cost(n, std::vector<double>(g));
    std::vector<std::vector<std::size_t>> arg(n, std::vector<std::size_t>(g));
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_at = 0;
        for (std::size_t level = 0; level < g; ++level) {
            if (i > 0 && cost[i - 1][level] < best) {
                best = cost[i - 1][level];
                best_at = level;
            }
            const double x = lo + h * static_cast<double>(level);
            cost[i][level] = (x - v[i]) * (x - v[i]) + (i > 0 ? best : 0.0);
            arg[i][level] = best_at;
        }
    }
    std::size_t level = static_cast<std::size_t>(
        std::min_element(cost[n - 1].begin(), cost[n - 1].end()) - cost[n - 1].begin());
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        x[i] = lo + h * static_cast<double>(level);
        level = arg[i][level];
    }
    return x;
}

} // namespace oracle
