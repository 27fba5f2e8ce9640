// Test-side oracles, independent of the library's implementation paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "stgia/model.hpp"
#include "stgia/road_network.hpp"

namespace oracles {

/// Central finite differences of f at x, step h.
template <typename F>
std::vector<double> finite_diff(F&& f, std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

/// All-pairs shortest paths by Floyd-Warshall over the same undirected graph.
inline std::map<stgia::NodeId, std::map<stgia::NodeId, double>> floyd_warshall(
    const stgia::RoadNetwork& net) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<stgia::NodeId> ids;
    for (const auto& [id, p] : net.nodes()) ids.push_back(id);
    const std::size_t n = ids.size();
    std::vector<std::vector<double>> d(n, std::vector<double>(n, inf));
    std::map<stgia::NodeId, std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) { idx[ids[i]] = i; d[i][i] = 0.0; }
    for (const auto& e : net.edges()) {
        const std::size_t u = idx[e.u], v = idx[e.v];
        d[u][v] = std::min(d[u][v], e.length_m);
        d[v][u] = std::min(d[v][u], e.length_m);
    }
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
    std::map<stgia::NodeId, std::map<stgia::NodeId, double>> out;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out[ids[i]][ids[j]] = d[i][j];
    return out;
}

/// Cross-entropy evaluated directly in extended precision.
inline double loss_direct(const std::vector<double>& logits, const std::vector<double>& y) {
    long double m = logits[0];
    for (double v : logits) m = std::max<long double>(m, v);
    long double z = 0.0L;
    for (double v : logits) z += expl(v - m);
    long double out = 0.0L;
    for (std::size_t c = 0; c < y.size(); ++c)
        out += static_cast<long double>(y[c]) * (logl(z) + m - logits[c]);
    return static_cast<double>(out);
}

/// Closed-form input recovery from a batch-1 linear-softmax gradient:
/// gW2[c] = r_c x, gb2[c] = r_c, so x = gW2[c] / gb2[c] for any r_c != 0.
inline std::vector<double> linear_closed_form(const stgia::ModelSpec& spec,
                                              const stgia::GradVector& g) {
    const stgia::ParamLayout lay(spec);
    int c_best = 0;
    double best = 0.0;
    for (int c = 0; c < lay.l; ++c)
        if (std::abs(g[lay.b2 + c]) > best) { best = std::abs(g[lay.b2 + c]); c_best = c; }
    std::vector<double> x(lay.d);
    for (int j = 0; j < lay.d; ++j)
        x[j] = g[lay.w2 + static_cast<std::size_t>(c_best) * lay.d + j] / g[lay.b2 + c_best];
    return x;
}

/// CDF of Gamma(shape 2, scale 1/eps): F(r) = 1 - (1 + eps r) e^{-eps r}.
inline double gamma2_cdf(double r, double eps) {
    if (r <= 0.0) return 0.0;
    const double s = eps * r;
    return 1.0 - (1.0 + s) * std::exp(-s);
}

/// Kolmogorov-Smirnov statistic of samples against a CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> samples, Cdf&& cdf) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    }
    return d;
}

}  // namespace oracles
