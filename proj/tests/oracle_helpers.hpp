#pragma once

// Reference implementations written separately from the library so the
// tests have something independent to disagree with.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

namespace testoracle {

struct PairSample {
    int gt = 0;
    int pred = 0;
    bool foreground = true;
};

// Weight pipeline, brute force over a flat C*C row-major matrix: the
// square-root emphasis rule, then division by the foreground mean, then
// the shrink toward 1.
inline std::vector<double> weight_pipeline(const std::vector<double>& m, int c,
                                           const std::vector<PairSample>& pairs, double lambda_l) {
    const auto entry = [&](int i, int j) {
        return m[static_cast<std::size_t>(i) * c + static_cast<std::size_t>(j)];
    };
    std::vector<double> w(pairs.size(), 1.0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!pairs[i].foreground) continue;
        const int g = pairs[i].gt;
        const int p = pairs[i].pred;
        if (g == p)
            w[i] = std::sqrt(1.0 - entry(g, g));
        else
            w[i] = std::sqrt(entry(g, p) / std::max(entry(g, g), 1e-6));
    }
    double sum = 0.0;
    std::size_t n_fg = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        if (pairs[i].foreground) {
            sum += w[i];
            ++n_fg;
        }
    if (n_fg > 0) {
        const double mean = sum / static_cast<double>(n_fg);
        for (std::size_t i = 0; i < pairs.size(); ++i)
            if (pairs[i].foreground) w[i] = mean > 0.0 ? w[i] / mean : 1.0;
    }
    for (double& v : w) v = (v + lambda_l) / (1.0 + lambda_l);
    return w;
}

inline double ema_closed_form(double t0, double s, double alpha, long long k) {
    const double ak = std::pow(alpha, static_cast<double>(k));
    return ak * t0 + (1.0 - ak) * s;
}

// Goodness-of-fit p-value; categories with zero expected probability are
// structural and must hold zero counts.
inline double chi_square_p(const std::vector<long long>& counts, const std::vector<double>& probs) {
    double n = 0.0;
    for (long long c : counts) n += static_cast<double>(c);
    double stat = 0.0;
    int cells = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (probs[i] <= 0.0) {
            if (counts[i] != 0) return 0.0;
            continue;
        }
        const double expected = n * probs[i];
        const double d = static_cast<double>(counts[i]) - expected;
        stat += d * d / expected;
        ++cells;
    }
    if (cells <= 1) return 1.0;
    const boost::math::chi_squared dist(cells - 1);
    return boost::math::cdf(boost::math::complement(dist, stat));
}

// One-sided sign test: probability of at least `wins` successes out of
// `n` fair coin flips.
inline double sign_test_p(int wins, int n) {
    if (n <= 0) return 1.0;
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        const double log_choose = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                                  std::lgamma(static_cast<double>(n - k) + 1.0);
        p += std::exp(log_choose + n * std::log(0.5));
    }
    return std::min(p, 1.0);
}

}  // namespace testoracle
