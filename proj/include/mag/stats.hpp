#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace mag::stats {

inline double mean(std::span<const double> xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    return m / static_cast<double>(xs.size());
}

inline double sample_sd(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    return std::sqrt(v / static_cast<double>(xs.size() - 1));
}

// Regularized upper incomplete gamma Q(a, x), series/continued-fraction form.
inline double gammq(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gammq: bad arguments");
    if (x == 0.0) return 1.0;
    const double gln = std::lgamma(a);
    if (x < a + 1.0) {
        // Series for P(a,x); Q = 1 - P.
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-14) break;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - gln);
    }
    // Continued fraction for Q(a,x).
    const double kTiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / kTiny, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-14) break;
    }
    return std::exp(-x + a * std::log(x) - gln) * h;
}

// P(Chi2_df >= stat).
inline double chi2_sf(double stat, double df) { return gammq(df / 2.0, stat / 2.0); }

// Chi-square goodness-of-fit statistic of observed counts against expected
// probabilities.
inline double chi2_gof(std::span<const long> counts, std::span<const double> probs) {
    if (counts.size() != probs.size()) throw std::invalid_argument("chi2_gof: size mismatch");
    long total = 0;
    for (long c : counts) total += c;
    double stat = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double expct = probs[i] * static_cast<double>(total);
        if (expct <= 0.0) {
            if (counts[i] != 0) return std::numeric_limits<double>::infinity();
            continue;
        }
        const double d = static_cast<double>(counts[i]) - expct;
        stat += d * d / expct;
    }
    return stat;
}

// Two-sample chi-square homogeneity test; returns the survival probability
// (small value = distributions differ).
inline double chi2_two_sample_sf(std::span<const long> a, std::span<const long> b) {
    if (a.size() != b.size()) throw std::invalid_argument("chi2_two_sample_sf: size mismatch");
    long na = 0, nb = 0;
    for (long x : a) na += x;
    for (long x : b) nb += x;
    if (na == 0 || nb == 0) throw std::invalid_argument("chi2_two_sample_sf: empty sample");
    double stat = 0.0;
    int used_cells = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double pooled = static_cast<double>(a[i] + b[i]);
        if (pooled == 0.0) continue;
        ++used_cells;
        const double ea = pooled * static_cast<double>(na) / static_cast<double>(na + nb);
        const double eb = pooled * static_cast<double>(nb) / static_cast<double>(na + nb);
        const double da = static_cast<double>(a[i]) - ea;
        const double db = static_cast<double>(b[i]) - eb;
        stat += da * da / ea + db * db / eb;
    }
    if (used_cells < 2) return 1.0;
    return chi2_sf(stat, static_cast<double>(used_cells - 1));
}

// One-sided paired t statistic for H1: mean(a - b) > 0.
inline double paired_t_statistic(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("paired_t_statistic: bad samples");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const double m = mean(d);
    const double sd = sample_sd(d);
    if (sd == 0.0) return m > 0.0 ? std::numeric_limits<double>::infinity()
                                  : (m < 0.0 ? -std::numeric_limits<double>::infinity() : 0.0);
    return m / (sd / std::sqrt(static_cast<double>(d.size())));
}

// Upper 5% critical value of Student's t with 4 degrees of freedom (5 paired
// seeds), for the one-sided tests.
inline constexpr double kTCritOneSided05Df4 = 2.131846786;

}  // namespace mag::stats
