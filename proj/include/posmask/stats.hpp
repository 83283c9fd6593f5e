#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace posmask {

// ---- special functions ----

// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    auto betacf = [](double a2, double b2, double x2) {
        const int max_iter = 300;
        const double eps = 3e-16, fpmin = 1e-300;
        double qab = a2 + b2, qap = a2 + 1.0, qam = a2 - 1.0;
        double c = 1.0, d = 1.0 - qab * x2 / qap;
        if (std::fabs(d) < fpmin) d = fpmin;
        d = 1.0 / d;
        double h = d;
        for (int m = 1; m <= max_iter; ++m) {
            int m2 = 2 * m;
            double aa = m * (b2 - m) * x2 / ((qam + m2) * (a2 + m2));
            d = 1.0 + aa * d;
            if (std::fabs(d) < fpmin) d = fpmin;
            c = 1.0 + aa / c;
            if (std::fabs(c) < fpmin) c = fpmin;
            d = 1.0 / d;
            h *= d * c;
            aa = -(a2 + m) * (qab + m) * x2 / ((a2 + m2) * (qap + m2));
            d = 1.0 + aa * d;
            if (std::fabs(d) < fpmin) d = fpmin;
            c = 1.0 + aa / c;
            if (std::fabs(c) < fpmin) c = fpmin;
            d = 1.0 / d;
            double del = d * c;
            h *= del;
            if (std::fabs(del - 1.0) < eps) break;
        }
        return h;
    };
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                      b * std::log(1.0 - x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          b * std::log(1.0 - x) + a * std::log(x)) *
                     betacf(b, a, 1.0 - x) / b;
}

// Upper tail of the F distribution: P(F_{d1,d2} > f).
inline double f_sf(double f, double d1, double d2) {
    if (f <= 0.0) return 1.0;
    return incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

inline double norm_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }
inline double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

namespace stats_detail {

// Composite Gauss-Legendre quadrature (20-point rule per panel).
inline double gauss_legendre(double lo, double hi, int panels, const auto& f) {
    static const double xs[10] = {0.0765265211334973, 0.2277858511416451, 0.3737060887154195,
                                  0.5108670019508271, 0.6360536807265150, 0.7463319064601508,
                                  0.8391169718222188, 0.9122344282513259, 0.9639719272779138,
                                  0.9931285991850949};
    static const double ws[10] = {0.1527533871307258, 0.1491729864726037, 0.1420961093183820,
                                  0.1316886384491766, 0.1181945319615184, 0.1019301198172404,
                                  0.0832767415767048, 0.0626720483341091, 0.0406014298003869,
                                  0.0176140071391521};
    double total = 0.0;
    double h = (hi - lo) / panels;
    for (int p = 0; p < panels; ++p) {
        double a = lo + p * h, mid = a + 0.5 * h, half = 0.5 * h;
        double acc = 0.0;
        for (int i = 0; i < 10; ++i)
            acc += ws[i] * (f(mid - half * xs[i]) + f(mid + half * xs[i]));
        total += acc * half;
    }
    return total;
}

// P(range of k iid standard normals < w)
inline double range_cdf_normal(double w, int k) {
    if (w <= 0.0) return 0.0;
    auto inner = [&](double z) {
        double d = norm_cdf(z) - norm_cdf(z - w);
        return norm_pdf(z) * std::pow(d, k - 1);
    };
    return k * gauss_legendre(-8.5, 8.5, 24, inner);
}

}  // namespace stats_detail

// CDF of the studentized range with k groups and df degrees of freedom,
// by integrating the normal-range CDF against the chi/sqrt(df) density.
inline double studentized_range_cdf(double q, int k, double df) {
    if (q <= 0.0) return 0.0;
    if (k < 2) throw std::invalid_argument("studentized_range_cdf: k must be >= 2");
    if (df > 2e4)  // effectively infinite df
        return stats_detail::range_cdf_normal(q, k);
    double half = df / 2.0;
    double ln_norm = half * std::log(half) - std::lgamma(half);
    auto outer = [&](double u) {
        // density of u = s/sigma: 2 (df/2)^{df/2} / Gamma(df/2) u^{df-1} e^{-df u^2 / 2}
        double ln_f = std::log(2.0) + ln_norm + (df - 1.0) * std::log(u) - half * u * u;
        return std::exp(ln_f) * stats_detail::range_cdf_normal(q * u, k);
    };
    double spread = 10.0 / std::sqrt(df);
    double lo = std::max(1e-8, 1.0 - spread), hi = 1.0 + spread;
    if (df < 30) {
        lo = 1e-8;
        hi = 1.0 + 12.0 / std::sqrt(df);
    }
    return stats_detail::gauss_legendre(lo, hi, 48, outer);
}

// ---- one-way ANOVA ----

struct AnovaResult {
    double f = 0.0;
    double p = 1.0;
    double df_between = 0.0;
    double df_within = 0.0;
    double ms_within = 0.0;
    bool degenerate = false;  // zero within-group variance with unequal means
};

inline AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw std::invalid_argument("anova: need at least 2 groups");
    std::size_t total_n = 0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw std::invalid_argument("anova: each group needs >= 2 observations");
        total_n += g.size();
    }
    double grand = 0.0;
    std::vector<double> means;
    for (const auto& g : groups) {
        double m = 0.0;
        for (double x : g) m += x;
        grand += m;
        means.push_back(m / g.size());
    }
    grand /= total_n;
    double ssb = 0.0, ssw = 0.0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        ssb += groups[i].size() * (means[i] - grand) * (means[i] - grand);
        for (double x : groups[i]) ssw += (x - means[i]) * (x - means[i]);
    }
    AnovaResult r;
    r.df_between = static_cast<double>(groups.size() - 1);
    r.df_within = static_cast<double>(total_n - groups.size());
    r.ms_within = ssw / r.df_within;
    if (ssw == 0.0) {
        if (ssb == 0.0) {
            r.f = 0.0;
            r.p = 1.0;
        } else {
            r.f = std::numeric_limits<double>::infinity();
            r.p = 0.0;
            r.degenerate = true;
        }
        return r;
    }
    r.f = (ssb / r.df_between) / r.ms_within;
    r.p = f_sf(r.f, r.df_between, r.df_within);
    return r;
}

// ---- Tukey HSD ----

struct TukeyPair {
    std::size_t group_a = 0, group_b = 0;
    double mean_diff = 0.0;
    double q = 0.0;  // studentized range statistic
    double p = 1.0;  // family-wise adjusted
};

struct TukeyResult {
    std::vector<TukeyPair> pairs;
    bool degenerate = false;

    const TukeyPair& pair(std::size_t a, std::size_t b) const {
        for (const auto& pr : pairs)
            if ((pr.group_a == a && pr.group_b == b) || (pr.group_a == b && pr.group_b == a))
                return pr;
        throw std::out_of_range("no such pair");
    }
};

// Tukey-Kramer pairwise comparisons on the groups of a one-way layout.
inline TukeyResult tukey_hsd(const std::vector<std::vector<double>>& groups) {
    AnovaResult an = anova_oneway(groups);
    TukeyResult result;
    result.degenerate = an.degenerate;
    int k = static_cast<int>(groups.size());
    std::vector<double> means;
    for (const auto& g : groups) {
        double m = 0.0;
        for (double x : g) m += x;
        means.push_back(m / g.size());
    }
    for (std::size_t a = 0; a < groups.size(); ++a)
        for (std::size_t b = a + 1; b < groups.size(); ++b) {
            TukeyPair pr;
            pr.group_a = a;
            pr.group_b = b;
            pr.mean_diff = means[a] - means[b];
            double se = std::sqrt(an.ms_within / 2.0 *
                                  (1.0 / groups[a].size() + 1.0 / groups[b].size()));
            if (se == 0.0) {
                pr.q = pr.mean_diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
                pr.p = pr.mean_diff == 0.0 ? 1.0 : 0.0;
            } else {
                pr.q = std::fabs(pr.mean_diff) / se;
                pr.p = 1.0 - studentized_range_cdf(pr.q, k, an.df_within);
                pr.p = std::clamp(pr.p, 0.0, 1.0);
            }
            result.pairs.push_back(pr);
        }
    return result;
}

}  // namespace posmask
