#include "vortexlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vortexlab {

double ks_statistic_uniform(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("ks: empty sample");
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    double d = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double x = values[i];
        d = std::max(d, (static_cast<double>(i) + 1.0) / n - x);
        d = std::max(d, x - static_cast<double>(i) / n);
    }
    return d;
}

double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

bool ks_pass_uniform(double statistic, std::size_t n) {
    if (n < 1000) throw std::invalid_argument("ks: need n >= 1000 for the asymptotic critical value");
    return statistic * std::sqrt(static_cast<double>(n)) <= ks_critical_1pct;
}

bool ks_pass_two_sample(double statistic, std::size_t n, std::size_t m) {
    if (n < 1000 || m < 1000)
        throw std::invalid_argument("ks: need n,m >= 1000 for the asymptotic critical value");
    const double en = static_cast<double>(n) * static_cast<double>(m) /
                      static_cast<double>(n + m);
    return statistic * std::sqrt(en) <= ks_critical_1pct;
}

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson: bad input");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

LineFit fit_through_origin(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty()) throw std::invalid_argument("fit: bad input");
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    LineFit f;
    f.slope = (sxx > 0.0) ? sxy / sxx : 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        f.max_abs_residual = std::max(f.max_abs_residual, std::abs(y[i] - f.slope * x[i]));
    return f;
}

LineFit fit_affine(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit: bad input");
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double det = n * sxx - sx * sx;
    LineFit f;
    if (det != 0.0) {
        f.slope = (n * sxy - sx * sy) / det;
        f.intercept = (sy * sxx - sx * sxy) / det;
    }
    for (std::size_t i = 0; i < x.size(); ++i)
        f.max_abs_residual =
            std::max(f.max_abs_residual, std::abs(y[i] - f.intercept - f.slope * x[i]));
    return f;
}

void RunningStat::add(double v) {
    ++n_;
    const double d = v - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (v - mean_);
}

double RunningStat::variance() const {
    if (n_ < 2) return 0.0;
    return m2_ / static_cast<double>(n_ - 1);
}

double RunningStat::stderr_mean() const {
    if (n_ < 2) return 0.0;
    return std::sqrt(variance() / static_cast<double>(n_));
}

}  // namespace vortexlab
