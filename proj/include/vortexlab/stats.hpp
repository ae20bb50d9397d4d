#pragma once

#include <cstddef>
#include <vector>

namespace vortexlab {

// Kolmogorov distribution 1% point: Q(1.62762) ~ 0.01 where
// Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2).
inline constexpr double ks_critical_1pct = 1.62762;

// One-sample KS statistic against U(0,1); values outside [0,1] are clamped
// by the caller. Input is copied and sorted.
double ks_statistic_uniform(std::vector<double> values);

// Two-sample KS statistic.
double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b);

// Asymptotic 1%-level accept/reject. Enforces n >= 1000 (the hard-coded
// critical value is asymptotic).
bool ks_pass_uniform(double statistic, std::size_t n);
bool ks_pass_two_sample(double statistic, std::size_t n, std::size_t m);

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double max_abs_residual = 0.0;
};

// Least squares y ~ slope*x (through the origin).
LineFit fit_through_origin(const std::vector<double>& x, const std::vector<double>& y);
// Least squares y ~ intercept + slope*x.
LineFit fit_affine(const std::vector<double>& x, const std::vector<double>& y);

// Streaming mean/variance (Welford).
class RunningStat {
public:
    void add(double v);
    std::size_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const;  // unbiased
    double stderr_mean() const;

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

}  // namespace vortexlab
