#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "vortexlab/vec.hpp"

namespace vortexlab {

// Zero-mean Green function of -Laplace on the square torus [0,2pi)^2,
// normalized so that G(u) = -(1/2pi) log|u| + smooth near u = 0.
//
// Evaluation uses a Gaussian-screened split
//   G(u) = (1/4pi) sum_n E1(a^2 |u - 2pi n|^2) - 1/(16 pi^2 a^2) + F(u),
// where the image sum runs over the 3x3 neighbor block of the reduced
// difference and F is the rapidly convergent Fourier remainder
//   F(u) = (2pi)^-2 sum_{k != 0} exp(-|k|^2/(4a^2)) cos(k.u) / |k|^2.
// F and its first/cross derivatives are tabulated on a uniform grid and
// interpolated with C^1 Hermite bicubic patches, so velocity fields derived
// from gradients of this object are exact gradients of the interpolant
// (the N-body flow inherits a conserved discrete Hamiltonian).
class TorusGreen {
public:
    // Builds the table, or loads it from the cache directory (VL_CACHE_DIR)
    // when a file for (resolution, ewald_split) is present.
    static std::shared_ptr<const TorusGreen> create(int resolution = 1024,
                                                    double ewald_split = 2.0);

    int resolution() const { return res_; }
    double ewald_split() const { return alpha_; }

    // Reduce a difference vector to the fundamental cell [-pi,pi)^2.
    static Vec2 reduce(Vec2 u);

    // G and derivatives as functions of the (un-reduced) difference.
    double value(Vec2 u) const;
    Vec2 gradient(Vec2 u) const;
    Mat2 hessian(Vec2 u) const;

    // Smooth remainder g(u) = G(u) + (1/2pi) log(periodic distance); finite
    // and smooth through u = 0. Used by the regularized branch r < eps.
    double smooth_value(Vec2 u) const;
    Vec2 smooth_gradient(Vec2 u) const;
    Mat2 smooth_hessian(Vec2 u) const;

    // Table of the Fourier remainder (exposed for the spectral self-test).
    double table_f(int i, int j) const { return f_[idx(i, j)]; }
    // Closed-form torus Fourier coefficient of the screened image sum W,
    // w.r.t. the normalized measure: W_hat(k) = (1-exp(-|k|^2/4a^2))/((2pi)^2 |k|^2).
    double screened_coefficient(int k1, int k2) const;

    // Binary cache (little endian, 8-byte magic "VLGTBL01").
    void save(std::ostream& os) const;
    static std::shared_ptr<TorusGreen> load(std::istream& is);
    static std::string cache_file_name(int resolution, double ewald_split);

    TorusGreen(int resolution, double ewald_split, bool build);

private:
    std::size_t idx(int i, int j) const {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(res_) +
               static_cast<std::size_t>(j);
    }
    void build_tables();
    // Hermite bicubic patch evaluation; deriv selects value/gradient/hessian.
    struct PatchEval {
        double f;
        Vec2 grad;
        Mat2 hess;
    };
    PatchEval interpolate(Vec2 u, int deriv_order) const;

    // screened image sum W and derivatives (3x3 block around reduced u)
    double wsum(Vec2 ur) const;
    Vec2 wsum_gradient(Vec2 ur) const;
    Mat2 wsum_hessian(Vec2 ur) const;
    // same, with the central image replaced by its smooth completion
    double wsum_smooth(Vec2 ur, double r) const;
    Vec2 wsum_smooth_gradient(Vec2 ur) const;
    Mat2 wsum_smooth_hessian(Vec2 ur) const;

    int res_;
    double alpha_;
    double cell_;       // 2pi / res
    double constant_;   // 1/(16 pi^2 alpha^2), subtracted to make G zero mean
    int kmax_;
    std::vector<double> f_, fx_, fy_, fxy_;
};

}  // namespace vortexlab
