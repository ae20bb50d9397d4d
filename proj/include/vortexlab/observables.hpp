#pragma once

#include <array>
#include <complex>
#include <memory>
#include <vector>

#include "vortexlab/dynamics.hpp"

namespace vortexlab {

using Complex = std::complex<double>;
using CVec3 = std::array<Complex, 3>;  // complex ambient vector

// A smooth test function on one surface with closed-form gradient: either a
// trigonometric polynomial sum_k c_k e^{i k.x} (torus) or a polynomial in the
// ambient coordinates (plane, disk, sphere).
class TestFunction {
public:
    struct TrigTerm {
        int k1, k2;
        Complex c;
    };
    struct PolyTerm {
        int px, py, pz;
        Complex c;
    };

    static TestFunction trig(std::vector<TrigTerm> terms);
    static TestFunction poly(std::vector<PolyTerm> terms);
    // real torus mode cos(k.x) (+ optional sine part), Hermitian coefficients
    static TestFunction trig_cos(int k1, int k2);
    static TestFunction trig_sin(int k1, int k2);
    static TestFunction coordinate(int axis);  // 0:x 1:y 2:z

    bool is_trig() const { return is_trig_; }
    const std::vector<TrigTerm>& trig_terms() const { return trig_; }
    const std::vector<PolyTerm>& poly_terms() const { return poly_; }

    Complex value(Point x) const;
    CVec3 gradient(Point x) const;

private:
    bool is_trig_ = true;
    std::vector<TrigTerm> trig_;
    std::vector<PolyTerm> poly_;
};

// Composition tree over n complex variables, closed under the primitives
// {variable, constant, sum, product, conjugation, radial bump}. Evaluation
// returns the value together with both Wirtinger gradients, so every observable
// built from it has registered exact derivatives (no numeric differentiation).
class Outer {
public:
    Outer();  // constant 0

    static Outer var(int index);
    static Outer constant(Complex c);
    static Outer sum(std::vector<Outer> parts);
    static Outer prod(std::vector<Outer> parts);
    static Outer conjugate(Outer inner);
    // beta(|w|^2) with beta(u) = exp(1 - 1/(1-u)) on [0,1), 0 beyond:
    // compactly supported in the inner value, C^infinity
    static Outer bump(Outer inner);

    int num_vars() const;  // 1 + highest variable index used (0 if none)

    struct Eval {
        Complex value;
        std::vector<Complex> dz, dzb;  // dF/dz_k and dF/d(conj z_k)
    };
    Eval eval(const std::vector<Complex>& z) const;
    Complex value(const std::vector<Complex>& z) const;

private:
    enum class Op { Var, Const, Sum, Prod, Conj, Bump };
    struct Node;
    explicit Outer(std::shared_ptr<const Node> n);
    std::shared_ptr<const Node> node_;
};

// Cylinder observable f(x) = chi_delta(x) * outer(<phi_1,gamma>, ..., <phi_n,gamma>)
// where <phi,gamma> = sum_i xi_i phi(x_i) and chi_delta is the diagonal cutoff
// prod_{i<j} eta(d(x_i,x_j)/delta): f vanishes identically when any pair sits
// at distance <= delta/2. cutoff_order -1 selects the C^infinity step built
// from exp(-1/s) quotients; m >= 1 selects the C^m polynomial step.
struct CylinderObservable {
    Outer outer;
    std::vector<TestFunction> inner;
    double cutoff_delta = 0.0;
    int cutoff_order = -1;
};

// Smoothed step eta: 0 on (-inf,1/2], 1 on [1,inf); value and derivative.
struct StepEval {
    double v, d;
};
StepEval cutoff_step(double s, int order);

// couplings z_k = sum_i xi_i phi_k(x_i)
std::vector<Complex> couplings(const CylinderObservable& obs, const VortexState& state);

Complex eval(const CylinderObservable& obs, const VortexState& state);

// full phase-space gradient (per-vortex ambient complex vectors), product rule
// through cutoff, outer tree and test functions
std::vector<CVec3> observable_gradient(const CylinderObservable& obs, const VortexState& state);

// Lf = -i sum_i grad_i f . B_i with the unregularized field; returns 0 inside
// the cutoff's vanishing region without touching the singular kernel
Complex liouville_apply(const CylinderObservable& obs, const VortexState& state);

// U_t f = f after the true flow; near-collapse propagates as near_collapse_error
Complex koopman_apply(const CylinderObservable& obs, const VortexState& state, double t,
                      const FlowOptions& opts = {});

// V^eps_t f = f after the arrested flow (identity on the arrested set)
Complex arrested_koopman_apply(const CylinderObservable& obs, const VortexState& state, double t,
                               double epsilon, FlowOptions opts = {});

// H_phi(x,y) = (grad phi(x) - grad phi(y)) . K(x,y) / 2, symmetric, zero on
// the diagonal by convention. Arguments are put in a canonical order first so
// the symmetry holds bitwise.
Complex symmetrized_kernel(const Geometry& geom, const TestFunction& phi, Point x, Point y);

// | <phi, omega_t> - <phi, omega_0> - int_0^t sum_{i != j} xi_i xi_j
//   H_phi(x_i(s), x_j(s)) ds |  with adaptive quadrature over dense output
double weak_form_residual(const Trajectory& traj, const TestFunction& phi,
                          double quad_tol = 1e-8);

// Configuration-space generator: -i sum_k [ dF/dz_k <H_{phi_k}, gamma x gamma>
// + dF/dzb_k conj(...) ]; agrees with liouville_apply at cutoff_delta = 0 on
// boundaryless surfaces.
Complex config_generator_apply(const CylinderObservable& obs, const VortexState& state);

}  // namespace vortexlab
