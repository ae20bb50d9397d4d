#include <cmath>
#include <cstdio>
#include <numbers>

#include "vortexlab/geometry.hpp"
#include "vortexlab/torus_green.hpp"

#include "harness.hpp"

using namespace vortexlab;
constexpr double PI = std::numbers::pi;

// Independent oracle for the torus Green function: resum the spectral series
// in one direction. For u = (u1, u2) with theta = |u2| reduced mod 2pi,
//   (2pi)^2 G(u) = pi^2/3 - pi theta + theta^2/2
//                  + sum_k (2 cos(k u1)) (pi/k) cosh-ratio(k, theta).
static double torus_oracle(double x1, double x2) {
    double th = std::fmod(std::fabs(x2), 2 * PI);
    int kmax = std::max(600, (int)std::ceil(45.0 / std::max(1e-12, std::min(th, 2 * PI - th))));
    double s = PI * PI / 3.0 - PI * th + 0.5 * th * th;
    for (int k = 1; k <= kmax; ++k) {
        double R = (PI / k) * (std::exp(-k * th) + std::exp(-k * (2 * PI - th))) /
                   (1.0 - std::exp(-2 * PI * k));
        s += 2.0 * std::cos(k * x1) * R;
    }
    return s / (4 * PI * PI);
}

int main() {
    // ---- pinned closed forms ----
    {
        Geometry pl = Geometry::plane();
        Vec2 k = pl.kernel(pnt(1, 0), pnt(0, 0));
        CHECK(k.x == 0.0, "plane kernel x %.17g", k.x);
        CHECK(std::fabs(k.y - 1.0 / (2 * PI)) < 1e-16, "plane kernel y %.17g", k.y);

        Geometry sp = Geometry::sphere();
        Vec3 ka = sp.kernel_ambient(pnt(0, 0, 1), pnt(1, 0, 0));
        CHECK(std::fabs(ka.x) < 1e-16 && std::fabs(ka.y - 1.0 / (4 * PI)) < 1e-16 &&
                  std::fabs(ka.z) < 1e-16,
              "sphere kernel (%g %g %g)", ka.x, ka.y, ka.z);
        // sphere green uses chordal distance with the zero-mean constant
        double c = (std::log(2.0) - 0.5) / (2 * PI);
        double g = sp.green(pnt(0, 0, 1), pnt(1, 0, 0));
        CHECK(std::fabs(g - (-std::log(std::sqrt(2.0)) / (2 * PI) + c)) < 1e-15,
              "sphere green %.17g", g);

        Geometry dk = Geometry::unit_disk();
        CHECK(std::fabs(dk.green(pnt(0, 0), pnt(0.5, 0)) - std::log(2.0) / (2 * PI)) < 1e-14,
              "disk green center");
        CHECK(std::fabs(dk.smooth_part(pnt(0.5, 0), pnt(0.5, 0)) - std::log(0.75) / (2 * PI)) <
                  1e-14,
              "disk image term at self");
        Vec2 rv = dk.routh_velocity(1.0, pnt(0.5, 0));
        CHECK(std::fabs(rv.x) < 1e-15 && std::fabs(rv.y - 0.5 / (0.75 * 2 * PI)) < 1e-15,
              "disk boundary-image self-advection (%g, %g)", rv.x, rv.y);

        // regularized green at zero separation: (3/4 - log eps) / (2 pi)
        double expect = (0.75 - std::log(0.1)) / (2 * PI);
        CHECK(std::fabs(pl.regularized_green(0.1, pnt(0, 0), pnt(0, 0)) - expect) < 1e-15,
              "plane regularized green at r=0: %.17g vs %.17g",
              pl.regularized_green(0.1, pnt(0, 0), pnt(0, 0)), expect);
    }

    // ---- torus table vs 1D-resummed oracle ----
    {
        auto tabp = TorusGreen::create(1024, 2.0);
        const TorusGreen& tab = *tabp;
        double worst = 0;
        for (double x1 : {0.3, 1.0, 2.2, 3.14, 5.9})
            for (double x2 : {0.4, 1.3, 2.8, 4.0, 5.5})
                worst = std::max(worst, std::fabs(tab.value({x1, x2}) - torus_oracle(x1, x2)));
        CHECK(worst < 1e-10, "torus table vs oracle: %.3e", worst);

        // gradient against a finite difference of the oracle
        double h = 1e-5;
        double gx = (torus_oracle(1.0 + h, 2.2) - torus_oracle(1.0 - h, 2.2)) / (2 * h);
        double gy = (torus_oracle(1.0, 2.2 + h) - torus_oracle(1.0, 2.2 - h)) / (2 * h);
        Vec2 g = tab.gradient({1.0, 2.2});
        CHECK(std::fabs(g.x - gx) < 1e-9 && std::fabs(g.y - gy) < 1e-9,
              "torus gradient vs fd (%g %g) vs (%g %g)", g.x, g.y, gx, gy);

        // hessian against a finite difference of the gradient
        Mat2 H = tab.hessian({1.0, 2.2});
        Vec2 gp = tab.gradient({1.0 + h, 2.2}), gm = tab.gradient({1.0 - h, 2.2});
        Vec2 gyp = tab.gradient({1.0, 2.2 + h}), gym = tab.gradient({1.0, 2.2 - h});
        CHECK(std::fabs(H.a11 - (gp.x - gm.x) / (2 * h)) < 1e-6 &&
                  std::fabs(H.a12 - (gyp.x - gym.x) / (2 * h)) < 1e-6 &&
                  std::fabs(H.a22 - (gyp.y - gym.y) / (2 * h)) < 1e-6,
              "torus hessian vs fd");

        // smooth/singular split is consistent down to tiny separations
        for (double r : {1e-6, 1e-4, 1e-2, 0.1}) {
            Vec2 u{r * 0.6, r * 0.8};
            double lhs = tab.value(u) + std::log(norm(u)) / (2 * PI);
            CHECK(std::fabs(lhs - tab.smooth_value(u)) < 1e-9, "split at r=%g: %.3e", r,
                  lhs - tab.smooth_value(u));
        }

        // g(0) against a Richardson extrapolation of the oracle along the diagonal
        auto gfun = [&](double t) {
            return torus_oracle(t, t) + std::log(t * std::sqrt(2.0)) / (2 * PI);
        };
        double g1 = gfun(0.1), g2 = gfun(0.05), g3 = gfun(0.025);
        double r1 = (4 * g2 - g1) / 3, r2 = (4 * g3 - g2) / 3, rr = (16 * r2 - r1) / 15;
        CHECK(std::fabs(tab.smooth_value({0, 0}) - rr) < 1e-9, "g(0): table %.14f oracle %.14f",
              tab.smooth_value({0, 0}), rr);
        Vec2 sg = tab.smooth_gradient({0, 0});
        CHECK(std::fabs(sg.x) < 1e-10 && std::fabs(sg.y) < 1e-10, "smooth gradient at 0");

        // same function from a different Ewald splitting parameter
        auto t1 = TorusGreen::create(512, 1.0);
        auto t2 = TorusGreen::create(512, 2.0);
        double cross = 0;
        for (double x1 : {0.3, 1.7, 4.4})
            for (double x2 : {0.8, 2.9, 5.2})
                cross = std::max(cross, std::fabs(t1->value({x1, x2}) - t2->value({x1, x2})));
        CHECK(cross < 1e-10, "cross-splitting: %.3e", cross);
    }

    // ---- generic invariants over random points, all surfaces ----
    {
        Geometry geoms[] = {Geometry::torus(), Geometry::sphere(), Geometry::unit_disk(),
                            Geometry::plane()};
        RngStream rng(7, 0);
        for (const Geometry& g : geoms) {
            int ortho_bad = 0, tail_bad = 0, sym_bad = 0;
            for (int i = 0; i < 1500; ++i) {
                Point a, b;
                if (g.kind() == Surface::Plane) {
                    a = pnt(rng.uniform(-2, 2), rng.uniform(-2, 2));
                    b = pnt(rng.uniform(-2, 2), rng.uniform(-2, 2));
                } else {
                    a = g.sample_uniform(rng);
                    b = g.sample_uniform(rng);
                }
                double d = g.distance(a, b);
                if (d < 1e-9) continue;
                if (d != g.distance(b, a)) ++sym_bad;
                if (std::fabs(g.green(a, b) - g.green(b, a)) >
                    1e-9 * (1 + std::fabs(g.green(a, b))))
                    ++sym_bad;
                for (double eps : {0.1, 0.01}) {
                    Vec2 gr = g.regularized_gradient(eps, a, b);
                    Vec2 kr = g.regularized_kernel(eps, a, b);
                    if (dot(gr, kr) != 0.0) ++ortho_bad;
                    if (d >= eps) {
                        Vec2 g0 = g.green_gradient(a, b), k0 = g.kernel(a, b);
                        if (gr.x != g0.x || gr.y != g0.y || kr.x != k0.x || kr.y != k0.y)
                            ++tail_bad;
                    }
                }
            }
            CHECK(ortho_bad == 0, "surface %d: %d orthogonality violations", (int)g.kind(),
                  ortho_bad);
            CHECK(tail_bad == 0, "surface %d: regularization active beyond radius %d times",
                  (int)g.kind(), tail_bad);
            CHECK(sym_bad == 0, "surface %d: %d symmetry violations", (int)g.kind(), sym_bad);
        }
    }

    // ---- regularization blend is C^1 across r = eps ----
    {
        Geometry pl = Geometry::plane();
        double eps = 0.1;
        Point o = pnt(0, 0);
        auto G = [&](double r) { return pl.regularized_green(eps, pnt(r, 0), o); };
        // straddle the edge so tightly that the smooth slope contributes ~1e-13
        double r0 = eps * (1 - 1e-12), r1 = eps * (1 + 1e-12);
        CHECK(std::fabs(G(r1) - G(r0)) < 1e-12, "value jump at blend edge: %.3e", G(r1) - G(r0));
        double h = 1e-7;
        double dlo = (G(eps - h) - G(eps - 3 * h)) / (2 * h);
        double dhi = (G(eps + 3 * h) - G(eps + h)) / (2 * h);
        CHECK(std::fabs(dhi - dlo) < 1e-4, "derivative jump at blend edge: %.3e", dhi - dlo);
    }

    // ---- torus wrap and periodicity ----
    {
        Geometry tor = Geometry::torus();
        Point p = tor.wrap(pnt(7.0, -1.0));
        CHECK(p.x >= 0 && p.x < 2 * PI && p.y >= 0 && p.y < 2 * PI, "wrap range");
        double d1 = tor.distance(pnt(0.2, 0.3), pnt(6.0, 6.1));
        double d2 = tor.distance(pnt(0.2 + 2 * PI, 0.3), pnt(6.0, 6.1 - 2 * PI));
        CHECK(std::fabs(d1 - d2) < 1e-12, "distance periodicity %.3e", d1 - d2);
    }

    return harness_done("geometry");
}
