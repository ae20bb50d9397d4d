#include <cmath>
#include <cstdio>
#include <numbers>

#include "vortexlab/dynamics.hpp"
#include "vortexlab/observables.hpp"
#include "vortexlab/rng.hpp"

using namespace vortexlab;
constexpr double PI = std::numbers::pi;

#include "harness.hpp"

static CylinderObservable simple_obs(double delta) {
    // bump(a*z0) * (z1 + conj(z0)) style observable over two trig couplings
    CylinderObservable obs;
    obs.inner.push_back(TestFunction::trig({{1, 0, {1.0, 0.0}}}));
    obs.inner.push_back(TestFunction::trig({{0, 1, {0.0, 0.5}}, {1, 1, {0.2, -0.1}}}));
    obs.outer = Outer::sum(
        {Outer::prod({Outer::bump(Outer::prod({Outer::constant({0.11, 0.03}), Outer::var(0)})),
                      Outer::var(1)}),
         Outer::conjugate(Outer::var(0))});
    obs.cutoff_delta = delta;
    return obs;
}

int main() {
    Geometry torus = Geometry::torus();

    // ---- eval: direct coupling, single vortex ----
    {
        CylinderObservable obs;
        obs.inner.push_back(TestFunction::trig({{2, -1, {1.0, 0.0}}}));
        obs.outer = Outer::var(0);
        VortexState st{torus, {pnt(1.3, 2.1)}, {2.0}};
        Complex v = eval(obs, st);
        Complex want = 2.0 * std::exp(Complex{0.0, 2.0 * 1.3 - 2.1});
        CHECK(std::abs(v - want) < 1e-15, "direct coupling %.3g", std::abs(v - want));
    }

    // ---- cutoff support: pair at delta/4 -> exact 0 ----
    {
        CylinderObservable obs = simple_obs(0.4);
        VortexState st{torus, {pnt(1.0, 1.0), pnt(1.0 + 0.1, 1.0)}, {1.0, -1.0}};
        CHECK(eval(obs, st) == Complex{0.0}, "cutoff exact zero");
        CHECK(liouville_apply(obs, st) == Complex{0.0}, "cutoff exact zero L");
        auto g = observable_gradient(obs, st);
        CHECK(std::abs(g[0][0]) == 0.0 && std::abs(g[1][1]) == 0.0, "cutoff zero grad");
    }

    // ---- permutation invariance ----
    {
        CylinderObservable obs = simple_obs(0.3);
        VortexState a{torus, {pnt(1, 1), pnt(3, 2), pnt(5, 4)}, {1.0, -0.7, 0.4}};
        VortexState b{torus, {pnt(5, 4), pnt(1, 1), pnt(3, 2)}, {0.4, 1.0, -0.7}};
        CHECK(std::abs(eval(obs, a) - eval(obs, b)) < 1e-15, "permutation");
    }

    // ---- Wirtinger partials of the outer tree vs finite differences ----
    {
        CylinderObservable obs = simple_obs(0.0);
        std::vector<Complex> z{{0.7, -0.4}, {0.3, 1.1}};
        auto ev = obs.outer.eval(z);
        const double h = 1e-7;
        for (int k = 0; k < 2; ++k) {
            auto zp = z, zm = z;
            zp[k] += h;
            zm[k] -= h;
            Complex da = (obs.outer.value(zp) - obs.outer.value(zm)) / (2 * h);
            zp = z;
            zm = z;
            zp[k] += Complex{0, h};
            zm[k] -= Complex{0, h};
            Complex db = (obs.outer.value(zp) - obs.outer.value(zm)) / (2 * h);
            Complex want_a = ev.dz[k] + ev.dzb[k];
            Complex want_b = Complex{0, 1} * (ev.dz[k] - ev.dzb[k]);
            CHECK(std::abs(da - want_a) < 1e-6, "wirtinger re k=%d %.3g", k,
                  std::abs(da - want_a));
            CHECK(std::abs(db - want_b) < 1e-6, "wirtinger im k=%d %.3g", k,
                  std::abs(db - want_b));
        }
    }

    // ---- liouville vs flow finite difference, torus N=3, delta=0.2 ----
    {
        RngStream rng(41, 2);
        CylinderObservable obs = simple_obs(0.2);
        int tested = 0;
        while (tested < 5) {
            VortexState st{torus, {}, {}};
            for (int i = 0; i < 3; ++i) {
                st.positions.push_back(torus.sample_uniform(rng));
                st.intensities.push_back(2.0 * rng.u01() - 0.5);
            }
            if (st.min_pair_distance() < 0.25) continue;
            ++tested;
            Complex L = liouville_apply(obs, st);
            const double h = 1e-6;
            Complex fp = eval(obs, integrate(st, h, {}).final_state());
            Complex fm = eval(obs, integrate(st, -h, {}).final_state());
            Complex fd = (fp - fm) / (2 * h);  // = d/dt f = i L f
            Complex want = Complex{0, 1} * L;
            double denom = std::max(1.0, std::abs(fd));
            CHECK(std::abs(fd - want) / denom < 1e-6, "liouville fd %.3g (|L|=%.3g)",
                  std::abs(fd - want) / denom, std::abs(L));
        }
    }

    // ---- liouville trivials ----
    {
        CylinderObservable cst;
        cst.outer = Outer::constant({2.5, 1.0});
        VortexState st{torus, {pnt(1, 1), pnt(3, 3)}, {1.0, 1.0}};
        CHECK(std::abs(liouville_apply(cst, st)) == 0.0, "constant obs");
        CylinderObservable obs = simple_obs(0.0);
        VortexState one{torus, {pnt(1, 2)}, {1.5}};
        CHECK(std::abs(liouville_apply(obs, one)) == 0.0, "N=1");
    }

    // ---- koopman: t=0, periodicity, group law ----
    {
        Geometry plane = Geometry::plane();
        CylinderObservable obs;
        obs.inner.push_back(TestFunction::poly({{2, 0, 0, {1.0, 0}}, {0, 2, 0, {1.0, 0}}}));
        obs.inner.push_back(TestFunction::poly({{1, 1, 0, {0.5, 0.2}}}));
        obs.outer = Outer::sum({Outer::var(0), Outer::prod({Outer::var(1), Outer::var(1)})});
        VortexState st{plane, {pnt(0.5, 0), pnt(-0.5, 0)}, {1.0, 1.0}};
        CHECK(std::abs(koopman_apply(obs, st, 0.0) - eval(obs, st)) == 0.0, "koopman t0");
        Complex per = koopman_apply(obs, st, 2 * PI * PI);
        CHECK(std::abs(per - eval(obs, st)) < 1e-6, "koopman period %.3g",
              std::abs(per - eval(obs, st)));
        // group law on torus
        RngStream rng(4, 4);
        VortexState ts{torus, {}, {}};
        for (int i = 0; i < 3; ++i) {
            ts.positions.push_back(torus.sample_uniform(rng));
            ts.intensities.push_back(i == 2 ? -1.0 : 1.0);
        }
        while (ts.min_pair_distance() < 0.8)
            for (int i = 0; i < 3; ++i) ts.positions[i] = torus.sample_uniform(rng);
        CylinderObservable tobs = simple_obs(0.05);
        Complex whole = koopman_apply(tobs, ts, 1.7);
        VortexState mid = integrate(ts, 0.9, {}).final_state();
        Complex split = koopman_apply(tobs, mid, 0.8);
        CHECK(std::abs(whole - split) < 1e-7, "group law %.3g", std::abs(whole - split));
    }

    // ---- arrested koopman ----
    {
        CylinderObservable obs = simple_obs(0.0);
        VortexState near{torus, {pnt(1, 1), pnt(1.004, 1)}, {1.0, 1.0}};
        Complex a = arrested_koopman_apply(obs, near, 1.0, 0.01);
        CHECK(std::abs(a - eval(obs, near)) == 0.0, "arrested identity");
        VortexState far{torus, {pnt(1, 1), pnt(4, 3)}, {1.0, 1.0}};
        Complex v = arrested_koopman_apply(obs, far, 1.0, 0.01);
        Complex u = koopman_apply(obs, far, 1.0);
        CHECK(std::abs(v - u) < 1e-10, "non-arrested equals koopman %.3g", std::abs(v - u));
    }

    // ---- symmetrized kernel ----
    {
        TestFunction phi = TestFunction::trig({{1, 2, {0.7, 0.1}}, {-1, 1, {0.0, 0.4}}});
        Point x = pnt(1.2, 0.7), y = pnt(4.0, 3.3);
        Complex hxy = symmetrized_kernel(torus, phi, x, y);
        Complex hyx = symmetrized_kernel(torus, phi, y, x);
        CHECK(hxy == hyx, "bitwise symmetry");
        CHECK(symmetrized_kernel(torus, phi, x, x) == Complex{0.0}, "diagonal zero");
        Geometry plane = Geometry::plane();
        TestFunction lin = TestFunction::poly({{1, 0, 0, {2.0, 0}}, {0, 1, 0, {0.0, 3.0}}});
        Complex hv = symmetrized_kernel(plane, lin, pnt(0.3, 0.4), pnt(-1.0, 0.2));
        CHECK(std::abs(hv) == 0.0, "linear phi -> 0");
        // sphere kernel symmetry too
        Geometry sph = Geometry::sphere();
        TestFunction q = TestFunction::poly({{2, 0, 0, {1.0, 0}}, {0, 1, 1, {0.5, 0}}});
        Point sx = pnt(0, 0, 1), sy = pnt(std::sqrt(0.5), 0, std::sqrt(0.5));
        CHECK(symmetrized_kernel(sph, q, sx, sy) == symmetrized_kernel(sph, q, sy, sx),
              "sphere swap");
    }

    // ---- weak form residual ----
    {
        Geometry plane = Geometry::plane();
        VortexState st{plane, {pnt(0.5, 0), pnt(-0.5, 0)}, {1.0, 1.0}};
        TestFunction quad = TestFunction::poly({{2, 0, 0, {1.0, 0}}, {1, 1, 0, {0.3, 0}}});
        Trajectory t0 = integrate(st, 0.0, {});
        CHECK(weak_form_residual(t0, quad) == 0.0, "weak form t0");
        Trajectory tr = integrate(st, 1.0, {});
        double r = weak_form_residual(tr, quad);
        CHECK(r < 1e-6, "weak form co-rotation %.3g", r);

        RngStream rng(6, 6);
        VortexState ts{torus, {}, {}};
        for (int i = 0; i < 4; ++i) {
            ts.positions.push_back(torus.sample_uniform(rng));
            ts.intensities.push_back(i % 2 ? 1.3 : -0.8);
        }
        while (ts.min_pair_distance() < 0.7)
            for (int i = 0; i < 4; ++i) ts.positions[i] = torus.sample_uniform(rng);
        Trajectory tt = integrate(ts, 2.0, {});
        TestFunction tphi = TestFunction::trig({{1, 0, {0.5, 0}}, {-1, 0, {0.5, 0}},
                                                {2, 1, {0.0, -0.25}}, {-2, -1, {0.0, 0.25}}});
        double rt = weak_form_residual(tt, tphi, 1e-8);
        CHECK(rt < 1e-5, "weak form torus %.3g", rt);
    }

    // ---- config generator ----
    {
        CylinderObservable cst;
        cst.outer = Outer::constant({1.0, -2.0});
        VortexState st{torus, {pnt(1, 1), pnt(3, 3)}, {1.0, 1.0}};
        CHECK(std::abs(config_generator_apply(cst, st)) == 0.0, "gen constant");
        CylinderObservable obs = simple_obs(0.0);
        VortexState one{torus, {pnt(2, 2)}, {1.0}};
        CHECK(std::abs(config_generator_apply(obs, one)) == 0.0, "gen N=1");

        RngStream rng(9, 1);
        for (int rep = 0; rep < 5; ++rep) {
            VortexState ts{torus, {}, {}};
            for (int i = 0; i < 3; ++i) {
                ts.positions.push_back(torus.sample_uniform(rng));
                ts.intensities.push_back(rng.u01() + 0.2);
            }
            if (ts.min_pair_distance() < 0.3) continue;
            Complex a = config_generator_apply(obs, ts);
            Complex b = liouville_apply(obs, ts);
            CHECK(std::abs(a - b) < 1e-10, "generator agreement %.3g", std::abs(a - b));
        }
        // also sphere
        Geometry sph = Geometry::sphere();
        CylinderObservable sobs;
        sobs.inner.push_back(TestFunction::poly({{1, 0, 0, {1.0, 0}}, {0, 2, 0, {0.0, 0.7}}}));
        sobs.outer = Outer::prod({Outer::var(0), Outer::conjugate(Outer::var(0))});
        VortexState ss{sph, {pnt(0, 0, 1), pnt(1, 0, 0), pnt(0, -1, 0)}, {1.0, 0.5, -0.3}};
        Complex sa = config_generator_apply(sobs, ss);
        Complex sb = liouville_apply(sobs, ss);
        CHECK(std::abs(sa - sb) < 1e-10, "sphere generator agreement %.3g", std::abs(sa - sb));
    }

    return harness_done("observables");
}
