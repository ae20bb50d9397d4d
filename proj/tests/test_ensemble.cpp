#include <cmath>
#include <cstdio>
#include <numbers>

#include "vortexlab/ensemble.hpp"
#include "vortexlab/stats.hpp"

using namespace vortexlab;
constexpr double PI = std::numbers::pi;

#include "harness.hpp"

// independent lattice-sum evaluation of the per-mode pair-kernel integral
static double mode_oracle(int k1, int k2, int m_max) {
    double acc = 0.0;
    for (int m1 = -m_max; m1 <= m_max; ++m1) {
        for (int m2 = -m_max; m2 <= m_max; ++m2) {
            if (m1 == 0 && m2 == 0) continue;
            if (m1 == -k1 && m2 == -k2) continue;
            const double wedge = k1 * m2 - k2 * m1;
            const double q1 = 1.0 / (double(m1) * m1 + double(m2) * m2);
            const double p1 = double(m1) + k1, p2 = double(m2) + k2;
            const double q2 = 1.0 / (p1 * p1 + p2 * p2);
            const double d = q1 - q2;
            acc += wedge * wedge * d * d;
        }
    }
    const double pi4 = std::pow(2.0 * PI, 4);
    return acc / pi4;
}

int main() {
    Geometry torus = Geometry::torus();

    // ---- intensity moments ----
    CHECK(IntensityDist::two_point(1, -1).second_moment() == 1.0, "m2 two-point");
    CHECK(std::fabs(IntensityDist::uniform_on(-1, 1).second_moment() - 1.0 / 3) < 1e-15,
          "m2 uniform");
    CHECK(IntensityDist::gaussian(0.5, 2.0).second_moment() == 4.25, "m2 gaussian");

    // ---- determinism across thread counts ----
    {
        MeasureSpec spec = MeasureSpec::uniform(torus, {1.0, -1.0, 0.5});
        auto a = sample_ensemble(spec, 64, 7, 1);
        auto b = sample_ensemble(spec, 64, 7, 4);
        bool same = true;
        for (int i = 0; i < 64; ++i)
            for (int v = 0; v < 3; ++v)
                same = same && a[i].positions[v].x == b[i].positions[v].x &&
                       a[i].positions[v].y == b[i].positions[v].y;
        CHECK(same, "thread determinism");
    }

    // ---- uniform marginals ----
    {
        MeasureSpec spec = MeasureSpec::uniform(torus, {1.0, -1.0, 1.0});
        const int n = 10000;
        std::vector<double> xs, ys;
        for (int i = 0; i < n; ++i) {
            VortexState st = sample(spec, 11, i);
            for (int v = 0; v < 3; ++v) {
                xs.push_back(st.positions[v].x / (2 * PI));
                ys.push_back(st.positions[v].y / (2 * PI));
            }
        }
        const double kx = ks_statistic_uniform(xs), ky = ks_statistic_uniform(ys);
        const double crit = ks_critical_1pct / std::sqrt(3.0 * n);
        CHECK(kx < crit && ky < crit, "uniform ks %.4g %.4g crit %.4g", kx, ky, crit);
    }

    // ---- gibbs beta=0 matches uniform (two-sample KS on H) ----
    {
        MeasureSpec gspec = MeasureSpec::gibbs(torus, {1.0, -1.0, 1.0}, 0.0);
        MeasureSpec uspec = MeasureSpec::uniform(torus, {1.0, -1.0, 1.0});
        const int n = 1500;
        GibbsSampler chain(gspec, 5);
        std::vector<double> hg, hu;
        for (int i = 0; i < n; ++i) hg.push_back(hamiltonian(chain.next()));
        for (int i = 0; i < n; ++i) hu.push_back(hamiltonian(sample(uspec, 6, i)));
        const double ks = ks_statistic_two_sample(hg, hu);
        CHECK(ks_pass_two_sample(ks, n, n), "gibbs beta=0 ks %.4g", ks);
        // beta = 0 accepts every in-domain proposal by construction
        CHECK(chain.acceptance() == 1.0, "acceptance %.3g", chain.acceptance());
    }

    // ---- poisson layer ----
    {
        MeasureSpec spec =
            MeasureSpec::poisson_config(torus, 2.0, IntensityDist::two_point(1, -1));
        const int n = 10000;
        RunningStat counts;
        int n2 = 0;
        std::vector<double> cond_x;
        RunningStat cond_xi;
        for (int i = 0; i < n; ++i) {
            VortexState st = sample(spec, 21, i);
            counts.add(st.n());
            if (st.n() == 2) {
                ++n2;
                for (int v = 0; v < 2; ++v) {
                    cond_x.push_back(st.positions[v].x / (2 * PI));
                    cond_xi.add(st.intensities[v]);
                }
            }
        }
        CHECK(std::fabs(counts.mean() - 2.0) < 3.0 * counts.stderr_mean(),
              "poisson mean %.4g +- %.4g", counts.mean(), counts.stderr_mean());
        const double ks = ks_statistic_uniform(cond_x);
        CHECK(ks_pass_uniform(ks, cond_x.size()), "conditioned positions ks %.4g", ks);
        CHECK(std::fabs(cond_xi.mean()) < 3.0 * cond_xi.stderr_mean() + 1e-12,
              "conditioned intensities mean %.4g", cond_xi.mean());
    }

    // ---- gaussian plane ----
    {
        MeasureSpec spec = MeasureSpec::gaussian_plane({1.0, 2.0}, 0.5, {1.0, -2.0});
        // x_i ~ N(-eta/(2 alpha), 1/(2 alpha xi_i) I)
        const int n = 20000;
        RunningStat x0, y0, x1;
        RunningStat v0;
        for (int i = 0; i < n; ++i) {
            VortexState st = sample(spec, 33, i);
            x0.add(st.positions[0].x);
            y0.add(st.positions[0].y);
            x1.add(st.positions[1].x);
            const double dx = st.positions[0].x + 1.0;
            v0.add(dx * dx);
        }
        CHECK(std::fabs(x0.mean() + 1.0) < 4 * x0.stderr_mean(), "gp mean x0 %.4g", x0.mean());
        CHECK(std::fabs(y0.mean() - 2.0) < 4 * y0.stderr_mean(), "gp mean y0 %.4g", y0.mean());
        CHECK(std::fabs(x1.mean() + 1.0) < 4 * x1.stderr_mean(), "gp mean x1 %.4g", x1.mean());
        CHECK(std::fabs(v0.mean() - 1.0) < 4 * v0.stderr_mean(), "gp var x0 %.4g", v0.mean());
        bool threw = false;
        try {
            MeasureSpec bad = MeasureSpec::gaussian_plane({1.0, -1.0}, 0.5, {0, 0});
            sample(bad, 1);
        } catch (const config_error&) {
            threw = true;
        }
        CHECK(threw, "negative xi rejected");
    }

    // ---- collision tail trivials ----
    {
        MeasureSpec spec = MeasureSpec::uniform(torus, {1.0, -1.0, 1.0, -1.0});
        CollisionStats big =
            collision_tail_experiment(spec, 0.5, 1e-4, {torus.diameter()}, 60, 3);
        CHECK(big.counts[0] == 60, "diameter threshold count %ld", big.counts[0]);
        MeasureSpec one = MeasureSpec::uniform(torus, {1.0});
        CollisionStats empty = collision_tail_experiment(one, 0.5, 1e-4, {0.5, 0.1}, 40, 3);
        CHECK(empty.counts[0] == 0 && empty.counts[1] == 0, "single vortex counts");
        CollisionStats tail =
            collision_tail_experiment(spec, 1.0, 1e-4, {1e-1, 1e-2}, 400, 9);
        CHECK(tail.counts[1] <= tail.counts[0], "monotone counts");
        CHECK(tail.fitted_a >= 0.0, "fit sign %.4g", tail.fitted_a);
    }

    // ---- measure preservation: t=0 and a short push ----
    {
        MeasureSpec spec = MeasureSpec::uniform(torus, {1.0, -1.0, 1.0});
        PreservationReport r0 = measure_preservation_test(spec, 0.0, 0.05, 1000, 17, false);
        CHECK(r0.pass, "preservation t=0 (max ks %.4g crit %.4g)", r0.max_ks, r0.ks_critical);
        PreservationReport r1 = measure_preservation_test(spec, 0.5, 0.05, 2000, 17, false);
        CHECK(r1.pass, "preservation t=0.5 (max ks %.4g crit %.4g)", r1.max_ks, r1.ks_critical);
        PreservationReport r2 = measure_preservation_test(spec, 0.5, 0.05, 2000, 17, true);
        CHECK(r2.pass, "preservation arrested (max ks %.4g)", r2.max_ks);
    }

    // ---- inner products ----
    {
        MeasureSpec spec = MeasureSpec::uniform(torus, {1.0});
        CylinderObservable unit;
        unit.outer = Outer::constant({1.0, 0.0});
        McEstimate one = inner_product_mc(unit, unit, spec, 1500, 23);
        CHECK(one.estimate == Complex{1.0} && one.std_error == 0.0, "<1,1>");
        CylinderObservable ek, ekp;
        ek.inner.push_back(TestFunction::trig({{1, 2, {1.0, 0.0}}}));
        ek.outer = Outer::var(0);
        ekp.inner.push_back(TestFunction::trig({{2, -1, {1.0, 0.0}}}));
        ekp.outer = Outer::var(0);
        McEstimate same = inner_product_mc(ek, ek, spec, 1500, 23);
        CHECK(std::abs(same.estimate - Complex{1.0}) < 3 * same.std_error + 1e-12,
              "<ek,ek> %.4g", std::abs(same.estimate - Complex{1.0}));
        McEstimate diff = inner_product_mc(ek, ekp, spec, 1500, 23);
        CHECK(std::abs(diff.estimate) < 3 * diff.std_error + 1e-12, "<ek,ek'> %.4g",
              std::abs(diff.estimate));
    }

    // ---- pair-kernel norm vs lattice sum ----
    {
        for (auto [k1, k2] : {std::pair{1, 0}, std::pair{2, 1}}) {
            TestFunction phi = TestFunction::trig({{k1, k2, {1.0, 0.0}}});
            double rel = 0.0;
            const double quad = hphi_norm_squared(torus, phi, &rel);
            const double oracle = 0.25 * mode_oracle(k1, k2, 4000);
            CHECK(std::fabs(quad - oracle) / oracle < 1e-6,
                  "mode (%d,%d): quad %.10g oracle %.10g rel %.3g", k1, k2, quad, oracle,
                  std::fabs(quad - oracle) / oracle);
            CHECK(rel < 1e-6, "quad rel err estimate %.3g", rel);
        }
    }

    // ---- variance identity ----
    {
        TestFunction phi =
            TestFunction::trig({{1, 1, {0.5, 0.0}}, {-1, -1, {0.5, 0.0}}});  // cos(x+y)
        VarianceIdentityResult r =
            variance_identity_check(5, IntensityDist::two_point(1, -1), phi, 20000, 29);
        CHECK(std::fabs(r.mc - r.closed_form) <= 3.0 * r.sigma,
              "variance identity mc %.6g closed %.6g sigma %.3g", r.mc, r.closed_form, r.sigma);
        VarianceIdentityResult r1 =
            variance_identity_check(1, IntensityDist::two_point(1, -1), phi, 1000, 29);
        CHECK(r1.mc == 0.0 && r1.closed_form == 0.0, "variance identity N=1");
        TestFunction zero = TestFunction::trig({{0, 0, {3.0, 0.0}}});
        VarianceIdentityResult rz =
            variance_identity_check(4, IntensityDist::two_point(1, -1), zero, 1000, 29);
        CHECK(rz.mc == 0.0 && rz.closed_form == 0.0, "variance identity zero mode");
    }

    // ---- vepsilon convergence ----
    {
        MeasureSpec spec = MeasureSpec::uniform(torus, {1.0, -1.0, 1.0});
        RngStream org(91, 12345);
        CylinderObservable obs = random_cylinder_observable(org);
        VepsilonReport rep =
            vepsilon_convergence_experiment(spec, obs, 0.5, {0.5, 0.3, 0.15, 0.08}, 600, 41);
        CHECK(rep.monotone, "vepsilon monotone");
        CHECK(rep.rows.size() == 4, "rows");
        for (std::size_t i = 1; i < rep.rows.size(); ++i)
            CHECK(rep.rows[i].arrested <= rep.rows[i - 1].arrested, "nested arrested sets");
        VepsilonReport all =
            vepsilon_convergence_experiment(spec, obs, 0.5, {10.0}, 200, 41);
        CHECK(all.rows[0].arrested == 200, "eps > diameter arrests everything (%ld)",
              all.rows[0].arrested);
    }

    // ---- koopman check ----
    {
        MeasureSpec spec = MeasureSpec::uniform(torus, {1.0, -1.0, 1.0});
        KoopmanReport rep = koopman_check(spec, 0.4, 2, 2000, 57);
        CHECK(rep.pass, "koopman check pass (unitarity %d, %.3g vs 3x%.3g)",
              int(rep.unitarity_pass), std::fabs(rep.norm_utf2 - rep.norm_f2),
              rep.unitarity_std_error);
    }

    // ---- gibbs invariance ----
    {
        MeasureSpec spec = MeasureSpec::gibbs(torus, {1.0, 1.0, 1.0}, -2.0);
        GibbsInvarianceReport rep = gibbs_invariance_test(spec, 1.0, 0.05, 1200, 63);
        CHECK(rep.pass, "gibbs invariance ks %.4g crit %.4g", rep.ks_stat, rep.ks_critical);
        CHECK(rep.warnings.empty(), "gibbs warnings: %s",
              rep.warnings.empty() ? "" : rep.warnings[0].c_str());
    }

    return harness_done("ensemble");
}
