#include <cmath>
#include <cstdio>
#include <string_view>

#include "vortexlab/dynamics.hpp"
#include "vortexlab/rng.hpp"

#include "harness.hpp"

using namespace vortexlab;
constexpr double PI = std::numbers::pi;

int main() {
    // ---- vector_field closed forms (plane pair) ----
    {
        Geometry g = Geometry::plane();
        VortexState st{g, {pnt(0.5, 0.0), pnt(-0.5, 0.0)}, {1.0, 1.0}};
        auto v = vector_field(st, 0.0);
        // speed xi/(2 pi d) = 1/(2 pi), tangential, counterclockwise co-rotation
        CHECK(std::abs(v[0].y - 1.0 / (2 * PI)) < 1e-15, "v0y %.17g", v[0].y);
        CHECK(std::abs(v[0].x) < 1e-18 && std::abs(v[1].x) < 1e-18, "tangential");
        CHECK(std::abs(v[1].y + 1.0 / (2 * PI)) < 1e-15, "v1y %.17g", v[1].y);
        // regularization radius below the separation: identical bitwise
        auto ve = vector_field(st, 0.1);
        CHECK(v[0].x == ve[0].x && v[0].y == ve[0].y, "eps<r identical");
    }

    // ---- co-rotating pair: period T = 2 pi^2 (d=1, xi=1) ----
    {
        Geometry g = Geometry::plane();
        VortexState st{g, {pnt(0.5, 0.0), pnt(-0.5, 0.0)}, {1.0, 1.0}};
        FlowOptions o;
        Trajectory tr = integrate(st, 2.0 * PI * PI, o);
        CHECK(tr.status() == FlowStatus::Complete, "status");
        auto fin = tr.final_state();
        double err = 0;
        for (int i = 0; i < 2; ++i) err = std::max(err, norm(fin.positions[i] - st.positions[i]));
        CHECK(err < 1e-6, "period return err=%.3g", err);
        CHECK(std::abs(tr.running_min_distance() - 1.0) < 1e-9, "rmin %.12g",
              tr.running_min_distance());
        auto i0 = invariants(st), i1 = invariants(fin);
        CHECK(std::abs(i1.I - i0.I) < 1e-9, "I drift");
        CHECK(norm(i1.M - i0.M) < 1e-9, "M drift");
        CHECK(std::abs(hamiltonian(st)) < 1e-18, "H0");
        CHECK(std::abs(hamiltonian(fin)) < 1e-8, "Ht %.3g", hamiltonian(fin));
        // counterclockwise: quarter period -> first vortex rotates +90 deg
        Trajectory q = integrate(st, PI * PI / 2.0, o);
        auto mid = q.final_state();
        CHECK(std::abs(mid.positions[0].x) < 1e-6 && mid.positions[0].y > 0.49,
              "ccw quarter turn (%.6f, %.6f)", mid.positions[0].x, mid.positions[0].y);
    }

    // ---- dipole translation at speed 1/(2 pi d) ----
    {
        Geometry g = Geometry::plane();
        VortexState st{g, {pnt(0.0, 0.5), pnt(0.0, -0.5)}, {1.0, -1.0}};
        Trajectory tr = integrate(st, 1.0, {});
        auto fin = tr.final_state();
        CHECK(std::abs(fin.positions[0].x - 1.0 / (2 * PI)) < 1e-9, "dipole dx %.12g",
              fin.positions[0].x);
        CHECK(std::abs(fin.positions[0].y - 0.5) < 1e-10, "dipole dy");
        double sep = norm(fin.positions[0] - fin.positions[1]);
        CHECK(std::abs(sep - 1.0) < 1e-10, "separation");
    }

    // ---- t = 0 single node ----
    {
        Geometry g = Geometry::sphere();
        VortexState st{g, {pnt(0, 0, 1), pnt(1, 0, 0)}, {1.0, 2.0}};
        Trajectory tr = integrate(st, 0.0, {});
        CHECK(tr.nodes().size() == 1 && tr.t_end() == 0.0, "t0 single node");
        CHECK(tr.status() == FlowStatus::Complete, "t0 status");
    }

    // ---- disk single vortex: circular orbit from the boundary image ----
    {
        Geometry g = Geometry::unit_disk();
        VortexState st{g, {pnt(0.5, 0.0)}, {1.0}};
        auto v = vector_field(st, 0.0);
        CHECK(std::abs(v[0].y - 1.0 / (3 * PI)) < 1e-15, "disk self speed %.17g", v[0].y);
        CHECK(v[0].x == 0.0, "disk self dir");
        double omega = 1.0 / (2 * PI * 0.75);
        Trajectory tr = integrate(st, 2 * PI / omega, {});
        auto fin = tr.final_state();
        CHECK(norm(fin.positions[0] - st.positions[0]) < 1e-7, "disk orbit return %.3g",
              norm(fin.positions[0] - st.positions[0]));
        CHECK(std::abs(hamiltonian(fin) - hamiltonian(st)) < 1e-10, "disk H");
    }

    // ---- torus energy conservation + reversibility, N=4, t=10 ----
    {
        Geometry g = Geometry::torus();
        RngStream rng(2024, 7);
        VortexState st{g, {}, {}};
        for (int i = 0; i < 4; ++i) {
            st.positions.push_back(g.sample_uniform(rng));
            st.intensities.push_back(i % 2 ? 1.0 : -1.0);
        }
        while (st.min_pair_distance() < 0.5) {
            for (int i = 0; i < 4; ++i) st.positions[i] = g.sample_uniform(rng);
        }
        double H0 = hamiltonian(st);
        Trajectory tr = integrate(st, 10.0, {});
        CHECK(tr.status() == FlowStatus::Complete, "torus status");
        auto fin = tr.final_state();
        CHECK(std::abs(hamiltonian(fin) - H0) / (1 + std::abs(H0)) < 1e-7, "torus H drift %.3g",
              hamiltonian(fin) - H0);
        Trajectory back = integrate(fin, -10.0, {});
        auto rec = back.final_state();
        double err = 0;
        for (int i = 0; i < 4; ++i) {
            Vec2 d = TorusGreen::reduce(
                {rec.positions[i].x - st.positions[i].x, rec.positions[i].y - st.positions[i].y});
            err = std::max(err, norm(d));
        }
        CHECK(err < 1e-7, "torus reversibility %.3g", err);
        // dense output at a node time reproduces the node
        auto nd = tr.nodes()[tr.nodes().size() / 2];
        auto pp = tr.positions_at(nd.t);
        double derr = 0;
        for (int i = 0; i < 4; ++i) derr = std::max(derr, norm(pp[i] - nd.positions[i]));
        CHECK(derr < 1e-12, "dense node consistency %.3g", derr);
    }

    // ---- sphere: H, M conservation; unit-norm constraint ----
    {
        Geometry g = Geometry::sphere();
        RngStream rng(11, 3);
        VortexState st{g, {}, {}};
        for (int i = 0; i < 3; ++i) {
            st.positions.push_back(g.sample_uniform(rng));
            st.intensities.push_back(1.0 + 0.3 * i);
        }
        while (st.min_pair_distance() < 0.5)
            for (int i = 0; i < 3; ++i) st.positions[i] = g.sample_uniform(rng);
        double H0 = hamiltonian(st);
        auto I0 = invariants(st);
        Trajectory tr = integrate(st, 5.0, {});
        auto fin = tr.final_state();
        CHECK(std::abs(hamiltonian(fin) - H0) / (1 + std::abs(H0)) < 1e-7, "sphere H %.3g",
              hamiltonian(fin) - H0);
        auto I1 = invariants(fin);
        CHECK(norm(I1.M - I0.M) < 1e-7, "sphere M %.3g", norm(I1.M - I0.M));
        for (auto& p : fin.positions)
            CHECK(std::abs(norm(p) - 1.0) < 1e-9, "sphere constraint");
        CHECK(tr.sphere_residual() < 1e-9, "sphere residual %.3g", tr.sphere_residual());
    }

    // ---- variational flow: unit determinant, co-rotation Floquet structure ----
    {
        Geometry g = Geometry::torus();
        RngStream rng(5, 9);
        VortexState st{g, {}, {}};
        for (int i = 0; i < 4; ++i) {
            st.positions.push_back(g.sample_uniform(rng));
            st.intensities.push_back(i % 2 ? 0.8 : -1.1);
        }
        while (st.min_pair_distance() < 0.4)
            for (int i = 0; i < 4; ++i) st.positions[i] = g.sample_uniform(rng);
        FlowOptions o;
        o.epsilon = 0.05;
        DMat Y = variational_flow(st, 5.0, o);
        CHECK(std::abs(lu_det(Y) - 1.0) < 1e-6, "torus var det %.3g", lu_det(Y) - 1.0);

        Geometry pl = Geometry::plane();
        VortexState ps{pl, {pnt(0.5, 0), pnt(-0.5, 0)}, {1.0, 1.0}};
        DMat Yp = variational_flow(ps, 2.0 * PI * PI, {});
        CHECK(std::abs(lu_det(Yp) - 1.0) < 1e-6, "plane var det");
        // over one period the monodromy fixes the two rigid directions
        DMat D = Yp;
        for (int i = 0; i < D.n; ++i) D.at(i, i) -= 1.0;
        auto sv = singular_values(D);
        CHECK(sv[D.n - 1] < 1e-4 && sv[D.n - 2] < 1e-4, "Floquet sv %.3g %.3g", sv[D.n - 2],
              sv[D.n - 1]);
        DMat Y0 = variational_flow(ps, 0.0, {});
        double iderr = 0;
        for (int i = 0; i < Y0.n; ++i)
            for (int j = 0; j < Y0.n; ++j)
                iderr = std::max(iderr, std::abs(Y0.at(i, j) - (i == j ? 1.0 : 0.0)));
        CHECK(iderr == 0.0, "var t0 identity");
    }

    // ---- interaction sum and its flow derivative ----
    {
        Geometry g = Geometry::plane();
        VortexState st{g, {pnt(0.5, 0), pnt(-0.5, 0)}, {1.0, 1.0}};
        double eps = 0.1;
        CHECK(std::abs(lyapunov(st, eps) - 2.0 * g.green(st.positions[0], st.positions[1])) <
                  1e-15,
              "pair interaction sum");
        CHECK(lyapunov_rate(st, eps) == 0.0, "pair rate exact zero: %.3g",
              lyapunov_rate(st, eps));
    }
    for (std::string_view gid : {"torus", "plane", "sphere", "disk"}) {
        Geometry g = Geometry::from_id(gid);
        RngStream rng(77, 1);
        for (int rep = 0; rep < 3; ++rep) {
            VortexState st{g, {}, {}};
            for (int i = 0; i < 3; ++i) {
                Point p = g.kind() == Surface::Plane
                              ? pnt(2.0 * rng.u01() - 1.0, 2.0 * rng.u01() - 1.0)
                              : g.sample_uniform(rng);
                if (g.kind() == Surface::UnitDisk) p = 0.8 * p;  // keep off boundary
                st.positions.push_back(p);
                st.intensities.push_back(rng.u01() + 0.5);
            }
            if (st.min_pair_distance() < 0.2) continue;
            double eps = 0.15;
            double rate = lyapunov_rate(st, eps);
            FlowOptions o;
            o.epsilon = eps;
            double hh = 1e-6;
            double lp = lyapunov(integrate(st, hh, o).final_state(), eps);
            double lm = lyapunov(integrate(st, -hh, o).final_state(), eps);
            double fd = (lp - lm) / (2 * hh);
            double denom = std::max(1.0, std::abs(fd));
            CHECK(std::abs(rate - fd) / denom < 1e-5, "%s rate=%.10g fd=%.10g",
                  std::string(gid).c_str(), rate, fd);
        }
    }

    // ---- arrested flow ----
    {
        Geometry g = Geometry::torus();
        VortexState st{g, {pnt(1.0, 1.0), pnt(3.0, 3.0)}, {1.0, 1.0}};
        auto r = arrested_flow(st, 0.5, 0.01);
        CHECK(!r.arrested, "well-separated not arrested");
        Trajectory ref = integrate(st, 0.5, {});
        double err = 0;
        for (int i = 0; i < 2; ++i)
            err = std::max(err, norm(r.final.positions[i] - ref.final_state().positions[i]));
        CHECK(err < 1e-8, "arrested endpoint = true flow %.3g", err);
        auto fwd = arrested_flow(st, 0.5, 0.01);
        auto bwd = arrested_flow(fwd.final, -0.5, 0.01);
        CHECK(!bwd.arrested, "bwd not arrested");
        err = 0;
        for (int i = 0; i < 2; ++i)
            err = std::max(err, norm(bwd.final.positions[i] - st.positions[i]));
        CHECK(err < 1e-7, "composition %.3g", err);
        // starting below the threshold arrests at time zero, returning the input
        VortexState close{g, {pnt(1.0, 1.0), pnt(1.0 + 0.005, 1.0)}, {1.0, 1.0}};
        auto ra = arrested_flow(close, 1.0, 0.01);
        CHECK(ra.arrested, "immediate arrest");
        CHECK(ra.final.positions[0].x == close.positions[0].x, "arrest returns initial");
        CHECK(ra.trajectory.event_time().has_value() && *ra.trajectory.event_time() == 0.0,
              "event at 0");
    }

    // ---- event localization: dipole overtaking a weak bystander ----
    {
        Geometry g = Geometry::plane();
        VortexState st{g, {pnt(0, 0.5), pnt(0, -0.5), pnt(2.0, 0.35)}, {1.0, -1.0, 0.02}};
        FlowOptions o;
        o.min_distance_event = 0.72;
        Trajectory tr = integrate(st, 20.0, o);
        CHECK(tr.status() == FlowStatus::Event, "event fired status=%d", (int)tr.status());
        if (tr.status() == FlowStatus::Event) {
            double te = *tr.event_time();
            auto pos = tr.positions_at(te);
            double dmin = 1e9;
            for (int i = 0; i < 3; ++i)
                for (int j = i + 1; j < 3; ++j) dmin = std::min(dmin, norm(pos[i] - pos[j]));
            CHECK(std::abs(dmin - 0.72) < 1e-6, "event distance %.9g te=%.6f", dmin, te);
            CHECK(std::abs(tr.t_end() - te) < 1e-15, "trajectory ends at event");
            CHECK(tr.running_min_distance() >= 0.72 - 1e-9, "running min at event %.9g",
                  tr.running_min_distance());
        }
    }

    // ---- self-similar collapsing triple: intensities (2, 2, -1) ----
    {
        // sum of pairwise intensity products vanishes and the third vortex sits
        // on the circle of radius sqrt(3): the motion is self-similar, shrinking
        // in exactly one time direction. The integrator must stop with a
        // structured near-collapse there and complete in the other direction.
        Geometry g = Geometry::plane();
        VortexState st{g,
                       {pnt(-1.0, 0.0), pnt(1.0, 0.0), pnt(1.2, std::sqrt(3.0 - 1.44))},
                       {2.0, 2.0, -1.0}};
        int collapses = 0;
        for (double tf : {50.0, -50.0}) {
            Trajectory tr = integrate(st, tf, {});
            if (tr.status() == FlowStatus::NearCollapse) {
                ++collapses;
                CHECK(tr.running_min_distance() < 1e-3, "collapse rmin %.3e",
                      tr.running_min_distance());
                CHECK(std::abs(tr.t_end()) < 49.0, "collapse happens before horizon");
            } else {
                CHECK(tr.status() == FlowStatus::Complete, "expanding side completes");
            }
        }
        CHECK(collapses == 1, "exactly one collapsing direction, saw %d", collapses);
    }

    // ---- tiny dipole is still a regular (fast, translating) solution ----
    {
        Geometry g = Geometry::plane();
        VortexState tight{g, {pnt(0, 1e-7), pnt(0, -1e-7)}, {1.0, -1.0}};
        Trajectory tr = integrate(tight, 1.0, {});
        CHECK(tr.status() == FlowStatus::Complete, "tight dipole completes");
    }

    // ---- the regularized flow equals the true flow above the radius ----
    {
        Geometry g = Geometry::torus();
        RngStream rng(31, 4);
        VortexState st{g, {}, {}};
        for (int i = 0; i < 3; ++i) {
            st.positions.push_back(g.sample_uniform(rng));
            st.intensities.push_back(i == 0 ? 1.0 : -0.7);
        }
        while (st.min_pair_distance() < 1.0)
            for (int i = 0; i < 3; ++i) st.positions[i] = g.sample_uniform(rng);
        Trajectory t0 = integrate(st, 3.0, {});
        FlowOptions oe;
        oe.epsilon = 0.05;
        Trajectory te = integrate(st, 3.0, oe);
        if (t0.running_min_distance() > 0.05) {
            double err = 0;
            for (int i = 0; i < 3; ++i)
                err = std::max(
                    err, norm(t0.final_state().positions[i] - te.final_state().positions[i]));
            CHECK(err < 1e-8, "coincidence %.3g", err);
        }
    }

    return harness_done("dynamics");
}
