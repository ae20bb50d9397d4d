#include "vortexlab/observables.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace vortexlab {

namespace {

constexpr Complex kI{0.0, 1.0};

double binom(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// theta(u) = exp(-1/u) for u > 0, extended by 0: the standard C^infinity germ
double theta(double u) { return u > 0.0 ? std::exp(-1.0 / u) : 0.0; }
double theta_d(double u) { return u > 0.0 ? std::exp(-1.0 / u) / (u * u) : 0.0; }

Vec3 distance_gradient(const Geometry& geom, Point x, Point y, double d) {
    if (geom.kind() == Surface::Sphere) return (1.0 / d) * (x - y);
    Vec2 u{x.x - y.x, x.y - y.y};
    if (geom.kind() == Surface::Torus) u = TorusGreen::reduce(u);
    return {u.x / d, u.y / d, 0.0};
}

Complex cdot(const CVec3& a, Vec3 b) { return a[0] * b.x + a[1] * b.y + a[2] * b.z; }

struct CutoffEval {
    bool zero = false;
    double value = 1.0;
    std::vector<double> eta_v, eta_d, dist;  // per pair (i<j), flattened
};

CutoffEval cutoff_eval(const CylinderObservable& obs, const VortexState& st, bool with_grad) {
    CutoffEval ce;
    const int n = st.n();
    if (obs.cutoff_delta <= 0.0 || n < 2) return ce;
    const int npairs = n * (n - 1) / 2;
    ce.eta_v.resize(npairs);
    ce.eta_d.resize(npairs);
    ce.dist.resize(npairs);
    int p = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j, ++p) {
            const double d = st.geometry.distance(st.positions[i], st.positions[j]);
            const StepEval se = cutoff_step(d / obs.cutoff_delta, obs.cutoff_order);
            ce.dist[p] = d;
            ce.eta_v[p] = se.v;
            ce.eta_d[p] = se.d;
            ce.value *= se.v;
            if (se.v == 0.0 && !with_grad) {
                ce.zero = true;
                ce.value = 0.0;
                return ce;
            }
        }
    if (ce.value == 0.0) ce.zero = true;
    return ce;
}

}  // namespace

StepEval cutoff_step(double s, int order) {
    if (s <= 0.5) return {0.0, 0.0};
    if (s >= 1.0) return {1.0, 0.0};
    if (order < 0) {
        const double a = theta(s - 0.5), b = theta(1.0 - s);
        const double ad = theta_d(s - 0.5), bd = theta_d(1.0 - s);
        const double den = a + b;
        return {a / den, (ad * b + a * bd) / (den * den)};
    }
    // C^order polynomial step (generalized smoothstep), remapped to [1/2, 1]
    const int m = order;
    const double u = (s - 0.5) * 2.0;
    double v = 0.0, dv = 0.0;
    for (int k = 0; k <= m; ++k) {
        const double c = binom(m + k, k) * binom(2 * m + 1, m - k) * (k % 2 ? -1.0 : 1.0);
        v += c * std::pow(u, m + k + 1);
        dv += c * (m + k + 1) * std::pow(u, m + k);
    }
    return {v, 2.0 * dv};
}

// ---------------- TestFunction ----------------

TestFunction TestFunction::trig(std::vector<TrigTerm> terms) {
    TestFunction f;
    f.is_trig_ = true;
    f.trig_ = std::move(terms);
    return f;
}

TestFunction TestFunction::poly(std::vector<PolyTerm> terms) {
    TestFunction f;
    f.is_trig_ = false;
    f.poly_ = std::move(terms);
    return f;
}

TestFunction TestFunction::trig_cos(int k1, int k2) {
    return trig({{k1, k2, {0.5, 0.0}}, {-k1, -k2, {0.5, 0.0}}});
}

TestFunction TestFunction::trig_sin(int k1, int k2) {
    return trig({{k1, k2, {0.0, -0.5}}, {-k1, -k2, {0.0, 0.5}}});
}

TestFunction TestFunction::coordinate(int axis) {
    return poly({{axis == 0 ? 1 : 0, axis == 1 ? 1 : 0, axis == 2 ? 1 : 0, {1.0, 0.0}}});
}

Complex TestFunction::value(Point x) const {
    Complex v = 0.0;
    if (is_trig_) {
        for (const auto& t : trig_) {
            const double ph = t.k1 * x.x + t.k2 * x.y;
            v += t.c * Complex{std::cos(ph), std::sin(ph)};
        }
    } else {
        for (const auto& t : poly_)
            v += t.c * std::pow(x.x, t.px) * std::pow(x.y, t.py) * std::pow(x.z, t.pz);
    }
    return v;
}

CVec3 TestFunction::gradient(Point x) const {
    CVec3 g{Complex{0.0}, Complex{0.0}, Complex{0.0}};
    if (is_trig_) {
        for (const auto& t : trig_) {
            const double ph = t.k1 * x.x + t.k2 * x.y;
            const Complex e = t.c * Complex{std::cos(ph), std::sin(ph)} * kI;
            g[0] += e * static_cast<double>(t.k1);
            g[1] += e * static_cast<double>(t.k2);
        }
    } else {
        for (const auto& t : poly_) {
            const double xp = std::pow(x.x, t.px), yp = std::pow(x.y, t.py),
                         zp = std::pow(x.z, t.pz);
            if (t.px > 0) g[0] += t.c * (t.px * std::pow(x.x, t.px - 1) * yp * zp);
            if (t.py > 0) g[1] += t.c * (t.py * xp * std::pow(x.y, t.py - 1) * zp);
            if (t.pz > 0) g[2] += t.c * (t.pz * xp * yp * std::pow(x.z, t.pz - 1));
        }
    }
    return g;
}

// ---------------- Outer ----------------

struct Outer::Node {
    Op op;
    int index = 0;
    Complex c{};
    std::vector<Outer> kids;
};

Outer::Outer() : Outer(constant(0.0)) {}
Outer::Outer(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

Outer Outer::var(int index) {
    auto n = std::make_shared<Node>();
    n->op = Op::Var;
    n->index = index;
    return Outer(std::move(n));
}

Outer Outer::constant(Complex c) {
    auto n = std::make_shared<Node>();
    n->op = Op::Const;
    n->c = c;
    return Outer(std::move(n));
}

Outer Outer::sum(std::vector<Outer> parts) {
    auto n = std::make_shared<Node>();
    n->op = Op::Sum;
    n->kids = std::move(parts);
    return Outer(std::move(n));
}

Outer Outer::prod(std::vector<Outer> parts) {
    auto n = std::make_shared<Node>();
    n->op = Op::Prod;
    n->kids = std::move(parts);
    return Outer(std::move(n));
}

Outer Outer::conjugate(Outer inner) {
    auto n = std::make_shared<Node>();
    n->op = Op::Conj;
    n->kids.push_back(std::move(inner));
    return Outer(std::move(n));
}

Outer Outer::bump(Outer inner) {
    auto n = std::make_shared<Node>();
    n->op = Op::Bump;
    n->kids.push_back(std::move(inner));
    return Outer(std::move(n));
}

int Outer::num_vars() const {
    int nv = 0;
    if (node_->op == Op::Var) nv = node_->index + 1;
    for (const Outer& k : node_->kids) nv = std::max(nv, k.num_vars());
    return nv;
}

Complex Outer::value(const std::vector<Complex>& z) const {
    const Node& nd = *node_;
    switch (nd.op) {
        case Op::Var:
            if (nd.index >= static_cast<int>(z.size()))
                throw config_error("outer variable index exceeds the coupling count");
            return z[nd.index];
        case Op::Const:
            return nd.c;
        case Op::Sum: {
            Complex v = 0.0;
            for (const Outer& k : nd.kids) v += k.value(z);
            return v;
        }
        case Op::Prod: {
            Complex v = 1.0;
            for (const Outer& k : nd.kids) v *= k.value(z);
            return v;
        }
        case Op::Conj:
            return std::conj(nd.kids[0].value(z));
        case Op::Bump: {
            const Complex w = nd.kids[0].value(z);
            const double u = std::norm(w);
            return u < 1.0 ? Complex{std::exp(1.0 - 1.0 / (1.0 - u)), 0.0} : Complex{0.0};
        }
    }
    return 0.0;
}

Outer::Eval Outer::eval(const std::vector<Complex>& z) const {
    const int nv = static_cast<int>(z.size());
    const Node& nd = *node_;
    Eval e;
    e.dz.assign(nv, Complex{0.0});
    e.dzb.assign(nv, Complex{0.0});
    switch (nd.op) {
        case Op::Var:
            if (nd.index >= nv)
                throw config_error("outer variable index exceeds the coupling count");
            e.value = z[nd.index];
            e.dz[nd.index] = 1.0;
            return e;
        case Op::Const:
            e.value = nd.c;
            return e;
        case Op::Sum: {
            e.value = 0.0;
            for (const Outer& k : nd.kids) {
                Eval ke = k.eval(z);
                e.value += ke.value;
                for (int m = 0; m < nv; ++m) {
                    e.dz[m] += ke.dz[m];
                    e.dzb[m] += ke.dzb[m];
                }
            }
            return e;
        }
        case Op::Prod: {
            e.value = 1.0;
            for (const Outer& k : nd.kids) {
                Eval ke = k.eval(z);
                for (int m = 0; m < nv; ++m) {
                    e.dz[m] = e.dz[m] * ke.value + e.value * ke.dz[m];
                    e.dzb[m] = e.dzb[m] * ke.value + e.value * ke.dzb[m];
                }
                e.value *= ke.value;
            }
            return e;
        }
        case Op::Conj: {
            Eval ke = nd.kids[0].eval(z);
            e.value = std::conj(ke.value);
            for (int m = 0; m < nv; ++m) {
                e.dz[m] = std::conj(ke.dzb[m]);
                e.dzb[m] = std::conj(ke.dz[m]);
            }
            return e;
        }
        case Op::Bump: {
            Eval ke = nd.kids[0].eval(z);
            const Complex w = ke.value;
            const double u = std::norm(w);
            if (u >= 1.0) {
                e.value = 0.0;
                return e;
            }
            const double b = std::exp(1.0 - 1.0 / (1.0 - u));
            const double bp = -b / ((1.0 - u) * (1.0 - u));  // d beta / du
            e.value = b;
            for (int m = 0; m < nv; ++m) {
                // du/dz_m = conj(w) dw/dz_m + w d(conj w)/dz_m
                const Complex du = std::conj(w) * ke.dz[m] + w * std::conj(ke.dzb[m]);
                e.dz[m] = bp * du;
                e.dzb[m] = bp * std::conj(du);
            }
            return e;
        }
    }
    return e;
}

// ---------------- observable evaluation ----------------

std::vector<Complex> couplings(const CylinderObservable& obs, const VortexState& state) {
    std::vector<Complex> z(obs.inner.size(), Complex{0.0});
    for (std::size_t k = 0; k < obs.inner.size(); ++k)
        for (int i = 0; i < state.n(); ++i)
            z[k] += state.intensities[i] * obs.inner[k].value(state.positions[i]);
    return z;
}

Complex eval(const CylinderObservable& obs, const VortexState& state) {
    state.validate();
    const CutoffEval ce = cutoff_eval(obs, state, false);
    if (ce.zero) return 0.0;
    return ce.value * obs.outer.value(couplings(obs, state));
}

std::vector<CVec3> observable_gradient(const CylinderObservable& obs, const VortexState& state) {
    state.validate();
    const int n = state.n();
    std::vector<CVec3> grad(n, CVec3{Complex{0.0}, Complex{0.0}, Complex{0.0}});
    const CutoffEval ce = cutoff_eval(obs, state, true);
    if (ce.zero) return grad;  // identically zero on a neighbourhood

    const std::vector<Complex> z = couplings(obs, state);
    const Outer::Eval oe = obs.outer.eval(z);
    const int nk = static_cast<int>(obs.inner.size());

    // chain rule through the couplings: grad_i z_k = xi_i grad phi_k(x_i)
    for (int i = 0; i < n; ++i) {
        CVec3 gi{Complex{0.0}, Complex{0.0}, Complex{0.0}};
        for (int k = 0; k < nk; ++k) {
            if (oe.dz[k] == Complex{0.0} && oe.dzb[k] == Complex{0.0}) continue;
            const CVec3 gp = obs.inner[k].gradient(state.positions[i]);
            for (int c = 0; c < 3; ++c)
                gi[c] += state.intensities[i] *
                         (oe.dz[k] * gp[c] + oe.dzb[k] * std::conj(gp[c]));
        }
        for (int c = 0; c < 3; ++c) grad[i][c] = ce.value * gi[c];
    }

    // product rule through the cutoff
    if (obs.cutoff_delta > 0.0 && n >= 2) {
        const int npairs = n * (n - 1) / 2;
        for (int i = 0; i < n; ++i) {
            Vec3 gchi{0.0, 0.0, 0.0};
            int p = 0;
            for (int a = 0; a < n; ++a)
                for (int b = a + 1; b < n; ++b, ++p) {
                    if (a != i && b != i) continue;
                    if (ce.eta_d[p] == 0.0) continue;
                    double others = 1.0;
                    for (int q = 0; q < npairs; ++q)
                        if (q != p) others *= ce.eta_v[q];
                    const Point xa = state.positions[a], xb = state.positions[b];
                    Vec3 dd = distance_gradient(state.geometry, xa, xb, ce.dist[p]);
                    if (b == i) dd = -1.0 * dd;  // gradient w.r.t. the second argument
                    const double w = others * ce.eta_d[p] / obs.cutoff_delta;
                    gchi = gchi + w * dd;
                }
            for (int c = 0; c < 3; ++c)
                grad[i][c] += oe.value * Complex{c == 0   ? gchi.x
                                                 : c == 1 ? gchi.y
                                                          : gchi.z};
        }
    }
    return grad;
}

Complex liouville_apply(const CylinderObservable& obs, const VortexState& state) {
    state.validate();
    if (obs.cutoff_delta > 0.0 && state.n() >= 2 &&
        state.min_pair_distance() <= 0.5 * obs.cutoff_delta)
        return 0.0;  // inside the cutoff's vanishing region
    const std::vector<CVec3> grad = observable_gradient(obs, state);
    const std::vector<Vec3> field = vector_field(state, 0.0);
    Complex acc = 0.0;
    for (int i = 0; i < state.n(); ++i) acc += cdot(grad[i], field[i]);
    return -kI * acc;
}

Complex koopman_apply(const CylinderObservable& obs, const VortexState& state, double t,
                      const FlowOptions& opts) {
    const Trajectory traj = integrate(state, t, opts);
    switch (traj.status()) {
        case FlowStatus::Complete:
            return eval(obs, traj.final_state());
        case FlowStatus::NearCollapse:
            throw near_collapse_error(traj.collapse_time().value_or(traj.t_end()));
        case FlowStatus::StepLimit:
            throw std::runtime_error("step budget exhausted before the requested time");
        case FlowStatus::Event:
            return eval(obs, traj.final_state());  // caller-installed event
    }
    return 0.0;
}

Complex arrested_koopman_apply(const CylinderObservable& obs, const VortexState& state, double t,
                               double epsilon, FlowOptions opts) {
    const ArrestedResult r = arrested_flow(state, t, epsilon, std::move(opts));
    return eval(obs, r.final);
}

Complex symmetrized_kernel(const Geometry& geom, const TestFunction& phi, Point x, Point y) {
    if (x.x == y.x && x.y == y.y && x.z == y.z) return 0.0;
    // canonical argument order makes the (x,y) <-> (y,x) symmetry bitwise
    const bool swap = (y.x < x.x) || (y.x == x.x && (y.y < x.y || (y.y == x.y && y.z < x.z)));
    if (swap) std::swap(x, y);
    const double d = geom.distance(x, y);
    if (d < 1e-14) return 0.0;  // bounded convention next to the diagonal
    const Vec3 K = geom.kernel_ambient(x, y);
    const CVec3 gx = phi.gradient(x), gy = phi.gradient(y);
    return 0.5 * ((gx[0] - gy[0]) * K.x + (gx[1] - gy[1]) * K.y + (gx[2] - gy[2]) * K.z);
}

namespace {

template <typename F>
Complex adaptive_simpson(const F& f, double a, double b, double tol, int depth, Complex fa,
                         Complex fm, Complex fb) {
    const double m = 0.5 * (a + b);
    const Complex flm = f(0.5 * (a + m)), frm = f(0.5 * (m + b));
    const Complex s1 = ((b - a) / 6.0) * (fa + 4.0 * fm + fb);
    const Complex s2 = ((m - a) / 6.0) * (fa + 4.0 * flm + fm) +
                       ((b - m) / 6.0) * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(s2 - s1) < 15.0 * tol) return s2 + (s2 - s1) / 15.0;
    return adaptive_simpson(f, a, m, 0.5 * tol, depth - 1, fa, flm, fm) +
           adaptive_simpson(f, m, b, 0.5 * tol, depth - 1, fm, frm, fb);
}

}  // namespace

double weak_form_residual(const Trajectory& traj, const TestFunction& phi, double quad_tol) {
    const Geometry& geom = traj.geometry();
    const std::vector<double>& xi = traj.intensities();
    const int n = static_cast<int>(xi.size());

    auto coupling_at = [&](const std::vector<Point>& pos) {
        Complex v = 0.0;
        for (int i = 0; i < n; ++i) v += xi[i] * phi.value(pos[i]);
        return v;
    };
    const Complex lhs =
        coupling_at(traj.nodes().back().positions) - coupling_at(traj.nodes().front().positions);

    auto pair_sum = [&](double s) {
        const std::vector<Point> pos = traj.positions_at(s);
        Complex acc = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                acc += 2.0 * xi[i] * xi[j] * symmetrized_kernel(geom, phi, pos[i], pos[j]);
        return acc;
    };

    const double total = std::abs(traj.t_end() - traj.t_begin());
    Complex integral = 0.0;
    if (total > 0.0 && n >= 2) {
        const auto& nodes = traj.nodes();
        for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
            const double a = nodes[k].t, b = nodes[k + 1].t;
            const double tol = std::max(quad_tol * std::abs(b - a) / total, 1e-16);
            const Complex fa = pair_sum(a), fm = pair_sum(0.5 * (a + b)), fb = pair_sum(b);
            integral += adaptive_simpson(pair_sum, a, b, tol, 24, fa, fm, fb);
        }
    }
    return std::abs(lhs - integral);
}

Complex config_generator_apply(const CylinderObservable& obs, const VortexState& state) {
    state.validate();
    const Geometry& geom = state.geometry;
    const int n = state.n();
    const std::vector<Complex> z = couplings(obs, state);
    const Outer::Eval oe = obs.outer.eval(z);
    Complex acc = 0.0;
    for (std::size_t k = 0; k < obs.inner.size(); ++k) {
        if (oe.dz[k] == Complex{0.0} && oe.dzb[k] == Complex{0.0}) continue;
        Complex pairing = 0.0;  // <H_phi, gamma x gamma>, diagonal terms vanish
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                pairing += 2.0 * state.intensities[i] * state.intensities[j] *
                           symmetrized_kernel(geom, obs.inner[k], state.positions[i],
                                              state.positions[j]);
        acc += oe.dz[k] * pairing + oe.dzb[k] * std::conj(pairing);
    }
    return -kI * acc;
}

}  // namespace vortexlab
