#include "vortexlab/torus_green.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace vortexlab {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;
constexpr double inv_two_pi = 1.0 / two_pi;
constexpr double inv_four_pi = 1.0 / (4.0 * std::numbers::pi);
constexpr double euler_gamma = 0.57721566490153286061;

double exp_int_e1(double z) {
    if (z > 700.0) return 0.0;
    return -std::expint(-z);
}

// psi(z) = E1(z) + log z, entire; series for small z.
double e1_plus_log(double z) {
    if (z > 1.0) return exp_int_e1(z) + std::log(z);
    double sum = -euler_gamma;
    double p = 1.0;  // z^m / m!
    for (int m = 1; m <= 24; ++m) {
        p *= z / m;
        const double term = p / m;
        sum += (m % 2 == 1) ? term : -term;
        if (term < 1e-18) break;
    }
    return sum;
}

// q(z) = (1 - exp(-z))/z, q(0) = 1.
double expm1_ratio(double z) {
    if (z < 1e-12) return 1.0 - 0.5 * z;
    if (z > 700.0) return 1.0 / z;
    return -std::expm1(-z) / z;
}

// little-endian scalar io
void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}
std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}
void put_f64(std::ostream& os, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}
double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

constexpr char table_magic[8] = {'V', 'L', 'G', 'T', 'B', 'L', '0', '1'};

}  // namespace

Vec2 TorusGreen::reduce(Vec2 u) {
    return {std::remainder(u.x, two_pi), std::remainder(u.y, two_pi)};
}

TorusGreen::TorusGreen(int resolution, double ewald_split, bool build)
    : res_(resolution), alpha_(ewald_split), cell_(two_pi / resolution) {
    if (resolution < 64 || resolution > 8192)
        throw std::invalid_argument("torus table resolution out of range [64, 8192]");
    if (!(ewald_split >= 0.7 && ewald_split <= 3.0))
        throw std::invalid_argument("ewald split out of range [0.7, 3.0]");
    constant_ = 1.0 / (16.0 * std::numbers::pi * std::numbers::pi * alpha_ * alpha_);
    // keep modes with exp(-|k|^2/4a^2) above ~1e-18
    kmax_ = static_cast<int>(std::ceil(2.0 * alpha_ * std::sqrt(42.0)));
    if (build) build_tables();
}

void TorusGreen::build_tables() {
    const std::size_t n = static_cast<std::size_t>(res_) * res_;
    f_.assign(n, 0.0);
    fx_.assign(n, 0.0);
    fy_.assign(n, 0.0);
    fxy_.assign(n, 0.0);

    const int K = kmax_;
    // folded coefficients A(k1,k2) = mult * exp(-|k|^2/4a^2) / ((2pi)^2 |k|^2)
    std::vector<double> A(static_cast<std::size_t>(K + 1) * (K + 1), 0.0);
    for (int k1 = 0; k1 <= K; ++k1)
        for (int k2 = 0; k2 <= K; ++k2) {
            if (k1 == 0 && k2 == 0) continue;
            const double k2norm = static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2;
            const double mult = (k1 > 0 && k2 > 0) ? 4.0 : 2.0;
            A[static_cast<std::size_t>(k1) * (K + 1) + k2] =
                mult * std::exp(-k2norm / (4.0 * alpha_ * alpha_)) /
                (two_pi * two_pi * k2norm);
        }

    std::vector<double> cosk(static_cast<std::size_t>(K + 1) * res_);
    std::vector<double> sink(static_cast<std::size_t>(K + 1) * res_);
    for (int k = 0; k <= K; ++k)
        for (int i = 0; i < res_; ++i) {
            const double a = k * cell_ * i;
            cosk[static_cast<std::size_t>(k) * res_ + i] = std::cos(a);
            sink[static_cast<std::size_t>(k) * res_ + i] = std::sin(a);
        }

    // Bc(k1, j) = sum_k2 A cos(k2 y_j);  Bs(k1, j) = sum_k2 A k2 sin(k2 y_j)
    std::vector<double> Bc(static_cast<std::size_t>(K + 1) * res_, 0.0);
    std::vector<double> Bs(static_cast<std::size_t>(K + 1) * res_, 0.0);
    for (int k1 = 0; k1 <= K; ++k1)
        for (int k2 = 0; k2 <= K; ++k2) {
            const double a = A[static_cast<std::size_t>(k1) * (K + 1) + k2];
            if (a == 0.0) continue;
            const double* c2 = &cosk[static_cast<std::size_t>(k2) * res_];
            const double* s2 = &sink[static_cast<std::size_t>(k2) * res_];
            double* bc = &Bc[static_cast<std::size_t>(k1) * res_];
            double* bs = &Bs[static_cast<std::size_t>(k1) * res_];
            for (int j = 0; j < res_; ++j) {
                bc[j] += a * c2[j];
                bs[j] += a * k2 * s2[j];
            }
        }

    for (int i = 0; i < res_; ++i) {
        double* frow = &f_[idx(i, 0)];
        double* fxrow = &fx_[idx(i, 0)];
        double* fyrow = &fy_[idx(i, 0)];
        double* fxyrow = &fxy_[idx(i, 0)];
        for (int k1 = 0; k1 <= K; ++k1) {
            const double c1 = cosk[static_cast<std::size_t>(k1) * res_ + i];
            const double s1 = sink[static_cast<std::size_t>(k1) * res_ + i];
            const double* bc = &Bc[static_cast<std::size_t>(k1) * res_];
            const double* bs = &Bs[static_cast<std::size_t>(k1) * res_];
            const double dks = -k1 * s1;
            for (int j = 0; j < res_; ++j) {
                frow[j] += c1 * bc[j];
                fxrow[j] += dks * bc[j];
                fyrow[j] -= c1 * bs[j];
                fxyrow[j] += k1 * s1 * bs[j];
            }
        }
    }
}

double TorusGreen::screened_coefficient(int k1, int k2) const {
    const double k2norm = static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2;
    if (k2norm == 0.0) return 0.0;
    return -std::expm1(-k2norm / (4.0 * alpha_ * alpha_)) / (two_pi * two_pi * k2norm);
}

TorusGreen::PatchEval TorusGreen::interpolate(Vec2 u, int deriv_order) const {
    // wrap to [0, 2pi)
    double xr = std::fmod(u.x, two_pi);
    if (xr < 0.0) xr += two_pi;
    double yr = std::fmod(u.y, two_pi);
    if (yr < 0.0) yr += two_pi;

    int i = static_cast<int>(xr / cell_);
    int j = static_cast<int>(yr / cell_);
    if (i >= res_) i = res_ - 1;
    if (j >= res_) j = res_ - 1;
    const double tx = xr / cell_ - i;
    const double ty = yr / cell_ - j;
    const int i1 = (i + 1 == res_) ? 0 : i + 1;
    const int j1 = (j + 1 == res_) ? 0 : j + 1;

    // corner data: rows = {f, fx, fy, fxy}, columns = corner (a,b)
    const std::size_t c00 = idx(i, j), c01 = idx(i, j1), c10 = idx(i1, j), c11 = idx(i1, j1);
    const double F[2][2] = {{f_[c00], f_[c01]}, {f_[c10], f_[c11]}};
    const double Gx[2][2] = {{fx_[c00], fx_[c01]}, {fx_[c10], fx_[c11]}};
    const double Gy[2][2] = {{fy_[c00], fy_[c01]}, {fy_[c10], fy_[c11]}};
    const double Gxy[2][2] = {{fxy_[c00], fxy_[c01]}, {fxy_[c10], fxy_[c11]}};

    auto basis = [](double t, double w[4]) {
        // h00, h01, h10, h11
        const double t2 = t * t, t3 = t2 * t;
        w[0] = 2.0 * t3 - 3.0 * t2 + 1.0;
        w[1] = -2.0 * t3 + 3.0 * t2;
        w[2] = t3 - 2.0 * t2 + t;
        w[3] = t3 - t2;
    };
    auto basis1 = [](double t, double w[4]) {
        const double t2 = t * t;
        w[0] = 6.0 * t2 - 6.0 * t;
        w[1] = -w[0];
        w[2] = 3.0 * t2 - 4.0 * t + 1.0;
        w[3] = 3.0 * t2 - 2.0 * t;
    };
    auto basis2 = [](double t, double w[4]) {
        w[0] = 12.0 * t - 6.0;
        w[1] = -w[0];
        w[2] = 6.0 * t - 4.0;
        w[3] = 6.0 * t - 2.0;
    };

    double bx[4], by[4], bx1[4], by1[4], bx2[4], by2[4];
    basis(tx, bx);
    basis(ty, by);
    if (deriv_order >= 1) {
        basis1(tx, bx1);
        basis1(ty, by1);
    }
    if (deriv_order >= 2) {
        basis2(tx, bx2);
        basis2(ty, by2);
    }

    const double h = cell_;
    PatchEval out{0.0, {0.0, 0.0}, {}};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const double fv = F[a][b], gxv = h * Gx[a][b], gyv = h * Gy[a][b],
                         gxyv = h * h * Gxy[a][b];
            out.f += bx[a] * by[b] * fv + bx[a + 2] * by[b] * gxv + bx[a] * by[b + 2] * gyv +
                     bx[a + 2] * by[b + 2] * gxyv;
            if (deriv_order >= 1) {
                out.grad.x += (bx1[a] * by[b] * fv + bx1[a + 2] * by[b] * gxv +
                               bx1[a] * by[b + 2] * gyv + bx1[a + 2] * by[b + 2] * gxyv) / h;
                out.grad.y += (bx[a] * by1[b] * fv + bx[a + 2] * by1[b] * gxv +
                               bx[a] * by1[b + 2] * gyv + bx[a + 2] * by1[b + 2] * gxyv) / h;
            }
            if (deriv_order >= 2) {
                const double hxx = (bx2[a] * by[b] * fv + bx2[a + 2] * by[b] * gxv +
                                    bx2[a] * by[b + 2] * gyv + bx2[a + 2] * by[b + 2] * gxyv) /
                                   (h * h);
                const double hyy = (bx[a] * by2[b] * fv + bx[a + 2] * by2[b] * gxv +
                                    bx[a] * by2[b + 2] * gyv + bx[a + 2] * by2[b + 2] * gxyv) /
                                   (h * h);
                const double hxy = (bx1[a] * by1[b] * fv + bx1[a + 2] * by1[b] * gxv +
                                    bx1[a] * by1[b + 2] * gyv + bx1[a + 2] * by1[b + 2] * gxyv) /
                                   (h * h);
                out.hess.a11 += hxx;
                out.hess.a22 += hyy;
                out.hess.a12 += hxy;
            }
        }
    out.hess.a21 = out.hess.a12;  // mixed partials shared bitwise
    return out;
}

// Images with z = a^2 r^2 above this contribute < 1e-20 and are skipped;
// value and gradient paths share the constant so they stay exact pairs.
constexpr double kImageCut = 46.0;

double TorusGreen::wsum(Vec2 ur) const {
    const double a2 = alpha_ * alpha_;
    double s = 0.0;
    for (int nx = -1; nx <= 1; ++nx)
        for (int ny = -1; ny <= 1; ++ny) {
            const Vec2 v{ur.x - two_pi * nx, ur.y - two_pi * ny};
            const double z = a2 * norm2(v);
            if (z > kImageCut) continue;
            s += exp_int_e1(z);
        }
    return inv_four_pi * s;
}

Vec2 TorusGreen::wsum_gradient(Vec2 ur) const {
    const double a2 = alpha_ * alpha_;
    Vec2 g{0.0, 0.0};
    for (int nx = -1; nx <= 1; ++nx)
        for (int ny = -1; ny <= 1; ++ny) {
            const Vec2 v{ur.x - two_pi * nx, ur.y - two_pi * ny};
            const double r2 = norm2(v);
            if (a2 * r2 > kImageCut) continue;
            const double w = std::exp(-a2 * r2) / r2;
            g -= (inv_two_pi * w) * v;
        }
    return g;
}

Mat2 TorusGreen::wsum_hessian(Vec2 ur) const {
    const double a2 = alpha_ * alpha_;
    Mat2 hs;
    for (int nx = -1; nx <= 1; ++nx)
        for (int ny = -1; ny <= 1; ++ny) {
            const Vec2 v{ur.x - two_pi * nx, ur.y - two_pi * ny};
            const double r2 = norm2(v);
            if (a2 * r2 > kImageCut) continue;
            const double e = std::exp(-a2 * r2);
            // (1/2pi) e^{-z} [ (2a^2 + 2/r^2) vv^T / r^2 - I / r^2 ]
            const double c2 = inv_two_pi * e * (2.0 * a2 + 2.0 / r2) / r2;
            const double c1 = -inv_two_pi * e / r2;
            hs += iso_plus_outer(c1, c2, v);
        }
    return hs;
}

double TorusGreen::wsum_smooth(Vec2 ur, double r) const {
    // central image contributes (1/4pi) psi(z0) - (1/2pi) log(alpha)
    double s = inv_four_pi * e1_plus_log(alpha_ * alpha_ * r * r) - inv_two_pi * std::log(alpha_);
    for (int nx = -1; nx <= 1; ++nx)
        for (int ny = -1; ny <= 1; ++ny) {
            if (nx == 0 && ny == 0) continue;
            const Vec2 v{ur.x - two_pi * nx, ur.y - two_pi * ny};
            const double z = alpha_ * alpha_ * norm2(v);
            if (z > kImageCut) continue;
            s += inv_four_pi * exp_int_e1(z);
        }
    return s;
}

Vec2 TorusGreen::wsum_smooth_gradient(Vec2 ur) const {
    const double a2 = alpha_ * alpha_;
    Vec2 g = (inv_two_pi * a2 * expm1_ratio(a2 * norm2(ur))) * ur;
    for (int nx = -1; nx <= 1; ++nx)
        for (int ny = -1; ny <= 1; ++ny) {
            if (nx == 0 && ny == 0) continue;
            const Vec2 v{ur.x - two_pi * nx, ur.y - two_pi * ny};
            const double r2 = norm2(v);
            if (a2 * r2 > kImageCut) continue;
            g -= (inv_two_pi * std::exp(-a2 * r2) / r2) * v;
        }
    return g;
}

Mat2 TorusGreen::wsum_smooth_hessian(Vec2 ur) const {
    const double a2 = alpha_ * alpha_;
    const double z = a2 * norm2(ur);
    // central: (1/2pi) a^2 [ q(z) I + 2 (e^{-z} - q(z))/r^2 * vv^T ]
    double outer_coef;
    if (z < 1e-8) {
        outer_coef = a2 * a2 * (-1.0 + 2.0 * z / 3.0);
    } else {
        outer_coef = 2.0 * a2 * (std::exp(-z) - expm1_ratio(z)) / norm2(ur);
    }
    Mat2 hs = iso_plus_outer(inv_two_pi * a2 * expm1_ratio(z), inv_two_pi * outer_coef, ur);
    for (int nx = -1; nx <= 1; ++nx)
        for (int ny = -1; ny <= 1; ++ny) {
            if (nx == 0 && ny == 0) continue;
            const Vec2 v{ur.x - two_pi * nx, ur.y - two_pi * ny};
            const double r2 = norm2(v);
            if (a2 * r2 > kImageCut) continue;
            const double e = std::exp(-a2 * r2);
            const double c2 = inv_two_pi * e * (2.0 * a2 + 2.0 / r2) / r2;
            const double c1 = -inv_two_pi * e / r2;
            hs += iso_plus_outer(c1, c2, v);
        }
    return hs;
}

double TorusGreen::value(Vec2 u) const {
    const Vec2 ur = reduce(u);
    return wsum(ur) - constant_ + interpolate(ur, 0).f;
}

Vec2 TorusGreen::gradient(Vec2 u) const {
    const Vec2 ur = reduce(u);
    return wsum_gradient(ur) + interpolate(ur, 1).grad;
}

Mat2 TorusGreen::hessian(Vec2 u) const {
    const Vec2 ur = reduce(u);
    return wsum_hessian(ur) + interpolate(ur, 2).hess;
}

double TorusGreen::smooth_value(Vec2 u) const {
    const Vec2 ur = reduce(u);
    return wsum_smooth(ur, norm(ur)) - constant_ + interpolate(ur, 0).f;
}

Vec2 TorusGreen::smooth_gradient(Vec2 u) const {
    const Vec2 ur = reduce(u);
    return wsum_smooth_gradient(ur) + interpolate(ur, 1).grad;
}

Mat2 TorusGreen::smooth_hessian(Vec2 u) const {
    const Vec2 ur = reduce(u);
    return wsum_smooth_hessian(ur) + interpolate(ur, 2).hess;
}

std::string TorusGreen::cache_file_name(int resolution, double ewald_split) {
    std::uint64_t bits;
    std::memcpy(&bits, &ewald_split, 8);
    std::ostringstream name;
    name << "torus_green_r" << resolution << "_s" << std::hex << bits << ".vlt";
    return name.str();
}

void TorusGreen::save(std::ostream& os) const {
    os.write(table_magic, 8);
    put_u32(os, static_cast<std::uint32_t>(res_));
    put_f64(os, alpha_);
    for (const auto* tab : {&f_, &fx_, &fy_, &fxy_})
        for (double v : *tab) put_f64(os, v);
}

std::shared_ptr<TorusGreen> TorusGreen::load(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, table_magic, 8) != 0)
        throw std::runtime_error("torus table cache: bad magic");
    const int res = static_cast<int>(get_u32(is));
    const double split = get_f64(is);
    auto tab = std::make_shared<TorusGreen>(res, split, /*build=*/false);
    const std::size_t n = static_cast<std::size_t>(res) * res;
    for (auto* dst : {&tab->f_, &tab->fx_, &tab->fy_, &tab->fxy_}) {
        dst->resize(n);
        for (std::size_t i = 0; i < n; ++i) (*dst)[i] = get_f64(is);
    }
    if (!is) throw std::runtime_error("torus table cache: truncated file");
    return tab;
}

namespace {

// VL_CACHE_DIR wins; set-but-empty disables the disk cache entirely.
std::filesystem::path table_cache_dir() {
    if (const char* env = std::getenv("VL_CACHE_DIR"))
        return *env ? std::filesystem::path(env) : std::filesystem::path{};
    if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg)
        return std::filesystem::path(xdg) / "vortexlab";
    if (const char* home = std::getenv("HOME"); home && *home)
        return std::filesystem::path(home) / ".cache" / "vortexlab";
    return {};
}

}  // namespace

std::shared_ptr<const TorusGreen> TorusGreen::create(int resolution, double ewald_split) {
    // tables are immutable and ~32 MB at the default resolution, so every
    // Geometry in the process shares one copy per (resolution, split)
    static std::mutex memo_mutex;
    static std::map<std::pair<int, double>, std::weak_ptr<const TorusGreen>> memo;
    const auto key = std::make_pair(resolution, ewald_split);
    {
        std::lock_guard<std::mutex> lock(memo_mutex);
        if (auto tab = memo[key].lock()) return tab;
    }

    std::shared_ptr<const TorusGreen> tab;
    const std::filesystem::path dir = table_cache_dir();
    if (!dir.empty()) {
        const std::filesystem::path path = dir / cache_file_name(resolution, ewald_split);
        if (std::filesystem::exists(path)) {
            std::ifstream is(path, std::ios::binary);
            try {
                auto loaded = load(is);
                if (loaded->resolution() == resolution && loaded->ewald_split() == ewald_split)
                    tab = std::move(loaded);
            } catch (const std::exception&) {
                // corrupt or stale cache file: rebuild below
            }
        }
        if (!tab) {
            tab = std::make_shared<TorusGreen>(resolution, ewald_split, /*build=*/true);
            std::error_code ec;
            std::filesystem::create_directories(dir, ec);
            const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
            const std::filesystem::path tmp =
                path.string() + ".tmp" + std::to_string(stamp);
            {
                std::ofstream os(tmp, std::ios::binary);
                if (os) tab->save(os);
            }
            std::filesystem::rename(tmp, path, ec);  // best effort
        }
    } else {
        tab = std::make_shared<TorusGreen>(resolution, ewald_split, /*build=*/true);
    }

    std::lock_guard<std::mutex> lock(memo_mutex);
    memo[key] = tab;
    return tab;
}

}  // namespace vortexlab
