#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace vortexlab {

// Small dense square matrix, row major; sized for variational flows
// (a few dozen rows), not for serious linear algebra.
struct DMat {
    int n = 0;
    std::vector<double> a;

    DMat() = default;
    explicit DMat(int size) : n(size), a(static_cast<std::size_t>(size) * size, 0.0) {}

    static DMat identity(int size) {
        DMat m(size);
        for (int i = 0; i < size; ++i) m.at(i, i) = 1.0;
        return m;
    }

    double& at(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }
    double at(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }
};

// Determinant by LU with partial pivoting (copy, in place).
inline double lu_det(DMat m) {
    double det = 1.0;
    for (int k = 0; k < m.n; ++k) {
        int piv = k;
        for (int i = k + 1; i < m.n; ++i)
            if (std::fabs(m.at(i, k)) > std::fabs(m.at(piv, k))) piv = i;
        if (m.at(piv, k) == 0.0) return 0.0;
        if (piv != k) {
            for (int j = 0; j < m.n; ++j) std::swap(m.at(piv, j), m.at(k, j));
            det = -det;
        }
        det *= m.at(k, k);
        for (int i = k + 1; i < m.n; ++i) {
            const double f = m.at(i, k) / m.at(k, k);
            for (int j = k + 1; j < m.n; ++j) m.at(i, j) -= f * m.at(k, j);
        }
    }
    return det;
}

// Singular values (descending) via cyclic one-sided Jacobi on the columns.
inline std::vector<double> singular_values(DMat m) {
    const int n = m.n;
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (int i = 0; i < n; ++i) {
                    app += m.at(i, p) * m.at(i, p);
                    aqq += m.at(i, q) * m.at(i, q);
                    apq += m.at(i, p) * m.at(i, q);
                }
                off = std::max(off, std::fabs(apq));
                if (std::fabs(apq) < 1e-30) continue;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t), s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double vp = m.at(i, p), vq = m.at(i, q);
                    m.at(i, p) = c * vp - s * vq;
                    m.at(i, q) = s * vp + c * vq;
                }
            }
        if (off < 1e-15) break;
    }
    std::vector<double> sv(n);
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += m.at(i, j) * m.at(i, j);
        sv[j] = std::sqrt(s);
    }
    std::sort(sv.begin(), sv.end(), [](double x, double y) { return x > y; });
    return sv;
}

}  // namespace vortexlab
