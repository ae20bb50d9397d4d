#pragma once

#include <cmath>

namespace vortexlab {

struct Vec2 {
    double x = 0.0, y = 0.0;
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

// 2x2 matrix, row major.
struct Mat2 {
    double a11 = 0.0, a12 = 0.0, a21 = 0.0, a22 = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
inline Vec2& operator+=(Vec2& a, Vec2 b) { a.x += b.x; a.y += b.y; return a; }
inline Vec2& operator-=(Vec2& a, Vec2 b) { a.x -= b.x; a.y -= b.y; return a; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm2(Vec2 a) { return a.x * a.x + a.y * a.y; }
inline double norm(Vec2 a) { return std::sqrt(norm2(a)); }

// Quarter-turn convention used throughout: rot(v) = (v2, -v1).
inline Vec2 rot(Vec2 v) { return {v.y, -v.x}; }

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline Vec3& operator+=(Vec3& a, Vec3 b) { a.x += b.x; a.y += b.y; a.z += b.z; return a; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm2(Vec3 a) { return dot(a, a); }
inline double norm(Vec3 a) { return std::sqrt(norm2(a)); }
inline Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }

inline Mat2 operator+(Mat2 a, Mat2 b) {
    return {a.a11 + b.a11, a.a12 + b.a12, a.a21 + b.a21, a.a22 + b.a22};
}
inline Mat2 operator-(Mat2 a, Mat2 b) {
    return {a.a11 - b.a11, a.a12 - b.a12, a.a21 - b.a21, a.a22 - b.a22};
}
inline Mat2 operator-(Mat2 a) { return {-a.a11, -a.a12, -a.a21, -a.a22}; }
inline Mat2 operator*(double s, Mat2 a) { return {s * a.a11, s * a.a12, s * a.a21, s * a.a22}; }
inline Mat2& operator+=(Mat2& a, Mat2 b) {
    a.a11 += b.a11; a.a12 += b.a12; a.a21 += b.a21; a.a22 += b.a22;
    return a;
}

// Symmetric rank-one style helper: c1*I + c2*v v^T.
inline Mat2 iso_plus_outer(double c1, double c2, Vec2 v) {
    return {c1 + c2 * v.x * v.x, c2 * v.x * v.y, c2 * v.y * v.x, c1 + c2 * v.y * v.y};
}

inline Mat2 outer(Vec2 a, Vec2 b) {
    return {a.x * b.x, a.x * b.y, a.y * b.x, a.y * b.y};
}

inline Vec2 mul(Mat2 m, Vec2 v) {
    return {m.a11 * v.x + m.a12 * v.y, m.a21 * v.x + m.a22 * v.y};
}

// rot * S for symmetric S; trace is S21 - S12 == 0 exactly when S12 == S21 bitwise.
inline Mat2 rot_times(Mat2 s) { return {s.a21, s.a22, -s.a11, -s.a12}; }

}  // namespace vortexlab
