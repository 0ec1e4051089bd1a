/*
   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#ifndef GRIDOCK_VEC3_HPP
#define GRIDOCK_VEC3_HPP

#include <cmath>

namespace gridock {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm_sq() const { return dot(*this); }
  double norm() const { return std::sqrt(norm_sq()); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Row-major 3x3 matrix; just enough linear algebra for rigid motions.
struct Mat3 {
  double m[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};

  static Mat3 identity() {
    Mat3 r;
    r.m[0][0] = r.m[1][1] = r.m[2][2] = 1.0;
    return r;
  }

  Vec3 apply(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }

  Vec3 apply_transposed(const Vec3& v) const {
    return {m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z};
  }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
    return r;
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) r.m[i][j] += m[i][k] * o.m[k][j];
    return r;
  }
};

inline Mat3 skew(const Vec3& w) {
  Mat3 s;
  s.m[0][1] = -w.z;
  s.m[0][2] = w.y;
  s.m[1][0] = w.z;
  s.m[1][2] = -w.x;
  s.m[2][0] = -w.y;
  s.m[2][1] = w.x;
  return s;
}

// Rodrigues formula, exp of a rotation vector. Series branch keeps the
// small-angle limit exact in double precision.
inline Mat3 rotation_from_vector(const Vec3& w) {
  const double t2 = w.norm_sq();
  const double t = std::sqrt(t2);
  double a, b;  // sin(t)/t, (1-cos(t))/t^2
  if (t < 1e-4) {
    a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  } else {
    a = std::sin(t) / t;
    b = (1.0 - std::cos(t)) / t2;
  }
  const Mat3 k = skew(w);
  const Mat3 k2 = k * k;
  Mat3 r = Mat3::identity();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m[i][j] += a * k.m[i][j] + b * k2.m[i][j];
  return r;
}

// Left Jacobian of the rotation-vector exponential:
// exp(hat(w + dw)) ~ exp(hat(J_l(w) dw)) * exp(hat(w)).
// Chains a world-frame torque into a rotation-vector gradient.
inline Mat3 so3_left_jacobian(const Vec3& w) {
  const double t2 = w.norm_sq();
  const double t = std::sqrt(t2);
  double b, c;  // (1-cos(t))/t^2, (t-sin(t))/t^3
  if (t < 1e-4) {
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
    c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  } else {
    b = (1.0 - std::cos(t)) / t2;
    c = (t - std::sin(t)) / (t2 * t);
  }
  const Mat3 k = skew(w);
  const Mat3 k2 = k * k;
  Mat3 j = Mat3::identity();
  for (int i = 0; i < 3; ++i)
    for (int jj = 0; jj < 3; ++jj) j.m[i][jj] += b * k.m[i][jj] + c * k2.m[i][jj];
  return j;
}

// Unit quaternion (w, x, y, z).
struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  Mat3 to_matrix() const {
    Mat3 r;
    r.m[0][0] = 1 - 2 * (y * y + z * z);
    r.m[0][1] = 2 * (x * y - w * z);
    r.m[0][2] = 2 * (x * z + w * y);
    r.m[1][0] = 2 * (x * y + w * z);
    r.m[1][1] = 1 - 2 * (x * x + z * z);
    r.m[1][2] = 2 * (y * z - w * x);
    r.m[2][0] = 2 * (x * z - w * y);
    r.m[2][1] = 2 * (y * z + w * x);
    r.m[2][2] = 1 - 2 * (x * x + y * y);
    return r;
  }

  Vec3 rotate(const Vec3& v) const { return to_matrix().apply(v); }

  // Rotation vector with angle in [0, pi].
  Vec3 to_rotation_vector() const {
    double qw = w;
    Vec3 qv{x, y, z};
    if (qw < 0) {  // canonical hemisphere
      qw = -qw;
      qv = -qv;
    }
    const double vn = qv.norm();
    const double angle = 2.0 * std::atan2(vn, qw);
    if (vn < 1e-12) return qv * 2.0;
    return qv * (angle / vn);
  }
};

inline Quat quat_from_axis_angle(const Vec3& unit_axis, double angle) {
  const double h = 0.5 * angle;
  const double s = std::sin(h);
  return {std::cos(h), unit_axis.x * s, unit_axis.y * s, unit_axis.z * s};
}

// Rotate p about the line through `origin` with direction `unit_axis`.
inline Vec3 rotate_about_axis(const Vec3& p, const Vec3& origin, const Vec3& unit_axis,
                              double angle) {
  const Mat3 r = rotation_from_vector(unit_axis * angle);
  return r.apply(p - origin) + origin;
}

}  // namespace gridock

#endif
