// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#include "cobev/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace cobev {

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Vec3 Mat3::operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

Mat3 Mat3::operator*(const Mat3& o) const {
    Mat3 out;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += (*this)(r, k) * o(k, c);
            out(r, c) = acc;
        }
    }
    return out;
}

Mat3 Mat3::transposed() const {
    Mat3 out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out(r, c) = (*this)(c, r);
    return out;
}

double Mat3::determinant() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) -
           m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

bool Mat3::is_rotation(double tol) const {
    const Mat3 gram = transposed() * (*this);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            const double expected = (r == c) ? 1.0 : 0.0;
            if (std::abs(gram(r, c) - expected) > tol) return false;
        }
    }
    return std::abs(determinant() - 1.0) <= tol;
}

Mat3 rotation_about_x(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    Mat3 r;
    r.m = {1, 0, 0, 0, c, -s, 0, s, c};
    return r;
}

Mat3 rotation_about_z(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    Mat3 r;
    r.m = {c, -s, 0, s, c, 0, 0, 0, 1};
    return r;
}

Mat3 camera_rotation_nadir(double azimuth, double tilt) {
    // Base orientation maps camera (X right, Y down, Z forward) onto
    // (world X, world -Y, world -Z): the camera looks straight down and the
    // image x axis runs along world x.
    Mat3 base;
    base.m = {1, 0, 0, 0, -1, 0, 0, 0, -1};
    return rotation_about_z(azimuth) * rotation_about_x(-tilt) * base;
}

CameraRig::CameraRig(double fx_, double fy_, double cx_, double cy_,
                     const Mat3& rotation_, const Vec3& position_,
                     int image_width_, int image_height_)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_), rotation(rotation_),
      position(position_), image_width(image_width_), image_height(image_height_) {
    if (!(fx > 0.0) || !(fy > 0.0))
        throw std::invalid_argument("CameraRig: focal lengths must be positive");
    if (!rotation.is_rotation(1e-9))
        throw std::invalid_argument(
            "CameraRig: rotation must be orthonormal with determinant +1");
    if (image_width < 0 || image_height < 0)
        throw std::invalid_argument("CameraRig: negative sensor size");
}

GridSpec GridSpec::make(double min_x, double min_y, double max_x, double max_y,
                        double resolution) {
    if (!(resolution > 0.0))
        throw std::invalid_argument("GridSpec: resolution must be positive");
    if (!(max_x > min_x) || !(max_y > min_y))
        throw std::invalid_argument("GridSpec: extent must be non-empty");

    const auto integral_cells = [resolution](double lo, double hi) {
        const double n = (hi - lo) / resolution;
        const double rounded = std::round(n);
        if (std::abs(n - rounded) > 1e-9 * std::max(1.0, std::abs(n)) || rounded < 1.0)
            throw std::invalid_argument(
                "GridSpec: extent must be an integer number of cells");
        return static_cast<int>(rounded);
    };

    GridSpec spec;
    spec.min_x = min_x;
    spec.min_y = min_y;
    spec.max_x = max_x;
    spec.max_y = max_y;
    spec.resolution = resolution;
    spec.cols = integral_cells(min_x, max_x);
    spec.rows = integral_cells(min_y, max_y);
    return spec;
}

GridSpec GridSpec::make_centered(double half_extent, double resolution) {
    return make(-half_extent, -half_extent, half_extent, half_extent, resolution);
}

Ray pixel_ray(const CameraRig& rig, double u, double v) {
    const Vec3 cam_dir{(u - rig.cx) / rig.fx, (v - rig.cy) / rig.fy, 1.0};
    return Ray{rig.position, rig.rotation * cam_dir};
}

std::optional<Vec3> ray_ground_intersect(const Ray& ray, double plane_z) {
    if (ray.direction.z == 0.0) return std::nullopt;
    const double r = (plane_z - ray.origin.z) / ray.direction.z;
    if (r <= 0.0) return std::nullopt;
    return ray.origin + r * ray.direction;
}

std::optional<std::array<double, 2>> world_to_pixel(const CameraRig& rig, const Vec3& p) {
    const Vec3 cam = rig.rotation.transposed() * (p - rig.position);
    if (cam.z <= 0.0) return std::nullopt;
    return std::array<double, 2>{rig.fx * cam.x / cam.z + rig.cx,
                                 rig.fy * cam.y / cam.z + rig.cy};
}

bool pixel_in_image(const CameraRig& rig, double u, double v) {
    return u >= 0.0 && v >= 0.0 && u < rig.image_width && v < rig.image_height;
}

RawCell bev_cell_raw(double x, double y, const GridSpec& spec) {
    const double col = std::floor((x - spec.min_x) / spec.resolution);
    const double row = std::floor((y - spec.min_y) / spec.resolution);
    // Saturate instead of invoking UB on float->int conversion of far points.
    const auto clamp_cell = [](double v) {
        constexpr double limit = 1e18;
        if (v > limit) return static_cast<std::int64_t>(limit);
        if (v < -limit) return static_cast<std::int64_t>(-limit);
        return static_cast<std::int64_t>(v);
    };
    return RawCell{clamp_cell(row), clamp_cell(col)};
}

std::optional<BevCell> ego_to_bev(const Vec3& p, const GridSpec& spec) {
    const RawCell raw = bev_cell_raw(p.x, p.y, spec);
    if (raw.row < 0 || raw.row >= spec.rows || raw.col < 0 || raw.col >= spec.cols)
        return std::nullopt;
    return BevCell{static_cast<int>(raw.row), static_cast<int>(raw.col)};
}

}  // namespace cobev
