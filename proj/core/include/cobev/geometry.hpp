// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#pragma once

#include <array>
#include <cstdint>
#include <optional>

namespace cobev {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr bool operator==(const Vec3& o) const = default;

    constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const;
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// 3x3 matrix, row-major.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static constexpr Mat3 identity() { return {}; }

    constexpr double operator()(int r, int c) const { return m[3 * r + c]; }
    constexpr double& operator()(int r, int c) { return m[3 * r + c]; }

    Vec3 operator*(const Vec3& v) const;
    Mat3 operator*(const Mat3& o) const;
    Mat3 transposed() const;
    double determinant() const;
    constexpr bool operator==(const Mat3& o) const = default;

    /// True iff the matrix is a proper rotation: R^T R = I and det R = +1,
    /// both to within tol (componentwise / absolute).
    bool is_rotation(double tol) const;
};

Mat3 rotation_about_x(double angle);
Mat3 rotation_about_z(double angle);

/// Camera-to-world rotation for a downward-mounted camera.
/// Camera axes: X right, Y down, Z forward along the viewing direction.
/// tilt = 0 points the camera straight down (nadir); increasing tilt pitches
/// the view direction away from vertical toward the azimuth heading.
Mat3 camera_rotation_nadir(double azimuth, double tilt);

/// One pinhole camera: intrinsics plus camera-to-world pose.
/// Construction validates focal lengths and rotation orthonormality (1e-9).
struct CameraRig {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    Mat3 rotation;    // camera-to-world
    Vec3 position;    // camera origin in the world frame, meters
    int image_width = 0;
    int image_height = 0;

    CameraRig() = default;
    CameraRig(double fx, double fy, double cx, double cy, const Mat3& rotation,
              const Vec3& position, int image_width, int image_height);

    bool operator==(const CameraRig&) const = default;
};

/// BEV grid geometry: a rows x cols lattice of square cells of side
/// `resolution` meters covering [min_x, max_x) x [min_y, max_y) in the ego
/// frame. The extent must be an exact integer number of cells.
struct GridSpec {
    double min_x = 0.0;
    double min_y = 0.0;
    double max_x = 0.0;
    double max_y = 0.0;
    double resolution = 1.0;
    int rows = 0;  // y direction
    int cols = 0;  // x direction

    static GridSpec make(double min_x, double min_y, double max_x, double max_y,
                         double resolution);

    /// Square extent [-half, half]^2 helper.
    static GridSpec make_centered(double half_extent, double resolution);

    double cell_center_x(int col) const { return min_x + (col + 0.5) * resolution; }
    double cell_center_y(int row) const { return min_y + (row + 0.5) * resolution; }
    std::int64_t cell_count() const { return static_cast<std::int64_t>(rows) * cols; }

    constexpr bool operator==(const GridSpec& o) const = default;
};

struct BevCell {
    int row = 0;
    int col = 0;
    constexpr bool operator==(const BevCell& o) const = default;
};

/// Cell coordinates before the range check; may lie outside the grid.
struct RawCell {
    std::int64_t row = 0;
    std::int64_t col = 0;
};

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unnormalized
};

/// Ray through pixel (u, v): origin at the camera position, direction
/// R * ((u - cx)/fx, (v - cy)/fy, 1) in the world frame. (u, v) may lie
/// outside the sensor; callers decide whether that is meaningful.
Ray pixel_ray(const CameraRig& rig, double u, double v);

/// Intersects the ray with the horizontal plane z = plane_z. Returns the
/// intersection iff it lies strictly in front of the ray origin; returns
/// nullopt for rays parallel to the plane or intersecting behind it.
std::optional<Vec3> ray_ground_intersect(const Ray& ray, double plane_z);

/// Forward projection of a world point to pixel coordinates. Returns nullopt
/// when the point is not strictly in front of the camera. The pixel may lie
/// outside the sensor; compose with pixel_in_image for a frustum test.
std::optional<std::array<double, 2>> world_to_pixel(const CameraRig& rig, const Vec3& p);

bool pixel_in_image(const CameraRig& rig, double u, double v);

/// Ego frame = world frame translated by the agent position (axes shared).
constexpr Vec3 world_to_ego(const Vec3& p, const Vec3& ego_position) {
    return p - ego_position;
}

constexpr Vec3 ego_to_world(const Vec3& p, const Vec3& ego_position) {
    return p + ego_position;
}

/// Cell indices of an ego-frame point before bounds checking:
/// floor((p - extent_min) / resolution), vertical coordinate ignored.
RawCell bev_cell_raw(double x, double y, const GridSpec& spec);

/// Quantizes an ego-frame point into the grid. Out-of-extent points yield
/// nullopt; they are never clamped to border cells.
std::optional<BevCell> ego_to_bev(const Vec3& p, const GridSpec& spec);

}  // namespace cobev
