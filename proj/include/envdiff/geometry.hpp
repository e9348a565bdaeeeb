// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace envdiff {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
};

inline double dot(const Vec3& a, const Vec3& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double length(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalize(const Vec3& a) {
    double l = length(a);
    return l > 0.0 ? a * (1.0 / l) : a;
}

/// Unified-vertex triangle mesh: position, shading normal and UV per vertex.
struct Mesh {
    std::vector<Vec3> positions;
    std::vector<Vec3> normals;
    std::vector<std::array<double, 2>> uvs;
    std::vector<std::array<int, 3>> triangles;
};

/// Pinhole camera. cam_to_world is a row-major 3x4 rigid transform; camera
/// space looks down -z with +y up and +x right.
struct CameraModel {
    int width = 0, height = 0;
    double fov_y_deg = 45.0;
    std::array<double, 12> cam_to_world = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};

    Vec3 origin() const { return {cam_to_world[3], cam_to_world[7], cam_to_world[11]}; }
    Vec3 rotate(const Vec3& v) const {
        return {cam_to_world[0] * v.x + cam_to_world[1] * v.y + cam_to_world[2] * v.z,
                cam_to_world[4] * v.x + cam_to_world[5] * v.y + cam_to_world[6] * v.z,
                cam_to_world[8] * v.x + cam_to_world[9] * v.y + cam_to_world[10] * v.z};
    }
    /// World-space direction through the center of pixel (px, py).
    Vec3 pixel_ray(int px, int py) const {
        double tan_half = std::tan(fov_y_deg * M_PI / 180.0 / 2.0);
        double aspect = static_cast<double>(width) / height;
        double cx = ((px + 0.5) / width * 2.0 - 1.0) * tan_half * aspect;
        double cy = (1.0 - (py + 0.5) / height * 2.0) * tan_half;
        return normalize(rotate({cx, cy, -1.0}));
    }
};

/// Camera placed at `eye` looking toward `target` with +y-ish up.
CameraModel look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width,
                    int height, double fov_y_deg);

struct Hit {
    double t = 0.0;
    int triangle = -1;
    double bu = 0.0, bv = 0.0;  // barycentrics of vertices 1 and 2
    Vec3 position;
    Vec3 normal;  // interpolated shading normal, unit length
    std::array<double, 2> uv = {0.0, 0.0};
};

/// Nearest intersection of the ray (origin, dir) with the mesh, or nullopt.
std::optional<Hit> intersect(const Mesh& mesh, const Vec3& origin, const Vec3& dir,
                             double t_min = 1e-9);

/// Any-hit occlusion query, optionally skipping one triangle (the shading
/// triangle itself).
bool occluded(const Mesh& mesh, const Vec3& origin, const Vec3& dir, double t_min,
              int skip_triangle);

/// UV sphere of given radius centered at origin; exact normals, spherical
/// UVs. `segments` columns wrap in azimuth.
Mesh make_uv_sphere(int rings, int segments, double radius = 1.0);

/// Two-triangle rectangle in the xz-plane at height y, normal +y.
Mesh make_ground_quad(double half_extent, double y);

void append_mesh(Mesh& dst, const Mesh& src);

}  // namespace envdiff
