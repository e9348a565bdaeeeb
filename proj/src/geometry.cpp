// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#include "envdiff/geometry.hpp"

#include <limits>

namespace envdiff {

CameraModel look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width,
                    int height, double fov_y_deg) {
    Vec3 fwd = normalize(target - eye);       // camera -z
    Vec3 right = normalize(cross(fwd, up));   // camera +x
    Vec3 cup = cross(right, fwd);             // camera +y
    CameraModel cam;
    cam.width = width;
    cam.height = height;
    cam.fov_y_deg = fov_y_deg;
    cam.cam_to_world = {right.x, cup.x, -fwd.x, eye.x,
                        right.y, cup.y, -fwd.y, eye.y,
                        right.z, cup.z, -fwd.z, eye.z};
    return cam;
}

namespace {

// Moeller-Trumbore; returns t and barycentrics or false.
bool ray_triangle(const Vec3& o, const Vec3& d, const Vec3& p0, const Vec3& p1,
                  const Vec3& p2, double t_min, double& t, double& u, double& v) {
    Vec3 e1 = p1 - p0, e2 = p2 - p0;
    Vec3 pv = cross(d, e2);
    double det = dot(e1, pv);
    if (std::abs(det) < 1e-14) return false;
    double inv = 1.0 / det;
    Vec3 tv = o - p0;
    u = dot(tv, pv) * inv;
    if (u < 0.0 || u > 1.0) return false;
    Vec3 qv = cross(tv, e1);
    v = dot(d, qv) * inv;
    if (v < 0.0 || u + v > 1.0) return false;
    t = dot(e2, qv) * inv;
    return t > t_min;
}

}  // namespace

std::optional<Hit> intersect(const Mesh& mesh, const Vec3& origin, const Vec3& dir,
                             double t_min) {
    Hit best;
    best.t = std::numeric_limits<double>::infinity();
    for (size_t tri = 0; tri < mesh.triangles.size(); ++tri) {
        const auto& idx = mesh.triangles[tri];
        double t, u, v;
        if (ray_triangle(origin, dir, mesh.positions[idx[0]], mesh.positions[idx[1]],
                         mesh.positions[idx[2]], t_min, t, u, v) &&
            t < best.t) {
            best.t = t;
            best.triangle = static_cast<int>(tri);
            best.bu = u;
            best.bv = v;
        }
    }
    if (best.triangle < 0) return std::nullopt;
    const auto& idx = mesh.triangles[static_cast<size_t>(best.triangle)];
    double w0 = 1.0 - best.bu - best.bv;
    best.position = origin + dir * best.t;
    best.normal = normalize(mesh.normals[idx[0]] * w0 + mesh.normals[idx[1]] * best.bu +
                            mesh.normals[idx[2]] * best.bv);
    best.uv = {mesh.uvs[idx[0]][0] * w0 + mesh.uvs[idx[1]][0] * best.bu +
                   mesh.uvs[idx[2]][0] * best.bv,
               mesh.uvs[idx[0]][1] * w0 + mesh.uvs[idx[1]][1] * best.bu +
                   mesh.uvs[idx[2]][1] * best.bv};
    return best;
}

bool occluded(const Mesh& mesh, const Vec3& origin, const Vec3& dir, double t_min,
              int skip_triangle) {
    for (size_t tri = 0; tri < mesh.triangles.size(); ++tri) {
        if (static_cast<int>(tri) == skip_triangle) continue;
        const auto& idx = mesh.triangles[tri];
        double t, u, v;
        if (ray_triangle(origin, dir, mesh.positions[idx[0]], mesh.positions[idx[1]],
                         mesh.positions[idx[2]], t_min, t, u, v))
            return true;
    }
    return false;
}

Mesh make_uv_sphere(int rings, int segments, double radius) {
    Mesh m;
    for (int i = 0; i <= rings; ++i) {
        double theta = M_PI * i / rings;
        double st = std::sin(theta), ct = std::cos(theta);
        for (int j = 0; j <= segments; ++j) {
            double phi = 2.0 * M_PI * j / segments;
            Vec3 n = {st * std::cos(phi), ct, st * std::sin(phi)};
            m.positions.push_back(n * radius);
            m.normals.push_back(n);
            m.uvs.push_back({static_cast<double>(j) / segments,
                             static_cast<double>(i) / rings});
        }
    }
    int stride = segments + 1;
    for (int i = 0; i < rings; ++i)
        for (int j = 0; j < segments; ++j) {
            int a = i * stride + j, b = a + 1, c = a + stride, d = c + 1;
            if (i > 0) m.triangles.push_back({a, c, b});
            if (i < rings - 1) m.triangles.push_back({b, c, d});
        }
    return m;
}

Mesh make_ground_quad(double half_extent, double y) {
    Mesh m;
    double e = half_extent;
    m.positions = {{-e, y, -e}, {e, y, -e}, {e, y, e}, {-e, y, e}};
    for (int i = 0; i < 4; ++i) m.normals.push_back({0, 1, 0});
    m.uvs = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    m.triangles = {{0, 2, 1}, {0, 3, 2}};
    return m;
}

void append_mesh(Mesh& dst, const Mesh& src) {
    int base = static_cast<int>(dst.positions.size());
    dst.positions.insert(dst.positions.end(), src.positions.begin(), src.positions.end());
    dst.normals.insert(dst.normals.end(), src.normals.begin(), src.normals.end());
    dst.uvs.insert(dst.uvs.end(), src.uvs.begin(), src.uvs.end());
    for (const auto& t : src.triangles)
        dst.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
}

}  // namespace envdiff
