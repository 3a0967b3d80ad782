#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "langmanip/core/rng.hpp"
#include "langmanip/sim/types.hpp"

namespace langmanip::sim {

/// Radius of the gripper tip sphere used for sweeps, pushing, and contact.
inline constexpr float kGripperRadius = 0.015f;

namespace detail {

/// Segment vs axis-aligned slab [-e, e] on one coordinate; narrows [t0, t1].
inline bool slab_clip(float p, float d, float e, float& t0, float& t1) {
    if (std::abs(d) < 1e-12f) return std::abs(p) <= e;
    float ta = (-e - p) / d;
    float tb = (e - p) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    return t0 <= t1;
}

/// Segment vs infinite cylinder of radius r around local z; narrows [t0, t1].
inline bool cylinder_clip(const Vec3& p, const Vec3& d, float r, float& t0, float& t1) {
    const float a = d.x() * d.x() + d.y() * d.y();
    const float b = 2.0f * (p.x() * d.x() + p.y() * d.y());
    const float c = p.x() * p.x() + p.y() * p.y() - r * r;
    if (a < 1e-12f) return c <= 0.0f;
    const float disc = b * b - 4.0f * a * c;
    if (disc < 0.0f) return false;
    const float s = std::sqrt(disc);
    float ta = (-b - s) / (2.0f * a);
    float tb = (-b + s) / (2.0f * a);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    return t0 <= t1;
}

}  // namespace detail

/// First parameter t in [0,1] at which the segment a->b enters the object
/// expanded by `radius` (Minkowski approximation: boxes keep sharp corners).
/// Returns nullopt when the segment stays clear.
inline std::optional<float> sweep_hit(const SceneObject& obj, const Vec3& a, const Vec3& b,
                                      float radius) {
    const Vec3 p = obj.pose.to_local(a);
    const Vec3 q = obj.pose.to_local(b);
    const Vec3 d = q - p;
    float t0 = 0.0f, t1 = 1.0f;
    switch (obj.shape) {
        case Shape::box: {
            for (int k = 0; k < 3; ++k)
                if (!detail::slab_clip(p[k], d[k], obj.half_extents[k] + radius, t0, t1))
                    return std::nullopt;
            return std::max(0.0f, t0);
        }
        case Shape::sphere: {
            const float r = obj.half_extents.x() + radius;
            const float aa = d.squaredNorm();
            if (aa < 1e-12f) return p.norm() <= r ? std::optional<float>(0.0f) : std::nullopt;
            const float bb = 2.0f * p.dot(d);
            const float cc = p.squaredNorm() - r * r;
            const float disc = bb * bb - 4.0f * aa * cc;
            if (disc < 0.0f) return std::nullopt;
            const float s = std::sqrt(disc);
            float ta = (-bb - s) / (2.0f * aa);
            float tb = (-bb + s) / (2.0f * aa);
            if (tb < 0.0f || ta > 1.0f) return std::nullopt;
            return std::max(0.0f, ta);
        }
        case Shape::cylinder: {
            if (!detail::slab_clip(p.z(), d.z(), obj.half_extents.z() + radius, t0, t1))
                return std::nullopt;
            if (!detail::cylinder_clip(p, d, obj.half_extents.x() + radius, t0, t1))
                return std::nullopt;
            if (t1 < 0.0f || t0 > 1.0f) return std::nullopt;
            return std::max(0.0f, t0);
        }
    }
    return std::nullopt;
}

/// Unsigned distance from a point to the object's surface (0 when inside).
inline float surface_distance(const SceneObject& obj, const Vec3& world_point) {
    const Vec3 p = obj.pose.to_local(world_point);
    switch (obj.shape) {
        case Shape::box: {
            const Vec3 d = (p.cwiseAbs() - obj.half_extents).cwiseMax(0.0f);
            return d.norm();
        }
        case Shape::sphere:
            return std::max(0.0f, p.norm() - obj.half_extents.x());
        case Shape::cylinder: {
            const float rad = std::hypot(p.x(), p.y());
            const float dr = std::max(0.0f, rad - obj.half_extents.x());
            const float dz = std::max(0.0f, std::abs(p.z()) - obj.half_extents.z());
            return std::hypot(dr, dz);
        }
    }
    return 0.0f;
}

inline float surface_area(const SceneObject& obj) {
    const Vec3& h = obj.half_extents;
    switch (obj.shape) {
        case Shape::box:
            return 8.0f * (h.x() * h.y() + h.y() * h.z() + h.x() * h.z());
        case Shape::sphere:
            return 4.0f * static_cast<float>(M_PI) * h.x() * h.x();
        case Shape::cylinder:
            return 2.0f * static_cast<float>(M_PI) * h.x() * (2.0f * h.z()) +
                   2.0f * static_cast<float>(M_PI) * h.x() * h.x();
    }
    return 0.0f;
}

/// Uniform-by-area sample on the object's surface, in local coordinates.
/// Consumes a fixed number of RNG draws per call regardless of outcome so
/// rejection loops outside stay reproducible.
inline Vec3 sample_surface_local(const SceneObject& obj, Rng& rng) {
    const Vec3& h = obj.half_extents;
    switch (obj.shape) {
        case Shape::box: {
            const float axy = h.x() * h.y(), ayz = h.y() * h.z(), axz = h.x() * h.z();
            const float total = 2.0f * (axy + ayz + axz);
            float pick = static_cast<float>(rng.uniform()) * total;
            const float u = static_cast<float>(rng.uniform()) * 2.0f - 1.0f;
            const float v = static_cast<float>(rng.uniform()) * 2.0f - 1.0f;
            if (pick < axy) return {u * h.x(), v * h.y(), h.z()};
            pick -= axy;
            if (pick < axy) return {u * h.x(), v * h.y(), -h.z()};
            pick -= axy;
            if (pick < ayz) return {h.x(), u * h.y(), v * h.z()};
            pick -= ayz;
            if (pick < ayz) return {-h.x(), u * h.y(), v * h.z()};
            pick -= ayz;
            if (pick < axz) return {u * h.x(), h.y(), v * h.z()};
            return {u * h.x(), -h.y(), v * h.z()};
        }
        case Shape::sphere: {
            float x = static_cast<float>(rng.normal());
            float y = static_cast<float>(rng.normal());
            float z = static_cast<float>(rng.normal());
            Vec3 n(x, y, z);
            const float len = n.norm();
            if (len < 1e-9f) n = Vec3::UnitZ();
            else n /= len;
            return n * h.x();
        }
        case Shape::cylinder: {
            const float side = 2.0f * static_cast<float>(M_PI) * h.x() * (2.0f * h.z());
            const float cap = static_cast<float>(M_PI) * h.x() * h.x();
            const float total = side + 2.0f * cap;
            const float pick = static_cast<float>(rng.uniform()) * total;
            const float u = static_cast<float>(rng.uniform());
            const float v = static_cast<float>(rng.uniform());
            const float ang = u * 2.0f * static_cast<float>(M_PI);
            if (pick < side)
                return {h.x() * std::cos(ang), h.x() * std::sin(ang), (v * 2.0f - 1.0f) * h.z()};
            const float r = h.x() * std::sqrt(v);
            const float z = (pick < side + cap) ? h.z() : -h.z();
            return {r * std::cos(ang), r * std::sin(ang), z};
        }
    }
    return Vec3::Zero();
}

}  // namespace langmanip::sim
