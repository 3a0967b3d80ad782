#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>

#include "langmanip/core/error.hpp"

namespace langmanip {

using Vec3 = Eigen::Vector3f;
using Quat = Eigen::Quaternionf;

/// Rigid pose: position + unit quaternion.
struct Pose {
    Vec3 position = Vec3::Zero();
    Quat rotation = Quat::Identity();

    Vec3 apply(const Vec3& local) const { return position + rotation * local; }
    Vec3 to_local(const Vec3& world) const { return rotation.conjugate() * (world - position); }

    Pose compose(const Pose& rel) const {
        return {position + rotation * rel.position, (rotation * rel.rotation).normalized()};
    }
    Pose relative_to(const Pose& base) const {
        Quat inv = base.rotation.conjugate();
        return {inv * (position - base.position), (inv * rotation).normalized()};
    }
};

inline bool quat_near_unit(const Quat& q, float tol) {
    return std::abs(q.norm() - 1.0f) <= tol;
}

/// Renormalize; throws on (near-)zero norm.
inline Quat quat_normalized(const Quat& q) {
    const float n = q.norm();
    if (n < 1e-8f) throw InvalidQuaternionError("zero-norm quaternion");
    return Quat(q.w() / n, q.x() / n, q.y() / n, q.z() / n);
}

/// Sign-canonical form (w >= 0) so the double cover cannot flip supervision.
inline Quat quat_canonical(const Quat& q) {
    Quat u = quat_normalized(q);
    if (u.w() < 0.0f) return Quat(-u.w(), -u.x(), -u.y(), -u.z());
    return u;
}

inline Quat quat_slerp(const Quat& a, const Quat& b, float t) { return a.slerp(t, b); }

/// Axis-aligned workspace every task lives in.
struct WorkspaceBox {
    Vec3 lo{-0.4f, -0.4f, 0.0f};
    Vec3 hi{0.4f, 0.4f, 0.5f};

    bool contains(const Vec3& p) const {
        return p.x() >= lo.x() && p.x() <= hi.x() && p.y() >= lo.y() && p.y() <= hi.y() &&
               p.z() >= lo.z() && p.z() <= hi.z();
    }
};

inline const WorkspaceBox& workspace() {
    static const WorkspaceBox box;
    return box;
}

}  // namespace langmanip
