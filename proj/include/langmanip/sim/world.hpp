#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "langmanip/core/rng.hpp"
#include "langmanip/sim/collision.hpp"
#include "langmanip/sim/types.hpp"

namespace langmanip::sim {

inline constexpr float kGraspRadius = 0.02f;       // attach range to a graspable surface
inline constexpr float kCollisionMargin = 0.005f;  // stop short of contact by this much
inline constexpr int kMaxRolloutSteps = 25;

inline const Vec3 kGripperHome{0.0f, -0.28f, 0.34f};

/// Point cloud rendered from a world state: positions plus the index of the
/// source object per point.
struct PointCloud {
    Eigen::MatrixXf points;        // n x 3
    std::vector<std::string> ids;  // n source object ids
};

namespace detail {

inline std::uint64_t task_hash(const TaskSpec& spec) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    mix(spec.name);
    h ^= static_cast<std::uint64_t>(spec.variation) * 0x9e3779b97f4a7c15ULL;
    return h;
}

inline void apply_joint(WorldState& state, const ArticulatedJoint& joint) {
    for (auto& obj : state.objects) {
        if (!obj.attached_joint || *obj.attached_joint != joint.id) continue;
        if (joint.kind == JointKind::prismatic) {
            obj.pose.position = obj.base_pose.position + joint.axis * joint.value;
            obj.pose.rotation = obj.base_pose.rotation;
        } else {
            Eigen::AngleAxisf rot(joint.value, joint.axis);
            obj.pose.position = joint.anchor + rot * (obj.base_pose.position - joint.anchor);
            obj.pose.rotation = (Quat(rot) * obj.base_pose.rotation).normalized();
        }
    }
}

inline void set_joint_value(WorldState& state, ArticulatedJoint& joint, float value) {
    joint.value = std::clamp(value, joint.lo, joint.hi);
    apply_joint(state, joint);
}

/// Joint the object is welded to, if any.
inline const ArticulatedJoint* welded_joint(const WorldState& state, const SceneObject& obj) {
    if (!obj.attached_joint) return nullptr;
    return state.find_joint(*obj.attached_joint);
}

}  // namespace detail

/// Place the task's objects with a seeded PRNG. Deterministic: the same
/// (spec, seed) always yields a bit-identical state.
inline WorldState reset_task(const TaskSpec& spec, std::uint64_t seed) {
    spec.validate();
    WorldState state;
    state.rng_seed = Rng::derive(seed, detail::task_hash(spec));
    state.step_count = 0;
    Rng rng(state.rng_seed);

    // Sampled root positions, for separation tests.
    std::vector<Vec3> roots;
    for (const auto& tpl : spec.objects) {
        SceneObject obj = tpl.prototype;
        if (tpl.fixed) {
            // as-is
        } else if (!tpl.relative_to.empty()) {
            const SceneObject* ref = state.find_object(tpl.relative_to);
            if (ref == nullptr)
                throw InvalidInputError("template '" + obj.id + "' placed relative to unknown '" +
                                        tpl.relative_to + "'");
            obj.pose.position = ref->pose.position + tpl.relative_offset;
        } else {
            bool placed = false;
            for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
                Vec3 p;
                for (int k = 0; k < 3; ++k)
                    p[k] = static_cast<float>(rng.uniform(tpl.pos_lo[k], tpl.pos_hi[k]));
                if (!workspace().contains(p)) continue;
                bool clear = true;
                for (const auto& r : roots) {
                    if ((Eigen::Vector2f(p.x(), p.y()) - Eigen::Vector2f(r.x(), r.y())).norm() <
                        tpl.min_separation) {
                        clear = false;
                        break;
                    }
                }
                if (!clear) continue;
                obj.pose.position = p;
                placed = true;
            }
            if (!placed)
                throw PlacementFailureError("could not place '" + obj.id + "' for task '" +
                                            spec.name + "'");
            roots.push_back(obj.pose.position);
        }
        obj.base_pose = obj.pose;
        obj.validate();
        if (state.find_object(obj.id) != nullptr)
            throw InvalidInputError("duplicate object id '" + obj.id + "'");
        state.objects.push_back(std::move(obj));
    }

    for (const auto& jt : spec.joints) {
        ArticulatedJoint joint = jt.prototype;
        if (!jt.anchor_object.empty()) {
            const SceneObject* ref = state.find_object(jt.anchor_object);
            if (ref == nullptr)
                throw InvalidInputError("joint '" + joint.id + "' anchored to unknown object");
            joint.anchor = ref->pose.position + jt.anchor_offset;
        }
        joint.value = std::clamp(jt.init_value, joint.lo, joint.hi);
        joint.validate();
        state.joints.push_back(joint);
        detail::apply_joint(state, state.joints.back());
    }

    state.gripper.position = kGripperHome;
    state.gripper.rotation = Quat::Identity();
    state.gripper.open = true;
    state.gripper.held_object.reset();
    return state;
}

/// Sample exactly n_points on object surfaces, uniform by area, cropped to
/// the workspace box. Sampling happens in object-local coordinates, so a
/// rigid translation of the scene translates the cloud point-for-point as
/// long as the crop accepts the same candidates.
inline PointCloud render_point_cloud(const WorldState& state, int n_points) {
    if (n_points < 64) throw InvalidInputError("render_point_cloud needs n_points >= 64");
    if (state.objects.empty()) throw EmptySceneError("no objects to render");

    std::vector<float> cdf;
    float total = 0.0f;
    for (const auto& obj : state.objects) {
        total += surface_area(obj);
        cdf.push_back(total);
    }
    if (total <= 0.0f) throw EmptySceneError("zero total surface area");

    PointCloud cloud;
    cloud.points.resize(n_points, 3);
    cloud.ids.resize(static_cast<std::size_t>(n_points));

    Rng rng(Rng::derive(Rng::derive(state.rng_seed, static_cast<std::uint64_t>(state.step_count)),
                        static_cast<std::uint64_t>(n_points)));
    int produced = 0;
    long rejections = 0;
    while (produced < n_points) {
        const float pick = static_cast<float>(rng.uniform()) * total;
        std::size_t oi = static_cast<std::size_t>(
            std::lower_bound(cdf.begin(), cdf.end(), pick) - cdf.begin());
        if (oi >= state.objects.size()) oi = state.objects.size() - 1;
        const SceneObject& obj = state.objects[oi];
        const Vec3 local = sample_surface_local(obj, rng);
        const Vec3 world = obj.pose.apply(local);
        if (!workspace().contains(world)) {
            if (++rejections > 200L * n_points)
                throw EmptySceneError("workspace crop rejected all surface samples");
            continue;
        }
        cloud.points.row(produced) = world.transpose();
        cloud.ids[static_cast<std::size_t>(produced)] = obj.id;
        ++produced;
    }
    return cloud;
}

/// Teleport the gripper toward the action pose. `avoid_collision` sweeps the
/// straight-line path and stops short on contact; otherwise the sweep pushes
/// the first pushable or joint-welded object it meets. Closing near a
/// graspable surface attaches; opening releases. A held joint driver drags
/// its joint by the motion's projection on the joint axis.
inline StepResult step_gripper(const WorldState& state, const GripperAction& action) {
    if (!quat_near_unit(action.rotation, 1e-3f))
        throw InvalidQuaternionError("action quaternion norm outside 1e-3 tolerance");
    const Quat rot = quat_normalized(action.rotation);
    if (!workspace().contains(action.position))
        throw OutOfWorkspaceError("action pose outside workspace box");

    StepResult result;
    result.state = state;
    WorldState& ns = result.state;

    const Vec3 g0 = state.gripper.position;
    Vec3 target = action.position;
    const Vec3 sweep = target - g0;
    const float dist = sweep.norm();
    const std::string held = state.gripper.held_object.value_or("");

    if (dist > 1e-9f) {
        if (action.avoid_collision) {
            float t_hit = std::numeric_limits<float>::infinity();
            for (const auto& obj : ns.objects) {
                if (obj.id == held) continue;
                if (auto t = sweep_hit(obj, g0, target, kGripperRadius))
                    t_hit = std::min(t_hit, *t);
            }
            if (std::isfinite(t_hit)) {
                const float stop = std::max(0.0f, t_hit * dist - kCollisionMargin);
                target = g0 + sweep * (stop / dist);
                result.outcome = StepOutcome::blocked;
            }
        } else {
            // Push pass: carry the first pushable/welded object hit by the sweep.
            float t_hit = std::numeric_limits<float>::infinity();
            SceneObject* hit = nullptr;
            for (auto& obj : ns.objects) {
                if (obj.id == held || obj.is_static) continue;
                const bool jointed = detail::welded_joint(ns, obj) != nullptr;
                if (!obj.pushable && !jointed) continue;
                if (auto t = sweep_hit(obj, g0, target, kGripperRadius)) {
                    if (*t < t_hit) {
                        t_hit = *t;
                        hit = &obj;
                    }
                }
            }
            if (hit != nullptr) {
                // Starting in contact and moving away is not a push.
                const bool away = t_hit <= 1e-9f &&
                                  surface_distance(*hit, target) >
                                      surface_distance(*hit, g0) + 1e-9f;
                if (!away) {
                    const Vec3 contact = g0 + sweep * t_hit;
                    if (const ArticulatedJoint* wj = detail::welded_joint(ns, *hit)) {
                        ArticulatedJoint* joint = ns.find_joint(wj->id);
                        const float dv = (target - contact).dot(joint->axis);
                        detail::set_joint_value(ns, *joint, joint->value + dv);
                    } else {
                        const Vec3 offset = hit->pose.position - contact;
                        Vec3 np = target + offset;
                        np.z() = std::max(np.z(), hit->half_extents.z());
                        np.x() = std::clamp(np.x(), workspace().lo.x(), workspace().hi.x());
                        np.y() = std::clamp(np.y(), workspace().lo.y(), workspace().hi.y());
                        hit->pose.position = np;
                    }
                }
            }
        }
    }

    // A held joint driver converts gripper motion into joint motion.
    if (!held.empty()) {
        const SceneObject* held_obj = ns.find_object(held);
        if (held_obj != nullptr) {
            ArticulatedJoint* drives = nullptr;
            for (auto& j : ns.joints)
                if (j.child_object == held) drives = &j;
            const Vec3 delta = target - g0;
            if (drives != nullptr && delta.norm() > 1e-12f) {
                if (drives->kind == JointKind::prismatic) {
                    detail::set_joint_value(ns, *drives, drives->value + delta.dot(drives->axis));
                } else {
                    const Vec3 rvec = held_obj->pose.position - drives->anchor;
                    const Vec3 rperp = rvec - rvec.dot(drives->axis) * drives->axis;
                    if (rperp.norm() > 1e-6f) {
                        const Vec3 tangent = drives->axis.cross(rperp.normalized());
                        const float dv = delta.dot(tangent) / rperp.norm();
                        detail::set_joint_value(ns, *drives, drives->value + dv);
                    }
                }
            } else if (drives == nullptr) {
                // Free-held object follows the gripper rigidly.
                Pose grip{target, rot};
                SceneObject* obj = ns.find_object(held);
                obj->pose = grip.compose(state.gripper.held_relative);
            }
        }
    }

    ns.gripper.position = target;
    ns.gripper.rotation = rot;

    if (action.open) {
        ns.gripper.open = true;
        ns.gripper.held_object.reset();
    } else {
        ns.gripper.open = false;
        if (ns.gripper.held_object == std::nullopt) {
            float best = std::numeric_limits<float>::infinity();
            const SceneObject* pick = nullptr;
            for (const auto& obj : ns.objects) {
                if (!obj.graspable) continue;
                const float d = surface_distance(obj, target);
                if (d > kGraspRadius) continue;
                if (d < best || (d == best && pick != nullptr && obj.id < pick->id)) {
                    best = d;
                    pick = &obj;
                }
            }
            if (pick != nullptr) {
                ns.gripper.held_object = pick->id;
                Pose grip{target, rot};
                ns.gripper.held_relative = pick->pose.relative_to(grip);
            }
        }
    }

    ns.step_count = state.step_count + 1;
    return result;
}

/// Pure evaluation of the task's success conditions (conjunction).
inline bool check_success(const WorldState& state, const TaskSpec& spec) {
    using Kind = SuccessCondition::Kind;
    for (const auto& c : spec.success) {
        switch (c.kind) {
            case Kind::joint_above: {
                const ArticulatedJoint* j = state.find_joint(c.joint_id);
                if (j == nullptr || j->value < c.threshold) return false;
                break;
            }
            case Kind::joint_below: {
                const ArticulatedJoint* j = state.find_joint(c.joint_id);
                if (j == nullptr || j->value > c.threshold) return false;
                break;
            }
            case Kind::object_within_radius: {
                const SceneObject* o = state.find_object(c.object_id);
                if (o == nullptr) return false;
                Vec3 ref = c.offset;
                if (!c.ref_object_id.empty()) {
                    const SceneObject* r = state.find_object(c.ref_object_id);
                    if (r == nullptr) return false;
                    ref += r->pose.position;
                }
                Vec3 d = o->pose.position - ref;
                if (c.horizontal) d.z() = 0.0f;
                if (d.norm() > c.radius) return false;
                break;
            }
            case Kind::grasp_held:
                if (state.gripper.held_object != c.object_id) return false;
                break;
            case Kind::gripper_within_radius: {
                const SceneObject* o = state.find_object(c.object_id);
                if (o == nullptr) return false;
                if ((state.gripper.position - o->pose.position).norm() > c.radius) return false;
                break;
            }
            case Kind::object_min_height: {
                const SceneObject* o = state.find_object(c.object_id);
                if (o == nullptr || o->pose.position.z() < c.threshold) return false;
                break;
            }
        }
    }
    return true;
}

}  // namespace langmanip::sim
