#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "langmanip/core/error.hpp"
#include "langmanip/core/geometry.hpp"

namespace langmanip::sim {

enum class Shape { box, cylinder, sphere };

inline std::string shape_name(Shape s) {
    switch (s) {
        case Shape::box: return "box";
        case Shape::cylinder: return "cylinder";
        case Shape::sphere: return "sphere";
    }
    return "box";
}

inline Shape shape_from_name(const std::string& s) {
    if (s == "box") return Shape::box;
    if (s == "cylinder") return Shape::cylinder;
    if (s == "sphere") return Shape::sphere;
    throw InvalidInputError("unknown shape '" + s + "'");
}

/// One rigid body in the scene. For spheres only half_extents.x() (the
/// radius) matters; cylinders use x() as radius and z() as half height,
/// with the axis along local z.
struct SceneObject {
    std::string id;
    Shape shape = Shape::box;
    Vec3 half_extents = Vec3::Constant(0.01f);
    Pose pose;
    std::string color_tag;
    std::optional<std::string> attached_joint;  // welded to this joint's motion

    // Behavior flags (artifact-level, not part of the wire schema minimum).
    bool graspable = false;
    bool pushable = false;
    bool is_static = false;

    // Pose at joint value 0, captured at reset for joint-welded objects.
    Pose base_pose;

    void validate() const {
        if (!(half_extents.array() > 0.0f).all())
            throw InvalidInputError("object '" + id + "' has non-positive half extents");
        if (!quat_near_unit(pose.rotation, 1e-6f))
            throw InvalidInputError("object '" + id + "' quaternion not unit");
    }
};

enum class JointKind { prismatic, revolute };

struct ArticulatedJoint {
    std::string id;
    JointKind kind = JointKind::prismatic;
    Vec3 axis = Vec3::UnitZ();
    float lo = 0.0f;
    float hi = 0.0f;
    float value = 0.0f;
    std::string child_object;  // the graspable driver (handle/knob/button)
    Vec3 anchor = Vec3::Zero();  // pivot point for revolute joints

    void validate() const {
        if (lo > hi) throw InvalidInputError("joint '" + id + "' has lo > hi");
        if (value < lo || value > hi)
            throw InvalidInputError("joint '" + id + "' value outside limits");
        if (std::abs(axis.norm() - 1.0f) > 1e-5f)
            throw InvalidInputError("joint '" + id + "' axis not unit");
    }
};

struct GripperState {
    Vec3 position = Vec3::Zero();
    Quat rotation = Quat::Identity();
    bool open = true;
    std::optional<std::string> held_object;

    // Relative pose of a free held object, captured at grasp time.
    Pose held_relative;
};

/// Gripper action: target pose, open state after the step, and whether the
/// motion sweep checks collisions (avoid) or pushes through (allow).
struct GripperAction {
    Vec3 position = Vec3::Zero();
    Quat rotation = Quat::Identity();
    bool open = true;
    bool avoid_collision = true;
};

struct WorldState {
    std::vector<SceneObject> objects;
    std::vector<ArticulatedJoint> joints;
    GripperState gripper;
    std::uint64_t rng_seed = 0;
    int step_count = 0;

    const SceneObject* find_object(const std::string& id) const {
        for (const auto& o : objects)
            if (o.id == id) return &o;
        return nullptr;
    }
    SceneObject* find_object(const std::string& id) {
        for (auto& o : objects)
            if (o.id == id) return &o;
        return nullptr;
    }
    const ArticulatedJoint* find_joint(const std::string& id) const {
        for (const auto& j : joints)
            if (j.id == id) return &j;
        return nullptr;
    }
    ArticulatedJoint* find_joint(const std::string& id) {
        for (auto& j : joints)
            if (j.id == id) return &j;
        return nullptr;
    }
};

// ---- task specification ------------------------------------------------

/// How an object gets placed at reset.
struct ObjectTemplate {
    SceneObject prototype;       // pose.position acts as the nominal center
    Vec3 pos_lo = Vec3::Zero();  // uniform sampling range for the center
    Vec3 pos_hi = Vec3::Zero();
    bool fixed = false;              // use prototype pose verbatim (table, etc.)
    std::string relative_to;         // place at another object's live pose + offset
    Vec3 relative_offset = Vec3::Zero();
    float min_separation = 0.12f;    // against other sampled roots
};

struct JointTemplate {
    ArticulatedJoint prototype;   // axis/limits/driver; anchor filled at reset
    std::string anchor_object;    // anchor = that object's center + offset
    Vec3 anchor_offset = Vec3::Zero();
    float init_value = 0.0f;
};

struct SuccessCondition {
    enum class Kind {
        joint_above,
        joint_below,
        object_within_radius,
        grasp_held,
        gripper_within_radius,
        object_min_height
    };
    Kind kind = Kind::joint_above;
    std::string joint_id;
    std::string object_id;
    std::string ref_object_id;  // empty: offset is an absolute point
    Vec3 offset = Vec3::Zero();
    float threshold = 0.0f;
    float radius = 0.0f;
    bool horizontal = false;  // xy distance only
};

/// Expert waypoint with a symbolic target resolved against the live world.
struct WaypointSpec {
    enum class Anchor { absolute, object, object_toward, joint_arc };
    Anchor anchor = Anchor::object;
    std::string object_id;      // object / joint id depending on anchor
    std::string ref_object_id;  // for object_toward
    Vec3 offset = Vec3::Zero();
    float toward_dist = 0.0f;   // signed distance along normalize(ref - obj) in xy
    float arc_delta = 0.0f;     // joint_arc: rotate driver about the joint by this angle
    Quat rotation = Quat::Identity();
    bool open = true;
    bool avoid = true;
    std::string verb;
    std::string noun;
};

struct TaskSpec {
    std::string name;
    int variation = 0;
    std::vector<ObjectTemplate> objects;
    std::vector<JointTemplate> joints;
    std::vector<SuccessCondition> success;  // conjunction
    std::string high_level_template;
    std::vector<WaypointSpec> waypoints;

    void validate() const {
        if (name.empty()) throw InvalidInputError("task has no name");
        if (waypoints.empty()) throw InvalidInputError("task '" + name + "' has no waypoints");
        if (objects.empty()) throw InvalidInputError("task '" + name + "' has no objects");
    }
};

enum class StepOutcome { moved, blocked };

struct StepResult {
    WorldState state;
    StepOutcome outcome = StepOutcome::moved;
};

}  // namespace langmanip::sim
