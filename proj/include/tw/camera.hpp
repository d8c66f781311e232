#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace tw {

// Pinhole intrinsics. Pixel centers sit at integer coordinates, u along
// width (x right), v along height (y down), z forward.
struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    bool operator==(const CameraIntrinsics&) const = default;
};

// fx = (width/2) / tan(fov/2), square pixels (only a horizontal FoV is
// given), principal point at the image center. Throws on fov outside (0, 180).
CameraIntrinsics intrinsics_from_fov(double horizontal_fov_deg, int width, int height);

// Rigid camera-to-world transform. R maps camera-frame vectors to world
// frame; t is the camera center in world coordinates.
struct Pose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d apply(const Eigen::Vector3d& p_cam) const {
        return rotation * p_cam + translation;
    }
    Eigen::Vector3d apply_inverse(const Eigen::Vector3d& p_world) const {
        return rotation.transpose() * (p_world - translation);
    }
    Pose inverse() const;

    // Orthonormality check: ||R^T R - I||_max <= 1e-9 and det(R) = +1.
    bool is_valid(double tol = 1e-9) const;
    void validate() const;  // throws std::invalid_argument when invalid
};

Pose compose(const Pose& a, const Pose& b);

// World convention: x along the lane, y across it, z up. The camera base
// orientation looks along +x with z up; yaw turns left about world z,
// pitch_down tilts the optical axis toward the ground.
Pose make_camera_pose(const Eigen::Vector3d& position, double yaw_rad, double pitch_down_rad);

// Metric z-buffer. Values are distances along the camera forward axis,
// clamped to [near, far]; far doubles as the no-hit sentinel.
struct DepthMap {
    int width = 0;
    int height = 0;
    float near_clip = 0.0f;
    float far_clip = 0.0f;
    std::vector<float> z;  // row-major, width*height

    float at(int u, int v) const { return z[static_cast<size_t>(v) * width + u]; }
    float& at(int u, int v) { return z[static_cast<size_t>(v) * width + u]; }
    bool is_far_sentinel(int u, int v) const {
        return at(u, v) >= far_clip * (1.0f - 1e-6f);
    }
};

// Per-image min-max normalized inverse depth, in [0, 1].
struct DisparityImage {
    int width = 0;
    int height = 0;
    std::vector<float> d;

    float at(int u, int v) const { return d[static_cast<size_t>(v) * width + u]; }
};

struct ProjectedPoint {
    double u = 0.0;
    double v = 0.0;
    double z = 0.0;
    bool valid = false;  // false when the point is behind the camera
};

inline Eigen::Vector3d unproject(double u, double v, double z, const CameraIntrinsics& K) {
    return {(u - K.cx) / K.fx * z, (v - K.cy) / K.fy * z, z};
}

inline ProjectedPoint project(const Eigen::Vector3d& p_cam, const CameraIntrinsics& K) {
    ProjectedPoint out;
    out.z = p_cam.z();
    if (p_cam.z() <= 0.0) return out;
    out.u = K.fx * p_cam.x() / p_cam.z() + K.cx;
    out.v = K.fy * p_cam.y() / p_cam.z() + K.cy;
    out.valid = true;
    return out;
}

// d = 1/z mapped affinely so min -> 0 and max -> 1 within this image.
// A constant depth image maps to all zeros.
DisparityImage normalize_disparity(const DepthMap& depth);

// Values clamped into [near, far]. Idempotent.
DepthMap clip_depth(const DepthMap& depth, double near, double far);

}  // namespace tw
