#include "tw/camera.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tw {

CameraIntrinsics intrinsics_from_fov(double horizontal_fov_deg, int width, int height) {
    if (!(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0)) {
        throw std::invalid_argument("horizontal_fov_deg must be in (0, 180), got " +
                                    std::to_string(horizontal_fov_deg));
    }
    if (width <= 0 || height <= 0) {
        throw std::invalid_argument("image dimensions must be positive");
    }
    CameraIntrinsics K;
    const double half = horizontal_fov_deg * 0.5 * M_PI / 180.0;
    K.fx = (width / 2.0) / std::tan(half);
    K.fy = K.fx;
    K.cx = width / 2.0;
    K.cy = height / 2.0;
    K.width = width;
    K.height = height;
    return K;
}

Pose Pose::inverse() const {
    Pose out;
    out.rotation = rotation.transpose();
    out.translation = -(rotation.transpose() * translation);
    return out;
}

bool Pose::is_valid(double tol) const {
    const Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
    if (err.cwiseAbs().maxCoeff() > tol) return false;
    return rotation.determinant() > 0.0;
}

void Pose::validate() const {
    if (!is_valid()) {
        throw std::invalid_argument("pose rotation is not orthonormal with det +1");
    }
}

Pose compose(const Pose& a, const Pose& b) {
    Pose out;
    out.rotation = a.rotation * b.rotation;
    out.translation = a.rotation * b.translation + a.translation;
    return out;
}

Pose make_camera_pose(const Eigen::Vector3d& position, double yaw_rad, double pitch_down_rad) {
    // Base: camera x (right) -> world -y, camera y (down) -> world -z,
    // camera z (forward) -> world +x.
    Eigen::Matrix3d base;
    base.col(0) = Eigen::Vector3d(0, -1, 0);
    base.col(1) = Eigen::Vector3d(0, 0, -1);
    base.col(2) = Eigen::Vector3d(1, 0, 0);

    Eigen::Matrix3d yaw;
    const double cy = std::cos(yaw_rad), sy = std::sin(yaw_rad);
    yaw << cy, -sy, 0, sy, cy, 0, 0, 0, 1;

    // Rotation about the camera x axis tips the optical axis toward camera
    // +y, i.e. downward.
    Eigen::Matrix3d pitch;
    const double cp = std::cos(pitch_down_rad), sp = std::sin(pitch_down_rad);
    pitch << 1, 0, 0, 0, cp, -sp, 0, sp, cp;

    Pose pose;
    pose.rotation = yaw * base * pitch;
    pose.translation = position;
    return pose;
}

DisparityImage normalize_disparity(const DepthMap& depth) {
    DisparityImage out;
    out.width = depth.width;
    out.height = depth.height;
    out.d.resize(depth.z.size());
    if (depth.z.empty()) return out;

    double dmin = std::numeric_limits<double>::infinity();
    double dmax = -std::numeric_limits<double>::infinity();
    for (float z : depth.z) {
        if (!(z > 0.0f)) {
            throw std::invalid_argument("normalize_disparity requires positive depth values");
        }
        const double d = 1.0 / static_cast<double>(z);
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
    }
    if (dmax - dmin <= 0.0) {
        std::fill(out.d.begin(), out.d.end(), 0.0f);
        return out;
    }
    const double scale = 1.0 / (dmax - dmin);
    for (size_t i = 0; i < depth.z.size(); ++i) {
        const double d = 1.0 / static_cast<double>(depth.z[i]);
        out.d[i] = static_cast<float>((d - dmin) * scale);
    }
    return out;
}

DepthMap clip_depth(const DepthMap& depth, double near, double far) {
    if (!(near > 0.0) || !(near < far)) {
        throw std::invalid_argument("clip_depth requires 0 < near < far");
    }
    DepthMap out = depth;
    out.near_clip = static_cast<float>(near);
    out.far_clip = static_cast<float>(far);
    for (float& z : out.z) {
        z = std::min(static_cast<float>(far), std::max(static_cast<float>(near), z));
    }
    return out;
}

}  // namespace tw
