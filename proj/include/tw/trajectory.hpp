#pragma once

#include "tw/camera.hpp"
#include "tw/scene.hpp"

#include <cstdint>
#include <vector>

namespace tw {

struct TrajectoryFrame {
    Pose pose;
    double timestamp_s = 0.0;
};

// Height of the terrain surface under (x, y): the top of the tallest box
// whose footprint contains the point, 0.0 on bare ground.
double terrain_height(const SceneGeometry& scene, double x, double y);

// Scripted ego-motion down the lane: constant forward speed drawn from
// [speed_min, speed_max], a gentle seeded yaw wobble, camera held
// camera_height above the terrain surface and pitched toward the ground.
// Deterministic per seed.
std::vector<TrajectoryFrame> scripted_walk(const SceneGeometry& scene, int timesteps, double dt_s,
                                           uint64_t seed, double speed_min, double speed_max,
                                           double camera_height, double pitch_down_rad);

// Camera spins in place — strictly zero translation, so warps of these
// frames can never disocclude anything.
std::vector<TrajectoryFrame> scripted_pan(const Eigen::Vector3d& position, int timesteps,
                                          double dt_s, double yaw_start_rad,
                                          double yaw_rate_rad_s, double pitch_down_rad);

}  // namespace tw
