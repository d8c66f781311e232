#include "tw/trajectory.hpp"

#include "tw/hashing.hpp"

#include <cmath>
#include <stdexcept>

namespace tw {

double terrain_height(const SceneGeometry& scene, double x, double y) {
    double top = 0.0;
    for (const Box& box : scene.boxes) {
        if (x >= box.min.x() && x <= box.max.x() && y >= box.min.y() && y <= box.max.y()) {
            top = std::max(top, box.max.z());
        }
    }
    return top;
}

std::vector<TrajectoryFrame> scripted_walk(const SceneGeometry& scene, int timesteps, double dt_s,
                                           uint64_t seed, double speed_min, double speed_max,
                                           double camera_height, double pitch_down_rad) {
    if (timesteps < 1) throw std::invalid_argument("trajectory needs at least one timestep");
    if (!(speed_min <= speed_max)) throw std::invalid_argument("speed range inverted");

    SplitMix rng(splitmix64(seed));
    const double speed = rng.range(speed_min, speed_max);
    const double x0 = rng.range(-2.5, -1.0);
    const double y0 = rng.range(-0.4, 0.4);
    const double wobble_amp = rng.range(0.0, 0.08);
    const double wobble_hz = rng.range(0.2, 0.5);
    const double wobble_phase = rng.range(0.0, 2.0 * M_PI);

    std::vector<TrajectoryFrame> frames;
    frames.reserve(static_cast<size_t>(timesteps));
    for (int i = 0; i < timesteps; ++i) {
        const double t = i * dt_s;
        const double x = x0 + speed * t;
        const double z = terrain_height(scene, x, y0) + camera_height;
        const double yaw = wobble_amp * std::sin(2.0 * M_PI * wobble_hz * t + wobble_phase);
        frames.push_back({make_camera_pose({x, y0, z}, yaw, pitch_down_rad), t});
    }
    return frames;
}

std::vector<TrajectoryFrame> scripted_pan(const Eigen::Vector3d& position, int timesteps,
                                          double dt_s, double yaw_start_rad,
                                          double yaw_rate_rad_s, double pitch_down_rad) {
    if (timesteps < 1) throw std::invalid_argument("trajectory needs at least one timestep");
    std::vector<TrajectoryFrame> frames;
    frames.reserve(static_cast<size_t>(timesteps));
    for (int i = 0; i < timesteps; ++i) {
        const double t = i * dt_s;
        frames.push_back(
            {make_camera_pose(position, yaw_start_rad + yaw_rate_rad_s * t, pitch_down_rad), t});
    }
    return frames;
}

}  // namespace tw
