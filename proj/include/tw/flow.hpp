#pragma once

#include "tw/camera.hpp"
#include "tw/image.hpp"

#include <vector>

namespace tw {

// Dense forward flow from a source view to a destination view: for source
// pixel (u, v) the corresponding destination position is (u + du, v + dv).
// The validity mask marks pixels with a well-defined correspondence — the
// reprojection lands inside the destination frame and the destination view
// actually sees the same surface (no occlusion / disocclusion).
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<float> du;
    std::vector<float> dv;
    Mask valid;

    static FlowField sized(int width, int height);

    size_t index(int x, int y) const { return static_cast<size_t>(y) * width + x; }
    bool operator==(const FlowField&) const = default;
};

struct FlowOptions {
    // Metric depth slack (at 1 m) for deciding whether the destination view
    // sees the reprojected surface; scaled into disparity space by d^2 so it
    // stays a constant metric tolerance at any depth.
    double depth_tolerance_m = 0.01;
    // Disparity span across a 2x2 destination cell below which the cell is
    // treated as one (possibly kinked) surface. Larger spans are depth
    // jumps — silhouettes — where only the nearest sample is trusted.
    double cell_span_max = 0.08;
};

// Reprojects every source pixel through its rendered depth into the
// destination view. Far-sentinel (sky) pixels are treated as points at
// infinity: only rotation moves them, and they stay valid only where the
// destination also sees sky.
FlowField compute_flow(const DepthMap& src_depth, const Pose& src_pose, const DepthMap& dst_depth,
                       const Pose& dst_pose, const CameraIntrinsics& K,
                       const FlowOptions& opts = {});

// One pixel of the same reprojection: where source pixel (u, v) at depth z
// lands in the destination view (dst_from_src = dst_pose^-1 ∘ src_pose).
// With at_infinity set, z is ignored and only the direction is carried
// over; the returned z is then the destination-frame forward component of
// that direction.
struct Reprojection {
    double u = 0.0;
    double v = 0.0;
    double z = 0.0;
    bool in_front = false;
};

Reprojection reproject_pixel(int u, int v, double z, bool at_infinity, const Pose& dst_from_src,
                             const CameraIntrinsics& K);

}  // namespace tw
