#pragma once

#include "tw/camera.hpp"
#include "tw/image.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tw {

enum class TerrainKind { flat, stairs, hurdles };

struct StairsParams {
    int step_count = 1;
    double rise = 0.17;  // meters per step
    double run = 0.30;
    double width = 2.0;
};

struct HurdlesParams {
    int count = 1;
    double height = 0.40;
    double thickness = 0.10;
    double spacing = 1.50;
    double lane_width = 2.0;
};

struct SideWalls {
    double height = 1.0;
    double gap = 2.4;  // clear distance between the two walls
};

// Asset label assignment per primitive kind. Label 0 is reserved for
// "no hit / sky" and may not be assigned.
struct TerrainLabels {
    uint8_t ground = 1;
    uint8_t feature = 2;  // stairs or hurdles, depending on kind
    uint8_t walls = 3;
};

struct TerrainSpec {
    TerrainKind kind = TerrainKind::flat;
    StairsParams stairs;
    HurdlesParams hurdles;
    std::optional<SideWalls> side_walls;
    TerrainLabels labels;
    double ground_length = 40.0;  // lane extent along x, meters
    double ground_width = 6.0;

    void validate() const;  // throws naming the offending field
};

TerrainSpec terrain_spec_from_json(const nlohmann::json& j);
nlohmann::json terrain_spec_to_json(const TerrainSpec& spec);

// Axis-aligned box with one asset label.
struct Box {
    Eigen::Vector3d min;
    Eigen::Vector3d max;
    uint8_t label = 0;
};

struct SceneGeometry {
    std::vector<Box> boxes;
    Eigen::Vector3d bbox_min = Eigen::Vector3d::Zero();
    Eigen::Vector3d bbox_max = Eigen::Vector3d::Zero();

    void add(const Box& box);
};

// Deterministic box list for a validated spec. Ground slab top face is at
// z = 0; stairs ascend along +x starting at x = stairs_start; hurdles are
// spaced along +x from hurdle_start.
SceneGeometry build_terrain(const TerrainSpec& spec);

// Per-pixel asset labels; 0 where no box was hit within [near, far].
struct LabelImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> labels;

    uint8_t at(int u, int v) const { return labels[static_cast<size_t>(v) * width + u]; }

    bool operator==(const LabelImage&) const = default;
};

struct RenderResult {
    DepthMap depth;
    LabelImage labels;
};

// Software raycast of the box list. Depth is the z-distance along the
// camera forward axis of the closest front-face intersection in
// [near, far]; ties between coincident faces resolve to the smaller
// label so the output is independent of primitive order. No hit stores
// the far sentinel and label 0. Bit-deterministic for identical inputs.
RenderResult raycast(const SceneGeometry& scene, const CameraIntrinsics& K, const Pose& pose,
                     double near, double far);

// One binary mask per label value present in the image, sorted by label.
// The masks partition the frame; label 0 (when present) is the
// background mask.
std::vector<std::pair<uint8_t, Mask>> binary_masks(const LabelImage& labels);

}  // namespace tw
