#include "tw/scene.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace tw {

namespace {

constexpr double kFeatureStartX = 2.0;  // where stairs/hurdles begin along the lane
constexpr double kWallThickness = 0.2;
constexpr double kGroundDepth = 0.5;

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw std::invalid_argument("invalid terrain spec: " + field + " " + what);
}

}  // namespace

void TerrainSpec::validate() const {
    require(ground_length > 0.0, "ground_length", "must be > 0");
    require(ground_width > 0.0, "ground_width", "must be > 0");
    require(labels.ground != 0, "labels.ground", "must be nonzero (0 is reserved for sky)");
    require(labels.feature != 0, "labels.feature", "must be nonzero (0 is reserved for sky)");
    require(labels.walls != 0, "labels.walls", "must be nonzero (0 is reserved for sky)");
    if (kind == TerrainKind::stairs) {
        require(stairs.step_count >= 1, "stairs.step_count", "must be >= 1");
        require(stairs.rise > 0.0, "stairs.rise", "must be > 0");
        require(stairs.run > 0.0, "stairs.run", "must be > 0");
        require(stairs.width > 0.0, "stairs.width", "must be > 0");
    }
    if (kind == TerrainKind::hurdles) {
        require(hurdles.count >= 1, "hurdles.count", "must be >= 1");
        require(hurdles.height > 0.0, "hurdles.height", "must be > 0");
        require(hurdles.thickness > 0.0, "hurdles.thickness", "must be > 0");
        require(hurdles.spacing > 0.0, "hurdles.spacing", "must be > 0");
        require(hurdles.lane_width > 0.0, "hurdles.lane_width", "must be > 0");
    }
    if (side_walls) {
        require(side_walls->height > 0.0, "side_walls.height", "must be > 0");
        require(side_walls->gap > 0.0, "side_walls.gap", "must be > 0");
    }
}

TerrainSpec terrain_spec_from_json(const nlohmann::json& j) {
    TerrainSpec spec;
    const std::string kind = j.value("kind", "flat");
    if (kind == "flat") {
        spec.kind = TerrainKind::flat;
    } else if (kind == "stairs") {
        spec.kind = TerrainKind::stairs;
    } else if (kind == "hurdles") {
        spec.kind = TerrainKind::hurdles;
    } else {
        throw std::invalid_argument("invalid terrain spec: kind must be flat|stairs|hurdles");
    }
    if (j.contains("stairs")) {
        const auto& s = j.at("stairs");
        spec.stairs.step_count = s.value("step_count", spec.stairs.step_count);
        spec.stairs.rise = s.value("rise", spec.stairs.rise);
        spec.stairs.run = s.value("run", spec.stairs.run);
        spec.stairs.width = s.value("width", spec.stairs.width);
    }
    if (j.contains("hurdles")) {
        const auto& h = j.at("hurdles");
        spec.hurdles.count = h.value("count", spec.hurdles.count);
        spec.hurdles.height = h.value("height", spec.hurdles.height);
        spec.hurdles.thickness = h.value("thickness", spec.hurdles.thickness);
        spec.hurdles.spacing = h.value("spacing", spec.hurdles.spacing);
        spec.hurdles.lane_width = h.value("lane_width", spec.hurdles.lane_width);
    }
    if (j.contains("side_walls") && !j.at("side_walls").is_null()) {
        const auto& w = j.at("side_walls");
        SideWalls walls;
        walls.height = w.value("height", walls.height);
        walls.gap = w.value("gap", walls.gap);
        spec.side_walls = walls;
    }
    if (j.contains("labels")) {
        const auto& l = j.at("labels");
        spec.labels.ground = l.value("ground", spec.labels.ground);
        spec.labels.feature = l.value("feature", spec.labels.feature);
        spec.labels.walls = l.value("walls", spec.labels.walls);
    }
    spec.ground_length = j.value("ground_length", spec.ground_length);
    spec.ground_width = j.value("ground_width", spec.ground_width);
    spec.validate();
    return spec;
}

nlohmann::json terrain_spec_to_json(const TerrainSpec& spec) {
    nlohmann::json j;
    switch (spec.kind) {
        case TerrainKind::flat: j["kind"] = "flat"; break;
        case TerrainKind::stairs: j["kind"] = "stairs"; break;
        case TerrainKind::hurdles: j["kind"] = "hurdles"; break;
    }
    if (spec.kind == TerrainKind::stairs) {
        j["stairs"] = {{"step_count", spec.stairs.step_count},
                       {"rise", spec.stairs.rise},
                       {"run", spec.stairs.run},
                       {"width", spec.stairs.width}};
    }
    if (spec.kind == TerrainKind::hurdles) {
        j["hurdles"] = {{"count", spec.hurdles.count},
                        {"height", spec.hurdles.height},
                        {"thickness", spec.hurdles.thickness},
                        {"spacing", spec.hurdles.spacing},
                        {"lane_width", spec.hurdles.lane_width}};
    }
    if (spec.side_walls) {
        j["side_walls"] = {{"height", spec.side_walls->height}, {"gap", spec.side_walls->gap}};
    }
    j["labels"] = {{"ground", spec.labels.ground},
                   {"feature", spec.labels.feature},
                   {"walls", spec.labels.walls}};
    j["ground_length"] = spec.ground_length;
    j["ground_width"] = spec.ground_width;
    return j;
}

void SceneGeometry::add(const Box& box) {
    if (!(box.min.x() < box.max.x() && box.min.y() < box.max.y() && box.min.z() < box.max.z())) {
        throw std::invalid_argument("box min corner must be strictly below max corner");
    }
    if (boxes.empty()) {
        bbox_min = box.min;
        bbox_max = box.max;
    } else {
        bbox_min = bbox_min.cwiseMin(box.min);
        bbox_max = bbox_max.cwiseMax(box.max);
    }
    boxes.push_back(box);
}

SceneGeometry build_terrain(const TerrainSpec& spec) {
    spec.validate();
    SceneGeometry scene;

    const double half_len = spec.ground_length / 2.0;
    const double half_wid = spec.ground_width / 2.0;
    scene.add({{-half_len, -half_wid, -kGroundDepth}, {half_len, half_wid, 0.0}, spec.labels.ground});

    if (spec.kind == TerrainKind::stairs) {
        const auto& s = spec.stairs;
        for (int i = 1; i <= s.step_count; ++i) {
            const double x0 = kFeatureStartX + (i - 1) * s.run;
            scene.add({{x0, -s.width / 2.0, 0.0},
                       {x0 + s.run, s.width / 2.0, s.rise * i},
                       spec.labels.feature});
        }
    } else if (spec.kind == TerrainKind::hurdles) {
        const auto& h = spec.hurdles;
        for (int i = 0; i < h.count; ++i) {
            const double xc = kFeatureStartX + i * h.spacing;
            scene.add({{xc - h.thickness / 2.0, -h.lane_width / 2.0, 0.0},
                       {xc + h.thickness / 2.0, h.lane_width / 2.0, h.height},
                       spec.labels.feature});
        }
    }

    if (spec.side_walls) {
        const double g = spec.side_walls->gap / 2.0;
        const double h = spec.side_walls->height;
        scene.add({{-half_len, g, 0.0}, {half_len, g + kWallThickness, h}, spec.labels.walls});
        scene.add({{-half_len, -g - kWallThickness, 0.0}, {half_len, -g, h}, spec.labels.walls});
    }
    return scene;
}

RenderResult raycast(const SceneGeometry& scene, const CameraIntrinsics& K, const Pose& pose,
                     double near, double far) {
    if (!(near > 0.0) || !(near < far)) {
        throw std::invalid_argument("raycast requires 0 < near < far");
    }
    pose.validate();

    RenderResult out;
    out.depth.width = K.width;
    out.depth.height = K.height;
    out.depth.near_clip = static_cast<float>(near);
    out.depth.far_clip = static_cast<float>(far);
    out.depth.z.assign(static_cast<size_t>(K.width) * K.height, static_cast<float>(far));
    out.labels.width = K.width;
    out.labels.height = K.height;
    out.labels.labels.assign(static_cast<size_t>(K.width) * K.height, 0);

    const Eigen::Vector3d origin = pose.translation;
    for (int v = 0; v < K.height; ++v) {
        for (int u = 0; u < K.width; ++u) {
            // Direction scaled so the ray parameter equals z-depth along
            // the camera forward axis, not the ray length.
            const Eigen::Vector3d dir_cam((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
            const Eigen::Vector3d dir = pose.rotation * dir_cam;

            double best_t = std::numeric_limits<double>::infinity();
            uint8_t best_label = 0;
            for (const Box& box : scene.boxes) {
                double tmin = -std::numeric_limits<double>::infinity();
                double tmax = std::numeric_limits<double>::infinity();
                bool miss = false;
                for (int axis = 0; axis < 3; ++axis) {
                    const double d = dir[axis];
                    const double o = origin[axis];
                    if (d == 0.0) {
                        if (o < box.min[axis] || o > box.max[axis]) {
                            miss = true;
                            break;
                        }
                        continue;
                    }
                    double t1 = (box.min[axis] - o) / d;
                    double t2 = (box.max[axis] - o) / d;
                    if (t1 > t2) std::swap(t1, t2);
                    tmin = std::max(tmin, t1);
                    tmax = std::min(tmax, t2);
                    if (tmin > tmax) {
                        miss = true;
                        break;
                    }
                }
                if (miss || tmin > tmax) continue;
                // Front-face crossing only; rays starting inside a box see
                // through it.
                if (tmin < near || tmin > far) continue;
                if (tmin < best_t || (tmin == best_t && box.label < best_label)) {
                    best_t = tmin;
                    best_label = box.label;
                }
            }
            if (best_label != 0) {
                out.depth.at(u, v) = static_cast<float>(best_t);
                out.labels.labels[static_cast<size_t>(v) * K.width + u] = best_label;
            }
        }
    }
    return out;
}

std::vector<std::pair<uint8_t, Mask>> binary_masks(const LabelImage& labels) {
    std::map<uint8_t, Mask> by_label;
    for (int v = 0; v < labels.height; ++v) {
        for (int u = 0; u < labels.width; ++u) {
            const uint8_t l = labels.at(u, v);
            auto [it, inserted] = by_label.try_emplace(l);
            if (inserted) it->second = Mask::filled(labels.width, labels.height, 0);
            it->second.set(u, v, 1);
        }
    }
    std::vector<std::pair<uint8_t, Mask>> out;
    out.reserve(by_label.size());
    for (auto& [label, mask] : by_label) out.emplace_back(label, std::move(mask));
    return out;
}

}  // namespace tw
