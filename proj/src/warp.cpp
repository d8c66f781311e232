#include "tw/warp.hpp"

#include "tw/png_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace tw {

WarpResult warp_frame(const ImageRGB8& key_image, const DepthMap& key_depth, const Pose& key_pose,
                      const DepthMap& target_depth, const Pose& target_pose,
                      const CameraIntrinsics& K, const FlowOptions& opts) {
    if (key_image.width != K.width || key_image.height != K.height) {
        throw std::invalid_argument("key image size does not match the intrinsics");
    }
    const FlowField back =
        compute_flow(target_depth, target_pose, key_depth, key_pose, K, opts);
    const Pose key_from_target = compose(key_pose.inverse(), target_pose);
    const double key_far_disparity = 1.0 / key_depth.far_clip;

    WarpResult out;
    out.image = ImageRGB8::filled(K.width, K.height, 0, 0, 0);
    out.holes = Mask::filled(K.width, K.height, 0);
    for (int v = 0; v < K.height; ++v) {
        for (int u = 0; u < K.width; ++u) {
            if (!back.valid.at(u, v)) {
                out.holes.set(u, v, 1);
                continue;
            }
            const bool sky = target_depth.is_far_sentinel(u, v);
            const Reprojection r =
                reproject_pixel(u, v, target_depth.at(u, v), sky, key_from_target, K);
            const double d_exp = sky ? key_far_disparity : 1.0 / r.z;

            // Depth-aware bilinear: key samples whose disparity disagrees
            // with the reprojected surface belong to a different surface
            // entirely — folding them in would bleed foreground color
            // across silhouettes. The threshold is loose enough to keep
            // every sample of a smooth (even kinked) cell.
            const double keep = 2.0 * opts.cell_span_max +
                                opts.depth_tolerance_m * d_exp * d_exp;
            const int x0 = static_cast<int>(std::floor(r.u));
            const int y0 = static_cast<int>(std::floor(r.v));
            const double fx = r.u - x0;
            const double fy = r.v - y0;
            const double weights[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
            double acc[3] = {0, 0, 0};
            double total = 0.0;
            for (int s = 0; s < 4; ++s) {
                const int x = x0 + (s & 1);
                const int y = y0 + (s >> 1);
                if (x < 0 || x >= K.width || y < 0 || y >= K.height) continue;
                const double d = key_depth.is_far_sentinel(x, y) ? key_far_disparity
                                                                 : 1.0 / key_depth.at(x, y);
                if (std::abs(d - d_exp) > keep) continue;
                const uint8_t* px = key_image.px(x, y);
                for (int c = 0; c < 3; ++c) acc[c] += weights[s] * px[c];
                total += weights[s];
            }
            if (total <= 0.0) {
                // The nearest sample passed the visibility test, so use it
                // outright rather than invent a new hole.
                const int xn = std::clamp(static_cast<int>(std::lround(r.u)), 0, K.width - 1);
                const int yn = std::clamp(static_cast<int>(std::lround(r.v)), 0, K.height - 1);
                const uint8_t* px = key_image.px(xn, yn);
                out.image.set(u, v, px[0], px[1], px[2]);
                continue;
            }
            for (int c = 0; c < 3; ++c) {
                const long q = std::lround(acc[c] / total);
                out.image.px(u, v)[c] = static_cast<uint8_t>(std::clamp(q, 0l, 255l));
            }
        }
    }
    return out;
}

FillMode fill_mode_from_string(const std::string& name) {
    if (name == "nearest_valid") return FillMode::nearest_valid;
    if (name == "mark") return FillMode::mark;
    throw std::invalid_argument("unknown fill mode: " + name);
}

std::string to_string(FillMode mode) {
    return mode == FillMode::nearest_valid ? "nearest_valid" : "mark";
}

namespace {

// Nearest valid pixel by Euclidean distance. Ties break on the scan order
// (top-to-bottom, left-to-right within a ring), which keeps fills
// reproducible across runs.
std::pair<int, int> nearest_valid_pixel(const Mask& holes, int u, int v) {
    long best_d2 = std::numeric_limits<long>::max();
    std::pair<int, int> best{-1, -1};
    const int max_r = std::max(holes.width, holes.height);
    for (int r = 1; r <= max_r; ++r) {
        if (static_cast<long>(r) * r > best_d2) break;  // no closer pixel can exist outside
        for (int dy = -r; dy <= r; ++dy) {
            const int y = v + dy;
            if (y < 0 || y >= holes.height) continue;
            const bool edge_row = std::abs(dy) == r;
            const int step = edge_row ? 1 : 2 * r;  // walk the ring only
            for (int dx = -r; dx <= r; dx += step) {
                const int x = u + dx;
                if (x < 0 || x >= holes.width) continue;
                if (holes.at(x, y)) continue;
                const long d2 = static_cast<long>(dx) * dx + static_cast<long>(dy) * dy;
                if (d2 < best_d2) {
                    best_d2 = d2;
                    best = {x, y};
                }
            }
        }
    }
    return best;
}

}  // namespace

void fill_holes(ImageRGB8& image, const Mask& holes, FillMode mode) {
    if (image.width != holes.width || image.height != holes.height) {
        throw std::invalid_argument("hole mask size does not match the image");
    }
    if (mode == FillMode::mark) {
        for (int v = 0; v < image.height; ++v) {
            for (int u = 0; u < image.width; ++u) {
                if (holes.at(u, v)) image.set(u, v, 255, 0, 255);
            }
        }
        return;
    }
    if (holes.count() == static_cast<size_t>(image.width) * image.height) return;
    const ImageRGB8 source = image;  // fills read the original pixels only
    for (int v = 0; v < image.height; ++v) {
        for (int u = 0; u < image.width; ++u) {
            if (!holes.at(u, v)) continue;
            const auto [x, y] = nearest_valid_pixel(holes, u, v);
            const uint8_t* src = source.px(x, y);
            image.set(u, v, src[0], src[1], src[2]);
        }
    }
}

FrameStack assemble_stack(const ImageRGB8& key_image, const DepthMap& key_depth,
                          const Pose& key_pose, double key_timestamp_s,
                          const std::vector<TargetView>& targets, const CameraIntrinsics& K,
                          const StackOptions& opts) {
    FrameStack stack;
    stack.intrinsics = K;
    stack.frames.push_back(key_image);
    stack.holes.push_back(Mask::filled(K.width, K.height, 0));
    stack.poses.push_back(key_pose);
    stack.timestamps_s.push_back(key_timestamp_s);
    for (const TargetView& target : targets) {
        WarpResult warped =
            warp_frame(key_image, key_depth, key_pose, target.depth, target.pose, K, opts.flow);
        fill_holes(warped.image, warped.holes, opts.fill);
        stack.frames.push_back(std::move(warped.image));
        stack.holes.push_back(std::move(warped.holes));
        stack.poses.push_back(target.pose);
        stack.timestamps_s.push_back(target.timestamp_s);
    }
    return stack;
}

namespace {

nlohmann::json pose_to_json(const Pose& pose) {
    nlohmann::json r = nlohmann::json::array();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.push_back(pose.rotation(i, j));
    nlohmann::json t = nlohmann::json::array();
    for (int i = 0; i < 3; ++i) t.push_back(pose.translation(i));
    return {{"rotation", r}, {"translation", t}};
}

Pose pose_from_json(const nlohmann::json& j) {
    Pose pose;
    const auto& r = j.at("rotation");
    const auto& t = j.at("translation");
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 3; ++c) pose.rotation(i, c) = r.at(i * 3 + c).get<double>();
    for (int i = 0; i < 3; ++i) pose.translation(i) = t.at(i).get<double>();
    return pose;
}

std::string frame_name(const char* prefix, size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%02zu.png", prefix, i);
    return buf;
}

}  // namespace

void save_stack(const std::filesystem::path& dir, const FrameStack& stack) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["intrinsics"] = {{"fx", stack.intrinsics.fx},   {"fy", stack.intrinsics.fy},
                              {"cx", stack.intrinsics.cx},   {"cy", stack.intrinsics.cy},
                              {"width", stack.intrinsics.width},
                              {"height", stack.intrinsics.height}};
    manifest["poses"] = nlohmann::json::array();
    for (const Pose& pose : stack.poses) manifest["poses"].push_back(pose_to_json(pose));
    manifest["timestamps_s"] = stack.timestamps_s;
    manifest["prompt"] = stack.prompt;
    manifest["seed"] = stack.seed;
    manifest["frames"] = stack.frames.size();
    manifest["provenance"] = stack.provenance;

    for (size_t i = 0; i < stack.frames.size(); ++i) {
        save_png_rgb(dir / frame_name("frame", i), stack.frames[i]);
        save_png_mask(dir / frame_name("holes", i), stack.holes[i]);
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
}

FrameStack load_stack(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("cannot open " + (dir / "manifest.json").string());
    nlohmann::json manifest = nlohmann::json::parse(in);

    FrameStack stack;
    const auto& K = manifest.at("intrinsics");
    stack.intrinsics.fx = K.at("fx").get<double>();
    stack.intrinsics.fy = K.at("fy").get<double>();
    stack.intrinsics.cx = K.at("cx").get<double>();
    stack.intrinsics.cy = K.at("cy").get<double>();
    stack.intrinsics.width = K.at("width").get<int>();
    stack.intrinsics.height = K.at("height").get<int>();
    for (const auto& p : manifest.at("poses")) stack.poses.push_back(pose_from_json(p));
    stack.timestamps_s = manifest.at("timestamps_s").get<std::vector<double>>();
    stack.prompt = manifest.at("prompt").get<std::string>();
    stack.seed = manifest.at("seed").get<uint64_t>();
    if (manifest.contains("provenance")) {
        stack.provenance = manifest.at("provenance").get<std::map<std::string, std::string>>();
    }

    const size_t n = manifest.at("frames").get<size_t>();
    for (size_t i = 0; i < n; ++i) {
        stack.frames.push_back(load_png_rgb(dir / frame_name("frame", i)));
        stack.holes.push_back(load_png_mask(dir / frame_name("holes", i)));
    }
    return stack;
}

double speedup_model(int stack_len, double t_gen_s, double t_warp_s) {
    if (stack_len < 1) throw std::invalid_argument("stack length must be >= 1");
    if (t_gen_s <= 0.0 || t_warp_s < 0.0) {
        throw std::invalid_argument("timings must be positive (warp may be zero)");
    }
    return stack_len * t_gen_s / (t_gen_s + (stack_len - 1) * t_warp_s);
}

}  // namespace tw
