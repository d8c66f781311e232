#include "tw/generator.hpp"

#include "tw/base64.hpp"
#include "tw/bits.hpp"
#include "tw/digest.hpp"
#include "tw/hashing.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_map>

namespace tw {

namespace {

std::vector<uint8_t> floats_to_le_bytes(const std::vector<float>& values) {
    std::vector<uint8_t> out(values.size() * 4);
    for (size_t i = 0; i < values.size(); ++i) {
        auto b = std::bit_cast<std::array<uint8_t, 4>>(values[i]);
        if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
        std::memcpy(out.data() + i * 4, b.data(), 4);
    }
    return out;
}

std::vector<float> le_bytes_to_floats(const std::vector<uint8_t>& bytes) {
    if (bytes.size() % 4 != 0) throw std::invalid_argument("float payload not a multiple of 4");
    std::vector<float> out(bytes.size() / 4);
    for (size_t i = 0; i < out.size(); ++i) {
        std::array<uint8_t, 4> b;
        std::memcpy(b.data(), bytes.data() + i * 4, 4);
        if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
        out[i] = std::bit_cast<float>(b);
    }
    return out;
}

}  // namespace

nlohmann::json request_to_wire(const GenerationRequest& req) {
    nlohmann::json j;
    j["disparity"] = {{"width", req.disparity.width},
                      {"height", req.disparity.height},
                      {"data", base64_encode(floats_to_le_bytes(req.disparity.d))}};
    j["regions"] = nlohmann::json::array();
    for (const PromptRegion& region : req.regions) {
        j["regions"].push_back({{"label", region.label},
                                {"prompt", region.prompt},
                                {"mask", base64_encode(pack_mask_bits(region.mask))}});
    }
    j["control_strength"] = req.control_strength;
    j["steps"] = req.steps;
    j["seed"] = req.seed;
    return j;
}

GenerationRequest request_from_wire(const nlohmann::json& j) {
    GenerationRequest req;
    const auto& disp = j.at("disparity");
    req.disparity.width = disp.at("width").get<int>();
    req.disparity.height = disp.at("height").get<int>();
    req.disparity.d = le_bytes_to_floats(base64_decode(disp.at("data").get<std::string>()));
    if (req.disparity.d.size() !=
        static_cast<size_t>(req.disparity.width) * req.disparity.height) {
        throw std::invalid_argument("disparity payload does not match its stated size");
    }
    for (const auto& r : j.at("regions")) {
        PromptRegion region;
        region.label = static_cast<uint8_t>(r.at("label").get<int>());
        region.prompt = r.at("prompt").get<std::string>();
        region.mask = unpack_mask_bits(base64_decode(r.at("mask").get<std::string>()),
                                       req.disparity.width, req.disparity.height);
        req.regions.push_back(std::move(region));
    }
    req.control_strength = j.at("control_strength").get<double>();
    req.steps = j.at("steps").get<int>();
    req.seed = j.at("seed").get<uint64_t>();
    return req;
}

std::string request_digest(const GenerationRequest& req) {
    return sha256_hex(request_to_wire(req).dump());
}

nlohmann::json image_to_wire(const ImageRGB8& image) {
    return {{"width", image.width},
            {"height", image.height},
            {"data", base64_encode(image.data)}};
}

ImageRGB8 image_from_wire(const nlohmann::json& j) {
    ImageRGB8 image;
    image.width = j.at("width").get<int>();
    image.height = j.at("height").get<int>();
    image.data = base64_decode(j.at("data").get<std::string>());
    if (image.data.size() != static_cast<size_t>(image.width) * image.height * 3) {
        throw std::invalid_argument("image payload does not match its stated size");
    }
    return image;
}

nlohmann::json stub_context_to_json(const StubContext& ctx) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const Box& box : ctx.scene.boxes) {
        boxes.push_back({{"min", {box.min.x(), box.min.y(), box.min.z()}},
                         {"max", {box.max.x(), box.max.y(), box.max.z()}},
                         {"label", box.label}});
    }
    std::vector<double> rot(9);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rot[static_cast<size_t>(r) * 3 + c] = ctx.pose.rotation(r, c);
    return {{"boxes", std::move(boxes)},
            {"pose",
             {{"rotation", rot},
              {"translation",
               {ctx.pose.translation.x(), ctx.pose.translation.y(), ctx.pose.translation.z()}}}},
            {"intrinsics",
             {{"fx", ctx.intrinsics.fx},
              {"fy", ctx.intrinsics.fy},
              {"cx", ctx.intrinsics.cx},
              {"cy", ctx.intrinsics.cy},
              {"width", ctx.intrinsics.width},
              {"height", ctx.intrinsics.height}}},
            {"near", ctx.near},
            {"far", ctx.far}};
}

StubContext stub_context_from_json(const nlohmann::json& j) {
    StubContext ctx;
    for (const auto& b : j.at("boxes")) {
        Box box;
        const auto& lo = b.at("min");
        const auto& hi = b.at("max");
        box.min = {lo.at(0).get<double>(), lo.at(1).get<double>(), lo.at(2).get<double>()};
        box.max = {hi.at(0).get<double>(), hi.at(1).get<double>(), hi.at(2).get<double>()};
        box.label = static_cast<uint8_t>(b.at("label").get<int>());
        ctx.scene.add(box);
    }
    const auto& pose = j.at("pose");
    const auto rot = pose.at("rotation").get<std::vector<double>>();
    if (rot.size() != 9) throw std::invalid_argument("pose rotation must have 9 entries");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) ctx.pose.rotation(r, c) = rot[static_cast<size_t>(r) * 3 + c];
    const auto& t = pose.at("translation");
    ctx.pose.translation = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
    const auto& K = j.at("intrinsics");
    ctx.intrinsics.fx = K.at("fx").get<double>();
    ctx.intrinsics.fy = K.at("fy").get<double>();
    ctx.intrinsics.cx = K.at("cx").get<double>();
    ctx.intrinsics.cy = K.at("cy").get<double>();
    ctx.intrinsics.width = K.at("width").get<int>();
    ctx.intrinsics.height = K.at("height").get<int>();
    ctx.near = j.at("near").get<double>();
    ctx.far = j.at("far").get<double>();
    return ctx;
}

namespace {

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    return {r + m, g + m, b + m};
}

std::array<double, 3> prompt_base_color(const std::string& prompt, uint64_t seed) {
    const uint64_t h = splitmix64(fnv1a64(prompt) ^ splitmix64(seed));
    const double hue = static_cast<double>(h % 360);
    const double sat = 0.30 + static_cast<double>((h >> 16) % 21) / 100.0;
    const double val = 0.60 + static_cast<double>((h >> 32) % 26) / 100.0;
    auto rgb = hsv_to_rgb(hue, sat, val);
    for (double& c : rgb) c *= 255.0;
    return rgb;
}

uint64_t mix_cells(uint64_t seed, int64_t a, int64_t b, int64_t c) {
    uint64_t h = splitmix64(seed ^ static_cast<uint64_t>(a));
    h = splitmix64(h ^ static_cast<uint64_t>(b));
    return splitmix64(h ^ static_cast<uint64_t>(c));
}

// Smooth multiplicative shade over world position; wavelengths of several
// meters so bilinear resampling between nearby views barely notices it.
double shade_field(const Eigen::Vector3d& p) {
    return 1.0 + 0.12 * std::sin(0.9 * p.x() + 1.7) * std::cos(1.1 * p.y() - 0.6) +
           0.08 * std::sin(0.5 * (p.x() + p.y() + p.z()));
}

// Texel / cell sizes and amplitudes are balanced so a bilinear resample of
// one view against a direct render of another stays within a couple of
// gray levels: texels comparable to a pixel footprint keep neighboring
// samples mostly in the same cell, and the amplitudes cap what a
// mismatched cell can cost.
constexpr double kTexelSize = 0.07;     // world-space speckle texels
constexpr double kSkyCellScale = 12.0;  // direction-space sky cells

uint8_t quantize(double value) {
    return static_cast<uint8_t>(std::clamp<long>(std::lround(value), 0, 255));
}

}  // namespace

ImageRGB8 stub_render(const GenerationRequest& req, const StubContext& ctx) {
    if (req.disparity.width != 0 &&
        (req.disparity.width != ctx.intrinsics.width ||
         req.disparity.height != ctx.intrinsics.height)) {
        throw std::invalid_argument("conditioning resolution does not match the stub context");
    }
    const CameraIntrinsics& K = ctx.intrinsics;
    const RenderResult view = raycast(ctx.scene, K, ctx.pose, ctx.near, ctx.far);

    std::unordered_map<uint8_t, std::array<double, 3>> base_colors;
    for (const PromptRegion& region : req.regions) {
        base_colors[region.label] = prompt_base_color(region.prompt, req.seed);
    }
    const std::array<double, 3> fallback = prompt_base_color("", req.seed);
    auto base_of = [&](uint8_t label) -> const std::array<double, 3>& {
        auto it = base_colors.find(label);
        return it == base_colors.end() ? fallback : it->second;
    };

    // Sky keeps a fixed palette, gently tinted toward whatever prompt covers
    // label 0 so backgrounds still respond to the text.
    const std::array<double, 3> sky_base = {128.0, 168.0, 216.0};
    std::array<double, 3> sky_tinted = sky_base;
    if (auto it = base_colors.find(0); it != base_colors.end()) {
        for (int c = 0; c < 3; ++c) sky_tinted[c] = 0.7 * sky_base[c] + 0.3 * it->second[c];
    }

    ImageRGB8 out = ImageRGB8::filled(K.width, K.height, 0, 0, 0);
    for (int v = 0; v < K.height; ++v) {
        for (int u = 0; u < K.width; ++u) {
            const uint8_t label = view.labels.at(u, v);
            uint8_t* px = out.px(u, v);
            if (label == 0) {
                const Eigen::Vector3d dir =
                    (ctx.pose.rotation * unproject(u, v, 1.0, K)).normalized();
                const uint64_t h = mix_cells(
                    splitmix64(req.seed ^ 0x736b79ull),
                    static_cast<int64_t>(std::floor(dir.x() * kSkyCellScale)),
                    static_cast<int64_t>(std::floor(dir.y() * kSkyCellScale)),
                    static_cast<int64_t>(std::floor(dir.z() * kSkyCellScale)));
                const double horizon = 20.0 * dir.z();  // brighter toward the zenith (world z up)
                for (int c = 0; c < 3; ++c) {
                    const double delta = static_cast<double>((h >> (8 * c)) % 9) - 4.0;
                    px[c] = quantize(sky_tinted[c] + horizon + delta);
                }
                continue;
            }
            const double z = view.depth.at(u, v);
            const Eigen::Vector3d p_world = ctx.pose.apply(unproject(u, v, z, K));
            const double shade = shade_field(p_world);
            const uint64_t h = mix_cells(
                splitmix64(req.seed ^ static_cast<uint64_t>(label)),
                static_cast<int64_t>(std::floor(p_world.x() / kTexelSize)),
                static_cast<int64_t>(std::floor(p_world.y() / kTexelSize)),
                static_cast<int64_t>(std::floor(p_world.z() / kTexelSize)));
            const double speckle = static_cast<double>(h % 7) - 3.0;
            const std::array<double, 3>& base = base_of(label);
            for (int c = 0; c < 3; ++c) px[c] = quantize(base[c] * shade + speckle);
        }
    }
    return out;
}

ImageRGB8 StubGenerator::generate(const GenerationRequest& req) {
    if (!req.stub) {
        throw std::invalid_argument(
            "the stub generator needs the local scene context attached to the request");
    }
    return stub_render(req, *req.stub);
}

RemoteGenerator::RemoteGenerator(RemoteGeneratorConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) {
        throw std::invalid_argument("remote generator endpoint is empty");
    }
}

ImageRGB8 RemoteGenerator::generate(const GenerationRequest& req) {
    httplib::Client client(config_.endpoint);
    const auto timeout =
        std::chrono::milliseconds(static_cast<long>(config_.timeout_s * 1000.0));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers headers;
    if (!config_.auth_token.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.auth_token);
    }
    const std::string body = request_to_wire(req).dump();
    auto res = client.Post("/generate", headers, body, "application/json");
    if (!res) {
        throw std::runtime_error("generator endpoint " + config_.endpoint +
                                 " unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw std::runtime_error("generator returned HTTP " + std::to_string(res->status) + ": " +
                                 res->body.substr(0, 200));
    }
    ImageRGB8 image = image_from_wire(nlohmann::json::parse(res->body).at("image"));
    if (req.disparity.width != 0 &&
        (image.width != req.disparity.width || image.height != req.disparity.height)) {
        throw std::runtime_error("generator replied at " + std::to_string(image.width) + "x" +
                                 std::to_string(image.height) + ", conditioning was " +
                                 std::to_string(req.disparity.width) + "x" +
                                 std::to_string(req.disparity.height));
    }
    return image;
}

}  // namespace tw
