#include "tw/raster.hpp"

#include "tw/bits.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace tw {

namespace {

constexpr uint32_t kVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <typename T>
T get_le(const std::string& in, size_t& offset) {
    if (offset + sizeof(T) > in.size()) {
        throw std::runtime_error("raster file truncated");
    }
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), in.data() + offset, sizeof(T));
    offset += sizeof(T);
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes.begin(), bytes.end());
    }
    return std::bit_cast<T>(bytes);
}

std::string header_bytes(const char magic[4], int width, int height, double near, double far,
                         const Pose& pose, const CameraIntrinsics& K) {
    std::string out;
    out.reserve(168);
    out.append(magic, 4);
    put_le<uint32_t>(out, kVersion);
    put_le<uint32_t>(out, static_cast<uint32_t>(width));
    put_le<uint32_t>(out, static_cast<uint32_t>(height));
    put_le<double>(out, near);
    put_le<double>(out, far);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) put_le<double>(out, pose.rotation(r, c));
    for (int r = 0; r < 3; ++r) put_le<double>(out, pose.translation(r));
    put_le<double>(out, K.fx);
    put_le<double>(out, K.fy);
    put_le<double>(out, K.cx);
    put_le<double>(out, K.cy);
    put_le<double>(out, static_cast<double>(K.width));
    put_le<double>(out, static_cast<double>(K.height));
    return out;
}

struct Header {
    int width = 0;
    int height = 0;
    double near = 0.0;
    double far = 0.0;
    RasterMeta meta;
};

Header parse_header(const std::string& in, const char magic[4], const std::filesystem::path& path,
                    size_t& offset) {
    if (in.size() < 4 || std::memcmp(in.data(), magic, 4) != 0) {
        throw std::runtime_error(path.string() + ": not a " + std::string(magic, 4) + " raster");
    }
    offset = 4;
    const uint32_t version = get_le<uint32_t>(in, offset);
    if (version != kVersion) {
        throw std::runtime_error(path.string() + ": unsupported raster version " +
                                 std::to_string(version));
    }
    Header h;
    h.width = static_cast<int>(get_le<uint32_t>(in, offset));
    h.height = static_cast<int>(get_le<uint32_t>(in, offset));
    h.near = get_le<double>(in, offset);
    h.far = get_le<double>(in, offset);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) h.meta.pose.rotation(r, c) = get_le<double>(in, offset);
    for (int r = 0; r < 3; ++r) h.meta.pose.translation(r) = get_le<double>(in, offset);
    h.meta.intrinsics.fx = get_le<double>(in, offset);
    h.meta.intrinsics.fy = get_le<double>(in, offset);
    h.meta.intrinsics.cx = get_le<double>(in, offset);
    h.meta.intrinsics.cy = get_le<double>(in, offset);
    h.meta.intrinsics.width = static_cast<int>(get_le<double>(in, offset));
    h.meta.intrinsics.height = static_cast<int>(get_le<double>(in, offset));
    return h;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

}  // namespace

void save_depth(const std::filesystem::path& path, const DepthMap& depth, const Pose& pose,
                const CameraIntrinsics& K) {
    std::string out = header_bytes("TWDR", depth.width, depth.height, depth.near_clip,
                                   depth.far_clip, pose, K);
    for (float z : depth.z) put_le<float>(out, z);
    write_file(path, out);
}

DepthMap load_depth(const std::filesystem::path& path, RasterMeta* meta) {
    const std::string in = read_file(path);
    size_t offset = 0;
    const Header h = parse_header(in, "TWDR", path, offset);
    DepthMap depth;
    depth.width = h.width;
    depth.height = h.height;
    depth.near_clip = static_cast<float>(h.near);
    depth.far_clip = static_cast<float>(h.far);
    const size_t n = static_cast<size_t>(h.width) * h.height;
    if (in.size() - offset != n * sizeof(float)) {
        throw std::runtime_error(path.string() + ": depth payload size mismatch");
    }
    depth.z.resize(n);
    for (size_t i = 0; i < n; ++i) depth.z[i] = get_le<float>(in, offset);
    if (meta) *meta = h.meta;
    return depth;
}

void save_labels(const std::filesystem::path& path, const LabelImage& labels, const Pose& pose,
                 const CameraIntrinsics& K) {
    std::string out = header_bytes("TWLB", labels.width, labels.height, 0.0, 0.0, pose, K);
    out.append(reinterpret_cast<const char*>(labels.labels.data()), labels.labels.size());
    write_file(path, out);
}

LabelImage load_labels(const std::filesystem::path& path, RasterMeta* meta) {
    const std::string in = read_file(path);
    size_t offset = 0;
    const Header h = parse_header(in, "TWLB", path, offset);
    LabelImage labels;
    labels.width = h.width;
    labels.height = h.height;
    const size_t n = static_cast<size_t>(h.width) * h.height;
    if (in.size() - offset != n) {
        throw std::runtime_error(path.string() + ": label payload size mismatch");
    }
    labels.labels.assign(in.begin() + static_cast<ptrdiff_t>(offset), in.end());
    if (meta) *meta = h.meta;
    return labels;
}

void save_flow(const std::filesystem::path& path, const FlowField& flow, const Pose& src_pose,
               const CameraIntrinsics& K) {
    std::string out = header_bytes("TWFL", flow.width, flow.height, 0.0, 0.0, src_pose, K);
    const size_t n = static_cast<size_t>(flow.width) * flow.height;
    for (size_t i = 0; i < n; ++i) {
        put_le<float>(out, flow.du[i]);
        put_le<float>(out, flow.dv[i]);
    }
    const std::vector<uint8_t> bits = pack_mask_bits(flow.valid);
    out.append(reinterpret_cast<const char*>(bits.data()), bits.size());
    write_file(path, out);
}

FlowField load_flow(const std::filesystem::path& path, RasterMeta* meta) {
    const std::string in = read_file(path);
    size_t offset = 0;
    const Header h = parse_header(in, "TWFL", path, offset);
    FlowField flow = FlowField::sized(h.width, h.height);
    const size_t n = static_cast<size_t>(h.width) * h.height;
    const size_t mask_bytes = packed_row_bytes(h.width) * h.height;
    if (in.size() - offset != n * 2 * sizeof(float) + mask_bytes) {
        throw std::runtime_error(path.string() + ": flow payload size mismatch");
    }
    for (size_t i = 0; i < n; ++i) {
        flow.du[i] = get_le<float>(in, offset);
        flow.dv[i] = get_le<float>(in, offset);
    }
    std::vector<uint8_t> bits(in.begin() + static_cast<ptrdiff_t>(offset), in.end());
    flow.valid = unpack_mask_bits(bits, h.width, h.height);
    if (meta) *meta = h.meta;
    return flow;
}

}  // namespace tw
