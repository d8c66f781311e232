#pragma once

#include "tw/camera.hpp"
#include "tw/flow.hpp"
#include "tw/scene.hpp"

#include <filesystem>

namespace tw {

// Small binary container for rendered rasters. Common 168-byte header,
// little-endian throughout:
//
//   magic     4 bytes   "TWDR" depth / "TWLB" labels / "TWFL" flow
//   version   u32       currently 1
//   width     u32
//   height    u32
//   near      f64       clip range (zero for labels)
//   far       f64
//   pose      12 x f64  camera-to-world, R row-major then t
//   K         6 x f64   fx fy cx cy width height
//
// followed by the payload:
//   depth   width*height f32 z values
//   labels  width*height u8
//   flow    width*height interleaved (du, dv) f32 pairs, then the validity
//           mask as a packed bit plane (row-major, LSB-first, row-padded)
//
// For flow files the pose slot holds the source view's pose.

struct RasterMeta {
    Pose pose;
    CameraIntrinsics intrinsics;
};

void save_depth(const std::filesystem::path& path, const DepthMap& depth, const Pose& pose,
                const CameraIntrinsics& K);
DepthMap load_depth(const std::filesystem::path& path, RasterMeta* meta = nullptr);

void save_labels(const std::filesystem::path& path, const LabelImage& labels, const Pose& pose,
                 const CameraIntrinsics& K);
LabelImage load_labels(const std::filesystem::path& path, RasterMeta* meta = nullptr);

void save_flow(const std::filesystem::path& path, const FlowField& flow, const Pose& src_pose,
               const CameraIntrinsics& K);
FlowField load_flow(const std::filesystem::path& path, RasterMeta* meta = nullptr);

}  // namespace tw
