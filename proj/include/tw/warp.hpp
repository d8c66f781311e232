#pragma once

#include "tw/camera.hpp"
#include "tw/flow.hpp"
#include "tw/image.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tw {

struct WarpResult {
    ImageRGB8 image;
    Mask holes;  // 1 where the target view has no valid correspondence in the key frame
};

// Backward-warps the key frame into the target view: every target pixel is
// reprojected through the target depth into the key view and bilinearly
// sampled there. Pixels the key view does not see (disocclusions,
// out-of-frame) become holes.
WarpResult warp_frame(const ImageRGB8& key_image, const DepthMap& key_depth, const Pose& key_pose,
                      const DepthMap& target_depth, const Pose& target_pose,
                      const CameraIntrinsics& K, const FlowOptions& opts = {});

enum class FillMode {
    nearest_valid,  // copy the nearest non-hole pixel (Euclidean, deterministic tie-break)
    mark,           // paint holes magenta for inspection
};

FillMode fill_mode_from_string(const std::string& name);
std::string to_string(FillMode mode);

// Fills hole pixels in place per the mode. An image that is entirely holes
// is returned unchanged (there is nothing to copy from).
void fill_holes(ImageRGB8& image, const Mask& holes, FillMode mode);

// A short clip anchored on one generated key frame: frames[0] is the key
// image untouched, frames[i>0] are its warps into the later views, holes
// filled per the fill mode. The unfilled hole masks ride along.
struct FrameStack {
    std::vector<ImageRGB8> frames;
    std::vector<Mask> holes;  // holes[0] is all zero
    std::vector<Pose> poses;
    std::vector<double> timestamps_s;
    CameraIntrinsics intrinsics;
    std::string prompt;
    uint64_t seed = 0;
    // Free-form origin info (scene, trajectory id, stack index, ...).
    std::map<std::string, std::string> provenance;
};

struct TargetView {
    DepthMap depth;
    Pose pose;
    double timestamp_s = 0.0;
};

struct StackOptions {
    FillMode fill = FillMode::nearest_valid;
    FlowOptions flow;
};

FrameStack assemble_stack(const ImageRGB8& key_image, const DepthMap& key_depth,
                          const Pose& key_pose, double key_timestamp_s,
                          const std::vector<TargetView>& targets, const CameraIntrinsics& K,
                          const StackOptions& opts = {});

// Directory layout: frame_00.png .. frame_NN.png, holes_00.png .., and
// manifest.json carrying poses, timestamps, intrinsics, prompt and seed.
void save_stack(const std::filesystem::path& dir, const FrameStack& stack);
FrameStack load_stack(const std::filesystem::path& dir);

// Predicted wall-clock speedup of generating one key frame and warping the
// rest of a stack, versus generating every frame: both produce stack_len
// frames, one pays t_gen once plus (stack_len - 1) warps.
double speedup_model(int stack_len, double t_gen_s, double t_warp_s);

}  // namespace tw
