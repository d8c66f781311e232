#pragma once

#include "tw/scene.hpp"
#include "tw/warp.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <string>

namespace tw {

// Times two ways of producing the same image stack over one scripted
// camera path: generating every frame, versus generating the key frame
// once and warping it into the rest. The generator is the deterministic
// stub plus an injected sleep standing in for diffusion latency, so the
// measured ratio isolates the pipeline structure from GPU specifics.
struct BenchOptions {
    TerrainSpec terrain;
    int width = 128;
    int height = 72;
    double fov_deg = 120.0;
    double near = 0.1;
    double far = 5.0;
    double camera_height = 0.35;
    double pitch_down_rad = 0.52;
    double speed_m_s = 0.5;
    double dt_s = 0.02;
    int stack_len = 7;
    double injected_gen_delay_ms = 780.0;
    int trials = 3;
    uint64_t seed = 0;
    std::string foreground_prompt = "mossy stone steps";
    std::string background_prompt = "overcast sky";
};

struct BenchReport {
    int stack_len = 0;
    int trials = 0;
    double injected_gen_delay_ms = 0.0;
    // Mean per-operation costs measured during the run (seconds).
    double mean_render_s = 0.0;  // depth + labels raycast, per frame
    double mean_gen_s = 0.0;     // conditioning build + injected delay + generation
    double mean_warp_s = 0.0;    // flow + warp + fill, per warped frame
    // Whole-run wall time per mode, summed over trials (seconds).
    double per_frame_mode_s = 0.0;
    double keyframe_mode_s = 0.0;
    double measured_speedup = 0.0;  // per_frame_mode_s / keyframe_mode_s
    double model_speedup = 0.0;     // speedup_model on the measured costs
};

nlohmann::json bench_report_to_json(const BenchReport& report);
std::string format_bench_table(const BenchReport& report);

// Runs both modes over identical trajectories, trials interleaved in a
// fixed order (per-frame then keyframe, each trial), and reports measured
// against modeled speedup.
BenchReport bench_speedup(const BenchOptions& opts = {});

}  // namespace tw
