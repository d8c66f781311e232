#include "tw/bench.hpp"

#include "tw/generator.hpp"
#include "tw/hashing.hpp"
#include "tw/pipeline.hpp"
#include "tw/trajectory.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <stdexcept>
#include <thread>

namespace tw {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct FrameInputs {
    Pose pose;
    double timestamp_s = 0.0;
    RenderResult render;
};

// Conditioning request for one rendered view, stub context attached.
GenerationRequest make_request(const BenchOptions& opts, const SceneGeometry& scene,
                               const CameraIntrinsics& K, const FrameInputs& frame,
                               uint64_t seed) {
    GenerationRequest req;
    req.disparity = normalize_disparity(frame.render.depth);
    req.regions = regions_from_labels(frame.render.labels, opts.terrain.labels,
                                      opts.foreground_prompt, opts.background_prompt);
    req.seed = seed;
    req.stub = StubContext{scene, frame.pose, K, opts.near, opts.far};
    return req;
}

}  // namespace

BenchReport bench_speedup(const BenchOptions& opts) {
    opts.terrain.validate();
    if (opts.stack_len < 1) throw std::invalid_argument("stack_len must be >= 1");
    if (opts.trials < 1) throw std::invalid_argument("trials must be >= 1");
    if (opts.injected_gen_delay_ms < 0.0) throw std::invalid_argument("delay must be >= 0");

    const SceneGeometry scene = build_terrain(opts.terrain);
    const CameraIntrinsics K = intrinsics_from_fov(opts.fov_deg, opts.width, opts.height);
    const auto delay = std::chrono::duration<double, std::milli>(opts.injected_gen_delay_ms);
    StubGenerator stub;

    BenchReport report;
    report.stack_len = opts.stack_len;
    report.trials = opts.trials;
    report.injected_gen_delay_ms = opts.injected_gen_delay_ms;

    double render_s = 0.0, gen_s = 0.0, warp_s = 0.0;
    int render_n = 0, gen_n = 0, warp_n = 0;

    for (int trial = 0; trial < opts.trials; ++trial) {
        // One scripted path per trial, identical for both modes.
        const uint64_t trial_seed = splitmix64(opts.seed ^ static_cast<uint64_t>(trial));
        const auto frames =
            scripted_walk(scene, opts.stack_len, opts.dt_s, trial_seed, opts.speed_m_s,
                          opts.speed_m_s, opts.camera_height, opts.pitch_down_rad);

        // Per-frame mode: every frame pays render + conditioning + delay +
        // generation.
        {
            const auto t0 = Clock::now();
            for (size_t i = 0; i < frames.size(); ++i) {
                const auto tr = Clock::now();
                FrameInputs frame{frames[i].pose, frames[i].timestamp_s,
                                  raycast(scene, K, frames[i].pose, opts.near, opts.far)};
                render_s += seconds_since(tr);
                ++render_n;

                const auto tg = Clock::now();
                const GenerationRequest req =
                    make_request(opts, scene, K, frame, splitmix64(trial_seed ^ i));
                std::this_thread::sleep_for(delay);
                (void)stub.generate(req);
                gen_s += seconds_since(tg);
                ++gen_n;
            }
            report.per_frame_mode_s += seconds_since(t0);
        }

        // Keyframe mode: one render + generation for the key, then a warp
        // per remaining frame.
        {
            const auto t0 = Clock::now();
            const auto tr = Clock::now();
            FrameInputs key{frames[0].pose, frames[0].timestamp_s,
                            raycast(scene, K, frames[0].pose, opts.near, opts.far)};
            render_s += seconds_since(tr);
            ++render_n;

            const GenerationRequest req =
                make_request(opts, scene, K, key, splitmix64(trial_seed ^ 0x6b657966ULL));
            std::this_thread::sleep_for(delay);
            const ImageRGB8 key_image = stub.generate(req);

            std::vector<TargetView> targets;
            for (size_t i = 1; i < frames.size(); ++i) {
                const auto tt = Clock::now();
                RenderResult r = raycast(scene, K, frames[i].pose, opts.near, opts.far);
                render_s += seconds_since(tt);
                ++render_n;
                targets.push_back(
                    TargetView{std::move(r.depth), frames[i].pose, frames[i].timestamp_s});
            }

            const auto tw0 = Clock::now();
            (void)assemble_stack(key_image, key.render.depth, key.pose, key.timestamp_s, targets,
                                 K);
            if (!targets.empty()) {
                warp_s += seconds_since(tw0);
                warp_n += static_cast<int>(targets.size());
            }
            report.keyframe_mode_s += seconds_since(t0);
        }
    }

    report.mean_render_s = render_n ? render_s / render_n : 0.0;
    report.mean_gen_s = gen_n ? gen_s / gen_n : 0.0;
    report.mean_warp_s = warp_n ? warp_s / warp_n : 0.0;
    report.measured_speedup = report.per_frame_mode_s / report.keyframe_mode_s;
    // The model's per-frame costs as this run saw them: a generated frame
    // pays render + generation, a warped one render + warp.
    report.model_speedup =
        speedup_model(opts.stack_len, report.mean_render_s + report.mean_gen_s,
                      report.mean_render_s + report.mean_warp_s);
    return report;
}

nlohmann::json bench_report_to_json(const BenchReport& report) {
    return {{"stack_len", report.stack_len},
            {"trials", report.trials},
            {"injected_gen_delay_ms", report.injected_gen_delay_ms},
            {"mean_render_s", report.mean_render_s},
            {"mean_gen_s", report.mean_gen_s},
            {"mean_warp_s", report.mean_warp_s},
            {"per_frame_mode_s", report.per_frame_mode_s},
            {"keyframe_mode_s", report.keyframe_mode_s},
            {"measured_speedup", report.measured_speedup},
            {"model_speedup", report.model_speedup}};
}

std::string format_bench_table(const BenchReport& report) {
    char buf[640];
    std::snprintf(buf, sizeof(buf),
                  "stack length        %10d\n"
                  "trials              %10d\n"
                  "injected delay      %10.1f ms\n"
                  "mean render         %10.3f ms\n"
                  "mean generation     %10.3f ms\n"
                  "mean warp           %10.3f ms\n"
                  "per-frame mode      %10.3f s\n"
                  "keyframe mode       %10.3f s\n"
                  "measured speedup    %10.2fx\n"
                  "modeled speedup     %10.2fx\n",
                  report.stack_len, report.trials, report.injected_gen_delay_ms,
                  report.mean_render_s * 1e3, report.mean_gen_s * 1e3, report.mean_warp_s * 1e3,
                  report.per_frame_mode_s, report.keyframe_mode_s, report.measured_speedup,
                  report.model_speedup);
    return buf;
}

}  // namespace tw
