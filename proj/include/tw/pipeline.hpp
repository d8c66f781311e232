#pragma once

#include "tw/broker.hpp"
#include "tw/generator.hpp"
#include "tw/scene.hpp"
#include "tw/store.hpp"
#include "tw/warp.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace tw {

// Everything one data-generation run needs: the world, the camera, the
// ego-motion script, the stack geometry, and the prompts painted onto the
// rendered regions.
struct PipelineConfig {
    TerrainSpec terrain;

    int width = 320;
    int height = 180;
    double fov_deg = 120.0;
    double near = 0.1;
    double far = 5.0;
    double camera_height = 0.35;
    double pitch_down_rad = 0.52;

    int stack_len = 7;          // frames per generated keyframe
    int timesteps = 600;        // max steps per trajectory
    int trajectories = 1000;    // rollouts per batch
    double dt_s = 0.02;
    double speed_min = 0.3;     // m/s, forward command range
    double speed_max = 0.8;

    uint64_t seed = 0;
    std::string task = "terrain";
    std::string foreground_prompt = "weathered granite steps, morning light";
    std::string background_prompt = "overcast sky above an old courtyard wall";

    double control_strength = 0.8;
    int diffusion_steps = 6;
    FillMode fill = FillMode::nearest_valid;

    void validate() const;  // throws naming the offending field
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json pipeline_config_to_json(const PipelineConfig& config);

// ceil(timesteps / stack_len): how many weave jobs (= stacks) a trajectory
// of that many steps produces. The last stack may be short.
int jobs_for_timesteps(int timesteps, int stack_len);

// One trajectory to unroll: sample the scripted ego-motion, upload the
// conditioning renders, and fan out one weave job per stack segment.
struct UnrollJobSpec {
    PipelineConfig config;  // terrain + camera + script parameters
    std::string trajectory_id;
    uint64_t trajectory_seed = 0;
};

std::string unroll_job_to_json(const UnrollJobSpec& spec);
UnrollJobSpec unroll_job_from_json(const std::string& payload);

// One stack to weave: generate the key frame, warp it across the segment,
// store the stack. Self-contained — carries the whole camera path of its
// segment so a weaver needs nothing but the broker message.
struct WeaveJobSpec {
    TerrainSpec terrain;
    CameraIntrinsics intrinsics;
    double near = 0.1;
    double far = 5.0;
    std::vector<Pose> poses;  // key pose first
    std::vector<double> timestamps_s;
    std::string task;
    std::string trajectory_id;
    int stack_index = 0;
    std::string foreground_prompt;
    std::string background_prompt;
    uint64_t seed = 0;  // generation seed for this stack
    double control_strength = 0.8;
    int steps = 6;
    FillMode fill = FillMode::nearest_valid;
};

std::string weave_job_to_json(const WeaveJobSpec& spec);
WeaveJobSpec weave_job_from_json(const std::string& payload);

// Scripts the trajectory and cuts it into per-stack weave jobs: one job
// per stack_len steps, the final one possibly short.
std::vector<WeaveJobSpec> plan_trajectory(const PipelineConfig& config,
                                          const std::string& trajectory_id,
                                          uint64_t trajectory_seed);

// Prompted regions for a rendered label image: terrain surfaces (ground +
// feature) get the foreground prompt, everything else (walls, sky) the
// background prompt. One region per label present, sorted by label.
std::vector<PromptRegion> regions_from_labels(const LabelImage& labels,
                                              const TerrainLabels& asset_labels,
                                              const std::string& foreground_prompt,
                                              const std::string& background_prompt);

// Runs one weave job: render, generate, warp, store. Returns where the
// stack landed. Deterministic for a deterministic generator, so retries
// land on the same key with the same bytes.
struct WeaveOutcome {
    std::string store_namespace;
    std::string digest;
    double hole_fraction = 0.0;  // holes over all warped frames, 0 for single-frame stacks
};

WeaveOutcome execute_weave(const WeaveJobSpec& spec, Generator& generator, Store& store);

// The same weave without the store step — render, generate, warp, return.
FrameStack weave_stack(const WeaveJobSpec& spec, Generator& generator);

// Where a simulated fault strikes a worker, if anywhere. A struck worker
// abandons the job without acking — exactly what a killed process looks
// like to the broker — and moves on as its own replacement.
enum class CrashPoint {
    none,
    before_work,  // job dequeued, worker dies before doing anything
    after_store,  // output stored, worker dies before the ack
};

struct WorkerOptions {
    double lease_s = 30.0;
    double idle_wait_s = 0.2;  // dequeue block per loop iteration
    std::function<bool()> should_stop;
    std::function<CrashPoint(const JobEnvelope&)> crash_plan;  // fault injection, tests only
};

struct WorkerStats {
    int jobs_executed = 0;  // work completed (store write done)
    int jobs_acked = 0;
    int jobs_failed = 0;   // threw; left for redelivery
    int jobs_crashed = 0;  // fault injection struck
    double hole_fraction_sum = 0.0;

    WorkerStats& operator+=(const WorkerStats& other);
};

// Loops dequeue → execute_weave → ack until should_stop. Failures are not
// acked; the broker redelivers or parks them.
WorkerStats weaver_worker(Broker& broker, Generator& generator, Store& store,
                          const std::string& queue, const std::string& worker_id,
                          const WorkerOptions& opts = {});

// Loops over unroll jobs: script the trajectory, render + upload the key
// conditioning (depth + labels) per segment, enqueue the segment's weave
// job, ack. Weave job ids are content digests, so a retried unroll job
// re-enqueues the same ids and the broker deduplicates.
WorkerStats unroll_worker(Broker& broker, Store& store, const std::string& unroll_queue,
                          const std::string& weave_queue, const std::string& worker_id,
                          const WorkerOptions& opts = {});

struct BatchOptions {
    int unroll_workers = 2;
    int weave_workers = 4;
    std::string unroll_queue = "unroll";
    std::string weave_queue = "weave";
    WorkerOptions worker;
    // One generator per weave worker thread; defaults to the stub.
    std::function<std::unique_ptr<Generator>()> generator_factory;
};

struct BatchReport {
    int trajectories = 0;
    int weave_jobs = 0;       // planned: trajectories x ceil(timesteps / stack_len)
    int stacks_stored = 0;    // stack directories in the store after the run
    double mean_hole_fraction = 0.0;
    double wall_time_s = 0.0;
    std::vector<std::string> parked_jobs;  // job ids out of attempts, either queue
    WorkerStats unroll_stats;
    WorkerStats weave_stats;
};

nlohmann::json batch_report_to_json(const BatchReport& report);

// Offline mode: enqueue one unroll job per trajectory, run the worker pool
// until both queues drain, report. Populates the queues exactly once;
// everything downstream is at-least-once with idempotent effects.
BatchReport run_offline_batch(const PipelineConfig& config, Broker& broker, Store& store,
                              const BatchOptions& opts = {});

// Request/reply over the broker. Each caller owns a private reply queue;
// replies are matched by correlation id, consumed exactly once, and
// discarded (acked) when stale or duplicated.
struct RpcReply {
    ImageRGB8 image;
    std::string request_digest;  // digest the weaver computed from what it received
    std::string correlation_id;
};

class RpcGenerateClient {
  public:
    RpcGenerateClient(Broker& broker, std::string request_queue, std::string caller_id);

    // Blocks until the correlated reply arrives or the deadline passes
    // (throws std::runtime_error on timeout; the caller may retry, which
    // issues a fresh correlation id).
    RpcReply call(const GenerationRequest& request, double deadline_s);

    const std::string& reply_queue() const { return reply_queue_; }

  private:
    Broker& broker_;
    std::string request_queue_;
    std::string caller_id_;
    std::string reply_queue_;
    uint64_t next_call_ = 0;
    std::vector<std::string> consumed_;  // correlation ids already answered
};

// Serving side of the RPC queue: dequeue a request, generate, reply to the
// caller's queue with the request digest, ack. Runs until should_stop.
WorkerStats rpc_weaver(Broker& broker, Generator& generator, const std::string& queue,
                       const std::string& worker_id, const WorkerOptions& opts = {});

struct OnpolicyOptions {
    std::string rpc_queue = "weave-rpc";
    std::string caller_id;  // must be unique per concurrent caller
    double rpc_deadline_s = 30.0;
};

struct OnpolicyReport {
    int trajectories = 0;
    int segments = 0;
    int stacks_stored = 0;
    std::vector<std::string> failed_segments;  // "<trajectory>/<stack index>": RPC gave up
    double wall_time_s = 0.0;
};

nlohmann::json onpolicy_report_to_json(const OnpolicyReport& report);

// On-policy mode: per stack segment, RPC the key frame out to a weaver,
// warp it across the rest of the segment locally, store the stack, move to
// the next segment. A timed-out segment is logged and skipped; the
// trajectory continues.
OnpolicyReport run_onpolicy_loop(const PipelineConfig& config, Broker& broker, Store& store,
                                 const OnpolicyOptions& opts = {});

}  // namespace tw
