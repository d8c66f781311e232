#include "tw/pipeline.hpp"

#include "tw/digest.hpp"
#include "tw/hashing.hpp"
#include "tw/raster.hpp"
#include "tw/trajectory.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <stdexcept>
#include <thread>

namespace tw {

namespace {

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

nlohmann::json pose_to_json(const Pose& pose) {
    std::vector<double> rot(9);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rot[static_cast<size_t>(r) * 3 + c] = pose.rotation(r, c);
    return {{"rotation", rot},
            {"translation", {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

Pose pose_from_json(const nlohmann::json& j) {
    Pose pose;
    const auto rot = j.at("rotation").get<std::vector<double>>();
    if (rot.size() != 9) throw std::invalid_argument("pose rotation must have 9 entries");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) pose.rotation(r, c) = rot[static_cast<size_t>(r) * 3 + c];
    const auto& t = j.at("translation");
    pose.translation = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
    return pose;
}

nlohmann::json intrinsics_to_json(const CameraIntrinsics& K) {
    return {{"fx", K.fx},       {"fy", K.fy},           {"cx", K.cx},
            {"cy", K.cy},       {"width", K.width},     {"height", K.height}};
}

CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
    CameraIntrinsics K;
    K.fx = j.at("fx").get<double>();
    K.fy = j.at("fy").get<double>();
    K.cx = j.at("cx").get<double>();
    K.cy = j.at("cy").get<double>();
    K.width = j.at("width").get<int>();
    K.height = j.at("height").get<int>();
    return K;
}

}  // namespace

void PipelineConfig::validate() const {
    terrain.validate();
    if (width < 1 || height < 1) throw std::invalid_argument("invalid config: resolution");
    if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw std::invalid_argument("invalid config: fov_deg");
    if (!(near > 0.0 && near < far)) throw std::invalid_argument("invalid config: near/far");
    if (camera_height <= 0.0) throw std::invalid_argument("invalid config: camera_height");
    if (stack_len < 1) throw std::invalid_argument("invalid config: stack_len");
    if (timesteps < 0) throw std::invalid_argument("invalid config: timesteps");
    if (trajectories < 0) throw std::invalid_argument("invalid config: trajectories");
    if (dt_s <= 0.0) throw std::invalid_argument("invalid config: dt_s");
    if (!(speed_min > 0.0 && speed_min <= speed_max)) {
        throw std::invalid_argument("invalid config: speed range");
    }
    if (task.empty()) throw std::invalid_argument("invalid config: task");
    if (!(control_strength >= 0.0 && control_strength <= 1.0)) {
        throw std::invalid_argument("invalid config: control_strength");
    }
    if (diffusion_steps < 1) throw std::invalid_argument("invalid config: diffusion_steps");
}

nlohmann::json pipeline_config_to_json(const PipelineConfig& config) {
    return {{"terrain", terrain_spec_to_json(config.terrain)},
            {"width", config.width},
            {"height", config.height},
            {"fov_deg", config.fov_deg},
            {"near", config.near},
            {"far", config.far},
            {"camera_height", config.camera_height},
            {"pitch_down_rad", config.pitch_down_rad},
            {"stack_len", config.stack_len},
            {"timesteps", config.timesteps},
            {"trajectories", config.trajectories},
            {"dt_s", config.dt_s},
            {"speed_min", config.speed_min},
            {"speed_max", config.speed_max},
            {"seed", config.seed},
            {"task", config.task},
            {"foreground_prompt", config.foreground_prompt},
            {"background_prompt", config.background_prompt},
            {"control_strength", config.control_strength},
            {"diffusion_steps", config.diffusion_steps},
            {"fill", to_string(config.fill)}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig config;
    if (j.contains("terrain")) config.terrain = terrain_spec_from_json(j.at("terrain"));
    config.width = j.value("width", config.width);
    config.height = j.value("height", config.height);
    config.fov_deg = j.value("fov_deg", config.fov_deg);
    config.near = j.value("near", config.near);
    config.far = j.value("far", config.far);
    config.camera_height = j.value("camera_height", config.camera_height);
    config.pitch_down_rad = j.value("pitch_down_rad", config.pitch_down_rad);
    config.stack_len = j.value("stack_len", config.stack_len);
    config.timesteps = j.value("timesteps", config.timesteps);
    config.trajectories = j.value("trajectories", config.trajectories);
    config.dt_s = j.value("dt_s", config.dt_s);
    config.speed_min = j.value("speed_min", config.speed_min);
    config.speed_max = j.value("speed_max", config.speed_max);
    config.seed = j.value("seed", config.seed);
    config.task = j.value("task", config.task);
    config.foreground_prompt = j.value("foreground_prompt", config.foreground_prompt);
    config.background_prompt = j.value("background_prompt", config.background_prompt);
    config.control_strength = j.value("control_strength", config.control_strength);
    config.diffusion_steps = j.value("diffusion_steps", config.diffusion_steps);
    if (j.contains("fill")) config.fill = fill_mode_from_string(j.at("fill").get<std::string>());
    config.validate();
    return config;
}

int jobs_for_timesteps(int timesteps, int stack_len) {
    if (timesteps < 0) throw std::invalid_argument("timesteps must be >= 0");
    if (stack_len < 1) throw std::invalid_argument("stack_len must be >= 1");
    return (timesteps + stack_len - 1) / stack_len;
}

std::string unroll_job_to_json(const UnrollJobSpec& spec) {
    const nlohmann::json j = {{"config", pipeline_config_to_json(spec.config)},
                              {"trajectory_id", spec.trajectory_id},
                              {"trajectory_seed", spec.trajectory_seed}};
    return j.dump();
}

UnrollJobSpec unroll_job_from_json(const std::string& payload) {
    const nlohmann::json j = nlohmann::json::parse(payload);
    UnrollJobSpec spec;
    spec.config = pipeline_config_from_json(j.at("config"));
    spec.trajectory_id = j.at("trajectory_id").get<std::string>();
    spec.trajectory_seed = j.at("trajectory_seed").get<uint64_t>();
    return spec;
}

std::string weave_job_to_json(const WeaveJobSpec& spec) {
    nlohmann::json poses = nlohmann::json::array();
    for (const Pose& pose : spec.poses) poses.push_back(pose_to_json(pose));
    const nlohmann::json j = {{"terrain", terrain_spec_to_json(spec.terrain)},
                              {"intrinsics", intrinsics_to_json(spec.intrinsics)},
                              {"near", spec.near},
                              {"far", spec.far},
                              {"poses", std::move(poses)},
                              {"timestamps_s", spec.timestamps_s},
                              {"task", spec.task},
                              {"trajectory_id", spec.trajectory_id},
                              {"stack_index", spec.stack_index},
                              {"foreground_prompt", spec.foreground_prompt},
                              {"background_prompt", spec.background_prompt},
                              {"seed", spec.seed},
                              {"control_strength", spec.control_strength},
                              {"steps", spec.steps},
                              {"fill", to_string(spec.fill)}};
    return j.dump();
}

WeaveJobSpec weave_job_from_json(const std::string& payload) {
    const nlohmann::json j = nlohmann::json::parse(payload);
    WeaveJobSpec spec;
    spec.terrain = terrain_spec_from_json(j.at("terrain"));
    spec.intrinsics = intrinsics_from_json(j.at("intrinsics"));
    spec.near = j.at("near").get<double>();
    spec.far = j.at("far").get<double>();
    for (const auto& p : j.at("poses")) spec.poses.push_back(pose_from_json(p));
    spec.timestamps_s = j.at("timestamps_s").get<std::vector<double>>();
    spec.task = j.at("task").get<std::string>();
    spec.trajectory_id = j.at("trajectory_id").get<std::string>();
    spec.stack_index = j.at("stack_index").get<int>();
    spec.foreground_prompt = j.at("foreground_prompt").get<std::string>();
    spec.background_prompt = j.at("background_prompt").get<std::string>();
    spec.seed = j.at("seed").get<uint64_t>();
    spec.control_strength = j.at("control_strength").get<double>();
    spec.steps = j.at("steps").get<int>();
    spec.fill = fill_mode_from_string(j.at("fill").get<std::string>());
    if (spec.poses.empty()) throw std::invalid_argument("weave job has no poses");
    if (spec.poses.size() != spec.timestamps_s.size()) {
        throw std::invalid_argument("weave job pose/timestamp count mismatch");
    }
    return spec;
}

std::vector<PromptRegion> regions_from_labels(const LabelImage& labels,
                                              const TerrainLabels& asset_labels,
                                              const std::string& foreground_prompt,
                                              const std::string& background_prompt) {
    std::vector<PromptRegion> regions;
    for (auto& [label, mask] : binary_masks(labels)) {
        PromptRegion region;
        region.label = label;
        region.prompt = (label == asset_labels.ground || label == asset_labels.feature)
                            ? foreground_prompt
                            : background_prompt;
        region.mask = std::move(mask);
        regions.push_back(std::move(region));
    }
    return regions;
}

namespace {

// Per-stack generation seed: distinct per segment, stable per trajectory.
uint64_t stack_seed(uint64_t trajectory_seed, int stack_index) {
    return splitmix64(trajectory_seed ^
                      (0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(stack_index + 1)));
}

GenerationRequest build_weave_request(const WeaveJobSpec& spec, const SceneGeometry& scene,
                                      const RenderResult& key) {
    GenerationRequest req;
    req.disparity = normalize_disparity(key.depth);
    req.regions = regions_from_labels(key.labels, spec.terrain.labels, spec.foreground_prompt,
                                      spec.background_prompt);
    req.control_strength = spec.control_strength;
    req.steps = spec.steps;
    req.seed = spec.seed;
    req.stub = StubContext{scene, spec.poses[0], spec.intrinsics, spec.near, spec.far};
    return req;
}

FrameStack build_weave_stack(const WeaveJobSpec& spec, const SceneGeometry& scene,
                             const RenderResult& key, const ImageRGB8& key_image) {
    std::vector<TargetView> targets;
    for (size_t i = 1; i < spec.poses.size(); ++i) {
        RenderResult r = raycast(scene, spec.intrinsics, spec.poses[i], spec.near, spec.far);
        targets.push_back(TargetView{std::move(r.depth), spec.poses[i], spec.timestamps_s[i]});
    }

    StackOptions stack_opts;
    stack_opts.fill = spec.fill;
    FrameStack stack = assemble_stack(key_image, key.depth, spec.poses[0], spec.timestamps_s[0],
                                      targets, spec.intrinsics, stack_opts);
    stack.prompt = spec.foreground_prompt;
    stack.seed = spec.seed;
    stack.provenance["task"] = spec.task;
    stack.provenance["trajectory"] = spec.trajectory_id;
    stack.provenance["stack_index"] = std::to_string(spec.stack_index);
    stack.provenance["background_prompt"] = spec.background_prompt;
    stack.provenance["terrain"] = terrain_spec_to_json(spec.terrain).dump();
    return stack;
}

double stack_hole_fraction(const FrameStack& stack) {
    size_t hole_pixels = 0;
    for (size_t i = 1; i < stack.holes.size(); ++i) hole_pixels += stack.holes[i].count();
    const size_t warped = stack.holes.size() > 1 ? stack.holes.size() - 1 : 0;
    if (warped == 0) return 0.0;
    const double denom =
        static_cast<double>(stack.intrinsics.width) * stack.intrinsics.height * warped;
    return static_cast<double>(hole_pixels) / denom;
}

WeaveOutcome finish_weave(const WeaveJobSpec& spec, const SceneGeometry& scene,
                          const RenderResult& key, const ImageRGB8& key_image, Store& store) {
    const FrameStack stack = build_weave_stack(spec, scene, key, key_image);

    WeaveOutcome outcome;
    outcome.store_namespace = spec.task + "/" + spec.trajectory_id;
    outcome.hole_fraction = stack_hole_fraction(stack);

    const auto staged = store.make_staging_dir();
    save_stack(staged, stack);
    outcome.digest = sha256_tree(staged);
    store.put_dir(outcome.store_namespace, outcome.digest, staged);
    return outcome;
}

}  // namespace

FrameStack weave_stack(const WeaveJobSpec& spec, Generator& generator) {
    spec.terrain.validate();
    if (spec.poses.empty()) throw std::invalid_argument("weave job has no poses");
    const SceneGeometry scene = build_terrain(spec.terrain);
    const RenderResult key = raycast(scene, spec.intrinsics, spec.poses[0], spec.near, spec.far);
    const GenerationRequest request = build_weave_request(spec, scene, key);
    const ImageRGB8 key_image = generator.generate(request);
    return build_weave_stack(spec, scene, key, key_image);
}

WeaveOutcome execute_weave(const WeaveJobSpec& spec, Generator& generator, Store& store) {
    spec.terrain.validate();
    if (spec.poses.empty()) throw std::invalid_argument("weave job has no poses");
    const SceneGeometry scene = build_terrain(spec.terrain);
    const RenderResult key = raycast(scene, spec.intrinsics, spec.poses[0], spec.near, spec.far);
    const GenerationRequest request = build_weave_request(spec, scene, key);
    const ImageRGB8 key_image = generator.generate(request);
    return finish_weave(spec, scene, key, key_image, store);
}

WorkerStats& WorkerStats::operator+=(const WorkerStats& other) {
    jobs_executed += other.jobs_executed;
    jobs_acked += other.jobs_acked;
    jobs_failed += other.jobs_failed;
    jobs_crashed += other.jobs_crashed;
    hole_fraction_sum += other.hole_fraction_sum;
    return *this;
}

namespace {

// Shared worker skeleton: dequeue, maybe crash, handle, maybe crash, ack.
// The handler returns the job's hole fraction (0 when not applicable) and
// throws to leave the job unacked for redelivery.
WorkerStats run_worker_loop(Broker& broker, const std::string& queue, const std::string& worker_id,
                            const WorkerOptions& opts,
                            const std::function<double(const JobEnvelope&)>& handle) {
    WorkerStats stats;
    while (!(opts.should_stop && opts.should_stop())) {
        std::optional<JobEnvelope> job;
        try {
            job = broker.dequeue(queue, worker_id, opts.lease_s, opts.idle_wait_s);
        } catch (const std::exception& e) {
            std::fprintf(stderr, "worker %s: dequeue failed: %s\n", worker_id.c_str(), e.what());
            std::this_thread::sleep_for(std::chrono::duration<double>(opts.idle_wait_s));
            continue;
        }
        if (!job) continue;

        const CrashPoint crash =
            opts.crash_plan ? opts.crash_plan(*job) : CrashPoint::none;
        if (crash == CrashPoint::before_work) {
            ++stats.jobs_crashed;
            continue;  // vanish; the lease expires and the job comes back
        }
        try {
            stats.hole_fraction_sum += handle(*job);
            ++stats.jobs_executed;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "worker %s: job %s attempt %d failed: %s\n", worker_id.c_str(),
                         job->job_id.c_str(), job->attempt, e.what());
            ++stats.jobs_failed;
            continue;
        }
        if (crash == CrashPoint::after_store) {
            ++stats.jobs_crashed;
            continue;  // work done but never acked — a peer will redo it
        }
        broker.ack(queue, job->job_id);
        ++stats.jobs_acked;
    }
    return stats;
}

std::vector<WeaveJobSpec> plan_trajectory_segments(const PipelineConfig& config,
                                                   const std::string& trajectory_id,
                                                   uint64_t trajectory_seed,
                                                   const SceneGeometry& scene,
                                                   const CameraIntrinsics& K) {
    const auto frames =
        scripted_walk(scene, config.timesteps, config.dt_s, trajectory_seed, config.speed_min,
                      config.speed_max, config.camera_height, config.pitch_down_rad);
    const int n_jobs = jobs_for_timesteps(static_cast<int>(frames.size()), config.stack_len);

    std::vector<WeaveJobSpec> jobs;
    for (int j = 0; j < n_jobs; ++j) {
        WeaveJobSpec spec;
        spec.terrain = config.terrain;
        spec.intrinsics = K;
        spec.near = config.near;
        spec.far = config.far;
        const size_t begin = static_cast<size_t>(j) * config.stack_len;
        const size_t end = std::min(frames.size(), begin + config.stack_len);
        for (size_t i = begin; i < end; ++i) {
            spec.poses.push_back(frames[i].pose);
            spec.timestamps_s.push_back(frames[i].timestamp_s);
        }
        spec.task = config.task;
        spec.trajectory_id = trajectory_id;
        spec.stack_index = j;
        spec.foreground_prompt = config.foreground_prompt;
        spec.background_prompt = config.background_prompt;
        spec.seed = stack_seed(trajectory_seed, j);
        spec.control_strength = config.control_strength;
        spec.steps = config.diffusion_steps;
        spec.fill = config.fill;
        jobs.push_back(std::move(spec));
    }
    return jobs;
}

}  // namespace

std::vector<WeaveJobSpec> plan_trajectory(const PipelineConfig& config,
                                          const std::string& trajectory_id,
                                          uint64_t trajectory_seed) {
    config.validate();
    const SceneGeometry scene = build_terrain(config.terrain);
    const CameraIntrinsics K = intrinsics_from_fov(config.fov_deg, config.width, config.height);
    return plan_trajectory_segments(config, trajectory_id, trajectory_seed, scene, K);
}

WorkerStats weaver_worker(Broker& broker, Generator& generator, Store& store,
                          const std::string& queue, const std::string& worker_id,
                          const WorkerOptions& opts) {
    return run_worker_loop(broker, queue, worker_id, opts, [&](const JobEnvelope& job) {
        const WeaveJobSpec spec = weave_job_from_json(job.payload);
        return execute_weave(spec, generator, store).hole_fraction;
    });
}

WorkerStats unroll_worker(Broker& broker, Store& store, const std::string& unroll_queue,
                          const std::string& weave_queue, const std::string& worker_id,
                          const WorkerOptions& opts) {
    return run_worker_loop(broker, unroll_queue, worker_id, opts, [&](const JobEnvelope& job) {
        const UnrollJobSpec unroll = unroll_job_from_json(job.payload);
        const PipelineConfig& config = unroll.config;
        const SceneGeometry scene = build_terrain(config.terrain);
        const CameraIntrinsics K = intrinsics_from_fov(config.fov_deg, config.width, config.height);

        for (const WeaveJobSpec& spec : plan_trajectory_segments(
                 config, unroll.trajectory_id, unroll.trajectory_seed, scene, K)) {
            // Conditioning renders for the keyframe, stored for inspection
            // and provenance. Weave jobs re-render rather than read these —
            // the raycast is cheap and keeps the job self-contained.
            const RenderResult key = raycast(scene, K, spec.poses[0], spec.near, spec.far);
            const auto staged = store.make_staging_dir();
            save_depth(staged / "depth.raster", key.depth, spec.poses[0], K);
            save_labels(staged / "labels.raster", key.labels, spec.poses[0], K);
            const std::string digest = sha256_tree(staged);
            store.put_dir(spec.task + "/" + spec.trajectory_id + "/conditioning", digest, staged);

            JobEnvelope weave;
            weave.kind = "weave";
            weave.payload = weave_job_to_json(spec);
            weave.job_id = sha256_hex(weave.payload);
            broker.enqueue(weave_queue, weave);
        }
        return 0.0;
    });
}

namespace {

size_t count_stacks(const Store& store, const std::string& task) {
    const auto root = store.root() / task;
    if (!std::filesystem::exists(root)) return 0;
    size_t count = 0;
    for (auto it = std::filesystem::recursive_directory_iterator(root);
         it != std::filesystem::recursive_directory_iterator(); ++it) {
        if (it->is_regular_file() && it->path().filename() == "manifest.json") ++count;
    }
    return count;
}

}  // namespace

nlohmann::json batch_report_to_json(const BatchReport& report) {
    return {{"trajectories", report.trajectories},
            {"weave_jobs", report.weave_jobs},
            {"stacks_stored", report.stacks_stored},
            {"mean_hole_fraction", report.mean_hole_fraction},
            {"wall_time_s", report.wall_time_s},
            {"parked_jobs", report.parked_jobs},
            {"unroll", {{"executed", report.unroll_stats.jobs_executed},
                        {"acked", report.unroll_stats.jobs_acked},
                        {"failed", report.unroll_stats.jobs_failed},
                        {"crashed", report.unroll_stats.jobs_crashed}}},
            {"weave", {{"executed", report.weave_stats.jobs_executed},
                       {"acked", report.weave_stats.jobs_acked},
                       {"failed", report.weave_stats.jobs_failed},
                       {"crashed", report.weave_stats.jobs_crashed}}}};
}

BatchReport run_offline_batch(const PipelineConfig& config, Broker& broker, Store& store,
                              const BatchOptions& opts) {
    config.validate();
    if (opts.unroll_workers < 1 || opts.weave_workers < 1) {
        throw std::invalid_argument("worker counts must be >= 1");
    }
    const double t0 = now_s();

    // Populate the unroll queue once. Job ids are payload digests, so a
    // rerun of the same batch enqueues nothing new.
    for (int i = 0; i < config.trajectories; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "traj-%06d", i);
        UnrollJobSpec spec;
        spec.config = config;
        spec.trajectory_id = name;
        spec.trajectory_seed = splitmix64(config.seed ^ fnv1a64(name));

        JobEnvelope job;
        job.kind = "unroll";
        job.payload = unroll_job_to_json(spec);
        job.job_id = sha256_hex(job.payload);
        broker.enqueue(opts.unroll_queue, job);
    }

    std::atomic<bool> stop{false};
    WorkerOptions worker_opts = opts.worker;
    const auto caller_stop = opts.worker.should_stop;
    worker_opts.should_stop = [&stop, caller_stop] {
        return stop.load() || (caller_stop && caller_stop());
    };

    std::vector<WorkerStats> unroll_stats(opts.unroll_workers);
    std::vector<WorkerStats> weave_stats(opts.weave_workers);
    std::vector<std::thread> threads;
    for (int i = 0; i < opts.unroll_workers; ++i) {
        threads.emplace_back([&, i] {
            unroll_stats[i] = unroll_worker(broker, store, opts.unroll_queue, opts.weave_queue,
                                            "unroll-" + std::to_string(i), worker_opts);
        });
    }
    for (int i = 0; i < opts.weave_workers; ++i) {
        threads.emplace_back([&, i] {
            auto generator = opts.generator_factory ? opts.generator_factory()
                                                    : std::make_unique<StubGenerator>();
            weave_stats[i] = weaver_worker(broker, *generator, store, opts.weave_queue,
                                           "weaver-" + std::to_string(i), worker_opts);
        });
    }

    // Drain order matters: an unroll ack implies its weave jobs are already
    // enqueued, so once the unroll queue is empty the weave queue can only
    // shrink.
    while (broker.pending(opts.unroll_queue) > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    while (broker.pending(opts.weave_queue) > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    stop.store(true);
    for (std::thread& t : threads) t.join();

    BatchReport report;
    report.trajectories = config.trajectories;
    report.weave_jobs = config.trajectories * jobs_for_timesteps(config.timesteps, config.stack_len);
    for (const auto& s : unroll_stats) report.unroll_stats += s;
    for (const auto& s : weave_stats) report.weave_stats += s;
    report.stacks_stored = static_cast<int>(count_stacks(store, config.task));
    report.mean_hole_fraction =
        report.weave_stats.jobs_executed
            ? report.weave_stats.hole_fraction_sum / report.weave_stats.jobs_executed
            : 0.0;
    for (const JobEnvelope& job : broker.parked(opts.unroll_queue)) {
        report.parked_jobs.push_back(job.job_id);
    }
    for (const JobEnvelope& job : broker.parked(opts.weave_queue)) {
        report.parked_jobs.push_back(job.job_id);
    }
    report.wall_time_s = now_s() - t0;
    return report;
}

RpcGenerateClient::RpcGenerateClient(Broker& broker, std::string request_queue,
                                     std::string caller_id)
    : broker_(broker),
      request_queue_(std::move(request_queue)),
      caller_id_(std::move(caller_id)),
      reply_queue_("rpc-reply-" + caller_id_) {
    if (caller_id_.empty()) throw std::invalid_argument("rpc caller id must not be empty");
}

RpcReply RpcGenerateClient::call(const GenerationRequest& request, double deadline_s) {
    const std::string corr = caller_id_ + "-" + std::to_string(next_call_++);

    nlohmann::json payload = {{"request", request_to_wire(request)}};
    if (request.stub) payload["stub_context"] = stub_context_to_json(*request.stub);

    JobEnvelope job;
    job.job_id = corr;
    job.kind = "weave-rpc";
    job.payload = payload.dump();
    job.correlation_id = corr;
    job.reply_to = reply_queue_;
    broker_.enqueue(request_queue_, job);

    const double deadline = now_s() + deadline_s;
    for (;;) {
        const double remaining = deadline - now_s();
        if (remaining <= 0.0) break;
        auto reply = broker_.dequeue(reply_queue_, caller_id_, /*lease_s=*/30.0,
                                     std::min(remaining, 0.25));
        if (!reply) continue;
        // Consume it whatever it is: a stale reply (timed-out or duplicated
        // correlation) must not linger for the next call to trip over.
        broker_.ack(reply_queue_, reply->job_id);
        if (reply->correlation_id != corr) continue;

        const nlohmann::json body = nlohmann::json::parse(reply->payload);
        RpcReply out;
        out.image = image_from_wire(body.at("image"));
        out.request_digest = body.at("request_digest").get<std::string>();
        out.correlation_id = reply->correlation_id;
        consumed_.push_back(corr);
        return out;
    }
    throw std::runtime_error("rpc generate timed out after " + std::to_string(deadline_s) +
                             "s (correlation " + corr + ")");
}

WorkerStats rpc_weaver(Broker& broker, Generator& generator, const std::string& queue,
                       const std::string& worker_id, const WorkerOptions& opts) {
    return run_worker_loop(broker, queue, worker_id, opts, [&](const JobEnvelope& job) {
        if (job.reply_to.empty()) throw std::invalid_argument("rpc job without reply_to");
        const nlohmann::json body = nlohmann::json::parse(job.payload);
        GenerationRequest request = request_from_wire(body.at("request"));
        if (body.contains("stub_context")) {
            request.stub = stub_context_from_json(body.at("stub_context"));
        }
        const ImageRGB8 image = generator.generate(request);

        JobEnvelope reply;
        // Reply id derives from the correlation id: if a redelivered request
        // is answered twice, the second enqueue deduplicates to a no-op.
        reply.job_id = job.correlation_id + "-reply";
        reply.kind = "weave-reply";
        reply.correlation_id = job.correlation_id;
        reply.payload = nlohmann::json{{"correlation_id", job.correlation_id},
                                       {"request_digest", request_digest(request)},
                                       {"image", image_to_wire(image)}}
                            .dump();
        broker.enqueue(job.reply_to, reply);
        return 0.0;
    });
}

nlohmann::json onpolicy_report_to_json(const OnpolicyReport& report) {
    return {{"trajectories", report.trajectories},
            {"segments", report.segments},
            {"stacks_stored", report.stacks_stored},
            {"failed_segments", report.failed_segments},
            {"wall_time_s", report.wall_time_s}};
}

OnpolicyReport run_onpolicy_loop(const PipelineConfig& config, Broker& broker, Store& store,
                                 const OnpolicyOptions& opts) {
    config.validate();
    const double t0 = now_s();

    std::string caller_id = opts.caller_id;
    if (caller_id.empty()) {
        char name[32];
        std::snprintf(name, sizeof(name), "onpolicy-%08llx",
                      static_cast<unsigned long long>(
                          splitmix64(static_cast<uint64_t>(now_s() * 1e6) ^ config.seed)));
        caller_id = name;
    }
    RpcGenerateClient client(broker, opts.rpc_queue, caller_id);

    const SceneGeometry scene = build_terrain(config.terrain);
    const CameraIntrinsics K = intrinsics_from_fov(config.fov_deg, config.width, config.height);

    OnpolicyReport report;
    report.trajectories = config.trajectories;
    for (int i = 0; i < config.trajectories; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "traj-%06d", i);
        const uint64_t trajectory_seed = splitmix64(config.seed ^ fnv1a64(name));

        for (const WeaveJobSpec& spec :
             plan_trajectory_segments(config, name, trajectory_seed, scene, K)) {
            ++report.segments;
            const std::string segment_name =
                std::string(name) + "/" + std::to_string(spec.stack_index);

            const RenderResult key = raycast(scene, K, spec.poses[0], spec.near, spec.far);
            const GenerationRequest request = build_weave_request(spec, scene, key);
            RpcReply reply;
            try {
                reply = client.call(request, opts.rpc_deadline_s);
            } catch (const std::exception& e) {
                std::fprintf(stderr, "onpolicy %s: segment %s: %s\n", caller_id.c_str(),
                             segment_name.c_str(), e.what());
                report.failed_segments.push_back(segment_name);
                continue;
            }
            if (reply.request_digest != request_digest(request)) {
                std::fprintf(stderr, "onpolicy %s: segment %s: reply digest mismatch\n",
                             caller_id.c_str(), segment_name.c_str());
                report.failed_segments.push_back(segment_name);
                continue;
            }
            finish_weave(spec, scene, key, reply.image, store);
            ++report.stacks_stored;
        }
    }
    report.wall_time_s = now_s() - t0;
    return report;
}

}  // namespace tw
