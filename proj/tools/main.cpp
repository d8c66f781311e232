// Command-line front end: scene rendering, stack weaving, prompt pool
// management, the distributed pipeline modes, the speedup benchmark, and
// rollout-log metrics.

#include "tw/bench.hpp"
#include "tw/broker.hpp"
#include "tw/generator.hpp"
#include "tw/metrics.hpp"
#include "tw/pipeline.hpp"
#include "tw/png_io.hpp"
#include "tw/prompts.hpp"
#include "tw/raster.hpp"
#include "tw/store.hpp"
#include "tw/tcp_broker.hpp"
#include "tw/trajectory.hpp"
#include "tw/hashing.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted.store(true); }

std::string env_or(const char* name, const std::string& fallback = "") {
    const char* value = std::getenv(name);
    return value ? value : fallback;
}

tw::PipelineConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    return tw::pipeline_config_from_json(nlohmann::json::parse(in));
}

// Each worker thread gets its own broker connection; the line protocol is
// serialized per connection, so sharing one would make workers take turns.
std::unique_ptr<tw::Broker> connect_broker(const std::string& address) {
    return std::make_unique<tw::TcpBrokerClient>(address);
}

std::unique_ptr<tw::Generator> make_generator(bool remote) {
    if (!remote) return std::make_unique<tw::StubGenerator>();
    tw::RemoteGeneratorConfig config;
    config.endpoint = env_or("TERRAWEAVE_GEN_ENDPOINT");
    config.auth_token = env_or("TERRAWEAVE_GEN_TOKEN");
    if (config.endpoint.empty()) {
        throw std::runtime_error("--remote needs TERRAWEAVE_GEN_ENDPOINT");
    }
    return std::make_unique<tw::RemoteGenerator>(config);
}

void label_color(uint8_t label, uint8_t* rgb) {
    if (label == 0) {  // sky
        rgb[0] = 52;
        rgb[1] = 62;
        rgb[2] = 86;
        return;
    }
    const uint64_t h = tw::splitmix64(0xC01054ULL + label);
    rgb[0] = static_cast<uint8_t>(72 + (h & 0xFF) % 160);
    rgb[1] = static_cast<uint8_t>(72 + ((h >> 8) & 0xFF) % 160);
    rgb[2] = static_cast<uint8_t>(72 + ((h >> 16) & 0xFF) % 160);
}

int run_render(const std::string& config_path, const std::string& out_dir, double x, double y,
               double yaw_deg, double pitch_deg, int width, int height) {
    tw::PipelineConfig config = load_config(config_path);
    if (width > 0) config.width = width;
    if (height > 0) config.height = height;
    config.validate();

    const tw::SceneGeometry scene = tw::build_terrain(config.terrain);
    const tw::CameraIntrinsics K =
        tw::intrinsics_from_fov(config.fov_deg, config.width, config.height);
    const double z = tw::terrain_height(scene, x, y) + config.camera_height;
    const double pitch =
        std::isnan(pitch_deg) ? config.pitch_down_rad : pitch_deg * M_PI / 180.0;
    const tw::Pose pose = tw::make_camera_pose({x, y, z}, yaw_deg * M_PI / 180.0, pitch);

    const tw::RenderResult r = tw::raycast(scene, K, pose, config.near, config.far);
    const tw::DisparityImage disparity = tw::normalize_disparity(r.depth);

    const std::filesystem::path out(out_dir);
    std::filesystem::create_directories(out);
    tw::save_depth(out / "depth.raster", r.depth, pose, K);
    tw::save_labels(out / "labels.raster", r.labels, pose, K);

    tw::ImageRGB8 disparity_png = tw::ImageRGB8::filled(config.width, config.height, 0, 0, 0);
    tw::ImageRGB8 labels_png = tw::ImageRGB8::filled(config.width, config.height, 0, 0, 0);
    for (int v = 0; v < config.height; ++v) {
        for (int u = 0; u < config.width; ++u) {
            const auto g = static_cast<uint8_t>(disparity.at(u, v) * 255.0f + 0.5f);
            disparity_png.set(u, v, g, g, g);
            label_color(r.labels.at(u, v), labels_png.px(u, v));
        }
    }
    tw::save_png_rgb(out / "disparity.png", disparity_png);
    tw::save_png_rgb(out / "labels.png", labels_png);

    nlohmann::json masks = nlohmann::json::array();
    for (const auto& [label, mask] : tw::binary_masks(r.labels)) {
        char name[32];
        std::snprintf(name, sizeof(name), "mask_%03d.png", label);
        tw::save_png_mask(out / name, mask);
        masks.push_back({{"label", label}, {"pixels", mask.count()}, {"file", name}});
    }

    std::cout << nlohmann::json{{"out", out_dir},
                                {"width", config.width},
                                {"height", config.height},
                                {"pose", {{"x", x}, {"y", y}, {"z", z}}},
                                {"masks", masks}}
                     .dump(2)
              << "\n";
    return 0;
}

int run_stack(const std::string& config_path, const std::string& out_dir, uint64_t seed,
              int segment, bool remote) {
    tw::PipelineConfig config = load_config(config_path);
    config.validate();

    const auto plan = tw::plan_trajectory(config, "cli-000000", seed);
    if (plan.empty()) throw std::runtime_error("config yields zero timesteps");
    if (segment < 0 || segment >= static_cast<int>(plan.size())) {
        throw std::runtime_error("segment " + std::to_string(segment) + " out of range (0.." +
                                 std::to_string(plan.size() - 1) + ")");
    }

    const auto generator = make_generator(remote);
    const tw::FrameStack stack = tw::weave_stack(plan[segment], *generator);
    tw::save_stack(out_dir, stack);

    size_t hole_pixels = 0;
    for (size_t i = 1; i < stack.holes.size(); ++i) hole_pixels += stack.holes[i].count();
    std::cout << nlohmann::json{{"out", out_dir},
                                {"frames", stack.frames.size()},
                                {"hole_pixels", hole_pixels},
                                {"prompt", stack.prompt},
                                {"seed", stack.seed}}
                     .dump(2)
              << "\n";
    return 0;
}

std::unique_ptr<tw::PromptClient> make_prompt_client(bool remote) {
    if (!remote) return std::make_unique<tw::OfflinePromptClient>();
    tw::PromptClientConfig config;
    config.endpoint = env_or("TERRAWEAVE_LLM_ENDPOINT");
    config.auth_token = env_or("TERRAWEAVE_LLM_TOKEN");
    if (config.endpoint.empty()) {
        throw std::runtime_error("--remote needs TERRAWEAVE_LLM_ENDPOINT");
    }
    return std::make_unique<tw::RemotePromptClient>(config);
}

int run_pipeline_broker(uint16_t port) {
    tw::BrokerOptions options;
    const auto broker = tw::make_inproc_broker(options);
    tw::TcpBrokerServer server(*broker, port);
    std::cout << "broker listening on 127.0.0.1:" << server.port() << "\n" << std::flush;
    while (!g_interrupted.load()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    server.stop();
    return 0;
}

int run_pipeline_weaver(const std::string& broker_addr, const std::string& store_dir,
                        std::string queue, bool rpc, bool remote, int threads, double lease_s) {
    if (queue.empty()) queue = rpc ? "weave-rpc" : "weave";
    if (!rpc && store_dir.empty()) {
        throw std::runtime_error("weaver needs --store (or TERRAWEAVE_STORE)");
    }

    tw::WorkerOptions opts;
    opts.lease_s = lease_s;
    opts.should_stop = [] { return g_interrupted.load(); };

    std::vector<tw::WorkerStats> stats(threads);
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) {
        pool.emplace_back([&, i] {
            const auto broker = connect_broker(broker_addr);
            const auto generator = make_generator(remote);
            const std::string worker_id = "weaver-" + std::to_string(i);
            if (rpc) {
                stats[i] = tw::rpc_weaver(*broker, *generator, queue, worker_id, opts);
            } else {
                tw::Store store(store_dir);
                stats[i] =
                    tw::weaver_worker(*broker, *generator, store, queue, worker_id, opts);
            }
        });
    }
    for (auto& t : pool) t.join();

    tw::WorkerStats total;
    for (const auto& s : stats) total += s;
    std::cout << nlohmann::json{{"executed", total.jobs_executed},
                                {"acked", total.jobs_acked},
                                {"failed", total.jobs_failed}}
                     .dump(2)
              << "\n";
    return 0;
}

int run_pipeline_offline(const std::string& config_path, const std::string& store_dir,
                         const std::string& broker_addr, int unroll_workers, int weave_workers,
                         bool remote) {
    const tw::PipelineConfig config = load_config(config_path);
    if (store_dir.empty()) throw std::runtime_error("offline needs --store (or TERRAWEAVE_STORE)");
    tw::Store store(store_dir);

    std::unique_ptr<tw::Broker> broker =
        broker_addr.empty() ? tw::make_inproc_broker() : connect_broker(broker_addr);

    tw::BatchOptions opts;
    opts.unroll_workers = unroll_workers;
    opts.weave_workers = weave_workers;
    opts.worker.should_stop = [] { return g_interrupted.load(); };
    if (remote) opts.generator_factory = [] { return make_generator(true); };

    const tw::BatchReport report = tw::run_offline_batch(config, *broker, store, opts);
    std::cout << tw::batch_report_to_json(report).dump(2) << "\n";
    return report.parked_jobs.empty() ? 0 : 1;
}

int run_pipeline_onpolicy(const std::string& config_path, const std::string& store_dir,
                          const std::string& broker_addr, const std::string& rpc_queue,
                          double deadline_s) {
    const tw::PipelineConfig config = load_config(config_path);
    if (store_dir.empty()) throw std::runtime_error("onpolicy needs --store (or TERRAWEAVE_STORE)");
    if (broker_addr.empty()) {
        throw std::runtime_error("onpolicy needs --broker (or TERRAWEAVE_BROKER)");
    }
    tw::Store store(store_dir);
    const auto broker = connect_broker(broker_addr);

    tw::OnpolicyOptions opts;
    opts.rpc_queue = rpc_queue;
    opts.rpc_deadline_s = deadline_s;

    const tw::OnpolicyReport report = tw::run_onpolicy_loop(config, *broker, store, opts);
    std::cout << tw::onpolicy_report_to_json(report).dump(2) << "\n";
    return report.failed_segments.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    CLI::App app{"Terrain-conditioned image stack generation pipeline"};
    app.require_subcommand(1);

    // render
    auto* render = app.add_subcommand("render", "Render depth, labels and disparity at one pose");
    std::string render_config, render_out = "render-out";
    double render_x = -1.5, render_y = 0.0, render_yaw = 0.0, render_pitch = NAN;
    int render_w = 0, render_h = 0;
    render->add_option("--config", render_config, "JSON config file");
    render->add_option("--out", render_out, "Output directory");
    render->add_option("--x", render_x, "Camera x (m, along the lane)");
    render->add_option("--y", render_y, "Camera y (m, across the lane)");
    render->add_option("--yaw-deg", render_yaw, "Camera yaw (degrees)");
    render->add_option("--pitch-deg", render_pitch, "Pitch down (degrees); default from config");
    render->add_option("--width", render_w, "Override image width");
    render->add_option("--height", render_h, "Override image height");

    // stack
    auto* stack = app.add_subcommand("stack", "Weave one frame stack end to end");
    std::string stack_config, stack_out = "stack-out";
    uint64_t stack_seed = 0;
    int stack_segment = 0;
    bool stack_remote = false;
    stack->add_option("--config", stack_config, "JSON config file");
    stack->add_option("--out", stack_out, "Output directory");
    stack->add_option("--seed", stack_seed, "Trajectory seed");
    stack->add_option("--segment", stack_segment, "Which stack segment of the trajectory");
    stack->add_flag("--remote", stack_remote, "Use the remote generator (TERRAWEAVE_GEN_*)");

    // prompts
    auto* prompts = app.add_subcommand("prompts", "Prompt pool management");
    prompts->require_subcommand(1);
    std::string pool_dir = "prompt-pool";
    prompts->add_option("--pool", pool_dir, "Pool directory")->required();

    auto* prompts_new = prompts->add_subcommand("new-batch", "Request a batch and add it");
    std::string meta_file;
    bool prompts_remote = false;
    prompts_new->add_option("--meta-file", meta_file, "Meta-prompt text file (default built-in)");
    prompts_new->add_flag("--remote", prompts_remote,
                          "Ask a chat-completion service (TERRAWEAVE_LLM_*)");

    auto* prompts_sample = prompts->add_subcommand("sample", "Draw usage-balanced pairs");
    uint64_t sample_seed = 0;
    int sample_count = 1;
    prompts_sample->add_option("--seed", sample_seed, "Sampling seed");
    prompts_sample->add_option("--count", sample_count, "Number of draws");

    auto* prompts_report = prompts->add_subcommand("report", "Pool usage and diversity");

    auto* prompts_meta = prompts->add_subcommand("meta", "Print the built-in meta prompt");

    // pipeline
    auto* pipeline = app.add_subcommand("pipeline", "Distributed generation modes");
    pipeline->require_subcommand(1);

    auto* p_broker = pipeline->add_subcommand("broker", "Run the TCP job broker");
    uint16_t broker_port = 7601;
    p_broker->add_option("--port", broker_port, "Listen port (0 = ephemeral)");

    auto* p_weaver = pipeline->add_subcommand("weaver", "Run weave workers");
    std::string weaver_broker = env_or("TERRAWEAVE_BROKER");
    std::string weaver_store = env_or("TERRAWEAVE_STORE");
    std::string weaver_queue;
    bool weaver_rpc = false, weaver_remote = false;
    int weaver_threads = 1;
    double weaver_lease = 60.0;
    p_weaver->add_option("--broker", weaver_broker, "Broker host:port");
    p_weaver->add_option("--store", weaver_store, "Store root directory");
    p_weaver->add_option("--queue", weaver_queue, "Queue name (weave / weave-rpc)");
    p_weaver->add_flag("--rpc", weaver_rpc, "Serve request/reply instead of batch jobs");
    p_weaver->add_flag("--remote", weaver_remote, "Use the remote generator");
    p_weaver->add_option("--threads", weaver_threads, "Worker threads");
    p_weaver->add_option("--lease-s", weaver_lease, "Job lease seconds");

    auto* p_offline = pipeline->add_subcommand("offline", "Run an offline batch");
    std::string offline_config, offline_store = env_or("TERRAWEAVE_STORE");
    std::string offline_broker = env_or("TERRAWEAVE_BROKER");
    int offline_unroll = 2, offline_weave = 4;
    bool offline_remote = false;
    p_offline->add_option("--config", offline_config, "JSON config file");
    p_offline->add_option("--store", offline_store, "Store root directory");
    p_offline->add_option("--broker", offline_broker, "Broker host:port (default: in-process)");
    p_offline->add_option("--unroll-workers", offline_unroll, "Unroll worker threads");
    p_offline->add_option("--weave-workers", offline_weave, "Weave worker threads");
    p_offline->add_flag("--remote", offline_remote, "Use the remote generator");

    auto* p_onpolicy = pipeline->add_subcommand("onpolicy", "Run the on-policy loop");
    std::string onpolicy_config, onpolicy_store = env_or("TERRAWEAVE_STORE");
    std::string onpolicy_broker = env_or("TERRAWEAVE_BROKER");
    std::string onpolicy_queue = "weave-rpc";
    double onpolicy_deadline = 30.0;
    p_onpolicy->add_option("--config", onpolicy_config, "JSON config file");
    p_onpolicy->add_option("--store", onpolicy_store, "Store root directory");
    p_onpolicy->add_option("--broker", onpolicy_broker, "Broker host:port");
    p_onpolicy->add_option("--rpc-queue", onpolicy_queue, "RPC request queue");
    p_onpolicy->add_option("--deadline-s", onpolicy_deadline, "Per-keyframe RPC deadline");

    // bench
    auto* bench = app.add_subcommand("bench", "Per-frame vs keyframe+warp speedup benchmark");
    std::string bench_config;
    tw::BenchOptions bench_opts;
    bool bench_json = false;
    bench->add_option("--config", bench_config, "JSON config file (terrain, resolution)");
    bench->add_option("--stack-len", bench_opts.stack_len, "Frames per keyframe");
    bench->add_option("--delay-ms", bench_opts.injected_gen_delay_ms,
                      "Injected generation delay (ms)");
    bench->add_option("--trials", bench_opts.trials, "Trials per mode");
    bench->add_option("--seed", bench_opts.seed, "Trajectory seed");
    bench->add_flag("--json", bench_json, "Emit JSON instead of the table");

    // eval
    auto* eval = app.add_subcommand("eval", "Metrics over rollout logs");
    std::string eval_logs, eval_json_out;
    bool eval_json = false;
    eval->add_option("--logs", eval_logs, "Rollout log file (one JSON object per line)")
        ->required();
    eval->add_option("--json-out", eval_json_out, "Also write the JSON report here");
    eval->add_flag("--json", eval_json, "Emit JSON instead of the table");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*render) {
            return run_render(render_config, render_out, render_x, render_y, render_yaw,
                              render_pitch, render_w, render_h);
        }
        if (*stack) {
            return run_stack(stack_config, stack_out, stack_seed, stack_segment, stack_remote);
        }
        if (*prompts_new) {
            std::string meta = tw::default_meta_prompt();
            if (!meta_file.empty()) {
                std::ifstream in(meta_file);
                if (!in) throw std::runtime_error("cannot open " + meta_file);
                meta.assign(std::istreambuf_iterator<char>(in), {});
            }
            tw::PromptPool pool = std::filesystem::exists(pool_dir)
                                      ? tw::PromptPool::load(pool_dir)
                                      : tw::PromptPool{};
            const auto client = make_prompt_client(prompts_remote);
            const tw::PromptBatch batch = client->request_batch(meta);
            pool.add_batch(batch);
            pool.save(pool_dir);
            std::cout << nlohmann::json{{"batch", batch.meta_prompt_id},
                                        {"pairs", batch.pairs.size()},
                                        {"pool_size", pool.size()}}
                             .dump(2)
                      << "\n";
            return 0;
        }
        if (*prompts_sample) {
            tw::PromptPool pool = tw::PromptPool::load(pool_dir);
            nlohmann::json out = nlohmann::json::array();
            for (int i = 0; i < sample_count; ++i) {
                const tw::PromptPair& pair =
                    pool.sample(tw::splitmix64(sample_seed + static_cast<uint64_t>(i)));
                out.push_back({{"id", pair.id},
                               {"foreground", pair.foreground},
                               {"background", pair.background}});
            }
            pool.save(pool_dir);  // persist the usage counters
            std::cout << out.dump(2) << "\n";
            return 0;
        }
        if (*prompts_report) {
            const tw::PromptPool pool = tw::PromptPool::load(pool_dir);
            const tw::PoolDiversityReport r = tw::diversity_report(pool);
            nlohmann::json j = {{"pairs", r.pairs},
                                {"distinct_foregrounds", r.distinct_foregrounds},
                                {"distinct_backgrounds", r.distinct_backgrounds},
                                {"min_usage", r.min_usage},
                                {"max_usage", r.max_usage}};
            if (r.mean_pairwise_distance) j["mean_pairwise_distance"] = *r.mean_pairwise_distance;
            std::cout << j.dump(2) << "\n";
            return 0;
        }
        if (*prompts_meta) {
            std::cout << tw::default_meta_prompt();
            return 0;
        }
        if (*p_broker) return run_pipeline_broker(broker_port);
        if (*p_weaver) {
            if (weaver_broker.empty()) {
                throw std::runtime_error("weaver needs --broker (or TERRAWEAVE_BROKER)");
            }
            return run_pipeline_weaver(weaver_broker, weaver_store, weaver_queue, weaver_rpc,
                                       weaver_remote, weaver_threads, weaver_lease);
        }
        if (*p_offline) {
            return run_pipeline_offline(offline_config, offline_store, offline_broker,
                                        offline_unroll, offline_weave, offline_remote);
        }
        if (*p_onpolicy) {
            return run_pipeline_onpolicy(onpolicy_config, onpolicy_store, onpolicy_broker,
                                         onpolicy_queue, onpolicy_deadline);
        }
        if (*bench) {
            if (!bench_config.empty()) {
                const tw::PipelineConfig config = load_config(bench_config);
                bench_opts.terrain = config.terrain;
                bench_opts.width = config.width;
                bench_opts.height = config.height;
                bench_opts.fov_deg = config.fov_deg;
                bench_opts.near = config.near;
                bench_opts.far = config.far;
                bench_opts.camera_height = config.camera_height;
                bench_opts.pitch_down_rad = config.pitch_down_rad;
                bench_opts.dt_s = config.dt_s;
                bench_opts.foreground_prompt = config.foreground_prompt;
                bench_opts.background_prompt = config.background_prompt;
                if (!bench->count("--stack-len")) bench_opts.stack_len = config.stack_len;
            }
            const tw::BenchReport report = tw::bench_speedup(bench_opts);
            if (bench_json) {
                std::cout << tw::bench_report_to_json(report).dump(2) << "\n";
            } else {
                std::cout << tw::format_bench_table(report);
            }
            return 0;
        }
        if (*eval) {
            const auto logs = tw::load_rollout_logs(eval_logs);
            const tw::MetricsReport report = tw::evaluate_logs(logs);
            if (!eval_json_out.empty()) {
                std::ofstream out(eval_json_out);
                out << tw::metrics_report_to_json(report).dump(2) << "\n";
            }
            if (eval_json) {
                std::cout << tw::metrics_report_to_json(report).dump(2) << "\n";
            } else {
                std::cout << tw::format_metrics_table(report);
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
