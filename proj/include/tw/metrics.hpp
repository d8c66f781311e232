#pragma once

#include "tw/trajectory.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace tw {

struct ReachEvent {
    int goal_index = 0;
    double timestamp_s = 0.0;
};

// One evaluated trajectory: where the agent started, where it was supposed
// to go, and which goals it actually touched along the way.
struct RolloutLog {
    std::string trajectory_id;
    std::vector<TrajectoryFrame> poses;
    Eigen::Vector3d start = Eigen::Vector3d::Zero();
    std::vector<Eigen::Vector3d> goals;
    std::vector<ReachEvent> reaches;

    // Throws when reach events reference goals that do not exist or run
    // backwards in time.
    void validate() const;
};

nlohmann::json rollout_log_to_json(const RolloutLog& log);
RolloutLog rollout_log_from_json(const nlohmann::json& j);

// One JSON object per line.
void save_rollout_logs(const std::filesystem::path& path, const std::vector<RolloutLog>& logs);
std::vector<RolloutLog> load_rollout_logs(const std::filesystem::path& path);

// Fraction of goals reached: reach events deduplicated per goal, summed
// over logs, divided by the total goal count. Throws on an empty list or
// zero goals.
double fgr(const std::vector<RolloutLog>& logs);

// Forward progress of the final pose projected onto the start → final-goal
// axis, as a fraction of that axis length, clamped to [0, 1]. Lateral
// wandering does not count. Throws when the final goal coincides with the
// start.
double x_displacement(const RolloutLog& log);

struct MetricsReport {
    size_t logs = 0;
    size_t total_goals = 0;
    size_t goals_reached = 0;
    double fgr = 0.0;
    double mean_x_displacement = 0.0;
};

MetricsReport evaluate_logs(const std::vector<RolloutLog>& logs);
nlohmann::json metrics_report_to_json(const MetricsReport& report);
std::string format_metrics_table(const MetricsReport& report);

}  // namespace tw
