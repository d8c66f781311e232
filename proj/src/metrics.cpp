#include "tw/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

namespace tw {

void RolloutLog::validate() const {
    double last_t = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < reaches.size(); ++i) {
        const ReachEvent& r = reaches[i];
        if (r.goal_index < 0 || static_cast<size_t>(r.goal_index) >= goals.size()) {
            throw std::invalid_argument("rollout '" + trajectory_id + "': reach " +
                                        std::to_string(i) + " references goal " +
                                        std::to_string(r.goal_index) + " of " +
                                        std::to_string(goals.size()));
        }
        if (r.timestamp_s < last_t) {
            throw std::invalid_argument("rollout '" + trajectory_id +
                                        "': reach events run backwards in time");
        }
        last_t = r.timestamp_s;
    }
}

namespace {

nlohmann::json vec3_to_json(const Eigen::Vector3d& v) {
    return nlohmann::json::array({v.x(), v.y(), v.z()});
}

Eigen::Vector3d vec3_from_json(const nlohmann::json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace

nlohmann::json rollout_log_to_json(const RolloutLog& log) {
    nlohmann::json j;
    j["trajectory_id"] = log.trajectory_id;
    j["start"] = vec3_to_json(log.start);
    j["goals"] = nlohmann::json::array();
    for (const auto& g : log.goals) j["goals"].push_back(vec3_to_json(g));
    j["poses"] = nlohmann::json::array();
    for (const TrajectoryFrame& f : log.poses) {
        nlohmann::json rot = nlohmann::json::array();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) rot.push_back(f.pose.rotation(r, c));
        j["poses"].push_back({{"t_s", f.timestamp_s},
                              {"rotation", rot},
                              {"translation", vec3_to_json(f.pose.translation)}});
    }
    j["reaches"] = nlohmann::json::array();
    for (const ReachEvent& r : log.reaches) {
        j["reaches"].push_back({{"goal", r.goal_index}, {"t_s", r.timestamp_s}});
    }
    return j;
}

RolloutLog rollout_log_from_json(const nlohmann::json& j) {
    RolloutLog log;
    log.trajectory_id = j.at("trajectory_id").get<std::string>();
    log.start = vec3_from_json(j.at("start"));
    for (const auto& g : j.at("goals")) log.goals.push_back(vec3_from_json(g));
    for (const auto& p : j.at("poses")) {
        TrajectoryFrame f;
        f.timestamp_s = p.at("t_s").get<double>();
        const auto& rot = p.at("rotation");
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) f.pose.rotation(r, c) = rot.at(r * 3 + c).get<double>();
        f.pose.translation = vec3_from_json(p.at("translation"));
        log.poses.push_back(std::move(f));
    }
    for (const auto& r : j.at("reaches")) {
        log.reaches.push_back({r.at("goal").get<int>(), r.at("t_s").get<double>()});
    }
    log.validate();
    return log;
}

void save_rollout_logs(const std::filesystem::path& path, const std::vector<RolloutLog>& logs) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const RolloutLog& log : logs) out << rollout_log_to_json(log).dump() << "\n";
}

std::vector<RolloutLog> load_rollout_logs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<RolloutLog> logs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        logs.push_back(rollout_log_from_json(nlohmann::json::parse(line)));
    }
    return logs;
}

double fgr(const std::vector<RolloutLog>& logs) {
    if (logs.empty()) throw std::invalid_argument("fgr needs at least one rollout log");
    size_t reached = 0;
    size_t total = 0;
    for (const RolloutLog& log : logs) {
        log.validate();
        total += log.goals.size();
        std::set<int> distinct;
        for (const ReachEvent& r : log.reaches) distinct.insert(r.goal_index);
        reached += distinct.size();
    }
    if (total == 0) throw std::invalid_argument("fgr over logs with no goals");
    return static_cast<double>(reached) / static_cast<double>(total);
}

double x_displacement(const RolloutLog& log) {
    log.validate();
    if (log.goals.empty()) throw std::invalid_argument("x_displacement needs a final goal");
    if (log.poses.empty()) throw std::invalid_argument("x_displacement needs at least one pose");
    const Eigen::Vector3d axis = log.goals.back() - log.start;
    const double distance = axis.norm();
    if (distance <= 0.0) throw std::invalid_argument("final goal coincides with the start");
    const Eigen::Vector3d progress = log.poses.back().pose.translation - log.start;
    return std::clamp(progress.dot(axis) / (distance * distance), 0.0, 1.0);
}

MetricsReport evaluate_logs(const std::vector<RolloutLog>& logs) {
    MetricsReport report;
    report.logs = logs.size();
    report.fgr = fgr(logs);
    double x_sum = 0.0;
    for (const RolloutLog& log : logs) {
        report.total_goals += log.goals.size();
        std::set<int> distinct;
        for (const ReachEvent& r : log.reaches) distinct.insert(r.goal_index);
        report.goals_reached += distinct.size();
        x_sum += x_displacement(log);
    }
    report.mean_x_displacement = x_sum / static_cast<double>(logs.size());
    return report;
}

nlohmann::json metrics_report_to_json(const MetricsReport& report) {
    return {{"logs", report.logs},
            {"total_goals", report.total_goals},
            {"goals_reached", report.goals_reached},
            {"fgr", report.fgr},
            {"mean_x_displacement", report.mean_x_displacement}};
}

std::string format_metrics_table(const MetricsReport& report) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%-22s %10zu\n%-22s %10zu\n%-22s %10zu\n%-22s %10.4f\n%-22s %10.4f\n",
                  "rollouts", report.logs, "goals", report.total_goals, "goals reached",
                  report.goals_reached, "FGR", report.fgr, "mean x-displacement",
                  report.mean_x_displacement);
    return buf;
}

}  // namespace tw
