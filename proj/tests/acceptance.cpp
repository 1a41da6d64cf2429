#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fallmon/dataset.hpp"
#include "fallmon/errors.hpp"
#include "fallmon/fallnet.hpp"
#include "fallmon/gradcheck_suite.hpp"
#include "fallmon/sentinel.hpp"
#include "fallmon/tello/client.hpp"
#include "fallmon/tello/mock.hpp"
#include "fallmon/tello/source.hpp"

using namespace fallmon;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* pattern, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, a);
    return buf;
}

int run_gtest(const std::string& binary, const std::string& filter) {
    const auto cmd = binary + " --gtest_brief=1 --gtest_filter='" + filter + "' > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome gradient_oracle() {
    const auto start = std::chrono::steady_clock::now();
    const auto report = gradcheck::run(gradcheck::Options{});
    const double elapsed = seconds_since(start);
    double worst = 0;
    for (const auto& layer : report.layers) worst = std::max(worst, layer.worst.error);
    return {report.passed() && elapsed < 60,
            "max rel err " + fmt("%.2e", worst) + " over " + std::to_string(gradcheck::kDefaultSeeds) + " seeds, " +
                fmt("%.1f s", elapsed)};
}

Outcome table_trend() {
    const auto start = std::chrono::steady_clock::now();
    const auto all = data::synthetic_poses(800, 1);
    const std::vector<LabeledSample> train_set(all.begin(), all.begin() + 640);
    const std::vector<LabeledSample> val_set(all.begin() + 640, all.end());

    std::vector<std::future<std::vector<fallnet::EpochStats>>> runs;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        runs.push_back(std::async(std::launch::async, [&, seed] {
            auto model = fallnet::build_fallnet(fallnet::kDefaultInput, seed);
            fallnet::TrainConfig cfg;  // 5 epochs, lr 1e-4, batch 4
            cfg.seed = seed;
            return fallnet::train(model, train_set, val_set, cfg);
        }));
    }
    int good = 0;
    std::string detail;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto rows = runs[i].get();
        bool decreasing = true;
        for (std::size_t k = 1; k < rows.size(); ++k) decreasing = decreasing && rows[k].train_loss < rows[k - 1].train_loss;
        const auto& last = rows.back();
        const bool ok = decreasing && last.train_accuracy >= 0.95 && last.val_accuracy >= 0.95;
        good += ok;
        detail += (i ? "; " : "") + std::string("seed ") + std::to_string(i + 1) + " " +
                  fmt("%.4f", last.train_accuracy) + "/" + fmt("%.4f", last.val_accuracy) +
                  (decreasing ? "" : " loss not decreasing");
    }
    const double elapsed = seconds_since(start);
    return {good >= 4 && elapsed < 15 * 60,
            std::to_string(good) + "/5 seeds (" + detail + "), " + fmt("%.0f s", elapsed)};
}

Outcome metric_fixture() {
    const auto m = data::metrics_from_counts(390, 0, 1, 0);
    const bool ok = std::abs(m.precision - 1.0) <= 1e-5 && std::abs(m.recall - 0.99744) <= 1e-5;
    return {ok, "precision " + fmt("%.5f", m.precision) + ", recall " + fmt("%.5f", m.recall)};
}

Outcome separability() {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::future<double>> runs;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        runs.push_back(std::async(std::launch::async, [seed] {
            const auto train_set = data::synthetic_brightness(200, seed);
            const auto val_set = data::synthetic_brightness(20, seed + 1000);
            auto model = fallnet::build_fallnet(fallnet::kDefaultInput, seed);
            fallnet::TrainConfig cfg;
            cfg.seed = seed;
            double best = 0;
            for (const auto& row : fallnet::train(model, train_set, val_set, cfg)) best = std::max(best, row.train_accuracy);
            return best;
        }));
    }
    bool all = true;
    std::string detail;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const double best = runs[i].get();
        all = all && best == 1.0;
        detail += (i ? ", " : "") + fmt("%.4f", best);
    }
    const double elapsed = seconds_since(start);
    return {all && elapsed < 120, "best train accuracy per seed " + detail + ", " + fmt("%.0f s", elapsed)};
}

struct WireRun {
    sentinel::MonitorSummary summary;
    std::vector<std::string> commands;
    std::vector<std::string> alert_lines;
};

WireRun run_over_wire(const fs::path& root, const std::string& scenario) {
    const auto dir = root / scenario;
    sentinel::write_scenario(dir / "frames", sentinel::scenario_levels(scenario));

    tello::MockWireSource source(0, 1000ms);
    tello::TelemetryListener telemetry(0);
    tello::MockConfig mc;
    mc.command_port = 0;
    mc.state_port = telemetry.port();
    mc.video_port = source.port();
    mc.replay_dir = dir / "frames";
    mc.fps = 30;
    tello::MockDrone mock(mc);

    tello::DroneClient::Config cc;
    cc.host = "127.0.0.1";
    cc.command_port = mock.command_port();
    cc.timeout = 1000ms;
    tello::DroneClient drone(cc);
    if (!drone.send_command("command").ok() || !drone.send_command("streamon").ok()) {
        throw IoError("mock drone did not accept the stream commands");
    }

    sentinel::SentinelConfig cfg;
    cfg.prompt_timeout = 1;
    cfg.alert_log = dir / "alerts.jsonl";
    sentinel::MonitorOptions opts;
    opts.drone = &drone;
    WireRun out;
    out.summary = sentinel::run_monitor(source, sentinel::brightness_probability, cfg, opts);
    mock.stop();
    out.commands = mock.command_log();
    std::ifstream in(cfg.alert_log);
    for (std::string line; std::getline(in, line);) out.alert_lines.push_back(line);
    return out;
}

bool valid_alert(const std::string& line, const std::string& trigger) {
    try {
        const auto j = nlohmann::json::parse(line);
        return j.size() == 5 && j.at("trigger") == trigger && j.at("probability").is_number() &&
               j.at("stateTrace").is_array() && j.at("frameRef").is_string() && j.at("timestamp").is_string();
    } catch (const std::exception&) {
        return false;
    }
}

Outcome end_to_end() {
    std::random_device rd;
    const auto root = fs::temp_directory_path() / ("fallmon-acceptance-" + std::to_string(rd()));
    Outcome o;
    try {
        const auto fall = run_over_wire(root, "fall");
        const auto nofall = run_over_wire(root, "nofall");
        const auto uncertain = run_over_wire(root, "uncertain");
        const bool fall_ok = fall.summary.alarms == 1 && fall.alert_lines.size() == 1 &&
                             valid_alert(fall.alert_lines[0], "no-answer");
        const bool nofall_ok = nofall.summary.alarms == 0 && nofall.alert_lines.empty();
        const auto moves = std::count(uncertain.commands.begin(), uncertain.commands.end(), "right 30");
        o.pass = fall_ok && nofall_ok && moves == 1;
        o.detail = "fall: " + std::to_string(fall.summary.alarms) + " alarm(s), " +
                   std::to_string(fall.alert_lines.size()) + " alert line(s)" + (fall_ok ? "" : " [bad]") +
                   "; nofall: " + std::to_string(nofall.summary.alarms) + " alarm(s); uncertain: " +
                   std::to_string(moves) + " reposition command(s); frames " +
                   std::to_string(fall.summary.frames) + "/" + std::to_string(nofall.summary.frames) + "/" +
                   std::to_string(uncertain.summary.frames);
    } catch (const std::exception& e) {
        o.detail = e.what();
    }
    fs::remove_all(root);
    return o;
}

Outcome fsm_exhaustiveness() {
    const int code = run_gtest(FALLMON_SENTINEL_TEST, "Step.AllTwentyFourPairs:Step.RandomSequencesKeepInvariants");
    return {code == 0, "24-pair transition table and 1,000 random sequences (exit " + std::to_string(code) + ")"};
}

Outcome protocol_robustness() {
    const int code = run_gtest(FALLMON_TELLO_TEST,
                               "Telemetry.TotalOverRandomBytes:Reassembly.PermutationInvariantUpToFourPackets:"
                               "Reassembly.IncompleteFrameDroppedByFramePlusTwo:Reassembly.FramePlusOneDoesNotDrop:"
                               "Reassembly.NeverEmitsMissingBytesUnderRandomLoss");
    return {code == 0, "10,000-string telemetry fuzz, exhaustive permutations, drop rule (exit " +
                           std::to_string(code) + ")"};
}

Outcome checkpoint_round_trip() {
    const auto model = fallnet::build_fallnet(fallnet::kDefaultInput, 8);
    const auto probes = data::synthetic_poses(10, 99);
    const auto restored = fallnet::deserialize(fallnet::serialize(model));
    double max_diff = 0;
    for (const auto& p : probes) max_diff = std::max(max_diff, static_cast<double>(std::abs(model.forward(p.image) - restored.forward(p.image))));
    auto bytes = fallnet::serialize(model);
    bytes[1] ^= 0xFF;
    bool rejected = false;
    try {
        fallnet::deserialize(bytes);
    } catch (const FormatError&) {
        rejected = true;
    }
    return {max_diff == 0 && rejected,
            "max |p_before - p_after| = " + fmt("%g", max_diff) + ", corrupted header " +
                (rejected ? "rejected" : "ACCEPTED")};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient oracle", gradient_oracle},
        {"training trend", table_trend},
        {"metric fixture", metric_fixture},
        {"synthetic separability", separability},
        {"end-to-end simulation", end_to_end},
        {"state machine exhaustiveness", fsm_exhaustiveness},
        {"protocol robustness", protocol_robustness},
        {"checkpoint round trip", checkpoint_round_trip},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << "criterion " << i + 1 << " " << criteria[i].first << ": " << (o.pass ? "PASS" : "FAIL") << " - "
                  << o.detail << std::endl;
    }
    std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failures == 0 ? 0 : 1;
}
