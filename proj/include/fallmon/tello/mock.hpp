#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "fallmon/tello/protocol.hpp"
#include "fallmon/tello/udp.hpp"

namespace fallmon::tello {

struct BatteryPoint {
    double seconds = 0;
    double percent = 100;
};

/// "100@0,50@60" → {{0,100},{60,50}}; times must increase.
std::vector<BatteryPoint> parse_battery_script(std::string_view text);

/// Piecewise-linear through the points, held flat before the first and after the last.
double battery_at(const std::vector<BatteryPoint>& script, double seconds);

struct MockConfig {
    std::uint16_t command_port = kCommandPort;  // bound by the mock
    std::uint16_t state_port = kStatePort;      // client port telemetry is pushed to
    std::uint16_t video_port = kVideoPort;      // client port video fragments are sent to
    std::filesystem::path replay_dir;           // NetPBM frames, streamed in name order
    double fps = 30;
    double loss_rate = 0;                       // probability each fragment is discarded
    std::vector<BatteryPoint> battery = {{0, 100}};
    double time_scale = 1;                      // scripted seconds per wall-clock second
    double telemetry_hz = 10;
    std::uint64_t seed = 0;
    bool loop = false;                          // restart the replay when it runs out
};

/// Reads `key = value` lines (`#` comments). Unknown keys are a ConfigError.
MockConfig parse_mock_config(std::string_view text);
MockConfig load_mock_config(const std::filesystem::path& path);
std::string format_mock_config(const MockConfig& config);

struct MockStats {
    std::size_t frames_sent = 0;  // frames started, fragments lost or not
    std::size_t packets_sent = 0;
    std::size_t packets_lost = 0;
    std::size_t telemetry_sent = 0;
    std::uint32_t next_frame_id = 0;
};

/// Protocol-compatible stand-in for the drone. Serves commands from a
/// background thread until destroyed or `stop()`ed.
class MockDrone {
public:
    explicit MockDrone(MockConfig config);
    ~MockDrone();
    MockDrone(const MockDrone&) = delete;
    MockDrone& operator=(const MockDrone&) = delete;

    void stop();

    std::uint16_t command_port() const { return commands_.port(); }
    std::vector<std::string> command_log() const;
    MockStats stats() const;
    bool streaming() const { return streaming_; }
    double battery_percent() const;

    /// Blocks until the current replay has been fully sent or `timeout` passes.
    bool wait_stream_done(std::chrono::milliseconds timeout) const;

private:
    void serve_commands();
    void push_telemetry();
    void stream_video(std::uint64_t session);
    std::string respond(const std::string& command);
    void start_stream();
    void stop_stream();
    double elapsed_script_seconds() const;

    MockConfig config_;
    std::vector<std::filesystem::path> frames_;
    UdpSocket commands_;
    UdpSocket outbound_;
    std::chrono::steady_clock::time_point started_;

    mutable std::mutex mutex_;
    mutable std::condition_variable stream_cv_;
    std::vector<std::string> log_;
    MockStats stats_;
    std::optional<Address> client_;
    bool flying_ = false;
    std::mt19937_64 rng_;

    std::atomic<bool> stop_{false};
    std::atomic<bool> streaming_{false};
    std::uint64_t stream_session_ = 0;
    std::thread command_thread_;
    std::thread telemetry_thread_;
    std::thread video_thread_;
};

}  // namespace fallmon::tello
