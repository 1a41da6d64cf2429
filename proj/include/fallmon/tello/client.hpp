#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "fallmon/tello/protocol.hpp"
#include "fallmon/tello/udp.hpp"

namespace fallmon::tello {

inline constexpr std::chrono::milliseconds kDefaultCommandTimeout{5000};

enum class ResponseKind { Ok, Error, Timeout };

const char* to_string(ResponseKind kind);

struct CommandResult {
    std::string command;
    ResponseKind kind = ResponseKind::Timeout;
    std::string response;  // verbatim; empty on timeout
    std::chrono::duration<double> round_trip{0};
    int attempts = 0;

    bool ok() const { return kind == ResponseKind::Ok; }
};

/// Command/ACK channel. One thread at a time.
class DroneClient {
public:
    struct Config {
        std::string host = "192.168.10.1";
        std::uint16_t command_port = kCommandPort;
        std::uint16_t local_port = 0;
        std::chrono::milliseconds timeout = kDefaultCommandTimeout;
    };

    explicit DroneClient(const Config& config);

    /// Sends once; when nothing answers within the timeout, sends one more
    /// time. A reply starting with "error" is an Error result; any other
    /// reply is Ok. `round_trip` covers the attempt that produced the result.
    CommandResult send_command(std::string_view command, std::optional<std::chrono::milliseconds> timeout = {});

    std::uint16_t local_port() const { return socket_.port(); }

private:
    Config config_;
    Address drone_;
    UdpSocket socket_;
};

/// Receives telemetry lines on the state port in a background thread and
/// keeps the most recent parse.
class TelemetryListener {
public:
    explicit TelemetryListener(std::uint16_t port = kStatePort);
    ~TelemetryListener();
    TelemetryListener(const TelemetryListener&) = delete;
    TelemetryListener& operator=(const TelemetryListener&) = delete;

    std::uint16_t port() const { return socket_.port(); }
    std::optional<DroneTelemetry> latest() const;
    std::size_t received() const { return received_; }
    std::size_t rejected() const { return rejected_; }

private:
    void loop();

    UdpSocket socket_;
    mutable std::mutex mutex_;
    std::optional<DroneTelemetry> latest_;
    std::atomic<std::size_t> received_{0};
    std::atomic<std::size_t> rejected_{0};
    std::atomic<bool> stop_{false};
    std::thread thread_;
};

}  // namespace fallmon::tello
