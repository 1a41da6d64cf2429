#include "fallmon/tello/client.hpp"

#include "fallmon/errors.hpp"

namespace fallmon::tello {

using Clock = std::chrono::steady_clock;

const char* to_string(ResponseKind kind) {
    switch (kind) {
        case ResponseKind::Ok: return "ok";
        case ResponseKind::Error: return "error";
        case ResponseKind::Timeout: return "timeout";
    }
    return "?";
}

DroneClient::DroneClient(const Config& config)
    : config_(config), drone_(Address::resolve(config.host, config.command_port)), socket_(config.local_port) {}

CommandResult DroneClient::send_command(std::string_view command, std::optional<std::chrono::milliseconds> timeout) {
    const auto wait = timeout.value_or(config_.timeout);
    CommandResult result;
    result.command = std::string(command);

    // Late replies to an earlier command would otherwise be read as this one's.
    socket_.drain();

    for (int attempt = 1; attempt <= 2; ++attempt) {
        result.attempts = attempt;
        const auto start = Clock::now();
        const auto deadline = start + wait;
        socket_.send_to(result.command, drone_);
        while (true) {
            const auto now = Clock::now();
            if (now >= deadline) break;
            const auto left = std::chrono::ceil<std::chrono::milliseconds>(deadline - now);
            auto reply = socket_.receive(left);
            if (!reply) continue;
            if (!(reply->from == drone_)) continue;
            result.round_trip = Clock::now() - start;
            result.response.assign(reply->bytes.begin(), reply->bytes.end());
            result.kind = result.response.rfind("error", 0) == 0 ? ResponseKind::Error : ResponseKind::Ok;
            return result;
        }
        result.round_trip = Clock::now() - start;
    }
    result.kind = ResponseKind::Timeout;
    result.response.clear();
    return result;
}

TelemetryListener::TelemetryListener(std::uint16_t port) : socket_(port) {
    thread_ = std::thread([this] { loop(); });
}

TelemetryListener::~TelemetryListener() {
    stop_ = true;
    thread_.join();
}

std::optional<DroneTelemetry> TelemetryListener::latest() const {
    std::lock_guard lock(mutex_);
    return latest_;
}

void TelemetryListener::loop() {
    while (!stop_) {
        auto d = socket_.receive(std::chrono::milliseconds(50));
        if (!d) continue;
        try {
            auto t = parse_telemetry(std::string_view(reinterpret_cast<const char*>(d->bytes.data()), d->bytes.size()));
            std::lock_guard lock(mutex_);
            latest_ = std::move(t);
            ++received_;
        } catch (const ParseError&) {
            ++rejected_;
        }
    }
}

}  // namespace fallmon::tello
