#include "fallmon/tello/mock.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fallmon/errors.hpp"
#include "fallmon/kv.hpp"

namespace fallmon::tello {

using Clock = std::chrono::steady_clock;

std::vector<BatteryPoint> parse_battery_script(std::string_view text) {
    std::vector<BatteryPoint> out;
    std::string_view rest = text;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        std::string item(kv::trim(rest.substr(0, comma)));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        if (item.empty()) continue;
        if (item.back() == 's') item.pop_back();
        const auto at = item.find('@');
        if (at == std::string::npos) throw ConfigError("battery point '" + item + "' is not PERCENT@SECONDS");
        BatteryPoint p;
        p.percent = kv::parse_double("battery", item.substr(0, at));
        p.seconds = kv::parse_double("battery", item.substr(at + 1));
        if (p.percent < 0 || p.percent > 100) throw ConfigError("battery percent outside 0..100 in '" + item + "'");
        if (!out.empty() && p.seconds <= out.back().seconds) throw ConfigError("battery script times must increase");
        out.push_back(p);
    }
    if (out.empty()) throw ConfigError("battery script is empty");
    return out;
}

double battery_at(const std::vector<BatteryPoint>& script, double seconds) {
    if (script.empty()) return 100;
    if (seconds <= script.front().seconds) return script.front().percent;
    for (std::size_t i = 1; i < script.size(); ++i) {
        if (seconds <= script[i].seconds) {
            const auto& a = script[i - 1];
            const auto& b = script[i];
            const double f = (seconds - a.seconds) / (b.seconds - a.seconds);
            return a.percent + (b.percent - a.percent) * f;
        }
    }
    return script.back().percent;
}

MockConfig parse_mock_config(std::string_view text) {
    MockConfig c;
    for (const auto& [key, value] : kv::parse(text)) {
        if (key == "command_port") {
            c.command_port = kv::parse_port(key, value);
        } else if (key == "state_port") {
            c.state_port = kv::parse_port(key, value);
        } else if (key == "video_port") {
            c.video_port = kv::parse_port(key, value);
        } else if (key == "replay_dir") {
            c.replay_dir = value;
        } else if (key == "fps") {
            c.fps = kv::parse_double(key, value);
        } else if (key == "loss_rate") {
            c.loss_rate = kv::parse_double(key, value);
        } else if (key == "battery") {
            c.battery = parse_battery_script(value);
        } else if (key == "time_scale") {
            c.time_scale = kv::parse_double(key, value);
        } else if (key == "telemetry_hz") {
            c.telemetry_hz = kv::parse_double(key, value);
        } else if (key == "seed") {
            c.seed = kv::parse_uint(key, value);
        } else if (key == "loop") {
            c.loop = kv::parse_bool(key, value);
        } else {
            throw ConfigError("unknown mock drone key '" + key + "'");
        }
    }
    if (c.fps <= 0) throw ConfigError("fps must be positive");
    if (c.loss_rate < 0 || c.loss_rate > 1) throw ConfigError("loss_rate must lie in [0,1]");
    if (c.time_scale <= 0) throw ConfigError("time_scale must be positive");
    if (c.telemetry_hz <= 0) throw ConfigError("telemetry_hz must be positive");
    return c;
}

MockConfig load_mock_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read mock config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_mock_config(ss.str());
}

std::string format_mock_config(const MockConfig& c) {
    std::ostringstream out;
    out << "command_port = " << c.command_port << "\n"
        << "state_port = " << c.state_port << "\n"
        << "video_port = " << c.video_port << "\n"
        << "replay_dir = " << c.replay_dir.string() << "\n"
        << "fps = " << c.fps << "\n"
        << "loss_rate = " << c.loss_rate << "\n"
        << "battery = ";
    for (std::size_t i = 0; i < c.battery.size(); ++i) {
        out << (i ? "," : "") << c.battery[i].percent << "@" << c.battery[i].seconds;
    }
    out << "\n"
        << "time_scale = " << c.time_scale << "\n"
        << "telemetry_hz = " << c.telemetry_hz << "\n"
        << "seed = " << c.seed << "\n"
        << "loop = " << (c.loop ? "true" : "false") << "\n";
    return out.str();
}

MockDrone::MockDrone(MockConfig config)
    : config_(std::move(config)), commands_(config_.command_port), started_(Clock::now()), rng_(config_.seed) {
    if (!config_.replay_dir.empty()) {
        std::error_code ec;
        if (!std::filesystem::is_directory(config_.replay_dir, ec)) {
            throw IoError("replay directory " + config_.replay_dir.string() + " is not readable");
        }
        for (const auto& e : std::filesystem::directory_iterator(config_.replay_dir)) {
            const auto ext = e.path().extension().string();
            if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")) frames_.push_back(e.path());
        }
        std::sort(frames_.begin(), frames_.end());
    }
    command_thread_ = std::thread([this] { serve_commands(); });
    telemetry_thread_ = std::thread([this] { push_telemetry(); });
}

MockDrone::~MockDrone() { stop(); }

void MockDrone::stop() {
    if (stop_.exchange(true)) return;
    stop_stream();
    stream_cv_.notify_all();
    if (command_thread_.joinable()) command_thread_.join();
    if (telemetry_thread_.joinable()) telemetry_thread_.join();
    if (video_thread_.joinable()) video_thread_.join();
}

std::vector<std::string> MockDrone::command_log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

MockStats MockDrone::stats() const {
    std::lock_guard lock(mutex_);
    return stats_;
}

double MockDrone::elapsed_script_seconds() const {
    return std::chrono::duration<double>(Clock::now() - started_).count() * config_.time_scale;
}

double MockDrone::battery_percent() const { return battery_at(config_.battery, elapsed_script_seconds()); }

bool MockDrone::wait_stream_done(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    return stream_cv_.wait_for(lock, timeout, [&] { return !streaming_ || stop_; });
}

void MockDrone::serve_commands() {
    while (!stop_) {
        auto d = commands_.receive(std::chrono::milliseconds(50));
        if (!d) continue;
        std::string command(d->bytes.begin(), d->bytes.end());
        while (!command.empty() && (command.back() == '\n' || command.back() == '\r')) command.pop_back();
        {
            std::lock_guard lock(mutex_);
            log_.push_back(command);
            client_ = d->from;
        }
        const std::string reply = respond(command);
        try {
            commands_.send_to(reply, d->from);
        } catch (const IoError&) {
        }
    }
}

namespace {

bool is_move(const std::string& verb) {
    static const char* moves[] = {"up", "down", "left", "right", "forward", "back", "cw", "ccw"};
    return std::find_if(std::begin(moves), std::end(moves), [&](const char* m) { return verb == m; }) !=
           std::end(moves);
}

}  // namespace

std::string MockDrone::respond(const std::string& command) {
    std::istringstream words(command);
    std::string verb, arg, extra;
    words >> verb >> arg >> extra;
    const double battery = battery_percent();

    if (verb == "command" && arg.empty()) return "ok";
    if (verb == "battery?" && arg.empty()) return std::to_string(static_cast<int>(std::lround(battery)));
    if (verb == "streamon" && arg.empty()) {
        start_stream();
        return "ok";
    }
    if (verb == "streamoff" && arg.empty()) {
        stop_stream();
        return "ok";
    }
    if (verb == "takeoff" && arg.empty()) {
        if (battery <= 0) return "error Not enough battery";
        std::lock_guard lock(mutex_);
        flying_ = true;
        return "ok";
    }
    if (verb == "land" && arg.empty()) {
        stop_stream();
        std::lock_guard lock(mutex_);
        flying_ = false;
        return "ok";
    }
    if (is_move(verb) && !arg.empty() && extra.empty()) {
        int n = 0;
        auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), n);
        if (ec == std::errc() && ptr == arg.data() + arg.size() && n > 0) return "ok";
    }
    return "error";
}

void MockDrone::start_stream() {
    if (video_thread_.joinable()) {
        stop_stream();
        video_thread_.join();
    }
    std::uint64_t session;
    {
        std::lock_guard lock(mutex_);
        session = ++stream_session_;
        streaming_ = !frames_.empty();
    }
    if (streaming_) video_thread_ = std::thread([this, session] { stream_video(session); });
    stream_cv_.notify_all();
}

void MockDrone::stop_stream() {
    {
        std::lock_guard lock(mutex_);
        streaming_ = false;
    }
    stream_cv_.notify_all();
}

void MockDrone::stream_video(std::uint64_t session) {
    const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / config_.fps));
    auto next = Clock::now();
    std::bernoulli_distribution lose(config_.loss_rate);

    for (std::size_t i = 0;; ++i) {
        if (i == frames_.size()) {
            if (!config_.loop) break;
            i = 0;
        }
        {
            std::unique_lock lock(mutex_);
            stream_cv_.wait_until(lock, next, [&] { return stop_ || !streaming_ || stream_session_ != session; });
            if (stop_ || !streaming_ || stream_session_ != session) return;
        }
        next += period;

        std::ifstream in(frames_[i], std::ios::binary);
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
        if (bytes.empty()) continue;

        std::optional<Address> to;
        std::uint32_t frame_id;
        {
            std::lock_guard lock(mutex_);
            to = client_;
            frame_id = stats_.next_frame_id++;
            ++stats_.frames_sent;
        }
        if (!to) continue;
        Address video = *to;
        video.raw.sin_port = htons(config_.video_port);
        for (const auto& packet : packetize(frame_id, bytes)) {
            bool lost;
            {
                std::lock_guard lock(mutex_);
                lost = lose(rng_);
                ++(lost ? stats_.packets_lost : stats_.packets_sent);
            }
            if (lost) continue;
            try {
                outbound_.send_to(encode_packet(packet), video);
            } catch (const IoError&) {
            }
        }
    }
    {
        std::lock_guard lock(mutex_);
        if (stream_session_ == session) streaming_ = false;
    }
    stream_cv_.notify_all();
}

void MockDrone::push_telemetry() {
    const auto period =
        std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / config_.telemetry_hz));
    auto next = Clock::now() + period;
    while (!stop_) {
        {
            std::unique_lock lock(mutex_);
            stream_cv_.wait_until(lock, next, [&] { return stop_.load(); });
            if (stop_) return;
        }
        next += period;
        std::optional<Address> to;
        bool flying;
        {
            std::lock_guard lock(mutex_);
            to = client_;
            flying = flying_;
        }
        if (!to) continue;
        DroneTelemetry t;
        t.pitch = 0;
        t.roll = 0;
        t.yaw = 0;
        t.height = flying ? 80 : 0;
        t.battery = static_cast<int>(std::lround(std::clamp(battery_percent(), 0.0, 100.0)));
        Address state = *to;
        state.raw.sin_port = htons(config_.state_port);
        try {
            outbound_.send_to(format_telemetry(t), state);
            std::lock_guard lock(mutex_);
            ++stats_.telemetry_sent;
        } catch (const IoError&) {
        }
    }
}

}  // namespace fallmon::tello
