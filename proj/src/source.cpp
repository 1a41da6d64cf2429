#include "fallmon/tello/source.hpp"

#include <algorithm>
#include <thread>

#include "fallmon/dataset.hpp"
#include "fallmon/errors.hpp"

namespace fallmon::tello {

using Clock = std::chrono::steady_clock;

namespace {

constexpr std::chrono::milliseconds kPoll{50};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

DirectoryReplaySource::DirectoryReplaySource(const std::filesystem::path& dir, double fps) : dir_(dir), fps_(fps) {
    if (fps < 0) throw ConfigError("replay fps must not be negative");
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) throw IoError("replay directory " + dir.string() + " is not readable");
    for (const auto& e : std::filesystem::directory_iterator(dir, ec)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")) files_.push_back(e.path());
    }
    if (ec) throw IoError("cannot list replay directory " + dir.string() + ": " + ec.message());
    if (files_.empty()) throw IoError("replay directory " + dir.string() + " holds no NetPBM frames");
    std::sort(files_.begin(), files_.end());
    start_ = Clock::now();
}

std::optional<TimedFrame> DirectoryReplaySource::next() {
    if (index_ == 0) start_ = Clock::now();
    if (index_ >= files_.size() || stop_requested()) return std::nullopt;
    if (fps_ > 0) {
        const auto due = start_ + std::chrono::duration_cast<Clock::duration>(
                                      std::chrono::duration<double>(static_cast<double>(index_) / fps_));
        while (Clock::now() < due) {
            if (stop_requested()) return std::nullopt;
            std::this_thread::sleep_until(std::min(due, Clock::now() + kPoll));
        }
    }
    const auto& path = files_[index_];
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read frame " + path.string());
    TimedFrame f;
    f.encoded.assign(std::istreambuf_iterator<char>(in), {});
    f.image = data::load_netpbm(f.encoded);
    f.timestamp = seconds_since(start_);
    f.sequence = static_cast<std::uint32_t>(index_++);
    f.ref = path.string();
    return f;
}

std::string DirectoryReplaySource::describe() const {
    return "replay " + dir_.string() + " (" + std::to_string(files_.size()) + " frames)";
}

MockWireSource::MockWireSource(std::uint16_t video_port, std::chrono::milliseconds idle_timeout)
    : socket_(video_port), idle_timeout_(idle_timeout), start_(Clock::now()) {}

std::optional<TimedFrame> MockWireSource::next() {
    if (ended_) return std::nullopt;
    auto last_traffic = Clock::now();
    while (!stop_requested()) {
        if (Clock::now() - last_traffic >= idle_timeout_) break;
        auto d = socket_.receive(kPoll);
        if (!d) continue;
        last_traffic = Clock::now();
        VideoPacket packet;
        try {
            packet = decode_packet(d->bytes);
        } catch (const FormatError&) {
            ++malformed_;
            continue;
        }
        for (auto& frame : reassembler_.push(packet)) {
            TimedFrame f;
            try {
                f.image = data::load_netpbm(frame.bytes);
            } catch (const FormatError&) {
                ++undecodable_;
                continue;
            }
            f.encoded = std::move(frame.bytes);
            f.timestamp = seconds_since(start_);
            f.sequence = sequence_++;
            f.ref = "wire:frame-" + std::to_string(frame.frame_id);
            return f;
        }
    }
    reassembler_.finish();
    ended_ = true;
    return std::nullopt;
}

std::string MockWireSource::describe() const { return "mock-wire udp:" + std::to_string(socket_.port()); }

PassthroughRecorder::PassthroughRecorder(std::uint16_t video_port, const std::filesystem::path& out,
                                         std::chrono::milliseconds idle_timeout)
    : socket_(video_port), path_(out), out_(out, std::ios::binary | std::ios::trunc), idle_timeout_(idle_timeout) {
    if (!out_) throw IoError("cannot write stream file " + out.string());
}

std::optional<TimedFrame> PassthroughRecorder::next() {
    auto last_traffic = Clock::now();
    while (!stop_requested() && Clock::now() - last_traffic < idle_timeout_) {
        auto d = socket_.receive(kPoll);
        if (!d) continue;
        last_traffic = Clock::now();
        out_.write(reinterpret_cast<const char*>(d->bytes.data()), static_cast<std::streamsize>(d->bytes.size()));
        if (!out_) throw IoError("write failed on " + path_.string());
        bytes_ += d->bytes.size();
        ++datagrams_;
    }
    out_.flush();
    return std::nullopt;
}

std::string PassthroughRecorder::describe() const { return "passthrough -> " + path_.string(); }

}  // namespace fallmon::tello
