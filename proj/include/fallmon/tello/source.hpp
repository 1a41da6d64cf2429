#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "fallmon/sample.hpp"
#include "fallmon/tello/protocol.hpp"
#include "fallmon/tello/udp.hpp"

namespace fallmon::tello {

struct TimedFrame {
    double timestamp = 0;  // seconds since the source started
    Image image;
    std::uint32_t sequence = 0;
    std::string ref;                     // file the frame came from, when there is one
    std::vector<std::uint8_t> encoded;   // NetPBM bytes as read or received
};

/// Pull-based stream of frames; `next()` returns nothing once the stream ends.
class FrameSource {
public:
    virtual ~FrameSource() = default;
    virtual std::optional<TimedFrame> next() = 0;
    virtual std::string describe() const = 0;
    /// Frames known to be lost before reaching the consumer.
    virtual std::size_t dropped() const { return 0; }

    /// Makes a blocked or future `next()` return the end of stream promptly.
    void request_stop() { stop_ = true; }

protected:
    bool stop_requested() const { return stop_; }

private:
    std::atomic<bool> stop_{false};
};

/// NetPBM files of a directory in name order, paced at `fps` (0 = unpaced).
class DirectoryReplaySource : public FrameSource {
public:
    DirectoryReplaySource(const std::filesystem::path& dir, double fps);

    std::optional<TimedFrame> next() override;
    std::string describe() const override;
    std::size_t size() const { return files_.size(); }

private:
    std::filesystem::path dir_;
    std::vector<std::filesystem::path> files_;
    double fps_;
    std::size_t index_ = 0;
    std::chrono::steady_clock::time_point start_;
};

/// Video fragments from the mock drone, reassembled and decoded as NetPBM.
/// The stream ends after `idle_timeout` without traffic.
class MockWireSource : public FrameSource {
public:
    MockWireSource(std::uint16_t video_port, std::chrono::milliseconds idle_timeout);

    std::optional<TimedFrame> next() override;
    std::string describe() const override;
    std::size_t dropped() const override { return reassembler_.dropped() + undecodable_; }

    std::uint16_t port() const { return socket_.port(); }
    const Reassembler& reassembler() const { return reassembler_; }

    /// Counts ids below `end_frame_id` that never arrived as dropped, once the
    /// sender's frame count is known.
    void account_until(std::uint32_t end_frame_id) { reassembler_.finish(end_frame_id); }
    std::size_t malformed_packets() const { return malformed_; }

private:
    UdpSocket socket_;
    std::chrono::milliseconds idle_timeout_;
    Reassembler reassembler_;
    std::size_t malformed_ = 0;
    std::size_t undecodable_ = 0;
    std::uint32_t sequence_ = 0;
    bool ended_ = false;
    std::chrono::steady_clock::time_point start_;
};

/// Writes every datagram arriving on the video port verbatim to a file for
/// decoding elsewhere; never yields frames. Ends after `idle_timeout` of silence.
class PassthroughRecorder : public FrameSource {
public:
    PassthroughRecorder(std::uint16_t video_port, const std::filesystem::path& out, std::chrono::milliseconds idle_timeout);

    std::optional<TimedFrame> next() override;
    std::string describe() const override;

    std::uint16_t port() const { return socket_.port(); }
    std::size_t bytes_written() const { return bytes_; }
    std::size_t datagrams() const { return datagrams_; }

private:
    UdpSocket socket_;
    std::filesystem::path path_;
    std::ofstream out_;
    std::chrono::milliseconds idle_timeout_;
    std::size_t bytes_ = 0;
    std::size_t datagrams_ = 0;
};

}  // namespace fallmon::tello
