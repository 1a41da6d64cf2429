#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fallmon::tello {

inline constexpr std::uint16_t kCommandPort = 8889;
inline constexpr std::uint16_t kStatePort = 8890;
inline constexpr std::uint16_t kVideoPort = 11111;

// --- Telemetry ------------------------------------------------------------------

struct DroneTelemetry {
    std::optional<int> pitch;    // degrees
    std::optional<int> roll;     // degrees
    std::optional<int> yaw;      // degrees
    std::optional<int> height;   // cm
    std::optional<int> battery;  // percent, 0..100
    std::string raw;
};

/// Parses `key:int;` pairs. Keys pitch, roll, yaw, h and bat must carry
/// integers (ParseError names the key otherwise); any other key is left in
/// `raw` untouched. A trailing CR/LF is ignored.
DroneTelemetry parse_telemetry(std::string_view line);

std::string format_telemetry(const DroneTelemetry& t);

// --- Video fragments ------------------------------------------------------------

inline constexpr std::uint8_t kPacketMagic[2] = {0x54, 0x4C};  // "TL"
inline constexpr std::size_t kPacketHeaderSize = 10;
inline constexpr std::size_t kMaxPayload = 1400;

struct VideoPacket {
    std::uint32_t frame_id = 0;
    std::uint16_t packet_index = 0;
    std::uint16_t packet_count = 1;
    std::vector<std::uint8_t> payload;

    bool operator==(const VideoPacket&) const = default;
};

/// Header (magic, frameId u32, packetIndex u16, packetCount u16; little-endian) + payload.
std::vector<std::uint8_t> encode_packet(const VideoPacket& packet);
VideoPacket decode_packet(std::span<const std::uint8_t> datagram);

/// Splits a frame into ⌈size/max_payload⌉ fragments.
std::vector<VideoPacket> packetize(std::uint32_t frame_id, std::span<const std::uint8_t> frame,
                                   std::size_t max_payload = kMaxPayload);

struct Frame {
    std::uint32_t frame_id = 0;
    std::vector<std::uint8_t> bytes;
};

/// Rebuilds frames from fragments that may arrive out of order within a
/// frame. Frame ids are expected to increase. A frame still incomplete when a
/// packet of frameId+2 (or later) arrives is dropped, as is a frame whose
/// fragments disagree on packetCount. Ids skipped entirely count as dropped
/// too, so completed() + dropped() covers every id below the highest seen.
class Reassembler {
public:
    explicit Reassembler(std::uint32_t first_frame_id = 0) : next_unseen_(first_frame_id) {}

    /// Returns the frames this packet completed (zero or one).
    std::vector<Frame> push(const VideoPacket& packet);

    /// Closes the stream: pending frames are dropped, and when `end_frame_id`
    /// is given, ids up to it that never showed up are counted as dropped.
    void finish(std::optional<std::uint32_t> end_frame_id = std::nullopt);

    std::size_t completed() const { return completed_; }
    std::size_t dropped() const { return dropped_; }
    const std::vector<std::string>& notes() const { return notes_; }

private:
    struct Partial {
        std::uint16_t packet_count = 0;
        std::map<std::uint16_t, std::vector<std::uint8_t>> pieces;
    };

    void drop(std::uint32_t frame_id, const std::string& why);

    std::map<std::uint32_t, Partial> pending_;
    std::uint32_t next_unseen_;  // lowest id never touched
    std::size_t completed_ = 0;
    std::size_t dropped_ = 0;
    std::vector<std::string> notes_;
};

}  // namespace fallmon::tello
