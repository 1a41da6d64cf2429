#include "fallmon/tello/protocol.hpp"

#include <charconv>

#include "fallmon/errors.hpp"

namespace fallmon::tello {

namespace {

std::string printable(std::string_view s) {
    std::string out;
    for (unsigned char c : s) {
        if (c >= 0x20 && c < 0x7f) {
            out += static_cast<char>(c);
        } else {
            static constexpr char hex[] = "0123456789abcdef";
            out += "\\x";
            out += hex[c >> 4];
            out += hex[c & 15];
        }
    }
    return out;
}

int parse_int(std::string_view key, std::string_view value) {
    int out = 0;
    const char* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (value.empty() || ec != std::errc() || ptr != end) {
        throw ParseError("telemetry key '" + std::string(key) + "' needs an integer, got '" + printable(value) + "'",
                         std::string(key));
    }
    return out;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void check_packet(const VideoPacket& p) {
    if (p.packet_count == 0 || p.packet_index >= p.packet_count) {
        throw InputError("packet index " + std::to_string(p.packet_index) + " outside count " +
                         std::to_string(p.packet_count));
    }
    if (p.payload.empty() || p.payload.size() > kMaxPayload) {
        throw InputError("packet payload must hold 1.." + std::to_string(kMaxPayload) + " bytes, got " +
                         std::to_string(p.payload.size()));
    }
}

}  // namespace

DroneTelemetry parse_telemetry(std::string_view line) {
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
    DroneTelemetry t;
    t.raw = std::string(line);

    std::string_view rest = line;
    while (!rest.empty()) {
        const auto semi = rest.find(';');
        const std::string_view pair = rest.substr(0, semi);
        rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
        if (pair.empty()) continue;

        const auto colon = pair.find(':');
        if (colon == std::string_view::npos) {
            throw ParseError("telemetry pair '" + printable(pair) + "' has no ':'", printable(pair));
        }
        const std::string_view key = pair.substr(0, colon);
        const std::string_view value = pair.substr(colon + 1);
        if (key == "pitch") {
            t.pitch = parse_int(key, value);
        } else if (key == "roll") {
            t.roll = parse_int(key, value);
        } else if (key == "yaw") {
            t.yaw = parse_int(key, value);
        } else if (key == "h") {
            t.height = parse_int(key, value);
        } else if (key == "bat") {
            const int bat = parse_int(key, value);
            if (bat < 0 || bat > 100) throw ParseError("battery " + std::to_string(bat) + " outside 0..100", "bat");
            t.battery = bat;
        }
    }
    return t;
}

std::string format_telemetry(const DroneTelemetry& t) {
    std::string out;
    auto put = [&](const char* key, const std::optional<int>& v) {
        if (v) out += std::string(key) + ":" + std::to_string(*v) + ";";
    };
    put("pitch", t.pitch);
    put("roll", t.roll);
    put("yaw", t.yaw);
    put("h", t.height);
    put("bat", t.battery);
    return out + "\r\n";
}

std::vector<std::uint8_t> encode_packet(const VideoPacket& packet) {
    check_packet(packet);
    std::vector<std::uint8_t> out;
    out.reserve(kPacketHeaderSize + packet.payload.size());
    out.push_back(kPacketMagic[0]);
    out.push_back(kPacketMagic[1]);
    put_u32(out, packet.frame_id);
    put_u16(out, packet.packet_index);
    put_u16(out, packet.packet_count);
    out.insert(out.end(), packet.payload.begin(), packet.payload.end());
    return out;
}

VideoPacket decode_packet(std::span<const std::uint8_t> d) {
    if (d.size() < kPacketHeaderSize) throw FormatError("video packet shorter than its header", d.size());
    if (d[0] != kPacketMagic[0] || d[1] != kPacketMagic[1]) throw FormatError("bad video packet magic", 0);
    VideoPacket p;
    for (int i = 0; i < 4; ++i) p.frame_id |= static_cast<std::uint32_t>(d[2 + i]) << (8 * i);
    p.packet_index = static_cast<std::uint16_t>(d[6] | (d[7] << 8));
    p.packet_count = static_cast<std::uint16_t>(d[8] | (d[9] << 8));
    p.payload.assign(d.begin() + kPacketHeaderSize, d.end());
    if (p.packet_count == 0 || p.packet_index >= p.packet_count) {
        throw FormatError("video packet index outside its count", 6);
    }
    if (p.payload.empty()) throw FormatError("empty video packet payload", kPacketHeaderSize);
    if (p.payload.size() > kMaxPayload) throw FormatError("oversized video packet payload", kPacketHeaderSize);
    return p;
}

std::vector<VideoPacket> packetize(std::uint32_t frame_id, std::span<const std::uint8_t> frame,
                                   std::size_t max_payload) {
    if (frame.empty()) throw InputError("cannot packetize an empty frame");
    if (max_payload == 0 || max_payload > kMaxPayload) throw InputError("packet payload limit out of range");
    const std::size_t count = (frame.size() + max_payload - 1) / max_payload;
    if (count > 0xFFFF) throw InputError("frame needs more than 65535 packets");

    std::vector<VideoPacket> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto piece = frame.subspan(i * max_payload, std::min(max_payload, frame.size() - i * max_payload));
        out[i] = {frame_id, static_cast<std::uint16_t>(i), static_cast<std::uint16_t>(count),
                  {piece.begin(), piece.end()}};
    }
    return out;
}

void Reassembler::drop(std::uint32_t frame_id, const std::string& why) {
    pending_.erase(frame_id);
    ++dropped_;
    notes_.push_back("frame " + std::to_string(frame_id) + " dropped: " + why);
}

std::vector<Frame> Reassembler::push(const VideoPacket& p) {
    std::vector<Frame> out;
    if (p.packet_count == 0 || p.packet_index >= p.packet_count || p.payload.empty()) {
        notes_.push_back("frame " + std::to_string(p.frame_id) + ": malformed packet ignored");
        return out;
    }

    // Frames overtaken by traffic two ids ahead are given up on.
    while (!pending_.empty() && static_cast<std::uint64_t>(pending_.begin()->first) + 2 <= p.frame_id) {
        drop(pending_.begin()->first, "incomplete when frame " + std::to_string(p.frame_id) + " arrived");
    }

    if (p.frame_id < next_unseen_ && !pending_.contains(p.frame_id)) return out;  // already settled
    if (p.frame_id >= next_unseen_) {
        const std::size_t skipped = p.frame_id - next_unseen_;
        if (skipped > 0) {
            dropped_ += skipped;
            notes_.push_back(std::to_string(skipped) + " frame(s) before " + std::to_string(p.frame_id) +
                             " never arrived");
        }
        next_unseen_ = p.frame_id + 1;
        pending_[p.frame_id].packet_count = p.packet_count;
    }

    Partial& partial = pending_[p.frame_id];
    if (partial.packet_count != p.packet_count) {
        drop(p.frame_id, "packetCount " + std::to_string(p.packet_count) + " contradicts " +
                             std::to_string(partial.packet_count));
        return out;
    }
    partial.pieces.emplace(p.packet_index, p.payload);
    if (partial.pieces.size() == partial.packet_count) {
        Frame f{p.frame_id, {}};
        for (auto& [index, bytes] : partial.pieces) f.bytes.insert(f.bytes.end(), bytes.begin(), bytes.end());
        pending_.erase(p.frame_id);
        ++completed_;
        out.push_back(std::move(f));
    }
    return out;
}

void Reassembler::finish(std::optional<std::uint32_t> end_frame_id) {
    while (!pending_.empty()) drop(pending_.begin()->first, "stream ended");
    if (end_frame_id && *end_frame_id > next_unseen_) {
        const std::size_t skipped = *end_frame_id - next_unseen_;
        dropped_ += skipped;
        notes_.push_back(std::to_string(skipped) + " frame(s) never arrived before the stream ended");
        next_unseen_ = *end_frame_id;
    }
}

}  // namespace fallmon::tello
