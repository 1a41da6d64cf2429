#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <netinet/in.h>

namespace fallmon::tello {

struct Address {
    sockaddr_in raw{};

    static Address resolve(const std::string& host, std::uint16_t port);
    std::string host() const;
    std::uint16_t port() const;
    bool operator==(const Address& other) const;
};

struct Datagram {
    std::vector<std::uint8_t> bytes;
    Address from;
};

/// IPv4 datagram socket bound to `port` (0 picks an ephemeral port).
class UdpSocket {
public:
    explicit UdpSocket(std::uint16_t port = 0, const std::string& bind_host = "0.0.0.0");
    ~UdpSocket();
    UdpSocket(UdpSocket&& other) noexcept;
    UdpSocket& operator=(UdpSocket&& other) noexcept;
    UdpSocket(const UdpSocket&) = delete;
    UdpSocket& operator=(const UdpSocket&) = delete;

    std::uint16_t port() const { return port_; }

    void send_to(std::span<const std::uint8_t> bytes, const Address& to);
    void send_to(const std::string& text, const Address& to);

    /// Waits up to `timeout` for one datagram.
    std::optional<Datagram> receive(std::chrono::milliseconds timeout);

    /// Discards anything already queued on the socket.
    std::size_t drain();

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

}  // namespace fallmon::tello
