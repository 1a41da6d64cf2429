#include "fallmon/tello/udp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <utility>

#include "fallmon/errors.hpp"

namespace fallmon::tello {

namespace {

[[noreturn]] void fail(const std::string& what) { throw IoError(what + ": " + std::strerror(errno)); }

constexpr std::size_t kMaxDatagram = 65536;

}  // namespace

Address Address::resolve(const std::string& host, std::uint16_t port) {
    Address a;
    a.raw.sin_family = AF_INET;
    a.raw.sin_port = htons(port);
    if (inet_pton(AF_INET, host.c_str(), &a.raw.sin_addr) == 1) return a;

    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_DGRAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
        throw IoError("cannot resolve host '" + host + "'");
    }
    a.raw.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
    return a;
}

std::string Address::host() const {
    char buf[INET_ADDRSTRLEN] = {};
    inet_ntop(AF_INET, &raw.sin_addr, buf, sizeof buf);
    return buf;
}

std::uint16_t Address::port() const { return ntohs(raw.sin_port); }

bool Address::operator==(const Address& other) const {
    return raw.sin_addr.s_addr == other.raw.sin_addr.s_addr && raw.sin_port == other.raw.sin_port;
}

UdpSocket::UdpSocket(std::uint16_t port, const std::string& bind_host) {
    fd_ = ::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) fail("socket");
    const Address local = Address::resolve(bind_host, port);
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&local.raw), sizeof local.raw) != 0) {
        const int err = errno;
        ::close(fd_);
        errno = err;
        fail("bind udp port " + std::to_string(port));
    }
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
}

UdpSocket::~UdpSocket() {
    if (fd_ >= 0) ::close(fd_);
}

UdpSocket::UdpSocket(UdpSocket&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), port_(other.port_) {}

UdpSocket& UdpSocket::operator=(UdpSocket&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) ::close(fd_);
        fd_ = std::exchange(other.fd_, -1);
        port_ = other.port_;
    }
    return *this;
}

void UdpSocket::send_to(std::span<const std::uint8_t> bytes, const Address& to) {
    const auto n = ::sendto(fd_, bytes.data(), bytes.size(), 0, reinterpret_cast<const sockaddr*>(&to.raw),
                            sizeof to.raw);
    if (n < 0) fail("sendto " + to.host() + ":" + std::to_string(to.port()));
}

void UdpSocket::send_to(const std::string& text, const Address& to) {
    send_to(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), to);
}

std::optional<Datagram> UdpSocket::receive(std::chrono::milliseconds timeout) {
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::max<std::int64_t>(0, timeout.count())));
    if (ready < 0) {
        if (errno == EINTR) return std::nullopt;
        fail("poll");
    }
    if (ready == 0) return std::nullopt;

    Datagram d;
    d.bytes.resize(kMaxDatagram);
    socklen_t len = sizeof d.from.raw;
    const auto n = ::recvfrom(fd_, d.bytes.data(), d.bytes.size(), 0, reinterpret_cast<sockaddr*>(&d.from.raw), &len);
    if (n < 0) {
        // ICMP port-unreachable from an earlier send surfaces here on Linux.
        if (errno == ECONNREFUSED || errno == EINTR || errno == EAGAIN) return std::nullopt;
        fail("recvfrom");
    }
    d.bytes.resize(static_cast<std::size_t>(n));
    return d;
}

std::size_t UdpSocket::drain() {
    std::size_t n = 0;
    while (receive(std::chrono::milliseconds(0))) ++n;
    return n;
}

}  // namespace fallmon::tello
