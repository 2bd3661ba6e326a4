#include "pyramid/net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace pyramid {

namespace {

constexpr std::size_t kMaxFrame = 64u << 20;

[[noreturn]] void fail(const std::string& what) {
    throw ConnectivityError(what + ": " + std::strerror(errno));
}

std::pair<std::string, std::uint16_t> split_addr(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) throw ConnectivityError("bad address: " + addr);
    return {addr.substr(0, colon), std::uint16_t(std::stoi(addr.substr(colon + 1)))};
}

void wait_readable(int fd, int timeout_ms) {
    pollfd pfd{fd, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, timeout_ms);
    if (rc == 0) throw NetTimeout("recv timeout");
    if (rc < 0) fail("poll");
}

}  // namespace

TcpConn& TcpConn::operator=(TcpConn&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

TcpConn::~TcpConn() { close(); }

void TcpConn::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void TcpConn::send_all(const void* data, std::size_t len) {
    const char* p = static_cast<const char*>(data);
    while (len > 0) {
        const ssize_t n = ::send(fd_, p, len, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            fail("send");
        }
        p += n;
        len -= std::size_t(n);
    }
}

bool TcpConn::recv_all(void* data, std::size_t len, int timeout_ms, bool eof_ok) {
    char* p = static_cast<char*>(data);
    std::size_t got = 0;
    while (got < len) {
        if (timeout_ms > 0) wait_readable(fd_, timeout_ms);
        const ssize_t n = ::recv(fd_, p + got, len - got, 0);
        if (n == 0) {
            if (eof_ok && got == 0) return false;
            throw ConnectivityError("peer closed mid-frame");
        }
        if (n < 0) {
            if (errno == EINTR) continue;
            fail("recv");
        }
        got += std::size_t(n);
    }
    return true;
}

void TcpConn::send_frame(const Bytes& payload) {
    if (fd_ < 0) throw ConnectivityError("send on closed connection");
    const std::uint32_t len = std::uint32_t(payload.size());
    Bytes buf;
    buf.reserve(4 + payload.size());
    const auto* lp = reinterpret_cast<const std::uint8_t*>(&len);
    buf.insert(buf.end(), lp, lp + 4);
    buf.insert(buf.end(), payload.begin(), payload.end());
    send_all(buf.data(), buf.size());
}

std::optional<Bytes> TcpConn::recv_frame(int timeout_ms) {
    if (fd_ < 0) throw ConnectivityError("recv on closed connection");
    std::uint32_t len = 0;
    if (!recv_all(&len, 4, timeout_ms, true)) return std::nullopt;
    if (len > kMaxFrame) throw ConnectivityError("oversized frame");
    Bytes payload(len);
    if (len > 0) recv_all(payload.data(), len, timeout_ms, false);
    return payload;
}

TcpConn tcp_connect(const std::string& addr, int timeout_ms) {
    const auto [host, port] = split_addr(addr);
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) fail("socket");
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1) {
        ::close(fd);
        throw ConnectivityError("bad host: " + host);
    }
    timeval tv{timeout_ms / 1000, (timeout_ms % 1000) * 1000};
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
    if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0) {
        const int err = errno;
        ::close(fd);
        errno = err;
        fail("connect " + addr);
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return TcpConn(fd);
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) fail("socket");
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1) {
        ::close(fd_);
        throw ConnectivityError("bad host: " + host);
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0) {
        const int err = errno;
        ::close(fd_);
        errno = err;
        fail("bind " + host + ":" + std::to_string(port));
    }
    if (::listen(fd_, 128) != 0) fail("listen");
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    addr_ = host + ":" + std::to_string(ntohs(bound.sin_port));
}

TcpListener::~TcpListener() { close(); }

void TcpListener::close() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
        ::close(fd_);
        fd_ = -1;
    }
}

std::optional<TcpConn> TcpListener::accept(int timeout_ms) {
    if (fd_ < 0) return std::nullopt;
    pollfd pfd{fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, timeout_ms);
    if (rc <= 0) return std::nullopt;
    const int cfd = ::accept(fd_, nullptr, nullptr);
    if (cfd < 0) return std::nullopt;
    int one = 1;
    ::setsockopt(cfd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return TcpConn(cfd);
}

}  // namespace pyramid
