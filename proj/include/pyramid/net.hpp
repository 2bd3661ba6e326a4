#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pyramid/errors.hpp"
#include "pyramid/wire.hpp"

namespace pyramid {

/// One TCP connection carrying length-prefixed frames (u32 LE payload size,
/// then payload). Move-only RAII over the socket fd.
class TcpConn {
public:
    TcpConn() = default;
    explicit TcpConn(int fd) : fd_(fd) {}
    TcpConn(TcpConn&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    TcpConn& operator=(TcpConn&& other) noexcept;
    TcpConn(const TcpConn&) = delete;
    TcpConn& operator=(const TcpConn&) = delete;
    ~TcpConn();

    bool valid() const { return fd_ >= 0; }
    void close();

    void send_frame(const Bytes& payload);
    /// nullopt on clean peer close; throws ConnectivityError on errors or
    /// timeout (timeout_ms > 0).
    std::optional<Bytes> recv_frame(int timeout_ms = 0);

private:
    void send_all(const void* data, std::size_t len);
    bool recv_all(void* data, std::size_t len, int timeout_ms, bool eof_ok);

    int fd_ = -1;
};

/// Connects to "host:port". Throws ConnectivityError.
TcpConn tcp_connect(const std::string& addr, int timeout_ms = 2000);

class TcpListener {
public:
    /// Binds host:port; port 0 picks an ephemeral port.
    explicit TcpListener(const std::string& host, std::uint16_t port = 0);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    std::string local_addr() const { return addr_; }
    /// Blocks up to timeout_ms; nullopt on timeout or after close().
    std::optional<TcpConn> accept(int timeout_ms);
    void close();

private:
    int fd_ = -1;
    std::string addr_;
};

}  // namespace pyramid
