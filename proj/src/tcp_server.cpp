#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include "atm/service.hpp"

namespace atm::server {

namespace {

bool send_all(int fd, const wire::Bytes& bytes)
{
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto n = ::send(fd, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            return false;
        }
        off += static_cast<std::size_t>(n);
    }
    return true;
}

} // namespace

TcpServer::TcpServer(Switch& core, const HostPort& addr) : core_(core)
{
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const auto port = std::to_string(addr.port);
    if (::getaddrinfo(addr.host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
        throw std::runtime_error("cannot resolve listen address " + addr.host);

    listen_fd_ = ::socket(res->ai_family, res->ai_socktype | SOCK_CLOEXEC, res->ai_protocol);
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    const bool ok = listen_fd_ >= 0 && ::bind(listen_fd_, res->ai_addr, res->ai_addrlen) == 0
                    && ::listen(listen_fd_, 64) == 0;
    ::freeaddrinfo(res);
    if (!ok) {
        const std::string err = std::strerror(errno);
        if (listen_fd_ >= 0)
            ::close(listen_fd_);
        throw std::runtime_error("bind failure on " + addr.host + ":" + port + ": " + err);
    }

    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
    acceptor_ = std::thread([this] { accept_loop(); });
}

TcpServer::~TcpServer() { stop(); }

void TcpServer::stop()
{
    if (stopping_.exchange(true))
        return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (acceptor_.joinable())
        acceptor_.join();
    std::unique_lock lock(conn_mu_);
    for (int fd : client_fds_)
        ::shutdown(fd, SHUT_RDWR);
    conn_cv_.wait(lock, [this] { return active_ == 0; });
}

void TcpServer::accept_loop()
{
    while (!stopping_) {
        const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0) {
            if (errno == EINTR || errno == ECONNABORTED)
                continue;
            return;
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        std::lock_guard lock(conn_mu_);
        if (stopping_) {
            ::close(fd);
            return;
        }
        client_fds_.push_back(fd);
        ++active_;
        std::thread([this, fd] { serve_connection(fd); }).detach();
    }
}

void TcpServer::serve_connection(int fd)
{
    TerminalSession terminal;
    wire::Bytes buffer;
    std::uint8_t chunk[4096];
    bool open = true;
    while (open) {
        const auto n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            break;
        buffer.insert(buffer.end(), chunk, chunk + n);

        try {
            while (auto decoded = wire::decode_frame(buffer)) {
                buffer.erase(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(decoded->consumed));
                wire::Message response = wire::ErrMsg{wire::ResponseCode::Malformed};
                try {
                    response = core_.process(terminal, wire::decode_message(decoded->frame));
                } catch (const wire::MalformedPayload&) {
                }
                if (!send_all(fd, wire::encode_frame(wire::encode_message(response)))) {
                    open = false;
                    break;
                }
            }
        } catch (const wire::FrameError&) {
            // corrupted transport: drop the connection
            open = false;
        }
    }

    if (terminal.token && !terminal.terminated) {
        try {
            core_.process(terminal, wire::EndSession{*terminal.token});
        } catch (const std::exception&) {
        }
    }
    std::lock_guard lock(conn_mu_);
    client_fds_.remove(fd);
    ::close(fd);
    --active_;
    conn_cv_.notify_all();
}

} // namespace atm::server
