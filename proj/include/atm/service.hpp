#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <thread>

#include "atm/switch.hpp"

namespace httplib {
class Server;
}

namespace atm::server {

/// Binary protocol over TCP, one thread and one session per connection.
class TcpServer {
public:
    TcpServer(Switch& core, const HostPort& addr);
    ~TcpServer();
    TcpServer(const TcpServer&) = delete;
    TcpServer& operator=(const TcpServer&) = delete;

    int port() const noexcept { return port_; }
    void stop();

private:
    void accept_loop();
    void serve_connection(int fd);

    Switch& core_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;
    std::mutex conn_mu_;
    std::condition_variable conn_cv_;
    std::size_t active_ = 0; // detached connection threads still running
    std::list<int> client_fds_;
};

/// JSON mirror of the protocol for the kiosk UI. Every call is translated
/// into the same wire::Message the terminal would send.
class HttpGateway {
public:
    HttpGateway(Switch& core, const HostPort& addr, std::filesystem::path samples_dir);
    ~HttpGateway();
    HttpGateway(const HttpGateway&) = delete;
    HttpGateway& operator=(const HttpGateway&) = delete;

    int port() const noexcept { return port_; }
    void stop();

private:
    void install_routes();

    Switch& core_;
    std::filesystem::path samples_dir_;
    std::unique_ptr<httplib::Server> http_;
    int port_ = 0;
    std::thread thread_;
};

struct ServiceOptions {
    TokenSource tokens;
    Clock clock;
    vault::VaultOptions vault;
    bool enable_http = true;
};

/// serve(config): data directory, switch core, TCP and HTTP front ends and
/// the idle-session sweeper.
class Service {
public:
    explicit Service(SwitchConfig config, ServiceOptions options = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    int tcp_port() const { return tcp_->port(); }
    int http_port() const { return http_ ? http_->port() : 0; }
    Switch& core() { return *core_; }
    vault::Vault& vault() { return data_->vault(); }
    void stop();

private:
    std::unique_ptr<vault::DataDir> data_;
    std::unique_ptr<Switch> core_;
    std::unique_ptr<TcpServer> tcp_;
    std::unique_ptr<HttpGateway> http_;
    std::mutex sweep_mu_;
    std::condition_variable sweep_cv_;
    bool stopping_ = false;
    std::thread sweeper_;
};

} // namespace atm::server
