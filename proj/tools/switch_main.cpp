#include <csignal>
#include <iostream>

#include "CLI11.hpp"

#include "atm/service.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"ATM authorization switch"};
    std::string config_path;
    std::string listen;
    std::string http;
    std::string data_dir;
    bool no_http = false;
    app.add_option("--config", config_path, "key = value config file");
    app.add_option("--listen", listen, "binary protocol address HOST:PORT");
    app.add_option("--http", http, "JSON gateway address HOST:PORT");
    app.add_option("--data-dir", data_dir, "directory holding journal.log");
    app.add_flag("--no-http", no_http, "do not start the JSON gateway");
    CLI11_PARSE(app, argc, argv);

    // Block the shutdown signals before any thread starts so that only
    // sigwait below sees them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    try {
        atm::server::SwitchConfig config;
        if (!config_path.empty())
            config = atm::server::load_config(config_path);
        if (!listen.empty())
            config.listen_addr = listen;
        if (!http.empty())
            config.http_addr = http;
        if (!data_dir.empty())
            config.data_dir = data_dir;

        atm::server::ServiceOptions options;
        options.enable_http = !no_http;
        atm::server::Service service(config, options);
        const auto tcp = atm::server::parse_host_port(config.listen_addr);
        std::cout << "tcp " << tcp.host << ':' << service.tcp_port() << std::endl;
        if (!no_http) {
            const auto web = atm::server::parse_host_port(config.http_addr);
            std::cout << "http " << web.host << ':' << service.http_port() << std::endl;
        }

        int sig = 0;
        sigwait(&signals, &sig);
        std::cerr << "switch: shutting down\n";
        service.stop();
    } catch (const std::exception& e) {
        std::cerr << "switch: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
