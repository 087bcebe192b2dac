#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "atm/teller.hpp"

using namespace atm;

int main(int argc, char** argv)
{
    CLI::App app{"ATM terminal"};
    app.require_subcommand(1);
    std::string addr = "127.0.0.1:7400";
    std::string script_path;

    auto* run = app.add_subcommand("run", "run a script against the switch");
    run->add_option("--addr", addr, "switch address HOST:PORT");
    run->add_option("--script", script_path, "script file")->required();
    auto* interactive = app.add_subcommand("interactive", "drive a session from the keyboard");
    interactive->add_option("--addr", addr, "switch address HOST:PORT");
    CLI11_PARSE(app, argc, argv);

    server::HostPort hp;
    try {
        hp = server::parse_host_port(addr);
    } catch (const std::exception& e) {
        std::cerr << "teller: " << e.what() << '\n';
        return teller::kExitParse;
    }

    if (*interactive)
        return teller::run_interactive(hp, std::cin, std::cout);

    std::ifstream in(script_path);
    if (!in) {
        std::cerr << "teller: cannot read " << script_path << '\n';
        return teller::kExitParse;
    }
    std::stringstream text;
    text << in.rdbuf();
    std::vector<teller::Action> script;
    try {
        script = teller::parse_script(text.str(), std::filesystem::path(script_path).parent_path());
    } catch (const teller::ScriptError& e) {
        std::cerr << "teller: " << script_path << ": " << e.what() << '\n';
        return teller::kExitParse;
    }
    return teller::run_script(hp, script, std::cout);
}
