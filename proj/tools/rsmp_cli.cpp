// Batch front-end: rsmp_cli <subcommand> --config run.json [--dotted.key=value ...]

#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rsmp/commands.hpp"

namespace {

// CLI11 hands unknown `--a.b=v` options back either whole or split into
// "--a.b" and "v"; both shapes become "a.b=v".
std::vector<std::string> collect_overrides(const std::vector<std::string>& extras) {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < extras.size(); ++k) {
        const std::string& arg = extras[k];
        if (arg.rfind("--", 0) != 0) throw rsmp::Error(rsmp::ErrorKind::ConfigParse, "unexpected argument '" + arg + "'");
        if (arg.find('=') != std::string::npos) {
            out.push_back(arg.substr(2));
        } else if (k + 1 < extras.size() && extras[k + 1].rfind("--", 0) != 0) {
            out.push_back(arg.substr(2) + "=" + extras[++k]);
        } else {
            throw rsmp::Error(rsmp::ErrorKind::ConfigParse, "override '" + arg + "' has no value");
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regime-switching mean-variance toolkit"};
    app.allow_extras();
    std::string subcommand;
    std::string config;
    std::vector<std::string> names;
    for (auto n : rsmp::subcommand_names()) names.emplace_back(n);
    app.add_option("subcommand", subcommand, "one of: simulate-chain, solve-odes, optimal-control, evaluate, verify, frontier")
        ->required()
        ->check(CLI::IsMember(names));
    app.add_option("-c,--config", config, "JSON run configuration")->required();
    app.footer("Any --section.key=value overrides the matching config entry, e.g. --numerics.seed=42.");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return rsmp::kExitConfigError;
    }

    std::vector<std::string> overrides;
    try {
        overrides = collect_overrides(app.remaining());
    } catch (const rsmp::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return rsmp::kExitConfigError;
    }
    return rsmp::run(subcommand, config, overrides);
}
