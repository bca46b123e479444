#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <thread>

#include "rela/cli.hpp"

namespace {

std::size_t default_threads() {
    if (const char* env = std::getenv("RELA_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic experiment runner for the rela toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "runs";
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::size_t threads = default_threads();
    bool quiet = false;

    for (const std::string& name : rela::cli::command_names()) {
        CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--seed", seed, "override the config seed")
            ->each([&](const std::string&) { seed_given = true; });
        sub->add_option("--out", out_dir, "output parent directory");
        sub->add_option("--threads", threads, "worker threads (RELA_THREADS as fallback)");
        sub->add_flag("--quiet", quiet, "suppress the run-directory line");
    }

    CLI11_PARSE(app, argc, argv);

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        nlohmann::json user_config;
        if (!config_path.empty()) {
            std::ifstream is(config_path);
            if (!is) throw std::runtime_error("cannot open config file: " + config_path);
            user_config = nlohmann::json::parse(is);
        }
        rela::cli::CliOptions opts;
        opts.out_dir = out_dir;
        if (seed_given) opts.seed_override = seed;
        opts.threads = threads;
        opts.quiet = quiet;
        rela::cli::run_command(command, user_config, opts);
    } catch (const std::exception& e) {
        const nlohmann::json err{{"error", e.what()}, {"command", command}};
        std::fprintf(stderr, "%s\n", err.dump().c_str());
        return 1;
    }
    return 0;
}
