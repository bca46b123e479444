#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace rela::cli {

struct CliOptions {
    std::string out_dir = "runs";
    std::optional<std::uint64_t> seed_override;
    std::size_t threads = 2;
    bool quiet = false;
};

/// The supported subcommands, in help order.
const std::vector<std::string>& command_names();

/// Full default configuration (canonical JSON) for one command.
nlohmann::json default_config(const std::string& command);

/// Merges user keys over the defaults; unknown keys anywhere are rejected.
nlohmann::json merge_config(const std::string& command, const nlohmann::json& user);

/// Hash that names the run directory: fnv1a64 over command + canonical config.
std::string config_hash(const std::string& command, const nlohmann::json& config);

/// Runs one command. Returns the run directory (created under
/// opts.out_dir, named <command>-<hash>). All files are written atomically
/// and are byte-identical across replays of the same config + seed.
std::string run_command(const std::string& command, const nlohmann::json& user_config,
                        const CliOptions& opts);

/// Shortest round-trip decimal formatting for 64-bit floats.
std::string format_double(double v);

/// Writes content to path via a temp file + rename.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace rela::cli
