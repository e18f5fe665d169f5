#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace ahmi::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

/// Settings shared by all subcommands. Loaded from `--config` and then
/// overridden by individual flags.
struct RunConfig {
    std::string event_log;
    std::string sequences;
    std::string model;
    std::string report;
    std::string vocabulary;
    std::string simulation;  // simulation config path
    std::vector<std::size_t> orders{1, 2, 3};
    std::size_t order = 2;
    std::size_t k = 3;
    bool context_mode = true;
    bool backoff = true;
    std::size_t min_support = 30;
    std::uint64_t seed = 42;
};

/// Throws std::invalid_argument on bad types or values.
void apply_config_json(RunConfig& config, const nlohmann::json& doc);

/// Entry point: `argv[0]` is the program name.
int run(std::span<const std::string> argv, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace ahmi::cli
