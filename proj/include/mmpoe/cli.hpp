#pragma once

// Subcommands: extract, train, cv, synth, report.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace mmpoe {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// args excludes the program name. Help goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

/// {"seed", "config_hash", "version"}; the hash covers `config.dump()`.
nlohmann::json reproducibility_block(std::uint64_t seed, const nlohmann::json& config);

}  // namespace mmpoe
