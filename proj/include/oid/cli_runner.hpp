#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace oid {

// Exit codes shared by the CLI and by tests: 0 success, 2 configuration or
// input error, 3 design failed to terminate within max_time.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDesignFailed = 3;

struct CliOverrides {
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> runs;
};

/// design <config>: run the full pipeline and write design.csv, trace.csv,
/// fim.csv, ellipsoids.csv and summary.json into the output directory.
int run_design(const std::string& config_path, const CliOverrides& overrides = {});

/// validate <config> <design.csv>: Monte Carlo identification on a designed
/// input; writes montecarlo.csv and updates summary.json.
int run_validate(const std::string& config_path, const std::string& design_csv,
                 const CliOverrides& overrides = {});

}  // namespace oid
