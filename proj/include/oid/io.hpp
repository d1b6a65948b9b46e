#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "oid/appset.hpp"
#include "oid/lti.hpp"
#include "oid/types.hpp"

namespace oid {

/// Configuration or input-file problem; message carries the file and, when
/// known, the line or JSON path of the offending entry.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MonteCarloBlock {
    int runs = 100;
    std::uint64_t seed = 1;
    double lambda_scale = 1.0;
};

struct RunConfig {
    ParametricLtiModel model;
    ExperimentSpec spec;
    VappScenario vapp;
    MonteCarloBlock monte_carlo;
    std::filesystem::path output_dir = "out";
};

/// Model document: {"structure": "fir"|"state_space"|"rational_tf", ...}.
/// Schema in the README. Throws ConfigError.
ParametricLtiModel load_model(const std::filesystem::path& path);

/// Run configuration; model given inline or as a path relative to the config
/// file. Throws ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);

// CSV with 17-significant-digit decimals: doubles round-trip bit-exactly.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
CsvTable read_csv(const std::filesystem::path& path);

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_csv(const std::filesystem::path& path);

std::string format_double(double v);  // %.17g

}  // namespace oid
