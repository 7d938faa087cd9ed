#pragma once

// Run configuration shared by the fit, simulate and predict commands. Loaded
// from a JSON document whose keys are all optional; unknown keys are errors.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qfuse/pipeline.hpp"

namespace qfuse {

struct SimulationConfig {
    int experiment = 1;
    int n = 60;
    int T = 100;
    int replications = 100;
    int threads = 0;
    bool coverage = true;
    std::vector<double> coverage_x{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
};

struct OutputConfig {
    std::filesystem::path dir = "qfuse-out";
    std::string bundle = "bundle.json";
    bool plot_csv = true;
};

struct RunConfig {
    std::vector<double> taus{0.5};
    FitSettings fit;
    SimulationConfig simulation;
    std::optional<std::filesystem::path> data;
    OutputConfig output;
    std::uint64_t seed = 20240101;

    /// Throws ConfigError on the first invalid setting.
    void validate() const;
};

/// Parses a JSON configuration; missing keys keep their defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical JSON of every setting (defaults included).
std::string dump_config(const RunConfig& config);

}  // namespace qfuse
