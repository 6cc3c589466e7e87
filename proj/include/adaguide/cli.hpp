// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration behind the command-line tool. Configuration keys
// are shared by the JSON config file and the flags, and a run only touches
// the output directory once every result is computed.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace adaguide {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitContract = 4;

struct RunConfig {
    std::string command;           // verify | hjb | train | simulate | export-figure1
    std::string model;             // empty selects the built-in four-Gaussian triangle
    std::string out;
    double alpha = 10.0;
    std::uint64_t seed = 1;
    std::size_t steps = 256;       // time nodes
    std::optional<std::size_t> paths;
    std::size_t workers = 1;
    std::string method = "heun";
    std::optional<bool> antithetic;
    std::vector<int> classes;      // empty means every class of the model
    double cutoff = 0.01;
    double w = 0.5;                // constant guidance for verify and simulate
    std::vector<double> deltas{0.05, 0.1, 0.5};
    std::size_t ito_paths = 1000;
    // HJB
    double h = 0.05;
    double half_width = 4.0;
    double tol_g = 1e-12;
    double pde_dt = 0.0;
    std::vector<double> slice_times;  // empty selects the six figure panels
    // Training
    std::size_t iterations = 25;
    double learning_rate = 0.05;
    std::string optimizer = "adam";
    double clip_norm = 10.0;
    std::optional<double> init_w;     // default 1/alpha
    double lambda_clip = 1e4;
    bool drop_guidance_hessian = false;
    double grad_w_quantile_clip = 0.0;
};

/// Every key accepted in a config file (and, with dashes, as a flag).
[[nodiscard]] const std::vector<std::string>& config_keys();

/// Applies a JSON object onto cfg. Unknown keys and wrong types throw InvalidInput.
void apply_config(RunConfig& cfg, const nlohmann::json& obj);

/// Defaults, then the file (if any), then the flag overrides.
[[nodiscard]] RunConfig resolve_config(const std::string& command, const std::string& config_file,
                                       const nlohmann::json& overrides);

/// The fully resolved configuration, with per-command defaults filled in.
[[nodiscard]] nlohmann::ordered_json resolved_config_json(const RunConfig& cfg);

/// Runs the command and returns its exit code. Errors are reported on stderr.
/// Nothing is written unless the run reaches the export stage.
int run_command(const RunConfig& cfg);

/// Output files produced by a run, by relative path. Exposed for tests.
struct RunOutputs {
    std::map<std::string, std::string> files;
    int exit_code = kExitOk;
};
[[nodiscard]] RunOutputs execute(const RunConfig& cfg);

[[nodiscard]] const char* tool_version() noexcept;

}  // namespace adaguide
