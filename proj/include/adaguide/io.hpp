// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "adaguide/mixture_model.hpp"

namespace adaguide {

/// Shortest round-trip-safe rendering is not used on purpose: every number is
/// written with 17 significant digits so identical runs give identical bytes.
[[nodiscard]] std::string format_double(double v);

/// 64-bit FNV-1a, rendered as 16 hex digits.
[[nodiscard]] std::string content_hash(std::string_view bytes);

[[nodiscard]] std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

struct LoadedModel {
    MixtureModel model;
    std::string hash;  // content_hash of the file bytes
    std::vector<std::string> warnings;
};

/// {"dim", "T", "components": [{"weight", "mean", "variance", "class"}]}.
/// Weights are normalized; a warning is recorded if the raw sum is off by more than 1e-9.
/// Unknown keys are rejected.
[[nodiscard]] LoadedModel parse_model(std::string_view text);
[[nodiscard]] LoadedModel load_model(const std::filesystem::path& path);
[[nodiscard]] std::string model_to_json(const MixtureModel& model);

}  // namespace adaguide
