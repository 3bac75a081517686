// SPDX-License-Identifier: Apache-2.0
#pragma once

// Network checkpoint document (JSON):
//   {
//     "format": "fairprep.densenet", "version": 1,
//     "widths": [in, h1, ..., out], "activations": ["relu", ..., "identity"],
//     "dropout": 0.1, "seed": 42, "rng_state": "<mt19937_64 state>",
//     "params": [flat parameters, layer by layer: W (in x out, row-major) then b]
//   }
// Doubles are written in shortest round-trip form, so parameters reload bit-exactly.

#include <filesystem>
#include <json.hpp>

#include "fairprep/nn.hpp"

namespace fairprep {

inline constexpr int kCheckpointVersion = 1;

nlohmann::json to_json(const DenseNet& net);
DenseNet densenet_from_json(const nlohmann::json& doc);

void save_json(const nlohmann::json& doc, const std::filesystem::path& path);
nlohmann::json load_json(const std::filesystem::path& path);

}  // namespace fairprep
