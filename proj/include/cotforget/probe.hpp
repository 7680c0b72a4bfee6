// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cotforget/metrics.hpp"

namespace cotforget {

struct CurvePoint {
    std::string mode;
    int epoch = 0;
    std::optional<double> rouge;  // absent when the epoch checkpoint is missing
    std::optional<double> cs;
};

struct ProbeResult {
    std::vector<CurvePoint> points;
    std::vector<int> missing_epochs;
};

/// Forget-answer ROUGE and CS per mode and epoch. `checkpoints` pairs each
/// epoch with its directory; the first entry must be the target (epoch 0),
/// whose outputs under each mode are the CS reference. Missing directories
/// become gaps.
ProbeResult probe_decoding(std::span<const std::pair<int, std::string>> checkpoints,
                           std::span<const ReasoningExample> forget, std::span<const ThinkMode> modes,
                           EmbeddingProvider& embedder, const DecodeParams& params);

/// `curves.csv` (mode,epoch,rouge,cs) plus `rouge.svg` and `cs.svg`.
void write_probe_outputs(const ProbeResult& result, const std::string& out_dir);

}  // namespace cotforget
