#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "pmn/io.hpp"

namespace pmn {

struct FeaturizeOptions {
    PairingOptions pairing;
    /// Take K from the first p1 vector found when pairing.num_actions <= 0.
    bool infer_num_actions = true;
    /// Abort on degenerate geometry; otherwise skip the pair with a diagnostic.
    bool strict = true;
};

struct FeaturizeResult {
    std::vector<BoxPairSample> pairs;
    std::vector<Diagnostic> diagnostics;
};

/// Pairs every above-threshold human with every other above-threshold
/// instance of the same image, in record then index order.
FeaturizeResult featurize(std::span<const DetectionRecord> records, const FeaturizeOptions& options = {});

/// Attaches externally supplied p1 vectors to matching pairs.
void attach_p1(std::span<BoxPairSample> pairs, const std::map<PairKey, std::vector<double>>& p1);

/// One detection per pair and action, scored s_h * s_o * sigmoid(p1 + p2).
std::vector<HoiDetection> predict(const ModelParams& params, const SkeletonGraph& graph,
                                  std::span<const BoxPairSample> pairs,
                                  StreamMode streams = StreamMode::both);

/// Builds the labelled training set: features plus IoU-assigned labels.
TrainingSet make_training_set(std::vector<BoxPairSample> pairs, std::span<const GroundTruthHoi> gts,
                              int num_actions);

}  // namespace pmn
