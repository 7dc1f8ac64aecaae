#pragma once

// Independent reference implementations used by the unit and acceptance
// suites. None of these call into the code they check, except to run the
// forward pass whose derivative is being measured.

#include <cstdint>
#include <string>
#include <vector>

#include "pmn/evaluation.hpp"
#include "pmn/network.hpp"
#include "pmn/pose_features.hpp"

namespace pmn::testing {

// --- features -------------------------------------------------------------

/// Direct loop over the 17 joints, written from the formulas alone.
Matrix reference_relative(const Keypoints& k, const BoundingBox& object, double width, double height,
                          double threshold = 0.05);
Matrix reference_absolute(const Keypoints& k, const BoundingBox& human, double threshold = 0.05);

Keypoints random_keypoints(Rng& rng, double lo, double hi, double zero_fraction = 0.0);
BoundingBox random_box(Rng& rng, double lo, double hi);

/// Random pairs with features in a realistic range.
std::vector<BoxPairSample> random_pairs(Rng& rng, int count);

// --- gradients -------------------------------------------------------------

struct GradientCheckOptions {
    double step = 1e-3;
    double tolerance = 1e-4;
    double floor = 1e-6;
    /// Smooth probes wanted per tensor.
    int samples_per_tensor = 24;
    std::uint64_t seed = 1;
};

struct TensorGradientReport {
    std::string name;
    int probed = 0;
    /// Candidates rejected because a ReLU input changed sign within +-step.
    int skipped = 0;
    double max_relative_error = 0.0;
    double max_abs_error = 0.0;
    /// Largest |a - fd| / max(tolerance * max(|a|, |fd|), floor); above 1 fails.
    double worst_usage = 0.0;
    int failures = 0;
};

struct GradientReport {
    std::vector<TensorGradientReport> tensors;
    double worst_usage = 0.0;
    std::string worst_tensor;
    int failures = 0;
    /// Tensors for which no smooth probe was found.
    std::vector<std::string> starved;
    bool passed() const { return failures == 0 && starved.empty(); }
};

/// Compares backward() against central differences of L = sum(R .* p2) for a
/// fixed random R, in train mode with a fixed dropout seed. Probes whose
/// +-step perturbation flips any ReLU are redrawn.
GradientReport check_gradients(const ModelParams& params, const SkeletonGraph& graph,
                               const FeatureBatch& batch, const ForwardOptions& forward_options,
                               const GradientCheckOptions& options = {});

// --- evaluation ------------------------------------------------------------

/// Straight-line evaluator: per-category ranking, greedy matching and AP as
/// the mean over ground truths of the best precision at or beyond each hit.
struct ReferenceReport {
    double full_map = 0.0;
    std::vector<std::pair<HoiCategory, double>> per_category;
};
ReferenceReport reference_evaluate(const std::vector<HoiDetection>& dets,
                                   const std::vector<GroundTruthHoi>& gts);

/// AP of a ranked flag sequence by the same definition.
double reference_ap(const std::vector<bool>& ranked_flags, int num_gt);

struct ToyCorpus {
    std::vector<HoiDetection> dets;
    std::vector<GroundTruthHoi> gts;
};
/// At most `max_dets` detections over at most 3 categories and 3 images,
/// boxes on a coarse grid so that duplicates and ties are common.
ToyCorpus random_corpus(Rng& rng, int max_dets = 20);

}  // namespace pmn::testing
