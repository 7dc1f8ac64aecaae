#pragma once

#include <cstdint>
#include <vector>

#include "pmn/io.hpp"

namespace pmn {

/// Actions of the synthetic corpus. Each label is a fixed function of the
/// pose and object geometry, with a rejection margin around every boundary.
enum class SyntheticAction : int {
    object_above_head = 0,  // object center above the nose
    object_right = 1,       // object center right of the human box center
    right_wrist_raised = 2, // right wrist above right shoulder
    left_wrist_raised = 3,  // left wrist above left shoulder
    object_at_hand = 4,     // object center within reach of either wrist
};

inline constexpr int kSyntheticActions = 5;

struct SyntheticOptions {
    int num_images = 100;
    int objects_per_image = 2;
    double width = 640.0;
    double height = 480.0;
    /// Object categories are drawn uniformly from [2, 2 + num_object_categories).
    int num_object_categories = 2;
    double human_score = 0.95;
    double object_score = 0.9;
    std::uint64_t seed = 7;
};

/// Images with one human and `objects_per_image` objects each; every record
/// carries its own annotations in `hois`.
std::vector<DetectionRecord> make_synthetic_dataset(const SyntheticOptions& options = {});

}  // namespace pmn
