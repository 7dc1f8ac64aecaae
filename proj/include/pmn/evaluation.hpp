#pragma once

#include <compare>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmn/pose_features.hpp"

namespace pmn {

/// Intersection over union; 0 when the union is empty.
double iou(const BoundingBox& a, const BoundingBox& b);

/// An HOI class: (object class, action). For action-only (role-style)
/// evaluation the object class is collapsed to kAnyObject.
struct HoiCategory {
    int object_category = 0;
    int action = 0;

    auto operator<=>(const HoiCategory&) const = default;
};

inline constexpr int kAnyObject = -1;

std::string to_string(const HoiCategory& category);

struct HoiDetection {
    std::string image_id;
    BoundingBox human_box;
    BoundingBox object_box;
    HoiCategory category;
    double score = 0.0;
};

struct GroundTruthHoi {
    std::string image_id;
    BoundingBox human_box;
    BoundingBox object_box;
    HoiCategory category;
};

inline constexpr double kMatchIou = 0.5;
inline constexpr int kRareThreshold = 10;

/// Full / Rare / Non-Rare membership. A category is rare when it has fewer
/// than `kRareThreshold` training samples.
class CategorySplit {
public:
    CategorySplit() = default;
    static CategorySplit from_counts(const std::map<HoiCategory, int>& training_counts,
                                     int rare_threshold = kRareThreshold);
    static CategorySplit from_ground_truth(std::span<const GroundTruthHoi> training_gts,
                                           int rare_threshold = kRareThreshold);

    void add(const HoiCategory& category, bool rare) { rare_[category] = rare; }
    bool contains(const HoiCategory& category) const { return rare_.count(category) > 0; }
    bool is_rare(const HoiCategory& category) const;
    const std::map<HoiCategory, bool>& categories() const { return rare_; }

private:
    std::map<HoiCategory, bool> rare_;
};

/// Matches one image's detections of one category against that image's
/// ground truth of the same category. Returns flags aligned with `dets`.
std::vector<bool> match_detections(std::span<const HoiDetection> dets,
                                   std::span<const GroundTruthHoi> gts);

struct ScoredFlag {
    double score = 0.0;
    bool true_positive = false;
};

/// All-point interpolated AP over detections ranked by descending score
/// (stable: equal scores keep their input order). Returns 0 when num_gt == 0.
double average_precision(std::span<const ScoredFlag> ranked, int num_gt);

struct CategoryResult {
    double ap = 0.0;
    int num_gt = 0;
    int num_detections = 0;
    bool rare = false;
};

struct EvalReport {
    double full_map = 0.0;
    double rare_map = 0.0;
    double non_rare_map = 0.0;
    int num_full = 0;
    int num_rare = 0;
    int num_non_rare = 0;
    std::map<HoiCategory, CategoryResult> per_category;
};

/// When `split` is given it defines the category vocabulary and any record
/// outside it is a ValidationError. Otherwise every category seen is
/// evaluated as non-rare. Categories without ground truth are excluded from
/// every mean.
EvalReport evaluate(std::span<const HoiDetection> dets, std::span<const GroundTruthHoi> gts,
                    const std::optional<CategorySplit>& split = std::nullopt);

/// Strict weak order used to rank detections: score descending, then image
/// id and box coordinates, so results never depend on input order.
bool ranks_before(const HoiDetection& a, const HoiDetection& b);

}  // namespace pmn
