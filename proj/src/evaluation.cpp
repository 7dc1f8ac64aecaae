#include "pmn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace pmn {

double iou(const BoundingBox& a, const BoundingBox& b) {
    const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

std::string to_string(const HoiCategory& category) {
    return std::to_string(category.object_category) + ":" + std::to_string(category.action);
}

CategorySplit CategorySplit::from_counts(const std::map<HoiCategory, int>& training_counts,
                                         int rare_threshold) {
    CategorySplit split;
    for (const auto& [category, count] : training_counts) {
        split.add(category, count < rare_threshold);
    }
    return split;
}

CategorySplit CategorySplit::from_ground_truth(std::span<const GroundTruthHoi> training_gts,
                                               int rare_threshold) {
    std::map<HoiCategory, int> counts;
    for (const auto& gt : training_gts) ++counts[gt.category];
    return from_counts(counts, rare_threshold);
}

bool CategorySplit::is_rare(const HoiCategory& category) const {
    auto it = rare_.find(category);
    return it != rare_.end() && it->second;
}

namespace {

auto box_key(const BoundingBox& b) { return std::make_tuple(b.x_min, b.y_min, b.x_max, b.y_max); }

bool gt_order(const GroundTruthHoi& a, const GroundTruthHoi& b) {
    if (a.image_id != b.image_id) return a.image_id < b.image_id;
    return std::make_tuple(box_key(a.human_box), box_key(a.object_box)) <
           std::make_tuple(box_key(b.human_box), box_key(b.object_box));
}

}  // namespace

bool ranks_before(const HoiDetection& a, const HoiDetection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image_id != b.image_id) return a.image_id < b.image_id;
    return std::make_tuple(box_key(a.human_box), box_key(a.object_box)) <
           std::make_tuple(box_key(b.human_box), box_key(b.object_box));
}

std::vector<bool> match_detections(std::span<const HoiDetection> dets,
                                   std::span<const GroundTruthHoi> gts) {
    std::vector<std::size_t> det_order(dets.size());
    std::iota(det_order.begin(), det_order.end(), 0);
    std::stable_sort(det_order.begin(), det_order.end(),
                     [&](std::size_t a, std::size_t b) { return ranks_before(dets[a], dets[b]); });

    std::vector<std::size_t> gt_rank(gts.size());
    std::iota(gt_rank.begin(), gt_rank.end(), 0);
    std::stable_sort(gt_rank.begin(), gt_rank.end(),
                     [&](std::size_t a, std::size_t b) { return gt_order(gts[a], gts[b]); });

    std::vector<bool> taken(gts.size(), false);
    std::vector<bool> flags(dets.size(), false);
    for (std::size_t d : det_order) {
        double best = -1.0;
        std::size_t best_gt = gts.size();
        for (std::size_t g : gt_rank) {
            if (taken[g]) continue;
            const double h = iou(dets[d].human_box, gts[g].human_box);
            const double o = iou(dets[d].object_box, gts[g].object_box);
            if (h < kMatchIou || o < kMatchIou) continue;
            const double quality = std::min(h, o);
            if (quality > best) {
                best = quality;
                best_gt = g;
            }
        }
        if (best_gt < gts.size()) {
            taken[best_gt] = true;
            flags[d] = true;
        }
    }
    return flags;
}

double average_precision(std::span<const ScoredFlag> ranked, int num_gt) {
    if (num_gt <= 0) return 0.0;
    std::vector<ScoredFlag> order(ranked.begin(), ranked.end());
    std::stable_sort(order.begin(), order.end(),
                     [](const ScoredFlag& a, const ScoredFlag& b) { return a.score > b.score; });

    const std::size_t n = order.size();
    std::vector<double> precision(n);
    std::vector<double> recall(n);
    double tp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (order[i].true_positive) tp += 1.0;
        precision[i] = tp / static_cast<double>(i + 1);
        recall[i] = tp / static_cast<double>(num_gt);
    }
    // Monotone precision envelope, right to left.
    for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

    double ap = 0.0;
    double previous_recall = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ap += (recall[i] - previous_recall) * precision[i];
        previous_recall = recall[i];
    }
    return ap;
}

EvalReport evaluate(std::span<const HoiDetection> dets, std::span<const GroundTruthHoi> gts,
                    const std::optional<CategorySplit>& split) {
    for (const auto& d : dets) {
        if (!(d.score >= 0.0 && d.score <= 1.0)) {
            throw ValidationError("detection score " + std::to_string(d.score) + " in image '" +
                                  d.image_id + "' is outside [0, 1]");
        }
    }

    CategorySplit vocabulary;
    if (split) {
        vocabulary = *split;
        for (const auto& d : dets) {
            if (!vocabulary.contains(d.category)) {
                throw ValidationError("detection in image '" + d.image_id +
                                      "' references unknown category " + to_string(d.category));
            }
        }
        for (const auto& g : gts) {
            if (!vocabulary.contains(g.category)) {
                throw ValidationError("ground truth in image '" + g.image_id +
                                      "' references unknown category " + to_string(g.category));
            }
        }
    } else {
        for (const auto& d : dets) vocabulary.add(d.category, false);
        for (const auto& g : gts) vocabulary.add(g.category, false);
    }

    // category -> image -> records
    std::map<HoiCategory, std::map<std::string, std::vector<HoiDetection>>> det_groups;
    std::map<HoiCategory, std::map<std::string, std::vector<GroundTruthHoi>>> gt_groups;
    for (const auto& d : dets) det_groups[d.category][d.image_id].push_back(d);
    for (const auto& g : gts) gt_groups[g.category][g.image_id].push_back(g);

    EvalReport report;
    double full_sum = 0.0;
    double rare_sum = 0.0;
    double non_rare_sum = 0.0;
    for (const auto& [category, rare] : vocabulary.categories()) {
        CategoryResult result;
        result.rare = rare;

        int num_gt = 0;
        if (auto it = gt_groups.find(category); it != gt_groups.end()) {
            for (const auto& [image, records] : it->second) num_gt += static_cast<int>(records.size());
        }
        result.num_gt = num_gt;

        std::vector<HoiDetection> ranked_dets;
        std::vector<bool> ranked_flags;
        if (auto it = det_groups.find(category); it != det_groups.end()) {
            for (const auto& [image, image_dets] : it->second) {
                std::span<const GroundTruthHoi> image_gts;
                if (auto git = gt_groups.find(category); git != gt_groups.end()) {
                    if (auto iit = git->second.find(image); iit != git->second.end()) {
                        image_gts = iit->second;
                    }
                }
                const auto flags = match_detections(image_dets, image_gts);
                for (std::size_t i = 0; i < image_dets.size(); ++i) {
                    ranked_dets.push_back(image_dets[i]);
                    ranked_flags.push_back(flags[i]);
                }
            }
        }
        result.num_detections = static_cast<int>(ranked_dets.size());

        std::vector<std::size_t> order(ranked_dets.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return ranks_before(ranked_dets[a], ranked_dets[b]);
        });
        std::vector<ScoredFlag> scored;
        scored.reserve(order.size());
        for (std::size_t i : order) scored.push_back({ranked_dets[i].score, ranked_flags[i]});
        result.ap = average_precision(scored, num_gt);
        report.per_category[category] = result;

        if (num_gt == 0) continue;
        full_sum += result.ap;
        ++report.num_full;
        if (rare) {
            rare_sum += result.ap;
            ++report.num_rare;
        } else {
            non_rare_sum += result.ap;
            ++report.num_non_rare;
        }
    }
    if (report.num_full > 0) report.full_map = full_sum / report.num_full;
    if (report.num_rare > 0) report.rare_map = rare_sum / report.num_rare;
    if (report.num_non_rare > 0) report.non_rare_map = non_rare_sum / report.num_non_rare;
    return report;
}

}  // namespace pmn
