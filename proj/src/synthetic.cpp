#include "pmn/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace pmn {

namespace {

// Resting pose in human-box units (u right, v down). Wrists and elbows are
// overwritten per sample.
constexpr std::array<Point, kNumJoints> kTemplate = {{
    {0.50, 0.10},  // nose
    {0.45, 0.08}, {0.55, 0.08},  // eyes
    {0.40, 0.10}, {0.60, 0.10},  // ears
    {0.65, 0.25}, {0.35, 0.25},  // shoulders (left, right)
    {0.72, 0.40}, {0.28, 0.40},  // elbows
    {0.75, 0.55}, {0.25, 0.55},  // wrists
    {0.60, 0.55}, {0.40, 0.55},  // hips
    {0.60, 0.75}, {0.40, 0.75},  // knees
    {0.60, 0.95}, {0.40, 0.95},  // ankles
}};

constexpr double kJitter = 0.015;
constexpr double kAxisMargin = 12.0;  // pixels
constexpr double kReach = 65.0;
constexpr double kReachMargin = 20.0;
constexpr double kNearWristProbability = 0.4;

Point wrist_pose(Rng& rng, bool raised, bool left) {
    const double u = left ? rng.uniform(0.65, 0.95) : rng.uniform(0.05, 0.35);
    const double v = raised ? rng.uniform(0.02, 0.14) : rng.uniform(0.38, 0.55);
    return {u, v};
}

struct Human {
    BoundingBox box;
    Keypoints keypoints;
};

Human sample_human(Rng& rng, const SyntheticOptions& o) {
    Human h;
    const double w = rng.uniform(90.0, 150.0);
    const double ht = rng.uniform(220.0, 320.0);
    h.box.x_min = rng.uniform(0.0, o.width - w);
    h.box.y_min = rng.uniform(0.0, o.height - ht);
    h.box.x_max = h.box.x_min + w;
    h.box.y_max = h.box.y_min + ht;
    h.box.score = o.human_score;
    h.box.category = kDefaultHumanCategory;

    std::array<Point, kNumJoints> unit = kTemplate;
    const auto ls = static_cast<int>(Joint::left_shoulder);
    const auto rs = static_cast<int>(Joint::right_shoulder);
    const auto lw = static_cast<int>(Joint::left_wrist);
    const auto rw = static_cast<int>(Joint::right_wrist);
    unit[lw] = wrist_pose(rng, rng.uniform() < 0.5, true);
    unit[rw] = wrist_pose(rng, rng.uniform() < 0.5, false);
    unit[static_cast<int>(Joint::left_elbow)] = {(unit[ls].x + unit[lw].x) / 2 + 0.05,
                                                 (unit[ls].y + unit[lw].y) / 2};
    unit[static_cast<int>(Joint::right_elbow)] = {(unit[rs].x + unit[rw].x) / 2 - 0.05,
                                                  (unit[rs].y + unit[rw].y) / 2};
    for (int j = 0; j < kNumJoints; ++j) {
        const double u = unit[j].x + rng.uniform(-kJitter, kJitter);
        const double v = unit[j].y + rng.uniform(-kJitter, kJitter);
        h.keypoints.coords[j] = {h.box.x_min + u * w, h.box.y_min + v * ht};
        h.keypoints.confidence[j] = 0.9;
    }
    return h;
}

double wrist_distance(const Keypoints& k, const Point& c) {
    auto dist = [&](Joint j) { return std::hypot(k[j].x - c.x, k[j].y - c.y); };
    return std::min(dist(Joint::left_wrist), dist(Joint::right_wrist));
}

bool unambiguous(const Human& h, const Point& c) {
    if (std::abs(c.y - h.keypoints[Joint::nose].y) < kAxisMargin) return false;
    if (std::abs(c.x - h.box.center().x) < kAxisMargin) return false;
    return std::abs(wrist_distance(h.keypoints, c) - kReach) >= kReachMargin;
}

BoundingBox sample_object(Rng& rng, const Human& h, const std::vector<BoundingBox>& placed,
                          const SyntheticOptions& o) {
    for (;;) {
        const double w = rng.uniform(40.0, 90.0);
        const double ht = rng.uniform(40.0, 90.0);
        Point c;
        if (rng.uniform() < kNearWristProbability) {
            const Point& wrist = h.keypoints[rng.uniform() < 0.5 ? Joint::left_wrist : Joint::right_wrist];
            const double angle = rng.uniform(0.0, 2.0 * M_PI);
            const double radius = rng.uniform(0.0, kReach - kReachMargin);
            c = {wrist.x + radius * std::cos(angle), wrist.y + radius * std::sin(angle)};
        } else {
            c = {rng.uniform(0.0, o.width), rng.uniform(0.0, o.height)};
        }
        c.x = std::clamp(c.x, w / 2, o.width - w / 2);
        c.y = std::clamp(c.y, ht / 2, o.height - ht / 2);

        BoundingBox box{c.x - w / 2, c.y - ht / 2, c.x + w / 2, c.y + ht / 2, o.object_score, 0};
        if (!unambiguous(h, box.center())) continue;
        const bool overlaps = std::any_of(placed.begin(), placed.end(),
                                          [&](const BoundingBox& other) { return iou(box, other) >= 0.2; });
        if (overlaps) continue;
        box.category = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(o.num_object_categories)));
        return box;
    }
}

std::array<bool, kSyntheticActions> actions_of(const Human& h, const BoundingBox& object) {
    const Keypoints& k = h.keypoints;
    const Point c = object.center();
    std::array<bool, kSyntheticActions> a{};
    a[static_cast<int>(SyntheticAction::object_above_head)] = c.y < k[Joint::nose].y;
    a[static_cast<int>(SyntheticAction::object_right)] = c.x > h.box.center().x;
    a[static_cast<int>(SyntheticAction::right_wrist_raised)] = k[Joint::right_wrist].y < k[Joint::right_shoulder].y;
    a[static_cast<int>(SyntheticAction::left_wrist_raised)] = k[Joint::left_wrist].y < k[Joint::left_shoulder].y;
    a[static_cast<int>(SyntheticAction::object_at_hand)] = wrist_distance(k, c) < kReach;
    return a;
}

}  // namespace

std::vector<DetectionRecord> make_synthetic_dataset(const SyntheticOptions& options) {
    if (options.num_images < 1 || options.objects_per_image < 1 || options.num_object_categories < 1) {
        throw ConfigError("synthetic dataset needs at least one image, object and object category");
    }
    Rng rng(options.seed);
    std::vector<DetectionRecord> records;
    for (int i = 0; i < options.num_images; ++i) {
        DetectionRecord r;
        r.image_id = "synth_" + std::to_string(i);
        r.dims = {options.width, options.height};
        const Human human = sample_human(rng, options);
        r.instances.push_back({human.box, human.keypoints});

        std::vector<BoundingBox> placed;
        for (int j = 0; j < options.objects_per_image; ++j) {
            placed.push_back(sample_object(rng, human, placed, options));
        }
        for (const auto& object : placed) {
            r.instances.push_back({object, std::nullopt});
            const auto labels = actions_of(human, object);
            for (int a = 0; a < kSyntheticActions; ++a) {
                if (!labels[static_cast<std::size_t>(a)]) continue;
                r.hois.push_back({r.image_id, human.box, object, {object.category, a}});
            }
        }
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace pmn
