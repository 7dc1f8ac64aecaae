#include "pmn/pose_features.hpp"

#include <cmath>

namespace pmn {

bool BoundingBox::valid() const {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
           std::isfinite(y_max) && x_min <= x_max && y_min <= y_max;
}

namespace {

void check_finite(const Keypoints& kpts) {
    for (int i = 0; i < kNumJoints; ++i) {
        const Point& p = kpts.coords[i];
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
            throw ValidationError("keypoint " + std::to_string(i) + " has non-finite coordinates");
        }
    }
}

bool visible(const Keypoints& kpts, int joint, const FeatureOptions& options) {
    return kpts.confidence[joint] >= options.keypoint_threshold;
}

}  // namespace

Matrix relative_features(const Keypoints& kpts, const BoundingBox& object_box,
                         const ImageDims& dims, const FeatureOptions& options) {
    if (!(dims.width > 0.0) || !(dims.height > 0.0) || !std::isfinite(dims.width) ||
        !std::isfinite(dims.height)) {
        throw ValidationError("image dimensions must be positive and finite");
    }
    if (!object_box.valid()) throw ValidationError("object box is invalid");
    check_finite(kpts);

    const Point c = object_box.center();
    Matrix out = Matrix::Zero(kNumJoints, 2);
    for (int i = 0; i < kNumJoints; ++i) {
        if (!visible(kpts, i, options)) continue;
        out(i, 0) = (kpts.coords[i].x - c.x) / dims.width;
        out(i, 1) = (kpts.coords[i].y - c.y) / dims.height;
    }
    return out;
}

Matrix absolute_features(const Keypoints& kpts, const BoundingBox& human_box,
                         const FeatureOptions& options) {
    if (!human_box.valid()) throw ValidationError("human box is invalid");
    check_finite(kpts);

    const Point c = human_box.center();
    if (std::abs(c.x) < options.center_epsilon || std::abs(c.y) < options.center_epsilon) {
        throw DegenerateGeometryError("human box center (" + std::to_string(c.x) + ", " +
                                      std::to_string(c.y) + ") is too close to zero");
    }
    Matrix out = Matrix::Zero(kNumJoints, 2);
    for (int i = 0; i < kNumJoints; ++i) {
        if (!visible(kpts, i, options)) continue;
        out(i, 0) = kpts.coords[i].x / c.x;
        out(i, 1) = kpts.coords[i].y / c.y;
    }
    return out;
}

std::optional<BoxPairSample> build_pair(const PoseInstance& human, const BoundingBox& object,
                                        const ImageDims& dims,
                                        const std::optional<std::vector<double>>& p1,
                                        const PairingOptions& options) {
    if (p1 && static_cast<int>(p1->size()) != options.num_actions) {
        throw ConfigError("p1 has " + std::to_string(p1->size()) + " entries but K = " +
                          std::to_string(options.num_actions));
    }
    if (human.box.score < options.human_threshold || object.score < options.object_threshold) {
        return std::nullopt;
    }
    BoxPairSample pair;
    pair.human_box = human.box;
    pair.object_box = object;
    pair.features.f_rp = relative_features(human.keypoints, object, dims, options.features);
    pair.features.f_ap = absolute_features(human.keypoints, human.box, options.features);
    pair.p1 = p1;
    return pair;
}

}  // namespace pmn
