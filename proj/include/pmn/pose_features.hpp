#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "pmn/common.hpp"

namespace pmn {

/// COCO keypoint order.
enum class Joint : int {
    nose = 0,
    left_eye,
    right_eye,
    left_ear,
    right_ear,
    left_shoulder,
    right_shoulder,
    left_elbow,
    right_elbow,
    left_wrist,
    right_wrist,
    left_hip,
    right_hip,
    left_knee,
    right_knee,
    left_ankle,
    right_ankle,
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct Keypoints {
    std::array<Point, kNumJoints> coords{};
    std::array<double, kNumJoints> confidence{};

    const Point& operator[](Joint j) const { return coords[static_cast<int>(j)]; }
    Point& operator[](Joint j) { return coords[static_cast<int>(j)]; }
};

struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;
    double score = 1.0;
    int category = 0;

    Point center() const { return {(x_min + x_max) / 2.0, (y_min + y_max) / 2.0}; }
    double area() const { return (x_max - x_min) * (y_max - y_min); }
    bool valid() const;
};

struct ImageDims {
    double width = 0.0;
    double height = 0.0;
};

/// One detected human.
struct PoseInstance {
    BoundingBox box;
    Keypoints keypoints;
};

/// 17x2 relative spatial features and 17x2 absolute features.
struct PairFeatures {
    Matrix f_rp = Matrix::Zero(kNumJoints, 2);
    Matrix f_ap = Matrix::Zero(kNumJoints, 2);
};

/// One candidate <human, object> pair.
struct BoxPairSample {
    std::string image_id;
    int human_index = 0;
    int object_index = 0;
    BoundingBox human_box;
    BoundingBox object_box;
    PairFeatures features;
    std::optional<std::vector<double>> p1;
};

struct FeatureOptions {
    /// Keypoints with estimator confidence below this are zero-filled.
    double keypoint_threshold = 0.05;
    /// Guard on |center| in the absolute-feature denominator.
    double center_epsilon = 1e-6;
};

struct PairingOptions {
    double human_threshold = 0.8;
    double object_threshold = 0.3;
    /// Expected length of p1 vectors, i.e. K.
    int num_actions = 117;
    FeatureOptions features;
};

/// Row i = ((x_i - x_c^o) / W, (y_i - y_c^o) / H) against the object box center.
Matrix relative_features(const Keypoints& kpts, const BoundingBox& object_box,
                         const ImageDims& dims, const FeatureOptions& options = {});

/// Row i = (x_i / x_c^h, y_i / y_c^h) against the human box center.
/// Throws DegenerateGeometryError when either center component is within
/// `center_epsilon` of zero.
Matrix absolute_features(const Keypoints& kpts, const BoundingBox& human_box,
                         const FeatureOptions& options = {});

/// Returns nullopt when either detection is below its score threshold.
/// Throws ConfigError when p1 is present with a length other than K.
std::optional<BoxPairSample> build_pair(const PoseInstance& human, const BoundingBox& object,
                                        const ImageDims& dims,
                                        const std::optional<std::vector<double>>& p1,
                                        const PairingOptions& options);

}  // namespace pmn
