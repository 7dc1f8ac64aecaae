#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pmn/common.hpp"

namespace pmn {

using Edge = std::pair<int, int>;

enum class Topology { skeleton, complete };

std::string to_string(Topology topology);
Topology topology_from_string(const std::string& name);

/// Standard COCO 17-keypoint skeleton, 0-based joint indices (19 edges).
const std::vector<Edge>& coco_edges();

/// Joint graph with binary adjacency A and its normalization
/// A_hat = D^-1/2 (A + I) D^-1/2. Immutable once built.
class SkeletonGraph {
public:
    SkeletonGraph(int num_nodes, const std::vector<Edge>& edges);

    int num_nodes() const { return static_cast<int>(adjacency_.rows()); }
    const std::vector<Edge>& edges() const { return edges_; }
    const Matrix& adjacency() const { return adjacency_; }
    const Matrix& normalized() const { return normalized_; }

private:
    std::vector<Edge> edges_;
    Matrix adjacency_;
    Matrix normalized_;
};

SkeletonGraph coco_skeleton();
SkeletonGraph complete_graph(int num_nodes = kNumJoints);
SkeletonGraph make_graph(Topology topology);

/// Symmetric normalization with self loops. Rejects non-square, asymmetric,
/// non-binary, or self-looped input with ValidationError.
Matrix normalize(const Matrix& adjacency);

}  // namespace pmn
