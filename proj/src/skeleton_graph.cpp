#include "pmn/skeleton_graph.hpp"

#include <cmath>

namespace pmn {

std::string to_string(Topology topology) {
    return topology == Topology::skeleton ? "skeleton" : "complete";
}

Topology topology_from_string(const std::string& name) {
    if (name == "skeleton") return Topology::skeleton;
    if (name == "complete") return Topology::complete;
    throw ConfigError("unknown graph topology '" + name + "' (expected skeleton|complete)");
}

const std::vector<Edge>& coco_edges() {
    static const std::vector<Edge> edges = {
        {15, 13}, {13, 11}, {16, 14}, {14, 12}, {11, 12}, {5, 11}, {6, 12},
        {5, 6},   {5, 7},   {6, 8},   {7, 9},   {8, 10},  {1, 2},  {0, 1},
        {0, 2},   {1, 3},   {2, 4},   {3, 5},   {4, 6},
    };
    return edges;
}

SkeletonGraph::SkeletonGraph(int num_nodes, const std::vector<Edge>& edges)
    : edges_(edges), adjacency_(Matrix::Zero(num_nodes, num_nodes)) {
    if (num_nodes <= 0) throw ValidationError("graph needs at least one node");
    for (const auto& [a, b] : edges_) {
        if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes) {
            throw ValidationError("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                                  ") is out of range");
        }
        if (a == b) throw ValidationError("self loop on node " + std::to_string(a));
        adjacency_(a, b) = 1.0;
        adjacency_(b, a) = 1.0;
    }
    normalized_ = normalize(adjacency_);
}

SkeletonGraph coco_skeleton() { return SkeletonGraph(kNumJoints, coco_edges()); }

SkeletonGraph complete_graph(int num_nodes) {
    std::vector<Edge> edges;
    for (int i = 0; i < num_nodes; ++i)
        for (int j = i + 1; j < num_nodes; ++j) edges.emplace_back(i, j);
    return SkeletonGraph(num_nodes, edges);
}

SkeletonGraph make_graph(Topology topology) {
    return topology == Topology::skeleton ? coco_skeleton() : complete_graph();
}

Matrix normalize(const Matrix& adjacency) {
    const Eigen::Index n = adjacency.rows();
    if (adjacency.cols() != n) throw ValidationError("adjacency matrix must be square");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (adjacency(i, i) != 0.0) throw ValidationError("adjacency diagonal must be zero");
        for (Eigen::Index j = 0; j < n; ++j) {
            const double v = adjacency(i, j);
            if (v != 0.0 && v != 1.0) throw ValidationError("adjacency entries must be 0 or 1");
            if (v != adjacency(j, i)) throw ValidationError("adjacency matrix must be symmetric");
        }
    }

    Eigen::VectorXd degree(n);
    for (Eigen::Index i = 0; i < n; ++i) degree(i) = adjacency.row(i).sum() + 1.0;

    Matrix out = Matrix::Zero(n, n);
    // Fill the upper triangle and mirror it so symmetry is exact.
    for (Eigen::Index i = 0; i < n; ++i) {
        out(i, i) = 1.0 / degree(i);
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (adjacency(i, j) == 0.0) continue;
            const double v = 1.0 / std::sqrt(degree(i) * degree(j));
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

}  // namespace pmn
