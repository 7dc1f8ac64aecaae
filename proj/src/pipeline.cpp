#include "pmn/pipeline.hpp"

namespace pmn {

FeaturizeResult featurize(std::span<const DetectionRecord> records, const FeaturizeOptions& options) {
    PairingOptions pairing = options.pairing;
    if (options.infer_num_actions && pairing.num_actions <= 0) {
        for (const auto& r : records) {
            if (!r.p1.empty()) {
                pairing.num_actions = static_cast<int>(r.p1.front().scores.size());
                break;
            }
        }
    }

    FeaturizeResult result;
    std::size_t line = 0;
    for (const auto& record : records) {
        ++line;
        std::map<std::pair<int, int>, const std::vector<double>*> p1;
        for (const auto& ps : record.p1) p1[{ps.human_index, ps.object_index}] = &ps.scores;

        const int n = static_cast<int>(record.instances.size());
        for (int h = 0; h < n; ++h) {
            const auto& human = record.instances[static_cast<std::size_t>(h)];
            if (!human.keypoints) continue;
            const PoseInstance pose{human.box, *human.keypoints};
            for (int o = 0; o < n; ++o) {
                if (o == h) continue;
                std::optional<std::vector<double>> factor;
                if (auto it = p1.find({h, o}); it != p1.end()) factor = *it->second;
                std::optional<BoxPairSample> pair;
                try {
                    pair = build_pair(pose, record.instances[static_cast<std::size_t>(o)].box, record.dims,
                                      factor, pairing);
                } catch (const DegenerateGeometryError& e) {
                    const std::string message = "image '" + record.image_id + "' pair (" + std::to_string(h) +
                                                ", " + std::to_string(o) + "): " + e.what();
                    if (options.strict) throw DegenerateGeometryError(message);
                    result.diagnostics.push_back({line, message});
                    continue;
                }
                if (!pair) continue;
                pair->image_id = record.image_id;
                pair->human_index = h;
                pair->object_index = o;
                result.pairs.push_back(std::move(*pair));
            }
        }
    }
    return result;
}

void attach_p1(std::span<BoxPairSample> pairs, const std::map<PairKey, std::vector<double>>& p1) {
    for (auto& pair : pairs) {
        if (auto it = p1.find({pair.image_id, pair.human_index, pair.object_index}); it != p1.end()) {
            pair.p1 = it->second;
        }
    }
}

std::vector<HoiDetection> predict(const ModelParams& params, const SkeletonGraph& graph,
                                  std::span<const BoxPairSample> pairs, StreamMode streams) {
    const int k = num_actions(params);
    const Matrix p2 = infer_logits(params, graph, pairs, streams);
    const Matrix s_a = fuse_scores(gather_p1(pairs, k), p2);

    std::vector<HoiDetection> dets;
    dets.reserve(pairs.size() * static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& pair = pairs[i];
        for (int a = 0; a < k; ++a) {
            HoiDetection d;
            d.image_id = pair.image_id;
            d.human_box = pair.human_box;
            d.object_box = pair.object_box;
            d.category = {pair.object_box.category, a};
            d.score = triplet_score(pair.human_box.score, pair.object_box.score,
                                    s_a(static_cast<Eigen::Index>(i), a));
            dets.push_back(std::move(d));
        }
    }
    return dets;
}

TrainingSet make_training_set(std::vector<BoxPairSample> pairs, std::span<const GroundTruthHoi> gts,
                              int num_actions) {
    for (const auto& gt : gts) {
        if (gt.category.action < 0 || gt.category.action >= num_actions) {
            throw ValidationError("annotation in image '" + gt.image_id + "' has action " +
                                  std::to_string(gt.category.action) + " outside [0, " +
                                  std::to_string(num_actions) + ")");
        }
    }
    TrainingSet set;
    set.labels = assign_labels(pairs, gts, num_actions);
    set.pairs = std::move(pairs);
    return set;
}

}  // namespace pmn
