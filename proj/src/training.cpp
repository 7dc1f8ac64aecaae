#include "pmn/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pmn {

TrainConfig TrainConfig::hico_det() {
    TrainConfig c;
    c.num_actions = 117;
    c.lr_drop_epoch = 150;
    c.stop_epoch = 200;
    return c;
}

TrainConfig TrainConfig::v_coco() {
    TrainConfig c;
    c.num_actions = 24;
    c.lr_drop_epoch = 400;
    c.stop_epoch = 600;
    return c;
}

void TrainConfig::validate() const {
    if (num_actions < 1) throw ConfigError("num_actions must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(lr_initial > 0.0) || !(lr_drop > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (lr_drop_epoch < 0 || stop_epoch < 1) throw ConfigError("epochs must be non-negative");
    if (lr_drop_epoch >= stop_epoch) throw ConfigError("lr_drop_epoch must be below stop_epoch");
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw ConfigError("bn_momentum must lie in (0, 1]");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
    if (grad_clip < 0.0) throw ConfigError("grad_clip must be non-negative");
    if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be non-negative");
    if (edges && topology != Topology::skeleton) {
        throw ConfigError("an explicit edge list requires the skeleton topology");
    }
}

SkeletonGraph TrainConfig::graph() const {
    if (edges) return SkeletonGraph(kNumJoints, *edges);
    return make_graph(topology);
}

double learning_rate_at(const TrainConfig& config, int epoch) {
    return epoch < config.lr_drop_epoch ? config.lr_initial : config.lr_drop;
}

namespace {

void check_same_shape(const Matrix& scores, const Matrix& labels) {
    if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) {
        throw ValidationError("scores are " + std::to_string(scores.rows()) + "x" +
                              std::to_string(scores.cols()) + " but labels are " +
                              std::to_string(labels.rows()) + "x" + std::to_string(labels.cols()));
    }
    if (scores.size() == 0) throw ValidationError("loss over an empty batch");
}

}  // namespace

double bce_loss(const Matrix& scores, const Matrix& labels) {
    check_same_shape(scores, labels);
    double total = 0.0;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        const double s = std::clamp(scores.data()[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
        const double y = labels.data()[i];
        total -= y * std::log(s) + (1.0 - y) * std::log(1.0 - s);
    }
    return total / static_cast<double>(scores.size());
}

Matrix bce_logit_gradient(const Matrix& scores, const Matrix& labels) {
    check_same_shape(scores, labels);
    return (scores - labels) / static_cast<double>(scores.size());
}

AdamState make_adam_state(const ModelParams& params) {
    AdamState state;
    for (const auto& t : trainable_tensors(params)) {
        state.names.push_back(t.name);
        state.first_moment.push_back(Matrix::Zero(t.value->rows(), t.value->cols()));
        state.second_moment.push_back(Matrix::Zero(t.value->rows(), t.value->cols()));
    }
    return state;
}

void adam_update(std::span<const NamedTensor> params, std::span<const ConstNamedTensor> grads,
                 AdamState& state, double lr) {
    if (params.size() != grads.size()) {
        throw ShapeError("parameter and gradient lists differ in length");
    }
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.names.push_back(p.name);
            state.first_moment.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
            state.second_moment.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ShapeError("optimizer state does not match the parameter list");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix& g = *grads[i].value;
        if (g.rows() != params[i].value->rows() || g.cols() != params[i].value->cols() ||
            state.first_moment[i].rows() != g.rows() || state.first_moment[i].cols() != g.cols()) {
            throw ShapeError("gradient for '" + params[i].name + "' does not match its parameter");
        }
        if (!g.allFinite()) {
            throw TrainingDivergedError("non-finite gradient for parameter '" + params[i].name + "'");
        }
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix& g = *grads[i].value;
        Matrix& m = state.first_moment[i];
        Matrix& v = state.second_moment[i];
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        params[i].value->array() -=
            lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + state.epsilon);
    }
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr) {
    const auto p = trainable_tensors(params);
    const auto g = trainable_tensors(grads);
    adam_update(p, g, state, lr);
}

Matrix assign_labels(std::span<const BoxPairSample> pairs, std::span<const GroundTruthHoi> gts,
                     int num_actions) {
    Matrix labels = Matrix::Zero(static_cast<Eigen::Index>(pairs.size()), num_actions);
    std::map<std::string, std::vector<const GroundTruthHoi*>> by_image;
    for (const auto& gt : gts) {
        if (gt.category.action < 0 || gt.category.action >= num_actions) {
            throw ValidationError("annotation in image '" + gt.image_id + "' has action " +
                                  std::to_string(gt.category.action) + " outside [0, " +
                                  std::to_string(num_actions) + ")");
        }
        by_image[gt.image_id].push_back(&gt);
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto it = by_image.find(pairs[i].image_id);
        if (it == by_image.end()) continue;
        for (const GroundTruthHoi* gt : it->second) {
            if (gt->category.object_category != pairs[i].object_box.category) continue;
            if (iou(pairs[i].human_box, gt->human_box) < kMatchIou) continue;
            if (iou(pairs[i].object_box, gt->object_box) < kMatchIou) continue;
            labels(static_cast<Eigen::Index>(i), gt->category.action) = 1.0;
        }
    }
    return labels;
}

std::optional<Matrix> gather_p1(std::span<const BoxPairSample> pairs, int num_actions) {
    const bool any = std::any_of(pairs.begin(), pairs.end(), [](const auto& p) { return p.p1.has_value(); });
    if (!any) return std::nullopt;
    Matrix p1 = Matrix::Zero(static_cast<Eigen::Index>(pairs.size()), num_actions);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!pairs[i].p1) continue;
        if (static_cast<int>(pairs[i].p1->size()) != num_actions) {
            throw ConfigError("pair " + std::to_string(i) + " carries p1 of length " +
                              std::to_string(pairs[i].p1->size()) + ", expected " +
                              std::to_string(num_actions));
        }
        for (int a = 0; a < num_actions; ++a) p1(static_cast<Eigen::Index>(i), a) = (*pairs[i].p1)[a];
    }
    return p1;
}

Matrix infer_logits(const ModelParams& params, const SkeletonGraph& graph,
                    std::span<const BoxPairSample> pairs, StreamMode streams, int chunk_size) {
    const int k = num_actions(params);
    Matrix logits(static_cast<Eigen::Index>(pairs.size()), k);
    ForwardOptions options;
    options.mode = Mode::eval;
    options.streams = streams;
    for (std::size_t start = 0; start < pairs.size(); start += static_cast<std::size_t>(chunk_size)) {
        const std::size_t count = std::min(pairs.size() - start, static_cast<std::size_t>(chunk_size));
        const FeatureBatch batch = make_batch(pairs.subspan(start, count));
        logits.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) =
            forward(params, graph, batch, options).logits;
    }
    return logits;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t num_pairs, const TrainConfig& config,
                                                    int epoch) {
    std::vector<std::size_t> order(num_pairs);
    for (std::size_t i = 0; i < num_pairs; ++i) order[i] = i;
    Rng rng(mix_seed(config.seed, 0x5348554646ULL, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = num_pairs; i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }

    std::vector<std::vector<std::size_t>> batches;
    const auto size = static_cast<std::size_t>(config.batch_size);
    for (std::size_t start = 0; start < num_pairs; start += size) {
        const std::size_t end = std::min(num_pairs, start + size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (config.batch_norm && batches.size() > 1 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back().front());
        batches.pop_back();
    }
    return batches;
}

namespace {

void apply_weight_decay(ModelParams& grads, const ModelParams& params, double decay) {
    if (decay == 0.0) return;
    auto g = trainable_tensors(grads);
    const auto p = trainable_tensors(params);
    for (std::size_t i = 0; i < g.size(); ++i) *g[i].value += decay * *p[i].value;
}

void clip_gradients(ModelParams& grads, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (const auto& t : trainable_tensors(grads)) sq += t.value->squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (auto& t : trainable_tensors(grads)) *t.value *= scale;
}

void check_training_set(const TrainingSet& data, const TrainConfig& config) {
    if (data.pairs.empty()) throw ValidationError("training set is empty");
    if (data.labels.rows() != static_cast<Eigen::Index>(data.pairs.size()) ||
        data.labels.cols() != config.num_actions) {
        throw ValidationError("label matrix is " + std::to_string(data.labels.rows()) + "x" +
                              std::to_string(data.labels.cols()) + ", expected " +
                              std::to_string(data.pairs.size()) + "x" +
                              std::to_string(config.num_actions));
    }
    for (Eigen::Index i = 0; i < data.labels.size(); ++i) {
        const double y = data.labels.data()[i];
        if (y != 0.0 && y != 1.0) throw ValidationError("labels must be 0 or 1");
    }
}

}  // namespace

TrainResult train(const TrainingSet& data, const TrainConfig& config, const TrainHooks& hooks) {
    config.validate();
    ModelParams params = init_params(config.seed, config.network());
    AdamState optimizer = make_adam_state(params);
    return train(data, config, std::move(params), std::move(optimizer), hooks);
}

TrainResult train(const TrainingSet& data, const TrainConfig& config, ModelParams params,
                  AdamState optimizer, const TrainHooks& hooks) {
    config.validate();
    check_training_set(data, config);
    if (num_actions(params) != config.num_actions) {
        throw ConfigError("model has K = " + std::to_string(num_actions(params)) +
                          " but the config says " + std::to_string(config.num_actions));
    }
    const SkeletonGraph graph = config.graph();
    const std::optional<Matrix> p1_all = gather_p1(data.pairs, config.num_actions);

    TrainResult result{std::move(params), std::move(optimizer), {}};
    for (int epoch = 0; epoch < config.stop_epoch; ++epoch) {
        const double lr = learning_rate_at(config, epoch);
        const auto batches = epoch_batches(data.pairs.size(), config, epoch);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& indices = batches[b];
            ForwardOptions options;
            options.mode = Mode::train;
            options.streams = config.streams;
            options.dropout = config.dropout;
            options.dropout_seed = mix_seed(config.seed, static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(b) + 1);
            const FeatureBatch batch = make_batch(data.pairs, indices);
            ModelForward out = forward(result.params, graph, batch, options);

            Matrix labels(static_cast<Eigen::Index>(indices.size()), config.num_actions);
            std::optional<Matrix> p1;
            if (p1_all) p1.emplace(static_cast<Eigen::Index>(indices.size()), config.num_actions);
            for (std::size_t r = 0; r < indices.size(); ++r) {
                const auto row = static_cast<Eigen::Index>(r);
                const auto src = static_cast<Eigen::Index>(indices[r]);
                labels.row(row) = data.labels.row(src);
                if (p1) p1->row(row) = p1_all->row(src);
            }
            const Matrix scores = fuse_scores(p1, out.logits);
            const double loss = bce_loss(scores, labels);
            if (!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", batch " << b << " (lr " << lr
                    << ", " << indices.size() << " pairs, first pair index " << indices.front() << ")";
                if (hooks.on_divergence) hooks.on_divergence(result.params, msg.str());
                throw TrainingDivergedError(msg.str());
            }

            ModelParams grads =
                backward(result.params, out.trace, bce_logit_gradient(scores, labels), graph);
            apply_weight_decay(grads, result.params, config.weight_decay);
            clip_gradients(grads, config.grad_clip);
            try {
                adam_step(result.params, grads, result.optimizer, lr);
            } catch (const TrainingDivergedError& e) {
                if (hooks.on_divergence) hooks.on_divergence(result.params, e.what());
                throw;
            }
            update_running_stats(result.params, *out.trace, config.bn_momentum);

            loss_sum += loss * static_cast<double>(indices.size());
            seen += indices.size();
        }

        const EpochLog entry{epoch, lr, loss_sum / static_cast<double>(seen)};
        result.log.push_back(entry);
        if (hooks.on_epoch) hooks.on_epoch(entry);
        if (hooks.on_checkpoint && config.checkpoint_interval > 0 &&
            (epoch + 1) % config.checkpoint_interval == 0 && epoch + 1 < config.stop_epoch) {
            hooks.on_checkpoint(epoch + 1, result.params);
        }
        if (hooks.should_stop && hooks.should_stop(epoch, result.params)) break;
    }
    return result;
}

}  // namespace pmn
