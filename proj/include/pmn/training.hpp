#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmn/evaluation.hpp"
#include "pmn/network.hpp"
#include "pmn/skeleton_graph.hpp"

namespace pmn {

struct TrainConfig {
    Architecture architecture = Architecture::pmn;
    Topology topology = Topology::skeleton;
    StreamMode streams = StreamMode::both;
    /// Replaces the default edge list of the skeleton topology when set.
    std::optional<std::vector<Edge>> edges;

    int num_actions = 117;
    int batch_size = 32;
    double lr_initial = 3e-5;
    double lr_drop = 3e-6;
    int lr_drop_epoch = 150;
    int stop_epoch = 200;
    double dropout = 0.2;
    bool batch_norm = true;
    double bn_momentum = 0.1;
    double weight_decay = 0.0;
    /// Global gradient-norm clip; 0 disables.
    double grad_clip = 0.0;
    /// Emit a checkpoint every this many epochs; 0 disables.
    int checkpoint_interval = 0;
    std::uint64_t seed = 0;

    /// HICO-DET-style schedule: drop at 150, stop at 200.
    static TrainConfig hico_det();
    /// V-COCO-style schedule: drop at 400, stop at 600, K = 24.
    static TrainConfig v_coco();

    /// Throws ConfigError on any out-of-range field.
    void validate() const;
    NetworkConfig network() const { return {architecture, num_actions, batch_norm}; }
    SkeletonGraph graph() const;
};

/// Step schedule: lr_initial before lr_drop_epoch (0-based), lr_drop from then on.
double learning_rate_at(const TrainConfig& config, int epoch);

inline constexpr double kProbabilityClamp = 1e-12;

/// Mean binary cross-entropy over all N*K entries, probabilities clamped to
/// [1e-12, 1 - 1e-12].
double bce_loss(const Matrix& scores, const Matrix& labels);

/// d loss / d logits for sigmoid followed by mean BCE: (S - y) / (N*K).
Matrix bce_logit_gradient(const Matrix& scores, const Matrix& labels);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step = 0;
    std::vector<std::string> names;
    std::vector<Matrix> first_moment;
    std::vector<Matrix> second_moment;
};

AdamState make_adam_state(const ModelParams& params);

/// One bias-corrected Adam update over parallel tensor lists. Moments are
/// allocated on first use. Throws TrainingDivergedError naming the tensor
/// when a gradient is not finite.
void adam_update(std::span<const NamedTensor> params, std::span<const ConstNamedTensor> grads,
                 AdamState& state, double lr);

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr);

/// y[i][a] = 1 when some annotated triplet of pair i's image with the same
/// object class and action a overlaps both boxes with IoU >= 0.5.
Matrix assign_labels(std::span<const BoxPairSample> pairs, std::span<const GroundTruthHoi> gts,
                     int num_actions);

struct TrainingSet {
    std::vector<BoxPairSample> pairs;
    Matrix labels;  // N x K, entries in {0, 1}
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
};

struct TrainHooks {
    std::function<void(const EpochLog&)> on_epoch;
    /// Called after each epoch; returning true ends training early.
    std::function<bool(int epoch, const ModelParams&)> should_stop;
    /// Called every `checkpoint_interval` epochs.
    std::function<void(int epoch, const ModelParams&)> on_checkpoint;
    /// Receives the parameters and a description before TrainingDivergedError is thrown.
    std::function<void(const ModelParams&, const std::string&)> on_divergence;
};

struct TrainResult {
    ModelParams params;
    AdamState optimizer;
    std::vector<EpochLog> log;
};

/// The last batch of an epoch is folded into the previous one when batch norm
/// is on and it would hold a single pair.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t num_pairs, const TrainConfig& config,
                                                    int epoch);

TrainResult train(const TrainingSet& data, const TrainConfig& config, const TrainHooks& hooks = {});

/// Continues training from existing parameters and optimizer state.
TrainResult train(const TrainingSet& data, const TrainConfig& config, ModelParams params,
                  AdamState optimizer, const TrainHooks& hooks = {});

/// Logits p2 for every pair in eval mode.
Matrix infer_logits(const ModelParams& params, const SkeletonGraph& graph,
                    std::span<const BoxPairSample> pairs, StreamMode streams,
                    int chunk_size = 256);

/// p1 rows gathered from the pairs, or nullopt when no pair carries one.
std::optional<Matrix> gather_p1(std::span<const BoxPairSample> pairs, int num_actions);

}  // namespace pmn
