#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pmn/common.hpp"
#include "pmn/pose_features.hpp"
#include "pmn/skeleton_graph.hpp"

namespace pmn {

enum class Architecture { pmn, nfpn };
enum class StreamMode { both, relative_only, absolute_only };
enum class Mode { train, eval };

std::string to_string(Architecture arch);
std::string to_string(StreamMode streams);
Architecture architecture_from_string(const std::string& name);
StreamMode stream_mode_from_string(const std::string& name);

inline constexpr int kStreamWidth = 128;
inline constexpr int kJointWidth = 64;
inline constexpr int kFlatWidth = kNumJoints * kJointWidth;  // 1088
inline constexpr int kHeadWidth = 256;
inline constexpr int kNfpnInputWidth = kNumJoints * 2 + kNumJoints * 2;  // 68
inline constexpr int kNfpnHiddenWidth = 128;

/// Dense layer y = x W (+ b). `bias` is empty for layers followed by batch norm.
struct DenseLayer {
    Matrix weight;
    Matrix bias;

    bool has_bias() const { return bias.size() > 0; }
};

/// Per-channel batch norm. gamma/beta are trainable, the running statistics are not.
struct BatchNormLayer {
    Matrix gamma;
    Matrix beta;
    Matrix running_mean;
    Matrix running_var;
};

/// Pose-based modular network weights.
///
///   relative stream:  rel_in (2x128) -> BN -> ReLU -> dropout
///                     rel_out (128x64) -> BN -> ReLU -> dropout
///   absolute stream:  abs_in (2x128) -> BN -> ReLU -> dropout
///                     gcn (128x64), left-multiplied by A_hat, + bias -> ReLU
///   fusion:           [h1 | h2] (17x128) -> fuse (128x64) -> ReLU
///   head:             reshape 17x64 -> 1088, head_hidden (1088x256) -> ReLU
///                     -> dropout, head_out (256xK) -> logits p2
struct PmnParams {
    int num_actions = 0;
    bool batch_norm = true;

    DenseLayer rel_in, rel_out, abs_in, gcn, fuse, head_hidden, head_out;
    BatchNormLayer rel_in_bn, rel_out_bn, abs_in_bn;

    /// Calls f(name, Matrix&) for every trainable tensor in a fixed order.
    template <class Self, class F>
    static void visit_trainable(Self& self, F&& f);
    /// Calls f(name, Matrix&) for every non-trainable state tensor.
    template <class Self, class F>
    static void visit_buffers(Self& self, F&& f);
};

/// Flat three-layer MLP over the concatenated 68-wide pose features:
/// (128, 128, K) with BN, ReLU and dropout on the first two layers.
struct NfpnParams {
    int num_actions = 0;
    bool batch_norm = true;

    DenseLayer hidden1, hidden2, out;
    BatchNormLayer hidden1_bn, hidden2_bn;

    template <class Self, class F>
    static void visit_trainable(Self& self, F&& f);
    template <class Self, class F>
    static void visit_buffers(Self& self, F&& f);
};

using ModelParams = std::variant<PmnParams, NfpnParams>;

struct NetworkConfig {
    Architecture architecture = Architecture::pmn;
    int num_actions = 117;
    bool batch_norm = true;
};

/// Per-pair features stacked joint-major: row 17*n + j holds joint j of pair n.
struct FeatureBatch {
    Matrix relative;
    Matrix absolute;

    int size() const { return static_cast<int>(relative.rows() / kNumJoints); }
};

FeatureBatch make_batch(std::span<const BoxPairSample> pairs);
FeatureBatch make_batch(std::span<const BoxPairSample> pairs, std::span<const std::size_t> indices);

struct ForwardOptions {
    Mode mode = Mode::eval;
    StreamMode streams = StreamMode::both;
    double dropout = 0.2;
    std::uint64_t dropout_seed = 0;
    double bn_epsilon = 1e-5;
};

struct BatchNormCache {
    Matrix normalized;
    Matrix mean;
    Matrix var;
    Matrix inv_std;
};

/// Saved state of one dense -> [BN] -> ReLU -> [dropout] layer.
struct HiddenLayerCache {
    Matrix input;
    Matrix pre_activation;  // after BN when BN is active
    std::optional<BatchNormCache> bn;
    Matrix dropout_mask;  // empty when dropout is off
};

struct PmnTrace {
    const void* params_identity = nullptr;
    /// Hash of the trainable tensors at forward time; a mismatch marks the trace stale.
    std::uint64_t params_fingerprint = 0;
    int batch_size = 0;
    StreamMode streams = StreamMode::both;
    HiddenLayerCache rel_in, rel_out, abs_in;
    Matrix gcn_input;
    Matrix gcn_pre;  // A_hat (x W) + b
    Matrix fuse_input;
    Matrix fuse_pre;
    HiddenLayerCache head_hidden;
    Matrix head_out_input;
};

struct NfpnTrace {
    const void* params_identity = nullptr;
    std::uint64_t params_fingerprint = 0;
    int batch_size = 0;
    HiddenLayerCache hidden1, hidden2;
    Matrix out_input;
};

using ForwardTrace = std::variant<PmnTrace, NfpnTrace>;

template <class Trace>
struct ForwardResult {
    Matrix logits;
    /// Present iff the forward ran in train mode.
    std::optional<Trace> trace;
};

ForwardResult<PmnTrace> forward_pmn(const PmnParams& params, const SkeletonGraph& graph,
                                    const FeatureBatch& batch, const ForwardOptions& options);
ForwardResult<NfpnTrace> forward_nfpn(const NfpnParams& params, const FeatureBatch& batch,
                                      const ForwardOptions& options);

/// Gradients share the parameter layout; running statistics are left empty.
PmnParams backward(const PmnParams& params, const std::optional<PmnTrace>& trace,
                   const Matrix& grad_logits, const SkeletonGraph& graph);
NfpnParams backward(const NfpnParams& params, const std::optional<NfpnTrace>& trace,
                    const Matrix& grad_logits);

struct ModelForward {
    Matrix logits;
    std::optional<ForwardTrace> trace;
};

ModelForward forward(const ModelParams& params, const SkeletonGraph& graph,
                     const FeatureBatch& batch, const ForwardOptions& options);
ModelParams backward(const ModelParams& params, const std::optional<ForwardTrace>& trace,
                     const Matrix& grad_logits, const SkeletonGraph& graph);

/// Exponential moving average of the batch statistics recorded in `trace`.
void update_running_stats(ModelParams& params, const ForwardTrace& trace, double momentum = 0.1);

ModelParams init_params(std::uint64_t seed, const NetworkConfig& config);
PmnParams init_pmn(std::uint64_t seed, int num_actions, bool batch_norm = true);
NfpnParams init_nfpn(std::uint64_t seed, int num_actions, bool batch_norm = true);

int num_actions(const ModelParams& params);
Architecture architecture_of(const ModelParams& params);

/// S^a = sigmoid(p1 + p2); absent p1 is treated as zero.
Matrix fuse_scores(const std::optional<Matrix>& p1, const Matrix& p2);

/// S = s_h * s_o * s^a. Inputs must lie in [0, 1].
double triplet_score(double human_score, double object_score, double action_score);

double sigmoid(double x);

struct NamedTensor {
    std::string name;
    Matrix* value;
};
struct ConstNamedTensor {
    std::string name;
    const Matrix* value;
};

std::vector<NamedTensor> trainable_tensors(ModelParams& params);
std::vector<ConstNamedTensor> trainable_tensors(const ModelParams& params);
std::vector<NamedTensor> buffer_tensors(ModelParams& params);
std::vector<ConstNamedTensor> buffer_tensors(const ModelParams& params);

// ---------------------------------------------------------------------------

template <class Self, class F>
void PmnParams::visit_trainable(Self& self, F&& f) {
    auto dense = [&](const char* name, auto& layer) {
        f(std::string(name) + ".weight", layer.weight);
        if (layer.has_bias()) f(std::string(name) + ".bias", layer.bias);
    };
    auto bn = [&](const char* name, auto& layer) {
        if (!self.batch_norm) return;
        f(std::string(name) + ".gamma", layer.gamma);
        f(std::string(name) + ".beta", layer.beta);
    };
    dense("rel_in", self.rel_in);
    bn("rel_in_bn", self.rel_in_bn);
    dense("rel_out", self.rel_out);
    bn("rel_out_bn", self.rel_out_bn);
    dense("abs_in", self.abs_in);
    bn("abs_in_bn", self.abs_in_bn);
    dense("gcn", self.gcn);
    dense("fuse", self.fuse);
    dense("head_hidden", self.head_hidden);
    dense("head_out", self.head_out);
}

template <class Self, class F>
void PmnParams::visit_buffers(Self& self, F&& f) {
    if (!self.batch_norm) return;
    auto bn = [&](const char* name, auto& layer) {
        f(std::string(name) + ".running_mean", layer.running_mean);
        f(std::string(name) + ".running_var", layer.running_var);
    };
    bn("rel_in_bn", self.rel_in_bn);
    bn("rel_out_bn", self.rel_out_bn);
    bn("abs_in_bn", self.abs_in_bn);
}

template <class Self, class F>
void NfpnParams::visit_trainable(Self& self, F&& f) {
    auto dense = [&](const char* name, auto& layer) {
        f(std::string(name) + ".weight", layer.weight);
        if (layer.has_bias()) f(std::string(name) + ".bias", layer.bias);
    };
    auto bn = [&](const char* name, auto& layer) {
        if (!self.batch_norm) return;
        f(std::string(name) + ".gamma", layer.gamma);
        f(std::string(name) + ".beta", layer.beta);
    };
    dense("hidden1", self.hidden1);
    bn("hidden1_bn", self.hidden1_bn);
    dense("hidden2", self.hidden2);
    bn("hidden2_bn", self.hidden2_bn);
    dense("out", self.out);
}

template <class Self, class F>
void NfpnParams::visit_buffers(Self& self, F&& f) {
    if (!self.batch_norm) return;
    auto bn = [&](const char* name, auto& layer) {
        f(std::string(name) + ".running_mean", layer.running_mean);
        f(std::string(name) + ".running_var", layer.running_var);
    };
    bn("hidden1_bn", self.hidden1_bn);
    bn("hidden2_bn", self.hidden2_bn);
}

}  // namespace pmn
