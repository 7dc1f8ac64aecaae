#include "pmn/network.hpp"

#include <cmath>
#include <cstring>

namespace pmn {

std::string to_string(Architecture arch) { return arch == Architecture::pmn ? "pmn" : "nfpn"; }

std::string to_string(StreamMode streams) {
    switch (streams) {
        case StreamMode::both: return "both";
        case StreamMode::relative_only: return "relative_only";
        case StreamMode::absolute_only: return "absolute_only";
    }
    return "both";
}

Architecture architecture_from_string(const std::string& name) {
    if (name == "pmn") return Architecture::pmn;
    if (name == "nfpn") return Architecture::nfpn;
    throw ConfigError("unknown architecture '" + name + "' (expected pmn|nfpn)");
}

StreamMode stream_mode_from_string(const std::string& name) {
    if (name == "both") return StreamMode::both;
    if (name == "relative_only") return StreamMode::relative_only;
    if (name == "absolute_only") return StreamMode::absolute_only;
    throw ConfigError("unknown stream mode '" + name +
                      "' (expected both|relative_only|absolute_only)");
}

FeatureBatch make_batch(std::span<const BoxPairSample> pairs, std::span<const std::size_t> indices) {
    FeatureBatch batch;
    const auto n = static_cast<Eigen::Index>(indices.size());
    batch.relative.resize(n * kNumJoints, 2);
    batch.absolute.resize(n * kNumJoints, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t index = indices[static_cast<std::size_t>(i)];
        const PairFeatures& f = pairs[index].features;
        if (f.f_rp.rows() != kNumJoints || f.f_rp.cols() != 2 || f.f_ap.rows() != kNumJoints ||
            f.f_ap.cols() != 2) {
            throw ValidationError("pair " + std::to_string(index) + " features are not 17x2");
        }
        batch.relative.middleRows(i * kNumJoints, kNumJoints) = f.f_rp;
        batch.absolute.middleRows(i * kNumJoints, kNumJoints) = f.f_ap;
    }
    return batch;
}

FeatureBatch make_batch(std::span<const BoxPairSample> pairs) {
    std::vector<std::size_t> indices(pairs.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    return make_batch(pairs, indices);
}

namespace {

void check_batch(const FeatureBatch& batch) {
    if (batch.relative.cols() != 2 || batch.absolute.cols() != 2 ||
        batch.relative.rows() != batch.absolute.rows() || batch.relative.rows() % kNumJoints != 0) {
        throw ValidationError("feature batch must hold two (17N)x2 matrices");
    }
    if (batch.size() == 0) throw ValidationError("feature batch is empty");
}

Matrix column_sum(const Matrix& x) { return x.colwise().sum(); }

Matrix dense(const DenseLayer& layer, const Matrix& x) {
    Matrix y;
    y.noalias() = x * layer.weight;
    if (layer.has_bias()) y.rowwise() += layer.bias.row(0);
    return y;
}

Matrix relu_grad(const Matrix& grad, const Matrix& pre) {
    return (pre.array() > 0.0).select(grad, 0.0);
}

Matrix batch_norm_train(const Matrix& x, const BatchNormLayer& bn, double eps, BatchNormCache& cache) {
    const double m = static_cast<double>(x.rows());
    cache.mean = x.colwise().mean();
    Matrix centered = x.rowwise() - cache.mean.row(0);
    cache.var = centered.array().square().colwise().sum() / m;
    cache.inv_std = (cache.var.array() + eps).rsqrt();
    cache.normalized = centered.array().rowwise() * cache.inv_std.row(0).array();
    Matrix y = cache.normalized.array().rowwise() * bn.gamma.row(0).array();
    y.rowwise() += bn.beta.row(0);
    return y;
}

Matrix batch_norm_eval(const Matrix& x, const BatchNormLayer& bn, double eps) {
    const Matrix scale = bn.gamma.array() * (bn.running_var.array() + eps).rsqrt();
    Matrix y = (x.rowwise() - bn.running_mean.row(0)).array().rowwise() * scale.row(0).array();
    y.rowwise() += bn.beta.row(0);
    return y;
}

Matrix batch_norm_backward(const Matrix& dy, const BatchNormLayer& bn, const BatchNormCache& cache,
                           BatchNormLayer& grad) {
    const double m = static_cast<double>(dy.rows());
    grad.beta = column_sum(dy);
    grad.gamma = (dy.array() * cache.normalized.array()).colwise().sum();
    const Matrix mean_dy = grad.beta / m;
    const Matrix mean_dy_xhat = grad.gamma / m;
    Matrix dx = dy.rowwise() - mean_dy.row(0);
    dx.array() -= cache.normalized.array().rowwise() * mean_dy_xhat.row(0).array();
    dx.array().rowwise() *= (bn.gamma.array() * cache.inv_std.array()).row(0);
    return dx;
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
    Matrix mask(rows, cols);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        mask.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    }
    return mask;
}

struct LayerContext {
    bool train = false;
    double dropout = 0.0;
    double bn_epsilon = 1e-5;
    Rng* rng = nullptr;
};

/// dense -> [BN] -> ReLU -> [dropout]
Matrix hidden_forward(const DenseLayer& layer, const BatchNormLayer* bn, const Matrix& x,
                      const LayerContext& ctx, bool use_dropout, HiddenLayerCache* cache) {
    Matrix z = dense(layer, x);
    std::optional<BatchNormCache> bn_cache;
    if (bn != nullptr) {
        if (ctx.train) {
            bn_cache.emplace();
            z = batch_norm_train(z, *bn, ctx.bn_epsilon, *bn_cache);
        } else {
            z = batch_norm_eval(z, *bn, ctx.bn_epsilon);
        }
    }
    Matrix y = z.cwiseMax(0.0);
    Matrix mask;
    if (ctx.train && use_dropout && ctx.dropout > 0.0) {
        mask = dropout_mask(y.rows(), y.cols(), ctx.dropout, *ctx.rng);
        y.array() *= mask.array();
    }
    if (cache != nullptr) {
        cache->input = x;
        cache->pre_activation = std::move(z);
        cache->bn = std::move(bn_cache);
        cache->dropout_mask = std::move(mask);
    }
    return y;
}

Matrix hidden_backward(const DenseLayer& layer, const BatchNormLayer* bn,
                       const HiddenLayerCache& cache, const Matrix& dy, DenseLayer& grad,
                       BatchNormLayer* bn_grad, bool need_input_grad) {
    Matrix d = cache.dropout_mask.size() > 0 ? Matrix(dy.cwiseProduct(cache.dropout_mask)) : dy;
    d = relu_grad(d, cache.pre_activation);
    if (bn != nullptr) d = batch_norm_backward(d, *bn, *cache.bn, *bn_grad);
    grad.weight.noalias() = cache.input.transpose() * d;
    if (layer.has_bias()) grad.bias = column_sum(d);
    if (!need_input_grad) return {};
    Matrix dx;
    dx.noalias() = d * layer.weight.transpose();
    return dx;
}

/// Left-multiplies every 17-row block of x by a_hat.
Matrix graph_convolve(const Matrix& a_hat, const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    const Eigen::Index blocks = x.rows() / kNumJoints;
    for (Eigen::Index b = 0; b < blocks; ++b) {
        out.middleRows(b * kNumJoints, kNumJoints).noalias() =
            a_hat * x.middleRows(b * kNumJoints, kNumJoints);
    }
    return out;
}

DenseLayer zeros_like(const DenseLayer& layer) {
    DenseLayer g;
    g.weight = Matrix::Zero(layer.weight.rows(), layer.weight.cols());
    if (layer.has_bias()) g.bias = Matrix::Zero(1, layer.bias.cols());
    return g;
}

BatchNormLayer zeros_like(const BatchNormLayer& bn) {
    BatchNormLayer g;
    g.gamma = Matrix::Zero(1, bn.gamma.cols());
    g.beta = Matrix::Zero(1, bn.beta.cols());
    return g;
}

// Four independent multiply-xor lanes; a single chain is latency bound and
// shows up in the finite-difference loops, which run thousands of forwards.
template <class Params>
std::uint64_t fingerprint(const Params& params) {
    constexpr std::uint64_t kPrime = 0x100000001b3ULL;
    std::uint64_t lane[4] = {0xcbf29ce484222325ULL, 0x84222325cbf29ce4ULL, 0x9e3779b97f4a7c15ULL,
                             0xbf58476d1ce4e5b9ULL};
    Params::visit_trainable(params, [&](const std::string&, const Matrix& m) {
        const Eigen::Index n = m.size();
        Eigen::Index i = 0;
        std::uint64_t bits[4];
        for (; i + 4 <= n; i += 4) {
            std::memcpy(bits, m.data() + i, sizeof bits);
            for (int k = 0; k < 4; ++k) lane[k] = (lane[k] ^ bits[k]) * kPrime;
        }
        for (; i < n; ++i) {
            std::memcpy(bits, m.data() + i, sizeof(std::uint64_t));
            lane[0] = (lane[0] ^ bits[0]) * kPrime;
        }
        lane[1] = (lane[1] ^ static_cast<std::uint64_t>(n)) * kPrime;
    });
    std::uint64_t h = lane[0];
    for (int k = 1; k < 4; ++k) h = (h ^ lane[k]) * kPrime;
    return h;
}

template <class Params, class Trace>
void check_trace(const Params& params, const Trace* trace) {
    if (trace == nullptr) throw ContractViolation("backward requires a trace from a train-mode forward");
    if (trace->params_identity != &params) {
        throw ContractViolation("trace was produced by a different parameter set");
    }
    if (trace->params_fingerprint != fingerprint(params)) {
        throw ContractViolation("trace is stale: parameters changed after the forward pass");
    }
}

void require_batch_norm_batch(bool batch_norm, const ForwardOptions& options, int n) {
    if (batch_norm && options.mode == Mode::train && n < 2) {
        throw BatchTooSmallError("train-mode forward with batch norm needs at least 2 pairs, got " +
                                 std::to_string(n));
    }
}

void check_grad_shape(const Matrix& grad_logits, int batch_size, int num_actions) {
    if (grad_logits.rows() != batch_size || grad_logits.cols() != num_actions) {
        throw ContractViolation("upstream gradient is " + std::to_string(grad_logits.rows()) + "x" +
                                std::to_string(grad_logits.cols()) + ", trace expects " +
                                std::to_string(batch_size) + "x" + std::to_string(num_actions));
    }
}

}  // namespace

ForwardResult<PmnTrace> forward_pmn(const PmnParams& params, const SkeletonGraph& graph,
                                    const FeatureBatch& batch, const ForwardOptions& options) {
    check_batch(batch);
    if (graph.num_nodes() != kNumJoints) throw ValidationError("graph must have 17 nodes");
    const int n = batch.size();
    require_batch_norm_batch(params.batch_norm, options, n);

    const bool train = options.mode == Mode::train;
    Rng rng(options.dropout_seed);
    LayerContext ctx{train, options.dropout, options.bn_epsilon, &rng};
    std::optional<PmnTrace> trace;
    if (train) {
        trace.emplace();
        trace->params_identity = &params;
        trace->params_fingerprint = fingerprint(params);
        trace->batch_size = n;
        trace->streams = options.streams;
    }
    auto cache = [&](HiddenLayerCache PmnTrace::*member) -> HiddenLayerCache* {
        return trace ? &((*trace).*member) : nullptr;
    };
    const BatchNormLayer* rel_in_bn = params.batch_norm ? &params.rel_in_bn : nullptr;
    const BatchNormLayer* rel_out_bn = params.batch_norm ? &params.rel_out_bn : nullptr;
    const BatchNormLayer* abs_in_bn = params.batch_norm ? &params.abs_in_bn : nullptr;

    const Eigen::Index rows = static_cast<Eigen::Index>(n) * kNumJoints;
    Matrix joined(rows, 2 * kJointWidth);

    if (options.streams != StreamMode::absolute_only) {
        Matrix h = hidden_forward(params.rel_in, rel_in_bn, batch.relative, ctx, true,
                                  cache(&PmnTrace::rel_in));
        joined.leftCols(kJointWidth) = hidden_forward(params.rel_out, rel_out_bn, h, ctx, true,
                                                      cache(&PmnTrace::rel_out));
    } else {
        joined.leftCols(kJointWidth).setZero();
    }

    if (options.streams != StreamMode::relative_only) {
        Matrix h = hidden_forward(params.abs_in, abs_in_bn, batch.absolute, ctx, true,
                                  cache(&PmnTrace::abs_in));
        Matrix xw;
        xw.noalias() = h * params.gcn.weight;
        Matrix s = graph_convolve(graph.normalized(), xw);
        s.rowwise() += params.gcn.bias.row(0);
        joined.rightCols(kJointWidth) = s.cwiseMax(0.0);
        if (trace) {
            trace->gcn_input = std::move(h);
            trace->gcn_pre = std::move(s);
        }
    } else {
        joined.rightCols(kJointWidth).setZero();
    }

    Matrix fused = dense(params.fuse, joined);
    Matrix h = fused.cwiseMax(0.0);
    if (trace) {
        trace->fuse_input = std::move(joined);
        trace->fuse_pre = std::move(fused);
    }

    // (17N)x64 row-major is already laid out as Nx1088.
    const Eigen::Map<const Matrix> flat(h.data(), n, kFlatWidth);
    Matrix u = hidden_forward(params.head_hidden, nullptr, flat, ctx, true,
                              cache(&PmnTrace::head_hidden));
    Matrix logits = dense(params.head_out, u);
    if (trace) trace->head_out_input = std::move(u);
    return {std::move(logits), std::move(trace)};
}

namespace {

PmnParams backward_pmn(const PmnParams& params, const PmnTrace* trace, const Matrix& grad_logits,
                       const SkeletonGraph& graph) {
    check_trace(params, trace);
    check_grad_shape(grad_logits, trace->batch_size, params.num_actions);
    const int n = trace->batch_size;

    PmnParams g;
    g.num_actions = params.num_actions;
    g.batch_norm = params.batch_norm;
    g.rel_in = zeros_like(params.rel_in);
    g.rel_out = zeros_like(params.rel_out);
    g.abs_in = zeros_like(params.abs_in);
    g.gcn = zeros_like(params.gcn);
    g.fuse = zeros_like(params.fuse);
    g.head_hidden = zeros_like(params.head_hidden);
    g.head_out = zeros_like(params.head_out);
    if (params.batch_norm) {
        g.rel_in_bn = zeros_like(params.rel_in_bn);
        g.rel_out_bn = zeros_like(params.rel_out_bn);
        g.abs_in_bn = zeros_like(params.abs_in_bn);
    }
    const BatchNormLayer* rel_in_bn = params.batch_norm ? &params.rel_in_bn : nullptr;
    const BatchNormLayer* rel_out_bn = params.batch_norm ? &params.rel_out_bn : nullptr;
    const BatchNormLayer* abs_in_bn = params.batch_norm ? &params.abs_in_bn : nullptr;
    BatchNormLayer* g_rel_in_bn = params.batch_norm ? &g.rel_in_bn : nullptr;
    BatchNormLayer* g_rel_out_bn = params.batch_norm ? &g.rel_out_bn : nullptr;
    BatchNormLayer* g_abs_in_bn = params.batch_norm ? &g.abs_in_bn : nullptr;

    // Head.
    g.head_out.weight.noalias() = trace->head_out_input.transpose() * grad_logits;
    g.head_out.bias = column_sum(grad_logits);
    Matrix du;
    du.noalias() = grad_logits * params.head_out.weight.transpose();
    Matrix dflat = hidden_backward(params.head_hidden, nullptr, trace->head_hidden, du,
                                   g.head_hidden, nullptr, true);

    // Un-flatten Nx1088 back to (17N)x64; same storage order.
    const Eigen::Map<const Matrix> dh(dflat.data(), static_cast<Eigen::Index>(n) * kNumJoints,
                                      kJointWidth);
    Matrix dfused = relu_grad(dh, trace->fuse_pre);
    g.fuse.weight.noalias() = trace->fuse_input.transpose() * dfused;
    g.fuse.bias = column_sum(dfused);
    Matrix djoined;
    djoined.noalias() = dfused * params.fuse.weight.transpose();

    if (trace->streams != StreamMode::absolute_only) {
        Matrix dh1 = djoined.leftCols(kJointWidth);
        Matrix dmid = hidden_backward(params.rel_out, rel_out_bn, trace->rel_out, dh1, g.rel_out,
                                      g_rel_out_bn, true);
        hidden_backward(params.rel_in, rel_in_bn, trace->rel_in, dmid, g.rel_in, g_rel_in_bn, false);
    }

    if (trace->streams != StreamMode::relative_only) {
        Matrix ds = relu_grad(djoined.rightCols(kJointWidth), trace->gcn_pre);
        g.gcn.bias = column_sum(ds);
        // A_hat is symmetric, so its transpose is itself.
        Matrix dxw = graph_convolve(graph.normalized(), ds);
        g.gcn.weight.noalias() = trace->gcn_input.transpose() * dxw;
        Matrix dh2;
        dh2.noalias() = dxw * params.gcn.weight.transpose();
        hidden_backward(params.abs_in, abs_in_bn, trace->abs_in, dh2, g.abs_in, g_abs_in_bn, false);
    }
    return g;
}

}  // namespace

PmnParams backward(const PmnParams& params, const std::optional<PmnTrace>& trace,
                   const Matrix& grad_logits, const SkeletonGraph& graph) {
    return backward_pmn(params, trace ? &*trace : nullptr, grad_logits, graph);
}

namespace {

Matrix nfpn_input(const FeatureBatch& batch, StreamMode streams) {
    const int n = batch.size();
    const int half = kNumJoints * 2;
    Matrix x = Matrix::Zero(n, kNfpnInputWidth);
    if (streams != StreamMode::absolute_only) {
        x.leftCols(half) = Eigen::Map<const Matrix>(batch.relative.data(), n, half);
    }
    if (streams != StreamMode::relative_only) {
        x.rightCols(half) = Eigen::Map<const Matrix>(batch.absolute.data(), n, half);
    }
    return x;
}

}  // namespace

ForwardResult<NfpnTrace> forward_nfpn(const NfpnParams& params, const FeatureBatch& batch,
                                      const ForwardOptions& options) {
    check_batch(batch);
    const int n = batch.size();
    require_batch_norm_batch(params.batch_norm, options, n);
    if (params.hidden1.weight.rows() != kNfpnInputWidth) {
        throw ShapeError("NFPN input layer must be 68 wide");
    }

    const bool train = options.mode == Mode::train;
    Rng rng(options.dropout_seed);
    LayerContext ctx{train, options.dropout, options.bn_epsilon, &rng};
    std::optional<NfpnTrace> trace;
    if (train) {
        trace.emplace();
        trace->params_identity = &params;
        trace->params_fingerprint = fingerprint(params);
        trace->batch_size = n;
    }
    const BatchNormLayer* bn1 = params.batch_norm ? &params.hidden1_bn : nullptr;
    const BatchNormLayer* bn2 = params.batch_norm ? &params.hidden2_bn : nullptr;

    Matrix x = nfpn_input(batch, options.streams);
    Matrix h1 = hidden_forward(params.hidden1, bn1, x, ctx, true, trace ? &trace->hidden1 : nullptr);
    Matrix h2 = hidden_forward(params.hidden2, bn2, h1, ctx, true, trace ? &trace->hidden2 : nullptr);
    Matrix logits = dense(params.out, h2);
    if (trace) trace->out_input = std::move(h2);
    return {std::move(logits), std::move(trace)};
}

namespace {

NfpnParams backward_nfpn(const NfpnParams& params, const NfpnTrace* trace,
                         const Matrix& grad_logits) {
    check_trace(params, trace);
    check_grad_shape(grad_logits, trace->batch_size, params.num_actions);

    NfpnParams g;
    g.num_actions = params.num_actions;
    g.batch_norm = params.batch_norm;
    g.hidden1 = zeros_like(params.hidden1);
    g.hidden2 = zeros_like(params.hidden2);
    g.out = zeros_like(params.out);
    if (params.batch_norm) {
        g.hidden1_bn = zeros_like(params.hidden1_bn);
        g.hidden2_bn = zeros_like(params.hidden2_bn);
    }
    const BatchNormLayer* bn1 = params.batch_norm ? &params.hidden1_bn : nullptr;
    const BatchNormLayer* bn2 = params.batch_norm ? &params.hidden2_bn : nullptr;

    g.out.weight.noalias() = trace->out_input.transpose() * grad_logits;
    g.out.bias = column_sum(grad_logits);
    Matrix dh2;
    dh2.noalias() = grad_logits * params.out.weight.transpose();
    Matrix dh1 = hidden_backward(params.hidden2, bn2, trace->hidden2, dh2, g.hidden2,
                                 params.batch_norm ? &g.hidden2_bn : nullptr, true);
    hidden_backward(params.hidden1, bn1, trace->hidden1, dh1, g.hidden1,
                    params.batch_norm ? &g.hidden1_bn : nullptr, false);
    return g;
}

}  // namespace

NfpnParams backward(const NfpnParams& params, const std::optional<NfpnTrace>& trace,
                    const Matrix& grad_logits) {
    return backward_nfpn(params, trace ? &*trace : nullptr, grad_logits);
}

ModelForward forward(const ModelParams& params, const SkeletonGraph& graph,
                     const FeatureBatch& batch, const ForwardOptions& options) {
    if (const auto* pmn = std::get_if<PmnParams>(&params)) {
        auto r = forward_pmn(*pmn, graph, batch, options);
        ModelForward out{std::move(r.logits), std::nullopt};
        if (r.trace) out.trace = std::move(*r.trace);
        return out;
    }
    auto r = forward_nfpn(std::get<NfpnParams>(params), batch, options);
    ModelForward out{std::move(r.logits), std::nullopt};
    if (r.trace) out.trace = std::move(*r.trace);
    return out;
}

ModelParams backward(const ModelParams& params, const std::optional<ForwardTrace>& trace,
                     const Matrix& grad_logits, const SkeletonGraph& graph) {
    if (!trace) throw ContractViolation("backward requires a trace from a train-mode forward");
    if (const auto* pmn = std::get_if<PmnParams>(&params)) {
        const auto* t = std::get_if<PmnTrace>(&*trace);
        if (t == nullptr) throw ContractViolation("trace architecture does not match parameters");
        return backward_pmn(*pmn, t, grad_logits, graph);
    }
    const auto* t = std::get_if<NfpnTrace>(&*trace);
    if (t == nullptr) throw ContractViolation("trace architecture does not match parameters");
    return backward_nfpn(std::get<NfpnParams>(params), t, grad_logits);
}

namespace {

void update_bn(BatchNormLayer& bn, const std::optional<BatchNormCache>& cache, Eigen::Index rows,
               double momentum) {
    if (!cache) return;
    const double m = static_cast<double>(rows);
    const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
    bn.running_mean = (1.0 - momentum) * bn.running_mean + momentum * cache->mean;
    bn.running_var = (1.0 - momentum) * bn.running_var + (momentum * unbias) * cache->var;
}

}  // namespace

void update_running_stats(ModelParams& params, const ForwardTrace& trace, double momentum) {
    if (auto* pmn = std::get_if<PmnParams>(&params)) {
        const auto* t = std::get_if<PmnTrace>(&trace);
        if (t == nullptr) throw ContractViolation("trace architecture does not match parameters");
        if (!pmn->batch_norm) return;
        if (t->streams != StreamMode::absolute_only) {
            update_bn(pmn->rel_in_bn, t->rel_in.bn, t->rel_in.input.rows(), momentum);
            update_bn(pmn->rel_out_bn, t->rel_out.bn, t->rel_out.input.rows(), momentum);
        }
        if (t->streams != StreamMode::relative_only) {
            update_bn(pmn->abs_in_bn, t->abs_in.bn, t->abs_in.input.rows(), momentum);
        }
        return;
    }
    auto& nfpn = std::get<NfpnParams>(params);
    const auto* t = std::get_if<NfpnTrace>(&trace);
    if (t == nullptr) throw ContractViolation("trace architecture does not match parameters");
    if (!nfpn.batch_norm) return;
    update_bn(nfpn.hidden1_bn, t->hidden1.bn, t->hidden1.input.rows(), momentum);
    update_bn(nfpn.hidden2_bn, t->hidden2.bn, t->hidden2.input.rows(), momentum);
}

namespace {

// He-uniform over fan-in, optionally shrunk for the output layer.
DenseLayer init_dense(Rng& rng, int fan_in, int fan_out, bool bias, double scale = 1.0) {
    DenseLayer layer;
    layer.weight.resize(fan_in, fan_out);
    const double bound = scale * std::sqrt(6.0 / static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
        layer.weight.data()[i] = rng.uniform(-bound, bound);
    }
    if (bias) layer.bias = Matrix::Zero(1, fan_out);
    return layer;
}

BatchNormLayer init_bn(int width) {
    return {Matrix::Ones(1, width), Matrix::Zero(1, width), Matrix::Zero(1, width),
            Matrix::Ones(1, width)};
}

constexpr double kOutputInitScale = 0.1;

}  // namespace

PmnParams init_pmn(std::uint64_t seed, int num_actions, bool batch_norm) {
    if (num_actions < 1) throw ConfigError("K must be at least 1");
    Rng rng(seed);
    PmnParams p;
    p.num_actions = num_actions;
    p.batch_norm = batch_norm;
    const bool bias_before_bn = !batch_norm;
    p.rel_in = init_dense(rng, 2, kStreamWidth, bias_before_bn);
    p.rel_out = init_dense(rng, kStreamWidth, kJointWidth, bias_before_bn);
    p.abs_in = init_dense(rng, 2, kStreamWidth, bias_before_bn);
    p.gcn = init_dense(rng, kStreamWidth, kJointWidth, true);
    p.fuse = init_dense(rng, 2 * kJointWidth, kJointWidth, true);
    p.head_hidden = init_dense(rng, kFlatWidth, kHeadWidth, true);
    p.head_out = init_dense(rng, kHeadWidth, num_actions, true, kOutputInitScale);
    if (batch_norm) {
        p.rel_in_bn = init_bn(kStreamWidth);
        p.rel_out_bn = init_bn(kJointWidth);
        p.abs_in_bn = init_bn(kStreamWidth);
    }
    return p;
}

NfpnParams init_nfpn(std::uint64_t seed, int num_actions, bool batch_norm) {
    if (num_actions < 1) throw ConfigError("K must be at least 1");
    Rng rng(seed);
    NfpnParams p;
    p.num_actions = num_actions;
    p.batch_norm = batch_norm;
    const bool bias_before_bn = !batch_norm;
    p.hidden1 = init_dense(rng, kNfpnInputWidth, kNfpnHiddenWidth, bias_before_bn);
    p.hidden2 = init_dense(rng, kNfpnHiddenWidth, kNfpnHiddenWidth, bias_before_bn);
    p.out = init_dense(rng, kNfpnHiddenWidth, num_actions, true, kOutputInitScale);
    if (batch_norm) {
        p.hidden1_bn = init_bn(kNfpnHiddenWidth);
        p.hidden2_bn = init_bn(kNfpnHiddenWidth);
    }
    return p;
}

ModelParams init_params(std::uint64_t seed, const NetworkConfig& config) {
    if (config.architecture == Architecture::pmn) {
        return init_pmn(seed, config.num_actions, config.batch_norm);
    }
    return init_nfpn(seed, config.num_actions, config.batch_norm);
}

int num_actions(const ModelParams& params) {
    return std::visit([](const auto& p) { return p.num_actions; }, params);
}

Architecture architecture_of(const ModelParams& params) {
    return std::holds_alternative<PmnParams>(params) ? Architecture::pmn : Architecture::nfpn;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Matrix fuse_scores(const std::optional<Matrix>& p1, const Matrix& p2) {
    Matrix logits = p2;
    if (p1) {
        if (p1->rows() != p2.rows() || p1->cols() != p2.cols()) {
            throw ValidationError("p1 is " + std::to_string(p1->rows()) + "x" +
                                  std::to_string(p1->cols()) + " but p2 is " +
                                  std::to_string(p2.rows()) + "x" + std::to_string(p2.cols()));
        }
        logits += *p1;
    }
    return logits.unaryExpr([](double v) { return sigmoid(v); });
}

double triplet_score(double human_score, double object_score, double action_score) {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(human_score) || !in_unit(object_score) || !in_unit(action_score)) {
        throw ValidationError("triplet score factors must lie in [0, 1]");
    }
    return human_score * object_score * action_score;
}

namespace {

template <class Tensor, class Params>
std::vector<Tensor> collect_trainable(Params& params) {
    std::vector<Tensor> out;
    std::visit(
        [&](auto& p) {
            using P = std::remove_cvref_t<decltype(p)>;
            P::visit_trainable(p, [&](std::string name, auto& m) { out.push_back({std::move(name), &m}); });
        },
        params);
    return out;
}

template <class Tensor, class Params>
std::vector<Tensor> collect_buffers(Params& params) {
    std::vector<Tensor> out;
    std::visit(
        [&](auto& p) {
            using P = std::remove_cvref_t<decltype(p)>;
            P::visit_buffers(p, [&](std::string name, auto& m) { out.push_back({std::move(name), &m}); });
        },
        params);
    return out;
}

}  // namespace

std::vector<NamedTensor> trainable_tensors(ModelParams& params) {
    return collect_trainable<NamedTensor>(params);
}
std::vector<ConstNamedTensor> trainable_tensors(const ModelParams& params) {
    return collect_trainable<ConstNamedTensor>(params);
}
std::vector<NamedTensor> buffer_tensors(ModelParams& params) {
    return collect_buffers<NamedTensor>(params);
}
std::vector<ConstNamedTensor> buffer_tensors(const ModelParams& params) {
    return collect_buffers<ConstNamedTensor>(params);
}

}  // namespace pmn
