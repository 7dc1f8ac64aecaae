#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pmn/io.hpp"
#include "pmn/pipeline.hpp"
#include "pmn/synthetic.hpp"

namespace pmn {

namespace {

const std::vector<std::string> kStreamNames = {"both", "relative_only", "absolute_only"};

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

/// --seed wins, then PMN_SEED, then whatever the config says.
std::optional<std::uint64_t> seed_override(const std::optional<std::uint64_t>& flag) {
    if (flag) return flag;
    const char* env = std::getenv("PMN_SEED");
    if (env == nullptr || *env == '\0') return std::nullopt;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0' || *env == '-') throw ConfigError(std::string("PMN_SEED is not an unsigned integer: ") + env);
    return v;
}

struct FeaturizeArgs {
    std::string detections;
    std::string out;
    double human_thresh = 0.8;
    double obj_thresh = 0.3;
    int num_actions = 0;
    int human_category = kDefaultHumanCategory;
    bool lenient = false;
};

int cmd_featurize(const FeaturizeArgs& a, std::ostream& out, std::ostream& err) {
    LoadOptions load;
    load.strict = !a.lenient;
    load.human_category = a.human_category;
    load.num_actions = a.num_actions;
    const LoadResult data = load_dataset(a.detections, load);
    for (const auto& d : data.diagnostics) err << "pmn: warning: " << a.detections << ":" << d.line << ": " << d.message << "\n";

    FeaturizeOptions options;
    options.pairing.human_threshold = a.human_thresh;
    options.pairing.object_threshold = a.obj_thresh;
    options.pairing.num_actions = a.num_actions;
    options.strict = !a.lenient;
    const FeaturizeResult result = featurize(data.records, options);
    for (const auto& d : result.diagnostics) err << "pmn: warning: " << a.detections << ": " << d.message << "\n";

    auto file = open_output(a.out);
    write_pairs(file, result.pairs);
    out << "featurize: " << result.pairs.size() << " pairs from " << data.records.size() << " images";
    if (!data.diagnostics.empty() || !result.diagnostics.empty()) {
        out << " (" << data.diagnostics.size() + result.diagnostics.size() << " skipped)";
    }
    out << "\n";
    return 0;
}

struct TrainArgs {
    std::string features;
    std::string labels;
    std::string config;
    std::string out;
    std::string log;
    std::string streams;
    std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    TrainConfig config = a.config.empty() ? TrainConfig::hico_det() : load_config(a.config);
    if (!a.streams.empty()) config.streams = stream_mode_from_string(a.streams);
    if (auto seed = seed_override(a.seed)) config.seed = *seed;
    config.validate();

    TrainingSet data = make_training_set(load_pairs(a.features), load_ground_truth(a.labels), config.num_actions);
    if (data.pairs.empty()) throw ValidationError("'" + a.features + "' holds no box pairs");

    std::ofstream log_file;
    std::ostream* log = &out;
    if (!a.log.empty()) {
        log_file = open_output(a.log);
        log = &log_file;
    }

    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochLog& e) {
        nlohmann::json line = {{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}};
        *log << line.dump() << "\n";
    };
    hooks.on_checkpoint = [&](int epoch, const ModelParams& params) {
        save_checkpoint({params, config, std::nullopt, epoch}, a.out + ".epoch" + std::to_string(epoch));
    };
    hooks.on_divergence = [&](const ModelParams& params, const std::string& message) {
        const std::string path = a.out + ".diverged";
        save_checkpoint({params, config, std::nullopt, 0}, path);
        err << "pmn: note: " << message << "; parameters saved to " << path << "\n";
    };

    TrainResult result = train(data, config, hooks);
    const int epochs = static_cast<int>(result.log.size());
    save_checkpoint({std::move(result.params), config, std::move(result.optimizer), epochs}, a.out);
    return 0;
}

struct PredictArgs {
    std::string features;
    std::string ckpt;
    std::string out;
    std::string p1;
    std::string streams;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
    const Checkpoint cp = load_checkpoint(a.ckpt);
    std::vector<BoxPairSample> pairs = load_pairs(a.features);
    if (!a.p1.empty()) attach_p1(pairs, load_p1(a.p1));
    const StreamMode streams = a.streams.empty() ? cp.config.streams : stream_mode_from_string(a.streams);

    const auto dets = predict(cp.params, cp.config.graph(), pairs, streams);
    auto file = open_output(a.out);
    write_detections(file, dets);
    out << "predict: " << dets.size() << " detections for " << pairs.size() << " pairs\n";
    return 0;
}

struct EvalArgs {
    std::string dets;
    std::string gt;
    std::string splits;
    bool per_category = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const auto dets = load_detections(a.dets);
    const auto gts = load_ground_truth(a.gt);
    std::optional<CategorySplit> split;
    if (!a.splits.empty()) split = load_splits(a.splits);
    const EvalReport report = evaluate(dets, gts, split);

    out << std::fixed << std::setprecision(4);
    out << "Full     mAP " << report.full_map << "  (" << report.num_full << " categories)\n";
    out << "Rare     mAP " << report.rare_map << "  (" << report.num_rare << " categories)\n";
    out << "Non-Rare mAP " << report.non_rare_map << "  (" << report.num_non_rare << " categories)\n";
    if (a.per_category) {
        for (const auto& [category, r] : report.per_category) {
            out << to_string(category) << " ap " << r.ap << " gt " << r.num_gt << " dets " << r.num_detections
                << (r.rare ? " rare" : "") << "\n";
        }
    }
    return 0;
}

struct SplitsArgs {
    std::string train;
    std::string out;
};

int cmd_splits(const SplitsArgs& a, std::ostream& out) {
    std::map<HoiCategory, int> counts;
    for (const auto& gt : load_ground_truth(a.train)) ++counts[gt.category];
    const CategorySplit split = CategorySplit::from_counts(counts);
    auto file = open_output(a.out);
    write_splits(file, split, counts);
    const auto rare = std::count_if(split.categories().begin(), split.categories().end(),
                                    [](const auto& c) { return c.second; });
    out << "splits: " << counts.size() << " categories, " << rare << " rare\n";
    return 0;
}

struct SynthArgs {
    std::string out;
    int images = 100;
    int objects = 2;
    std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    SyntheticOptions options;
    options.num_images = a.images;
    options.objects_per_image = a.objects;
    if (auto seed = seed_override(a.seed)) options.seed = *seed;
    const auto records = make_synthetic_dataset(options);
    auto file = open_output(a.out);
    write_dataset(file, records);
    out << "synth: " << records.size() << " images, K = " << kSyntheticActions << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Pose-based modular network for human-object interaction detection", "pmn"};
    app.require_subcommand(1);

    FeaturizeArgs fa;
    auto* featurize_cmd = app.add_subcommand("featurize", "Build box-pair pose features from detections");
    featurize_cmd->add_option("--detections", fa.detections, "Detection/pose JSONL, one image per line")->required();
    featurize_cmd->add_option("--out", fa.out, "Output pair JSONL")->required();
    featurize_cmd->add_option("--human-thresh", fa.human_thresh, "Minimum human detection score")->capture_default_str();
    featurize_cmd->add_option("--obj-thresh", fa.obj_thresh, "Minimum object detection score")->capture_default_str();
    featurize_cmd->add_option("--num-actions", fa.num_actions, "Expected p1 length (0: infer)");
    featurize_cmd->add_option("--human-category", fa.human_category, "Category id of humans")->capture_default_str();
    featurize_cmd->add_flag("--lenient", fa.lenient, "Skip bad lines and pairs instead of aborting");

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train the pose network on labelled pairs");
    train_cmd->add_option("--features", ta.features, "Pair JSONL from featurize")->required();
    train_cmd->add_option("--labels", ta.labels, "Annotated dataset JSONL")->required();
    train_cmd->add_option("--config", ta.config, "Experiment config JSON");
    train_cmd->add_option("--out", ta.out, "Checkpoint path")->required();
    train_cmd->add_option("--log", ta.log, "Loss log path (default: stdout)");
    train_cmd->add_option("--streams", ta.streams, "Stream ablation")->check(CLI::IsMember(kStreamNames));
    train_cmd->add_option("--seed", ta.seed, "Seed (overrides PMN_SEED and the config)");

    PredictArgs pa;
    auto* predict_cmd = app.add_subcommand("predict", "Score every pair and action");
    predict_cmd->add_option("--features", pa.features, "Pair JSONL from featurize")->required();
    predict_cmd->add_option("--ckpt", pa.ckpt, "Checkpoint")->required();
    predict_cmd->add_option("--out", pa.out, "Detection JSONL")->required();
    predict_cmd->add_option("--p1", pa.p1, "External score factors JSONL");
    predict_cmd->add_option("--streams", pa.streams, "Stream ablation")->check(CLI::IsMember(kStreamNames));

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "HOI mAP of a detection dump");
    eval_cmd->add_option("--dets", ea.dets, "Detection JSONL")->required();
    eval_cmd->add_option("--gt", ea.gt, "Annotated dataset JSONL")->required();
    eval_cmd->add_option("--splits", ea.splits, "Category split JSON");
    eval_cmd->add_flag("--per-category", ea.per_category, "Print every category's AP");

    SplitsArgs sa;
    auto* splits_cmd = app.add_subcommand("splits", "Derive rare/non-rare categories from training annotations");
    splits_cmd->add_option("--train", sa.train, "Annotated training dataset JSONL")->required();
    splits_cmd->add_option("--out", sa.out, "Split JSON")->required();

    SynthArgs ya;
    auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic pose/interaction corpus");
    synth_cmd->add_option("--out", ya.out, "Dataset JSONL")->required();
    synth_cmd->add_option("--images", ya.images, "Number of images")->capture_default_str();
    synth_cmd->add_option("--objects", ya.objects, "Objects per image")->capture_default_str();
    synth_cmd->add_option("--seed", ya.seed, "Seed (overrides PMN_SEED)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << "pmn: UsageError: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*featurize_cmd) return cmd_featurize(fa, out, err);
        if (*train_cmd) return cmd_train(ta, out, err);
        if (*predict_cmd) return cmd_predict(pa, out);
        if (*eval_cmd) return cmd_eval(ea, out);
        if (*splits_cmd) return cmd_splits(sa, out);
        if (*synth_cmd) return cmd_synth(ya, out);
    } catch (const Error& e) {
        err << "pmn: " << e.kind() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "pmn: InternalError: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace pmn
