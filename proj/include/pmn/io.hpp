#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "pmn/evaluation.hpp"
#include "pmn/network.hpp"
#include "pmn/training.hpp"

namespace pmn {

/// COCO category id of "person".
inline constexpr int kDefaultHumanCategory = 1;

struct DetectedInstance {
    BoundingBox box;  // carries category and score
    std::optional<Keypoints> keypoints;
};

struct PairScores {
    int human_index = 0;
    int object_index = 0;
    std::vector<double> scores;
};

/// One image: detector and pose-estimator output plus optional annotations.
struct DetectionRecord {
    std::string image_id;
    ImageDims dims;
    std::vector<DetectedInstance> instances;
    std::vector<PairScores> p1;
    std::vector<GroundTruthHoi> hois;
};

struct Diagnostic {
    std::size_t line = 0;
    std::string message;
};

struct LoadOptions {
    /// Abort on the first bad line; otherwise skip it and record a diagnostic.
    bool strict = true;
    int human_category = kDefaultHumanCategory;
    /// When positive, every p1 vector must have this length.
    int num_actions = 0;
};

struct LoadResult {
    std::vector<DetectionRecord> records;
    std::vector<Diagnostic> diagnostics;
};

/// Reads one image per line. In strict mode the first problem throws
/// SchemaError with "<source>:<line>: ..." ; in lenient mode bad lines are
/// skipped and reported in `diagnostics`, in input order.
LoadResult parse_dataset(std::istream& in, const LoadOptions& options,
                         const std::string& source = "<input>");
LoadResult load_dataset(const std::string& path, const LoadOptions& options = {});
void write_dataset(std::ostream& out, const std::vector<DetectionRecord>& records);

/// Annotations of every record, flattened.
std::vector<GroundTruthHoi> collect_ground_truth(const std::vector<DetectionRecord>& records);
std::vector<GroundTruthHoi> load_ground_truth(const std::string& path);

// Box-pair feature files: one pair per line.
void write_pairs(std::ostream& out, const std::vector<BoxPairSample>& pairs);
std::vector<BoxPairSample> read_pairs(std::istream& in, const std::string& source = "<input>");
std::vector<BoxPairSample> load_pairs(const std::string& path);

// Detection dumps: one scored triplet per line.
void write_detections(std::ostream& out, const std::vector<HoiDetection>& dets);
std::vector<HoiDetection> read_detections(std::istream& in, const std::string& source = "<input>");
std::vector<HoiDetection> load_detections(const std::string& path);

// External score factors: one pair per line, keyed by image and instance indices.
using PairKey = std::tuple<std::string, int, int>;
std::map<PairKey, std::vector<double>> read_p1(std::istream& in, const std::string& source = "<input>");
std::map<PairKey, std::vector<double>> load_p1(const std::string& path);

// Category splits: {"categories": [{"object_category", "action", "train_count" | "rare"}]}.
void write_splits(std::ostream& out, const CategorySplit& split,
                  const std::map<HoiCategory, int>& counts = {});
CategorySplit read_splits(std::istream& in, const std::string& source = "<input>");
CategorySplit load_splits(const std::string& path);

/// Parses a JSON config document; unknown keys are a ConfigError.
TrainConfig parse_config(std::istream& in, const std::string& source = "<input>");
TrainConfig load_config(const std::string& path);
std::string config_to_json(const TrainConfig& config);

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "pmn-checkpoint";

struct Checkpoint {
    ModelParams params;
    TrainConfig config;
    std::optional<AdamState> optimizer;
    /// Epochs completed when the checkpoint was written.
    int epoch = 0;
};

/// Versioned JSON document. Doubles are written in shortest round-trip
/// decimal form, so parameters reload bit for bit.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& text);
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace pmn
