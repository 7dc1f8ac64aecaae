#include "pmn/io.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace pmn {

using nlohmann::json;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << contents;
    if (!out) throw IoError("failed writing '" + path + "'");
}

namespace {

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return in;
}

// Thrown while decoding one line; the caller adds the location.
struct FieldError {
    std::string message;
};

[[noreturn]] void fail(const std::string& message) { throw FieldError{message}; }

const json& require(const json& obj, const char* key) {
    if (!obj.is_object()) fail("expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(std::string("missing field '") + key + "'");
    return *it;
}

double number(const json& v, const std::string& what) {
    if (!v.is_number()) fail(what + " must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(what + " must be finite");
    return d;
}

int integer(const json& v, const std::string& what) {
    if (!v.is_number_integer()) fail(what + " must be an integer");
    return v.get<int>();
}

std::string text(const json& v, const std::string& what) {
    if (!v.is_string()) fail(what + " must be a string");
    return v.get<std::string>();
}

BoundingBox parse_box(const json& v, const std::string& what) {
    if (!v.is_array() || v.size() != 4) fail(what + " must be [x_min, y_min, x_max, y_max]");
    BoundingBox b;
    b.x_min = number(v[0], what + "[0]");
    b.y_min = number(v[1], what + "[1]");
    b.x_max = number(v[2], what + "[2]");
    b.y_max = number(v[3], what + "[3]");
    if (b.x_min > b.x_max || b.y_min > b.y_max) fail(what + " has min > max");
    return b;
}

json box_json(const BoundingBox& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

double unit_score(const json& v, const std::string& what) {
    const double s = number(v, what);
    if (s < 0.0 || s > 1.0) fail(what + " must lie in [0, 1]");
    return s;
}

std::vector<double> number_list(const json& v, const std::string& what) {
    if (!v.is_array()) fail(what + " must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], what + "[" + std::to_string(i) + "]"));
    return out;
}

Keypoints parse_keypoints(const json& v) {
    if (!v.is_array()) fail("keypoints must be an array");
    if (v.size() != kNumJoints) {
        fail("keypoints: expected 17 entries, got " + std::to_string(v.size()));
    }
    Keypoints k;
    for (int i = 0; i < kNumJoints; ++i) {
        const json& p = v[static_cast<std::size_t>(i)];
        const std::string what = "keypoints[" + std::to_string(i) + "]";
        if (!p.is_array() || p.size() != 3) fail(what + " must be [x, y, confidence]");
        k.coords[i] = {number(p[0], what + ".x"), number(p[1], what + ".y")};
        k.confidence[i] = unit_score(p[2], what + ".confidence");
    }
    return k;
}

json keypoints_json(const Keypoints& k) {
    json out = json::array();
    for (int i = 0; i < kNumJoints; ++i) {
        out.push_back(json::array({k.coords[i].x, k.coords[i].y, k.confidence[i]}));
    }
    return out;
}

GroundTruthHoi parse_hoi(const json& v, const std::string& image_id, const std::string& what) {
    GroundTruthHoi gt;
    gt.image_id = image_id;
    gt.human_box = parse_box(require(v, "human_box"), what + ".human_box");
    gt.object_box = parse_box(require(v, "object_box"), what + ".object_box");
    gt.category.object_category = integer(require(v, "object_category"), what + ".object_category");
    gt.category.action = integer(require(v, "action"), what + ".action");
    if (gt.category.action < 0) fail(what + ".action must be non-negative");
    gt.object_box.category = gt.category.object_category;
    return gt;
}

json hoi_json(const GroundTruthHoi& gt) {
    return {{"human_box", box_json(gt.human_box)},
            {"object_box", box_json(gt.object_box)},
            {"object_category", gt.category.object_category},
            {"action", gt.category.action}};
}

DetectionRecord parse_record(const json& v, const LoadOptions& options) {
    if (!v.is_object()) fail("line must hold a JSON object");
    DetectionRecord r;
    r.image_id = text(require(v, "image_id"), "image_id");
    if (r.image_id.empty()) fail("image_id must be non-empty");

    if (auto it = v.find("instances"); it != v.end()) {
        if (!it->is_array()) fail("instances must be an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const json& inst = (*it)[i];
            const std::string what = "instances[" + std::to_string(i) + "]";
            DetectedInstance d;
            d.box = parse_box(require(inst, "box"), what + ".box");
            d.box.category = integer(require(inst, "category"), what + ".category");
            d.box.score = unit_score(require(inst, "score"), what + ".score");
            const bool human = d.box.category == options.human_category;
            if (auto kp = inst.find("keypoints"); kp != inst.end()) {
                if (!human) fail(what + " carries keypoints but is not a human instance");
                try {
                    d.keypoints = parse_keypoints(*kp);
                } catch (const FieldError& e) {
                    fail(what + "." + e.message);
                }
            } else if (human) {
                fail(what + " is a human instance without keypoints");
            }
            r.instances.push_back(std::move(d));
        }
    }
    if (!r.instances.empty() || v.contains("width") || v.contains("height")) {
        r.dims.width = number(require(v, "width"), "width");
        r.dims.height = number(require(v, "height"), "height");
        if (r.dims.width <= 0.0 || r.dims.height <= 0.0) fail("width and height must be positive");
    }

    if (auto it = v.find("p1"); it != v.end()) {
        if (!it->is_array()) fail("p1 must be an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const json& e = (*it)[i];
            const std::string what = "p1[" + std::to_string(i) + "]";
            PairScores ps;
            ps.human_index = integer(require(e, "human"), what + ".human");
            ps.object_index = integer(require(e, "object"), what + ".object");
            ps.scores = number_list(require(e, "scores"), what + ".scores");
            const int n = static_cast<int>(r.instances.size());
            if (ps.human_index < 0 || ps.human_index >= n || ps.object_index < 0 || ps.object_index >= n) {
                fail(what + " references an instance index out of range");
            }
            if (!r.instances[static_cast<std::size_t>(ps.human_index)].keypoints) {
                fail(what + ".human does not reference a human instance");
            }
            if (options.num_actions > 0 && static_cast<int>(ps.scores.size()) != options.num_actions) {
                fail(what + ".scores has " + std::to_string(ps.scores.size()) + " entries, expected " +
                     std::to_string(options.num_actions));
            }
            r.p1.push_back(std::move(ps));
        }
    }

    if (auto it = v.find("hois"); it != v.end()) {
        if (!it->is_array()) fail("hois must be an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            r.hois.push_back(parse_hoi((*it)[i], r.image_id, "hois[" + std::to_string(i) + "]"));
        }
    }
    return r;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r\n") == std::string::npos; }

std::string located(const std::string& source, std::size_t line, const std::string& message) {
    return source + ":" + std::to_string(line) + ": " + message;
}

/// Runs `handle(json, line_number)` on every non-blank line, turning parse
/// and field errors into located SchemaErrors.
template <class F>
void for_each_json_line(std::istream& in, const std::string& source, F&& handle) {
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (blank(line)) continue;
        json v;
        try {
            v = json::parse(line);
        } catch (const json::parse_error& e) {
            throw SchemaError(located(source, number, std::string("malformed JSON: ") + e.what()));
        }
        try {
            handle(v, number);
        } catch (const FieldError& e) {
            throw SchemaError(located(source, number, e.message));
        }
    }
}

}  // namespace

LoadResult parse_dataset(std::istream& in, const LoadOptions& options, const std::string& source) {
    LoadResult result;
    std::set<std::string> seen;
    std::string line;
    std::size_t number = 0;
    auto report = [&](const std::string& message) {
        if (options.strict) throw SchemaError(located(source, number, message));
        result.diagnostics.push_back({number, message});
    };
    while (std::getline(in, line)) {
        ++number;
        if (blank(line)) continue;
        json v;
        try {
            v = json::parse(line);
        } catch (const json::parse_error& e) {
            report(std::string("malformed JSON: ") + e.what());
            continue;
        }
        DetectionRecord record;
        try {
            record = parse_record(v, options);
        } catch (const FieldError& e) {
            report(e.message);
            continue;
        }
        if (!seen.insert(record.image_id).second) {
            report("duplicate image id '" + record.image_id + "'");
            continue;
        }
        result.records.push_back(std::move(record));
    }
    return result;
}

LoadResult load_dataset(const std::string& path, const LoadOptions& options) {
    auto in = open_input(path);
    return parse_dataset(in, options, path);
}

void write_dataset(std::ostream& out, const std::vector<DetectionRecord>& records) {
    for (const auto& r : records) {
        json v;
        v["image_id"] = r.image_id;
        v["width"] = r.dims.width;
        v["height"] = r.dims.height;
        json instances = json::array();
        for (const auto& inst : r.instances) {
            json i = {{"category", inst.box.category}, {"box", box_json(inst.box)}, {"score", inst.box.score}};
            if (inst.keypoints) i["keypoints"] = keypoints_json(*inst.keypoints);
            instances.push_back(std::move(i));
        }
        v["instances"] = std::move(instances);
        if (!r.p1.empty()) {
            json p1 = json::array();
            for (const auto& p : r.p1) {
                p1.push_back({{"human", p.human_index}, {"object", p.object_index}, {"scores", p.scores}});
            }
            v["p1"] = std::move(p1);
        }
        if (!r.hois.empty()) {
            json hois = json::array();
            for (const auto& h : r.hois) hois.push_back(hoi_json(h));
            v["hois"] = std::move(hois);
        }
        out << v.dump() << '\n';
    }
}

std::vector<GroundTruthHoi> collect_ground_truth(const std::vector<DetectionRecord>& records) {
    std::vector<GroundTruthHoi> out;
    for (const auto& r : records) out.insert(out.end(), r.hois.begin(), r.hois.end());
    return out;
}

std::vector<GroundTruthHoi> load_ground_truth(const std::string& path) {
    return collect_ground_truth(load_dataset(path).records);
}

void write_pairs(std::ostream& out, const std::vector<BoxPairSample>& pairs) {
    auto rows = [](const Matrix& m) {
        json a = json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(json::array({m(i, 0), m(i, 1)}));
        return a;
    };
    for (const auto& p : pairs) {
        json v = {{"image_id", p.image_id},
                  {"human_index", p.human_index},
                  {"object_index", p.object_index},
                  {"human_box", box_json(p.human_box)},
                  {"human_score", p.human_box.score},
                  {"object_box", box_json(p.object_box)},
                  {"object_score", p.object_box.score},
                  {"object_category", p.object_box.category},
                  {"f_rp", rows(p.features.f_rp)},
                  {"f_ap", rows(p.features.f_ap)}};
        if (p.p1) v["p1"] = *p.p1;
        out << v.dump() << '\n';
    }
}

namespace {

Matrix parse_feature_matrix(const json& v, const std::string& what) {
    if (!v.is_array() || v.size() != kNumJoints) fail(what + " must have 17 rows");
    Matrix m(kNumJoints, 2);
    for (int i = 0; i < kNumJoints; ++i) {
        const json& row = v[static_cast<std::size_t>(i)];
        if (!row.is_array() || row.size() != 2) fail(what + " rows must have 2 entries");
        m(i, 0) = number(row[0], what);
        m(i, 1) = number(row[1], what);
    }
    return m;
}

}  // namespace

std::vector<BoxPairSample> read_pairs(std::istream& in, const std::string& source) {
    std::vector<BoxPairSample> pairs;
    for_each_json_line(in, source, [&](const json& v, std::size_t) {
        BoxPairSample p;
        p.image_id = text(require(v, "image_id"), "image_id");
        p.human_index = integer(require(v, "human_index"), "human_index");
        p.object_index = integer(require(v, "object_index"), "object_index");
        p.human_box = parse_box(require(v, "human_box"), "human_box");
        p.human_box.score = unit_score(require(v, "human_score"), "human_score");
        p.object_box = parse_box(require(v, "object_box"), "object_box");
        p.object_box.score = unit_score(require(v, "object_score"), "object_score");
        p.object_box.category = integer(require(v, "object_category"), "object_category");
        p.features.f_rp = parse_feature_matrix(require(v, "f_rp"), "f_rp");
        p.features.f_ap = parse_feature_matrix(require(v, "f_ap"), "f_ap");
        if (auto it = v.find("p1"); it != v.end()) p.p1 = number_list(*it, "p1");
        pairs.push_back(std::move(p));
    });
    return pairs;
}

std::vector<BoxPairSample> load_pairs(const std::string& path) {
    auto in = open_input(path);
    return read_pairs(in, path);
}

void write_detections(std::ostream& out, const std::vector<HoiDetection>& dets) {
    for (const auto& d : dets) {
        json v = {{"image_id", d.image_id},
                  {"human_box", box_json(d.human_box)},
                  {"object_box", box_json(d.object_box)},
                  {"object_category", d.category.object_category},
                  {"action", d.category.action},
                  {"score", d.score}};
        out << v.dump() << '\n';
    }
}

std::vector<HoiDetection> read_detections(std::istream& in, const std::string& source) {
    std::vector<HoiDetection> dets;
    for_each_json_line(in, source, [&](const json& v, std::size_t) {
        HoiDetection d;
        d.image_id = text(require(v, "image_id"), "image_id");
        d.human_box = parse_box(require(v, "human_box"), "human_box");
        d.object_box = parse_box(require(v, "object_box"), "object_box");
        d.category.object_category = integer(require(v, "object_category"), "object_category");
        d.category.action = integer(require(v, "action"), "action");
        d.score = unit_score(require(v, "score"), "score");
        dets.push_back(std::move(d));
    });
    return dets;
}

std::vector<HoiDetection> load_detections(const std::string& path) {
    auto in = open_input(path);
    return read_detections(in, path);
}

std::map<PairKey, std::vector<double>> read_p1(std::istream& in, const std::string& source) {
    std::map<PairKey, std::vector<double>> out;
    for_each_json_line(in, source, [&](const json& v, std::size_t) {
        PairKey key{text(require(v, "image_id"), "image_id"),
                    integer(require(v, "human_index"), "human_index"),
                    integer(require(v, "object_index"), "object_index")};
        if (out.count(key)) fail("duplicate p1 entry");
        out[key] = number_list(require(v, "scores"), "scores");
    });
    return out;
}

std::map<PairKey, std::vector<double>> load_p1(const std::string& path) {
    auto in = open_input(path);
    return read_p1(in, path);
}

void write_splits(std::ostream& out, const CategorySplit& split,
                  const std::map<HoiCategory, int>& counts) {
    json categories = json::array();
    for (const auto& [category, rare] : split.categories()) {
        json c = {{"object_category", category.object_category}, {"action", category.action}};
        if (auto it = counts.find(category); it != counts.end()) {
            c["train_count"] = it->second;
        } else {
            c["rare"] = rare;
        }
        categories.push_back(std::move(c));
    }
    json v = {{"rare_threshold", kRareThreshold}, {"categories", std::move(categories)}};
    out << v.dump(2) << '\n';
}

CategorySplit read_splits(std::istream& in, const std::string& source) {
    std::ostringstream ss;
    ss << in.rdbuf();
    json v;
    try {
        v = json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw SchemaError(source + ": malformed JSON: " + e.what());
    }
    try {
        int threshold = kRareThreshold;
        if (auto it = v.find("rare_threshold"); it != v.end()) threshold = integer(*it, "rare_threshold");
        const json& categories = require(v, "categories");
        if (!categories.is_array()) fail("categories must be an array");
        CategorySplit split;
        for (std::size_t i = 0; i < categories.size(); ++i) {
            const json& c = categories[i];
            const std::string what = "categories[" + std::to_string(i) + "]";
            HoiCategory category{integer(require(c, "object_category"), what + ".object_category"),
                                 integer(require(c, "action"), what + ".action")};
            if (split.contains(category)) fail(what + " repeats category " + to_string(category));
            bool rare;
            if (auto it = c.find("train_count"); it != c.end()) {
                rare = integer(*it, what + ".train_count") < threshold;
            } else {
                const json& flag = require(c, "rare");
                if (!flag.is_boolean()) fail(what + ".rare must be a boolean");
                rare = flag.get<bool>();
            }
            split.add(category, rare);
        }
        return split;
    } catch (const FieldError& e) {
        throw SchemaError(source + ": " + e.message);
    }
}

CategorySplit load_splits(const std::string& path) {
    auto in = open_input(path);
    return read_splits(in, path);
}

// ---------------------------------------------------------------------------
// Config

namespace {

json config_json(const TrainConfig& c) {
    json v = {{"architecture", to_string(c.architecture)},
              {"topology", to_string(c.topology)},
              {"streams", to_string(c.streams)},
              {"num_actions", c.num_actions},
              {"batch_size", c.batch_size},
              {"lr_initial", c.lr_initial},
              {"lr_drop", c.lr_drop},
              {"lr_drop_epoch", c.lr_drop_epoch},
              {"stop_epoch", c.stop_epoch},
              {"dropout", c.dropout},
              {"batch_norm", c.batch_norm},
              {"bn_momentum", c.bn_momentum},
              {"weight_decay", c.weight_decay},
              {"grad_clip", c.grad_clip},
              {"checkpoint_interval", c.checkpoint_interval},
              {"seed", c.seed}};
    if (c.edges) {
        json edges = json::array();
        for (const auto& [a, b] : *c.edges) edges.push_back(json::array({a, b}));
        v["edges"] = std::move(edges);
    }
    return v;
}

TrainConfig config_from_json(const json& v) {
    if (!v.is_object()) fail("config must be a JSON object");
    TrainConfig c;
    if (auto it = v.find("schedule"); it != v.end()) {
        const std::string s = text(*it, "schedule");
        if (s == "hico_det") {
            c = TrainConfig::hico_det();
        } else if (s == "v_coco") {
            c = TrainConfig::v_coco();
        } else {
            fail("schedule must be hico_det or v_coco");
        }
    }
    for (const auto& [key, value] : v.items()) {
        if (key == "schedule") continue;
        if (key == "architecture") {
            c.architecture = architecture_from_string(text(value, key));
        } else if (key == "topology") {
            c.topology = topology_from_string(text(value, key));
        } else if (key == "streams") {
            c.streams = stream_mode_from_string(text(value, key));
        } else if (key == "num_actions") {
            c.num_actions = integer(value, key);
        } else if (key == "batch_size") {
            c.batch_size = integer(value, key);
        } else if (key == "lr_initial") {
            c.lr_initial = number(value, key);
        } else if (key == "lr_drop") {
            c.lr_drop = number(value, key);
        } else if (key == "lr_drop_epoch") {
            c.lr_drop_epoch = integer(value, key);
        } else if (key == "stop_epoch") {
            c.stop_epoch = integer(value, key);
        } else if (key == "dropout") {
            c.dropout = number(value, key);
        } else if (key == "batch_norm") {
            if (!value.is_boolean()) fail("batch_norm must be a boolean");
            c.batch_norm = value.get<bool>();
        } else if (key == "bn_momentum") {
            c.bn_momentum = number(value, key);
        } else if (key == "weight_decay") {
            c.weight_decay = number(value, key);
        } else if (key == "grad_clip") {
            c.grad_clip = number(value, key);
        } else if (key == "checkpoint_interval") {
            c.checkpoint_interval = integer(value, key);
        } else if (key == "seed") {
            if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<std::int64_t>() >= 0)) {
                fail("seed must be a non-negative integer");
            }
            c.seed = value.get<std::uint64_t>();
        } else if (key == "edges") {
            if (!value.is_array()) fail("edges must be an array of [a, b] pairs");
            std::vector<Edge> edges;
            for (const auto& e : value) {
                if (!e.is_array() || e.size() != 2) fail("edges must be an array of [a, b] pairs");
                edges.emplace_back(integer(e[0], "edge"), integer(e[1], "edge"));
            }
            c.edges = std::move(edges);
        } else {
            fail("unknown config key '" + key + "'");
        }
    }
    return c;
}

}  // namespace

TrainConfig parse_config(std::istream& in, const std::string& source) {
    std::ostringstream ss;
    ss << in.rdbuf();
    json v;
    try {
        v = json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw ConfigError(source + ": malformed JSON: " + e.what());
    }
    TrainConfig c;
    try {
        c = config_from_json(v);
    } catch (const FieldError& e) {
        throw ConfigError(source + ": " + e.message);
    }
    c.validate();
    return c;
}

TrainConfig load_config(const std::string& path) {
    auto in = open_input(path);
    return parse_config(in, path);
}

std::string config_to_json(const TrainConfig& config) { return config_json(config).dump(2); }

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json tensor_json(const std::string& name, const Matrix& m) {
    std::vector<double> data(m.data(), m.data() + m.size());
    return {{"name", name}, {"shape", json::array({m.rows(), m.cols()})}, {"data", std::move(data)}};
}

/// Fills `targets` (already shaped) from a JSON tensor list, by name and in order.
template <class Targets>
void read_tensors(const json& list, const Targets& targets, const std::string& what) {
    if (!list.is_array()) fail(what + " must be an array");
    if (list.size() != targets.size()) {
        throw ShapeError(what + " holds " + std::to_string(list.size()) + " tensors, architecture expects " +
                         std::to_string(targets.size()));
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const json& t = list[i];
        const std::string name = text(require(t, "name"), what + ".name");
        if (name != targets[i].name) {
            throw ShapeError(what + "[" + std::to_string(i) + "] is '" + name + "', expected '" +
                             targets[i].name + "'");
        }
        const json& shape = require(t, "shape");
        if (!shape.is_array() || shape.size() != 2) fail(name + ".shape must be [rows, cols]");
        const long rows = integer(shape[0], name + ".shape");
        const long cols = integer(shape[1], name + ".shape");
        Matrix& target = *targets[i].value;
        if (rows != target.rows() || cols != target.cols()) {
            throw ShapeError("tensor '" + name + "' declares shape " + std::to_string(rows) + "x" +
                             std::to_string(cols) + ", architecture expects " +
                             std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
        }
        const json& data = require(t, "data");
        if (!data.is_array() || static_cast<long>(data.size()) != rows * cols) {
            throw ShapeError("tensor '" + name + "' has " + std::to_string(data.is_array() ? data.size() : 0) +
                             " values, expected " + std::to_string(rows * cols));
        }
        for (std::size_t k = 0; k < data.size(); ++k) target.data()[k] = number(data[k], name);
    }
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
    const ModelParams& params = checkpoint.params;
    json v;
    v["format"] = kCheckpointFormat;
    v["version"] = kCheckpointVersion;
    v["architecture"] = to_string(architecture_of(params));
    v["num_actions"] = num_actions(params);
    v["batch_norm"] = std::visit([](const auto& p) { return p.batch_norm; }, params);
    v["topology"] = to_string(checkpoint.config.topology);
    v["seed"] = checkpoint.config.seed;
    v["epoch"] = checkpoint.epoch;
    v["config"] = config_json(checkpoint.config);

    json tensors = json::array();
    for (const auto& t : trainable_tensors(params)) tensors.push_back(tensor_json(t.name, *t.value));
    v["tensors"] = std::move(tensors);
    json buffers = json::array();
    for (const auto& t : buffer_tensors(params)) buffers.push_back(tensor_json(t.name, *t.value));
    v["buffers"] = std::move(buffers);

    if (checkpoint.optimizer) {
        const AdamState& s = *checkpoint.optimizer;
        json m = json::array();
        json sq = json::array();
        for (std::size_t i = 0; i < s.first_moment.size(); ++i) {
            m.push_back(tensor_json(s.names[i], s.first_moment[i]));
            sq.push_back(tensor_json(s.names[i], s.second_moment[i]));
        }
        v["optimizer"] = {{"beta1", s.beta1},
                          {"beta2", s.beta2},
                          {"epsilon", s.epsilon},
                          {"step", s.step},
                          {"first_moment", std::move(m)},
                          {"second_moment", std::move(sq)}};
    }
    return v.dump() + "\n";
}

Checkpoint deserialize_checkpoint(const std::string& serialized) {
    json v;
    try {
        v = json::parse(serialized);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("checkpoint is truncated or malformed: ") + e.what());
    }
    try {
        if (!v.is_object() || v.value("format", std::string()) != kCheckpointFormat) {
            fail("not a pmn checkpoint");
        }
        const int version = integer(require(v, "version"), "version");
        if (version != kCheckpointVersion) {
            throw UnsupportedVersionError("checkpoint version " + std::to_string(version) +
                                          " is not supported (expected " +
                                          std::to_string(kCheckpointVersion) + ")");
        }
        Checkpoint cp;
        cp.config = config_from_json(require(v, "config"));
        cp.epoch = integer(require(v, "epoch"), "epoch");
        const Architecture arch = architecture_from_string(text(require(v, "architecture"), "architecture"));
        const int k = integer(require(v, "num_actions"), "num_actions");
        const json& bn = require(v, "batch_norm");
        if (!bn.is_boolean()) fail("batch_norm must be a boolean");
        if (arch != cp.config.architecture || k != cp.config.num_actions ||
            bn.get<bool>() != cp.config.batch_norm) {
            throw ShapeError("checkpoint header disagrees with its config echo");
        }
        if (k < 1) throw ShapeError("num_actions must be at least 1");
        cp.params = init_params(0, {arch, k, bn.get<bool>()});
        read_tensors(require(v, "tensors"), trainable_tensors(cp.params), "tensors");
        read_tensors(require(v, "buffers"), buffer_tensors(cp.params), "buffers");
        for (const auto& t : buffer_tensors(cp.params)) {
            if (t.name.ends_with("running_var") && !(t.value->array() > 0.0).all()) {
                throw ShapeError("buffer '" + t.name + "' must be positive");
            }
        }

        if (auto it = v.find("optimizer"); it != v.end()) {
            AdamState s = make_adam_state(cp.params);
            s.beta1 = number(require(*it, "beta1"), "beta1");
            s.beta2 = number(require(*it, "beta2"), "beta2");
            s.epsilon = number(require(*it, "epsilon"), "epsilon");
            s.step = require(*it, "step").get<std::int64_t>();
            std::vector<NamedTensor> m;
            std::vector<NamedTensor> sq;
            for (std::size_t i = 0; i < s.names.size(); ++i) {
                m.push_back({s.names[i], &s.first_moment[i]});
                sq.push_back({s.names[i], &s.second_moment[i]});
            }
            read_tensors(require(*it, "first_moment"), m, "first_moment");
            read_tensors(require(*it, "second_moment"), sq, "second_moment");
            cp.optimizer = std::move(s);
        }
        return cp;
    } catch (const FieldError& e) {
        throw SchemaError("checkpoint: " + e.message);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
    write_file(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace pmn
