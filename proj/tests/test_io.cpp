#include <doctest.h>

#include <cstring>
#include <sstream>

#include <json.hpp>

#include "oracles.hpp"
#include "pmn/io.hpp"
#include "pmn/pipeline.hpp"

using namespace pmn;
using nlohmann::json;

namespace {

const std::string kData = PMN_DATA_DIR;

json keypoints(int count = 17) {
    json k = json::array();
    for (int i = 0; i < count; ++i) k.push_back({100 + i, 120 + 5 * i, 0.9});
    return k;
}

json record(const std::string& id) {
    return {{"image_id", id},
            {"width", 640},
            {"height", 480},
            {"instances",
             {{{"category", 1}, {"box", {80, 100, 200, 400}}, {"score", 0.95}, {"keypoints", keypoints()}},
              {{"category", 41}, {"box", {220, 200, 260, 240}}, {"score", 0.6}}}}};
}

std::string lines(std::initializer_list<json> records) {
    std::string s;
    for (const auto& r : records) s += r.dump() + "\n";
    return s;
}

FeaturizeOptions infer_k() {
    FeaturizeOptions o;
    o.pairing.num_actions = 0;
    return o;
}

LoadResult parse(const std::string& text, bool strict = true, int num_actions = 0) {
    std::istringstream in(text);
    LoadOptions options;
    options.strict = strict;
    options.num_actions = num_actions;
    return parse_dataset(in, options, "fixture.jsonl");
}

Checkpoint trained_checkpoint() {
    Rng rng(3);
    TrainingSet set;
    set.pairs = testing::random_pairs(rng, 6);
    set.labels = Matrix::Zero(6, 3);
    set.labels(0, 1) = set.labels(3, 2) = 1.0;
    TrainConfig c;
    c.num_actions = 3;
    c.batch_size = 3;
    c.lr_initial = 1e-3;
    c.lr_drop = 1e-4;
    c.lr_drop_epoch = 1;
    c.stop_epoch = 2;
    c.seed = 9;
    TrainResult r = train(set, c);
    return {std::move(r.params), c, std::move(r.optimizer), 2};
}

}  // namespace

TEST_CASE("a two-image detection file parses") {
    const LoadResult r = parse(lines({record("a"), record("b")}));
    REQUIRE(r.records.size() == 2);
    CHECK(r.records[0].image_id == "a");
    CHECK(r.records[0].instances.size() == 2);
    CHECK(r.records[0].instances[0].keypoints.has_value());
    CHECK_FALSE(r.records[0].instances[1].keypoints.has_value());
    CHECK(r.records[0].instances[0].keypoints->coords[16].y == 200.0);
    CHECK(r.records[1].dims.width == 640.0);
    CHECK(r.diagnostics.empty());
}

TEST_CASE("the shipped example parses and pairs") {
    const LoadResult r = load_dataset(kData + "/example_detections.jsonl");
    REQUIRE(r.records.size() == 2);
    CHECK(r.records[0].p1.size() == 2);
    CHECK(collect_ground_truth(r.records).size() == 3);
    const FeaturizeResult f = featurize(r.records, infer_k());
    // image 1: one human, two objects; image 2: only the 0.85 human qualifies,
    // paired with the 0.79 human and the 0.31 bat but not the 0.29 ball
    CHECK(f.pairs.size() == 4);
    CHECK(f.pairs[0].p1.has_value());
    CHECK(f.pairs[0].p1->size() == 4);
    CHECK_FALSE(f.pairs[2].p1.has_value());
}

TEST_CASE("sixteen keypoints are rejected with the line number") {
    json bad = record("b");
    bad["instances"][0]["keypoints"] = keypoints(16);
    const std::string text = lines({record("a"), bad});
    CHECK_THROWS_WITH_AS(parse(text), doctest::Contains("fixture.jsonl:2:"), SchemaError);
    CHECK_THROWS_WITH_AS(parse(text), doctest::Contains("expected 17 entries, got 16"), SchemaError);

    const LoadResult lenient = parse(text, false);
    CHECK(lenient.records.size() == 1);
    REQUIRE(lenient.diagnostics.size() == 1);
    CHECK(lenient.diagnostics[0].line == 2);
}

TEST_CASE("duplicate image ids are an error") {
    const std::string text = lines({record("a"), record("a")});
    CHECK_THROWS_AS(parse(text), SchemaError);
    const LoadResult lenient = parse(text, false);
    CHECK(lenient.records.size() == 1);
    CHECK(lenient.diagnostics.size() == 1);
}

TEST_CASE("keypoints belong to human instances only") {
    json bad = record("a");
    bad["instances"][1]["keypoints"] = keypoints();
    CHECK_THROWS_AS(parse(lines({bad})), SchemaError);
    json missing = record("a");
    missing["instances"][0].erase("keypoints");
    CHECK_THROWS_AS(parse(lines({missing})), SchemaError);
}

TEST_CASE("malformed lines report their location") {
    CHECK_THROWS_WITH_AS(parse(record("a").dump() + "\n{not json\n"), doctest::Contains("fixture.jsonl:2:"),
                         SchemaError);
    json inverted = record("a");
    inverted["instances"][1]["box"] = {260, 200, 220, 240};
    CHECK_THROWS_AS(parse(lines({inverted})), SchemaError);
    json score = record("a");
    score["instances"][1]["score"] = 1.5;
    CHECK_THROWS_AS(parse(lines({score})), SchemaError);
    CHECK(parse("\n\n" + record("a").dump() + "\n\n").records.size() == 1);
}

TEST_CASE("p1 vectors must have length K") {
    json r = record("a");
    r["p1"] = {{{"human", 0}, {"object", 1}, {"scores", std::vector<double>(29, 0.1)}}};
    CHECK_THROWS_AS(parse(lines({r}), true, 117), SchemaError);
    CHECK_NOTHROW(parse(lines({r}), true, 29));
    r["p1"][0]["human"] = 1;
    CHECK_THROWS_AS(parse(lines({r})), SchemaError);
    r["p1"][0]["human"] = 0;
    r["p1"][0]["object"] = 5;
    CHECK_THROWS_AS(parse(lines({r})), SchemaError);
}

TEST_CASE("datasets, pairs and detections round-trip") {
    const LoadResult r = load_dataset(kData + "/example_detections.jsonl");
    std::ostringstream out;
    write_dataset(out, r.records);
    std::istringstream in(out.str());
    const LoadResult again = parse_dataset(in, {});
    std::ostringstream out2;
    write_dataset(out2, again.records);
    CHECK(out.str() == out2.str());

    const auto pairs = featurize(r.records, infer_k()).pairs;
    std::ostringstream pout;
    write_pairs(pout, pairs);
    std::istringstream pin(pout.str());
    const auto pairs2 = read_pairs(pin);
    REQUIRE(pairs2.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(pairs2[i].features.f_rp == pairs[i].features.f_rp);
        CHECK(pairs2[i].features.f_ap == pairs[i].features.f_ap);
        CHECK(pairs2[i].human_box.score == pairs[i].human_box.score);
        CHECK(pairs2[i].p1 == pairs[i].p1);
    }

    const auto dets = load_detections(kData + "/perfect/dets.jsonl");
    std::ostringstream dout;
    write_detections(dout, dets);
    std::istringstream din(dout.str());
    CHECK(read_detections(din).size() == dets.size());
}

TEST_CASE("p1 side files reject duplicate keys") {
    const auto p1 = load_p1(kData + "/example_p1.jsonl");
    CHECK(p1.size() == 2);
    CHECK(p1.at({"000002", 1, 3}).size() == 4);
    const std::string line = R"({"image_id":"x","human_index":0,"object_index":1,"scores":[0.1]})";
    std::istringstream dup(line + "\n" + line + "\n");
    CHECK_THROWS_AS(read_p1(dup), SchemaError);
}

TEST_CASE("splits round-trip and reject repeated categories") {
    const CategorySplit s = load_splits(kData + "/perfect/splits.json");
    CHECK(s.categories().size() == 5);
    CHECK(s.is_rare({41, 1}));
    CHECK(s.is_rare({39, 3}));
    CHECK_FALSE(s.is_rare({62, 2}));

    std::ostringstream out;
    write_splits(out, s);
    std::istringstream in(out.str());
    CHECK(read_splits(in).categories() == s.categories());

    std::istringstream dup(
        R"({"categories":[{"object_category":1,"action":0,"rare":true},{"object_category":1,"action":0,"rare":false}]})");
    CHECK_THROWS_AS(read_splits(dup), SchemaError);
}

TEST_CASE("configs parse, apply presets and reject unknown keys") {
    const TrainConfig h = load_config(kData + "/configs/hico_det.json");
    CHECK(h.lr_drop_epoch == 150);
    CHECK(h.stop_epoch == 200);
    CHECK(h.num_actions == 117);
    const TrainConfig v = load_config(kData + "/configs/v_coco.json");
    CHECK(v.num_actions == 24);
    CHECK(v.lr_drop_epoch == 400);
    CHECK(load_config(kData + "/configs/synthetic.json").seed == 2026);

    std::istringstream unknown(R"({"learning_rate": 0.1})");
    CHECK_THROWS_AS(parse_config(unknown), ConfigError);
    std::istringstream bad_range(R"({"dropout": 1.5})");
    CHECK_THROWS_AS(parse_config(bad_range), ConfigError);
    std::istringstream bad_topology(R"({"topology": "ring"})");
    CHECK_THROWS_AS(parse_config(bad_topology), ConfigError);

    std::istringstream round(config_to_json(h));
    CHECK(config_to_json(parse_config(round)) == config_to_json(h));
}

TEST_CASE("checkpoints round-trip bit for bit") {
    const Checkpoint cp = trained_checkpoint();
    const std::string text = serialize_checkpoint(cp);
    const Checkpoint back = deserialize_checkpoint(text);
    CHECK(serialize_checkpoint(back) == text);
    CHECK(back.epoch == 2);
    CHECK(back.config.seed == 9);
    const auto a = trainable_tensors(cp.params);
    const auto b = trainable_tensors(back.params);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        CHECK(std::memcmp(a[i].value->data(), b[i].value->data(), sizeof(double) * a[i].value->size()) == 0);
    }
    REQUIRE(back.optimizer.has_value());
    CHECK(back.optimizer->step == cp.optimizer->step);
    CHECK(back.optimizer->second_moment.back() == cp.optimizer->second_moment.back());
}

TEST_CASE("corrupted checkpoints are rejected by kind") {
    const std::string text = serialize_checkpoint(trained_checkpoint());

    json v = json::parse(text);
    v["version"] = 2;
    CHECK_THROWS_AS(deserialize_checkpoint(v.dump()), UnsupportedVersionError);

    v = json::parse(text);
    v["tensors"][0]["shape"] = {3, 128};
    CHECK_THROWS_AS(deserialize_checkpoint(v.dump()), ShapeError);

    v = json::parse(text);
    v["tensors"].erase(v["tensors"].size() - 1);
    CHECK_THROWS_AS(deserialize_checkpoint(v.dump()), ShapeError);

    v = json::parse(text);
    v["num_actions"] = 4;
    CHECK_THROWS_AS(deserialize_checkpoint(v.dump()), ShapeError);

    CHECK_THROWS_AS(deserialize_checkpoint(text.substr(0, text.size() / 2)), SchemaError);
    CHECK_THROWS_AS(deserialize_checkpoint("[]"), SchemaError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/pmn.ckpt"), IoError);
}
