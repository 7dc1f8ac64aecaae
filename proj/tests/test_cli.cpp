#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "pmn/io.hpp"

using namespace pmn;
namespace fs = std::filesystem;

namespace {

const std::string kData = PMN_DATA_DIR;

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("pmn_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::size_t count_lines(const std::string& path) {
    const std::string s = read_file(path);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("eval of a perfect detector prints 1.0000 everywhere") {
    const Run r = run({"eval", "--dets", kData + "/perfect/dets.jsonl", "--gt", kData + "/perfect/gt.jsonl",
                       "--splits", kData + "/perfect/splits.json"});
    CHECK(r.code == 0);
    CHECK(r.out.find("Full     mAP 1.0000  (5 categories)") != std::string::npos);
    CHECK(r.out.find("Rare     mAP 1.0000  (2 categories)") != std::string::npos);
    CHECK(r.out.find("Non-Rare mAP 1.0000  (3 categories)") != std::string::npos);

    const Run per = run({"eval", "--dets", kData + "/perfect/dets.jsonl", "--gt", kData + "/perfect/gt.jsonl",
                         "--per-category"});
    CHECK(per.out.find(" ap 1.0000") != std::string::npos);
}

TEST_CASE("featurize honours the human threshold flag") {
    TempDir tmp;
    const Run base = run({"featurize", "--detections", kData + "/example_detections.jsonl", "--out", tmp / "a.jsonl"});
    CHECK(base.code == 0);
    CHECK(base.out == "featurize: 4 pairs from 2 images\n");
    CHECK(count_lines(tmp / "a.jsonl") == 4);
    // the 0.79 human of image 000002 is instance 0
    for (const auto& pair : load_pairs(tmp / "a.jsonl")) {
        CHECK_FALSE((pair.image_id == "000002" && pair.human_index == 0));
    }

    const Run low = run({"featurize", "--detections", kData + "/example_detections.jsonl", "--out", tmp / "b.jsonl",
                         "--human-thresh", "0.79"});
    CHECK(low.code == 0);
    CHECK(low.out == "featurize: 6 pairs from 2 images\n");
}

TEST_CASE("errors print one line with their kind") {
    TempDir tmp;
    const Run missing = run({"featurize", "--detections", tmp / "nope.jsonl", "--out", tmp / "x.jsonl"});
    CHECK(missing.code == 1);
    CHECK(missing.err.rfind("pmn: IoError: ", 0) == 0);

    write_file(tmp / "bad.jsonl", "{\"image_id\": 3}\n");
    const Run schema = run({"featurize", "--detections", tmp / "bad.jsonl", "--out", tmp / "x.jsonl"});
    CHECK(schema.code == 1);
    CHECK(schema.err.rfind("pmn: SchemaError: " + tmp / "bad.jsonl" + ":1:", 0) == 0);

    const Run usage = run({"eval", "--dets"});
    CHECK(usage.code == 2);
    CHECK(usage.err.rfind("pmn: UsageError: ", 0) == 0);

    const Run streams = run({"predict", "--features", "f", "--ckpt", "c", "--out", "o", "--streams", "left"});
    CHECK(streams.code == 2);

    CHECK(run({}).code == 2);
    const Run help = run({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("featurize") != std::string::npos);
}

TEST_CASE("synth, featurize, train, predict and eval run end to end") {
    TempDir tmp;
    REQUIRE(run({"synth", "--out", tmp / "synth.jsonl", "--images", "8", "--seed", "3"}).code == 0);
    const Run f = run({"featurize", "--detections", tmp / "synth.jsonl", "--out", tmp / "pairs.jsonl"});
    REQUIRE(f.code == 0);
    CHECK(f.out == "featurize: 16 pairs from 8 images\n");

    write_file(tmp / "config.json", R"({"num_actions": 5, "batch_size": 4, "lr_initial": 1e-3, "lr_drop": 1e-4,
        "lr_drop_epoch": 2, "stop_epoch": 3, "checkpoint_interval": 2, "seed": 1})");
    const std::vector<std::string> train = {"train",    "--features",         tmp / "pairs.jsonl",
                                            "--labels", tmp / "synth.jsonl",  "--config",
                                            tmp / "config.json", "--out", tmp / "model.json", "--log",
                                            tmp / "log.jsonl"};
    REQUIRE(run(train).code == 0);
    CHECK(count_lines(tmp / "log.jsonl") == 3);
    CHECK(fs::exists(tmp / "model.json.epoch2"));
    const Checkpoint cp = load_checkpoint(tmp / "model.json");
    CHECK(cp.epoch == 3);
    CHECK(cp.optimizer.has_value());

    const std::string first = read_file(tmp / "model.json");
    REQUIRE(run(train).code == 0);
    CHECK(read_file(tmp / "model.json") == first);

    std::vector<std::string> reseeded = train;
    reseeded.insert(reseeded.end(), {"--seed", "2"});
    REQUIRE(run(reseeded).code == 0);
    CHECK(read_file(tmp / "model.json") != first);

    ::setenv("PMN_SEED", "2", 1);
    REQUIRE(run(train).code == 0);
    const std::string from_env = read_file(tmp / "model.json");
    reseeded.back() = "1";
    REQUIRE(run(reseeded).code == 0);
    ::unsetenv("PMN_SEED");
    CHECK(read_file(tmp / "model.json") == first);
    CHECK(from_env != first);

    const Run p = run({"predict", "--features", tmp / "pairs.jsonl", "--ckpt", tmp / "model.json", "--out",
                       tmp / "dets.jsonl"});
    REQUIRE(p.code == 0);
    CHECK(p.out == "predict: 80 detections for 16 pairs\n");
    const std::string dets = read_file(tmp / "dets.jsonl");
    REQUIRE(run({"predict", "--features", tmp / "pairs.jsonl", "--ckpt", tmp / "model.json", "--out",
                 tmp / "dets2.jsonl"}).code == 0);
    CHECK(read_file(tmp / "dets2.jsonl") == dets);

    REQUIRE(run({"splits", "--train", tmp / "synth.jsonl", "--out", tmp / "splits.json"}).code == 0);
    const Run e = run({"eval", "--dets", tmp / "dets.jsonl", "--gt", tmp / "synth.jsonl", "--splits",
                       tmp / "splits.json"});
    CHECK(e.code == 0);
    CHECK(e.out.rfind("Full     mAP ", 0) == 0);
}

TEST_CASE("the CLI pipeline fits the synthetic corpus") {
    TempDir tmp;
    REQUIRE(run({"synth", "--out", tmp / "synth.jsonl", "--seed", "7"}).code == 0);
    REQUIRE(run({"featurize", "--detections", tmp / "synth.jsonl", "--out", tmp / "pairs.jsonl"}).code == 0);
    write_file(tmp / "config.json", R"({"num_actions": 5, "lr_initial": 1e-3, "lr_drop": 1e-4,
        "lr_drop_epoch": 20, "stop_epoch": 25, "seed": 2026})");
    REQUIRE(run({"train", "--features", tmp / "pairs.jsonl", "--labels", tmp / "synth.jsonl", "--config",
                 tmp / "config.json", "--out", tmp / "model.json", "--log", tmp / "log.jsonl"}).code == 0);
    REQUIRE(run({"predict", "--features", tmp / "pairs.jsonl", "--ckpt", tmp / "model.json", "--out",
                 tmp / "dets.jsonl"}).code == 0);
    const Run e = run({"eval", "--dets", tmp / "dets.jsonl", "--gt", tmp / "synth.jsonl"});
    REQUIRE(e.code == 0);
    const double full = std::stod(e.out.substr(std::string("Full     mAP ").size()));
    CHECK(full >= 0.99);
}

TEST_CASE("a bad PMN_SEED is a config error") {
    TempDir tmp;
    ::setenv("PMN_SEED", "-4", 1);
    const Run r = run({"synth", "--out", tmp / "s.jsonl", "--images", "2"});
    ::unsetenv("PMN_SEED");
    CHECK(r.code == 1);
    CHECK(r.err.rfind("pmn: ConfigError: ", 0) == 0);
}
