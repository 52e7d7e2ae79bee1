#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "uinr/volume.hpp"

using namespace uinr;
namespace fs = std::filesystem;

namespace {

std::string cli() {
    const char* path = std::getenv("UINR_CLI");
    REQUIRE_MESSAGE(path != nullptr, "UINR_CLI must point at the uinr binary");
    return path;
}

int run(const std::string& args) {
    const std::string cmd = cli() + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

const std::string kRoot = "/tmp/uinr_test_cli";

// A small smooth raw volume the tiny training runs can fit quickly.
void write_blob_raw(const std::string& path, int n) {
    std::ofstream out(path, std::ios::binary);
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const double cx = (2.0 * x) / (n - 1) - 1.0;
                const double cy = (2.0 * y) / (n - 1) - 1.0;
                const double cz = (2.0 * z) / (n - 1) - 1.0;
                const float v =
                    static_cast<float>(std::exp(-3.0 * (cx * cx + cy * cy + cz * cz)));
                out.write(reinterpret_cast<const char*>(&v), sizeof(v));
            }
}

struct Workspace {
    Workspace() {
        fs::remove_all(kRoot);
        fs::create_directories(kRoot);
        write_blob_raw(kRoot + "/blob.raw", 8);
    }
    ~Workspace() { fs::remove_all(kRoot); }
};

std::string train_args(const std::string& variant, const std::string& out, int epochs = 4) {
    return "train --variant " + variant + " --volume " + kRoot + "/blob.raw --dims 8,8,8" +
           " --dtype f32le --width 8 --blocks 1 --epochs " + std::to_string(epochs) +
           " --batch-size 128 --lr 2e-3 --out " + out;
}

int count_lines(const std::string& path) {
    std::ifstream in(path);
    int n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

}  // namespace

TEST_CASE("full pipeline: train, info, reconstruct, derive-fields, evaluate, lcp") {
    Workspace ws;
    const std::string run_dir = kRoot + "/rev";

    REQUIRE(run(train_args("rev", run_dir)) == 0);
    CHECK(fs::exists(run_dir + "/model.bin"));
    CHECK(fs::exists(run_dir + "/resolved_config.json"));
    CHECK(count_lines(run_dir + "/train_log.jsonl") == 4);

    CHECK(run("info " + run_dir + "/model.bin") == 0);

    const std::string fields = kRoot + "/fields";
    REQUIRE(run("reconstruct --checkpoint " + run_dir + "/model.bin --out " + fields) == 0);
    for (const char* f : {"mean.vol", "au.vol", "eu.vol"}) {
        CHECK(fs::exists(fields + "/" + f));
        CHECK(fs::exists(fields + "/" + f + ".json"));
    }
    const auto [mean, mean_meta] = read_volume(fields + "/mean.vol");
    CHECK(mean.dims() == Dims{8, 8, 8});
    CHECK(mean_meta.field_kind == "mean");
    CHECK(run("info " + fields + "/mean.vol") == 0);

    // Super-resolution reconstruction doubles the grid.
    const std::string fields2x = kRoot + "/fields2x";
    REQUIRE(run("reconstruct --checkpoint " + run_dir + "/model.bin --dims 2x --out " +
                fields2x) == 0);
    CHECK(read_volume(fields2x + "/mean.vol").first.dims() == Dims{16, 16, 16});

    REQUIRE(run("derive-fields --volume " + kRoot + "/blob.raw --dims 8,8,8 --out " + kRoot +
                "/derived --locvar-window 2 --interp-factors 4") == 0);
    CHECK(fs::exists(kRoot + "/derived/gradient_magnitude.vol"));
    CHECK(fs::exists(kRoot + "/derived/local_variance.vol"));
    CHECK(fs::exists(kRoot + "/derived/interpolation_error.vol"));

    const std::string report = kRoot + "/report.json";
    REQUIRE(run("evaluate --volume " + kRoot + "/blob.raw --dims 8,8,8 --fields-dir " +
                fields + " --locvar-window 2 --interp-factors 4 --report " + report +
                " --csv " + kRoot + "/report.csv") == 0);
    std::ifstream rep(report);
    REQUIRE(rep.good());
    const auto j = nlohmann::json::parse(rep);
    CHECK(j.contains("psnr_db"));
    CHECK(j.contains("corr_eu_error"));
    CHECK(count_lines(kRoot + "/report.csv") == 2);

    // Ablation deltas against the report itself are all zero.
    REQUIRE(run("evaluate --volume " + kRoot + "/blob.raw --dims 8,8,8 --fields-dir " +
                fields + " --locvar-window 2 --interp-factors 4 --ablation-against " +
                report + " --report " + kRoot + "/report2.json") == 0);
    std::ifstream rep2(kRoot + "/report2.json");
    const auto j2 = nlohmann::json::parse(rep2);
    REQUIRE(j2.contains("ablation"));
    for (const auto& [key, value] : j2["ablation"]["deltas"].items()) {
        CHECK(value.get<double>() == 0.0);
    }

    REQUIRE(run("lcp --fields-dir " + fields + " --variance eu --isovalue 0.5 --out " +
                kRoot + "/lcp.vol") == 0);
    const auto [lcp, lcp_meta] = read_volume(kRoot + "/lcp.vol");
    CHECK(lcp.dims() == Dims{7, 7, 7});
    CHECK(lcp_meta.field_kind == "lcp");
    REQUIRE(lcp_meta.isovalue.has_value());
    CHECK(*lcp_meta.isovalue == 0.5);
    for (double v : lcp.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("config file values apply unless overridden by flags") {
    Workspace ws;
    {
        std::ofstream cfg(kRoot + "/train.json");
        cfg << R"({"variant": "det", "epochs": 2, "width": 8, "blocks": 1,)"
            << R"( "batch_size": 128, "lr": 0.002})" << "\n";
    }
    const std::string base = "train --volume " + kRoot + "/blob.raw --dims 8,8,8 --config " +
                             kRoot + "/train.json --out ";
    REQUIRE(run(base + kRoot + "/from_config") == 0);
    CHECK(count_lines(kRoot + "/from_config/train_log.jsonl") == 2);

    REQUIRE(run(base + kRoot + "/flag_wins --epochs 3") == 0);
    CHECK(count_lines(kRoot + "/flag_wins/train_log.jsonl") == 3);

    std::ifstream snap(kRoot + "/flag_wins/resolved_config.json");
    const auto j = nlohmann::json::parse(snap);
    CHECK(j.at("epochs") == 3);
    CHECK(j.at("model").at("variant") == "det");
}

TEST_CASE("error exit codes") {
    Workspace ws;
    // 2: config validation, 3: io, 5: contract violation.
    CHECK(run(train_args("rev", kRoot + "/bad", 0)) == 2);
    CHECK(run("train --variant nope --volume " + kRoot + "/blob.raw --dims 8,8,8 --out " +
              kRoot + "/bad") == 2);
    CHECK(run("train --variant rev --volume " + kRoot + "/missing.raw --dims 8,8,8 --out " +
              kRoot + "/bad") == 3);
    CHECK(run("reconstruct --checkpoint " + kRoot + "/missing.bin --out " + kRoot + "/bad") ==
          3);
    CHECK(run("totally-unknown-subcommand") == 2);
    CHECK(run("lcp --fields-dir " + kRoot + " --variance xx --isovalue 1 --out " + kRoot +
              "/l.vol") == 2);

    const std::string det_dir = kRoot + "/det";
    REQUIRE(run(train_args("det", det_dir)) == 0);
    CHECK(run("reconstruct --checkpoint " + det_dir + "/model.bin --fields mean,eu --out " +
              kRoot + "/detf") == 5);
    REQUIRE(run("reconstruct --checkpoint " + det_dir + "/model.bin --fields mean --out " +
                kRoot + "/detf") == 0);
    CHECK(fs::exists(kRoot + "/detf/mean.vol"));
    CHECK_FALSE(fs::exists(kRoot + "/detf/au.vol"));
    // lcp against det fields: the eu volume is genuinely absent.
    CHECK(run("lcp --fields-dir " + kRoot + "/detf --variance eu --isovalue 0.5 --out " +
              kRoot + "/l.vol") == 5);
}

TEST_CASE("resume via the CLI continues to the requested epoch count") {
    Workspace ws;
    const std::string dir = kRoot + "/resume";
    REQUIRE(run(train_args("rev", dir) + " --checkpoint-every 2") == 0);
    CHECK(fs::exists(dir + "/checkpoint_epoch_2.bin"));
    const std::string dir2 = kRoot + "/resumed";
    REQUIRE(run(train_args("rev", dir2, 6) + " --resume " + dir +
                "/checkpoint_epoch_2.bin") == 0);
    // Continued epochs 2..5 append four records to the fresh log.
    CHECK(count_lines(dir2 + "/train_log.jsonl") == 4);
    CHECK(fs::exists(dir2 + "/model.bin"));
}

TEST_CASE("info rejects unknown files") {
    Workspace ws;
    CHECK(run("info " + kRoot + "/blob.raw") == 5);
    CHECK(run("info " + kRoot + "/nonexistent") == 3);
}
