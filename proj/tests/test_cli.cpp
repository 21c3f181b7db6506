#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "lsmix/lsmix.hpp"
#include "test_util.hpp"

using namespace lsmix;
using lsmix::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output;
};

/// Runs the CLI inside `cwd` and captures stdout+stderr.
Run cli(const fs::path& cwd, const std::string& args) {
    const std::string cmd = "cd '" + cwd.string() + "' && '" LSMIX_CLI_PATH "' " + args + " 2>&1";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof buf, p)) r.output.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

const std::string kSmallSweep = "sweep --recipe defC1 --method label_smoothing --grid 0:0.5:3 --seeds 1,2 --epochs 3 --n 200 ";

}  // namespace

TEST(Cli, MissingIdxIsDataError) {
    TempDir dir("cli_idx");
    const auto r = cli(dir.path(), "data load-mnist --images missing.idx");
    EXPECT_EQ(r.code, 2) << r.output;
    EXPECT_NE(r.output.find("missing.idx"), std::string::npos);
}

TEST(Cli, VerifyJensenGapPassesAndStaysInOutputDir) {
    TempDir dir("cli_verify");
    const auto r = cli(dir.path(), "verify --suite jensen-gap --suite parsers --out vout --seed 3");
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("PASS jensen-gap: 1000/1000"), std::string::npos) << r.output;
    std::vector<std::string> top;
    for (const auto& e : fs::directory_iterator(dir.path())) top.push_back(e.path().filename().string());
    EXPECT_EQ(top, std::vector<std::string>{"vout"});
    const auto j = nlohmann::json::parse(slurp(dir.path() / "vout" / "verify.json"));
    EXPECT_EQ(j["suites"].size(), 2u);
    EXPECT_EQ(cli(dir.path(), "verify --suite nonsense").code, 1);
}

TEST(Cli, SweepWritesCsvsAndIsReproducible) {
    TempDir dir("cli_sweep");
    const auto a = cli(dir.path(), kSmallSweep + "--out a --seed 4");
    ASSERT_EQ(a.code, 0) << a.output;
    for (const char* f : {"raw.csv", "aggregate.csv", "timeseries.csv", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(dir.path() / "a" / f)) << f;
        EXPECT_NE(a.output.find(std::string("a/") + f), std::string::npos) << "path not printed: " << f;
    }
    const auto b = cli(dir.path(), kSmallSweep + "--out b --seed 4 --jobs 3");
    ASSERT_EQ(b.code, 0) << b.output;
    for (const char* f : {"raw.csv", "aggregate.csv", "timeseries.csv", "manifest.json"})
        EXPECT_EQ(fnv1a(slurp(dir.path() / "a" / f)), fnv1a(slurp(dir.path() / "b" / f))) << f;
    ASSERT_EQ(cli(dir.path(), kSmallSweep + "--out c --seed 5").code, 0);
    EXPECT_NE(slurp(dir.path() / "a" / "raw.csv"), slurp(dir.path() / "c" / "raw.csv"));
    const auto t = read_csv_table((dir.path() / "a" / "raw.csv").string());
    EXPECT_EQ(t.rows.size(), 6u);
}

TEST(Cli, ConfigPrecedenceAndErrors) {
    TempDir dir("cli_config");
    std::ofstream(dir.file("cfg.json")) << R"({"method": "mixup", "grid": [1, 2], "seeds": [7],
        "train": {"epochs": 2, "lr": 0.01}, "data": {"n": 150, "test_n": 40}})";
    const auto r = cli(dir.path(), "sweep --config cfg.json --epochs 3 --out o");
    ASSERT_EQ(r.code, 0) << r.output;
    const auto m = nlohmann::json::parse(slurp(dir.path() / "o" / "manifest.json"));
    EXPECT_EQ(m["config"]["method"], "mixup");
    EXPECT_EQ(m["config"]["train"]["epochs"], 3);
    EXPECT_EQ(m["config"]["train"]["lr"], 0.01);
    EXPECT_EQ(m["config"]["data"]["n"], 150);
    EXPECT_EQ(m["config"]["grid"], nlohmann::json::array({1.0, 2.0}));

    std::ofstream(dir.file("typo.json")) << R"({"train": {"epoch": 2}})";
    EXPECT_EQ(cli(dir.path(), "sweep --config typo.json --out x").code, 1);
    std::ofstream(dir.file("broken.json")) << "{";
    EXPECT_EQ(cli(dir.path(), "sweep --config broken.json --out x").code, 2);
    EXPECT_EQ(cli(dir.path(), "sweep --config absent.json --out x").code, 2);
    EXPECT_EQ(cli(dir.path(), "sweep --no-such-flag").code, 1);
    EXPECT_EQ(cli(dir.path(), "sweep --method mixup --grid 1,2 --seeds 1 --epochs 5 --optimizer sgd --lr 1e307 --n 50 --out n").code, 3);
    EXPECT_EQ(cli(dir.path(), "").code, 1);
    EXPECT_EQ(cli(dir.path(), "--help").code, 0);
}

TEST(Cli, TrainBoundaryAndPlot) {
    TempDir dir("cli_train");
    const auto t = cli(dir.path(), "train --recipe boundary2d --method label_smoothing --value 0.1 --epochs 20 --out t");
    ASSERT_EQ(t.code, 0) << t.output;
    const auto model = load_model<LinearBinaryModel>((dir.path() / "t" / "model.json").string());
    EXPECT_EQ(model.input_dim(), 2u);
    const auto b = cli(dir.path(), "boundary --model t/model.json --resolution 100 --out b");
    ASSERT_EQ(b.code, 0) << b.output;
    const auto b2 = cli(dir.path(), "boundary --method label_smoothing --value 0.1 --epochs 20 --resolution 100 --out b2");
    ASSERT_EQ(b2.code, 0) << b2.output;
    // Training inside `boundary` follows the same seeds as `train`.
    EXPECT_EQ(slurp(dir.path() / "b" / "boundary.csv"), slurp(dir.path() / "b2" / "boundary.csv"));
    const auto p = cli(dir.path(), "plot --kind boundary_heatmap --csv b/boundary.csv --out heat.svg");
    ASSERT_EQ(p.code, 0) << p.output;
    const auto svg = slurp(dir.path() / "heat.svg");
    std::size_t cells = 0;
    for (auto pos = svg.find("class=\"cell\""); pos != std::string::npos; pos = svg.find("class=\"cell\"", pos + 1)) ++cells;
    EXPECT_EQ(cells, 10000u);
    std::ofstream(dir.file("empty.csv")) << "";
    EXPECT_EQ(cli(dir.path(), "plot --csv empty.csv --out e.svg").code, 2);
    EXPECT_EQ(cli(dir.path(), "plot --kind pie --csv b/boundary.csv").code, 1);
    EXPECT_EQ(cli(dir.path(), "boundary --model t/missing.json").code, 2);
}

TEST(Cli, DataGenAndLoaders) {
    TempDir dir("cli_data");
    ASSERT_EQ(cli(dir.path(), "data gen --kind lowvar --n 30 --d 4 --seed 2 --out g/a.csv").code, 0);
    ASSERT_EQ(cli(dir.path(), "data gen --kind lowvar --n 30 --d 4 --seed 2 --out g/b.csv").code, 0);
    EXPECT_EQ(slurp(dir.path() / "g" / "a.csv"), slurp(dir.path() / "g" / "b.csv"));
    const auto ds = read_dataset_csv((dir.path() / "g" / "a.csv").string());
    EXPECT_EQ(ds.n(), 30u);
    EXPECT_EQ(ds.d(), 4u);
    ASSERT_EQ(cli(dir.path(), "data gen --kind standin --per-class 3 --out s.bin").code, 0);
    const auto r = cli(dir.path(), "data load-cifar --batch s.bin");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(nlohmann::json::parse(r.output)["n"], 30);
    EXPECT_EQ(cli(dir.path(), "data gen --kind nope --out z.csv").code, 1);
    EXPECT_EQ(cli(dir.path(), "data load-cifar --batch absent.bin").code, 2);
}

TEST(Cli, ShippedConfigsParse) {
    std::size_t seen = 0;
    for (const auto& e : fs::directory_iterator(fs::path(LSMIX_SOURCE_DIR) / "configs")) {
        if (e.path().extension() != ".json") continue;
        ++seen;
        const auto j = nlohmann::json::parse(slurp(e.path()));
        const auto c = sweep_config_from_json(j, default_sweep_config(parse_recipe(j["recipe"]), parse_method(j["method"])));
        EXPECT_NO_THROW(c.validate()) << e.path();
        EXPECT_FALSE(c.grid.empty()) << e.path();
    }
    EXPECT_GE(seen, 6u);
}
