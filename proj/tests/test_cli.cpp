#include <cstdlib>
#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fedpm/pipeline.hpp"
#include "test_util.hpp"

using fedpm::testing::read_file;
using fedpm::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult fedpm_cli(const std::string& args, const TempDir& dir) {
    const auto out = dir / "stdout.txt";
    const auto err = dir / "stderr.txt";
    const std::string cmd = std::string("\"") + FEDPM_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(out), read_file(err)};
}

// S1 shrunk so that a full compare takes well under a second.
fs::path quick_config(const TempDir& dir, const std::string& name, int rounds = 4) {
    auto j = nlohmann::json::parse(read_file(fedpm::testing::preset("S1")));
    j["fed"]["rounds"] = rounds;
    j["fed"]["local_epochs"] = 1;
    j["fed"]["centralized_epochs"] = 2;
    const auto path = dir / (name + ".json");
    fedpm::testing::write_file(path, j.dump(2));
    return path;
}

std::string first_line(const fs::path& p) {
    std::istringstream in(read_file(p));
    std::string line;
    std::getline(in, line);
    return line;
}

std::size_t count_lines(const fs::path& p) {
    const auto s = read_file(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST(Cli, SimulateWritesTelemetryAndManifest) {
    TempDir dir;
    const auto r = fedpm_cli("simulate --config " + fedpm::testing::preset("S1").string() + " --out " +
                                 (dir / "run").string(),
                             dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(first_line(dir / "run/telemetry.csv"), fedpm::kTelemetryHeader);
    EXPECT_EQ(count_lines(dir / "run/telemetry.csv"), 1u + 10u * 201u);
    auto manifest = nlohmann::json::parse(read_file(dir / "run/manifest.json"));
    EXPECT_EQ(manifest["scenario"], "S1");
    EXPECT_EQ(manifest["master_seed"], 2025);
    EXPECT_EQ(manifest["config_hash"].get<std::string>().size(), 16u);
    auto faults = nlohmann::json::parse(read_file(dir / "run/faults.json"));
    EXPECT_EQ(faults["failed_gnbs"].size(), 1u);
}

TEST(Cli, InvalidConfigNamesTheField) {
    TempDir dir;
    auto j = nlohmann::json::parse(read_file(fedpm::testing::preset("S1")));
    j["num_failed_gnbs"] = 9;
    fedpm::testing::write_file(dir / "bad.json", j.dump());
    const auto r = fedpm_cli("simulate --config " + (dir / "bad.json").string() + " --out " + (dir / "run").string(),
                             dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("num_failed_gnbs"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "run/telemetry.csv"));
}

TEST(Cli, UnknownKeyIsAConfigError) {
    TempDir dir;
    auto j = nlohmann::json::parse(read_file(fedpm::testing::preset("S1")));
    j["num_gnb"] = 5;
    fedpm::testing::write_file(dir / "typo.json", j.dump());
    const auto r = fedpm_cli("simulate --config " + (dir / "typo.json").string() + " --out " + (dir / "run").string(),
                             dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("num_gnb"), std::string::npos) << r.err;
}

TEST(Cli, MissingConfigIsAnIoError) {
    TempDir dir;
    const auto r = fedpm_cli("simulate --config " + (dir / "nope.json").string(), dir);
    EXPECT_EQ(r.code, 2);
}

TEST(Cli, SimulateIsByteIdenticalAcrossRuns) {
    TempDir dir;
    const auto cfg = fedpm::testing::preset("S1").string();
    ASSERT_EQ(fedpm_cli("simulate --config " + cfg + " --out " + (dir / "a").string(), dir).code, 0);
    ASSERT_EQ(fedpm_cli("simulate --config " + cfg + " --out " + (dir / "b").string(), dir).code, 0);
    EXPECT_EQ(read_file(dir / "a/telemetry.csv"), read_file(dir / "b/telemetry.csv"));
    EXPECT_EQ(read_file(dir / "a/faults.json"), read_file(dir / "b/faults.json"));
}

TEST(Cli, SeedOverrideChangesTelemetry) {
    TempDir dir;
    const auto cfg = fedpm::testing::preset("S1").string();
    ASSERT_EQ(fedpm_cli("simulate --config " + cfg + " --out " + (dir / "a").string(), dir).code, 0);
    ASSERT_EQ(fedpm_cli("simulate --config " + cfg + " --seed 7 --out " + (dir / "b").string(), dir).code, 0);
    EXPECT_NE(read_file(dir / "a/telemetry.csv"), read_file(dir / "b/telemetry.csv"));
    EXPECT_EQ(nlohmann::json::parse(read_file(dir / "b/manifest.json"))["master_seed"], 7);
}

TEST(Cli, EncodeWritesDatasets) {
    TempDir dir;
    const auto r = fedpm_cli("encode --config " + fedpm::testing::preset("S1").string() + " --out " +
                                 (dir / "run").string(),
                             dir);
    ASSERT_EQ(r.code, 0) << r.err;
    // 10 UEs x 20 windows; 8 of each gNB's 40 go to test
    EXPECT_EQ(count_lines(dir / "run/dataset.csv"), 201u);
    EXPECT_EQ(count_lines(dir / "run/dataset_train.csv"), 161u);
    EXPECT_EQ(count_lines(dir / "run/dataset_test.csv"), 41u);
    auto norm = nlohmann::json::parse(read_file(dir / "run/normalization.json"));
    EXPECT_EQ(norm["mean"].size(), 12u);
}

TEST(Cli, TrainCommandsWriteReportsAndModels) {
    TempDir dir;
    const auto cfg = quick_config(dir, "quick").string();
    auto c = fedpm_cli("train-central --dump-predictions --config " + cfg + " --out " + (dir / "c").string(), dir);
    ASSERT_EQ(c.code, 0) << c.err;
    EXPECT_TRUE(fs::exists(dir / "c/model_centralized.json"));
    EXPECT_EQ(count_lines(dir / "c/predictions_centralized.csv"), 41u);
    auto rep = nlohmann::json::parse(read_file(dir / "c/report_centralized.json"));
    EXPECT_EQ(rep["mode"], "centralized");

    auto f = fedpm_cli("train-fed --parallel --config " + cfg + " --out " + (dir / "f").string(), dir);
    ASSERT_EQ(f.code, 0) << f.err;
    EXPECT_EQ(count_lines(dir / "f/convergence.csv"), 5u);
    auto model = fedpm::load_checkpoint(dir / "f/model_federated.json");
    EXPECT_EQ(model.num_parameters(), 12u * 64 + 64 + 64 * 32 + 32 + 32 * 4 + 4);
}

TEST(Cli, CompareReportsBothModesAndGap) {
    TempDir dir;
    const auto cfg = quick_config(dir, "quick", 6).string();
    const auto r = fedpm_cli("compare --config " + cfg + " --out " + (dir / "run").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    auto rep = nlohmann::json::parse(read_file(dir / "run/report.json"));
    const double c = rep["centralized"]["exact_match"];
    const double f = rep["federated"]["exact_match"];
    EXPECT_DOUBLE_EQ(rep["gap"].get<double>(), c - f);
    EXPECT_EQ(rep["scenario"], "quick");
    EXPECT_EQ(rep["rounds"], 6);
    EXPECT_EQ(count_lines(dir / "run/convergence.csv"), 7u);
    EXPECT_TRUE(fs::exists(dir / "run/convergence.svg"));
    EXPECT_TRUE(fs::exists(dir / "run/telemetry.csv"));
}

TEST(Cli, SweepWritesTwoRowsPerScenarioAndIsReproducible) {
    TempDir dir;
    const auto a = quick_config(dir, "alpha", 2).string();
    const auto b = quick_config(dir, "beta", 3).string();
    for (const char* out : {"s1", "s2"}) {
        const auto r = fedpm_cli("sweep --config " + a + " --config " + b + " --out " + (dir / out).string(), dir);
        ASSERT_EQ(r.code, 0) << r.err;
    }
    EXPECT_EQ(first_line(dir / "s1/sweep.csv"), fedpm::kSweepHeader);
    EXPECT_EQ(count_lines(dir / "s1/sweep.csv"), 5u);
    EXPECT_EQ(read_file(dir / "s1/sweep.csv"), read_file(dir / "s2/sweep.csv"));
    EXPECT_TRUE(fs::exists(dir / "s1/alpha/report.json"));
    EXPECT_TRUE(fs::exists(dir / "s1/beta/convergence.csv"));
}

TEST(Cli, SweepValidatesEveryConfigFirst) {
    TempDir dir;
    const auto good = quick_config(dir, "good", 1).string();
    auto j = nlohmann::json::parse(read_file(fedpm::testing::preset("S1")));
    j["window_len"] = 1;
    fedpm::testing::write_file(dir / "bad.json", j.dump());
    const auto r = fedpm_cli("sweep --config " + good + " --config " + (dir / "bad.json").string() + " --out " +
                                 (dir / "run").string(),
                             dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_FALSE(fs::exists(dir / "run/good"));
}
