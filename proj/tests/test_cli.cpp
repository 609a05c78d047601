#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "atune/io.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "atune_cli_test";

int run(const std::string& args) {
    const std::string cmd = std::string(ATUNE_CLI) + " " + args + " >" + (kWork / "stdout.txt").string() + " 2>" +
                            (kWork / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        fs::remove_all(kWork);
        fs::create_directories(kWork);
    }
    static void TearDownTestSuite() { fs::remove_all(kWork); }
    std::string out(const std::string& name) { return "--out " + (kWork / name).string(); }
};

}  // namespace

TEST_F(Cli, GenWritesRequestedCountsDeterministically) {
    ASSERT_EQ(run(out("gen1") + " gen --experiment mso --train 50 --test 10 --seed 7"), 0);
    ASSERT_EQ(run(out("gen2") + " --seed 7 gen --experiment mso --train 50 --test 10"), 0);
    const auto header = atune::read_container_header(kWork / "gen1" / "mso_train.atd");
    EXPECT_EQ(header["meta"]["count"], 50);
    EXPECT_EQ(atune::read_container_header(kWork / "gen1" / "mso_test.atd")["meta"]["count"], 10);
    EXPECT_TRUE(header["meta"].contains("config_hash"));
    EXPECT_EQ(slurp(kWork / "gen1" / "mso_train.atd"), slurp(kWork / "gen2" / "mso_train.atd"));
}

TEST_F(Cli, WaveDefaults) {
    ASSERT_EQ(run(out("wave") + " gen --experiment wave --train 2 --test 1"), 0);
    const auto train = atune::read_container_header(kWork / "wave" / "wave_train.atd");
    const auto test = atune::read_container_header(kWork / "wave" / "wave_test.atd");
    EXPECT_EQ(train["meta"]["rows"], 16);
    EXPECT_EQ(train["meta"]["cols"], 16);
    EXPECT_EQ(train["meta"]["steps"], 80);
    EXPECT_EQ(test["meta"]["steps"], 400);
}

TEST_F(Cli, TrainThenTune) {
    ASSERT_EQ(run(out("tt") + " gen --train 4 --test 2 --train-steps 40 --test-steps 40"), 0);
    const std::string data = (kWork / "tt" / "mso_train.atd").string();
    ASSERT_EQ(run(out("tt") + " train --data " + data + " --noise 0.0 --seeds 3 --epochs 2 --hidden 6"), 0);
    for (int k = 0; k < 3; ++k) {
        EXPECT_TRUE(fs::exists(kWork / "tt" / ("mso_noise0.00_seed" + std::to_string(k) + ".atm")));
        const std::string csv = slurp(kWork / "tt" / ("mso_noise0.00_seed" + std::to_string(k) + "_loss.csv"));
        EXPECT_EQ(csv.rfind("# config_hash: ", 0), 0u);
    }
    const std::string model = (kWork / "tt" / "mso_noise0.00_seed0.atm").string();
    ASSERT_EQ(run(out("tt") + " tune --model " + model + " --data " + (kWork / "tt" / "mso_test.atd").string() +
                  " --preset mso:0.0:1.0 --cycles 0 --signal-noise 1.0"),
              0);
    const std::string records = slurp(kWork / "tt" / "tuned.csv");
    EXPECT_NE(records.find("sequence,step,observation_0,filtered_0,state_norm\n"), std::string::npos);
    EXPECT_EQ(std::count(records.begin(), records.end(), '\n'), 2 + 2 * 40);
}

TEST_F(Cli, StdinStreamingEmitsOneRowPerInput) {
    ASSERT_EQ(run(out("si") + " gen --train 2 --test 1 --train-steps 20 --test-steps 20"), 0);
    ASSERT_EQ(run(out("si") + " train --data " + (kWork / "si" / "mso_train.atd").string() + " --epochs 1 --hidden 4"),
              0);
    std::ofstream(kWork / "rows.txt") << "0.1\n0.4\n-0.2\n0.0\n0.3\n";
    ASSERT_EQ(run("tune --model " + (kWork / "si" / "mso_noise0.00_seed0.atm").string() + " --stdin --preset mso:0.0:1.0 <" +
                  (kWork / "rows.txt").string()),
              0);
    const std::string stdout_text = slurp(kWork / "stdout.txt");
    EXPECT_EQ(std::count(stdout_text.begin(), stdout_text.end(), '\n'), 2 + 5);
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(run("train --data /nonexistent/train.atd"), 4);
    EXPECT_EQ(run("inspect /nonexistent/file.atm"), 4);
    EXPECT_EQ(run("gen --experiment tides"), 2);
    EXPECT_EQ(run(out("x") + " gen --train 0"), 2);
    ASSERT_EQ(run(out("ec") + " gen --train 2 --test 1 --train-steps 20 --test-steps 20"), 0);
    EXPECT_EQ(run("train --data " + (kWork / "ec" / "mso_train.atd").string() + " --noise 0.3"), 2);
    EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, ConfigFileIsStrictAndFlagsWin) {
    std::ofstream(kWork / "run.toml") << "seed = 7\n[gen]\ntrain = 3\ntest = 2\n";
    ASSERT_EQ(run(out("cfg") + " --config " + (kWork / "run.toml").string() + " gen --train 5"), 0);
    EXPECT_EQ(atune::read_container_header(kWork / "cfg" / "mso_train.atd")["meta"]["count"], 5);
    EXPECT_EQ(atune::read_container_header(kWork / "cfg" / "mso_test.atd")["meta"]["count"], 2);
    std::ofstream(kWork / "bad.toml") << "[gen]\ntrain = 3\ncolour = \"red\"\n";
    EXPECT_EQ(run(out("cfg") + " --config " + (kWork / "bad.toml").string() + " gen"), 2);
}

TEST_F(Cli, EnvironmentSetsOutputDirectory) {
    const std::string env = "ATUNE_OUT_DIR=" + (kWork / "env").string() + " ATUNE_WORKERS=2";
    const std::string cmd = env + " " + ATUNE_CLI + " gen --train 2 --test 1 --train-steps 10 --test-steps 10 >/dev/null";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(kWork / "env" / "mso_train.atd"));
}

TEST_F(Cli, BenchRerunIsCacheHit) {
    const std::string args = out("bench") +
                             " bench --experiment mso --training-noises 0.0 --tuning-noises 0.0 --signal-noises 0.0,0.5"
                             " --model-seeds 2 --train-count 4 --test-count 2 --train-steps 30 --test-steps 30"
                             " --epochs 2 --hidden 4";
    ASSERT_EQ(run(args), 0);
    const std::string first = slurp(kWork / "bench" / "results.csv");
    EXPECT_NE(slurp(kWork / "stderr.txt").find("models trained 2, reused from cache 0"), std::string::npos);
    ASSERT_EQ(run(args), 0);
    EXPECT_NE(slurp(kWork / "stderr.txt").find("models trained 0, reused from cache 2"), std::string::npos);
    EXPECT_EQ(slurp(kWork / "bench" / "results.csv"), first);
    EXPECT_TRUE(fs::exists(kWork / "bench" / "traces" / "mso_train0.00_signal0.50_seq0.atr"));
}
