#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "support.hpp"

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

Outcome run(const std::string& args, const dsf::test::TempDir& scratch) {
    const auto out = scratch / "stdout.txt";
    const auto err = scratch / "stderr.txt";
    const std::string cmd = std::string("\"") + DSF_CLI_PATH + "\" " + args + " >\"" + out.string() +
                            "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = dsf::test::read_file(out);
    o.err = dsf::test::read_file(err);
    return o;
}

std::size_t count_lines(const std::string& s) {
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

const char* kTiny =
    "--set n-per-class=10 --set eval-seen-size=100 --set eval-unseen-size=40 --set dil-size=40 "
    "--set epochs=1 --set batch-size=32 --set zp-dim=4 --set zn-dim=4 --set encoder-widths=32 "
    "--set predictor-widths=16 --set decoder-widths=32,784 --set echo-depth=16";

}  // namespace

TEST(Cli, NoSubcommandIsAUsageError) {
    dsf::test::TempDir t("cli");
    const Outcome o = run("", t);
    EXPECT_EQ(o.code, 2);
    EXPECT_EQ(o.err.rfind("error: usage: ", 0), 0u) << o.err;
    EXPECT_EQ(count_lines(o.err), 1u);
}

TEST(Cli, UnknownOptionIsAUsageError) {
    dsf::test::TempDir t("cli");
    const Outcome o = run("train --frobnicate 3", t);
    EXPECT_EQ(o.code, 2);
    EXPECT_EQ(o.err.rfind("error: usage: ", 0), 0u) << o.err;
}

TEST(Cli, ConfigErrorsAreOneLine) {
    dsf::test::TempDir t("cli");
    Outcome o = run("train --set bogus=1", t);
    EXPECT_EQ(o.code, 1);
    EXPECT_EQ(o.err.rfind("error: config: ", 0), 0u) << o.err;
    EXPECT_EQ(count_lines(o.err), 1u);

    o = run("train --variant dsf-q", t);
    EXPECT_EQ(o.code, 1);
    EXPECT_EQ(o.err.rfind("error: config: ", 0), 0u) << o.err;

    {
        std::ofstream cfg(t / "bad.cfg");
        cfg << "epochs = 1\nlambda = lots\n";
    }
    o = run("train --config \"" + (t / "bad.cfg").string() + "\"", t);
    EXPECT_EQ(o.code, 1);
    EXPECT_NE(o.err.find("line 2"), std::string::npos) << o.err;
}

TEST(Cli, MissingFilesAreIoErrors) {
    dsf::test::TempDir t("cli");
    Outcome o = run("train --config \"" + (t / "absent.cfg").string() + "\"", t);
    EXPECT_EQ(o.code, 1);
    EXPECT_EQ(o.err.rfind("error: io: ", 0), 0u) << o.err;

    o = run(std::string("train ") + kTiny + " --out \"" + (t / "run").string() + "\"", t);
    EXPECT_EQ(o.code, 1);
    EXPECT_EQ(o.err.rfind("error: io: ", 0), 0u) << o.err;
    EXPECT_EQ(count_lines(o.err), 1u);
}

TEST(Cli, MiCheck) {
    dsf::test::TempDir t("cli");
    const Outcome o = run("micheck", t);
    EXPECT_EQ(o.code, 0) << o.err;
    EXPECT_NE(o.out.find("200/200 identities hold (tol 1e-12)"), std::string::npos) << o.out;
    EXPECT_NE(o.out.find("independent bits"), std::string::npos);
    EXPECT_NE(o.out.find("copies"), std::string::npos);
}

TEST(Cli, GenerateTrainProbeEvalExport) {
    dsf::test::TempDir t("cli");
    const std::string common = std::string(kTiny) + " --seed 3 --out \"" + (t / "run").string() + "\"";
    Outcome o = run("generate " + common, t);
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_NE(o.out.find("train 100"), std::string::npos);

    o = run("train " + common, t);
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_NE(o.out.find("y-acc-seen "), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(t / "run" / "metrics.json"));
    EXPECT_NE(dsf::test::read_file(t / "run" / "config.txt").find("seed = 3"), std::string::npos);

    o = run("probe " + common, t);
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_NE(o.out.find("chance 0.200"), std::string::npos);

    o = run("eval " + common, t);
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_TRUE(std::filesystem::exists(t / "run" / "eval.json"));

    o = run("export " + common, t);
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_TRUE(std::filesystem::exists(t / "run" / "embeddings.csv"));

    // A checkpoint from another architecture is refused.
    o = run("probe " + common + " --set zp-dim=6", t);
    EXPECT_EQ(o.code, 1);
    EXPECT_EQ(o.err.rfind("error: config: ", 0), 0u) << o.err;
}

TEST(Cli, LaterSourcesOverrideEarlier) {
    dsf::test::TempDir t("cli");
    {
        std::ofstream cfg(t / "a.cfg");
        cfg << "seed = 5\nlambda = 0.5\n";
    }
    const std::string base = std::string(kTiny) + " --config \"" + (t / "a.cfg").string() +
                             "\" --set seed=6 --seed 7 --out \"" + (t / "run").string() + "\"";
    ASSERT_EQ(run("generate " + base, t).code, 0);
    ASSERT_EQ(run("train " + base, t).code, 0);
    const std::string cfg = dsf::test::read_file(t / "run" / "config.txt");
    EXPECT_NE(cfg.find("seed = 7\n"), std::string::npos) << cfg;
    EXPECT_NE(cfg.find("lambda = 0.5\n"), std::string::npos) << cfg;
}
