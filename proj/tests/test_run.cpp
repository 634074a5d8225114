#include <gtest/gtest.h>

#include <json.hpp>
#include <sstream>

#include "dsf/errors.hpp"
#include "dsf/run.hpp"
#include "support.hpp"

using namespace dsf;

namespace {

// Small glyph run: 100 train images, one epoch, narrow networks.
RunConfig tiny_run(const std::filesystem::path& out, const std::string& variant = "dsf-h") {
    RunConfig c;
    parse_config_text(c, "variant = " + variant + R"(
n-per-class = 10
eval-seen-size = 100
eval-unseen-size = 40
dil-size = 40
epochs = 1
batch-size = 32
learning-rate = 1e-3
zp-dim = 4
encoder-widths = 32
predictor-widths = 16
decoder-widths = 32,784
echo-depth = 16
)");
    if (variant != "dsf-e") apply_setting(c, "zn-dim", "4");
    c.out = out;
    c.finalize();
    return c;
}

std::size_t csv_rows(const std::filesystem::path& p) {
    return test::split(test::read_file(p), '\n').size() - 1;
}

}  // namespace

TEST(RunConfig, ParsesKeysCommentsAndBlankLines) {
    RunConfig c;
    parse_config_text(c, "# header\n\nvariant = dsf-c\nlambda=0.5  # inline\n  epochs = 3\n"
                         "encoder-widths = 8, 4\nglyph-jitter = false\n");
    EXPECT_EQ(c.objective.variant, Variant::dsf_c);
    EXPECT_EQ(c.objective.lambda, 0.5);
    EXPECT_EQ(c.epochs, 3u);
    EXPECT_EQ(c.objective.encoder_widths, (std::vector<std::size_t>{8, 4}));
    EXPECT_FALSE(c.glyphs.jitter);
}

TEST(RunConfig, ErrorsNameTheLine) {
    RunConfig c;
    try {
        parse_config_text(c, "epochs = 2\n\nbogus = 1\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
    }
    try {
        parse_config_text(c, "epochs = two\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_config_text(c, "no equals sign\n"), ConfigError);
    EXPECT_THROW(parse_config_text(c, "variant = dsf-x\n"), ConfigError);
    EXPECT_THROW(parse_config_text(c, "recon-reduction = max\n"), ConfigError);
}

TEST(RunConfig, FinalizeResolvesDerivedValues) {
    RunConfig e;
    apply_setting(e, "variant", "dsf-e");
    e.finalize();
    EXPECT_EQ(e.objective.zn_dim, 0u);
    EXPECT_EQ(e.sizes.train, 10000u);
    EXPECT_EQ(e.objective.input_dim, 784u);

    RunConfig h;
    apply_setting(h, "n-per-class", "100");
    h.finalize();
    EXPECT_EQ(h.objective.zn_dim, 32u);
    EXPECT_EQ(h.sizes.train, 1000u);
    EXPECT_EQ(h.objective.recon_reduction, ReconReduction::mean);
}

TEST(RunConfig, FinalizeRejectsBadSettings) {
    auto rejects = [](const std::string& key, const std::string& value) {
        RunConfig c;
        apply_setting(c, key, value);
        EXPECT_THROW(c.finalize(), ConfigError) << key << "=" << value;
    };
    rejects("dataset", "cifar");
    rejects("dataset", "idx");
    rejects("batch-size", "3");
    rejects("epochs", "0");
    rejects("learning-rate", "0");
    rejects("lambda", "-1");
    rejects("s-max", "1");
    rejects("n-per-class", "0");
    RunConfig e;
    apply_setting(e, "variant", "dsf-e");
    apply_setting(e, "zn-dim", "4");
    EXPECT_THROW(e.finalize(), ConfigError);
}

TEST(RunConfig, DescribeCoversEverySettingAndReparses) {
    RunConfig c;
    apply_setting(c, "lambda", "0.25");
    apply_setting(c, "seed", "18446744073709551615");
    c.finalize();
    RunConfig back;
    parse_config_text(back, render_config(c));
    back.finalize();
    EXPECT_EQ(describe(back), describe(c));
    EXPECT_EQ(back.seed, 18446744073709551615ull);
}

TEST(Generate, WritesFiveSplitsReproducibly) {
    test::TempDir a("gen"), b("gen");
    std::ostringstream log;
    RunConfig ca = tiny_run(a.path());
    cmd_generate(ca, log);
    cmd_generate(tiny_run(b.path()), log);
    for (const char* f : {DatasetFiles::kTrain, DatasetFiles::kEvalSeen, DatasetFiles::kUnseen55,
                          DatasetFiles::kUnseen65, DatasetFiles::kDilTransfer}) {
        ASSERT_TRUE(std::filesystem::exists(a / f)) << f;
        EXPECT_EQ(test::read_file(a / f), test::read_file(b / f)) << f;
    }
    const RotProtocol p = read_protocol(a.path());
    EXPECT_EQ(p.train.size(), 100u);
    EXPECT_EQ(p.eval_seen.size(), 100u);
    EXPECT_EQ(p.unseen_55.size(), 40u);
    EXPECT_EQ(p.unseen_65.size(), 40u);
    EXPECT_EQ(p.dil_transfer.size(), 40u);
    EXPECT_NE(log.str().find("train 100"), std::string::npos);

    RunConfig other = tiny_run(b.path());
    other.seed = 2;
    cmd_generate(other, log);
    EXPECT_NE(test::read_file(a / DatasetFiles::kTrain), test::read_file(b / DatasetFiles::kTrain));
}

TEST(Generate, HundredPerClassGivesAThousandTrainImages) {
    test::TempDir dir("gen");
    RunConfig c = tiny_run(dir.path());
    apply_setting(c, "n-per-class", "100");
    c.finalize();
    std::ostringstream log;
    cmd_generate(c, log);
    EXPECT_EQ(load_dataset(dir / DatasetFiles::kTrain).size(), 1000u);
}

TEST(TrainingView, CarriesOnlyImagesAndTargets) {
    test::TempDir dir("view");
    RunConfig c = tiny_run(dir.path());
    const RotProtocol p = build_protocol(c);
    const TrainingBatch t = training_view(p.train);
    EXPECT_EQ(t.images, p.train.flat());
    EXPECT_EQ(t.y, p.train.y);
}

TEST(Train, OneEpochWritesArtifactsAndRecomposes) {
    for (const std::string variant : {"dsf-e", "dsf-c", "dsf-h"}) {
        test::TempDir dir("train");
        RunConfig c = tiny_run(dir.path(), variant);
        std::ostringstream log;
        cmd_generate(c, log);
        const MetricsReport m = cmd_train(c, log);
        for (const char* f : {kCheckpointFile, kCurveFile, kMetricsFile, kConfigFile}) {
            EXPECT_TRUE(std::filesystem::exists(dir / f)) << variant << " " << f;
        }
        const auto lines = test::split(test::read_file(dir / kCurveFile), '\n');
        ASSERT_EQ(lines.size(), 2u);
        EXPECT_EQ(lines[0], "epoch,total,pred_nll,recon_nll,comp_p,comp_n,hsic");
        ASSERT_EQ(m.loss_curve.size(), 1u);
        const LossBreakdown& b = m.loss_curve[0];
        EXPECT_NEAR(b.total, compose_total(c.objective, b), 1e-9 * std::abs(b.total)) << variant;
        EXPECT_EQ(metrics_from_json(test::read_file(dir / kMetricsFile)), m);
        EXPECT_EQ(m.y_acc_unseen.size(), 2u);
        EXPECT_DOUBLE_EQ(m.s_chance, 0.2);
        EXPECT_EQ(m.config.at("variant"), variant);
        if (variant == "dsf-e") { EXPECT_EQ(b.recon_nll, 0.0); }
        if (variant != "dsf-c") { EXPECT_EQ(b.comp_n, 0.0); }
    }
}

TEST(Train, SameSeedSameBytes) {
    test::TempDir a("det"), b("det");
    std::ostringstream log;
    RunConfig ca = tiny_run(a.path());
    RunConfig cb = tiny_run(b.path());
    cmd_generate(ca, log);
    cmd_generate(cb, log);
    cmd_train(ca, log);
    cmd_train(cb, log);
    for (const char* f : {kMetricsFile, kCurveFile, kCheckpointFile}) {
        EXPECT_EQ(test::read_file(a / f), test::read_file(b / f)) << f;
    }
}

TEST(Train, MissingDatasetIsAnIoError) {
    test::TempDir dir("missing");
    try {
        std::ostringstream log;
        cmd_train(tiny_run(dir.path()), log);
        FAIL();
    } catch (const IoError& e) {
        EXPECT_EQ(e.kind(), "io");
    }
}

TEST(Grid, CellCounts) {
    RunConfig h;
    h.finalize();
    EXPECT_EQ(grid_cells(h).size(), 16u);
    RunConfig e;
    apply_setting(e, "variant", "dsf-e");
    e.finalize();
    EXPECT_EQ(grid_cells(e).size(), 4u);
    for (const auto& [l, g] : grid_cells(e)) EXPECT_EQ(g, e.objective.gamma);
}

TEST(Grid, SingleCellMatchesPlainTraining) {
    test::TempDir dir("grid");
    RunConfig c = tiny_run(dir.path());
    apply_setting(c, "lambda-grid", "0.01");
    apply_setting(c, "gamma-grid", "0.01");
    std::ostringstream log;
    cmd_generate(c, log);
    const auto cells = cmd_grid(c, log);
    ASSERT_EQ(cells.size(), 1u);
    ASSERT_TRUE(cells[0].ok) << cells[0].error;
    const MetricsReport plain = cmd_train(c, log);
    EXPECT_EQ(cells[0].metrics, plain);
    const auto rows = test::split(test::read_file(dir / "leaderboard.csv"), '\n');
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], "rank,lambda,gamma,seed,y_acc_seen,s_probe_acc,status");
    EXPECT_EQ(rows[1].substr(0, 2), "1,");
    EXPECT_TRUE(std::filesystem::exists(dir / "lambda=0.01_gamma=0.01" / kMetricsFile));
}

TEST(Grid, FailedCellsAreMarkedNotFatal) {
    test::TempDir dir("grid");
    RunConfig c = tiny_run(dir.path(), "dsf-e");
    apply_setting(c, "lambda-grid", "0.01,-1");
    std::ostringstream log;
    cmd_generate(c, log);
    const auto cells = cmd_grid(c, log);
    ASSERT_EQ(cells.size(), 2u);
    EXPECT_TRUE(cells[0].ok);
    EXPECT_FALSE(cells[1].ok);
    EXPECT_NE(cells[1].error.find("config"), std::string::npos) << cells[1].error;
    const auto rows = test::split(test::read_file(dir / "leaderboard.csv"), '\n');
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[2].substr(rows[2].size() - 6), "failed");
}

TEST(Evaluate, UntrainedModelIsNearChance) {
    RunConfig c;
    apply_setting(c, "eval-seen-size", "1000");
    apply_setting(c, "n-per-class", "1");
    apply_setting(c, "eval-unseen-size", "10");
    apply_setting(c, "dil-size", "10");
    c.finalize();
    const RotProtocol p = build_protocol(c);
    DsfModel model(c.objective, 99);
    const double acc = evaluate_accuracy(model, p.eval_seen, c.batch_size, 1);
    EXPECT_NEAR(acc, 0.10, 0.03);
}

TEST(Commands, ProbeEvalAndExport) {
    test::TempDir dir("cmds");
    RunConfig c = tiny_run(dir.path());
    std::ostringstream log;
    cmd_generate(c, log);
    cmd_train(c, log);

    std::ostringstream probe_log;
    const double acc = cmd_probe(c, probe_log);
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
    EXPECT_NE(probe_log.str().find("s-probe-acc zp"), std::string::npos);
    EXPECT_NE(probe_log.str().find("s-probe-acc zn"), std::string::npos);
    EXPECT_NE(probe_log.str().find("chance 0.200\n"), std::string::npos);

    cmd_eval(c, log);
    const auto j = nlohmann::json::parse(test::read_file(dir / "eval.json"));
    EXPECT_EQ(j.at("y-acc").size(), 3u);
    EXPECT_EQ(j.at("y-acc-dil").size(), dilation_kappas().size());
    EXPECT_TRUE(j.at("y-acc-dil").contains("-2"));

    cmd_export(c, log);
    EXPECT_EQ(csv_rows(dir / "embeddings.csv"), 100u);
}

TEST(Commands, CheckpointMismatchIsReported) {
    test::TempDir dir("cmds");
    RunConfig c = tiny_run(dir.path());
    std::ostringstream log;
    cmd_generate(c, log);
    cmd_train(c, log);
    RunConfig wider = c;
    wider.objective.zp_dim = 5;
    EXPECT_THROW(load_checkpoint(wider), ConfigError);
    RunConfig elsewhere = c;
    elsewhere.out = dir / "nothing";
    EXPECT_THROW(load_checkpoint(elsewhere), IoError);
}

TEST(Commands, MiCheckReportsAllIdentities) {
    RunConfig c;
    std::ostringstream log;
    EXPECT_TRUE(cmd_micheck(c, log));
    EXPECT_NE(log.str().find("200/200 identities hold (tol 1e-12)"), std::string::npos);
}
