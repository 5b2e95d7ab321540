#include "ssmae/checkpoint.hpp"
#include "ssmae/metrics.hpp"
#include "ssmae/png_io.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& f) {
    std::ifstream in(f);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path work_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "ssmae_cli_test" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

Result run(const std::string& args, const fs::path& dir) {
    const fs::path o = dir / "stdout.txt", e = dir / "stderr.txt";
    const std::string cmd = std::string(SSMAE_CLI_PATH) + " " + args + " >" + o.string() + " 2>" + e.string();
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
}

const std::string kTiny =
    "--profile toy --quiet --set data.synthetic_train=120 --set data.synthetic_test=40 "
    "--set train.epochs_pretrain=2 --set train.epochs_finetune=1 --labeled-frac 0.25";

std::string last_line(const std::string& s) {
    std::string line, last;
    std::istringstream in(s);
    while (std::getline(in, line))
        if (!line.empty()) last = line;
    return last;
}

}  // namespace

TEST(Cli, UnknownFlagIsUsageError) {
    const fs::path d = work_dir("unknown");
    const Result r = run("pretrain --bogus", d);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("Usage"), std::string::npos);
    EXPECT_EQ(last_line(r.err).rfind("error: code=usage message=\"", 0), 0u);
}

TEST(Cli, MissingSubcommandAndBadProfile) {
    const fs::path d = work_dir("nosub");
    EXPECT_EQ(run("", d).code, 2);
    const Result r = run("pretrain --profile huge", d);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(last_line(r.err).find("code=usage"), std::string::npos);
}

TEST(Cli, MissingConfigFileFails) {
    const fs::path d = work_dir("missing_cfg");
    const Result r = run("pretrain --config " + (d / "nope.cfg").string(), d);
    EXPECT_NE(r.code, 0);
    EXPECT_NE(last_line(r.err).find("error: code="), std::string::npos);
}

TEST(Cli, UnknownConfigKeyIsReportedOnOneLine) {
    const fs::path d = work_dir("bad_key");
    std::ofstream(d / "bad.cfg") << "profile = toy\nmodel.widht = 3\n";
    const Result r = run("pretrain --config " + (d / "bad.cfg").string() + " --out " + d.string(), d);
    EXPECT_EQ(r.code, 1);
    const std::string line = last_line(r.err);
    EXPECT_EQ(line.rfind("error: code=config", 0), 0u) << line;
    EXPECT_NE(line.find("model.widht"), std::string::npos);
}

TEST(Cli, EvalWithoutCheckpointIsUsageError) {
    const fs::path d = work_dir("eval_nockpt");
    const Result r = run("eval", d);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("code=usage"), std::string::npos);
}

TEST(Cli, PretrainFinetuneEvalReconGridAndPlot) {
    const fs::path d = work_dir("pipeline");
    const fs::path run_dir = d / "run";
    const Result pre = run("pretrain " + kTiny + " --seed 3 --finetune --out " + run_dir.string(), d);
    ASSERT_EQ(pre.code, 0) << pre.err;
    EXPECT_NE(pre.out.find("\"command\":\"pretrain\""), std::string::npos);
    EXPECT_TRUE(fs::exists(run_dir / "last.bin"));
    EXPECT_TRUE(fs::exists(run_dir / "finetune_last.bin"));
    EXPECT_EQ(ssmae::read_metrics(run_dir / "metrics.jsonl").size(), 2u);
    EXPECT_EQ(ssmae::read_metrics(run_dir / "metrics_finetune.jsonl").size(), 1u);

    const Result ev = run("eval --checkpoint " + (run_dir / "last.bin").string() + " --split val", d);
    ASSERT_EQ(ev.code, 0) << ev.err;
    EXPECT_NE(ev.out.find("\"accuracy\""), std::string::npos);

    const fs::path grid_dir = d / "grid";
    const Result rg = run("recon-grid --checkpoint " + (run_dir / "last.bin").string() + " --images 3 --out " +
                              grid_dir.string(),
                          d);
    ASSERT_EQ(rg.code, 0) << rg.err;
    const ssmae::Bitmap b = ssmae::read_png(grid_dir / "recon_grid.png");
    EXPECT_EQ(b.width, 48);
    EXPECT_EQ(b.height, 48);

    const Result pl = run("plot " + run_dir.string() + " --out " + (d / "plots").string(), d);
    ASSERT_EQ(pl.code, 0) << pl.err;
    for (const char* f : {"loss.svg", "accuracy.svg", "gate.svg"}) {
        ASSERT_TRUE(fs::exists(d / "plots" / f)) << f;
        EXPECT_NE(slurp(d / "plots" / f).find("<svg"), std::string::npos);
    }

    const Result fresh = run("finetune " + kTiny + " --out " + (d / "scratch").string(), d);
    ASSERT_EQ(fresh.code, 0) << fresh.err;
    EXPECT_NE(fresh.out.find("\"from_scratch\":true"), std::string::npos);

    const Result mismatch = run("finetune " + kTiny + " --seed 4 --checkpoint " + (run_dir / "last.bin").string() +
                                    " --out " + (d / "mm").string(),
                                d);
    EXPECT_EQ(mismatch.code, 1);
    EXPECT_NE(mismatch.err.find("code=config_hash"), std::string::npos);
}

TEST(Cli, ResumeContinuesARun) {
    const fs::path d = work_dir("resume");
    const std::string args = kTiny + " --seed 5 --out " + (d / "r").string();
    ASSERT_EQ(run("pretrain " + args + " --set train.epochs_pretrain=1", d).code, 0);
    // A different epoch count changes the config hash, so resuming is refused.
    const Result bad = run("pretrain " + args + " --resume " + (d / "r" / "last.bin").string(), d);
    EXPECT_EQ(bad.code, 1);
    EXPECT_NE(bad.err.find("code=config_hash"), std::string::npos);
}

TEST(Cli, AblateWritesEveryVariant) {
    const fs::path d = work_dir("ablate");
    const Result r = run("ablate --profile toy --quiet --set data.synthetic_train=60 --set data.synthetic_test=20 "
                         "--set train.epochs_pretrain=1 --labeled-frac 0.5 --out " +
                             d.string(),
                         d);
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* name : {"full", "recon_off", "consistency_off", "gate_off_from_epoch1", "gate_no_val_threshold"}) {
        EXPECT_EQ(ssmae::read_metrics(d / name / "metrics.jsonl").size(), 1u) << name;
    }
    EXPECT_TRUE(fs::exists(d / "summary.json"));
    EXPECT_TRUE(fs::exists(d / "loss.svg"));
}

TEST(Cli, PlotWithoutInputsIsUsageError) {
    const fs::path d = work_dir("plot_empty");
    EXPECT_EQ(run("plot --out " + d.string(), d).code, 2);
    EXPECT_EQ(run("plot " + (d / "absent.jsonl").string(), d).code, 1);
}
