#include "ssmae/checkpoint.hpp"
#include "ssmae/optimizer.hpp"
#include "ssmae/run_config.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace ssmae;
namespace fs = std::filesystem;

namespace {

Checkpoint sample_checkpoint(const RunConfig& cfg) {
    Checkpoint c;
    c.config_hash = cfg.hash();
    c.config_text = cfg.canonical();
    c.stage = "pretrain";
    c.epoch = 3;
    c.gate.epoch = 3;
    c.gate.open = true;
    c.gate.below_count = 2;
    c.gate.last_val_conf_acc = 0.8125;
    c.best_val_acc = 0.6;
    c.rng_state = "1 2 3 4";
    c.params = NetworkParams::init(cfg.network, 5);
    AdamW opt(c.params, cfg.optim);
    NetworkParams g = c.params.zeros_like();
    g.head_w.setConstant(0.1);
    NetworkParams p = c.params;
    opt.step(p, g);
    c.optimizer_steps = opt.steps();
    c.optimizer_m = opt.first_moments();
    c.optimizer_v = opt.second_moments();
    return c;
}

fs::path temp_file(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "ssmae_ckpt_test";
    fs::create_directories(d);
    return d / name;
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
    const RunConfig cfg = RunConfig::for_profile("toy");
    const Checkpoint c = sample_checkpoint(cfg);
    const fs::path f = temp_file("a.bin");
    save_checkpoint(f, c);
    const Checkpoint b = load_checkpoint(f, cfg.hash());
    EXPECT_EQ(b.config_hash, c.config_hash);
    EXPECT_EQ(b.config_text, c.config_text);
    EXPECT_EQ(b.stage, c.stage);
    EXPECT_EQ(b.epoch, c.epoch);
    EXPECT_EQ(b.gate, c.gate);
    EXPECT_EQ(b.best_val_acc, c.best_val_acc);
    EXPECT_EQ(b.rng_state, c.rng_state);
    EXPECT_EQ(b.optimizer_steps, c.optimizer_steps);
    EXPECT_EQ(b.params.config, c.params.config);
    std::vector<Matrix> ta, tb;
    c.params.visit([&](const std::string&, ParamGroup, const Matrix& m) { ta.push_back(m); });
    b.params.visit([&](const std::string&, ParamGroup, const Matrix& m) { tb.push_back(m); });
    ASSERT_EQ(ta.size(), tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(ta[i], tb[i]);
    ASSERT_EQ(b.optimizer_m.size(), c.optimizer_m.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        EXPECT_EQ(b.optimizer_m[i], c.optimizer_m[i]);
        EXPECT_EQ(b.optimizer_v[i], c.optimizer_v[i]);
    }
}

TEST(Checkpoint, ConfigHashMismatchIsRejected) {
    const RunConfig cfg = RunConfig::for_profile("toy");
    const fs::path f = temp_file("b.bin");
    save_checkpoint(f, sample_checkpoint(cfg));
    RunConfig other = cfg;
    other.set("train.seed", "99");
    other.finalize();
    try {
        load_checkpoint(f, other.hash());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "config_hash");
    }
    EXPECT_NO_THROW(load_checkpoint(f));
}

TEST(Checkpoint, CorruptionIsDetected) {
    const RunConfig cfg = RunConfig::for_profile("toy");
    const fs::path f = temp_file("c.bin");
    save_checkpoint(f, sample_checkpoint(cfg));
    std::fstream io(f, std::ios::in | std::ios::out | std::ios::binary);
    io.seekp(static_cast<std::streamoff>(fs::file_size(f) / 2));
    io.put('\x5a');
    io.close();
    EXPECT_THROW(load_checkpoint(f), Error);
}

TEST(Checkpoint, TruncationAndGarbageAreDetected) {
    const RunConfig cfg = RunConfig::for_profile("toy");
    const fs::path f = temp_file("d.bin");
    save_checkpoint(f, sample_checkpoint(cfg));
    fs::resize_file(f, fs::file_size(f) - 10);
    EXPECT_THROW(load_checkpoint(f), Error);
    std::ofstream(temp_file("e.bin")) << "not a checkpoint";
    EXPECT_THROW(load_checkpoint(temp_file("e.bin")), Error);
    EXPECT_THROW(load_checkpoint(temp_file("missing.bin")), Error);
}

TEST(Checkpoint, TamperedConfigTextIsRejected) {
    const RunConfig cfg = RunConfig::for_profile("toy");
    Checkpoint c = sample_checkpoint(cfg);
    c.config_hash = std::string(64, 'a');
    const fs::path f = temp_file("f.bin");
    save_checkpoint(f, c);
    EXPECT_THROW(load_checkpoint(f), Error);
}
