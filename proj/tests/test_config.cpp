#include "ssmae/hash.hpp"
#include "ssmae/metrics.hpp"
#include "ssmae/optimizer.hpp"
#include "ssmae/run_config.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace ssmae;
namespace fs = std::filesystem;

TEST(Sha256, KnownVectors) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(RunConfig, LargeProfileDefaults) {
    const RunConfig c = RunConfig::for_profile("paper");
    EXPECT_EQ(c.optim.lr, 1e-4);
    EXPECT_EQ(c.optim.weight_decay, 0.05);
    EXPECT_EQ(c.train.epochs_pretrain, 200);
    EXPECT_EQ(c.train.epochs_finetune, 100);
    EXPECT_EQ(c.train.mask_ratio, 0.75);
    EXPECT_EQ(c.train.batch_labeled, 16);
    EXPECT_EQ(c.train.batch_unlabeled, 32);
    EXPECT_EQ(c.gate.warmup_epochs, 10);
    EXPECT_EQ(c.gate.acc_threshold, 0.70);
    EXPECT_EQ(c.gate.confidence, 0.95);
    EXPECT_EQ(c.gate.patience, 1);
    EXPECT_EQ(c.loss.lambda_cls, 1.0);
    EXPECT_EQ(c.loss.lambda_pseudo, 0.75);
    EXPECT_EQ(c.split.labeled_fraction, 0.10);
    EXPECT_EQ(c.network, NetworkConfig::paper());
    EXPECT_EQ(c.network.num_classes, 10);
    EXPECT_EQ(c.train.schedule, LrSchedule::constant);
    EXPECT_EQ(c.train.recon_reduction, ReconReduction::patch_norm);
    EXPECT_EQ(c.train.recon_target, ReconTarget::normalized);
    EXPECT_EQ(c.train.checkpoint_every, 10);
    EXPECT_EQ(c.gate_policy(), GatePolicy::dynamic);
}

TEST(RunConfig, ToyProfile) {
    const RunConfig c = RunConfig::for_profile("toy");
    EXPECT_EQ(c.network.embed_dim, 64);
    EXPECT_EQ(c.network.depth, 2);
    EXPECT_EQ(c.network.decoder_embed_dim, 32);
    EXPECT_EQ(c.network.decoder_depth, 1);
    EXPECT_EQ(c.network.patch_size, 4);
    EXPECT_LE(c.train.epochs_pretrain, 30);
    EXPECT_EQ(c.data.kind, DatasetKind::synthetic);
    EXPECT_GE(c.data.synthetic.num_train, 2000);
    EXPECT_THROW(RunConfig::for_profile("huge"), Error);
}

TEST(RunConfig, UnknownKeyIsRejected) {
    try {
        parse_config("train.epochs_pretrain = 3\nmodel.width = 5\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "config");
        EXPECT_NE(std::string(e.what()).find("model.width"), std::string::npos);
    }
}

TEST(RunConfig, MalformedValuesAreRejected) {
    EXPECT_THROW(parse_config("train.epochs_pretrain = many"), Error);
    EXPECT_THROW(parse_config("train.mask_ratio = 1.0"), Error);
    EXPECT_THROW(parse_config("gate.patience = 0"), Error);
    EXPECT_THROW(parse_config("model.num_heads = 3"), Error);
    EXPECT_THROW(parse_config("just words"), Error);
    EXPECT_THROW(parse_config("ablation.gate_off_from_epoch1 = true\nablation.gate_no_val_threshold = true"), Error);
}

TEST(RunConfig, ParseAppliesValuesAndComments) {
    const RunConfig c = parse_config(
        "# toy run\nprofile = toy\ntrain.epochs_pretrain = 3  # short\n"
        "optim.lr=0.002\nablation.recon_off = true\nloss.recon_reduction = patch_norm\n");
    EXPECT_EQ(c.train.epochs_pretrain, 3);
    EXPECT_EQ(c.optim.lr, 0.002);
    EXPECT_TRUE(c.ablation.recon_off);
    EXPECT_EQ(c.train.recon_reduction, ReconReduction::patch_norm);
}

TEST(RunConfig, CanonicalFormRoundTrips) {
    for (const std::string profile : {"toy", "paper"}) {
        RunConfig c = RunConfig::for_profile(profile);
        c.set("train.seed", "12345");
        c.set("optim.lr", "0.000123456789");
        c.set("gate.acc_threshold", "0.7");
        c.finalize();
        const std::string text = c.canonical();
        const RunConfig back = parse_config(text);
        EXPECT_EQ(back.canonical(), text);
        EXPECT_EQ(back.hash(), c.hash());
        EXPECT_EQ(back.optim.lr, 0.000123456789);
    }
}

TEST(RunConfig, EveryKeySurvivesGetSet) {
    RunConfig c = RunConfig::for_profile("toy");
    for (const std::string& key : RunConfig::keys()) {
        RunConfig d = c;
        EXPECT_NO_THROW(d.set(key, c.get(key))) << key;
        EXPECT_EQ(d.get(key), c.get(key)) << key;
    }
    EXPECT_GE(RunConfig::keys().size(), 50u);
}

TEST(RunConfig, CanonicalIsSortedAndHashSensitive) {
    const RunConfig a = RunConfig::for_profile("toy");
    const std::string text = a.canonical();
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    EXPECT_TRUE(std::is_sorted(lines.begin(), lines.end()));
    RunConfig b = a;
    b.set("train.seed", "7");
    b.finalize();
    EXPECT_NE(a.hash(), b.hash());
    EXPECT_EQ(a.hash(), sha256_hex(text));
}

TEST(RunConfig, FinalizePropagatesSharedValues) {
    RunConfig c = RunConfig::for_profile("toy");
    c.set("data.num_classes", "6");
    c.set("model.image_size", "32");
    c.finalize();
    EXPECT_EQ(c.network.num_classes, 6);
    EXPECT_EQ(c.data.image_size, 32);
}

TEST(RunConfig, AblationFlagsMapToPolicies) {
    EXPECT_EQ(parse_config("ablation.gate_off_from_epoch1=true").gate_policy(), GatePolicy::open_from_start);
    EXPECT_EQ(parse_config("ablation.gate_no_val_threshold=true").gate_policy(), GatePolicy::open_after_warmup);
    EXPECT_EQ(parse_config("ablation.pseudo_off=true").gate_policy(), GatePolicy::closed);
    EXPECT_EQ(parse_config("ablation.consistency_off=true").filter_mode(), FilterMode::weak_only);
}

TEST(RunConfig, LoadConfigFileAndOverrides) {
    const fs::path f = fs::temp_directory_path() / "ssmae_cfg_test.cfg";
    std::ofstream(f) << "train.epochs_pretrain = 4\n";
    const RunConfig c = load_config(f, std::nullopt, {{"train.seed", "9"}});
    EXPECT_EQ(c.train.epochs_pretrain, 4);
    EXPECT_EQ(c.train.seed, 9u);
    EXPECT_THROW(load_config(fs::path("/nonexistent/x.cfg"), std::nullopt), Error);
    const RunConfig p = load_config(f, std::string("paper"));
    EXPECT_EQ(p.profile, "paper");
    EXPECT_EQ(p.train.epochs_pretrain, 4);
}

TEST(Metrics, JsonRoundTrip) {
    MetricsRecord r;
    r.stage = "pretrain";
    r.epoch = 7;
    r.steps = 57;
    r.loss_recon = 0.123456789012345;
    r.loss_sup = 0.5;
    r.loss_pseudo = 0.25;
    r.loss_total = 0.9;
    r.gate = true;
    r.lambda_p_eff = 0.75;
    r.gate_next = false;
    r.below_count = 1;
    r.val_conf_acc = 0.8;
    r.val_accepted = 12;
    r.val_acc = 0.7;
    r.filter.seen = 100;
    r.filter.accepted = 40;
    r.filter.low_conf_weak = 30;
    r.filter.low_conf_strong = 20;
    r.filter.inconsistent = 10;
    r.filter.correct = 35;
    r.filter.class_hist = {10, 10, 15, 5};
    r.wall_time_s = 1.5;
    const std::string line = to_json_line(r);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    const MetricsRecord b = from_json_line(line);
    EXPECT_EQ(to_json_line(b), line);
    EXPECT_EQ(b.loss_recon, r.loss_recon);
    EXPECT_FALSE(b.test_acc.has_value());
    EXPECT_EQ(b.filter.class_hist, r.filter.class_hist);

    MetricsRecord off;
    EXPECT_FALSE(from_json_line(to_json_line(off)).loss_recon.has_value());
    EXPECT_THROW(from_json_line("{not json"), Error);
}

TEST(Metrics, AppendAndRead) {
    const fs::path f = fs::temp_directory_path() / "ssmae_metrics_test.jsonl";
    fs::remove(f);
    for (int e = 1; e <= 3; ++e) {
        MetricsRecord r;
        r.epoch = e;
        append_metrics(f, r);
    }
    const auto rs = read_metrics(f);
    ASSERT_EQ(rs.size(), 3u);
    EXPECT_EQ(rs[2].epoch, 3);
}

TEST(AdamW, DecayOnlyOnWeightMatrices) {
    EXPECT_TRUE(is_decayed("patch_w"));
    EXPECT_TRUE(is_decayed("enc0.qkv_w"));
    EXPECT_FALSE(is_decayed("enc0.qkv_b"));
    EXPECT_FALSE(is_decayed("enc0.ln1_g"));
    EXPECT_FALSE(is_decayed("cls_token"));
    EXPECT_FALSE(is_decayed("pos_embed"));
    EXPECT_FALSE(is_decayed("mask_token"));
}

TEST(AdamW, SingleStepMatchesHandComputation) {
    NetworkConfig nc;
    nc.embed_dim = 8;
    nc.num_heads = 2;
    nc.decoder_embed_dim = 8;
    nc.decoder_num_heads = 2;
    nc.depth = nc.decoder_depth = 1;
    nc.image_size = 8;
    NetworkParams p = NetworkParams::init(nc, 1);
    NetworkParams g = p.zeros_like();
    g.head_w.setConstant(0.5);
    g.head_b.setConstant(-2.0);
    const NetworkParams before = p;
    AdamWConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.1;
    AdamW opt(p, cfg);
    opt.step(p, g);
    // First bias-corrected step: m_hat = g, v_hat = g^2 -> update = lr * g / (|g| + eps).
    for (Eigen::Index i = 0; i < p.head_w.size(); ++i) {
        const double w0 = before.head_w.data()[i];
        const double expected = w0 - 0.01 * 0.1 * w0 - 0.01 * 0.5 / (0.5 + 1e-8);
        EXPECT_NEAR(p.head_w.data()[i], expected, 1e-12);
    }
    for (Eigen::Index i = 0; i < p.head_b.size(); ++i) {
        EXPECT_NEAR(p.head_b.data()[i], before.head_b.data()[i] + 0.01 * 2.0 / (2.0 + 1e-8), 1e-12);
    }
    // Zero gradient on a weight still decays; on a bias/token it does nothing.
    EXPECT_NEAR(p.patch_w(0, 0), before.patch_w(0, 0) * (1 - 0.001), 1e-15);
    EXPECT_EQ(p.cls_token, before.cls_token);
    EXPECT_EQ(opt.steps(), 1);
}

TEST(AdamW, FrozenAndFixedGroupsAreUntouched) {
    NetworkConfig nc;
    nc.decoder_pos = DecoderPos::sinusoidal;
    NetworkParams p = NetworkParams::init(nc, 2);
    NetworkParams g = p.zeros_like();
    g.visit([](const std::string&, ParamGroup, Matrix& m) { m.setConstant(0.3); });
    const NetworkParams before = p;
    AdamW opt(p, AdamWConfig{});
    opt.step(p, g, 1.0, {ParamGroup::decoder});
    EXPECT_EQ(p.dec_pos, before.dec_pos);
    EXPECT_EQ(p.out_w, before.out_w);
    EXPECT_EQ(p.mask_token, before.mask_token);
    EXPECT_NE(p.head_w, before.head_w);
    EXPECT_NE(p.encoder[0].qkv_w, before.encoder[0].qkv_w);
}
