#include "ssmae/trainer.hpp"

#include "ssmae/png_io.hpp"
#include "ssmae/seed.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

namespace ssmae {

namespace fs = std::filesystem;

namespace {

enum SeedRole : std::uint64_t {
    kSupView = 1,
    kWeakView = 2,
    kMaskPlan = 3,
    kStrongView = 4,
    kDropout = 5,
    kMonitor = 6,
};

struct StepTotals {
    double recon = 0.0;
    double sup = 0.0;
    double pseudo = 0.0;
    double total = 0.0;
};

std::string rng_to_string(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& text) {
    std::istringstream is(text);
    is >> rng;
    if (!is) throw Error("checkpoint", "corrupt RNG state");
}

void zero(NetworkParams& p) {
    p.visit([](const std::string&, ParamGroup, Matrix& m) { m.setZero(); });
}

class Trainer {
public:
    Trainer(const Session& session, fs::path out_dir, bool verbose)
        : session_(session), cfg_(session.config()), out_dir_(std::move(out_dir)), verbose_(verbose) {}

    StageResult run_pretrain(const PretrainOptions& options);
    StageResult run_finetune(const FinetuneOptions& options);

private:
    StepTotals pretrain_step(const BatchPair& batch, bool gate_open, double lambda_p_eff,
                             double lr_scale, FilterStats& stats);
    StepTotals finetune_step(const BatchPair& batch, double lr_scale);

    double lr_scale(std::int64_t step, std::int64_t total) const {
        if (cfg_.train.schedule == LrSchedule::constant || total <= 0) return 1.0;
        return 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total));
    }

    void check_finite_params(const std::string& stage, int epoch);
    Checkpoint make_checkpoint(const std::string& stage, int epoch) const;
    void save(const fs::path& file, const std::string& stage, int epoch) const;
    double val_accuracy() const;
    double test_accuracy() const;
    std::pair<ConfValResult, bool> monitor(int epoch) const;

    const Session& session_;
    const RunConfig& cfg_;
    fs::path out_dir_;
    bool verbose_;

    NetworkParams params_;
    NetworkParams grads_;
    AdamW optimizer_;
    std::set<ParamGroup> frozen_;
    std::mt19937_64 rng_;
    GateState gate_;
    double best_val_ = -1.0;
};

Checkpoint Trainer::make_checkpoint(const std::string& stage, int epoch) const {
    Checkpoint c;
    c.config_hash = cfg_.hash();
    c.config_text = cfg_.canonical();
    c.stage = stage;
    c.epoch = epoch;
    c.gate = gate_;
    c.best_val_acc = best_val_;
    c.rng_state = rng_to_string(rng_);
    c.params = params_;
    c.optimizer_steps = optimizer_.steps();
    auto& opt = const_cast<AdamW&>(optimizer_);
    c.optimizer_m = opt.first_moments();
    c.optimizer_v = opt.second_moments();
    return c;
}

void Trainer::save(const fs::path& file, const std::string& stage, int epoch) const {
    save_checkpoint(file, make_checkpoint(stage, epoch));
}

void Trainer::check_finite_params(const std::string& stage, int epoch) {
    if (params_.all_finite()) return;
    const fs::path diag = out_dir_ / "diagnostic.bin";
    save(diag, stage, epoch);
    throw Error("non_finite", "parameters became non-finite during epoch " + std::to_string(epoch) +
                                  "; diagnostic checkpoint at " + diag.string());
}

double Trainer::val_accuracy() const {
    std::size_t count = 0;
    const SampleSource src = session_.samples("val", &count);
    if (count == 0) return 0.0;
    count = std::min<std::size_t>(count, static_cast<std::size_t>(cfg_.train.val_cap));
    return evaluate(session_.classifier(params_), src, count, cfg_.data.num_classes).accuracy;
}

double Trainer::test_accuracy() const {
    std::size_t count = 0;
    const SampleSource src = session_.samples("test", &count);
    if (count == 0) return 0.0;
    return evaluate(session_.classifier(params_), src, count, cfg_.data.num_classes).accuracy;
}

std::pair<ConfValResult, bool> Trainer::monitor(int epoch) const {
    std::size_t count = 0;
    const SampleSource src = session_.samples("val", &count);
    if (count == 0) return {ConfValResult{}, false};
    count = std::min<std::size_t>(count, static_cast<std::size_t>(cfg_.train.val_cap));
    const auto seed = derive_seed(cfg_.train.seed, {kMonitor, static_cast<std::uint64_t>(epoch)});
    return {conf_val_accuracy(session_.classifier(params_), src, count, cfg_.gate.confidence, seed,
                              cfg_.weak, cfg_.strong, cfg_.filter_mode()),
            true};
}

StepTotals Trainer::pretrain_step(const BatchPair& batch, bool gate_open, double lambda_p_eff,
                                  double lr_scale, FilterStats& stats) {
    const Dataset& train = session_.data().train;
    const ChannelStats& norm = session_.data().stats;
    const NetworkConfig& net = cfg_.network;
    const std::uint64_t step_seed = rng_();
    auto seed = [&](SeedRole role, std::size_t i) { return derive_seed(step_seed, {role, i}); };
    std::mt19937_64 dropout_rng(seed(kDropout, 0));
    const ForwardContext train_ctx{Mode::train, &dropout_rng};
    zero(grads_);

    struct View {
        Image raw;
        PatchGrid patches;
    };
    auto make_view = [&](Image raw) {
        View v;
        v.patches = patchify(norm.normalize(raw), net.patch_size);
        v.raw = std::move(raw);
        return v;
    };

    std::vector<View> labeled;
    for (std::size_t i = 0; i < batch.labeled.size(); ++i) {
        Image raw = train.image(static_cast<std::size_t>(batch.labeled[i]));
        if (cfg_.train.sup_augment) raw = augment(raw, cfg_.weak, seed(kSupView, i));
        labeled.push_back(make_view(std::move(raw)));
    }
    std::vector<View> unlabeled;
    for (std::size_t i = 0; i < batch.unlabeled.size(); ++i) {
        const Image raw = train.image(static_cast<std::size_t>(batch.unlabeled[i]));
        unlabeled.push_back(make_view(augment(raw, cfg_.weak, seed(kWeakView, i))));
    }

    StepTotals t;
    const double lambda = cfg_.loss.lambda_cls;

    // (a) masked reconstruction on labeled and unlabeled images
    const bool recon_on = !cfg_.ablation.recon_off && cfg_.train.mask_ratio > 0.0;
    if (recon_on) {
        const std::size_t n = labeled.size() + unlabeled.size();
        for (std::size_t i = 0; i < n; ++i) {
            const View& v = i < labeled.size() ? labeled[i] : unlabeled[i - labeled.size()];
            const MaskPlan plan = make_mask_plan(net.num_patches(), cfg_.train.mask_ratio,
                                                 seed(kMaskPlan, i));
            const ReconPass pass = forward_recon(v.patches, plan, params_, train_ctx);
            const Matrix target = cfg_.train.recon_target == ReconTarget::normalized
                                      ? v.patches.rows
                                      : patchify(v.raw, net.patch_size).rows;
            Matrix grad;
            t.recon += recon_loss(pass.reconstruction, target, plan.masked_idx(), &grad,
                                  cfg_.train.recon_reduction) / n;
            grad /= static_cast<double>(n);
            backward_recon(pass, grad, params_, grads_);
        }
    }

    // (b) supervised cross-entropy at zero masking
    std::vector<double> sup_losses;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        const ClsPass pass = forward_cls(labeled[i].patches, params_, train_ctx);
        RowVector d;
        sup_losses.push_back(ce_loss(pass.logits, train.labels[static_cast<std::size_t>(batch.labeled[i])], &d));
        backward_cls(pass, d * (lambda / labeled.size()), params_, grads_);
    }

    // (c) gated pseudo-labels on the unlabeled batch
    std::vector<double> pseudo_losses;
    if (gate_open && lambda_p_eff > 0.0 && !unlabeled.empty()) {
        const FilterMode mode = cfg_.filter_mode();
        if (stats.class_hist.empty()) stats.class_hist.assign(static_cast<std::size_t>(net.num_classes), 0);
        struct Accepted {
            ClsPass pass;
            RowVector d_logits;
        };
        std::vector<Accepted> accepted;
        for (std::size_t i = 0; i < unlabeled.size(); ++i) {
            const RowVector p_w = softmax(forward_cls(unlabeled[i].patches, params_).logits);
            PatchGrid loss_view = unlabeled[i].patches;
            ClsPass eval_pass;
            RowVector p_s = p_w;
            if (mode == FilterMode::consistency) {
                const Image strong = augment(train.image(static_cast<std::size_t>(batch.unlabeled[i])),
                                             cfg_.strong, seed(kStrongView, i));
                loss_view = patchify(norm.normalize(strong), net.patch_size);
                eval_pass = forward_cls(loss_view, params_);
                p_s = softmax(eval_pass.logits);
            }
            const FilterDecision decision = filter_pseudo(p_w, p_s, cfg_.gate.confidence, mode);
            ++stats.seen;
            switch (decision.reject_reason) {
                case RejectReason::none: break;
                case RejectReason::low_conf_weak: ++stats.low_conf_weak; continue;
                case RejectReason::low_conf_strong: ++stats.low_conf_strong; continue;
                case RejectReason::inconsistent: ++stats.inconsistent; continue;
            }
            ++stats.accepted;
            ++stats.class_hist[static_cast<std::size_t>(decision.pseudo_label)];
            if (decision.pseudo_label == train.labels[static_cast<std::size_t>(batch.unlabeled[i])]) {
                ++stats.correct;
            }
            // Train-mode forward of the loss view; identical to the eval pass without dropout.
            ClsPass pass = (net.dropout > 0.0 || mode == FilterMode::weak_only)
                               ? forward_cls(loss_view, params_, train_ctx)
                               : std::move(eval_pass);
            const PseudoTerm term = pseudo_label_term(p_w, p_s, pass.logits, cfg_.gate.confidence, mode);
            pseudo_losses.push_back(term.loss);
            accepted.push_back({std::move(pass), term.d_logits});
        }
        const double w = lambda * lambda_p_eff / std::max<std::size_t>(accepted.size(), 1);
        for (const Accepted& a : accepted) backward_cls(a.pass, a.d_logits * w, params_, grads_);
    }

    t.sup = cls_loss(sup_losses, {}, 0.0);
    t.pseudo = cls_loss({}, pseudo_losses, 1.0);
    t.total = total_loss(t.recon, cls_loss(sup_losses, pseudo_losses, lambda_p_eff), lambda);
    optimizer_.step(params_, grads_, lr_scale, frozen_);
    return t;
}

StepTotals Trainer::finetune_step(const BatchPair& batch, double lr_scale) {
    const Dataset& train = session_.data().train;
    const std::uint64_t step_seed = rng_();
    std::mt19937_64 dropout_rng(derive_seed(step_seed, {kDropout}));
    const ForwardContext ctx{Mode::train, &dropout_rng};
    zero(grads_);
    std::vector<double> losses;
    for (std::size_t i = 0; i < batch.labeled.size(); ++i) {
        const auto idx = static_cast<std::size_t>(batch.labeled[i]);
        Image raw = train.image(idx);
        if (cfg_.train.sup_augment) raw = augment(raw, cfg_.weak, derive_seed(step_seed, {kSupView, i}));
        const ClsPass pass = forward_cls(patchify(session_.network_input(raw), cfg_.network.patch_size),
                                         params_, ctx);
        RowVector d;
        losses.push_back(ce_loss(pass.logits, train.labels[idx], &d));
        backward_cls(pass, d / static_cast<double>(batch.labeled.size()), params_, grads_);
    }
    StepTotals t;
    t.sup = cls_loss(losses, {}, 0.0);
    t.total = total_loss(0.0, t.sup, 1.0);
    optimizer_.step(params_, grads_, lr_scale, frozen_);
    return t;
}

StageResult Trainer::run_pretrain(const PretrainOptions& options) {
    fs::create_directories(out_dir_);
    const fs::path metrics_file = out_dir_ / "metrics.jsonl";
    const GatePolicy policy = cfg_.gate_policy();
    if (policy == GatePolicy::dynamic && session_.splits().validation.empty()) {
        throw Error("config", "the dynamic gate needs a validation split; raise split.val_fraction");
    }

    int start_epoch = 0;
    if (options.resume) {
        Checkpoint c = load_checkpoint(*options.resume, cfg_.hash());
        if (c.stage != "pretrain") throw Error("checkpoint", "resume expects a pretraining checkpoint");
        params_ = std::move(c.params);
        optimizer_ = AdamW(params_, cfg_.optim);
        optimizer_.first_moments() = std::move(c.optimizer_m);
        optimizer_.second_moments() = std::move(c.optimizer_v);
        optimizer_.set_steps(c.optimizer_steps);
        rng_from_string(rng_, c.rng_state);
        gate_ = c.gate;
        best_val_ = c.best_val_acc;
        start_epoch = c.epoch;
        std::vector<MetricsRecord> kept;
        if (fs::exists(metrics_file)) {
            for (MetricsRecord& r : read_metrics(metrics_file))
                if (r.stage == "pretrain" && r.epoch <= start_epoch) kept.push_back(std::move(r));
            fs::remove(metrics_file);
        }
        for (const MetricsRecord& r : kept) append_metrics(metrics_file, r);
    } else {
        params_ = initial_params(cfg_);
        optimizer_ = AdamW(params_, cfg_.optim);
        rng_.seed(derive_seed(cfg_.train.seed, {0x7a11}));
        gate_ = initial_gate(policy);
        if (fs::exists(metrics_file)) fs::remove(metrics_file);
    }
    grads_ = params_.zeros_like();
    frozen_.clear();
    if (cfg_.ablation.recon_off) frozen_.insert(ParamGroup::decoder);

    StageResult result;
    const int epochs = cfg_.train.epochs_pretrain;
    const std::size_t steps_per_epoch =
        BatchPairStream(session_.splits(), cfg_.train.batch_labeled, cfg_.train.batch_unlabeled, 0)
            .steps_per_epoch();
    const auto total_steps = static_cast<std::int64_t>(steps_per_epoch) * epochs;

    for (int epoch = start_epoch + 1; epoch <= epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        MetricsRecord rec;
        rec.stage = "pretrain";
        rec.epoch = epoch;
        rec.gate = gate_.open;
        rec.lambda_p_eff = effective_pseudo_weight(gate_, cfg_.loss);
        rec.filter.class_hist.assign(static_cast<std::size_t>(cfg_.data.num_classes), 0);

        BatchPairStream stream(session_.splits(), cfg_.train.batch_labeled,
                               cfg_.train.batch_unlabeled, rng_());
        StepTotals sum;
        while (auto batch = stream.next()) {
            StepTotals t;
            try {
                t = pretrain_step(*batch, gate_.open, rec.lambda_p_eff,
                                  lr_scale(optimizer_.steps(), total_steps), rec.filter);
            } catch (const Error& e) {
                if (e.code() != "non_finite") throw;
                const fs::path diag = out_dir_ / "diagnostic.bin";
                save(diag, "pretrain", epoch - 1);
                throw Error("non_finite", std::string(e.what()) + "; diagnostic checkpoint at " +
                                              diag.string());
            }
            sum.recon += t.recon;
            sum.sup += t.sup;
            sum.pseudo += t.pseudo;
            sum.total += t.total;
            ++rec.steps;
        }
        check_finite_params("pretrain", epoch);
        const double steps = std::max(rec.steps, 1);
        if (!cfg_.ablation.recon_off && cfg_.train.mask_ratio > 0.0) rec.loss_recon = sum.recon / steps;
        rec.loss_sup = sum.sup / steps;
        rec.loss_pseudo = sum.pseudo / steps;
        rec.loss_total = sum.total / steps;

        const auto [conf, have_val] = monitor(epoch);
        rec.val_conf_acc = conf.accuracy;
        rec.val_accepted = conf.accepted;
        gate_ = advance_gate(gate_, cfg_.gate, conf.accuracy, policy);
        rec.gate_next = gate_.open;
        rec.below_count = gate_.below_count;
        if (have_val) rec.val_acc = val_accuracy();
        if (epoch == epochs || (cfg_.train.eval_every > 0 && epoch % cfg_.train.eval_every == 0)) {
            rec.test_acc = test_accuracy();
        }
        rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        append_metrics(metrics_file, rec);
        result.records.push_back(rec);

        save(out_dir_ / "last.bin", "pretrain", epoch);
        if (epoch % cfg_.train.checkpoint_every == 0 || epoch == epochs) {
            char name[64];
            std::snprintf(name, sizeof name, "ckpt_epoch_%04d.bin", epoch);
            fs::copy_file(out_dir_ / "last.bin", out_dir_ / name, fs::copy_options::overwrite_existing);
        }
        if (rec.val_acc && *rec.val_acc > best_val_) {
            best_val_ = *rec.val_acc;
            fs::copy_file(out_dir_ / "last.bin", out_dir_ / "best_val.bin",
                          fs::copy_options::overwrite_existing);
        }
        if (verbose_) {
            std::fprintf(stderr,
                         "[pretrain] epoch %d/%d recon=%s sup=%.4f pseudo=%.4f total=%.4f g=%d "
                         "val_conf=%.3f (%d) accepted=%d/%d%s (%.1fs)\n",
                         epoch, epochs,
                         rec.loss_recon ? std::to_string(*rec.loss_recon).c_str() : "off",
                         rec.loss_sup, rec.loss_pseudo, rec.loss_total, rec.gate ? 1 : 0,
                         rec.val_conf_acc, rec.val_accepted, rec.filter.accepted, rec.filter.seen,
                         rec.test_acc ? (" test=" + std::to_string(*rec.test_acc)).c_str() : "",
                         rec.wall_time_s);
        }
        if (options.stop_after_epoch && epoch >= *options.stop_after_epoch) break;
    }
    result.last_checkpoint = out_dir_ / "last.bin";
    if (!fs::exists(result.last_checkpoint)) save(result.last_checkpoint, "pretrain", start_epoch);
    result.params = params_;
    if (!result.records.empty()) result.test_acc = result.records.back().test_acc;
    return result;
}

StageResult Trainer::run_finetune(const FinetuneOptions& options) {
    fs::create_directories(out_dir_);
    const fs::path metrics_file = out_dir_ / "metrics_finetune.jsonl";
    if (fs::exists(metrics_file)) fs::remove(metrics_file);
    if (options.checkpoint) {
        Checkpoint c = load_checkpoint(
            *options.checkpoint,
            options.allow_config_mismatch ? std::nullopt : std::optional<std::string>(cfg_.hash()));
        if (!(c.params.config == cfg_.network)) {
            throw Error("checkpoint", "checkpoint network does not match the configured network");
        }
        params_ = std::move(c.params);
        gate_ = c.gate;
    } else {
        params_ = initial_params(cfg_);
    }
    AdamWConfig finetune_optim = cfg_.optim;
    finetune_optim.lr = cfg_.train.finetune_lr;
    optimizer_ = AdamW(params_, finetune_optim);
    grads_ = params_.zeros_like();
    frozen_ = {ParamGroup::decoder};
    rng_.seed(derive_seed(cfg_.train.seed, {0xf1e7}));

    Splits labeled_only = session_.splits();
    labeled_only.unlabeled.clear();
    const int epochs = cfg_.train.epochs_finetune;
    const auto total_steps = static_cast<std::int64_t>(
        BatchPairStream(labeled_only, cfg_.train.batch_labeled, cfg_.train.batch_unlabeled, 0)
            .steps_per_epoch()) * epochs;

    StageResult result;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        MetricsRecord rec;
        rec.stage = "finetune";
        rec.epoch = epoch;
        rec.filter.class_hist.assign(static_cast<std::size_t>(cfg_.data.num_classes), 0);
        BatchPairStream stream(labeled_only, cfg_.train.batch_labeled, cfg_.train.batch_unlabeled, rng_());
        double sup = 0.0;
        while (auto batch = stream.next()) {
            sup += finetune_step(*batch, lr_scale(optimizer_.steps(), total_steps)).sup;
            ++rec.steps;
        }
        check_finite_params("finetune", epoch);
        rec.loss_sup = sup / std::max(rec.steps, 1);
        rec.loss_total = rec.loss_sup;
        if (!session_.splits().validation.empty()) rec.val_acc = val_accuracy();
        rec.test_acc = test_accuracy();
        rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        append_metrics(metrics_file, rec);
        result.records.push_back(rec);
        if (verbose_) {
            std::fprintf(stderr, "[finetune] epoch %d/%d sup=%.4f test=%.4f (%.1fs)\n", epoch, epochs,
                         rec.loss_sup, *rec.test_acc, rec.wall_time_s);
        }
        save(out_dir_ / "finetune_last.bin", "finetune", epoch);
    }
    result.last_checkpoint = out_dir_ / "finetune_last.bin";
    if (epochs == 0) save(result.last_checkpoint, "finetune", 0);
    result.params = params_;
    result.test_acc = result.records.empty() ? test_accuracy() : *result.records.back().test_acc;
    return result;
}

}  // namespace

Session::Session(RunConfig config) : config_(std::move(config)) {
    config_.finalize();
    data_ = load_dataset(config_.data);
    splits_ = split(data_.train.labels, config_.data.num_classes, config_.split);
}

Classifier Session::classifier(const NetworkParams& params) const {
    return [this, &params](const Image& raw) { return classify(network_input(raw), params); };
}

SampleSource Session::samples(const std::string& split_name, std::size_t* count) const {
    const Dataset* ds = &data_.train;
    const std::vector<int>* idx = nullptr;
    if (split_name == "test") {
        ds = &data_.test;
    } else if (split_name == "labeled") {
        idx = &splits_.labeled;
    } else if (split_name == "unlabeled") {
        idx = &splits_.unlabeled;
    } else if (split_name == "val") {
        idx = &splits_.validation;
    } else if (split_name != "train") {
        throw Error("config", "unknown split '" + split_name + "'");
    }
    *count = idx ? idx->size() : ds->size();
    return [ds, idx](std::size_t i) {
        const std::size_t k = idx ? static_cast<std::size_t>((*idx)[i]) : i;
        return LabeledImage{ds->image(k), ds->labels[k]};
    };
}

NetworkParams initial_params(const RunConfig& config) {
    return NetworkParams::init(config.network, derive_seed(config.train.seed, {0x1417}));
}

StageResult pretrain(const Session& session, const PretrainOptions& options) {
    return Trainer(session, options.out_dir, options.verbose).run_pretrain(options);
}

StageResult finetune(const Session& session, const FinetuneOptions& options) {
    return Trainer(session, options.out_dir, options.verbose).run_finetune(options);
}

EvalResult evaluate(const Classifier& model, const SampleSource& samples, std::size_t count,
                    int num_classes, std::size_t batch_size) {
    EvalResult r;
    r.per_class_count.assign(static_cast<std::size_t>(num_classes), 0);
    std::vector<int> correct(static_cast<std::size_t>(num_classes), 0);
    int total_correct = 0;
    batch_size = std::max<std::size_t>(batch_size, 1);
    for (std::size_t begin = 0; begin < count; begin += batch_size) {
        const std::size_t end = std::min(begin + batch_size, count);
        for (std::size_t i = begin; i < end; ++i) {
            const LabeledImage s = samples(i);
            const auto y = static_cast<std::size_t>(s.label);
            ++r.per_class_count[y];
            if (argmax(model(s.image)) == s.label) {
                ++correct[y];
                ++total_correct;
            }
        }
    }
    r.total = static_cast<int>(count);
    r.accuracy = count ? static_cast<double>(total_correct) / static_cast<double>(count) : 0.0;
    for (std::size_t c = 0; c < correct.size(); ++c) {
        r.per_class_accuracy.push_back(
            r.per_class_count[c] ? static_cast<double>(correct[c]) / r.per_class_count[c] : 0.0);
    }
    return r;
}

void export_reconstructions(const NetworkParams& params, const ChannelStats& stats,
                            ReconTarget target, const std::vector<Image>& raw_images,
                            double mask_ratio, std::uint64_t seed, const fs::path& out_file) {
    if (raw_images.empty()) throw Error("config", "no images to reconstruct");
    const NetworkConfig& net = params.config;
    const int h = net.image_size;
    const int w = net.image_size;
    const int c = net.channels;
    const int P = net.patch_size;
    const int grid_w = w / P;

    Bitmap bmp;
    bmp.width = 3 * w;
    bmp.height = static_cast<int>(raw_images.size()) * h;
    bmp.channels = c == 1 ? 1 : 3;
    bmp.pixels.assign(static_cast<std::size_t>(bmp.width) * bmp.height * bmp.channels, 0);
    auto put = [&](int row, int col, const Image& img) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int ch = 0; ch < bmp.channels; ++ch) {
                    const Real v = std::clamp(img.at(y, x, std::min(ch, c - 1)), Real{0}, Real{1});
                    const auto idx = (static_cast<std::size_t>(row * h + y) * bmp.width + col * w + x) *
                                         bmp.channels + ch;
                    bmp.pixels[idx] = static_cast<std::uint8_t>(std::lround(v * 255.0));
                }
            }
        }
    };
    auto copy_patch = [&](Image& dst, const Image* src, int patch) {
        const int y0 = (patch / grid_w) * P;
        const int x0 = (patch % grid_w) * P;
        for (int y = y0; y < y0 + P; ++y)
            for (int x = x0; x < x0 + P; ++x)
                for (int ch = 0; ch < c; ++ch) dst.at(y, x, ch) = src ? src->at(y, x, ch) : 0.0;
    };

    for (std::size_t i = 0; i < raw_images.size(); ++i) {
        const Image& raw = raw_images[i];
        if (raw.height != h || raw.width != w || raw.channels != c) {
            throw Error("shape", "image geometry does not match the network");
        }
        const PatchGrid grid = patchify(stats.normalize(raw), P);
        const MaskPlan plan = make_mask_plan(grid.num_patches(), mask_ratio, derive_seed(seed, {i}));
        const ReconPass pass = forward_recon(grid, plan, params);
        PatchGrid out{pass.reconstruction, P};
        Image recon = unpatchify(out, h, w, c, P);
        if (target == ReconTarget::normalized) recon = stats.denormalize(recon);
        Image masked = raw;
        for (int p : plan.masked_idx()) copy_patch(masked, nullptr, p);
        for (int p : plan.visible_idx()) copy_patch(recon, &raw, p);
        put(static_cast<int>(i), 0, masked);
        put(static_cast<int>(i), 1, recon);
        put(static_cast<int>(i), 2, raw);
    }
    write_png(out_file, bmp);
}

}  // namespace ssmae
