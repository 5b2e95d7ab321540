#include "ssmae/cli.hpp"

#include "ssmae/plot.hpp"
#include "ssmae/seed.hpp"
#include "ssmae/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace ssmae {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct CommonArgs {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> resume;
    std::string out = "runs/ssmae";
    std::optional<double> labeled_frac;
    std::optional<std::string> profile;
    std::vector<std::string> sets;
    bool quiet = false;
};

struct ExtraArgs {
    std::optional<std::string> checkpoint;
    bool allow_config_mismatch = false;
    std::string split = "test";
    std::optional<double> mask_ratio;
    int images = 8;
    std::vector<std::string> metrics;
    bool finetune = false;
};

std::string quote(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += (c == '\n') ? ' ' : c;
    }
    return out;
}

void print_error(std::ostream& err, const std::string& code, const std::string& message) {
    err << "error: code=" << code << " message=\"" << quote(message) << "\"\n";
}

void add_common(CLI::App* app, CommonArgs& a) {
    app->add_option("--config", a.config, "Config file (key = value lines)")->check(CLI::ExistingFile);
    app->add_option("--seed", a.seed, "Base seed");
    app->add_option("--resume", a.resume, "Resume from a checkpoint")->check(CLI::ExistingFile);
    app->add_option("--out", a.out, "Output directory");
    app->add_option("--labeled-frac", a.labeled_frac, "Labeled fraction of the training set");
    app->add_option("--profile", a.profile, "Default profile")->check(CLI::IsMember({"paper", "toy"}));
    app->add_option("--set", a.sets, "Override a config key (key=value), repeatable");
    app->add_flag("--quiet", a.quiet, "No per-epoch progress on stderr");
}

std::map<std::string, std::string> overrides(const CommonArgs& a) {
    std::map<std::string, std::string> m;
    for (const std::string& kv : a.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw Error("usage", "--set expects key=value, got '" + kv + "'");
        m[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    if (a.seed) m["train.seed"] = std::to_string(*a.seed);
    if (a.labeled_frac) {
        std::ostringstream os;
        os.precision(17);
        os << *a.labeled_frac;
        m["split.labeled_fraction"] = os.str();
    }
    return m;
}

RunConfig config_from(const CommonArgs& a, const std::map<std::string, std::string>& extra = {}) {
    auto m = overrides(a);
    for (const auto& [k, v] : extra) m.emplace(k, v);
    return load_config(a.config ? std::optional<fs::path>(*a.config) : std::nullopt, a.profile, m);
}

/// Commands that consume a checkpoint default to the config embedded in it.
RunConfig config_for_checkpoint(const CommonArgs& a, const Checkpoint& ckpt) {
    if (a.config || a.profile) return config_from(a);
    RunConfig c = parse_config(ckpt.config_text);
    for (const auto& [k, v] : overrides(a)) c.set(k, v);
    c.finalize();
    return c;
}

json record_summary(const StageResult& r) {
    json j;
    j["epochs"] = r.records.size();
    j["checkpoint"] = r.last_checkpoint.string();
    if (r.test_acc) j["test_acc"] = *r.test_acc;
    if (!r.records.empty()) j["final_loss_total"] = r.records.back().loss_total;
    return j;
}

void write_json(const fs::path& file, const json& j) {
    fs::create_directories(file.parent_path());
    std::ofstream out(file);
    out << j.dump(2) << '\n';
    if (!out) throw Error("io", "cannot write " + file.string());
}

int cmd_pretrain(const CommonArgs& a, const ExtraArgs& x, std::ostream& out) {
    const Session session(config_from(a));
    PretrainOptions opt;
    opt.out_dir = a.out;
    if (a.resume) opt.resume = fs::path(*a.resume);
    opt.verbose = !a.quiet;
    const StageResult r = pretrain(session, opt);
    json j = record_summary(r);
    j["command"] = "pretrain";
    j["config_hash"] = session.config().hash();
    if (x.finetune) {
        FinetuneOptions f;
        f.out_dir = a.out;
        f.checkpoint = r.last_checkpoint;
        f.verbose = !a.quiet;
        j["finetune"] = record_summary(finetune(session, f));
    }
    out << j.dump() << '\n';
    return 0;
}

int cmd_finetune(const CommonArgs& a, const ExtraArgs& x, std::ostream& out) {
    if (a.resume) throw Error("usage", "finetune restarts from --checkpoint; --resume is not supported");
    const Session session(config_from(a));
    FinetuneOptions opt;
    opt.out_dir = a.out;
    if (x.checkpoint) opt.checkpoint = fs::path(*x.checkpoint);
    opt.allow_config_mismatch = x.allow_config_mismatch;
    opt.verbose = !a.quiet;
    json j = record_summary(finetune(session, opt));
    j["command"] = "finetune";
    j["from_scratch"] = !x.checkpoint.has_value();
    out << j.dump() << '\n';
    return 0;
}

int cmd_eval(const CommonArgs& a, const ExtraArgs& x, std::ostream& out) {
    if (!x.checkpoint) throw Error("usage", "eval needs --checkpoint");
    const Checkpoint ckpt = load_checkpoint(*x.checkpoint);
    const Session session(config_for_checkpoint(a, ckpt));
    if (!(ckpt.params.config == session.config().network)) {
        throw Error("checkpoint", "checkpoint network does not match the configured network");
    }
    std::size_t count = 0;
    const SampleSource src = session.samples(x.split, &count);
    if (count == 0) throw Error("data", "split '" + x.split + "' is empty");
    const EvalResult r = evaluate(session.classifier(ckpt.params), src, count,
                                  session.config().data.num_classes);
    json j;
    j["command"] = "eval";
    j["split"] = x.split;
    j["accuracy"] = r.accuracy;
    j["total"] = r.total;
    j["per_class_accuracy"] = r.per_class_accuracy;
    j["per_class_count"] = r.per_class_count;
    out << j.dump() << '\n';
    return 0;
}

int cmd_recon_grid(const CommonArgs& a, const ExtraArgs& x, std::ostream& out) {
    if (!x.checkpoint) throw Error("usage", "recon-grid needs --checkpoint");
    if (x.images <= 0) throw Error("usage", "--images must be positive");
    const Checkpoint ckpt = load_checkpoint(*x.checkpoint);
    const Session session(config_for_checkpoint(a, ckpt));
    std::size_t count = 0;
    const SampleSource src = session.samples(x.split, &count);
    std::vector<Image> images;
    for (std::size_t i = 0; i < std::min<std::size_t>(count, static_cast<std::size_t>(x.images)); ++i) {
        images.push_back(src(i).image);
    }
    const double ratio = x.mask_ratio.value_or(session.config().train.mask_ratio);
    const fs::path file = fs::path(a.out) / "recon_grid.png";
    fs::create_directories(a.out);
    export_reconstructions(ckpt.params, session.data().stats, session.config().train.recon_target,
                           images, ratio, derive_seed(a.seed.value_or(0), {0x9a1d}), file);
    json j;
    j["command"] = "recon-grid";
    j["file"] = file.string();
    j["images"] = images.size();
    j["mask_ratio"] = ratio;
    out << j.dump() << '\n';
    return 0;
}

int run_many(const CommonArgs& a, const std::string& command,
             const std::vector<std::pair<std::string, std::map<std::string, std::string>>>& runs,
             std::ostream& out) {
    json summary;
    summary["command"] = command;
    summary["runs"] = json::array();
    std::vector<fs::path> metric_files;
    for (const auto& [name, extra] : runs) {
        const Session session(config_from(a, extra));
        PretrainOptions opt;
        opt.out_dir = fs::path(a.out) / name;
        opt.verbose = !a.quiet;
        if (!a.quiet) std::cerr << "[" << command << "] " << name << '\n';
        const StageResult r = pretrain(session, opt);
        json j = record_summary(r);
        j["name"] = name;
        j["metrics"] = (opt.out_dir / "metrics.jsonl").string();
        for (const auto& [k, v] : extra) j["overrides"][k] = v;
        summary["runs"].push_back(j);
        metric_files.push_back(opt.out_dir / "metrics.jsonl");
    }
    write_json(fs::path(a.out) / "summary.json", summary);
    plot_metrics(metric_files, a.out);
    out << summary.dump() << '\n';
    return 0;
}

int cmd_ablate(const CommonArgs& a, std::ostream& out) {
    return run_many(a, "ablate",
                    {{"full", {}},
                     {"recon_off", {{"ablation.recon_off", "true"}}},
                     {"consistency_off", {{"ablation.consistency_off", "true"}}},
                     {"gate_off_from_epoch1", {{"ablation.gate_off_from_epoch1", "true"}}},
                     {"gate_no_val_threshold", {{"ablation.gate_no_val_threshold", "true"}}}},
                    out);
}

int cmd_sweep_mask(const CommonArgs& a, std::ostream& out) {
    std::vector<std::pair<std::string, std::map<std::string, std::string>>> runs;
    for (const char* r : {"0.25", "0.5", "0.6", "0.75", "0.9"}) {
        runs.push_back({std::string("mask_") + r, {{"train.mask_ratio", r}}});
    }
    return run_many(a, "sweep-mask", runs, out);
}

int cmd_plot(const CommonArgs& a, const ExtraArgs& x, std::ostream& out) {
    std::vector<fs::path> files;
    for (const std::string& m : x.metrics) {
        fs::path p = m;
        if (fs::is_directory(p)) p /= "metrics.jsonl";
        if (!fs::exists(p)) throw Error("io", "metrics file not found: " + p.string());
        files.push_back(p);
    }
    if (files.empty()) throw Error("usage", "plot needs at least one metrics file");
    const auto written = plot_metrics(files, a.out);
    json j;
    j["command"] = "plot";
    for (const auto& w : written) j["files"].push_back(w.string());
    out << j.dump() << '\n';
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Semi-supervised masked-autoencoder ViT training", "ssmae"};
    app.require_subcommand(1);
    CommonArgs common;
    ExtraArgs extra;

    auto* pre = app.add_subcommand("pretrain", "Joint reconstruction + classification pretraining");
    add_common(pre, common);
    pre->add_flag("--finetune", extra.finetune, "Fine-tune the final checkpoint afterwards");

    auto* fin = app.add_subcommand("finetune", "Labeled-only fine-tuning (random init without --checkpoint)");
    add_common(fin, common);
    fin->add_option("--checkpoint", extra.checkpoint, "Starting checkpoint")->check(CLI::ExistingFile);
    fin->add_flag("--allow-config-mismatch", extra.allow_config_mismatch,
                  "Accept a checkpoint trained under a different config");

    auto* ev = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint");
    add_common(ev, common);
    ev->add_option("--checkpoint", extra.checkpoint, "Checkpoint")->check(CLI::ExistingFile);
    ev->add_option("--split", extra.split, "Split to evaluate")
        ->check(CLI::IsMember({"train", "test", "labeled", "unlabeled", "val"}));

    auto* rg = app.add_subcommand("recon-grid", "Export masked/reconstruction/original grid as PNG");
    add_common(rg, common);
    rg->add_option("--checkpoint", extra.checkpoint, "Checkpoint")->check(CLI::ExistingFile);
    rg->add_option("--mask-ratio", extra.mask_ratio, "Masking ratio (defaults to the config)");
    rg->add_option("--images", extra.images, "Number of images");
    rg->add_option("--split", extra.split, "Source split")
        ->check(CLI::IsMember({"train", "test", "labeled", "unlabeled", "val"}));

    auto* ab = app.add_subcommand("ablate", "Run the five ablation configurations");
    add_common(ab, common);
    auto* sw = app.add_subcommand("sweep-mask", "Pretrain at masking ratios 0.25, 0.5, 0.6, 0.75, 0.9");
    add_common(sw, common);

    auto* pl = app.add_subcommand("plot", "Render loss/accuracy/gate SVGs from metrics files");
    add_common(pl, common);
    pl->add_option("metrics", extra.metrics, "metrics.jsonl files or run directories");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        print_error(err, "usage", e.what());
        return 2;
    }

    try {
        if (*pre) return cmd_pretrain(common, extra, out);
        if (*fin) return cmd_finetune(common, extra, out);
        if (*ev) return cmd_eval(common, extra, out);
        if (*rg) return cmd_recon_grid(common, extra, out);
        if (*ab) return cmd_ablate(common, out);
        if (*sw) return cmd_sweep_mask(common, out);
        if (*pl) return cmd_plot(common, extra, out);
    } catch (const Error& e) {
        print_error(err, e.code(), e.what());
        return e.code() == "usage" ? 2 : 1;
    } catch (const std::exception& e) {
        print_error(err, "internal", e.what());
        return 1;
    }
    return 0;
}

}  // namespace ssmae
