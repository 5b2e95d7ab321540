#include "ssmae/run_config.hpp"

#include "ssmae/hash.hpp"
#include "ssmae/seed.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace ssmae {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw Error("config", "key '" + key + "': '" + value + "' is not " + expected);
}

int to_int(const std::string& key, const std::string& v) {
    int out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v, "an integer");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v, "an unsigned integer");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) bad_value(key, v, "a number");
        return out;
    } catch (const std::logic_error&) {
        bad_value(key, v, "a number");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(key, v, "a boolean");
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

std::vector<std::string> to_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string fmt_list(const std::vector<std::string>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + xs[i];
    return out;
}

struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <class T>
Field int_field(T RunConfig::*section, int T::*member) {
    return {[=](const RunConfig& c) { return std::to_string(c.*section.*member); },
            [=](RunConfig& c, const std::string& k, const std::string& v) {
                c.*section.*member = to_int(k, v);
            }};
}

template <class T>
Field double_field(T RunConfig::*section, double T::*member) {
    return {[=](const RunConfig& c) { return fmt_double(c.*section.*member); },
            [=](RunConfig& c, const std::string& k, const std::string& v) {
                c.*section.*member = to_double(k, v);
            }};
}

template <class T>
Field bool_field(T RunConfig::*section, bool T::*member) {
    return {[=](const RunConfig& c) { return fmt_bool(c.*section.*member); },
            [=](RunConfig& c, const std::string& k, const std::string& v) {
                c.*section.*member = to_bool(k, v);
            }};
}

template <class T>
Field list_field(T RunConfig::*section, std::vector<std::string> T::*member) {
    return {[=](const RunConfig& c) { return fmt_list(c.*section.*member); },
            [=](RunConfig& c, const std::string&, const std::string& v) {
                c.*section.*member = to_list(v);
            }};
}

template <class E>
Field enum_field(std::function<E&(RunConfig&)> ref, std::vector<std::pair<E, std::string>> names) {
    return {[=](const RunConfig& c) {
                const E value = ref(const_cast<RunConfig&>(c));
                for (const auto& [e, n] : names)
                    if (e == value) return n;
                return std::string("?");
            },
            [=](RunConfig& c, const std::string& k, const std::string& v) {
                for (const auto& [e, n] : names) {
                    if (n == v) {
                        ref(c) = e;
                        return;
                    }
                }
                std::string allowed;
                for (const auto& [e, n] : names) allowed += (allowed.empty() ? "" : "|") + n;
                throw Error("config", "key '" + k + "': '" + v + "' is not one of " + allowed);
            }};
}

// Both augmentation policies share the same magnitudes.
template <class T>
Field aug_field(T AugPolicy::*member) {
    return {[=](const RunConfig& c) {
                if constexpr (std::is_same_v<T, int>) return std::to_string(c.strong.*member);
                else return fmt_double(c.strong.*member);
            },
            [=](RunConfig& c, const std::string& k, const std::string& v) {
                if constexpr (std::is_same_v<T, int>) c.weak.*member = c.strong.*member = to_int(k, v);
                else c.weak.*member = c.strong.*member = to_double(k, v);
            }};
}

const std::map<std::string, Field>& registry() {
    static const std::map<std::string, Field> fields = [] {
        std::map<std::string, Field> f;
        using C = RunConfig;
        f["profile"] = {[](const C& c) { return c.profile; },
                        [](C& c, const std::string&, const std::string& v) { c.profile = v; }};

        f["model.embed_dim"] = int_field(&C::network, &NetworkConfig::embed_dim);
        f["model.depth"] = int_field(&C::network, &NetworkConfig::depth);
        f["model.num_heads"] = int_field(&C::network, &NetworkConfig::num_heads);
        f["model.decoder_embed_dim"] = int_field(&C::network, &NetworkConfig::decoder_embed_dim);
        f["model.decoder_depth"] = int_field(&C::network, &NetworkConfig::decoder_depth);
        f["model.decoder_num_heads"] = int_field(&C::network, &NetworkConfig::decoder_num_heads);
        f["model.patch_size"] = int_field(&C::network, &NetworkConfig::patch_size);
        f["model.image_size"] = int_field(&C::network, &NetworkConfig::image_size);
        f["model.mlp_ratio"] = int_field(&C::network, &NetworkConfig::mlp_ratio);
        f["model.dropout"] = double_field(&C::network, &NetworkConfig::dropout);
        f["model.decoder_pos"] = enum_field<DecoderPos>(
            [](C& c) -> DecoderPos& { return c.network.decoder_pos; },
            {{DecoderPos::learned, "learned"}, {DecoderPos::sinusoidal, "sinusoidal"}});

        f["loss.lambda_cls"] = double_field(&C::loss, &LossWeights::lambda_cls);
        f["loss.lambda_pseudo"] = double_field(&C::loss, &LossWeights::lambda_pseudo);
        f["loss.recon_reduction"] = enum_field<ReconReduction>(
            [](C& c) -> ReconReduction& { return c.train.recon_reduction; },
            {{ReconReduction::patch_norm, "patch_norm"},
             {ReconReduction::elementwise_mean, "elementwise_mean"}});
        f["loss.recon_target"] = enum_field<ReconTarget>(
            [](C& c) -> ReconTarget& { return c.train.recon_target; },
            {{ReconTarget::normalized, "normalized"}, {ReconTarget::raw, "raw"}});

        f["gate.warmup_epochs"] = int_field(&C::gate, &GateConfig::warmup_epochs);
        f["gate.acc_threshold"] = double_field(&C::gate, &GateConfig::acc_threshold);
        f["gate.patience"] = int_field(&C::gate, &GateConfig::patience);
        f["gate.confidence"] = double_field(&C::gate, &GateConfig::confidence);
        f["gate.val_cap"] = int_field(&C::train, &TrainConfig::val_cap);

        f["split.labeled_fraction"] = double_field(&C::split, &SplitSpec::labeled_fraction);
        f["split.val_fraction"] = double_field(&C::split, &SplitSpec::val_fraction);

        f["optim.lr"] = double_field(&C::optim, &AdamWConfig::lr);
        f["optim.weight_decay"] = double_field(&C::optim, &AdamWConfig::weight_decay);
        f["optim.beta1"] = double_field(&C::optim, &AdamWConfig::beta1);
        f["optim.beta2"] = double_field(&C::optim, &AdamWConfig::beta2);
        f["optim.eps"] = double_field(&C::optim, &AdamWConfig::eps);
        f["optim.schedule"] = enum_field<LrSchedule>(
            [](C& c) -> LrSchedule& { return c.train.schedule; },
            {{LrSchedule::constant, "constant"}, {LrSchedule::cosine, "cosine"}});

        f["train.epochs_pretrain"] = int_field(&C::train, &TrainConfig::epochs_pretrain);
        f["train.epochs_finetune"] = int_field(&C::train, &TrainConfig::epochs_finetune);
        f["train.mask_ratio"] = double_field(&C::train, &TrainConfig::mask_ratio);
        f["train.finetune_lr"] = double_field(&C::train, &TrainConfig::finetune_lr);
        f["train.batch_labeled"] = int_field(&C::train, &TrainConfig::batch_labeled);
        f["train.batch_unlabeled"] = int_field(&C::train, &TrainConfig::batch_unlabeled);
        f["train.checkpoint_every"] = int_field(&C::train, &TrainConfig::checkpoint_every);
        f["train.eval_every"] = int_field(&C::train, &TrainConfig::eval_every);
        f["train.seed"] = {[](const C& c) { return std::to_string(c.train.seed); },
                           [](C& c, const std::string& k, const std::string& v) {
                               c.train.seed = to_u64(k, v);
                           }};
        f["train.sup_augment"] = bool_field(&C::train, &TrainConfig::sup_augment);

        f["aug.crop_pad"] = aug_field(&AugPolicy::crop_pad);
        f["aug.flip_prob"] = aug_field(&AugPolicy::flip_prob);
        f["aug.strong_ops"] = aug_field(&AugPolicy::num_strong_ops);
        f["aug.max_rotate_deg"] = aug_field(&AugPolicy::max_rotate_deg);
        f["aug.max_translate"] = aug_field(&AugPolicy::max_translate);
        f["aug.max_shear_deg"] = aug_field(&AugPolicy::max_shear_deg);
        f["aug.max_jitter"] = aug_field(&AugPolicy::max_jitter);
        f["aug.min_posterize_bits"] = aug_field(&AugPolicy::min_posterize_bits);
        f["aug.erase_prob"] = aug_field(&AugPolicy::erase_prob);

        f["data.name"] = {[](const C& c) { return c.data.name; },
                          [](C& c, const std::string&, const std::string& v) { c.data.name = v; }};
        f["data.kind"] = enum_field<DatasetKind>(
            [](C& c) -> DatasetKind& { return c.data.kind; },
            {{DatasetKind::synthetic, "synthetic"},
             {DatasetKind::cifar_binary, "cifar_binary"},
             {DatasetKind::directory, "directory"}});
        f["data.train_files"] = list_field(&C::data, &DatasetManifest::train_files);
        f["data.test_files"] = list_field(&C::data, &DatasetManifest::test_files);
        f["data.train_sha256"] = list_field(&C::data, &DatasetManifest::train_sha256);
        f["data.test_sha256"] = list_field(&C::data, &DatasetManifest::test_sha256);
        f["data.num_classes"] = int_field(&C::data, &DatasetManifest::num_classes);
        f["data.channels"] = int_field(&C::data, &DatasetManifest::channels);
        f["data.source_size"] = int_field(&C::data, &DatasetManifest::source_size);
        f["data.label_bytes"] = int_field(&C::data, &DatasetManifest::label_bytes);
        f["data.label_byte_index"] = int_field(&C::data, &DatasetManifest::label_byte_index);
        f["data.synthetic_train"] = {
            [](const C& c) { return std::to_string(c.data.synthetic.num_train); },
            [](C& c, const std::string& k, const std::string& v) { c.data.synthetic.num_train = to_int(k, v); }};
        f["data.synthetic_test"] = {
            [](const C& c) { return std::to_string(c.data.synthetic.num_test); },
            [](C& c, const std::string& k, const std::string& v) { c.data.synthetic.num_test = to_int(k, v); }};
        f["data.synthetic_noise"] = {
            [](const C& c) { return fmt_double(c.data.synthetic.noise); },
            [](C& c, const std::string& k, const std::string& v) { c.data.synthetic.noise = to_double(k, v); }};
        f["data.synthetic_seed"] = {
            [](const C& c) { return std::to_string(c.data.synthetic.seed); },
            [](C& c, const std::string& k, const std::string& v) { c.data.synthetic.seed = to_u64(k, v); }};

        f["ablation.recon_off"] = bool_field(&C::ablation, &AblationFlags::recon_off);
        f["ablation.consistency_off"] = bool_field(&C::ablation, &AblationFlags::consistency_off);
        f["ablation.gate_off_from_epoch1"] = bool_field(&C::ablation, &AblationFlags::gate_off_from_epoch1);
        f["ablation.gate_no_val_threshold"] = bool_field(&C::ablation, &AblationFlags::gate_no_val_threshold);
        f["ablation.pseudo_off"] = bool_field(&C::ablation, &AblationFlags::pseudo_off);
        return f;
    }();
    return fields;
}

}  // namespace

RunConfig RunConfig::for_profile(const std::string& profile) {
    RunConfig c;
    c.profile = profile;
    if (profile == "paper") {
        c.network = NetworkConfig::paper();
        c.data.name = "cifar10";
        c.data.kind = DatasetKind::cifar_binary;
        c.data.num_classes = 10;
        c.data.source_size = 32;
    } else if (profile == "toy") {
        c.network = NetworkConfig::toy();
        c.train.epochs_pretrain = 30;
        c.train.epochs_finetune = 10;
        c.optim.lr = 1e-3;
        c.weak.crop_pad = c.strong.crop_pad = 2;
        // 48-dim patches: the per-patch squared norm would outweigh the classification term.
        c.train.recon_reduction = ReconReduction::elementwise_mean;
    } else {
        throw Error("config", "unknown profile '" + profile + "' (expected paper|toy)");
    }
    c.finalize();
    return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto& fields = registry();
    const auto it = fields.find(key);
    if (it == fields.end()) throw Error("config", "unknown config key '" + key + "'");
    it->second.set(*this, key, value);
}

std::string RunConfig::get(const std::string& key) const {
    const auto& fields = registry();
    const auto it = fields.find(key);
    if (it == fields.end()) throw Error("config", "unknown config key '" + key + "'");
    return it->second.get(*this);
}

std::vector<std::string> RunConfig::keys() {
    std::vector<std::string> out;
    for (const auto& [k, f] : registry()) out.push_back(k);
    return out;
}

void RunConfig::finalize() {
    network.num_classes = data.num_classes;
    network.channels = data.channels;
    data.image_size = network.image_size;
    split.seed = derive_seed(train.seed, {0x5b1177});

    network.validate();
    gate.validate();
    split.validate();
    if (loss.lambda_cls < 0 || loss.lambda_pseudo < 0) {
        throw Error("config", "loss weights must be non-negative");
    }
    if (!(train.finetune_lr > 0.0)) throw Error("config", "train.finetune_lr must be positive");
    if (!(train.mask_ratio >= 0.0 && train.mask_ratio < 1.0)) {
        throw Error("config", "train.mask_ratio must lie in [0, 1)");
    }
    if (visible_count(network.num_patches(), train.mask_ratio) < 1) {
        throw Error("config", "train.mask_ratio leaves no visible patch");
    }
    if (train.epochs_pretrain < 0 || train.epochs_finetune < 0) {
        throw Error("config", "epoch counts must be non-negative");
    }
    if (train.batch_labeled < 1 || train.batch_unlabeled < 1) {
        throw Error("config", "batch sizes must be positive");
    }
    if (train.checkpoint_every < 1) throw Error("config", "train.checkpoint_every must be positive");
    if (train.val_cap < 1) throw Error("config", "gate.val_cap must be positive");
    if (optim.lr <= 0 || optim.weight_decay < 0) throw Error("config", "invalid optimizer settings");
    const int gate_flags = ablation.gate_off_from_epoch1 + ablation.gate_no_val_threshold +
                           ablation.pseudo_off;
    if (gate_flags > 1) {
        throw Error("config",
                    "gate_off_from_epoch1, gate_no_val_threshold and pseudo_off are exclusive");
    }
}

std::string RunConfig::canonical() const {
    std::string out;
    for (const auto& [k, f] : registry()) out += k + "=" + f.get(*this) + "\n";
    return out;
}

std::string RunConfig::hash() const { return sha256_hex(canonical()); }

GatePolicy RunConfig::gate_policy() const {
    if (ablation.pseudo_off) return GatePolicy::closed;
    if (ablation.gate_off_from_epoch1) return GatePolicy::open_from_start;
    if (ablation.gate_no_val_threshold) return GatePolicy::open_after_warmup;
    return GatePolicy::dynamic;
}

FilterMode RunConfig::filter_mode() const {
    return ablation.consistency_off ? FilterMode::weak_only : FilterMode::consistency;
}

RunConfig parse_config(const std::string& text, const std::optional<std::string>& profile_override) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::optional<std::string> profile = profile_override;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.erase(hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error("config", "line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key == "profile") {
            if (!profile_override) profile = value;
            continue;
        }
        entries.emplace_back(std::move(key), std::move(value));
    }
    RunConfig c = RunConfig::for_profile(profile.value_or("toy"));
    for (const auto& [k, v] : entries) c.set(k, v);
    c.finalize();
    return c;
}

RunConfig load_config(const std::optional<std::filesystem::path>& file,
                      const std::optional<std::string>& profile_override,
                      const std::map<std::string, std::string>& overrides) {
    std::string text;
    if (file) {
        std::ifstream in(*file);
        if (!in) throw Error("config", "cannot read config " + file->string());
        std::stringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    RunConfig c = parse_config(text, profile_override);
    for (const auto& [k, v] : overrides) c.set(k, v);
    c.finalize();
    return c;
}

}  // namespace ssmae
