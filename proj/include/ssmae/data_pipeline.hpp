#pragma once

#include "ssmae/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ssmae {

enum class DatasetKind { synthetic, cifar_binary, directory };

/// Procedural shape dataset: each class is one shape family drawn at a
/// random position, scale and colour over a noisy background.
struct SyntheticSpec {
    int num_train = 2000;
    int num_test = 1000;
    double noise = 0.35;
    std::uint64_t seed = 1;
};

struct DatasetManifest {
    std::string name = "synthetic";
    DatasetKind kind = DatasetKind::synthetic;
    /// cifar_binary: record files; directory: one index file (`filename,label_id` lines).
    std::vector<std::string> train_files;
    std::vector<std::string> test_files;
    /// Optional SHA-256 hex digests, parallel to the file lists.
    std::vector<std::string> train_sha256;
    std::vector<std::string> test_sha256;
    int num_classes = 4;
    int channels = 3;
    int source_size = 32;   // native side length of CIFAR records
    int image_size = 16;    // network resolution; sources are resized to it
    int label_bytes = 1;    // 2 for CIFAR-100 (coarse, fine)
    int label_byte_index = 0;
    SyntheticSpec synthetic;
};

/// Raw images in [0, 1], stored as floats, HWC per sample.
struct Dataset {
    int num_classes = 0;
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> pixels;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t sample_stride() const {
        return static_cast<std::size_t>(height) * width * channels;
    }
    Image image(std::size_t i) const;
    void add(const Image& image, int label);
};

/// Per-channel standardisation statistics.
struct ChannelStats {
    std::vector<Real> mean;
    std::vector<Real> stddev;

    Image normalize(const Image& raw) const;
    Image denormalize(const Image& normalized) const;
};

ChannelStats compute_stats(const Dataset& data);

struct LoadedData {
    Dataset train;
    Dataset test;
    ChannelStats stats;
};

LoadedData load_dataset(const DatasetManifest& manifest);

Dataset read_cifar_binary(const std::vector<std::string>& files, const DatasetManifest& manifest);
void write_cifar_binary(const std::filesystem::path& file, const Dataset& data);
Dataset read_image_directory(const std::filesystem::path& index_file,
                             const DatasetManifest& manifest);
Dataset generate_synthetic(int count, int num_classes, int size, int channels, double noise,
                           std::uint64_t seed);

Image resize_bilinear(const Image& image, int height, int width);

struct SplitSpec {
    double labeled_fraction = 0.10;
    double val_fraction = 0.10;  // carved from the labeled pool
    std::uint64_t seed = 0;

    void validate() const;
};

struct Splits {
    std::vector<int> labeled;
    std::vector<int> unlabeled;
    std::vector<int> validation;
};

/// Stratified labeled / unlabeled / validation split of `labels`.
Splits split(const std::vector<int>& labels, int num_classes, const SplitSpec& spec);

struct BatchPair {
    std::vector<int> labeled;
    std::vector<int> unlabeled;
};

/// One epoch of paired batches. An epoch is ceil(|unlabeled| / B_u) steps and
/// visits every unlabeled sample once; the labeled stream cycles with a fresh
/// shuffle per pass. Without unlabeled data the epoch is ceil(|labeled| / B_l)
/// labeled-only steps.
class BatchPairStream {
public:
    BatchPairStream(const Splits& splits, int batch_labeled, int batch_unlabeled,
                    std::uint64_t seed);

    std::size_t steps_per_epoch() const { return steps_; }
    std::optional<BatchPair> next();

private:
    std::vector<int> draw_labeled();

    std::vector<int> labeled_;
    std::vector<int> unlabeled_;
    int batch_labeled_;
    int batch_unlabeled_;
    std::size_t steps_ = 0;
    std::size_t step_ = 0;
    std::size_t labeled_pos_ = 0;
    std::mt19937_64 rng_;
};

}  // namespace ssmae
