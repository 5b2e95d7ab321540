#include "ssmae/data_pipeline.hpp"

#include "ssmae/hash.hpp"
#include "ssmae/png_io.hpp"
#include "ssmae/seed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ssmae {

namespace fs = std::filesystem;

Image Dataset::image(std::size_t i) const {
    Image img(height, width, channels);
    const float* src = pixels.data() + i * sample_stride();
    for (std::size_t k = 0; k < img.data.size(); ++k) img.data[k] = src[k];
    return img;
}

void Dataset::add(const Image& image, int label) {
    if (image.height != height || image.width != width || image.channels != channels) {
        throw Error("shape", "image does not match the dataset geometry");
    }
    if (label < 0 || label >= num_classes) {
        std::ostringstream msg;
        msg << "label " << label << " outside [0, " << num_classes << ")";
        throw Error("label", msg.str());
    }
    for (Real v : image.data) pixels.push_back(static_cast<float>(v));
    labels.push_back(label);
}

Image ChannelStats::normalize(const Image& raw) const {
    Image out = raw;
    for (std::size_t k = 0; k < out.data.size(); ++k) {
        const std::size_t c = k % static_cast<std::size_t>(raw.channels);
        out.data[k] = (raw.data[k] - mean[c]) / stddev[c];
    }
    return out;
}

Image ChannelStats::denormalize(const Image& normalized) const {
    Image out = normalized;
    for (std::size_t k = 0; k < out.data.size(); ++k) {
        const std::size_t c = k % static_cast<std::size_t>(normalized.channels);
        out.data[k] = normalized.data[k] * stddev[c] + mean[c];
    }
    return out;
}

ChannelStats compute_stats(const Dataset& data) {
    const auto c = static_cast<std::size_t>(data.channels);
    std::vector<double> sum(c, 0.0), sq(c, 0.0);
    for (std::size_t k = 0; k < data.pixels.size(); ++k) {
        sum[k % c] += data.pixels[k];
        sq[k % c] += static_cast<double>(data.pixels[k]) * data.pixels[k];
    }
    const double count = data.pixels.empty() ? 1.0 : static_cast<double>(data.pixels.size() / c);
    ChannelStats stats;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double mean = sum[ch] / count;
        const double var = std::max(sq[ch] / count - mean * mean, 0.0);
        stats.mean.push_back(mean);
        stats.stddev.push_back(std::max(std::sqrt(var), 1e-6));
    }
    return stats;
}

Image resize_bilinear(const Image& image, int height, int width) {
    if (image.height == height && image.width == width) return image;
    Image out(height, width, image.channels);
    const Real sy = static_cast<Real>(image.height) / height;
    const Real sx = static_cast<Real>(image.width) / width;
    for (int y = 0; y < height; ++y) {
        const Real fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, image.height - 1);
        const Real wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const Real fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, image.width - 1);
            const Real wx = fx - x0;
            for (int c = 0; c < image.channels; ++c) {
                const Real top = image.at(y0, x0, c) * (1 - wx) + image.at(y0, x1, c) * wx;
                const Real bot = image.at(y1, x0, c) * (1 - wx) + image.at(y1, x1, c) * wx;
                out.at(y, x, c) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

namespace {

Dataset empty_like(const DatasetManifest& m) {
    Dataset d;
    d.num_classes = m.num_classes;
    d.height = m.image_size;
    d.width = m.image_size;
    d.channels = m.channels;
    return d;
}

Image from_bitmap(const Bitmap& bmp, int channels) {
    Image img(bmp.height, bmp.width, channels);
    for (int y = 0; y < bmp.height; ++y) {
        for (int x = 0; x < bmp.width; ++x) {
            for (int c = 0; c < channels; ++c) {
                const int src_c = bmp.channels == 1 ? 0 : std::min(c, bmp.channels - 1);
                const auto idx = (static_cast<std::size_t>(y) * bmp.width + x) * bmp.channels + src_c;
                img.at(y, x, c) = bmp.pixels[idx] / 255.0;
            }
        }
    }
    return img;
}

void verify_checksums(const std::vector<std::string>& files, const std::vector<std::string>& sums) {
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (!fs::exists(files[i])) throw Error("io", "missing dataset file " + files[i]);
        if (i < sums.size() && !sums[i].empty() && sha256_file(files[i]) != sums[i]) {
            throw Error("checksum", "checksum mismatch for " + files[i]);
        }
    }
}

// Shape families, indexed by class modulo the list size.
bool inside_shape(int family, Real dx, Real dy, Real r) {
    const Real ax = std::abs(dx), ay = std::abs(dy);
    switch (family % 6) {
        case 0: return (ax <= 0.3 * r && ay <= r) || (ay <= 0.3 * r && ax <= r);  // plus
        case 1:                                                                   // diagonal cross
            return ax <= r && ay <= r && (std::abs(dx - dy) <= 0.4 * r || std::abs(dx + dy) <= 0.4 * r);
        case 2: {                                                                 // ring
            const Real d2 = dx * dx + dy * dy;
            return d2 <= r * r && d2 >= 0.36 * r * r;
        }
        case 3: return dx * dx + dy * dy <= r * r;                                // disk
        case 4: return ax <= 0.8 * r && ay <= 0.8 * r;                            // square
        default: return ay <= 0.85 * r && ax <= 0.5 * (dy + 0.85 * r);           // triangle
    }
}

}  // namespace

Dataset generate_synthetic(int count, int num_classes, int size, int channels, double noise,
                           std::uint64_t seed) {
    Dataset data;
    data.num_classes = num_classes;
    data.height = size;
    data.width = size;
    data.channels = channels;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Real> unit(0.0, 1.0);
    std::normal_distribution<Real> gauss(0.0, noise);
    for (int i = 0; i < count; ++i) {
        const int label = i % num_classes;
        const Real r = size * (0.28 + 0.12 * unit(rng));
        const Real cx = r + (size - 2 * r) * unit(rng);
        const Real cy = r + (size - 2 * r) * unit(rng);
        // Bright figure on a darker ground, so figure and background are never ambiguous.
        std::vector<Real> fg(static_cast<std::size_t>(channels)), bg(fg.size());
        for (std::size_t c = 0; c < fg.size(); ++c) {
            fg[c] = 0.55 + 0.45 * unit(rng);
            bg[c] = 0.45 * unit(rng);
        }
        Image img(size, size, channels);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const bool in = inside_shape(label, x + 0.5 - cx, y + 0.5 - cy, r);
                for (int c = 0; c < channels; ++c) {
                    const Real v = (in ? fg : bg)[static_cast<std::size_t>(c)] + gauss(rng);
                    img.at(y, x, c) = std::clamp(v, Real{0}, Real{1});
                }
            }
        }
        data.add(img, label);
    }
    return data;
}

Dataset read_cifar_binary(const std::vector<std::string>& files, const DatasetManifest& manifest) {
    const int side = manifest.source_size;
    const std::size_t plane = static_cast<std::size_t>(side) * side;
    const std::size_t record = static_cast<std::size_t>(manifest.label_bytes) + plane * manifest.channels;
    Dataset data = empty_like(manifest);
    for (const std::string& file : files) {
        std::ifstream in(file, std::ios::binary);
        if (!in) throw Error("io", "cannot open " + file);
        std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
        if (bytes.size() % record != 0) {
            std::ostringstream msg;
            msg << file << ": size " << bytes.size() << " is not a multiple of the " << record
                << "-byte record";
            throw Error("format", msg.str());
        }
        for (std::size_t off = 0; off < bytes.size(); off += record) {
            const int label = bytes[off + static_cast<std::size_t>(manifest.label_byte_index)];
            if (label >= manifest.num_classes) {
                std::ostringstream msg;
                msg << file << ": label " << label << " at offset " << off << " exceeds "
                    << manifest.num_classes << " classes";
                throw Error("format", msg.str());
            }
            Image img(side, side, manifest.channels);
            const unsigned char* px = bytes.data() + off + manifest.label_bytes;
            for (int c = 0; c < manifest.channels; ++c) {
                for (std::size_t k = 0; k < plane; ++k) {
                    img.at(static_cast<int>(k / side), static_cast<int>(k % side), c) =
                        px[c * plane + k] / 255.0;
                }
            }
            data.add(resize_bilinear(img, manifest.image_size, manifest.image_size), label);
        }
    }
    return data;
}

void write_cifar_binary(const fs::path& file, const Dataset& data) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw Error("io", "cannot write " + file.string());
    const std::size_t plane = static_cast<std::size_t>(data.height) * data.width;
    for (std::size_t i = 0; i < data.size(); ++i) {
        out.put(static_cast<char>(data.labels[i]));
        const float* px = data.pixels.data() + i * data.sample_stride();
        for (int c = 0; c < data.channels; ++c) {
            for (std::size_t k = 0; k < plane; ++k) {
                const float v = px[k * data.channels + c];
                out.put(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
            }
        }
    }
}

Dataset read_image_directory(const fs::path& index_file, const DatasetManifest& manifest) {
    std::ifstream in(index_file);
    if (!in) throw Error("io", "cannot open index " + index_file.string());
    Dataset data = empty_like(manifest);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) {
            throw Error("format", index_file.string() + ":" + std::to_string(line_no) +
                                      ": expected filename,label_id");
        }
        const fs::path image_path = index_file.parent_path() / line.substr(0, comma);
        int label = -1;
        try {
            label = std::stoi(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw Error("format", index_file.string() + ":" + std::to_string(line_no) +
                                      ": bad label id");
        }
        if (!fs::exists(image_path)) throw Error("io", "missing image " + image_path.string());
        const std::string ext = image_path.extension().string();
        const Bitmap bmp = ext == ".png" ? read_png(image_path) : read_pnm(image_path);
        data.add(resize_bilinear(from_bitmap(bmp, manifest.channels), manifest.image_size,
                                 manifest.image_size),
                 label);
    }
    return data;
}

LoadedData load_dataset(const DatasetManifest& manifest) {
    if (manifest.num_classes < 2) throw Error("config", "dataset needs at least two classes");
    LoadedData out;
    switch (manifest.kind) {
        case DatasetKind::synthetic: {
            const SyntheticSpec& s = manifest.synthetic;
            out.train = generate_synthetic(s.num_train, manifest.num_classes, manifest.image_size,
                                           manifest.channels, s.noise, derive_seed(s.seed, {0}));
            out.test = generate_synthetic(s.num_test, manifest.num_classes, manifest.image_size,
                                          manifest.channels, s.noise, derive_seed(s.seed, {1}));
            break;
        }
        case DatasetKind::cifar_binary:
            if (manifest.train_files.empty()) throw Error("config", "no training files given");
            verify_checksums(manifest.train_files, manifest.train_sha256);
            verify_checksums(manifest.test_files, manifest.test_sha256);
            out.train = read_cifar_binary(manifest.train_files, manifest);
            out.test = read_cifar_binary(manifest.test_files, manifest);
            break;
        case DatasetKind::directory:
            if (manifest.train_files.size() != 1) {
                throw Error("config", "directory datasets take exactly one training index file");
            }
            verify_checksums(manifest.train_files, manifest.train_sha256);
            verify_checksums(manifest.test_files, manifest.test_sha256);
            out.train = read_image_directory(manifest.train_files[0], manifest);
            out.test = manifest.test_files.empty() ? empty_like(manifest)
                                                   : read_image_directory(manifest.test_files[0], manifest);
            break;
    }
    if (out.train.size() == 0) throw Error("format", "training set is empty");
    out.stats = compute_stats(out.train);
    return out;
}

void SplitSpec::validate() const {
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
        throw Error("config", "labeled fraction must lie in (0, 1]");
    }
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
        throw Error("config", "validation fraction must lie in [0, 1)");
    }
}

namespace {

// Largest-remainder apportionment of `total` proportional to `weights`.
std::vector<int> apportion(const std::vector<int>& weights, int total) {
    const long sum = std::accumulate(weights.begin(), weights.end(), 0L);
    std::vector<int> out(weights.size(), 0);
    if (sum == 0) return out;
    std::vector<std::pair<long, std::size_t>> rema;
    int assigned = 0;
    for (std::size_t c = 0; c < weights.size(); ++c) {
        const long num = static_cast<long>(weights[c]) * total;
        out[c] = static_cast<int>(num / sum);
        assigned += out[c];
        rema.emplace_back(num % sum, c);
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[rema[k].second];
    return out;
}

}  // namespace

Splits split(const std::vector<int>& labels, int num_classes, const SplitSpec& spec) {
    spec.validate();
    const int n = static_cast<int>(labels.size());
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(num_classes));
    for (int i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= num_classes) throw Error("label", "label outside the class range");
        by_class[static_cast<std::size_t>(y)].push_back(i);
    }
    std::vector<int> class_sizes;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        std::mt19937_64 rng(derive_seed(spec.seed, {c}));
        std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
        class_sizes.push_back(static_cast<int>(by_class[c].size()));
    }
    const int pool_total = static_cast<int>(std::lround(spec.labeled_fraction * n));
    const int val_total = static_cast<int>(std::lround(pool_total * spec.val_fraction));
    const std::vector<int> pool = apportion(class_sizes, pool_total);
    const std::vector<int> val = apportion(pool, val_total);

    Splits s;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (class_sizes[c] > 0 && pool[c] - val[c] <= 0) {
            std::ostringstream msg;
            msg << "class " << c << " has no labeled samples at fraction " << spec.labeled_fraction
                << "; raise the labeled fraction";
            throw Error("split", msg.str());
        }
        const auto& idx = by_class[c];
        s.validation.insert(s.validation.end(), idx.begin(), idx.begin() + val[c]);
        s.labeled.insert(s.labeled.end(), idx.begin() + val[c], idx.begin() + pool[c]);
        s.unlabeled.insert(s.unlabeled.end(), idx.begin() + pool[c], idx.end());
    }
    std::sort(s.labeled.begin(), s.labeled.end());
    std::sort(s.unlabeled.begin(), s.unlabeled.end());
    std::sort(s.validation.begin(), s.validation.end());
    return s;
}

BatchPairStream::BatchPairStream(const Splits& splits, int batch_labeled, int batch_unlabeled,
                                 std::uint64_t seed)
    : labeled_(splits.labeled),
      unlabeled_(splits.unlabeled),
      batch_labeled_(batch_labeled),
      batch_unlabeled_(batch_unlabeled),
      rng_(seed) {
    if (batch_labeled < 1 || batch_unlabeled < 1) throw Error("config", "batch sizes must be positive");
    if (labeled_.empty()) throw Error("split", "no labeled samples");
    if (unlabeled_.empty()) {
        steps_ = (labeled_.size() + batch_labeled - 1) / batch_labeled;
    } else {
        steps_ = (unlabeled_.size() + batch_unlabeled - 1) / batch_unlabeled;
        std::shuffle(unlabeled_.begin(), unlabeled_.end(), rng_);
    }
    std::shuffle(labeled_.begin(), labeled_.end(), rng_);
}

std::vector<int> BatchPairStream::draw_labeled() {
    std::vector<int> batch;
    batch.reserve(static_cast<std::size_t>(batch_labeled_));
    while (batch.size() < static_cast<std::size_t>(batch_labeled_)) {
        if (labeled_pos_ == labeled_.size()) {
            std::shuffle(labeled_.begin(), labeled_.end(), rng_);
            labeled_pos_ = 0;
        }
        batch.push_back(labeled_[labeled_pos_++]);
    }
    return batch;
}

std::optional<BatchPair> BatchPairStream::next() {
    if (step_ == steps_) return std::nullopt;
    BatchPair pair;
    if (unlabeled_.empty()) {
        // Supervised-only epoch: one pass over the labeled set.
        const std::size_t begin = step_ * static_cast<std::size_t>(batch_labeled_);
        const std::size_t end = std::min(begin + batch_labeled_, labeled_.size());
        pair.labeled.assign(labeled_.begin() + static_cast<std::ptrdiff_t>(begin),
                            labeled_.begin() + static_cast<std::ptrdiff_t>(end));
    } else {
        const std::size_t begin = step_ * static_cast<std::size_t>(batch_unlabeled_);
        const std::size_t end = std::min(begin + batch_unlabeled_, unlabeled_.size());
        pair.unlabeled.assign(unlabeled_.begin() + static_cast<std::ptrdiff_t>(begin),
                              unlabeled_.begin() + static_cast<std::ptrdiff_t>(end));
        pair.labeled = draw_labeled();
    }
    ++step_;
    return pair;
}

}  // namespace ssmae
