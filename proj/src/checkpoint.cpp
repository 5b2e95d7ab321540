#include "ssmae/checkpoint.hpp"

#include "ssmae/hash.hpp"
#include "ssmae/run_config.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace ssmae {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'M', 'A', 'E', 'C', 'K', '\0'};

class Writer {
public:
    template <class T>
    void pod(const T& v) {
        buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void str(const std::string& s) {
        pod(static_cast<std::uint64_t>(s.size()));
        buf_ += s;
    }
    void matrix(const Matrix& m) {
        pod(static_cast<std::int64_t>(m.rows()));
        pod(static_cast<std::int64_t>(m.cols()));
        buf_.append(reinterpret_cast<const char*>(m.data()),
                    static_cast<std::size_t>(m.size()) * sizeof(Real));
    }
    std::string& bytes() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& bytes, std::string source) : buf_(bytes), source_(std::move(source)) {}

    template <class T>
    T pod() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint64_t>();
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    Matrix matrix() {
        const auto rows = pod<std::int64_t>();
        const auto cols = pod<std::int64_t>();
        if (rows < 0 || cols < 0) fail("negative tensor shape");
        const auto bytes = static_cast<std::size_t>(rows * cols) * sizeof(Real);
        need(bytes);
        Matrix m(rows, cols);
        std::memcpy(m.data(), buf_.data() + pos_, bytes);
        pos_ += bytes;
        return m;
    }
    [[noreturn]] void fail(const std::string& what) const {
        throw Error("checkpoint", source_ + ": " + what);
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) fail("truncated checkpoint");
    }
    const std::string& buf_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt) {
    Writer w;
    w.bytes().append(kMagic, sizeof kMagic);
    w.pod(Checkpoint::kVersion);
    w.str(ckpt.config_hash);
    w.str(ckpt.config_text);
    w.str(ckpt.stage);
    w.pod(static_cast<std::int32_t>(ckpt.epoch));
    w.pod(static_cast<std::int32_t>(ckpt.gate.epoch));
    w.pod(static_cast<std::uint8_t>(ckpt.gate.open));
    w.pod(static_cast<std::int32_t>(ckpt.gate.below_count));
    w.pod(static_cast<std::uint8_t>(ckpt.gate.last_val_conf_acc.has_value()));
    w.pod(ckpt.gate.last_val_conf_acc.value_or(0.0));
    w.pod(ckpt.best_val_acc);
    w.str(ckpt.rng_state);

    std::uint32_t count = 0;
    ckpt.params.visit([&](const std::string&, ParamGroup, const Matrix&) { ++count; });
    w.pod(count);
    ckpt.params.visit([&](const std::string& name, ParamGroup, const Matrix& m) {
        w.str(name);
        w.matrix(m);
    });
    w.pod(ckpt.optimizer_steps);
    w.pod(static_cast<std::uint32_t>(ckpt.optimizer_m.size()));
    for (std::size_t i = 0; i < ckpt.optimizer_m.size(); ++i) {
        w.matrix(ckpt.optimizer_m[i]);
        w.matrix(ckpt.optimizer_v[i]);
    }
    const std::string digest = sha256_hex(w.bytes());
    w.str(digest);

    const std::filesystem::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("io", "cannot write " + tmp.string());
        out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
        if (!out) throw Error("io", "failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, file);
}

Checkpoint load_checkpoint(const std::filesystem::path& file,
                           const std::optional<std::string>& expected_hash) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("io", "cannot open checkpoint " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();

    Reader r(bytes, file.string());
    if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        r.fail("not a checkpoint file");
    }
    for (std::size_t i = 0; i < sizeof kMagic; ++i) r.pod<char>();
    const auto version = r.pod<std::uint32_t>();
    if (version != Checkpoint::kVersion) {
        r.fail("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint c;
    c.config_hash = r.str();
    c.config_text = r.str();
    c.stage = r.str();
    c.epoch = r.pod<std::int32_t>();
    c.gate.epoch = r.pod<std::int32_t>();
    c.gate.open = r.pod<std::uint8_t>() != 0;
    c.gate.below_count = r.pod<std::int32_t>();
    const bool has_last = r.pod<std::uint8_t>() != 0;
    const double last = r.pod<double>();
    if (has_last) c.gate.last_val_conf_acc = last;
    c.best_val_acc = r.pod<double>();
    c.rng_state = r.str();

    const RunConfig config = parse_config(c.config_text);
    if (config.hash() != c.config_hash) r.fail("embedded config does not match its hash");
    c.params = NetworkParams::init(config.network, 0);
    const auto count = r.pod<std::uint32_t>();
    std::uint32_t seen = 0;
    c.params.visit([&](const std::string& name, ParamGroup, Matrix& m) {
        if (seen++ >= count) r.fail("missing tensor " + name);
        const std::string stored = r.str();
        if (stored != name) r.fail("expected tensor " + name + ", found " + stored);
        Matrix value = r.matrix();
        if (value.rows() != m.rows() || value.cols() != m.cols()) r.fail("shape mismatch for " + name);
        m = std::move(value);
    });
    if (seen != count) r.fail("unexpected tensor count");
    c.optimizer_steps = r.pod<std::int64_t>();
    const auto moments = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < moments; ++i) {
        c.optimizer_m.push_back(r.matrix());
        c.optimizer_v.push_back(r.matrix());
    }
    const std::string digest = r.str();
    const std::size_t payload_end = bytes.size() - sizeof(std::uint64_t) - digest.size();
    if (digest != sha256_hex(std::string_view(bytes).substr(0, payload_end))) {
        r.fail("integrity check failed");
    }
    if (expected_hash && *expected_hash != c.config_hash) {
        throw Error("config_hash", file.string() + ": config hash " + c.config_hash.substr(0, 12) +
                                       " does not match the current config " +
                                       expected_hash->substr(0, 12));
    }
    return c;
}

}  // namespace ssmae
