#include "structrep/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "structrep/error.hpp"
#include "structrep/io.hpp"

namespace structrep {

namespace {

constexpr char kMagic[8] = {'S', 'R', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::uint32_t kHasHead = 1u;
constexpr std::uint32_t kHasMeta = 2u;
constexpr std::uint32_t kHasInitialLosses = 4u;

class Writer {
public:
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        out_ += s;
    }
    void matrix(const Matrix& m) {
        u64(m.rows());
        u64(m.cols());
        for (double v : m.values()) f64(v);
    }
    void raw(const char* p, std::size_t n) { out_.append(p, n); }
    std::string take() { return std::move(out_); }

private:
    void put(std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i, v >>= 8) out_.push_back(static_cast<char>(v & 0xFF));
    }
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s(in_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    Matrix matrix() {
        const std::uint64_t rows = u64();
        const std::uint64_t cols = u64();
        if (cols != 0 && rows > (in_.size() - pos_) / 8 / cols) throw InputError("checkpoint truncated");
        Matrix m(rows, cols);
        for (auto& v : m.values()) v = f64();
        return m;
    }
    std::string_view raw(std::size_t n) {
        need(n);
        auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::uint64_t n) const {
        if (n > in_.size() - pos_) throw InputError("checkpoint truncated");
    }
    std::uint64_t get(int bytes) {
        need(static_cast<std::uint64_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(bytes);
        return v;
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    std::uint32_t flags = 0;
    if (c.head) flags |= kHasHead;
    if (c.meta) flags |= kHasMeta;
    if (c.meta && c.meta->initial_losses) flags |= kHasInitialLosses;
    w.u32(flags);
    w.i32(c.fold_id);
    w.f64(c.adapter.scale);
    w.matrix(c.adapter.down);
    w.matrix(c.adapter.up);
    if (c.head) {
        w.u64(c.head->categories.size());
        for (const auto& name : c.head->categories) w.str(name);
        w.matrix(c.head->weight);
        w.u64(c.head->bias.size());
        for (double v : c.head->bias) w.f64(v);
    }
    if (c.meta) {
        for (double v : c.meta->rho) w.f64(v);
        if (c.meta->initial_losses) {
            w.f64((*c.meta->initial_losses)[0]);
            w.f64((*c.meta->initial_losses)[1]);
        }
        w.f64(c.meta->gamma);
        w.f64(c.meta->beta);
        w.f64(c.meta->eta_meta);
        w.f64(c.meta->epsilon);
    }
    return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    Reader r(bytes);
    if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw InputError("checkpoint version mismatch: bad header");
    }
    r.raw(sizeof kMagic);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw InputError("checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                         std::to_string(kCheckpointVersion));
    }
    const std::uint32_t flags = r.u32();
    if ((flags & ~(kHasHead | kHasMeta | kHasInitialLosses)) != 0) throw InputError("checkpoint has unknown sections");

    Checkpoint c;
    c.fold_id = r.i32();
    c.adapter.scale = r.f64();
    c.adapter.down = r.matrix();
    c.adapter.up = r.matrix();
    if (c.adapter.up.rows() != c.adapter.down.cols() || c.adapter.up.cols() != c.adapter.down.rows()) {
        throw InputError("checkpoint dimension mismatch: inconsistent adapter blocks");
    }
    if (flags & kHasHead) {
        TaskHead head;
        const std::uint64_t n = r.u64();
        if (n > bytes.size()) throw InputError("checkpoint truncated");
        for (std::uint64_t i = 0; i < n; ++i) head.categories.push_back(r.str());
        head.weight = r.matrix();
        const std::uint64_t nb = r.u64();
        if (nb > bytes.size()) throw InputError("checkpoint truncated");
        head.bias.resize(nb);
        for (auto& v : head.bias) v = r.f64();
        if (head.weight.rows() != head.categories.size() * kActionLevels || head.bias.size() != head.weight.rows() ||
            head.weight.cols() != c.adapter.dim()) {
            throw InputError("checkpoint dimension mismatch: task head");
        }
        c.head = std::move(head);
    }
    if (flags & kHasMeta) {
        MetaState m;
        for (auto& v : m.rho) v = r.f64();
        if (flags & kHasInitialLosses) {
            const double a = r.f64();
            const double b = r.f64();
            m.initial_losses = LossPair{a, b};
        }
        m.gamma = r.f64();
        m.beta = r.f64();
        m.eta_meta = r.f64();
        m.epsilon = r.f64();
        c.meta = m;
    }
    if (!r.done()) throw InputError("checkpoint has trailing bytes");
    return c;
}

void checkpoint_save(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    write_text_file(path, encode_checkpoint(checkpoint));
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
    try {
        return decode_checkpoint(read_text_file(path));
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

Checkpoint checkpoint_load(const std::filesystem::path& path, std::size_t dim, std::size_t rank) {
    Checkpoint c = checkpoint_load(path);
    if (c.adapter.dim() != dim || c.adapter.rank() != rank) {
        throw InputError(path.string() + ": checkpoint dimension mismatch: stored d=" + std::to_string(c.adapter.dim()) +
                         " r=" + std::to_string(c.adapter.rank()) + ", expected d=" + std::to_string(dim) +
                         " r=" + std::to_string(rank));
    }
    return c;
}

}  // namespace structrep
