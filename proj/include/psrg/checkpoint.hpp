#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "losses.hpp"
#include "optim.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace psrg {

namespace detail {

class ByteWriter {
public:
    void u8(uint8_t v) { buf_.push_back(v); }
    void u16(uint16_t v) {
        for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void str(const std::string& s) {
        if (s.size() > 0xffff) throw ContractError("checkpoint: name too long");
        u16(static_cast<uint16_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    void blob(const std::string& s) {
        u64(s.size());
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    std::vector<uint8_t>& bytes() { return buf_; }

private:
    std::vector<uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    uint8_t u8() { return data_[need(1)]; }
    uint16_t u16() {
        const std::size_t o = need(2);
        return static_cast<uint16_t>(data_[o] | (data_[o + 1] << 8));
    }
    uint32_t u32() {
        const std::size_t o = need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[o + i]) << (8 * i);
        return v;
    }
    uint64_t u64() {
        const std::size_t o = need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[o + i]) << (8 * i);
        return v;
    }
    float f32() {
        const uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str() {
        const std::size_t n = u16();
        const std::size_t o = need(n);
        return std::string(reinterpret_cast<const char*>(data_ + o), n);
    }
    std::string blob() {
        const std::size_t n = static_cast<std::size_t>(u64());
        const std::size_t o = need(n);
        return std::string(reinterpret_cast<const char*>(data_ + o), n);
    }
    bool done() const { return pos_ == size_; }

private:
    std::size_t need(std::size_t n) {
        if (pos_ + n > size_) throw DataError("checkpoint: truncated data");
        const std::size_t o = pos_;
        pos_ += n;
        return o;
    }
    const uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

}  // namespace detail

// Container of named float tensors and named u64 scalars plus a free-form
// config text, serialized as "PSRG", a format version, the three sections,
// and a trailing CRC32 of everything before it. Floats are stored as raw
// little-endian bits, so a round trip is bit-exact.
struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    std::string config_text;
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::vector<std::pair<std::string, uint64_t>> scalars;

    void add_tensor(const std::string& name, Tensor t) {
        if (find_tensor(name)) throw ContractError("checkpoint: duplicate tensor " + name);
        tensors.emplace_back(name, std::move(t));
    }

    void add_scalar(const std::string& name, uint64_t v) {
        if (find_scalar(name)) throw ContractError("checkpoint: duplicate scalar " + name);
        scalars.emplace_back(name, v);
    }

    const Tensor* find_tensor(const std::string& name) const {
        for (const auto& [k, v] : tensors)
            if (k == name) return &v;
        return nullptr;
    }

    const uint64_t* find_scalar(const std::string& name) const {
        for (const auto& [k, v] : scalars)
            if (k == name) return &v;
        return nullptr;
    }

    const Tensor& tensor(const std::string& name) const {
        if (const Tensor* t = find_tensor(name)) return *t;
        throw DataError("checkpoint: missing tensor " + name);
    }

    uint64_t scalar(const std::string& name) const {
        if (const uint64_t* v = find_scalar(name)) return *v;
        throw DataError("checkpoint: missing scalar " + name);
    }

    std::vector<uint8_t> serialize() const {
        detail::ByteWriter w;
        w.bytes().insert(w.bytes().end(), {'P', 'S', 'R', 'G'});
        w.u32(kVersion);
        w.blob(config_text);
        w.u64(tensors.size());
        for (const auto& [name, t] : tensors) {
            w.str(name);
            w.u8(static_cast<uint8_t>(t.rank()));
            for (int d = 0; d < t.rank(); ++d) w.u64(static_cast<uint64_t>(t.dim(d)));
            for (int64_t i = 0, n = t.numel(); i < n; ++i) w.f32(t.data()[i]);
        }
        w.u64(scalars.size());
        for (const auto& [name, v] : scalars) {
            w.str(name);
            w.u64(v);
        }
        const uint32_t crc = static_cast<uint32_t>(
            crc32(0L, w.bytes().data(), static_cast<uInt>(w.bytes().size())));
        w.u32(crc);
        return std::move(w.bytes());
    }

    static Checkpoint deserialize(const std::vector<uint8_t>& bytes) {
        if (bytes.size() < 12) throw DataError("checkpoint: file too small");
        const uint32_t stored = static_cast<uint32_t>(bytes[bytes.size() - 4]) |
                                (static_cast<uint32_t>(bytes[bytes.size() - 3]) << 8) |
                                (static_cast<uint32_t>(bytes[bytes.size() - 2]) << 16) |
                                (static_cast<uint32_t>(bytes[bytes.size() - 1]) << 24);
        const uint32_t actual = static_cast<uint32_t>(
            crc32(0L, bytes.data(), static_cast<uInt>(bytes.size() - 4)));
        if (stored != actual) throw DataError("checkpoint: checksum mismatch, file is corrupt");
        detail::ByteReader r(bytes.data(), bytes.size() - 4);
        if (r.u8() != 'P' || r.u8() != 'S' || r.u8() != 'R' || r.u8() != 'G')
            throw DataError("checkpoint: bad magic bytes");
        const uint32_t version = r.u32();
        if (version != kVersion)
            throw DataError("checkpoint: unsupported format version " + std::to_string(version));
        Checkpoint cp;
        cp.config_text = r.blob();
        const uint64_t ntensors = r.u64();
        for (uint64_t i = 0; i < ntensors; ++i) {
            const std::string name = r.str();
            const int rank = r.u8();
            Shape shape;
            for (int d = 0; d < rank; ++d) shape.push_back(static_cast<int64_t>(r.u64()));
            const int64_t n = shape_numel(shape);
            if (n < 0 || n > (int64_t(1) << 33)) throw DataError("checkpoint: absurd tensor size");
            std::vector<float> data(static_cast<std::size_t>(n));
            for (auto& v : data) v = r.f32();
            cp.tensors.emplace_back(name, Tensor(std::move(shape), std::move(data)));
        }
        const uint64_t nscalars = r.u64();
        for (uint64_t i = 0; i < nscalars; ++i) {
            const std::string name = r.str();
            cp.scalars.emplace_back(name, r.u64());
        }
        if (!r.done()) throw DataError("checkpoint: trailing bytes");
        return cp;
    }

    void save(const std::string& path) const {
        const auto bytes = serialize();
        std::FILE* f = std::fopen(path.c_str(), "wb");
        if (!f) throw DataError("cannot write " + path);
        const bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f) == bytes.size();
        std::fclose(f);
        if (!ok) throw DataError("short write to " + path);
    }

    static Checkpoint load(const std::string& path) {
        std::FILE* f = std::fopen(path.c_str(), "rb");
        if (!f) throw DataError("cannot open " + path);
        std::fseek(f, 0, SEEK_END);
        const long size = std::ftell(f);
        std::fseek(f, 0, SEEK_SET);
        std::vector<uint8_t> bytes(static_cast<std::size_t>(size));
        const bool ok = std::fread(bytes.data(), 1, bytes.size(), f) == bytes.size();
        std::fclose(f);
        if (!ok) throw DataError("cannot read " + path);
        return deserialize(bytes);
    }
};

// Parameter/buffer packing. Values are copied, never aliased, so mutating a
// network after packing does not change the checkpoint.

inline void pack_params(Checkpoint& cp, const std::string& prefix, const ParamSet& ps) {
    for (const auto& [name, t] : ps.params) cp.add_tensor(prefix + "/" + name, t.detach());
    for (const auto& [name, t] : ps.buffers) cp.add_tensor(prefix + "/" + name, t.detach());
}

// Restores values into an already-built set; the architecture must match.
inline void unpack_params(const Checkpoint& cp, const std::string& prefix, ParamSet& ps) {
    auto restore = [&](const std::string& name, Tensor& dst) {
        const Tensor& src = cp.tensor(prefix + "/" + name);
        if (src.shape() != dst.shape())
            throw DataError("checkpoint: shape mismatch for " + prefix + "/" + name + ": stored " +
                            shape_str(src.shape()) + " vs built " + shape_str(dst.shape()));
        std::copy(src.data(), src.data() + src.numel(), dst.data());
    };
    for (auto& [name, t] : ps.params) restore(name, t);
    for (auto& [name, t] : ps.buffers) restore(name, t);
}

inline void pack_adam(Checkpoint& cp, const std::string& prefix, const AdamState& st) {
    for (std::size_t i = 0; i < st.m.size(); ++i) {
        const auto n = static_cast<int64_t>(st.m[i].size());
        cp.add_tensor(prefix + "/m" + std::to_string(i), Tensor({n}, st.m[i]));
        cp.add_tensor(prefix + "/v" + std::to_string(i), Tensor({n}, st.v[i]));
    }
    cp.add_scalar(prefix + "/t", static_cast<uint64_t>(st.t));
    cp.add_scalar(prefix + "/count", st.m.size());
}

inline void unpack_adam(const Checkpoint& cp, const std::string& prefix, AdamState& st) {
    const uint64_t count = cp.scalar(prefix + "/count");
    if (count != st.m.size()) throw DataError("checkpoint: optimizer state count mismatch at " + prefix);
    for (std::size_t i = 0; i < st.m.size(); ++i) {
        const Tensor& m = cp.tensor(prefix + "/m" + std::to_string(i));
        const Tensor& v = cp.tensor(prefix + "/v" + std::to_string(i));
        if (m.numel() != static_cast<int64_t>(st.m[i].size()))
            throw DataError("checkpoint: optimizer moment size mismatch at " + prefix);
        std::copy(m.data(), m.data() + m.numel(), st.m[i].data());
        std::copy(v.data(), v.data() + v.numel(), st.v[i].data());
    }
    st.t = static_cast<int64_t>(cp.scalar(prefix + "/t"));
}

inline void pack_rng(Checkpoint& cp, const std::string& prefix, const Rng& rng) {
    const auto s = rng.state();
    for (int i = 0; i < 4; ++i) cp.add_scalar(prefix + "/s" + std::to_string(i), s[static_cast<std::size_t>(i)]);
}

inline void unpack_rng(const Checkpoint& cp, const std::string& prefix, Rng& rng) {
    std::array<uint64_t, 4> s{};
    for (int i = 0; i < 4; ++i) s[static_cast<std::size_t>(i)] = cp.scalar(prefix + "/s" + std::to_string(i));
    rng.set_state(s);
}

// Feature extractors travel in the same container: topology in the config
// text, weights as tensors.
inline void save_feature_extractor(const FeatureExtractor& ex, const std::string& path) {
    Checkpoint cp;
    std::string desc = "kind=feature_extractor\nin_channels=" + std::to_string(ex.input_channels) +
                       "\nsource=" + ex.source + "\nlayers=";
    for (std::size_t i = 0; i < ex.layers.size(); ++i) {
        const auto& l = ex.layers[i];
        if (i) desc += ",";
        desc += std::to_string(l.out_channels) + ":" + std::to_string(l.stride) + ":" +
                std::to_string(l.kernel) + ":" + (l.relu ? "relu" : "linear");
    }
    cp.config_text = desc + "\n";
    pack_params(cp, "extractor", ex.params);
    cp.save(path);
}

inline FeatureExtractor load_feature_extractor(const std::string& path) {
    const Checkpoint cp = Checkpoint::load(path);
    FeatureExtractor ex;
    ex.source = "file:" + path;
    std::string layers_text;
    // Minimal line parser for the config block written by the saver.
    std::size_t pos = 0;
    while (pos < cp.config_text.size()) {
        std::size_t eol = cp.config_text.find('\n', pos);
        if (eol == std::string::npos) eol = cp.config_text.size();
        const std::string line = cp.config_text.substr(pos, eol - pos);
        pos = eol + 1;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "in_channels") ex.input_channels = std::stoi(val);
        else if (key == "layers") layers_text = val;
    }
    if (layers_text.empty()) throw DataError(path + ": not a feature extractor file");
    std::size_t start = 0;
    while (start <= layers_text.size()) {
        std::size_t comma = layers_text.find(',', start);
        if (comma == std::string::npos) comma = layers_text.size();
        const std::string item = layers_text.substr(start, comma - start);
        start = comma + 1;
        if (item.empty()) break;
        FeatureLayer l{};
        int field = 0;
        std::size_t p = 0;
        while (p <= item.size() && field < 4) {
            std::size_t colon = item.find(':', p);
            if (colon == std::string::npos) colon = item.size();
            const std::string tok = item.substr(p, colon - p);
            p = colon + 1;
            switch (field++) {
                case 0: l.out_channels = std::stoi(tok); break;
                case 1: l.stride = std::stoi(tok); break;
                case 2: l.kernel = std::stoi(tok); break;
                case 3: l.relu = tok == "relu"; break;
            }
        }
        ex.layers.push_back(l);
    }
    int64_t cin = ex.input_channels;
    for (std::size_t i = 0; i < ex.layers.size(); ++i) {
        const auto& l = ex.layers[i];
        const std::string p = "conv" + std::to_string(i);
        ex.params.add_param(p + ".w", Tensor({l.out_channels, cin, l.kernel, l.kernel}));
        ex.params.add_param(p + ".b", Tensor({l.out_channels}));
        cin = l.out_channels;
    }
    unpack_params(cp, "extractor", ex.params);
    ex.params.set_trainable(false);
    return ex;
}

}  // namespace psrg
