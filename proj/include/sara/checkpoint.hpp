// checkpoint.hpp - the STC1 named-tensor container.
//
// Layout: magic "STC1"; u32le entry count; per entry a descriptor of
// u16le name length, name bytes, u8 dtype (0 = f32, 1 = f64), u8 ndim and
// ndim u64le dims; then all payloads concatenated in entry order (row-major,
// little-endian); finally u32le meta length plus UTF-8 JSON meta. Entry order
// is insertion order, so equal checkpoints serialize to equal bytes.

#ifndef SARA_CHECKPOINT_HPP
#define SARA_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sara/matrix.hpp"

namespace sara {

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

inline std::size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 8; }

class CheckpointError : public std::runtime_error {
public:
    enum class Kind { bad_magic, truncated, non_finite, unknown_dtype, bad_name, io };

    CheckpointError(Kind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct TensorEntry {
    std::string name;
    Dtype dtype = Dtype::f64;
    std::vector<std::uint64_t> shape;
    std::vector<double> values; // row-major; f32 entries are widened in memory

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (std::uint64_t d : shape) {
            n *= d;
        }
        return n;
    }
};

class Checkpoint {
public:
    std::map<std::string, std::string> meta;

    void put(const std::string& name, Dtype dtype, std::vector<std::uint64_t> shape,
             std::vector<double> values) {
        if (name.empty() || name.size() > 255) {
            throw CheckpointError(CheckpointError::Kind::bad_name,
                                  "checkpoint: tensor name must be 1..255 bytes: '" + name + "'");
        }
        if (index_.count(name)) {
            throw CheckpointError(CheckpointError::Kind::bad_name,
                                  "checkpoint: duplicate tensor name '" + name + "'");
        }
        TensorEntry e{name, dtype, std::move(shape), std::move(values)};
        if (e.element_count() != e.values.size()) {
            throw std::invalid_argument("checkpoint: value count does not match shape for '" +
                                        name + "'");
        }
        index_[name] = entries_.size();
        entries_.push_back(std::move(e));
    }

    void put_matrix(const std::string& name, const Matrix& m) {
        put(name, Dtype::f64, {m.rows(), m.cols()}, m.data());
    }

    void put_vector(const std::string& name, const std::vector<double>& v) {
        put(name, Dtype::f64, {v.size()}, v);
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const TensorEntry& entry(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw std::out_of_range("checkpoint: missing tensor '" + name + "'");
        }
        return entries_[it->second];
    }

    Matrix matrix(const std::string& name) const {
        const TensorEntry& e = entry(name);
        if (e.shape.size() != 2) {
            throw std::invalid_argument("checkpoint: tensor '" + name + "' is not 2-D");
        }
        return Matrix(static_cast<std::size_t>(e.shape[0]), static_cast<std::size_t>(e.shape[1]),
                      e.values);
    }

    std::vector<double> vec(const std::string& name) const {
        const TensorEntry& e = entry(name);
        if (e.shape.size() != 1) {
            throw std::invalid_argument("checkpoint: tensor '" + name + "' is not 1-D");
        }
        return e.values;
    }

    const std::vector<TensorEntry>& entries() const { return entries_; }

    // ------------------------------------------------------------------
    // serialization
    // ------------------------------------------------------------------

    std::vector<std::uint8_t> to_bytes() const {
        std::vector<std::uint8_t> out;
        append_raw(out, "STC1", 4);
        append_u32(out, static_cast<std::uint32_t>(entries_.size()));
        for (const TensorEntry& e : entries_) {
            append_u16(out, static_cast<std::uint16_t>(e.name.size()));
            append_raw(out, e.name.data(), e.name.size());
            out.push_back(static_cast<std::uint8_t>(e.dtype));
            out.push_back(static_cast<std::uint8_t>(e.shape.size()));
            for (std::uint64_t d : e.shape) {
                append_u64(out, d);
            }
        }
        for (const TensorEntry& e : entries_) {
            for (double v : e.values) {
                if (!std::isfinite(v)) {
                    throw CheckpointError(CheckpointError::Kind::non_finite,
                                          "checkpoint: non-finite value in '" + e.name + "'");
                }
                if (e.dtype == Dtype::f32) {
                    append_f32(out, static_cast<float>(v));
                } else {
                    append_f64(out, v);
                }
            }
        }
        std::string meta_json;
        if (!meta.empty()) {
            meta_json = nlohmann::json(meta).dump();
        }
        append_u32(out, static_cast<std::uint32_t>(meta_json.size()));
        append_raw(out, meta_json.data(), meta_json.size());
        return out;
    }

    void write(const std::string& path) const {
        const std::vector<std::uint8_t> bytes = to_bytes();
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) {
            throw CheckpointError(CheckpointError::Kind::io,
                                  "checkpoint: cannot open '" + path + "' for writing");
        }
        f.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
        if (!f) {
            throw CheckpointError(CheckpointError::Kind::io,
                                  "checkpoint: write failed for '" + path + "'");
        }
    }

    static Checkpoint from_bytes(const std::vector<std::uint8_t>& bytes) {
        Reader r{bytes.data(), bytes.size(), 0};
        char magic[4];
        r.read_raw(magic, 4);
        if (std::memcmp(magic, "STC1", 4) != 0) {
            throw CheckpointError(CheckpointError::Kind::bad_magic, "checkpoint: bad magic");
        }
        const std::uint32_t count = r.read_u32();
        Checkpoint cp;
        std::vector<TensorEntry> headers;
        headers.reserve(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            TensorEntry e;
            const std::uint16_t name_len = r.read_u16();
            e.name.resize(name_len);
            r.read_raw(e.name.data(), name_len);
            const std::uint8_t dt = r.read_u8();
            if (dt > 1) {
                throw CheckpointError(CheckpointError::Kind::unknown_dtype,
                                      "checkpoint: unknown dtype " + std::to_string(dt) +
                                          " for '" + e.name + "'");
            }
            e.dtype = static_cast<Dtype>(dt);
            const std::uint8_t ndim = r.read_u8();
            e.shape.resize(ndim);
            for (std::uint8_t d = 0; d < ndim; ++d) {
                e.shape[d] = r.read_u64();
            }
            headers.push_back(std::move(e));
        }
        for (TensorEntry& e : headers) {
            const std::uint64_t n = e.element_count();
            e.values.resize(n);
            for (std::uint64_t i = 0; i < n; ++i) {
                const double v =
                    e.dtype == Dtype::f32 ? static_cast<double>(r.read_f32()) : r.read_f64();
                if (!std::isfinite(v)) {
                    throw CheckpointError(CheckpointError::Kind::non_finite,
                                          "checkpoint: non-finite payload in '" + e.name + "'");
                }
                e.values[i] = v;
            }
            cp.put(e.name, e.dtype, std::move(e.shape), std::move(e.values));
        }
        const std::uint32_t meta_len = r.read_u32();
        if (meta_len > 0) {
            std::string meta_json(meta_len, '\0');
            r.read_raw(meta_json.data(), meta_len);
            const nlohmann::json j = nlohmann::json::parse(meta_json);
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (it.value().is_string()) {
                    cp.meta[it.key()] = it.value().get<std::string>();
                }
            }
        }
        return cp;
    }

    static Checkpoint read(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) {
            throw CheckpointError(CheckpointError::Kind::io,
                                  "checkpoint: cannot open '" + path + "' for reading");
        }
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                        std::istreambuf_iterator<char>());
        return from_bytes(bytes);
    }

private:
    struct Reader {
        const std::uint8_t* data;
        std::size_t size;
        std::size_t pos;

        void need(std::size_t n) const {
            if (pos + n > size) {
                throw CheckpointError(CheckpointError::Kind::truncated,
                                      "checkpoint: truncated file, need " +
                                          std::to_string(pos + n) + " bytes but have " +
                                          std::to_string(size));
            }
        }
        void read_raw(void* dst, std::size_t n) {
            need(n);
            std::memcpy(dst, data + pos, n);
            pos += n;
        }
        std::uint8_t read_u8() {
            need(1);
            return data[pos++];
        }
        std::uint16_t read_u16() {
            std::uint8_t b[2];
            read_raw(b, 2);
            return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
        }
        std::uint32_t read_u32() {
            std::uint8_t b[4];
            read_raw(b, 4);
            return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                   (static_cast<std::uint32_t>(b[2]) << 16) |
                   (static_cast<std::uint32_t>(b[3]) << 24);
        }
        std::uint64_t read_u64() {
            std::uint8_t b[8];
            read_raw(b, 8);
            std::uint64_t v = 0;
            for (int i = 7; i >= 0; --i) {
                v = (v << 8) | b[i];
            }
            return v;
        }
        float read_f32() {
            std::uint32_t bits = read_u32();
            float f;
            std::memcpy(&f, &bits, 4);
            return f;
        }
        double read_f64() {
            std::uint64_t bits = read_u64();
            double d;
            std::memcpy(&d, &bits, 8);
            return d;
        }
    };

    static void append_raw(std::vector<std::uint8_t>& out, const void* src, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(src);
        out.insert(out.end(), p, p + n);
    }
    static void append_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
        out.push_back(static_cast<std::uint8_t>(v & 0xff));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    static void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    static void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    static void append_f32(std::vector<std::uint8_t>& out, float f) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        append_u32(out, bits);
    }
    static void append_f64(std::vector<std::uint8_t>& out, double d) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        append_u64(out, bits);
    }

    std::vector<TensorEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace sara

#endif // SARA_CHECKPOINT_HPP
