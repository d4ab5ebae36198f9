#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "shira/adapter.hpp"
#include "shira/error.hpp"
#include "shira/mask.hpp"
#include "shira/model.hpp"

namespace shira {

// ============================================================================
// Byte-level helpers (everything on disk is little-endian)
// ============================================================================

namespace detail {

class ByteWriter {
  public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) {
            buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        }
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        }
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        }
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void bytes(const char *p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }

    void save(const std::string &path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open for writing: " + path);
        }
        out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if (!out) {
            throw IoError("write failed: " + path);
        }
    }

    std::size_t size() const { return buf_.size(); }

  private:
    std::vector<char> buf_;
};

class ByteReader {
  public:
    explicit ByteReader(std::vector<char> data) : buf_(std::move(data)) {}

    static ByteReader from_file(const std::string &path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw IoError("cannot open for reading: " + path);
        }
        std::vector<char> data((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
        return ByteReader(std::move(data));
    }

    std::uint8_t u8(const char *field) {
        need(1, field);
        return static_cast<std::uint8_t>(buf_[pos_++]);
    }
    std::uint16_t u16(const char *field) {
        need(2, field);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) {
            v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf_[pos_++])) << (8 * i);
        }
        return v;
    }
    std::uint32_t u32(const char *field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf_[pos_++])) << (8 * i);
        }
        return v;
    }
    std::uint64_t u64(const char *field) {
        need(8, field);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf_[pos_++])) << (8 * i);
        }
        return v;
    }
    float f32(const char *field) {
        std::uint32_t bits = u32(field);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64(const char *field) {
        std::uint64_t bits = u64(field);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(std::size_t n, const char *field) {
        need(n, field);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    bool exhausted() const { return pos_ == buf_.size(); }

  private:
    void need(std::size_t n, const char *field) {
        if (pos_ + n > buf_.size()) {
            throw FormatError(std::string("truncated file while reading ") + field);
        }
    }
    std::vector<char> buf_;
    std::size_t pos_ = 0;
};

} // namespace detail

// ============================================================================
// SHRA adapter/mask container
//
// magic "SHRA" | version u16 | tensor count u32
// per tensor: name len u16 | name | rows u32 | cols u32 | nnz u64
//             | nnz x u64 indices (strictly ascending) | nnz x f32 values
// Bit 15 of the version marks the index-only variant (masks): values omitted.
// ============================================================================

inline constexpr std::uint16_t kShraVersion = 1;
inline constexpr std::uint16_t kShraIndexOnlyFlag = 0x8000;

struct ShraFile {
    bool index_only = false;
    std::vector<SparseAdapter> tensors; // values empty when index_only
};

inline void save_shra(const std::string &path, const ShraFile &file) {
    detail::ByteWriter w;
    w.bytes("SHRA", 4);
    w.u16(static_cast<std::uint16_t>(kShraVersion | (file.index_only ? kShraIndexOnlyFlag : 0)));
    w.u32(static_cast<std::uint32_t>(file.tensors.size()));
    for (const SparseAdapter &a : file.tensors) {
        if (file.index_only) {
            const std::uint64_t total = static_cast<std::uint64_t>(a.rows) * a.cols;
            for (std::size_t i = 0; i < a.indices.size(); ++i) {
                if (a.indices[i] >= total || (i > 0 && a.indices[i] <= a.indices[i - 1])) {
                    throw ParameterError("save_shra: bad index list for '" + a.name + "'");
                }
            }
        } else {
            a.validate();
        }
        w.u16(static_cast<std::uint16_t>(a.name.size()));
        w.bytes(a.name.data(), a.name.size());
        w.u32(static_cast<std::uint32_t>(a.rows));
        w.u32(static_cast<std::uint32_t>(a.cols));
        w.u64(a.indices.size());
        for (std::uint64_t idx : a.indices) {
            w.u64(idx);
        }
        if (!file.index_only) {
            for (double v : a.values) {
                w.f32(static_cast<float>(v));
            }
        }
    }
    w.save(path);
}

inline ShraFile load_shra(const std::string &path) {
    detail::ByteReader r = detail::ByteReader::from_file(path);
    if (r.str(4, "magic") != "SHRA") {
        throw FormatError("bad magic (expected SHRA)");
    }
    const std::uint16_t ver = r.u16("version");
    ShraFile file;
    file.index_only = (ver & kShraIndexOnlyFlag) != 0;
    if ((ver & ~kShraIndexOnlyFlag) != kShraVersion) {
        throw FormatError("unsupported version " + std::to_string(ver & ~kShraIndexOnlyFlag));
    }
    const std::uint32_t count = r.u32("tensor count");
    for (std::uint32_t t = 0; t < count; ++t) {
        SparseAdapter a;
        const std::uint16_t name_len = r.u16("name length");
        a.name = r.str(name_len, "name");
        a.rows = r.u32("rows");
        a.cols = r.u32("cols");
        if (a.rows == 0 || a.cols == 0) {
            throw FormatError("zero dimension in tensor header");
        }
        const std::uint64_t count_nnz = r.u64("nnz");
        const std::uint64_t total = static_cast<std::uint64_t>(a.rows) * a.cols;
        a.indices.resize(count_nnz);
        for (std::uint64_t k = 0; k < count_nnz; ++k) {
            a.indices[k] = r.u64("indices");
            if (a.indices[k] >= total) {
                throw FormatError("index out of range in indices");
            }
            if (k > 0 && a.indices[k] <= a.indices[k - 1]) {
                throw FormatError("indices not strictly increasing");
            }
        }
        if (!file.index_only) {
            a.values.resize(count_nnz);
            for (std::uint64_t k = 0; k < count_nnz; ++k) {
                a.values[k] = static_cast<double>(r.f32("values"));
            }
        }
        file.tensors.push_back(std::move(a));
    }
    if (!r.exhausted()) {
        throw FormatError("trailing bytes after last tensor");
    }
    return file;
}

inline void save_adapter(const std::string &path, const SparseAdapter &a) {
    ShraFile f;
    f.tensors.push_back(a);
    save_shra(path, f);
}

inline SparseAdapter load_adapter(const std::string &path) {
    ShraFile f = load_shra(path);
    if (f.index_only) {
        throw FormatError("expected adapter values but file is index-only");
    }
    if (f.tensors.size() != 1) {
        throw FormatError("expected a single tensor, found " + std::to_string(f.tensors.size()));
    }
    return std::move(f.tensors.front());
}

inline void save_mask(const std::string &path, const Mask &m, const std::string &name) {
    ShraFile f;
    f.index_only = true;
    SparseAdapter a;
    a.name = name;
    a.rows = m.rows;
    a.cols = m.cols;
    a.indices = m.to_indices();
    f.tensors.push_back(std::move(a));
    save_shra(path, f);
}

struct NamedMask {
    std::string name;
    Mask mask;
};

inline NamedMask load_mask(const std::string &path) {
    ShraFile f = load_shra(path);
    if (f.tensors.size() != 1) {
        throw FormatError("expected a single tensor, found " + std::to_string(f.tensors.size()));
    }
    const SparseAdapter &a = f.tensors.front();
    return {a.name, Mask::from_indices(a.rows, a.cols, a.indices)};
}

// ============================================================================
// Model checkpoints ("SHMD") and LoRA factor files ("SHLF")
// ============================================================================

inline void save_model(const std::string &path, const ToyModel &m) {
    require_consistent(m);
    detail::ByteWriter w;
    w.bytes("SHMD", 4);
    w.u16(1);
    w.u32(static_cast<std::uint32_t>(m.in_dim()));
    w.u32(static_cast<std::uint32_t>(m.hidden_dim()));
    w.u32(static_cast<std::uint32_t>(m.out_dim()));
    for (double v : m.w1.data) {
        w.f64(v);
    }
    for (double v : m.b1) {
        w.f64(v);
    }
    for (double v : m.w2.data) {
        w.f64(v);
    }
    for (double v : m.b2) {
        w.f64(v);
    }
    w.save(path);
}

inline ToyModel load_model(const std::string &path) {
    detail::ByteReader r = detail::ByteReader::from_file(path);
    if (r.str(4, "magic") != "SHMD") {
        throw FormatError("bad magic (expected SHMD)");
    }
    if (r.u16("version") != 1) {
        throw FormatError("unsupported checkpoint version");
    }
    const std::uint32_t in = r.u32("in dim");
    const std::uint32_t hidden = r.u32("hidden dim");
    const std::uint32_t out = r.u32("out dim");
    if (in == 0 || hidden == 0 || out == 0) {
        throw FormatError("zero dimension in checkpoint header");
    }
    ToyModel m;
    m.w1 = DenseMatrix(hidden, in);
    for (double &v : m.w1.data) {
        v = r.f64("W1 data");
    }
    m.b1.resize(hidden);
    for (double &v : m.b1) {
        v = r.f64("b1 data");
    }
    m.w2 = DenseMatrix(out, hidden);
    for (double &v : m.w2.data) {
        v = r.f64("W2 data");
    }
    m.b2.resize(out);
    for (double &v : m.b2) {
        v = r.f64("b2 data");
    }
    if (!r.exhausted()) {
        throw FormatError("trailing bytes after checkpoint payload");
    }
    return m;
}

inline void save_lora(const std::string &path, const LoraAdapter &ad) {
    detail::ByteWriter w;
    w.bytes("SHLF", 4);
    w.u16(1);
    w.u16(static_cast<std::uint16_t>(ad.target.size()));
    w.bytes(ad.target.data(), ad.target.size());
    w.u32(static_cast<std::uint32_t>(ad.a.rows));
    w.u32(static_cast<std::uint32_t>(ad.r));
    w.u32(static_cast<std::uint32_t>(ad.b.cols));
    w.f64(ad.alpha);
    w.u8(static_cast<std::uint8_t>(ad.rule));
    for (double v : ad.a.data) {
        w.f64(v);
    }
    for (double v : ad.b.data) {
        w.f64(v);
    }
    w.save(path);
}

inline LoraAdapter load_lora(const std::string &path) {
    detail::ByteReader r = detail::ByteReader::from_file(path);
    if (r.str(4, "magic") != "SHLF") {
        throw FormatError("bad magic (expected SHLF)");
    }
    if (r.u16("version") != 1) {
        throw FormatError("unsupported LoRA file version");
    }
    LoraAdapter ad;
    const std::uint16_t name_len = r.u16("target length");
    ad.target = r.str(name_len, "target");
    const std::uint32_t n = r.u32("n");
    const std::uint32_t rank = r.u32("rank");
    const std::uint32_t m = r.u32("m");
    if (n == 0 || rank == 0 || m == 0) {
        throw FormatError("zero dimension in LoRA header");
    }
    ad.alpha = r.f64("alpha");
    const std::uint8_t rule = r.u8("scaling rule");
    if (rule > 2) {
        throw FormatError("unknown scaling rule tag");
    }
    ad.rule = static_cast<ScalingRule>(rule);
    ad.r = rank;
    ad.a = DenseMatrix(n, rank);
    for (double &v : ad.a.data) {
        v = r.f64("A data");
    }
    ad.b = DenseMatrix(rank, m);
    for (double &v : ad.b.data) {
        v = r.f64("B data");
    }
    if (!r.exhausted()) {
        throw FormatError("trailing bytes after LoRA payload");
    }
    return ad;
}

} // namespace shira
