#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "drlora/errors.hpp"
#include "drlora/matrix.hpp"

namespace drlora {

// Versioned binary tensor container:
//
//   magic "DRLK" | u32 version | u32 section count
//   per section: u32 name_len | name | u8 dtype | u32 ndim | u64 dims[]
//              | u64 byte_len | raw little-endian payload
//   trailer: u64 FNV-1a checksum of everything before it
//
// dtype: 0 = f64, 1 = u8, 2 = u64, 3 = utf-8 blob. Strictly little-endian
// scalar writes; corruption and truncation report the failing byte offset.
class Checkpoint {
public:
    static constexpr char kMagic[4] = {'D', 'R', 'L', 'K'};
    static constexpr std::uint32_t kVersion = 1;

    struct Section {
        std::uint8_t dtype = 0;
        std::vector<std::uint64_t> dims;
        std::vector<std::uint8_t> bytes;
    };

    void put_f64(const std::string& name, const std::vector<double>& values,
                 std::vector<std::uint64_t> dims = {}) {
        Section s;
        s.dtype = 0;
        s.dims = dims.empty() ? std::vector<std::uint64_t>{values.size()} : std::move(dims);
        s.bytes.resize(values.size() * sizeof(double));
        std::memcpy(s.bytes.data(), values.data(), s.bytes.size());
        sections_[name] = std::move(s);
    }

    void put_matrix(const std::string& name, const Matrix& m) {
        put_f64(name, m.data(), {m.rows(), m.cols()});
    }

    void put_u8(const std::string& name, const std::vector<std::uint8_t>& values) {
        Section s;
        s.dtype = 1;
        s.dims = {values.size()};
        s.bytes = values;
        sections_[name] = std::move(s);
    }

    void put_u64(const std::string& name, std::uint64_t value) {
        Section s;
        s.dtype = 2;
        s.dims = {1};
        s.bytes.resize(sizeof(value));
        std::memcpy(s.bytes.data(), &value, sizeof(value));
        sections_[name] = std::move(s);
    }

    void put_text(const std::string& name, const std::string& text) {
        Section s;
        s.dtype = 3;
        s.dims = {text.size()};
        s.bytes.assign(text.begin(), text.end());
        sections_[name] = std::move(s);
    }

    void put_json(const std::string& name, const nlohmann::json& j) {
        put_text(name, j.dump());
    }

    bool has(const std::string& name) const { return sections_.count(name) != 0; }

    std::vector<double> get_f64(const std::string& name) const {
        const Section& s = require(name, 0);
        std::vector<double> out(s.bytes.size() / sizeof(double));
        std::memcpy(out.data(), s.bytes.data(), s.bytes.size());
        return out;
    }

    Matrix get_matrix(const std::string& name) const {
        const Section& s = require(name, 0);
        if (s.dims.size() != 2)
            throw IoError("checkpoint section '" + name + "' is not a matrix");
        Matrix m(static_cast<std::size_t>(s.dims[0]), static_cast<std::size_t>(s.dims[1]));
        if (s.bytes.size() != m.size() * sizeof(double))
            throw IoError("checkpoint section '" + name + "' has inconsistent size");
        std::memcpy(m.data().data(), s.bytes.data(), s.bytes.size());
        return m;
    }

    std::vector<std::uint8_t> get_u8(const std::string& name) const {
        return require(name, 1).bytes;
    }

    std::uint64_t get_u64(const std::string& name) const {
        const Section& s = require(name, 2);
        std::uint64_t v = 0;
        std::memcpy(&v, s.bytes.data(), sizeof(v));
        return v;
    }

    std::string get_text(const std::string& name) const {
        const Section& s = require(name, 3);
        return std::string(s.bytes.begin(), s.bytes.end());
    }

    nlohmann::json get_json(const std::string& name) const {
        try {
            return nlohmann::json::parse(get_text(name));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("checkpoint section '" + name + "': " + e.what());
        }
    }

    void save(const std::string& path) const {
        std::vector<std::uint8_t> buf;
        append(buf, kMagic, 4);
        append_u32(buf, kVersion);
        append_u32(buf, static_cast<std::uint32_t>(sections_.size()));
        for (const auto& [name, s] : sections_) {
            append_u32(buf, static_cast<std::uint32_t>(name.size()));
            append(buf, name.data(), name.size());
            buf.push_back(s.dtype);
            append_u32(buf, static_cast<std::uint32_t>(s.dims.size()));
            for (std::uint64_t d : s.dims) append_u64(buf, d);
            append_u64(buf, s.bytes.size());
            append(buf, s.bytes.data(), s.bytes.size());
        }
        append_u64(buf, fnv1a(buf.data(), buf.size()));
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write checkpoint: " + path);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size()));
        if (!out) throw IoError("short write to checkpoint: " + path);
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open checkpoint: " + path);
        std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>());
        if (buf.size() < 4 + 4 + 4 + 8)
            throw IoError("checkpoint truncated at offset " + std::to_string(buf.size()));
        const std::uint64_t stored_sum = read_u64_at(buf, buf.size() - 8);
        if (fnv1a(buf.data(), buf.size() - 8) != stored_sum)
            throw IoError("checkpoint checksum mismatch at offset " +
                          std::to_string(buf.size() - 8));
        std::size_t off = 0;
        if (std::memcmp(buf.data(), kMagic, 4) != 0)
            throw IoError("checkpoint bad magic at offset 0");
        off += 4;
        const std::uint32_t version = read_u32(buf, off);
        if (version != kVersion)
            throw IoError("checkpoint unsupported version " + std::to_string(version));
        const std::uint32_t count = read_u32(buf, off);
        Checkpoint ck;
        for (std::uint32_t s = 0; s < count; ++s) {
            const std::uint32_t name_len = read_u32(buf, off);
            if (off + name_len > buf.size())
                throw IoError("checkpoint truncated name at offset " + std::to_string(off));
            std::string name(reinterpret_cast<const char*>(buf.data() + off), name_len);
            off += name_len;
            Section sec;
            if (off >= buf.size())
                throw IoError("checkpoint truncated dtype at offset " + std::to_string(off));
            sec.dtype = buf[off++];
            const std::uint32_t ndim = read_u32(buf, off);
            for (std::uint32_t d = 0; d < ndim; ++d) sec.dims.push_back(read_u64(buf, off));
            const std::uint64_t len = read_u64(buf, off);
            if (off + len + 8 > buf.size())
                throw IoError("checkpoint truncated payload of '" + name + "' at offset " +
                              std::to_string(off));
            sec.bytes.assign(buf.begin() + static_cast<std::ptrdiff_t>(off),
                             buf.begin() + static_cast<std::ptrdiff_t>(off + len));
            off += len;
            ck.sections_[name] = std::move(sec);
        }
        return ck;
    }

private:
    const Section& require(const std::string& name, std::uint8_t dtype) const {
        auto it = sections_.find(name);
        if (it == sections_.end()) throw IoError("checkpoint missing section '" + name + "'");
        if (it->second.dtype != dtype)
            throw IoError("checkpoint section '" + name + "' has wrong dtype");
        return it->second;
    }

    static void append(std::vector<std::uint8_t>& buf, const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        buf.insert(buf.end(), p, p + n);
    }
    static void append_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    static void append_u64(std::vector<std::uint8_t>& buf, std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    static std::uint32_t read_u32(const std::vector<std::uint8_t>& buf, std::size_t& off) {
        if (off + 4 > buf.size())
            throw IoError("checkpoint truncated at offset " + std::to_string(off));
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[off + i]) << (8 * i);
        off += 4;
        return v;
    }
    static std::uint64_t read_u64(const std::vector<std::uint8_t>& buf, std::size_t& off) {
        if (off + 8 > buf.size())
            throw IoError("checkpoint truncated at offset " + std::to_string(off));
        const std::uint64_t v = read_u64_at(buf, off);
        off += 8;
        return v;
    }
    static std::uint64_t read_u64_at(const std::vector<std::uint8_t>& buf, std::size_t off) {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[off + i]) << (8 * i);
        return v;
    }
    static std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (std::size_t i = 0; i < n; ++i) {
            h ^= data[i];
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    std::map<std::string, Section> sections_;  // ordered => deterministic bytes
};

}  // namespace drlora
