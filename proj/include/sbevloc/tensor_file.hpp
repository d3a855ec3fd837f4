#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sbevloc/errors.hpp"

namespace sbevloc {

/// Named dense float64 array inside a container file.
struct NamedTensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;

    std::size_t count() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }
};

/// Container layout (all integers little-endian):
///   bytes 0..7   magic (8 chars, NUL padded)
///   bytes 8..11  uint32 format version
///   bytes 12..15 uint32 header length N
///   N bytes      text header, one line per tensor: "name ndim d0 d1 ...\n"
///   payload      float64 data per tensor, header order
inline void write_tensor_file(const std::string& path, const char magic[8],
                              std::uint32_t version, const std::vector<NamedTensor>& tensors) {
    static_assert(std::endian::native == std::endian::little);
    std::ostringstream header;
    for (const NamedTensor& t : tensors) {
        if (t.data.size() != t.count())
            throw ShapeMismatch("tensor " + t.name + " data does not match its shape");
        header << t.name << " " << t.shape.size();
        for (std::size_t d : t.shape) header << " " << d;
        header << "\n";
    }
    std::string h = header.str();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write: " + path);
    out.write(magic, 8);
    std::uint32_t v = version, n = static_cast<std::uint32_t>(h.size());
    out.write(reinterpret_cast<const char*>(&v), 4);
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const NamedTensor& t : tensors)
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!out) throw IoError("write failed: " + path);
}

inline std::vector<NamedTensor> read_tensor_file(const std::string& path, const char magic[8],
                                                 std::uint32_t expect_version) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char m[8];
    in.read(m, 8);
    if (!in || std::memcmp(m, magic, 8) != 0)
        throw ParseError(path + ": bad magic (expected " + std::string(magic, 8) + ")");
    std::uint32_t version = 0, header_len = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&header_len), 4);
    if (!in) throw ParseError(path + ": truncated preamble");
    if (version != expect_version)
        throw ParseError(path + ": unsupported version " + std::to_string(version));
    std::string header(header_len, '\0');
    in.read(header.data(), header_len);
    if (!in) throw ParseError(path + ": truncated header");

    std::vector<NamedTensor> tensors;
    std::istringstream hs(header);
    std::string line;
    while (std::getline(hs, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        NamedTensor t;
        std::size_t ndim = 0;
        if (!(ls >> t.name >> ndim)) throw ParseError(path + ": malformed header line: " + line);
        t.shape.resize(ndim);
        for (std::size_t i = 0; i < ndim; ++i)
            if (!(ls >> t.shape[i])) throw ParseError(path + ": malformed shape in: " + line);
        t.data.resize(t.count());
        tensors.push_back(std::move(t));
    }
    for (NamedTensor& t : tensors) {
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!in) throw TruncatedFile(path + ": payload ends inside tensor " + t.name);
    }
    return tensors;
}

}  // namespace sbevloc
