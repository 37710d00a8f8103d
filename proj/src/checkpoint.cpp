#include "voxrl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "voxrl/errors.hpp"

namespace voxrl {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

struct Reader {
    std::ifstream is;
    std::uint64_t offset = 0;

    explicit Reader(const std::string& path) : is(path, std::ios::binary) {
        if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    }

    void bytes(void* dst, std::size_t n, const char* what) {
        if (!is.read(reinterpret_cast<char*>(dst), std::streamsize(n)))
            throw FormatError(std::string("truncated while reading ") + what, offset);
        offset += n;
    }

    std::uint32_t u32(const char* what) {
        unsigned char b[4];
        bytes(b, 4, what);
        return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
               (std::uint32_t(b[3]) << 24);
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const char magic[4],
                     const std::vector<std::pair<std::string, const nn::Tensor*>>& groups) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(magic, 4);
    put_u32(os, kCheckpointVersion);
    put_u32(os, std::uint32_t(groups.size()));
    static_assert(sizeof(float) == 4);
    for (const auto& [name, tensor] : groups) {
        put_u32(os, std::uint32_t(name.size()));
        os.write(name.data(), std::streamsize(name.size()));
        put_u32(os, std::uint32_t(tensor->shape.size()));
        for (int d : tensor->shape) put_u32(os, std::uint32_t(d));
        os.write(reinterpret_cast<const char*>(tensor->data.data()),
                 std::streamsize(tensor->data.size() * 4));
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

void load_checkpoint(const std::string& path, const char magic[4],
                     const std::vector<std::pair<std::string, nn::Tensor*>>& groups) {
    Reader r(path);
    char m[4];
    r.bytes(m, 4, "magic");
    if (std::memcmp(m, magic, 4) != 0)
        throw FormatError("bad checkpoint magic '" + std::string(m, 4) + "', expected '" +
                              std::string(magic, 4) + "'",
                          0);
    const auto version = r.u32("version");
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
    const auto count = r.u32("group count");
    if (count != groups.size())
        throw FormatError("checkpoint has " + std::to_string(count) + " groups, expected " +
                              std::to_string(groups.size()),
                          8);

    for (const auto& [name, tensor] : groups) {
        const auto name_off = r.offset;
        const auto name_len = r.u32("name length");
        if (name_len > 4096) throw FormatError("implausible group name length", name_off);
        std::string got(name_len, '\0');
        r.bytes(got.data(), name_len, "group name");
        if (got != name)
            throw FormatError("group '" + got + "' where '" + name + "' was expected",
                              name_off);
        const auto rank = r.u32("rank");
        if (rank != tensor->shape.size())
            throw FormatError("group '" + name + "' rank mismatch", name_off);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = int(r.u32("dim"));
        if (shape != tensor->shape)
            throw FormatError("group '" + name + "' shape mismatch", name_off);
        r.bytes(tensor->data.data(), tensor->data.size() * 4, "tensor data");
    }
}

}  // namespace voxrl
