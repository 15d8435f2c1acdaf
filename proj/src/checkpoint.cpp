#include "stms/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace stms {

namespace {

static_assert(std::numeric_limits<double>::is_iec559,
              "checkpoint format requires IEEE-754 doubles");

constexpr char kMagic[8] = {'S', 'T', 'M', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
    put_u64(os, std::bit_cast<std::uint64_t>(d));
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw std::runtime_error("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) {
    return std::bit_cast<double>(get_u64(is));
}

std::string get_bytes(std::istream& is, std::uint64_t n) {
    std::string s(n, '\0');
    if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n)))
        throw std::runtime_error("checkpoint: truncated file");
    return s;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);

    os.write(kMagic, 8);
    put_u32(os, kVersion);

    // key=value lines, keys sorted by std::map, so the block is canonical
    std::string cfg;
    for (const auto& [k, v] : ck.config) {
        if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos)
            throw std::invalid_argument("checkpoint: config key contains '=' or newline: " + k);
        if (v.find('\n') != std::string::npos)
            throw std::invalid_argument("checkpoint: config value contains newline for key: " + k);
        cfg += k;
        cfg += '=';
        cfg += v;
        cfg += '\n';
    }
    put_u64(os, cfg.size());
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

    put_u64(os, ck.tensors.size());
    for (const auto& [name, t] : ck.tensors) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t a = 0; a < t.rank(); ++a) put_u64(os, t.dim(a));
        for (std::size_t i = 0; i < t.size(); ++i) put_f64(os, t[i]);
    }
    os.flush();
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);

    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const std::uint32_t version = get_u32(is);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " +
                                 std::to_string(version));

    Checkpoint ck;
    const std::uint64_t cfg_len = get_u64(is);
    const std::string cfg = get_bytes(is, cfg_len);
    std::size_t pos = 0;
    while (pos < cfg.size()) {
        const std::size_t nl = cfg.find('\n', pos);
        if (nl == std::string::npos)
            throw std::runtime_error("checkpoint: unterminated config line");
        const std::string line = cfg.substr(pos, nl - pos);
        pos = nl + 1;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("checkpoint: malformed config line: " + line);
        ck.config[line.substr(0, eq)] = line.substr(eq + 1);
    }

    const std::uint64_t n_tensors = get_u64(is);
    ck.tensors.reserve(n_tensors);
    for (std::uint64_t t = 0; t < n_tensors; ++t) {
        const std::uint32_t name_len = get_u32(is);
        std::string name = get_bytes(is, name_len);
        const std::uint32_t rank = get_u32(is);
        if (rank > 8) throw std::runtime_error("checkpoint: implausible rank");
        std::vector<std::size_t> shape(rank);
        std::size_t total = 1;
        for (std::uint32_t a = 0; a < rank; ++a) {
            shape[a] = static_cast<std::size_t>(get_u64(is));
            total *= shape[a];
        }
        Tensor ten = Tensor::zeros(shape);
        double* d = ten.mut();
        for (std::size_t i = 0; i < total; ++i) d[i] = get_f64(is);
        ck.tensors.emplace_back(std::move(name), std::move(ten));
    }
    return ck;
}

}  // namespace stms
