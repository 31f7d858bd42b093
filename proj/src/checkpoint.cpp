#include "slm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace slm {

static constexpr char kMagic[8] = {'S', 'L', 'M', 'C', 'K', 'P', 'T', '\0'};

static void write_u32(std::ostream & out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char *>(b), 4);
}

static uint32_t read_u32(std::istream & in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char *>(b), 4);
    if (!in) {
        throw std::runtime_error("checkpoint: truncated file");
    }
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

static void write_str(std::ostream & out, const std::string & s) {
    write_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

static std::string read_str(std::istream & in) {
    const uint32_t n = read_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) {
        throw std::runtime_error("checkpoint: truncated file");
    }
    return s;
}

static void write_mat(std::ostream & out, const Mat & m) {
    write_u32(out, static_cast<uint32_t>(m.rows));
    write_u32(out, static_cast<uint32_t>(m.cols));
    out.write(reinterpret_cast<const char *>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(double)));
}

static Mat read_mat(std::istream & in) {
    const int rows = static_cast<int>(read_u32(in));
    const int cols = static_cast<int>(read_u32(in));
    Mat m(rows, cols);
    in.read(reinterpret_cast<char *>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    if (!in) {
        throw std::runtime_error("checkpoint: truncated file");
    }
    return m;
}

void save_container(const std::string & path, const Container & c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("checkpoint: cannot write " + path);
    }
    out.write(kMagic, 8);
    write_u32(out, c.version);
    write_str(out, c.config_text);
    write_u32(out, static_cast<uint32_t>(c.mats.size()));
    for (const auto & [name, m] : c.mats) {
        write_str(out, name);
        write_mat(out, m);
    }
    write_u32(out, static_cast<uint32_t>(c.strings.size()));
    for (const auto & [name, s] : c.strings) {
        write_str(out, name);
        write_str(out, s);
    }
    if (!out) {
        throw std::runtime_error("checkpoint: write failed for " + path);
    }
}

Container load_container(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("checkpoint: cannot open " + path);
    }
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path);
    }
    Container c;
    c.version = read_u32(in);
    if (c.version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: format version " + std::to_string(c.version) +
                                 " is incompatible with supported version " +
                                 std::to_string(kCheckpointVersion));
    }
    c.config_text = read_str(in);
    const uint32_t n_mats = read_u32(in);
    for (uint32_t i = 0; i < n_mats; ++i) {
        std::string name = read_str(in);
        c.mats[name] = read_mat(in);
    }
    const uint32_t n_strs = read_u32(in);
    for (uint32_t i = 0; i < n_strs; ++i) {
        std::string name = read_str(in);
        c.strings[name] = read_str(in);
    }
    return c;
}

void save_named_mats(const std::string & path, const std::map<std::string, Mat> & mats) {
    Container c;
    c.mats = mats;
    save_container(path, c);
}

std::map<std::string, Mat> load_named_mats(const std::string & path) {
    return load_container(path).mats;
}

} // namespace slm
