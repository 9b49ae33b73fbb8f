#include "adlab/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace adlab {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'L', 'B', 'P', 'A', 'R', '1'};

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

void save_params(const ParamSet& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write parameter file: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_pod<uint32_t>(out, static_cast<uint32_t>(params.size()));
    for (const auto& [name, p] : params) {
        write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<uint64_t>(out, p.value.rows());
        write_pod<uint64_t>(out, p.value.cols());
    }
    for (const auto& [name, p] : params)
        out.write(reinterpret_cast<const char*>(p.value.data()),
                  static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    if (!out) throw DataError("short write to parameter file: " + path);
}

void load_params(ParamSet& params, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open parameter file: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("bad parameter file header: " + path);
    auto count = read_pod<uint32_t>(in);
    if (count != params.size())
        throw DataError("parameter count mismatch in " + path);
    struct Entry {
        std::string name;
        uint64_t rows, cols;
    };
    std::vector<Entry> entries(count);
    for (auto& e : entries) {
        auto len = read_pod<uint32_t>(in);
        e.name.resize(len);
        in.read(e.name.data(), len);
        e.rows = read_pod<uint64_t>(in);
        e.cols = read_pod<uint64_t>(in);
    }
    for (const auto& e : entries) {
        Param& p = params.at(e.name);
        if (p.value.rows() != e.rows || p.value.cols() != e.cols)
            throw DataError("shape mismatch for " + e.name + " in " + path);
        in.read(reinterpret_cast<char*>(p.value.data()),
                static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    }
    if (!in) throw DataError("truncated parameter file: " + path);
}

}  // namespace adlab
