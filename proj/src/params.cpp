#include "sfnet/params.hpp"

#include <cstring>
#include <fstream>

namespace sfnet {

Tensor& ParamStore::at(const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) throw InputError("ParamStore: no entry named " + name);
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw InputError("ParamStore: no entry named " + name);
    return it->second;
}

bool ParamStore::is_running_stat(const std::string& name) {
    return name.ends_with(".running_mean") || name.ends_with(".running_var");
}

bool ParamStore::is_affine_or_bias(const std::string& name) {
    return name.ends_with(".scale") || name.ends_with(".shift") || name.ends_with(".bias");
}

int64_t ParamStore::learnable_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : entries)
        if (!is_running_stat(name)) n += t.count();
    return n;
}

namespace {

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));  // little-endian host
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("checkpoint: truncated file");
    return v;
}

constexpr char kMagic[4] = {'S', 'F', 'C', 'K'};
constexpr uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    put<uint32_t>(os, kVersion);
    put<uint32_t>(os, static_cast<uint32_t>(store.entries.size()));
    for (const auto& [name, t] : store.entries) {  // map order: canonical
        put<uint32_t>(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        const Shape& s = t.shape();
        const uint64_t extents[5] = {static_cast<uint64_t>(s.n), static_cast<uint64_t>(s.c),
                                     static_cast<uint64_t>(s.t), static_cast<uint64_t>(s.h),
                                     static_cast<uint64_t>(s.w)};
        put<uint32_t>(os, 5);
        for (uint64_t e : extents) put<uint64_t>(os, e);
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(sizeof(double) * t.count()));
    }
    if (!os) throw IoError("checkpoint: write failed for " + path);
}

ParamStore load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("checkpoint: bad magic in " + path);
    const uint32_t version = get<uint32_t>(is);
    if (version != kVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version));
    const uint32_t count = get<uint32_t>(is);
    ParamStore store;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = get<uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const uint32_t rank = get<uint32_t>(is);
        if (rank != 5) throw IoError("checkpoint: unexpected rank " + std::to_string(rank));
        int64_t e[5];
        for (int k = 0; k < 5; ++k) e[k] = static_cast<int64_t>(get<uint64_t>(is));
        Tensor t(Shape{e[0], e[1], e[2], e[3], e[4]});
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(sizeof(double) * t.count()));
        if (!is) throw IoError("checkpoint: truncated payload in " + path);
        store.put(name, std::move(t));
    }
    return store;
}

}  // namespace sfnet
