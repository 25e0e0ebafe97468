#include "gpolab/param_store.hpp"

#include <cstring>
#include <fstream>

namespace gpolab {

namespace {

constexpr char kMagic[4] = {'G', 'P', 'O', '1'};

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw ConfigError("checkpoint: truncated u64");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f32(std::ostream& os, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

float read_f32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw ConfigError("checkpoint: truncated f32");
    uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(b[i]) << (8 * i);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void ParamStore::add(const std::string& name, Array value) {
    if (has(name)) throw UsageError("ParamStore: duplicate name '" + name + "'");
    index_[name] = order_.size();
    order_.push_back(name);
    entries_.emplace(name, std::move(value));
}

const Array& ParamStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw UsageError("ParamStore: unknown name '" + name + "'");
    return it->second;
}

Array& ParamStore::mutable_value(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw UsageError("ParamStore: unknown name '" + name + "'");
    return it->second;
}

size_t ParamStore::total_parameters() const {
    size_t n = 0;
    for (const auto& name : order_) n += entries_.at(name).numel();
    return n;
}

bool ParamStore::values_equal(const ParamStore& other) const {
    if (order_ != other.order_) return false;
    for (const auto& name : order_) {
        const Array& a = entries_.at(name);
        const Array& b = other.entries_.at(name);
        if (a.shape != b.shape) return false;
        if (std::memcmp(a.data.data(), b.data.data(), a.data.size() * 4) != 0) return false;
    }
    return true;
}

void ParamStore::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("checkpoint: cannot open for write: " + path.string());
    os.write(kMagic, 4);
    write_u64(os, order_.size());
    for (const auto& name : order_) {
        const Array& a = entries_.at(name);
        write_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u64(os, a.shape.size());
        for (size_t d : a.shape) write_u64(os, d);
        for (float v : a.data) write_f32(os, v);
    }
    if (!os) throw ConfigError("checkpoint: write failed: " + path.string());
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("checkpoint: cannot open: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw ConfigError("checkpoint: bad magic in " + path.string());
    }
    ParamStore store;
    const uint64_t count = read_u64(is);
    for (uint64_t e = 0; e < count; ++e) {
        const uint64_t name_len = read_u64(is);
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        if (!is) throw ConfigError("checkpoint: truncated name");
        const uint64_t rank = read_u64(is);
        std::vector<size_t> shape(rank);
        uint64_t numel = 1;
        for (uint64_t i = 0; i < rank; ++i) {
            shape[i] = static_cast<size_t>(read_u64(is));
            numel *= shape[i];
        }
        Array a(shape);
        for (uint64_t i = 0; i < numel; ++i) a.data[i] = read_f32(is);
        store.add(name, std::move(a));
    }
    return store;
}

}  // namespace gpolab
