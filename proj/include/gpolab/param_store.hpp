#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gpolab/array.hpp"

namespace gpolab {

// Ordered, named collection of trainable arrays. Names are unique and shapes
// are immutable after creation; `version` advances exactly once per optimizer
// step (the optimizer is the only writer).
class ParamStore {
public:
    void add(const std::string& name, Array value);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    const Array& get(const std::string& name) const;
    // Mutable access keeps the shape locked; only values may change.
    Array& mutable_value(const std::string& name);

    const std::vector<std::string>& names() const { return order_; }
    size_t size() const { return order_.size(); }

    uint64_t version() const { return version_; }
    void bump_version() { ++version_; }
    void set_version(uint64_t v) { version_ = v; }

    size_t total_parameters() const;

    bool values_equal(const ParamStore& other) const;

    // Checkpoint file: magic "GPO1", u64 entry count, then per entry
    // u64 name length, UTF-8 name, u64 rank, dims as u64, values as f32,
    // all little-endian. Round-trips bit-exactly.
    void save(const std::filesystem::path& path) const;
    static ParamStore load(const std::filesystem::path& path);

private:
    std::vector<std::string> order_;
    std::map<std::string, Array> entries_;
    std::map<std::string, size_t> index_;
    uint64_t version_ = 0;
};

}  // namespace gpolab
