#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "gpolab/array.hpp"

namespace gpolab {

// splitmix64 finalizer; used to derive independent seed streams from a run
// seed plus structural ids (epoch, prompt index, group member, ...). Derived
// streams make parallel generation order-independent: every sample owns a
// seed that is a pure function of what it is, not of when it runs.
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t id) { return mix_seed(base ^ mix_seed(id)); }

template <typename... Ids>
uint64_t derive_seed(uint64_t base, uint64_t id, Ids... rest) {
    return derive_seed(derive_seed(base, id), static_cast<uint64_t>(rest)...);
}

// mt19937_64 engine (bit-exact per the standard) with explicit uniform/normal
// transforms. The stdlib distributions are implementation-defined, which
// would break byte-reproducibility guarantees, so the transforms live here.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0,1), 53-bit mantissa.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in the open interval (0,1).
    double uniform_open() {
        double u;
        do {
            u = uniform();
        } while (u == 0.0);
        return u;
    }

    // Box-Muller, both values used.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    size_t below(size_t n) { return static_cast<size_t>(engine_() % n); }

    void fill_normal(Array& a) {
        for (float& v : a.data) v = static_cast<float>(normal());
    }

    Array normal_array(std::vector<size_t> shape) {
        Array a(std::move(shape));
        fill_normal(a);
        return a;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates with the raw engine, fixed regardless of libstdc++.
        for (size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    std::string save_state() const {
        std::ostringstream os;
        os << engine_ << " " << (have_spare_ ? 1 : 0) << " " << spare_;
        return os.str();
    }

    void load_state(const std::string& s) {
        std::istringstream is(s);
        int spare_flag = 0;
        is >> engine_ >> spare_flag >> spare_;
        have_spare_ = spare_flag != 0;
        if (!is) throw ConfigError("Rng: malformed state string");
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace gpolab
