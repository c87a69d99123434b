#ifndef RESTOLAB_RNG_HPP
#define RESTOLAB_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

#include "restolab/tensor.hpp"

namespace restolab {

// FNV-1a over a label, mixed with the root seed. All module randomness fans
// out from one root seed through named sub-seeds.
inline uint64_t derive_seed(uint64_t root, std::string_view label) {
    uint64_t h = 1469598103934665603ull ^ root;
    for (char c : label) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ull;
    }
    // splitmix64 finalizer
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}
    Rng(uint64_t root, std::string_view label) : engine_(derive_seed(root, label)) {}

    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    int uniform_int(int lo, int hi) { // inclusive bounds
        return std::uniform_int_distribution<int>(lo, hi)(engine_);
    }

    Tensor normal_tensor(std::vector<int> shape, double mean, double stddev) {
        Tensor t(std::move(shape));
        for (int i = 0; i < t.size(); ++i) t[i] = normal(mean, stddev);
        return t;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace restolab

#endif
