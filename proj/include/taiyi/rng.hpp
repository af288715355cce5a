#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace taiyi {

// Deterministic counter-based generator. Every draw is a pure function of
// (seed, counter), so identical seeds reproduce identical sequences across
// runs regardless of how many values were cached or copied.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() {
        counter_ += 1;
        return mix(seed_ + counter_ * 0x9E3779B97F4A7C15ull);
    }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Standard normal via Box-Muller, cosine branch only. Two u64 draws per
    // value; no cached spare, so the stream position stays counter-exact.
    double normal() {
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;        // [0, 1)
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform integer in [0, n). Lemire multiply-shift; bias is O(n/2^64).
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent generator derived from this seed and a stream id.
    Rng fork(uint64_t stream) const {
        return Rng(mix(seed_ ^ mix(stream + 0xD1B54A32D192ED03ull)));
    }

    static uint64_t mix(uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

private:
    uint64_t seed_;
    uint64_t counter_ = 0;
};

}  // namespace taiyi
