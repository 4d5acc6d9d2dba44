#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace icsl {

// Deterministic random stream. The engine is std::mt19937_64; all value
// derivations (uniform, normal, shuffle) are spelled out here instead of
// going through std:: distributions, whose output is implementation-defined.
class Rng {
public:
    Rng() : Rng(0) {}
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    uint64_t uniform_int(uint64_t n);

    // Standard normal via Box-Muller (no cached spare; one pair per call).
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates, descending.
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Uniformly random permutation of 0..n-1.
    std::vector<int> permutation(int n);

    // Child stream with a seed derived from this stream's state and a label,
    // so independent consumers (init, shuffling, SIR, augmentation) cannot
    // perturb each other by consuming different amounts of randomness.
    Rng child(const std::string& label) const;

    // Engine state round-trip for checkpoint manifests.
    std::string serialize() const;
    static Rng deserialize(const std::string& state);

private:
    std::mt19937_64 engine_;
};

// Stable 64-bit FNV-1a over bytes; used for seed derivation and content
// fingerprints in run manifests.
uint64_t fnv1a64(const void* data, size_t len, uint64_t basis = 0xcbf29ce484222325ULL);
uint64_t fnv1a64(const std::string& s);

}  // namespace icsl
