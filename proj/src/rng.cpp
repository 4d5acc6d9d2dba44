#include "icsl/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace icsl {

uint64_t Rng::uniform_int(uint64_t n) {
    if (n == 0) {
        return 0;
    }
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    // Guard the log against u1 == 0.
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<int> Rng::permutation(int n) {
    std::vector<int> p(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        p[static_cast<size_t>(i)] = i;
    }
    shuffle(p);
    return p;
}

Rng Rng::child(const std::string& label) const {
    std::ostringstream os;
    os << engine_;
    uint64_t seed = fnv1a64(os.str());
    seed = fnv1a64(label, seed);
    return Rng(seed);
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

Rng Rng::deserialize(const std::string& state) {
    Rng r;
    std::istringstream is(state);
    is >> r.engine_;
    return r;
}

uint64_t fnv1a64(const void* data, size_t len, uint64_t basis) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = basis;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace icsl
