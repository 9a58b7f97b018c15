// rng.hpp - seedable deterministic random streams and Kaiming-uniform init.
//
// Every random draw in the library funnels through Rng. Child streams are
// derived from the parent's seed plus a label hash, so a child's output does
// not depend on how many draws its siblings made.

#ifndef SARA_RNG_HPP
#define SARA_RNG_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "sara/matrix.hpp"

namespace sara {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return detail::splitmix64(state_); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) {
            throw std::invalid_argument("uniform_int: n must be positive");
        }
        return next_u64() % n;
    }

    // Independent stream keyed by (parent seed, label); unaffected by draws
    // already made from this or any sibling stream.
    Rng child(std::string_view label) const {
        std::uint64_t mix = seed_ ^ (detail::fnv1a(label) + 0x9e3779b97f4a7c15ULL);
        std::uint64_t tmp = mix;
        return Rng(detail::splitmix64(tmp));
    }

    Rng child(std::string_view label, std::uint64_t index) const {
        return child(std::string(label) + "." + std::to_string(index));
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

// Entries i.i.d. from U(-b, b) with b = sqrt(6 / fan_in), drawn row-major.
inline Matrix kaiming_uniform(Rng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in) {
    if (fan_in < 1) {
        throw std::invalid_argument("kaiming_uniform: fan_in must be >= 1");
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Matrix m(rows, cols);
    for (double& x : m.data()) {
        x = rng.uniform(-bound, bound);
    }
    return m;
}

inline std::vector<double> kaiming_uniform_vec(Rng& rng, std::size_t len, std::size_t fan_in) {
    return kaiming_uniform(rng, 1, len, fan_in).data();
}

} // namespace sara

#endif // SARA_RNG_HPP
