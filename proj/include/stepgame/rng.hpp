#pragma once

// Deterministic, platform-stable random number generation.
//
// The standard <random> distributions are implementation-defined, so two standard
// libraries may produce different values from the same engine. Everything that must
// be bit-identical across platforms therefore uses the generators below:
//   - splitmix64 as the seed deriver / mixer,
//   - xoshiro256** as the draw stream,
//   - rejection sampling for bounded ints and Fisher-Yates for shuffles.

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace stepgame {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// One splitmix64 step: advances the state and returns the next value.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += kGolden);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Derives an independent sub-seed from (seed, index), e.g. one per generated instance,
// so parallel and serial generation agree bit for bit.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t s = seed ^ (kGolden * (index + 1));
    splitmix64_next(s);
    return splitmix64_next(s);
}

// xoshiro256** 1.0 (public-domain algorithm by Blackman and Vigna).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& word : state_) word = splitmix64_next(s);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform integer in [0, bound), unbiased via rejection. bound must be > 0.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = (UINT64_MAX / bound) * bound;
        std::uint64_t draw = next();
        while (draw >= limit) draw = next();
        return draw % bound;
    }

    // Uniform double in [0, 1) with 53 random bits (used only where exactness is not required).
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    template <typename T>
    const T& pick(const std::vector<T>& items) {
        return items[static_cast<std::size_t>(below(items.size()))];
    }

    // k distinct indices from [0, n), in shuffled order (partial Fisher-Yates).
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        std::vector<std::size_t> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k && i < n; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(below(n - i));
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
        return out;
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::array<std::uint64_t, 4> state_{};
};

// FNV-1a 64-bit digest, used to fingerprint raw completions in prediction logs.
inline std::uint64_t fnv1a64(const std::string_view text) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace stepgame
