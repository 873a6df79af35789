#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace fredholm {

/// SplitMix64 finalizer. Used to hash seeds and stream paths into Philox keys.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Philox4x32-10 block function (Salmon et al., Random123).
///
/// Counter-based: the output for a given (counter, key) pair is a pure function,
/// so any block of any stream can be produced without generating its predecessors.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter block(Counter ctr, Key key) noexcept
    {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += 0x9E3779B9u;
            key[1] += 0xBB67AE85u;
        }
        return ctr;
    }
};

/// Purpose tags that keep the families of derived streams disjoint.
enum class StreamTag : std::uint64_t {
    Estimator = 1,     // (replicate, order/stage): shared by DTM and recursive estimators
    GaussianSup = 2,   // simulated Gaussian suprema
    Pilot = 3,         // pilot runs for constant calibration
    Trial = 4,         // outer trials of coverage studies and sweeps
    Auxiliary = 5,
};

/// A reproducible, splittable random stream.
///
/// The stream key is a hash of (seed, path); the Philox counter is the index of
/// the 128-bit block within the stream. Two streams with different paths are
/// statistically independent, and a stream's output never depends on how other
/// streams were consumed. Satisfies UniformRandomBitGenerator.
class Stream {
public:
    using result_type = std::uint64_t;

    explicit Stream(std::uint64_t seed) noexcept : key_(splitmix64(seed)) {}

    Stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept
        : key_(splitmix64(seed))
    {
        for (std::uint64_t p : path) {
            key_ = mix(key_, p);
        }
    }

    Stream(std::uint64_t seed, StreamTag tag, std::initializer_list<std::uint64_t> path) noexcept
        : Stream(seed)
    {
        key_ = mix(key_, static_cast<std::uint64_t>(tag));
        for (std::uint64_t p : path) {
            key_ = mix(key_, p);
        }
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        if (pos_ == 2) {
            refill();
        }
        return buffer_[pos_++];
    }

    /// Child stream; independent of the parent and of every other child index.
    [[nodiscard]] Stream split(std::uint64_t index) const noexcept
    {
        Stream child(0);
        child.key_ = mix(key_, index ^ 0x5851f42d4c957f2dull);
        return child;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept
    {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, bound), unbiased (Lemire's multiply-shift with rejection).
    std::uint64_t below(std::uint64_t bound) noexcept
    {
        std::uint64_t x = (*this)();
        unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                x = (*this)();
                m = static_cast<unsigned __int128>(x) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
    [[nodiscard]] std::uint64_t blocks_consumed() const noexcept { return block_; }

private:
    static constexpr std::uint64_t mix(std::uint64_t h, std::uint64_t v) noexcept
    {
        return splitmix64(h ^ splitmix64(v + 0x632be59bd9b4e019ull));
    }

    void refill() noexcept
    {
        const Philox4x32::Counter ctr{static_cast<std::uint32_t>(block_),
                                      static_cast<std::uint32_t>(block_ >> 32), 0u, 0u};
        const Philox4x32::Key k{static_cast<std::uint32_t>(key_),
                                static_cast<std::uint32_t>(key_ >> 32)};
        const auto out = Philox4x32::block(ctr, k);
        buffer_[0] = (std::uint64_t{out[1]} << 32) | out[0];
        buffer_[1] = (std::uint64_t{out[3]} << 32) | out[2];
        ++block_;
        pos_ = 0;
    }

    std::uint64_t key_;
    std::uint64_t block_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int pos_ = 2;
};

/// Seed for the index-th derived experiment (outer trials, sweep points).
constexpr std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag, std::uint64_t index) noexcept
{
    return splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(tag))) + index);
}

} // namespace fredholm
