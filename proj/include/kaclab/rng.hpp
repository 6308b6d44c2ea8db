#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace kaclab {

// Philox4x32-10 counter-based generator. A stream
// is the key together with the upper half of the counter; the lower half
// counts blocks, so streams never overlap and any block can be reached
// directly.
class Philox4x32 {
  public:
    using result_type = std::uint32_t;
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    static constexpr Block bijection(Block ctr, Key key)
    {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += 0x9E3779B9u;
                key[1] += 0xBB67AE85u;
            }
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        }
        return ctr;
    }

    Philox4x32() = default;
    // Stream (seed, stream_id), positioned at block 0.
    Philox4x32(std::uint64_t seed, std::uint64_t stream_id)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_{static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)}
    {
    }

    result_type operator()()
    {
        if (pos_ == 4) refill();
        return buf_[pos_++];
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform()
    {
        const std::uint64_t a = (*this)() >> 5, b = (*this)() >> 6;
        return static_cast<double>(a * 67108864u + b) * 0x1.0p-53;
    }

    // Uniform integer in [0, n), n > 0, by rejection on 32 bits.
    std::uint32_t below(std::uint32_t n)
    {
        const std::uint32_t limit = max() - max() % n;
        std::uint32_t x;
        do x = (*this)();
        while (x >= limit);
        return x % n;
    }

    // Positions the stream at the start of block `block`.
    void seek(std::uint64_t block)
    {
        block_ = block;
        pos_ = 4;
    }
    std::uint64_t block() const { return block_; }

    bool operator==(const Philox4x32& o) const
    {
        return key_ == o.key_ && stream_ == o.stream_ && block_ == o.block_ && pos_ == o.pos_;
    }

  private:
    void refill()
    {
        buf_ = bijection({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32), stream_[0],
                          stream_[1]},
                         key_);
        ++block_;
        pos_ = 0;
    }

    Key key_{0, 0};
    std::array<std::uint32_t, 2> stream_{0, 0};
    std::uint64_t block_ = 0;
    Block buf_{};
    int pos_ = 4;
};

}  // namespace kaclab
