#pragma once

#include <cstdint>
#include <limits>

namespace hierest
{

enum class StreamPurpose : std::uint64_t
{
    Coefficients = 1,
    Noise = 2,
    PacketLoss = 3,
    TestData = 4,
};

/// Counter-based generator: output k of a stream is splitmix64(key + k * golden),
/// where the key is derived from (seed, agent, purpose). Streams for different
/// agents or purposes never share state, so enabling e.g. sensor noise leaves the
/// coefficient draws untouched.
///
/// Satisfies UniformRandomBitGenerator so it plugs into <random> distributions.
class CounterRng
{
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, std::uint64_t agent, StreamPurpose purpose);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    std::uint64_t counter() const { return m_counter; }

private:
    std::uint64_t m_key;
    std::uint64_t m_counter{0};
};

std::uint64_t splitmix64(std::uint64_t x);

} // namespace hierest
