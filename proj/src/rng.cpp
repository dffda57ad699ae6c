#include <hierest/rng.hpp>

namespace hierest
{

namespace
{
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t agent, StreamPurpose purpose)
    : m_key(splitmix64(splitmix64(seed) ^ splitmix64(agent * 0xD1B54A32D192ED03ULL
                                                     + static_cast<std::uint64_t>(purpose))))
{
}

CounterRng::result_type CounterRng::operator()()
{
    return splitmix64(m_key + (m_counter++) * kGolden);
}

} // namespace hierest
