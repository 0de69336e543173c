#pragma once

#include <cstdint>

namespace spinwire
{

/// Derives an independent child seed from a master seed and a stream index.
/// Rule: splitmix64(master ^ splitmix64(stream + 1)). Every scenario cell,
/// trial and restart takes its seed from this function.
constexpr std::uint64_t splitmix64(std::uint64_t x)
{
	x += 0x9e3779b97f4a7c15ULL;
	x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
	x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
	return x ^ (x >> 31);
}

constexpr std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream)
{
	return splitmix64(master ^ splitmix64(stream + 1));
}

} // namespace spinwire
