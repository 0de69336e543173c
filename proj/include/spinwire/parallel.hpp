#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace spinwire
{

/// Runs fn(i) for i in [0, count) on up to `jobs` threads. Work is claimed
/// through an atomic counter; callers write results into per-index slots so
/// output does not depend on scheduling. The first exception is rethrown.
template<typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn)
{
	const auto workers = static_cast<std::size_t>(std::max(1, jobs));
	if(workers == 1 || count <= 1)
	{
		for(std::size_t i = 0; i < count; ++i) fn(i);
		return;
	}

	std::atomic<std::size_t> next{0};
	std::exception_ptr failure;
	std::mutex failure_mutex;
	auto worker = [&] {
		for(std::size_t i = next++; i < count; i = next++)
		{
			try
			{
				fn(i);
			}
			catch(...)
			{
				const std::lock_guard lock(failure_mutex);
				if(!failure) failure = std::current_exception();
			}
		}
	};
	std::vector<std::thread> pool;
	for(std::size_t w = 0; w < std::min(workers, count); ++w) pool.emplace_back(worker);
	for(auto& t : pool) t.join();
	if(failure) std::rethrow_exception(failure);
}

} // namespace spinwire
