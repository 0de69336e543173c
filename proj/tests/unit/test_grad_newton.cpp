#include "spinwire/grad_newton.hpp"
#include "spinwire/seeding.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

using namespace spinwire;
using std::numbers::pi;

namespace
{

// H_1 = [[0,1],[1,0]] in every segment, so E(t) = 1 - sin^2(t_1 + ... + t_K)
ControlCaches rabi_pair()
{
	const auto h = build_subspace_hamiltonian(uniform_chain(2, ModelTag::XY));
	return ControlCaches::make(spectral_decompose(h), spectral_decompose(h));
}

std::vector<double> random_durations(std::mt19937_64& rng, int k, double hi)
{
	std::uniform_real_distribution<double> u(0.05, hi);
	std::vector<double> d(static_cast<std::size_t>(k));
	for(auto& t : d) t = u(rng);
	return d;
}

double error_of(const ControlCaches& caches, const std::vector<double>& d, StartPhase phase)
{
	return transfer_fidelity(caches, SwitchingSequence{d, phase}).error;
}

OptimizationProblem benchmark_problem()
{
	OptimizationProblem p;
	p.k_max = 40;
	p.initial_time = 100.0;
	p.t_max = 110.0;
	return p;
}

} // namespace

TEST_SUITE("grad_newton")
{
	TEST_CASE("single-segment two-site derivatives")
	{
		const auto caches = rabi_pair();
		const SwitchingSequence at_quarter{{pi / 4}};
		const auto d = error_derivatives(caches, at_quarter, true);
		CHECK(d.gradient(0) == doctest::Approx(-1.0).epsilon(1e-12));
		CHECK(std::abs(d.hessian(0, 0)) <= 1e-12);
		CHECK(d.error == doctest::Approx(0.5).epsilon(1e-12));

		const SwitchingSequence at_zero{{0.0}};
		CHECK(hessian(caches, at_zero)(0, 0) == doctest::Approx(-2.0).epsilon(1e-12));
		CHECK(std::abs(gradient(caches, at_zero)(0)) <= 1e-12);
	}

	TEST_CASE("zero Hamiltonians have vanishing derivatives")
	{
		SubspaceHamiltonian zero{Eigen::MatrixXcd::Zero(4, 4)};
		const auto caches = ControlCaches::make(spectral_decompose(zero), spectral_decompose(zero));
		const SwitchingSequence seq{{0.3, 1.1, 0.7}};
		CHECK(hessian(caches, seq).cwiseAbs().maxCoeff() == 0.0);
		CHECK(gradient(caches, seq).cwiseAbs().maxCoeff() == 0.0);
	}

	TEST_CASE("gradient and Hessian match finite differences")
	{
		std::mt19937_64 rng(31);
		for(int trial = 0; trial < 40; ++trial)
		{
			const int n = 3 + trial % 10;
			const int k = 2 + trial % 19;
			const auto phase = trial % 2 ? StartPhase::ActuatorOnFirst : StartPhase::ActuatorOffFirst;
			const auto caches = make_control_caches(oracle::random_chain(rng, n, static_cast<ModelTag>(trial % 3)));
			// long enough for the excitation to reach the far end
			const auto d = random_durations(rng, k, std::max(3.0, 2.5 * n / k));
			const SwitchingSequence seq{d, phase};

			const auto e = [&](const std::vector<double>& x) { return error_of(caches, x, phase); };
			const auto g = [&](const std::vector<double>& x) { return gradient(caches, SwitchingSequence{x, phase}); };
			const auto deriv = error_derivatives(caches, seq, true);
			CAPTURE(trial);
			CHECK(oracle::relative_error(deriv.gradient, oracle::central_difference(e, d, 1e-5)) <= 1e-6);
			CHECK(oracle::relative_error(deriv.hessian, oracle::jacobian_difference(g, d, 1e-4)) <= 1e-4);
			CHECK((deriv.hessian - deriv.hessian.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
			CHECK(deriv.error == doctest::Approx(e(d)).epsilon(1e-14));
		}
	}

	TEST_CASE("project_feasible enforces both bounds")
	{
		OptimizationProblem p;
		p.k_max = 5;
		p.t_min = 0.5;
		p.t_max = 10.0;
		std::vector<double> d{-1.0, 0.2, 7.0, 4.0, 3.0};
		project_feasible(d, p);
		CHECK(p.feasible(d));
		for(double t : d) CHECK(t >= p.t_min);
		CHECK(std::accumulate(d.begin(), d.end(), 0.0) <= p.t_max);

		std::vector<double> inside{1.0, 1.0, 1.0, 1.0, 1.0};
		const auto copy = inside;
		project_feasible(inside, p);
		CHECK(inside == copy);
	}

	TEST_CASE("problem validation")
	{
		OptimizationProblem p;
		p.k_max = 10;
		p.t_min = 2.0;
		p.t_max = 10.0;
		CHECK_THROWS_AS(p.validate(), std::invalid_argument);
		p.t_min = 0.0;
		p.error_threshold = 1.0;
		CHECK_THROWS_AS(p.validate(), std::invalid_argument);
		p.error_threshold = 1e-4;
		p.k_max = 0;
		CHECK_THROWS_AS(p.validate(), std::invalid_argument);
	}

	TEST_CASE("random initial sequences are feasible and reproducible")
	{
		auto p = benchmark_problem();
		p.t_min = 0.2;
		const auto a = random_initial_sequence(p, 4);
		const auto b = random_initial_sequence(p, 4);
		CHECK(a.durations == b.durations);
		CHECK(a.size() == 40);
		CHECK(a.total_time() == doctest::Approx(100.0).epsilon(1e-12));
		CHECK(p.feasible(a.durations));
		CHECK(random_initial_sequence(p, 5).durations != a.durations);
	}

	TEST_CASE("infeasible initial sequences are rejected")
	{
		const auto caches = make_control_caches(uniform_chain(4, ModelTag::XY));
		OptimizationProblem p;
		p.k_max = 3;
		p.t_max = 5.0;
		CHECK_THROWS_AS(newton_optimize(p, caches, SwitchingSequence{{2.0, 2.0, 2.0}}), std::invalid_argument);
		p.t_min = 1.0;
		CHECK_THROWS_AS(newton_optimize(p, caches, SwitchingSequence{{0.5, 2.0, 2.0}}), std::invalid_argument);
	}

	TEST_CASE("a start already below threshold is returned unchanged")
	{
		const auto caches = make_control_caches(uniform_chain(3, ModelTag::XY));
		OptimizationProblem p;
		p.k_max = 1;
		p.t_max = 5.0;
		p.initial_time = 3.0;
		const SwitchingSequence t0{{pi / std::sqrt(2.0)}, StartPhase::ActuatorOffFirst};
		const auto r = newton_optimize(p, caches, t0);
		CHECK(r.converged);
		CHECK(r.iterations <= 1);
		CHECK(std::abs(r.sequence.durations[0] - t0.durations[0]) <= 1e-8);
	}

	TEST_CASE("accepted steps never increase the error")
	{
		std::mt19937_64 rng(32);
		for(int trial = 0; trial < 6; ++trial)
		{
			const auto caches = make_control_caches(oracle::random_chain(rng, 6 + trial, ModelTag::Heisenberg));
			OptimizationProblem p;
			p.k_max = 12;
			p.t_min = 0.05;
			p.initial_time = 30.0;
			p.t_max = 32.0;
			p.error_threshold = 1e-12;
			NewtonOptions o;
			o.max_restarts = 0;
			o.max_iterations = 60;
			const auto r = newton_optimize(p, caches, random_initial_sequence(p, 100 + trial), o);
			REQUIRE(!r.error_history.empty());
			for(std::size_t i = 1; i < r.error_history.size(); ++i)
				CHECK(r.error_history[i] <= r.error_history[i - 1]);
			CHECK(p.feasible(r.sequence.durations));
			CHECK(r.restarts == 0);
		}
	}

	TEST_CASE("restarts keep monotone descent between kicks")
	{
		const auto caches = make_control_caches(uniform_chain(10, ModelTag::Heisenberg));
		OptimizationProblem p;
		p.k_max = 20;
		p.initial_time = 40.0;
		p.t_max = 40.0;
		p.t_min = 0.1;
		p.error_threshold = 1e-8;
		const auto r = newton_optimize(p, caches, random_initial_sequence(p, 3));
		std::vector<std::size_t> starts = r.restart_positions;
		starts.push_back(r.error_history.size());
		std::size_t begin = 0;
		for(std::size_t end : starts)
		{
			for(std::size_t i = begin + 1; i < end; ++i) CHECK(r.error_history[i] <= r.error_history[i - 1]);
			begin = end;
		}
		CHECK(p.feasible(r.sequence.durations));
		for(double t : r.sequence.durations) CHECK(t >= p.t_min);
		CHECK(r.sequence.total_time() <= p.t_max);
	}

	TEST_CASE("result bookkeeping")
	{
		const auto caches = make_control_caches(uniform_chain(6, ModelTag::Heisenberg));
		OptimizationProblem p;
		p.k_max = 24;
		p.initial_time = 60.0;
		p.t_max = 66.0;
		p.time_digits = 4;
		const auto r = newton_optimize(p, caches, random_initial_sequence(p, 8));
		CHECK(r.fidelity + r.error == doctest::Approx(1.0).epsilon(1e-12));
		CHECK(r.total_time == doctest::Approx(r.sequence.total_time()).epsilon(1e-14));
		CHECK(r.error == doctest::Approx(transfer_fidelity(caches, r.sequence).error).epsilon(1e-12));
		CHECK(r.fidelity_evaluations >= r.iterations);
		CHECK(r.gradient_evaluations >= 1);
		CHECK(r.quantized_error.has_value());
		CHECK(!r.stop_reason.empty());
	}

	TEST_CASE("interior optimum is stationary")
	{
		const auto caches = make_control_caches(uniform_chain(5, ModelTag::Heisenberg));
		OptimizationProblem p;
		p.k_max = 12;
		p.initial_time = 30.0;
		p.t_max = 45.0;
		p.error_threshold = 1e-14;
		NewtonOptions o;
		o.step_tolerance = 0.0;
		const auto r = multistart(p, caches, 4, 17, o);
		REQUIRE(r.error < 1e-10);
		const bool interior = std::all_of(r.sequence.durations.begin(), r.sequence.durations.end(),
		                                  [](double t) { return t > 1e-6; }) &&
		                      r.sequence.total_time() < p.t_max - 1e-6;
		REQUIRE(interior);
		CHECK(gradient(caches, r.sequence).cwiseAbs().maxCoeff() <= 1e-6);
	}

	TEST_CASE("single-start multistart equals a seeded Newton run")
	{
		const auto caches = make_control_caches(uniform_chain(8, ModelTag::Heisenberg));
		OptimizationProblem p;
		p.k_max = 32;
		p.initial_time = 80.0;
		p.t_max = 88.0;
		const std::uint64_t seed = 99;
		const auto m = multistart(p, caches, 1, seed);
		const auto run_seed = split_seed(seed, 0);
		NewtonOptions o;
		o.kick_seed = split_seed(run_seed, 0x6b69636b);
		const auto s = newton_optimize(p, caches, random_initial_sequence(p, run_seed), o);
		CHECK(m.sequence.durations == s.sequence.durations);
		CHECK(m.error == s.error);
		CHECK(m.seed == run_seed);
	}

	TEST_CASE("multistart returns the minimum and is deterministic")
	{
		const auto caches = make_control_caches(uniform_chain(10, ModelTag::Heisenberg));
		auto p = benchmark_problem();
		p.k_max = 24;
		p.initial_time = 50.0;
		p.t_max = 50.0;
		std::vector<OptimizationResult> runs;
		const auto best = multistart(p, caches, 6, 5, {}, 2, &runs);
		REQUIRE(runs.size() == 6);
		for(const auto& r : runs) CHECK(best.error <= r.error);
		const auto again = multistart(p, caches, 6, 5, {}, 1);
		CHECK(again.sequence.durations == best.sequence.durations);
	}

	TEST_CASE("benchmark chain reaches the threshold near T = 100")
	{
		const auto caches = make_control_caches(uniform_chain(10, ModelTag::Heisenberg));
		std::vector<OptimizationResult> runs;
		const auto r = multistart(benchmark_problem(), caches, 10, 2024, {}, 1, &runs);
		CHECK(r.error <= 1e-4);
		CHECK(r.total_time >= 80.0);
		CHECK(r.total_time <= 110.0);
		for(const auto& run : runs) CHECK(run.wall_time <= 60.0);
	}

	TEST_CASE("rounding helpers")
	{
		CHECK(round_to_digits(0.987654, 4) == doctest::Approx(0.9877).epsilon(1e-15));
		CHECK(round_to_digits(0.125, 2) == 0.12);
		CHECK(round_to_digits(0.375, 2) == 0.38);
		CHECK(round_to_digits(12.0, 3) == 12.0);
	}

	TEST_CASE("quantizing on-grid sequences changes nothing")
	{
		const auto caches = make_control_caches(uniform_chain(5, ModelTag::XY));
		const SwitchingSequence seq{{1.25, 0.5, 2.0, 3.125}};
		const auto q = quantize_times(caches, seq, 4);
		CHECK(q.sequence.durations == seq.durations);
		CHECK(q.error_after == transfer_fidelity(caches, seq).error);
		CHECK_THROWS_AS(quantize_times(caches, seq, 0), std::invalid_argument);
	}

	TEST_CASE("quantization perturbation stays within the Lipschitz bound")
	{
		const auto caches = make_control_caches(uniform_chain(10, ModelTag::Heisenberg));
		const auto r = multistart(benchmark_problem(), caches, 3, 7);
		const double lipschitz = gradient(caches, r.sequence).cwiseAbs().maxCoeff();
		for(int d = 4; d <= 6; ++d)
		{
			const auto q = quantize_times(caches, r.sequence, d);
			const double bound = lipschitz * r.sequence.size() * 0.5 * std::pow(10.0, -d);
			CHECK(std::abs(q.error_after - r.error) <= bound + 1e-12);
		}
	}
}
