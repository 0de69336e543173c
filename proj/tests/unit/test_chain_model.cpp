#include "spinwire/chain_model.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace spinwire;

namespace
{

Eigen::MatrixXcd real_matrix(std::initializer_list<std::initializer_list<double>> rows)
{
	Eigen::MatrixXcd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
	Eigen::Index r = 0;
	for(const auto& row : rows)
	{
		Eigen::Index c = 0;
		for(double v : row) m(r, c++) = v;
		++r;
	}
	return m;
}

double max_abs(const Eigen::MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

// difference with its mean diagonal removed
double shift_removed(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b)
{
	Eigen::MatrixXcd d = a - b;
	const oracle::cplx shift = d.diagonal().mean();
	d -= shift * Eigen::MatrixXcd::Identity(d.rows(), d.cols());
	return max_abs(d);
}

} // namespace

TEST_SUITE("chain_model")
{
	TEST_CASE("three-site XY chain is tridiagonal with unit hopping")
	{
		const auto h = build_subspace_hamiltonian(uniform_chain(3, ModelTag::XY));
		CHECK(max_abs(h.matrix - real_matrix({{0, 1, 0}, {1, 0, 1}, {0, 1, 0}})) == 0.0);
	}

	TEST_CASE("two-site Heisenberg matches the restricted tensor-product Hamiltonian")
	{
		const auto spec = uniform_chain(2, ModelTag::Heisenberg);
		const auto h = build_subspace_hamiltonian(spec);
		CHECK(max_abs(h.matrix - real_matrix({{-0.5, 1}, {1, -0.5}})) < 1e-15);
		// 4x4 construction restricted to {|up down>, |down up>}
		const auto full = oracle::full_hamiltonian(spec);
		CHECK(max_abs(h.matrix - oracle::restrict_single_excitation(full, 2)) < 1e-15);
		// [[-1, 1], [1, -1]] up to a uniform shift
		CHECK(shift_removed(h.matrix, real_matrix({{-1, 1}, {1, -1}})) < 1e-15);
	}

	TEST_CASE("uncoupled chain gives the zero matrix")
	{
		ChainSpec spec;
		spec.n_spins = 4;
		spec.jx = Eigen::MatrixXd::Zero(4, 4);
		spec.jz = Eigen::MatrixXd::Zero(4, 4);
		CHECK(max_abs(build_subspace_hamiltonian(spec).matrix) == 0.0);
	}

	TEST_CASE("validation rejects malformed specs")
	{
		auto spec = uniform_chain(3, ModelTag::XY);
		spec.jx(0, 1) = 2.0;
		CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
		CHECK_THROWS_AS(build_subspace_hamiltonian(spec), std::invalid_argument);

		auto mismatch = uniform_chain(3, ModelTag::XY);
		mismatch.jz = Eigen::MatrixXd::Zero(4, 4);
		CHECK_THROWS_AS(build_subspace_hamiltonian(mismatch), std::invalid_argument);

		auto self = uniform_chain(3, ModelTag::XY);
		self.jx(1, 1) = 1.0;
		CHECK_THROWS_AS(self.validate(), std::invalid_argument);

		auto xy_with_jz = uniform_chain(3, ModelTag::XY);
		xy_with_jz.jz(0, 1) = xy_with_jz.jz(1, 0) = 0.3;
		CHECK_THROWS_AS(xy_with_jz.validate(), std::invalid_argument);

		auto heis = uniform_chain(3, ModelTag::Heisenberg);
		heis.jz(0, 1) = heis.jz(1, 0) = 0.3;
		CHECK_THROWS_AS(heis.validate(), std::invalid_argument);

		CHECK_THROWS_AS(uniform_chain(1, ModelTag::XY), std::invalid_argument);
	}

	TEST_CASE("subspace Hamiltonian equals the full-space restriction for random chains")
	{
		std::mt19937_64 rng(11);
		for(int trial = 0; trial < 30; ++trial)
		{
			const int n = 2 + trial % 5;
			const auto model = static_cast<ModelTag>(trial % 3);
			const auto spec = oracle::random_chain(rng, n, model, trial % 2 == 1);
			const auto h = build_subspace_hamiltonian(spec);
			const auto full = oracle::full_hamiltonian(spec);
			CHECK(shift_removed(h.matrix, oracle::restrict_single_excitation(full, n)) <= 1e-10);
			CHECK(max_abs(h.matrix - h.matrix.adjoint()) <= 1e-12);
			for(int a = 0; a < n; ++a)
				for(int b = 0; b < n; ++b)
					if(a != b) CHECK(h.matrix(a, b).real() == spec.jx(a, b));
		}
	}

	TEST_CASE("xy-isotropic Hamiltonians conserve the excitation number")
	{
		std::mt19937_64 rng(12);
		for(int n = 2; n <= 6; ++n)
			for(int m = 0; m < 3; ++m)
			{
				const auto spec = oracle::random_chain(rng, n, static_cast<ModelTag>(m), true);
				const auto h = oracle::full_hamiltonian(spec);
				const auto s = oracle::total_z(n);
				CHECK(max_abs(h * s - s * h) <= 1e-10);
			}
	}

	TEST_CASE("switching off a bond only touches that bond")
	{
		const auto spec = uniform_chain(3, ModelTag::XY);
		const auto h2 = apply_actuator(spec, SwitchOffCoupling{0, 1});
		CHECK(max_abs(h2.matrix - real_matrix({{0, 0, 0}, {0, 0, 1}, {0, 1, 0}})) == 0.0);

		std::mt19937_64 rng(13);
		for(int trial = 0; trial < 20; ++trial)
		{
			const int n = 3 + trial % 6;
			const auto s = oracle::random_chain(rng, n, static_cast<ModelTag>(trial % 3), trial % 2 == 0);
			const int a = trial % (n - 1);
			const int b = a + 1 + trial % (n - a - 1);
			for(bool jz : {false, true})
			{
				const Eigen::MatrixXcd d =
				    apply_actuator(s, SwitchOffCoupling{a, b, jz}).matrix - build_subspace_hamiltonian(s).matrix;
				for(int i = 0; i < n; ++i)
					for(int j = 0; j < n; ++j)
					{
						const bool footprint = (i == a && j == b) || (i == b && j == a) || (jz && i == j && (i == a || i == b));
						if(!footprint) CHECK(d(i, j) == oracle::cplx(0.0));
					}
				CHECK(d(a, b).real() == doctest::Approx(-s.jx(a, b)).epsilon(1e-14));
			}
		}
	}

	TEST_CASE("full removal on two Heisenberg spins leaves a multiple of the identity")
	{
		const auto h2 = apply_actuator(uniform_chain(2, ModelTag::Heisenberg), SwitchOffCoupling{0, 1, true});
		CHECK(std::abs(h2.matrix(0, 1)) == 0.0);
		CHECK(std::abs(h2.matrix(0, 0) - h2.matrix(1, 1)) == 0.0);
		// the actuated Hamiltonian equals the restriction of the all-zero chain up to a shift
		CHECK(shift_removed(h2.matrix, Eigen::MatrixXcd::Zero(2, 2)) == 0.0);
	}

	TEST_CASE("switch-off perturbation reproduces the full-space actuated chain")
	{
		std::mt19937_64 rng(14);
		for(int trial = 0; trial < 12; ++trial)
		{
			const int n = 2 + trial % 5;
			const auto s = oracle::random_chain(rng, n, static_cast<ModelTag>(trial % 3));
			const bool jz = trial % 2 == 1;
			auto cut = s;
			cut.jx(0, 1) = cut.jx(1, 0) = 0.0;
			if(jz) cut.jz(0, 1) = cut.jz(1, 0) = 0.0;
			const auto want = oracle::restrict_single_excitation(oracle::full_hamiltonian(cut.jx, cut.jz), n);
			CHECK(shift_removed(apply_actuator(s, SwitchOffCoupling{0, 1, jz}).matrix, want) <= 1e-12);
		}
	}

	TEST_CASE("other actuator kinds")
	{
		const auto spec = uniform_chain(4, ModelTag::Heisenberg);
		const auto h1 = build_subspace_hamiltonian(spec).matrix;
		CHECK(max_abs(apply_actuator(spec, DiagonalShift{0, 0.0}).matrix - h1) == 0.0);

		const Eigen::MatrixXcd d = apply_actuator(spec, DiagonalShift{2, 0.7}).matrix - h1;
		CHECK(d(2, 2).real() == doctest::Approx(0.7));
		CHECK(max_abs(d) == doctest::Approx(0.7));

		const Eigen::MatrixXcd e = apply_actuator(spec, AddCouplingDelta{1, 2, 0.25}).matrix - h1;
		CHECK(e(1, 2).real() == doctest::Approx(0.25));
		CHECK(e(2, 1).real() == doctest::Approx(0.25));
		CHECK(max_abs(e) == doctest::Approx(0.25));

		CHECK_THROWS_AS(apply_actuator(spec, SwitchOffCoupling{0, 7}), std::invalid_argument);
		CHECK_THROWS_AS(apply_actuator(spec, DiagonalShift{-1, 1.0}), std::invalid_argument);
	}

	TEST_CASE("switching off a missing coupling warns but succeeds")
	{
		const auto spec = uniform_chain(4, ModelTag::XY);
		std::vector<std::string> warnings;
		const auto h2 = apply_actuator(spec, SwitchOffCoupling{0, 2}, &warnings);
		CHECK(warnings.size() == 1);
		CHECK(max_abs(h2.matrix - build_subspace_hamiltonian(spec).matrix) == 0.0);
	}

	TEST_CASE("zero disorder returns the base chain")
	{
		const auto base = uniform_chain(8, ModelTag::Heisenberg);
		const auto s = sample_disordered_chain(base, 0.0, 5);
		CHECK((s.jx - base.jx).cwiseAbs().maxCoeff() == 0.0);
		CHECK((s.jz - base.jz).cwiseAbs().maxCoeff() == 0.0);
		CHECK_THROWS_AS(sample_disordered_chain(base, -0.1, 5), std::invalid_argument);
	}

	TEST_CASE("disorder is reproducible and keeps the model class")
	{
		const auto base = uniform_chain(10, ModelTag::Heisenberg);
		const auto a = sample_disordered_chain(base, 0.1, 77);
		const auto b = sample_disordered_chain(base, 0.1, 77);
		const auto c = sample_disordered_chain(base, 0.1, 78);
		CHECK((a.jx - b.jx).cwiseAbs().maxCoeff() == 0.0);
		CHECK((a.jx - c.jx).cwiseAbs().maxCoeff() > 0.0);
		CHECK((a.jx - a.jz).cwiseAbs().maxCoeff() == 0.0);
		CHECK(a.is_nearest_neighbor());
		CHECK(a.seed == 77);
		CHECK(a.epsilon == 0.1);
		a.validate();

		const auto xy = sample_disordered_chain(uniform_chain(6, ModelTag::XY), 0.1, 3);
		CHECK(xy.jz.cwiseAbs().maxCoeff() == 0.0);
	}

	TEST_CASE("small disorder stays within five standard deviations")
	{
		const auto base = uniform_chain(11, ModelTag::XY);
		int outside = 0;
		for(std::uint64_t seed = 0; seed < 1000; ++seed)
		{
			const auto s = sample_disordered_chain(base, 0.01, seed);
			for(int n = 0; n + 1 < 11; ++n)
				if(std::abs(s.jx(n, n + 1) - 1.0) > 0.05) ++outside;
		}
		CHECK(outside == 0);
	}

	TEST_CASE("disorder statistics match a standard Gaussian")
	{
		const double eps = 0.1;
		const auto base = uniform_chain(11, ModelTag::Heisenberg);
		std::vector<double> xi;
		for(std::uint64_t seed = 0; seed < 2000; ++seed)
		{
			const auto s = sample_disordered_chain(base, eps, seed);
			for(int n = 0; n + 1 < 11; ++n) xi.push_back(s.jx(n, n + 1) - 1.0);
		}
		const auto count = static_cast<double>(xi.size());
		double mean = 0.0;
		for(double v : xi) mean += v;
		mean /= count;
		double var = 0.0;
		for(double v : xi) var += (v - mean) * (v - mean);
		var /= count - 1.0;
		// standard errors of the sample mean and variance for a Gaussian
		CHECK(std::abs(mean) <= 3.0 * eps / std::sqrt(count));
		CHECK(std::abs(var - eps * eps) <= 3.0 * eps * eps * std::sqrt(2.0 / (count - 1.0)));
	}

	TEST_CASE("non-unit bonds are scaled multiplicatively")
	{
		const auto base = uniform_chain(5, ModelTag::XY, 2.0);
		const auto unit = uniform_chain(5, ModelTag::XY, 1.0);
		const auto a = sample_disordered_chain(base, 0.2, 9);
		const auto b = sample_disordered_chain(unit, 0.2, 9);
		CHECK((a.jx - 2.0 * b.jx).cwiseAbs().maxCoeff() < 1e-15);
	}

	TEST_CASE("model names round-trip")
	{
		for(auto m : {ModelTag::XY, ModelTag::Heisenberg, ModelTag::XYZGeneral})
			CHECK(model_tag_from_string(to_string(m)) == m);
		CHECK_THROWS_AS(model_tag_from_string("ising"), std::invalid_argument);
	}
}
