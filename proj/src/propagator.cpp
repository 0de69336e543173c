#include "spinwire/propagator.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spinwire
{

namespace
{

constexpr cplx kI{0.0, 1.0};

Eigen::VectorXcd phases(const Eigen::VectorXd& lambda, double t)
{
	Eigen::VectorXcd p(lambda.size());
	for(Eigen::Index j = 0; j < lambda.size(); ++j)
		p(j) = std::polar(1.0, -lambda(j) * t);
	return p;
}

} // namespace

Eigen::MatrixXcd SpectralCache::propagator(double t) const
{
	return eigenvectors * phases(eigenvalues, t).asDiagonal() * eigenvectors.adjoint();
}

SpectralCache spectral_decompose(const SubspaceHamiltonian& h)
{
	const auto& m = h.matrix;
	if(m.rows() != m.cols() || m.rows() == 0)
		throw std::invalid_argument("Hamiltonian must be a non-empty square matrix");
	if(!m.allFinite()) throw std::invalid_argument("Hamiltonian has non-finite entries");
	if((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-12)
		throw std::invalid_argument("Hamiltonian is not Hermitian");

	const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m);
	if(es.info() != Eigen::Success)
		throw std::runtime_error("eigendecomposition failed");
	return {es.eigenvalues(), es.eigenvectors()};
}

std::string_view to_string(StartPhase phase)
{
	return phase == StartPhase::ActuatorOnFirst ? "on_first" : "off_first";
}

StartPhase start_phase_from_string(std::string_view name)
{
	if(name == "on_first") return StartPhase::ActuatorOnFirst;
	if(name == "off_first") return StartPhase::ActuatorOffFirst;
	throw std::invalid_argument("unknown start phase '" + std::string(name)
	                            + "' (expected on_first or off_first)");
}

double SwitchingSequence::total_time() const
{
	double total = 0.0;
	for(double t : durations) total += t;
	return total;
}

void SwitchingSequence::validate() const
{
	if(durations.empty()) throw std::invalid_argument("switching sequence is empty");
	for(double t : durations)
	{
		if(!std::isfinite(t)) throw std::invalid_argument("non-finite segment duration");
		if(t < 0.0) throw std::invalid_argument("negative segment duration");
	}
}

ControlCaches ControlCaches::make(SpectralCache off, SpectralCache on, int source, int target)
{
	if(off.dim() != on.dim())
		throw std::invalid_argument("spectral caches differ in dimension");
	const int n = off.dim();
	if(target < 0) target = n - 1;
	if(source < 0 || source >= n || target >= n)
		throw std::invalid_argument("source/target site out of range");

	ControlCaches c;
	c.off_to_on = on.eigenvectors.adjoint() * off.eigenvectors;
	c.on_to_off = off.eigenvectors.adjoint() * on.eigenvectors;
	c.off = std::move(off);
	c.on = std::move(on);
	c.source = source;
	c.target = target;
	return c;
}

ControlCaches make_control_caches(const ChainSpec& spec, const Actuator& act, int source,
                                  int target)
{
	return ControlCaches::make(spectral_decompose(build_subspace_hamiltonian(spec)),
	                           spectral_decompose(apply_actuator(spec, act)), source, target);
}

Eigen::MatrixXcd evolve_sequence(const ControlCaches& caches, const SwitchingSequence& seq)
{
	seq.validate();
	Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(caches.dim(), caches.dim());
	for(int k = 0; k < seq.size(); ++k)
		u = caches.cache(seq.actuator_on(k)).propagator(seq.durations[k]) * u;
	return u;
}

cplx transfer_amplitude(const ControlCaches& caches, const SwitchingSequence& seq)
{
	seq.validate();
	bool on = seq.actuator_on(0);
	Eigen::VectorXcd c = caches.cache(on).eigenvectors.row(caches.source).adjoint();
	for(int k = 0; k < seq.size(); ++k)
	{
		const auto& lambda = caches.cache(on).eigenvalues;
		for(Eigen::Index j = 0; j < c.size(); ++j)
			c(j) *= std::polar(1.0, -lambda(j) * seq.durations[k]);
		if(k + 1 < seq.size())
		{
			c = (on ? caches.on_to_off : caches.off_to_on) * c;
			on = !on;
		}
	}
	return caches.cache(on).eigenvectors.row(caches.target) * c;
}

TransferResult transfer_fidelity(const ControlCaches& caches, const SwitchingSequence& seq)
{
	const double f = std::clamp(std::norm(transfer_amplitude(caches, seq)), 0.0, 1.0);
	return {f, 1.0 - f};
}

std::vector<TracePoint> population_trace(const ControlCaches& caches,
                                         const SwitchingSequence& seq, double grid_step)
{
	if(!(grid_step > 0.0)) throw std::invalid_argument("grid_step must be positive");
	seq.validate();

	std::vector<TracePoint> trace;
	bool on = seq.actuator_on(0);
	Eigen::VectorXcd c = caches.cache(on).eigenvectors.row(caches.source).adjoint();

	auto sample = [&](double t, double tau) {
		const auto& cache = caches.cache(on);
		const Eigen::VectorXcd ct = c.cwiseProduct(phases(cache.eigenvalues, tau));
		const cplx amp = cache.eigenvectors.row(caches.target) * ct;
		trace.push_back({t, std::norm(amp), ct.norm()});
	};

	sample(0.0, 0.0);
	double start = 0.0;
	long next_grid = 1;
	for(int k = 0; k < seq.size(); ++k)
	{
		const double end = start + seq.durations[k];
		for(;; ++next_grid)
		{
			const double g = static_cast<double>(next_grid) * grid_step;
			if(g >= end - 1e-12) break;
			if(g > start + 1e-12) sample(g, g - start);
		}
		if(seq.durations[k] > 0.0 && end > trace.back().t + 1e-12)
			sample(end, seq.durations[k]);
		c = c.cwiseProduct(phases(caches.cache(on).eigenvalues, seq.durations[k]));
		if(k + 1 < seq.size())
		{
			c = (on ? caches.on_to_off : caches.off_to_on) * c;
			on = !on;
		}
		start = end;
	}
	// the final point must match transfer_fidelity's propagation path exactly
	const double final_pop = std::norm(cplx(caches.cache(on).eigenvectors.row(caches.target) * c));
	if(trace.back().t < start - 1e-12)
		trace.push_back({start, final_pop, c.norm()});
	else
		trace.back() = {trace.back().t, final_pop, c.norm()};
	return trace;
}

PeakResult uncontrolled_peak(const SpectralCache& cache_off, double t_max, double coarse_step,
                             int source, int target)
{
	if(!(t_max > 0.0)) throw std::invalid_argument("t_max must be positive");
	if(!(coarse_step > 0.0)) throw std::invalid_argument("coarse_step must be positive");
	const int n = cache_off.dim();
	if(target < 0) target = n - 1;

	// F(t) = |sum_j w_j exp(-i lambda_j t)|^2
	Eigen::VectorXcd w(n);
	for(int j = 0; j < n; ++j)
		w(j) = cache_off.eigenvectors(target, j) * std::conj(cache_off.eigenvectors(source, j));
	const Eigen::VectorXd lambda =
	    cache_off.eigenvalues.array() - cache_off.eigenvalues.mean();
	auto fid = [&](double t) {
		cplx a = 0.0;
		for(int j = 0; j < n; ++j) a += w(j) * std::polar(1.0, -lambda(j) * t);
		return std::norm(a);
	};

	const auto steps = static_cast<long>(std::floor(t_max / coarse_step));
	std::vector<double> grid_t;
	grid_t.reserve(static_cast<std::size_t>(steps) + 2);
	for(long i = 0; i <= steps; ++i) grid_t.push_back(static_cast<double>(i) * coarse_step);
	if(grid_t.back() < t_max - 1e-12) grid_t.push_back(t_max);
	std::vector<double> grid_f(grid_t.size());
	for(std::size_t i = 0; i < grid_t.size(); ++i) grid_f[i] = fid(grid_t[i]);

	// curvature bound |F''| <= 2 (S0 S2 + S1^2) limits how far a refined peak
	// can rise above its neighbouring grid value
	double s0 = 0, s1 = 0, s2 = 0;
	for(int j = 0; j < n; ++j)
	{
		const double a = std::abs(w(j)), l = std::abs(lambda(j));
		s0 += a;
		s1 += a * l;
		s2 += a * l * l;
	}
	const double margin = 2.0 * (s0 * s2 + s1 * s1) * coarse_step * coarse_step + 1e-9;
	const double grid_best = *std::max_element(grid_f.begin(), grid_f.end());

	std::vector<PeakResult> candidates;
	const auto last = grid_t.size() - 1;
	for(std::size_t i = 0; i <= last; ++i)
	{
		const bool left_ok = i == 0 || grid_f[i] >= grid_f[i - 1];
		const bool right_ok = i == last || grid_f[i] >= grid_f[i + 1];
		if(!left_ok || !right_ok || grid_f[i] < grid_best - margin) continue;

		double lo = i == 0 ? grid_t[0] : grid_t[i - 1];
		double hi = i == last ? grid_t[last] : grid_t[i + 1];
		const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
		double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
		double f1 = fid(x1), f2 = fid(x2);
		while(hi - lo > 1e-7)
		{
			if(f1 < f2)
			{
				lo = x1;
				x1 = x2;
				f1 = f2;
				x2 = lo + inv_phi * (hi - lo);
				f2 = fid(x2);
			}
			else
			{
				hi = x2;
				x2 = x1;
				f2 = f1;
				x1 = hi - inv_phi * (hi - lo);
				f1 = fid(x1);
			}
		}
		PeakResult best{grid_f[i], grid_t[i]};
		const double mid = 0.5 * (lo + hi);
		if(const double fm = fid(mid); fm > best.best_fidelity) best = {fm, mid};
		candidates.push_back(best);
	}

	double top = 0.0;
	for(const auto& c : candidates) top = std::max(top, c.best_fidelity);
	for(const auto& c : candidates) // candidates are in increasing time order
		if(c.best_fidelity >= top - 1e-9) return {std::min(c.best_fidelity, 1.0), c.best_time};
	return {grid_f[0], 0.0};
}

} // namespace spinwire
