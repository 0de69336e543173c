#include "spinwire/grad_newton.hpp"

#include "spinwire/parallel.hpp"
#include "spinwire/seeding.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace spinwire
{

void OptimizationProblem::validate() const
{
	if(k_max < 1) throw std::invalid_argument("k_max must be >= 1");
	if(!(t_max > 0.0)) throw std::invalid_argument("t_max must be positive");
	if(!(t_min >= 0.0)) throw std::invalid_argument("t_min must be >= 0");
	if(t_min * k_max > t_max)
		throw std::invalid_argument("k_max * t_min exceeds t_max; no feasible sequence");
	if(!(error_threshold > 0.0 && error_threshold < 1.0))
		throw std::invalid_argument("error_threshold must lie in (0, 1)");
	if(!(initial_time > 0.0)) throw std::invalid_argument("initial_time must be positive");
	if(time_digits && *time_digits < 1)
		throw std::invalid_argument("time_digits must be >= 1");
}

bool OptimizationProblem::feasible(const std::vector<double>& durations) const
{
	double total = 0.0;
	for(double t : durations)
	{
		if(!(t >= t_min)) return false;
		total += t;
	}
	return total <= t_max;
}

ErrorDerivatives error_derivatives(const ControlCaches& caches, const SwitchingSequence& seq,
                                   bool with_hessian)
{
	seq.validate();
	const int k_count = seq.size();
	const Eigen::Index n = caches.dim();

	auto basis_change = [&](bool from_on) -> const Eigen::MatrixXcd& {
		return from_on ? caches.on_to_off : caches.off_to_on;
	};

	std::vector<Eigen::VectorXcd> phase(static_cast<std::size_t>(k_count));
	for(int k = 0; k < k_count; ++k)
	{
		const auto& lambda = caches.cache(seq.actuator_on(k)).eigenvalues;
		auto& p = phase[static_cast<std::size_t>(k)];
		p.resize(n);
		for(Eigen::Index j = 0; j < n; ++j) p(j) = std::polar(1.0, -lambda(j) * seq.durations[k]);
	}

	// psi[k]: state after segment k, coordinates in the eigenbasis of segment k
	std::vector<Eigen::VectorXcd> psi(static_cast<std::size_t>(k_count));
	Eigen::VectorXcd c = caches.cache(seq.actuator_on(0)).eigenvectors.row(caches.source).adjoint();
	for(int k = 0; k < k_count; ++k)
	{
		if(k > 0) c = basis_change(seq.actuator_on(k - 1)) * c;
		c = c.cwiseProduct(phase[static_cast<std::size_t>(k)]);
		psi[static_cast<std::size_t>(k)] = c;
	}

	// phi[k]: (U_K ... U_{k+1})^dagger |target>, same coordinates as psi[k]
	std::vector<Eigen::VectorXcd> phi(static_cast<std::size_t>(k_count));
	Eigen::VectorXcd b =
	    caches.cache(seq.actuator_on(k_count - 1)).eigenvectors.row(caches.target).adjoint();
	phi[static_cast<std::size_t>(k_count - 1)] = b;
	for(int k = k_count - 1; k > 0; --k)
	{
		b = basis_change(seq.actuator_on(k)) * b.cwiseProduct(phase[static_cast<std::size_t>(k)].conjugate());
		phi[static_cast<std::size_t>(k - 1)] = b;
	}

	ErrorDerivatives out;
	out.amplitude = phi.back().dot(psi.back());
	out.error = std::clamp(1.0 - std::norm(out.amplitude), 0.0, 1.0);

	const cplx minus_i{0.0, -1.0};
	Eigen::VectorXcd da(k_count);
	for(int k = 0; k < k_count; ++k)
	{
		const auto& lambda = caches.cache(seq.actuator_on(k)).eigenvalues;
		const auto ku = static_cast<std::size_t>(k);
		da(k) = minus_i * phi[ku].dot(lambda.cast<cplx>().cwiseProduct(psi[ku]));
	}
	out.gradient = (-2.0 * (std::conj(out.amplitude) * da.array()).real()).matrix();

	if(!with_hessian) return out;

	out.hessian.resize(k_count, k_count);
	for(int k = 0; k < k_count; ++k)
	{
		const auto ku = static_cast<std::size_t>(k);
		const auto& lambda_k = caches.cache(seq.actuator_on(k)).eigenvalues;
		const Eigen::VectorXcd lk = lambda_k.cast<cplx>();
		const cplx d2_kk = -phi[ku].dot(lk.cwiseProduct(lk).cwiseProduct(psi[ku]));
		out.hessian(k, k) =
		    -2.0 * (std::norm(da(k)) + std::conj(out.amplitude) * d2_kk).real();

		Eigen::VectorXcd chi = minus_i * lk.cwiseProduct(psi[ku]);
		for(int l = k + 1; l < k_count; ++l)
		{
			const auto lu = static_cast<std::size_t>(l);
			chi = basis_change(seq.actuator_on(l - 1)) * chi;
			chi = chi.cwiseProduct(phase[lu]);
			const auto& lambda_l = caches.cache(seq.actuator_on(l)).eigenvalues;
			const cplx d2_kl = minus_i * phi[lu].dot(lambda_l.cast<cplx>().cwiseProduct(chi));
			const double h = -2.0 * (std::conj(da(l)) * da(k) + std::conj(out.amplitude) * d2_kl).real();
			out.hessian(k, l) = out.hessian(l, k) = h;
		}
	}
	return out;
}

Eigen::VectorXd gradient(const ControlCaches& caches, const SwitchingSequence& seq)
{
	return error_derivatives(caches, seq, false).gradient;
}

Eigen::MatrixXd hessian(const ControlCaches& caches, const SwitchingSequence& seq)
{
	return error_derivatives(caches, seq, true).hessian;
}

void project_feasible(std::vector<double>& durations, const OptimizationProblem& problem)
{
	for(double& t : durations) t = std::max(t, problem.t_min);
	const double total = std::accumulate(durations.begin(), durations.end(), 0.0);
	if(total <= problem.t_max) return;

	const double floor_total = problem.t_min * static_cast<double>(durations.size());
	double scale = (problem.t_max - floor_total) / (total - floor_total);
	for(;;)
	{
		std::vector<double> scaled = durations;
		for(double& t : scaled) t = problem.t_min + (t - problem.t_min) * scale;
		if(std::accumulate(scaled.begin(), scaled.end(), 0.0) <= problem.t_max)
		{
			durations = std::move(scaled);
			return;
		}
		scale *= 1.0 - 1e-15;
	}
}

namespace
{

double now_seconds()
{
	using clock = std::chrono::steady_clock;
	return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

/// Solves (H + mu I) d = -g starting from `mu` and doubling it until the
/// Cholesky factorisation succeeds. `mu` returns the shift actually used.
Eigen::VectorXd regularized_newton_direction(const Eigen::MatrixXd& h, const Eigen::VectorXd& g,
                                             double& mu)
{
	const auto n = h.rows();
	const double scale = 1.0 + h.diagonal().cwiseAbs().maxCoeff();
	for(int attempt = 0; attempt < 200; ++attempt)
	{
		const Eigen::LLT<Eigen::MatrixXd> llt(h + mu * Eigen::MatrixXd::Identity(n, n));
		if(llt.info() == Eigen::Success)
		{
			Eigen::VectorXd d = llt.solve(-g);
			if(d.allFinite()) return d;
		}
		mu = std::max(2.0 * mu, 1e-8 * scale);
	}
	return {};
}

void finish(OptimizationResult& r, const OptimizationProblem& problem, const ControlCaches& caches)
{
	r.fidelity = 1.0 - r.error;
	r.total_time = r.sequence.total_time();
	r.converged = r.error <= problem.error_threshold;
	if(problem.time_digits)
		r.quantized_error = quantize_times(caches, r.sequence, *problem.time_digits).error_after;
}

} // namespace

OptimizationResult newton_optimize(const OptimizationProblem& problem, const ControlCaches& caches,
                                   const SwitchingSequence& t0, const NewtonOptions& options)
{
	problem.validate();
	t0.validate();
	if(!problem.feasible(t0.durations))
		throw std::invalid_argument("initial sequence violates t_min/t_max constraints");

	const double started = now_seconds();
	OptimizationResult r;
	r.sequence = t0;
	const int k_count = t0.size();

	auto measure = [&](const std::vector<double>& x) {
		++r.fidelity_evaluations;
		return transfer_fidelity(caches, SwitchingSequence{x, t0.start_phase}).error;
	};

	std::vector<double> x = t0.durations;
	ErrorDerivatives d = error_derivatives(caches, r.sequence, true);
	++r.fidelity_evaluations;
	++r.gradient_evaluations;
	double current = d.error;
	r.error = current;
	r.error_history.push_back(current);
	r.stop_reason = "iteration_cap";

	std::mt19937_64 kick_rng(options.kick_seed);
	int slow_steps = 0;
	double mu = 0.0;
	double mu_used = 0.0;

	// a kick restarts the descent from a perturbed copy of the best point
	auto try_restart = [&]() {
		if(r.restarts >= options.max_restarts) return false;
		++r.restarts;
		std::normal_distribution<double> noise(0.0, options.kick_scale);
		x = r.sequence.durations;
		for(double& t : x) t += noise(kick_rng);
		project_feasible(x, problem);
		d = error_derivatives(caches, SwitchingSequence{x, t0.start_phase}, true);
		++r.fidelity_evaluations;
		++r.gradient_evaluations;
		current = d.error;
		slow_steps = 0;
		r.restart_positions.push_back(r.error_history.size());
		r.error_history.push_back(current);
		if(current < r.error)
		{
			r.error = current;
			r.sequence.durations = x;
		}
		return true;
	};

	for(int it = 0; it < options.max_iterations; ++it)
	{
		if(r.error <= problem.error_threshold) break;
		r.iterations = it + 1;

		// variables pinned at t_min whose gradient pushes further down stay fixed
		std::vector<int> free_idx;
		for(int k = 0; k < k_count; ++k)
		{
			const bool pinned =
			    x[static_cast<std::size_t>(k)] <= problem.t_min + 1e-12 && d.gradient(k) > 0.0;
			if(!pinned) free_idx.push_back(k);
		}
		const auto nf = static_cast<Eigen::Index>(free_idx.size());
		Eigen::VectorXd direction = Eigen::VectorXd::Zero(k_count);
		if(nf > 0)
		{
			Eigen::MatrixXd hf(nf, nf);
			Eigen::VectorXd gf(nf);
			for(Eigen::Index i = 0; i < nf; ++i)
			{
				const auto fi = free_idx[static_cast<std::size_t>(i)];
				gf(i) = d.gradient(fi);
				for(Eigen::Index j = 0; j < nf; ++j)
					hf(i, j) = d.hessian(fi, free_idx[static_cast<std::size_t>(j)]);
			}
			mu_used = mu;
			const Eigen::VectorXd df = regularized_newton_direction(hf, gf, mu_used);
			if(mu_used > 0.0) ++r.regularized_steps;
			if(df.size() == nf)
				for(Eigen::Index i = 0; i < nf; ++i)
					direction(free_idx[static_cast<std::size_t>(i)]) = df(i);
		}
		if(const double longest = direction.cwiseAbs().maxCoeff(); longest > options.max_step)
			direction *= options.max_step / longest;

		int halvings = 0;
		auto line_search = [&](const Eigen::VectorXd& dir, double gamma,
		                       std::vector<double>& x_new, double& e_new) {
			for(halvings = 0; halvings <= options.max_halvings; ++halvings, gamma *= 0.5)
			{
				x_new = x;
				for(int k = 0; k < k_count; ++k)
					x_new[static_cast<std::size_t>(k)] += gamma * dir(k);
				project_feasible(x_new, problem);
				double decrease = 0.0;
				for(int k = 0; k < k_count; ++k)
					decrease += d.gradient(k)
					            * (x_new[static_cast<std::size_t>(k)] - x[static_cast<std::size_t>(k)]);
				e_new = measure(x_new);
				if(e_new <= current + options.armijo_c1 * std::min(decrease, 0.0) && e_new <= current)
					return true;
			}
			return false;
		};

		std::vector<double> x_new;
		double e_new = current;
		bool accepted = direction.squaredNorm() > 0.0 && direction.dot(d.gradient) < 0.0
		                && line_search(direction, options.initial_gamma, x_new, e_new);
		// Levenberg-style adaptation: relax the shift after full steps, stiffen it otherwise
		if(accepted && halvings == 0)
			mu = mu_used * options.mu_decrease < 1e-12 ? 0.0 : mu_used * options.mu_decrease;
		else
			mu = std::max(mu_used * options.mu_increase, 1e-6);
		if(!accepted)
		{
			if(const double gmax = d.gradient.cwiseAbs().maxCoeff(); gmax > 0.0)
			{
				++r.gradient_fallbacks;
				accepted = line_search(-d.gradient / gmax, options.max_step, x_new, e_new);
			}
		}

		double step = 0.0;
		if(accepted)
		{
			for(int k = 0; k < k_count; ++k)
				step = std::max(step, std::abs(x_new[static_cast<std::size_t>(k)]
				                               - x[static_cast<std::size_t>(k)]));
			slow_steps = e_new > current * (1.0 - options.stall_decrease) ? slow_steps + 1 : 0;
			x = std::move(x_new);
			current = e_new;
			r.error_history.push_back(current);
			if(current < r.error)
			{
				r.error = current;
				r.sequence.durations = x;
			}
			if(current <= problem.error_threshold) break;
			d = error_derivatives(caches, SwitchingSequence{x, t0.start_phase}, true);
			++r.gradient_evaluations;
		}

		const bool stalled = !accepted || step <= options.step_tolerance
		                     || slow_steps >= options.stall_iterations;
		if(stalled && !try_restart())
		{
			r.stop_reason = accepted ? "step_tolerance" : "stagnation";
			break;
		}
	}
	if(r.error <= problem.error_threshold) r.stop_reason = "threshold";

	finish(r, problem, caches);
	r.wall_time = now_seconds() - started;
	return r;
}

SwitchingSequence random_initial_sequence(const OptimizationProblem& problem, std::uint64_t seed)
{
	problem.validate();
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> unif(0.0, 1.0);
	std::vector<double> raw(static_cast<std::size_t>(problem.k_max));
	for(double& v : raw) v = unif(rng);
	const double sum = std::accumulate(raw.begin(), raw.end(), 0.0);

	const double target = std::min(problem.initial_time, problem.t_max);
	const double spare = std::max(0.0, target - problem.t_min * problem.k_max);
	SwitchingSequence seq;
	seq.start_phase = problem.start_phase;
	seq.durations.reserve(raw.size());
	for(double v : raw) seq.durations.push_back(problem.t_min + spare * v / sum);
	project_feasible(seq.durations, problem);
	return seq;
}

OptimizationResult multistart(const OptimizationProblem& problem, const ControlCaches& caches,
                              int n_starts, std::uint64_t seed, const NewtonOptions& options,
                              int jobs, std::vector<OptimizationResult>* runs)
{
	if(n_starts < 1) throw std::invalid_argument("n_starts must be >= 1");
	std::vector<OptimizationResult> results(static_cast<std::size_t>(n_starts));
	parallel_for(results.size(), jobs, [&](std::size_t i) {
		const std::uint64_t run_seed = split_seed(seed, i);
		auto& r = results[i];
		NewtonOptions run_options = options;
		run_options.kick_seed = split_seed(run_seed, 0x6b69636b);
		r = newton_optimize(problem, caches, random_initial_sequence(problem, run_seed), run_options);
		r.seed = run_seed;
	});

	std::size_t best = 0;
	for(std::size_t i = 1; i < results.size(); ++i)
		if(results[i].error < results[best].error) best = i;
	OptimizationResult out = results[best];
	if(runs) *runs = std::move(results);
	return out;
}

double round_to_digits(double value, int digits)
{
	const double scale = std::pow(10.0, digits);
	return std::nearbyint(value * scale) / scale;
}

QuantizedSequence quantize_times(const ControlCaches& caches, const SwitchingSequence& seq,
                                 int digits)
{
	if(digits < 1) throw std::invalid_argument("digits must be >= 1");
	QuantizedSequence q{seq, 1.0};
	for(double& t : q.sequence.durations) t = std::max(0.0, round_to_digits(t, digits));
	q.error_after = transfer_fidelity(caches, q.sequence).error;
	return q;
}

} // namespace spinwire
