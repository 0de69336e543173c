#include "spinwire/closed_loop.hpp"

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

std::string_view to_string(OracleMode mode)
{
	switch(mode)
	{
	case OracleMode::Exact: return "exact";
	case OracleMode::Quantized: return "quantized";
	case OracleMode::Sampled: return "sampled";
	}
	return "unknown";
}

OracleMode oracle_mode_from_string(std::string_view name)
{
	if(name == "exact") return OracleMode::Exact;
	if(name == "quantized") return OracleMode::Quantized;
	if(name == "sampled") return OracleMode::Sampled;
	throw std::invalid_argument("unknown oracle mode '" + std::string(name)
	                            + "' (expected exact, quantized or sampled)");
}

void OracleConfig::validate() const
{
	if(mode == OracleMode::Quantized && (digits < 1 || digits > 15))
		throw std::invalid_argument("oracle digits must lie in 1..15");
	if(mode == OracleMode::Sampled && repetitions < 1)
		throw std::invalid_argument("oracle repetitions must be >= 1");
}

double FidelityOracle::measure(const SwitchingSequence& seq)
{
	const Reading r = read(seq);
	++evaluations_;
	if(keep_log_) log_.push_back({r.exact, r.measured});
	return r.measured;
}

ModelOracle::ModelOracle(const ControlCaches& caches, const OracleConfig& config)
    : caches_(&caches), config_(config), rng_(config.seed)
{
	config_.validate();
	enable_log(config_.keep_log);
}

double ModelOracle::resolution() const
{
	switch(config_.mode)
	{
	case OracleMode::Exact: return 0.0;
	case OracleMode::Quantized: return std::pow(10.0, -config_.digits);
	case OracleMode::Sampled: return 1.0 / std::sqrt(static_cast<double>(config_.repetitions));
	}
	return 0.0;
}

FidelityOracle::Reading ModelOracle::read(const SwitchingSequence& seq)
{
	const double exact = transfer_fidelity(*caches_, seq).fidelity;
	switch(config_.mode)
	{
	case OracleMode::Exact: return {exact, exact};
	case OracleMode::Quantized: return {exact, round_to_digits(exact, config_.digits)};
	case OracleMode::Sampled:
	{
		std::binomial_distribution<long> shots(config_.repetitions, exact);
		return {exact,
		        static_cast<double>(shots(rng_)) / static_cast<double>(config_.repetitions)};
	}
	}
	return {exact, exact};
}

namespace
{

double step_for_resolution(double resolution)
{
	if(resolution <= 0.0) return 1e-5;
	const double digits = -std::log10(resolution);
	return std::pow(10.0, std::ceil((1.0 - digits) / 2.0));
}

double now_seconds()
{
	using clock = std::chrono::steady_clock;
	return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void check_start(const OptimizationProblem& problem, const SwitchingSequence& t0)
{
	problem.validate();
	t0.validate();
	if(!problem.feasible(t0.durations))
		throw std::invalid_argument("initial sequence violates t_min/t_max constraints");
}

/// Shared bookkeeping for the model-free optimisers.
class Run
{
public:
	Run(const OptimizationProblem& problem, FidelityOracle& oracle, const SwitchingSequence& t0,
	    long budget)
	    : problem_(problem), oracle_(oracle), phase_(t0.start_phase), budget_(budget),
	      first_eval_(oracle.evaluations()), started_(now_seconds())
	{
		result.sequence = t0;
		result.error = 1.0;
	}

	[[nodiscard]] long used() const { return oracle_.evaluations() - first_eval_; }
	[[nodiscard]] bool can_afford(long n) const { return used() + n <= budget_; }
	[[nodiscard]] bool solved() const { return result.error <= problem_.error_threshold; }

	double error(const std::vector<double>& x)
	{
		const double e = oracle_.measure_error(SwitchingSequence{x, phase_});
		if(e < result.error || result.error_history.empty())
		{
			result.error = e;
			result.sequence.durations = x;
		}
		return e;
	}

	OptimizationResult finish(std::string reason)
	{
		result.stop_reason = std::move(reason);
		result.fidelity = 1.0 - result.error;
		result.total_time = result.sequence.total_time();
		result.converged = solved();
		result.fidelity_evaluations = used();
		result.wall_time = now_seconds() - started_;
		return std::move(result);
	}

	OptimizationResult result;

private:
	const OptimizationProblem& problem_;
	FidelityOracle& oracle_;
	StartPhase phase_;
	long budget_;
	long first_eval_;
	double started_;
};

Eigen::VectorXd to_vector(const std::vector<double>& x)
{
	return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v)
{
	return {v.data(), v.data() + v.size()};
}

} // namespace

double default_gradient_step(const OracleConfig& config)
{
	switch(config.mode)
	{
	case OracleMode::Exact: return step_for_resolution(0.0);
	case OracleMode::Quantized: return step_for_resolution(std::pow(10.0, -config.digits));
	case OracleMode::Sampled:
		return step_for_resolution(1.0 / std::sqrt(static_cast<double>(config.repetitions)));
	}
	return 1e-5;
}

DiscreteGradient discrete_gradient(FidelityOracle& oracle, const SwitchingSequence& seq,
                                   double step, double t_min)
{
	if(!(step > 0.0)) throw std::invalid_argument("gradient step must be positive");
	seq.validate();
	DiscreteGradient out;
	out.gradient.resize(seq.size());
	bool any_nonzero = false;
	SwitchingSequence probe = seq;
	for(int k = 0; k < seq.size(); ++k)
	{
		const double t = seq.durations[static_cast<std::size_t>(k)];
		const double lo = std::max(t - step, t_min);
		const double hi = t + step;
		probe.durations[static_cast<std::size_t>(k)] = hi;
		const double e_hi = oracle.measure_error(probe);
		probe.durations[static_cast<std::size_t>(k)] = lo;
		const double e_lo = oracle.measure_error(probe);
		probe.durations[static_cast<std::size_t>(k)] = t;
		out.gradient(k) = (e_hi - e_lo) / (hi - lo);
		any_nonzero = any_nonzero || e_hi != e_lo;
	}
	out.reliable = any_nonzero;
	return out;
}

OptimizationResult quasi_newton_closed_loop(const OptimizationProblem& problem,
                                            FidelityOracle& oracle, const SwitchingSequence& t0,
                                            const ClosedLoopOptions& options)
{
	check_start(problem, t0);
	Run run(problem, oracle, t0, options.evaluation_budget);
	const int k_count = t0.size();
	const double h = options.gradient_step > 0.0 ? options.gradient_step
	                                             : step_for_resolution(oracle.resolution());
	std::mt19937_64 kick_rng(options.seed);

	std::vector<double> x = t0.durations;
	double current = run.error(x);
	run.result.error_history.push_back(current);

	Eigen::MatrixXd model; // curvature model, empty until scaled from the first gradient
	Eigen::VectorXd g_prev, s_prev;
	std::string reason = "iteration_cap";

	auto restart = [&]() {
		if(run.result.restarts >= options.max_restarts || !run.can_afford(1)) return false;
		++run.result.restarts;
		std::normal_distribution<double> noise(0.0, options.kick_scale);
		x = run.result.sequence.durations;
		for(double& t : x) t += noise(kick_rng);
		project_feasible(x, problem);
		current = run.error(x);
		run.result.restart_positions.push_back(run.result.error_history.size());
		run.result.error_history.push_back(current);
		model.resize(0, 0);
		g_prev.resize(0);
		return true;
	};

	for(int it = 0; it < options.max_iterations; ++it)
	{
		if(run.solved())
		{
			reason = "threshold";
			break;
		}
		if(!run.can_afford(2L * k_count + 1))
		{
			reason = "budget";
			break;
		}
		run.result.iterations = it + 1;

		const DiscreteGradient dg =
		    discrete_gradient(oracle, SwitchingSequence{x, t0.start_phase}, h, problem.t_min);
		++run.result.gradient_evaluations;
		const Eigen::VectorXd& g = dg.gradient;
		const double gmax = g.cwiseAbs().maxCoeff();

		bool accepted = false;
		double step = 0.0;
		if(dg.reliable && gmax > 0.0)
		{
			// damped BFGS update of the curvature model keeps it positive definite
			if(g_prev.size() == k_count && model.size() > 0)
			{
				const Eigen::VectorXd y = g - g_prev;
				const Eigen::VectorXd bs = model * s_prev;
				const double sbs = s_prev.dot(bs);
				const double sy = s_prev.dot(y);
				if(sbs > 0.0)
				{
					const double theta = sy >= 0.2 * sbs ? 1.0 : 0.8 * sbs / (sbs - sy);
					const Eigen::VectorXd r = theta * y + (1.0 - theta) * bs;
					model += r * r.transpose() / s_prev.dot(r) - bs * bs.transpose() / sbs;
				}
			}
			auto reset_model = [&] {
				model = Eigen::MatrixXd::Identity(k_count, k_count) * (gmax / options.max_step);
			};
			if(model.size() == 0) reset_model();

			auto direction_from_model = [&] {
				std::vector<int> free_idx;
				for(int k = 0; k < k_count; ++k)
					if(!(x[static_cast<std::size_t>(k)] <= problem.t_min + 1e-12 && g(k) > 0.0))
						free_idx.push_back(k);
				const auto nf = static_cast<Eigen::Index>(free_idx.size());
				Eigen::MatrixXd bf(nf, nf);
				Eigen::VectorXd gf(nf);
				for(Eigen::Index i = 0; i < nf; ++i)
				{
					gf(i) = g(free_idx[static_cast<std::size_t>(i)]);
					for(Eigen::Index j = 0; j < nf; ++j)
						bf(i, j) = model(free_idx[static_cast<std::size_t>(i)], free_idx[static_cast<std::size_t>(j)]);
				}
				Eigen::VectorXd d = Eigen::VectorXd::Zero(k_count);
				const Eigen::LLT<Eigen::MatrixXd> llt(bf);
				if(nf == 0 || llt.info() != Eigen::Success) return d;
				const Eigen::VectorXd df = llt.solve(-gf);
				for(Eigen::Index i = 0; i < nf; ++i) d(free_idx[static_cast<std::size_t>(i)]) = df(i);
				if(const double longest = d.cwiseAbs().maxCoeff(); longest > options.max_step)
					d *= options.max_step / longest;
				return d;
			};

			std::vector<double> x_new;
			double e_new = current;
			auto line_search = [&](const Eigen::VectorXd& d) {
				if(d.dot(g) >= 0.0) return false;
				double gamma = 1.0;
				for(int halving = 0; halving <= options.max_halvings; ++halving, gamma *= 0.5)
				{
					if(!run.can_afford(1)) return false;
					x_new = x;
					for(int k = 0; k < k_count; ++k)
						x_new[static_cast<std::size_t>(k)] += gamma * d(k);
					project_feasible(x_new, problem);
					const double decrease = g.dot(to_vector(x_new) - to_vector(x));
					e_new = run.error(x_new);
					if(e_new < current && e_new <= current + options.armijo_c1 * std::min(decrease, 0.0))
						return true;
				}
				return false;
			};

			accepted = line_search(direction_from_model());
			if(!accepted)
			{
				reset_model();
				accepted = line_search(direction_from_model());
			}
			if(accepted)
			{
				s_prev = to_vector(x_new) - to_vector(x);
				step = s_prev.cwiseAbs().maxCoeff();
				g_prev = g;
				x = std::move(x_new);
				current = e_new;
				run.result.error_history.push_back(current);
			}
		}

		if(run.solved())
		{
			reason = "threshold";
			break;
		}
		// slow progress: the error failed to shrink by the required factor over a window
		const auto& hist = run.result.error_history;
		const std::size_t since = run.result.restart_positions.empty() ? 0 : run.result.restart_positions.back();
		const bool slow = options.stall_window > 0
		                  && hist.size() > since + static_cast<std::size_t>(options.stall_window)
		                  && hist.back() > options.stall_factor * hist[hist.size() - 1 - static_cast<std::size_t>(options.stall_window)];
		const bool stalled = !accepted || step <= options.step_tolerance || slow;
		if(stalled && !restart())
		{
			reason = !dg.reliable ? "flat_gradient" : (run.can_afford(1) ? "stagnation" : "budget");
			break;
		}
	}
	if(run.solved()) reason = "threshold";
	return run.finish(reason);
}

OptimizationResult nelder_mead(const OptimizationProblem& problem, FidelityOracle& oracle,
                               const SwitchingSequence& t0, const ClosedLoopOptions& options)
{
	check_start(problem, t0);
	Run run(problem, oracle, t0, options.evaluation_budget);
	const int n = t0.size();
	constexpr double reflect = 1.0, expand = 2.0, contract = 0.5, shrink = 0.5;

	struct Vertex
	{
		Eigen::VectorXd x;
		double f;
	};
	std::vector<Vertex> simplex;
	bool out_of_budget = false;

	auto evaluate = [&](Eigen::VectorXd x) -> Vertex {
		std::vector<double> xs = to_std(x);
		project_feasible(xs, problem);
		if(!run.can_afford(1))
		{
			out_of_budget = true;
			return {to_vector(xs), 2.0};
		}
		const double f = run.error(xs);
		run.result.error_history.push_back(std::min(f, run.result.error));
		return {to_vector(xs), f};
	};

	auto build = [&](const Eigen::VectorXd& base, double base_f) {
		simplex.clear();
		simplex.push_back({base, base_f});
		for(int k = 0; k < n && !out_of_budget; ++k)
		{
			Eigen::VectorXd v = base;
			v(k) += options.simplex_initial_step;
			Vertex vert = evaluate(v);
			if((vert.x - base).cwiseAbs().maxCoeff() < 1e-12)
			{
				v = base;
				v(k) -= options.simplex_initial_step;
				vert = evaluate(v);
			}
			simplex.push_back(vert);
		}
	};

	const Vertex start = evaluate(to_vector(t0.durations));
	build(start.x, start.f);
	int restarts_left = options.simplex_restarts;
	std::string reason = "iteration_cap";

	for(long it = 0;; ++it)
	{
		std::sort(simplex.begin(), simplex.end(),
		          [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
		if(run.solved())
		{
			reason = "threshold";
			break;
		}
		if(out_of_budget || !run.can_afford(1))
		{
			reason = "budget";
			break;
		}
		run.result.iterations = static_cast<int>(std::min<long>(it + 1, 1L << 30));

		double spread = simplex.back().f - simplex.front().f;
		double size = 0.0;
		for(const auto& v : simplex)
			size = std::max(size, (v.x - simplex.front().x).cwiseAbs().maxCoeff());
		if(spread <= options.simplex_tolerance && size <= 1e-8)
		{
			if(restarts_left-- <= 0)
			{
				reason = "converged";
				break;
			}
			++run.result.restarts;
			build(simplex.front().x, simplex.front().f);
			continue;
		}

		Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
		for(int i = 0; i < n; ++i) centroid += simplex[static_cast<std::size_t>(i)].x;
		centroid /= n;
		Vertex& worst = simplex.back();
		const double second_worst = simplex[static_cast<std::size_t>(n - 1)].f;

		const Vertex reflected = evaluate(centroid + reflect * (centroid - worst.x));
		if(out_of_budget) continue;
		if(reflected.f < simplex.front().f)
		{
			const Vertex expanded = evaluate(centroid + expand * (reflected.x - centroid));
			worst = (!out_of_budget && expanded.f < reflected.f) ? expanded : reflected;
			continue;
		}
		if(reflected.f < second_worst)
		{
			worst = reflected;
			continue;
		}
		if(reflected.f < worst.f)
		{
			const Vertex outside = evaluate(centroid + contract * (reflected.x - centroid));
			if(!out_of_budget && outside.f <= reflected.f)
			{
				worst = outside;
				continue;
			}
		}
		else
		{
			const Vertex inside = evaluate(centroid + contract * (worst.x - centroid));
			if(!out_of_budget && inside.f < worst.f)
			{
				worst = inside;
				continue;
			}
		}
		if(out_of_budget) continue;
		const Eigen::VectorXd best = simplex.front().x;
		for(std::size_t i = 1; i < simplex.size() && !out_of_budget; ++i)
		{
			const Vertex shrunk = evaluate(best + shrink * (simplex[i].x - best));
			if(!out_of_budget) simplex[i] = shrunk;
		}
	}
	return run.finish(reason);
}

OptimizationResult genetic_optimize(const OptimizationProblem& problem, FidelityOracle& oracle,
                                    const SwitchingSequence& t0, const ClosedLoopOptions& options)
{
	check_start(problem, t0);
	if(options.population_size < 2) throw std::invalid_argument("population_size must be >= 2");
	if(options.tournament_size < 1) throw std::invalid_argument("tournament_size must be >= 1");
	Run run(problem, oracle, t0, options.evaluation_budget);
	std::mt19937_64 rng(options.seed);
	const auto pop_size = static_cast<std::size_t>(options.population_size);
	const auto genes = static_cast<std::size_t>(t0.size());

	struct Individual
	{
		std::vector<double> genome;
		double error;
	};
	std::vector<Individual> population;
	population.reserve(pop_size);
	for(std::size_t i = 0; i < pop_size && run.can_afford(1); ++i)
	{
		std::vector<double> genome = i == 0
		                                 ? t0.durations
		                                 : random_initial_sequence(problem, split_seed(options.seed, i)).durations;
		population.push_back({genome, run.error(genome)});
	}
	auto by_error = [](const Individual& a, const Individual& b) { return a.error < b.error; };

	std::uniform_int_distribution<std::size_t> pick(0, population.size() - 1);
	std::uniform_real_distribution<double> unit(0.0, 1.0);
	auto tournament = [&]() -> const Individual& {
		const Individual* best = &population[pick(rng)];
		for(int i = 1; i < options.tournament_size; ++i)
		{
			const Individual& other = population[pick(rng)];
			if(other.error < best->error) best = &other;
		}
		return *best;
	};

	double sigma = options.mutation_sigma;
	std::string reason = "budget";
	for(int gen = 0;; ++gen)
	{
		const auto elite = std::min_element(population.begin(), population.end(), by_error);
		run.result.error_history.push_back(elite->error);
		if(run.solved())
		{
			reason = "threshold";
			break;
		}
		if(!run.can_afford(1)) break;
		if(options.max_generations > 0 && gen >= options.max_generations)
		{
			reason = "generation_cap";
			break;
		}
		run.result.iterations = gen + 1;

		std::vector<Individual> next;
		next.reserve(pop_size);
		next.push_back(*elite);
		while(next.size() < population.size() && run.can_afford(1))
		{
			const Individual& a = tournament();
			const Individual& b = tournament();
			std::vector<double> child(genes);
			for(std::size_t k = 0; k < genes; ++k)
			{
				const double lo = std::min(a.genome[k], b.genome[k]);
				const double hi = std::max(a.genome[k], b.genome[k]);
				const double span = hi - lo;
				child[k] = lo - options.blend_alpha * span
				           + unit(rng) * (1.0 + 2.0 * options.blend_alpha) * span;
				if(sigma > 0.0 && unit(rng) < options.mutation_rate)
					child[k] += std::normal_distribution<double>(0.0, sigma)(rng);
			}
			project_feasible(child, problem);
			const double e = run.error(child);
			next.push_back({std::move(child), e});
		}
		// a generation cut short by the budget keeps the tail of the old one
		for(std::size_t i = next.size(); i < population.size(); ++i)
			next.push_back(population[i]);
		population = std::move(next);
		sigma *= options.mutation_decay;
	}
	return run.finish(reason);
}

const AlgorithmRow& BenchmarkReport::row(std::string_view algorithm) const
{
	for(const auto& r : rows)
		if(r.algorithm == algorithm) return r;
	throw std::out_of_range("no benchmark row for '" + std::string(algorithm) + "'");
}

BenchmarkReport compare_algorithms(const OptimizationProblem& problem, const ControlCaches& caches,
                                   const OracleConfig& oracle_config, int trials,
                                   std::uint64_t seed, const CompareOptions& options)
{
	if(trials < 1) throw std::invalid_argument("trials must be >= 1");
	problem.validate();
	oracle_config.validate();
	for(const auto& name : options.algorithms)
		if(std::find(std::begin(kAlgorithmNames), std::end(kAlgorithmNames), name)
		   == std::end(kAlgorithmNames))
			throw std::invalid_argument("unknown algorithm '" + name + "'");

	const std::size_t n_alg = options.algorithms.size();
	std::vector<std::vector<TrialRecord>> records(n_alg,
	                                              std::vector<TrialRecord>(static_cast<std::size_t>(trials)));

	parallel_for(static_cast<std::size_t>(trials), options.jobs, [&](std::size_t trial) {
		const std::uint64_t trial_seed = split_seed(seed, trial);
		const SwitchingSequence t0 = random_initial_sequence(problem, trial_seed);
		for(std::size_t a = 0; a < n_alg; ++a)
		{
			const std::string& name = options.algorithms[a];
			// streams are keyed by algorithm identity, not by list position
			const auto alg_id = static_cast<std::uint64_t>(
			    std::find(std::begin(kAlgorithmNames), std::end(kAlgorithmNames), name)
			    - std::begin(kAlgorithmNames));
			OracleConfig cfg = oracle_config;
			cfg.seed = split_seed(trial_seed, 1 + alg_id);
			ModelOracle oracle(caches, cfg);
			ClosedLoopOptions cl = options.closed_loop;
			cl.seed = split_seed(trial_seed, 100 + alg_id);

			OptimizationResult r;
			if(name == "genetic") r = genetic_optimize(problem, oracle, t0, cl);
			else if(name == "simplex") r = nelder_mead(problem, oracle, t0, cl);
			else if(name == "newton1") r = quasi_newton_closed_loop(problem, oracle, t0, cl);
			else
			{
				NewtonOptions nopt = options.newton;
				nopt.kick_seed = cl.seed;
				r = newton_optimize(problem, caches, t0, nopt);
			}
			r.seed = trial_seed;

			OracleConfig judge_cfg = oracle_config;
			judge_cfg.seed = split_seed(trial_seed, 1000 + alg_id);
			ModelOracle judge(caches, judge_cfg);

			TrialRecord& rec = records[a][trial];
			rec.trial = static_cast<int>(trial);
			rec.seed = trial_seed;
			rec.judged_error = judge.measure_error(r.sequence);
			rec.exact_error = transfer_fidelity(caches, r.sequence).error;
			rec.success = rec.judged_error <= problem.error_threshold;
			rec.result = std::move(r);
		}
	});

	BenchmarkReport report;
	for(std::size_t a = 0; a < n_alg; ++a)
	{
		AlgorithmRow row;
		row.algorithm = options.algorithms[a];
		double evals = 0, exe = 0, t_all = 0, t_ok = 0;
		int ok = 0;
		for(const auto& rec : records[a])
		{
			evals += static_cast<double>(rec.result.fidelity_evaluations);
			exe += rec.result.wall_time;
			t_all += rec.result.total_time;
			if(rec.success)
			{
				++ok;
				t_ok += rec.result.total_time;
				row.min_T = std::min(row.min_T.value_or(rec.result.total_time), rec.result.total_time);
			}
		}
		const double n = trials;
		row.success_pct = 100.0 * ok / n;
		row.mean_evals = evals / n;
		row.mean_exe_s = exe / n;
		row.mean_T_all = t_all / n;
		row.mean_T = ok > 0 ? t_ok / ok : row.mean_T_all;
		row.trials = std::move(records[a]);
		report.rows.push_back(std::move(row));
	}
	return report;
}

} // namespace spinwire
