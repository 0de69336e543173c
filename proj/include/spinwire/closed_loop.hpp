#pragma once

#include "spinwire/grad_newton.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace spinwire
{

enum class OracleMode
{
	Exact,
	Quantized,
	Sampled,
};

std::string_view to_string(OracleMode mode);
OracleMode oracle_mode_from_string(std::string_view name);

struct OracleConfig
{
	OracleMode mode = OracleMode::Quantized;
	int digits = 10;            // Quantized: decimal places kept
	long repetitions = 1000000; // Sampled: experiment repetitions per estimate
	std::uint64_t seed = 0;     // Sampled: random stream
	bool keep_log = false;

	void validate() const;
};

struct OracleLogEntry
{
	double exact = 0.0;
	double measured = 0.0;
};

/// Black-box fidelity measurement. Model-free optimisers only ever see this
/// interface; every call to measure() counts as one experiment.
class FidelityOracle
{
public:
	virtual ~FidelityOracle() = default;

	double measure(const SwitchingSequence& seq);
	double measure_error(const SwitchingSequence& seq) { return 1.0 - measure(seq); }

	[[nodiscard]] long evaluations() const { return evaluations_; }
	[[nodiscard]] const std::vector<OracleLogEntry>& log() const { return log_; }
	void enable_log(bool on) { keep_log_ = on; }

	/// Smallest resolvable fidelity difference, 0 for noiseless oracles.
	[[nodiscard]] virtual double resolution() const { return 0.0; }

protected:
	struct Reading
	{
		double exact;
		double measured;
	};
	virtual Reading read(const SwitchingSequence& seq) = 0;

private:
	long evaluations_ = 0;
	bool keep_log_ = false;
	std::vector<OracleLogEntry> log_;
};

/// Simulated experiment on a known model: exact, rounded to `digits`
/// decimals, or estimated from `repetitions` binary-outcome shots.
class ModelOracle final : public FidelityOracle
{
public:
	ModelOracle(const ControlCaches& caches, const OracleConfig& config);

	[[nodiscard]] double resolution() const override;
	[[nodiscard]] const OracleConfig& config() const { return config_; }

protected:
	Reading read(const SwitchingSequence& seq) override;

private:
	const ControlCaches* caches_;
	OracleConfig config_;
	std::mt19937_64 rng_;
};

/// Wraps an arbitrary fidelity function; used for surrogate objectives.
class FunctionOracle final : public FidelityOracle
{
public:
	explicit FunctionOracle(std::function<double(const SwitchingSequence&)> fidelity)
	    : fidelity_(std::move(fidelity))
	{}

protected:
	Reading read(const SwitchingSequence& seq) override
	{
		const double f = fidelity_(seq);
		return {f, f};
	}

private:
	std::function<double(const SwitchingSequence&)> fidelity_;
};

/// Step for central differences of a D-digit objective: 10^ceil((1-D)/2).
double default_gradient_step(const OracleConfig& config);

struct DiscreteGradient
{
	Eigen::VectorXd gradient;
	bool reliable = true; // false when every difference vanished
};

/// Central differences of the measured error, two oracle calls per segment.
/// Near t_min the lower stencil point is clamped and the spacing adjusted.
DiscreteGradient discrete_gradient(FidelityOracle& oracle, const SwitchingSequence& seq,
                                   double step, double t_min = 0.0);

struct ClosedLoopOptions
{
	long evaluation_budget = 20000;
	int max_iterations = 500;
	double gradient_step = 0.0; // 0 selects default_gradient_step
	double max_step = 1.0;
	double armijo_c1 = 1e-4;
	int max_halvings = 30;
	double step_tolerance = 1e-10;
	int max_restarts = 10;
	// restart when the error shrank by less than stall_factor over stall_window steps
	int stall_window = 10;
	double stall_factor = 0.5;
	double kick_scale = 0.3;
	std::uint64_t seed = 0;

	// Nelder-Mead
	double simplex_initial_step = 1.0;
	double simplex_tolerance = 1e-10;
	int simplex_restarts = 0;

	// genetic algorithm
	int population_size = 50;
	int tournament_size = 3;
	double blend_alpha = 0.5;
	double mutation_sigma = 0.5;
	double mutation_decay = 0.97;
	double mutation_rate = 0.1;
	int max_generations = 0; // 0: run until the budget is spent
};

/// Projected BFGS driven by discrete gradients of the measured error.
OptimizationResult quasi_newton_closed_loop(const OptimizationProblem& problem,
                                            FidelityOracle& oracle, const SwitchingSequence& t0,
                                            const ClosedLoopOptions& options = {});

/// Nelder-Mead simplex (reflection 1, expansion 2, contraction 0.5, shrink
/// 0.5). Trial points are projected onto the feasible set before measuring.
OptimizationResult nelder_mead(const OptimizationProblem& problem, FidelityOracle& oracle,
                               const SwitchingSequence& t0,
                               const ClosedLoopOptions& options = {});

/// Generational GA: tournament selection, blend crossover, Gaussian
/// mutation, one elite. The initial population holds t0 and random
/// sequences drawn like multistart initial guesses.
OptimizationResult genetic_optimize(const OptimizationProblem& problem, FidelityOracle& oracle,
                                    const SwitchingSequence& t0,
                                    const ClosedLoopOptions& options = {});

struct TrialRecord
{
	int trial = 0;
	std::uint64_t seed = 0;
	bool success = false;
	double judged_error = 1.0; // error measured once more by the trial's oracle
	double exact_error = 1.0;
	OptimizationResult result;
};

struct AlgorithmRow
{
	std::string algorithm;
	double success_pct = 0.0;
	double mean_evals = 0.0;
	double mean_exe_s = 0.0;
	double mean_T = 0.0; // over successful trials, over all trials when none succeed
	double mean_T_all = 0.0;
	std::optional<double> min_T;
	std::vector<TrialRecord> trials;
};

struct BenchmarkReport
{
	std::vector<AlgorithmRow> rows;

	[[nodiscard]] const AlgorithmRow& row(std::string_view algorithm) const;
};

inline constexpr const char* kAlgorithmNames[] = {"genetic", "simplex", "newton1", "newton2"};

struct CompareOptions
{
	ClosedLoopOptions closed_loop;
	NewtonOptions newton;
	std::vector<std::string> algorithms{std::begin(kAlgorithmNames), std::end(kAlgorithmNames)};
	int jobs = 1;
};

/// Runs every algorithm on `trials` seeded instances sharing per-trial
/// initial sequences; newton2 is the model-based Newton iteration.
BenchmarkReport compare_algorithms(const OptimizationProblem& problem, const ControlCaches& caches,
                                   const OracleConfig& oracle_config, int trials,
                                   std::uint64_t seed, const CompareOptions& options = {});

} // namespace spinwire
