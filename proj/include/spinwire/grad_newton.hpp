#pragma once

#include "spinwire/propagator.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace spinwire
{

struct OptimizationProblem
{
	int k_max = 40;             // number of segments K
	double t_max = 110.0;       // bound on total time
	double t_min = 0.0;         // per-segment lower bound
	double initial_time = 100.0; // T_0 used to scale random initial guesses
	double error_threshold = 1e-4;
	std::optional<int> time_digits;
	StartPhase start_phase = StartPhase::ActuatorOnFirst;

	void validate() const;
	[[nodiscard]] bool feasible(const std::vector<double>& durations) const;
};

struct OptimizationResult
{
	SwitchingSequence sequence;
	double error = 1.0;
	double fidelity = 0.0;
	double total_time = 0.0;
	int iterations = 0;
	long fidelity_evaluations = 0;
	long gradient_evaluations = 0;
	double wall_time = 0.0;
	bool converged = false;
	std::uint64_t seed = 0;
	std::string stop_reason;
	int regularized_steps = 0;
	int gradient_fallbacks = 0;
	int restarts = 0;
	std::vector<double> error_history;          // error after each accepted step or restart
	std::vector<std::size_t> restart_positions; // history indices that begin a restart
	std::optional<double> quantized_error; // error after rounding to time_digits
};

/// Amplitude, error and (optionally) first/second derivatives of the
/// transfer error with respect to every segment duration.
struct ErrorDerivatives
{
	cplx amplitude;
	double error = 1.0;
	Eigen::VectorXd gradient;
	Eigen::MatrixXd hessian; // empty unless requested
};

/// Forward/backward partial-product sweep in the eigenbases of H_1 and H_2.
/// Gradient cost O(K N^2); the Hessian adds O(K^2 N^2).
ErrorDerivatives error_derivatives(const ControlCaches& caches, const SwitchingSequence& seq,
                                   bool with_hessian);

Eigen::VectorXd gradient(const ControlCaches& caches, const SwitchingSequence& seq);
Eigen::MatrixXd hessian(const ControlCaches& caches, const SwitchingSequence& seq);

struct NewtonOptions
{
	int max_iterations = 500;
	double step_tolerance = 1e-10;
	double armijo_c1 = 1e-4;
	int max_halvings = 40;
	double initial_gamma = 1.0;
	// the diagonal shift carried to the next iteration is scaled by these factors
	double mu_decrease = 0.25;
	double mu_increase = 2.0;
	double max_step = 1.0; // largest change of any single duration per iteration
	// stagnation: failed line search, step below tolerance, or `stall_iterations`
	// consecutive steps each reducing the error by less than `stall_decrease`
	int stall_iterations = 10;
	double stall_decrease = 1e-3;
	// restarts perturb the best point with N(0, kick_scale^2) per duration
	int max_restarts = 50;
	double kick_scale = 0.3;
	std::uint64_t kick_seed = 0;
};

/// Clamps to t_k >= t_min, then rescales the excess above t_min when the
/// total exceeds t_max. The result satisfies both bounds exactly.
void project_feasible(std::vector<double>& durations, const OptimizationProblem& problem);

/// Projected Newton iteration with Armijo backtracking on the step size and
/// a doubling diagonal shift whenever the reduced Hessian is not positive
/// definite. Throws std::invalid_argument when t0 is infeasible.
OptimizationResult newton_optimize(const OptimizationProblem& problem,
                                   const ControlCaches& caches, const SwitchingSequence& t0,
                                   const NewtonOptions& options = {});

/// K durations drawn uniformly, then rescaled so that they sum to
/// problem.initial_time (clipped to t_max) with every entry >= t_min.
SwitchingSequence random_initial_sequence(const OptimizationProblem& problem,
                                          std::uint64_t seed);

/// Lowest-error result of `n_starts` seeded Newton runs. Start i uses seed
/// split_seed(seed, i). All runs are returned through `runs` when given.
OptimizationResult multistart(const OptimizationProblem& problem, const ControlCaches& caches,
                              int n_starts, std::uint64_t seed,
                              const NewtonOptions& options = {}, int jobs = 1,
                              std::vector<OptimizationResult>* runs = nullptr);

struct QuantizedSequence
{
	SwitchingSequence sequence;
	double error_after = 1.0;
};

/// Rounds every duration to `digits` decimal places (ties to even) and
/// re-evaluates the transfer error.
QuantizedSequence quantize_times(const ControlCaches& caches, const SwitchingSequence& seq,
                                 int digits);

double round_to_digits(double value, int digits);

} // namespace spinwire
