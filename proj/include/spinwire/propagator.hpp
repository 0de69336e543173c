#pragma once

#include "spinwire/chain_model.hpp"

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace spinwire
{

using cplx = std::complex<double>;

/// Eigendecomposition H = V diag(lambda) V^dagger, eigenvalues ascending.
struct SpectralCache
{
	Eigen::VectorXd eigenvalues;
	Eigen::MatrixXcd eigenvectors;

	[[nodiscard]] int dim() const { return static_cast<int>(eigenvalues.size()); }

	/// exp(-i t H) assembled from the cached spectrum.
	[[nodiscard]] Eigen::MatrixXcd propagator(double t) const;
};

SpectralCache spectral_decompose(const SubspaceHamiltonian& h);

/// Which Hamiltonian governs the chronologically first segment.
enum class StartPhase
{
	ActuatorOffFirst,
	ActuatorOnFirst,
};

std::string_view to_string(StartPhase phase);
StartPhase start_phase_from_string(std::string_view name);

/// Segment durations in chronological order; the actuator state alternates
/// from segment to segment, beginning with `start_phase`.
///
/// The product form U = U^(1)(t_1) U^(2)(t_2) ... U^(2)(t_K) with the
/// rightmost factor acting first corresponds to ActuatorOnFirst with the
/// durations listed here in reverse factor order when K is even.
struct SwitchingSequence
{
	std::vector<double> durations;
	StartPhase start_phase = StartPhase::ActuatorOnFirst;

	[[nodiscard]] int size() const { return static_cast<int>(durations.size()); }
	[[nodiscard]] double total_time() const;
	/// True when segment k (chronological, 0-based) runs with the actuator on.
	[[nodiscard]] bool actuator_on(int k) const
	{
		return (start_phase == StartPhase::ActuatorOnFirst) == (k % 2 == 0);
	}
	void validate() const;
};

/// Both spectral caches plus the change-of-basis matrices between them.
/// `source` and `target` are 0-based site indices; target -1 means the last site.
struct ControlCaches
{
	SpectralCache off;
	SpectralCache on;
	Eigen::MatrixXcd off_to_on; // V_on^dagger V_off
	Eigen::MatrixXcd on_to_off; // V_off^dagger V_on
	int source = 0;
	int target = 0;

	static ControlCaches make(SpectralCache off, SpectralCache on, int source = 0,
	                          int target = -1);

	[[nodiscard]] int dim() const { return off.dim(); }
	[[nodiscard]] const SpectralCache& cache(bool actuator_on) const
	{
		return actuator_on ? on : off;
	}
};

/// Builds H_1 and H_2 = H_1 + H_C for a chain and decomposes both.
ControlCaches make_control_caches(const ChainSpec& spec,
                                  const Actuator& act = SwitchOffCoupling{},
                                  int source = 0, int target = -1);

/// Full propagator U(t) for the whole sequence.
Eigen::MatrixXcd evolve_sequence(const ControlCaches& caches, const SwitchingSequence& seq);

/// <target| U(t) |source>, obtained by propagating a single vector.
cplx transfer_amplitude(const ControlCaches& caches, const SwitchingSequence& seq);

struct TransferResult
{
	double fidelity = 0.0;
	double error = 1.0;
};

TransferResult transfer_fidelity(const ControlCaches& caches, const SwitchingSequence& seq);

struct TracePoint
{
	double t = 0.0;
	double population = 0.0;
	double norm = 1.0;
};

/// Target-site population sampled on a uniform grid of spacing `grid_step`
/// merged with every switching instant. The last point sits at the total time.
std::vector<TracePoint> population_trace(const ControlCaches& caches,
                                         const SwitchingSequence& seq, double grid_step);

struct PeakResult
{
	double best_fidelity = 0.0;
	double best_time = 0.0;
};

inline constexpr double kDefaultCoarseStep = 0.05;

/// Best free-evolution (actuator off) transfer fidelity over [0, t_max]:
/// coarse grid scan, then golden-section refinement of each promising grid
/// maximum to 1e-6 time resolution. Returns the earliest maximiser within
/// 1e-9 of the best fidelity.
PeakResult uncontrolled_peak(const SpectralCache& cache_off, double t_max,
                             double coarse_step = kDefaultCoarseStep, int source = 0,
                             int target = -1);

} // namespace spinwire
