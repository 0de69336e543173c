#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace spinwire
{

enum class ModelTag
{
	XY,
	Heisenberg,
	XYZGeneral,
};

std::string_view to_string(ModelTag tag);
ModelTag model_tag_from_string(std::string_view name);

/// Coupling constants of an xy-isotropic spin chain.
///
/// Only J^x is stored; J^y is identical by construction. Both matrices are
/// symmetric with zero diagonal and are indexed from 0 (site n in the
/// physics notation is index n-1 here).
struct ChainSpec
{
	int n_spins = 0;
	Eigen::MatrixXd jx;
	Eigen::MatrixXd jz;
	ModelTag model = ModelTag::XY;

	// provenance for disordered chains; both are echoed by the text format
	std::uint64_t seed = 0;
	double epsilon = 0.0;

	/// Throws std::invalid_argument when any structural invariant is violated.
	void validate() const;

	[[nodiscard]] bool is_nearest_neighbor() const;
};

/// Uniform nearest-neighbour chain with all bonds equal to `coupling`.
/// XYZGeneral uses `jz_ratio * coupling` for the zz part; the other models
/// ignore `jz_ratio`.
ChainSpec uniform_chain(int n_spins, ModelTag model, double coupling = 1.0,
                        double jz_ratio = 1.0);

/// Nearest-neighbour chain with per-bond couplings (bond b joins b and b+1).
ChainSpec chain_from_bonds(const std::vector<double>& jx_bonds,
                           const std::vector<double>& jz_bonds, ModelTag model);

/// Restriction of the chain Hamiltonian to the single-excitation subspace.
struct SubspaceHamiltonian
{
	Eigen::MatrixXcd matrix;

	[[nodiscard]] int dim() const { return static_cast<int>(matrix.rows()); }
};

/// H^(1)_{mn} = J^x_{mn} off the diagonal and
/// H^(1)_{nn} = 1/2 sum_{m<l} J^z_{ml} - sum_{m!=n} J^z_{nm}.
SubspaceHamiltonian build_subspace_hamiltonian(const ChainSpec& spec);

/// The uniform part 1/2 sum_{m<l} J^z_{ml} of every diagonal entry.
double uniform_diagonal_offset(const ChainSpec& spec);

/// Removes the exchange (flip-flop) coupling J^x = J^y of a bond. The Ising
/// part J^z of the bond is removed too only when `include_jz` is set.
struct SwitchOffCoupling
{
	int m = 0;
	int n = 1;
	bool include_jz = false;
};

struct AddCouplingDelta
{
	int m = 0;
	int n = 1;
	double delta = 0.0;
	bool include_jz = false;
};

struct DiagonalShift
{
	int site = 0;
	double delta = 0.0;
};

/// Local perturbation H_C switched on by the binary actuator. Site indices
/// are 0-based. The default switches off the bond between the first two
/// spins.
using Actuator = std::variant<SwitchOffCoupling, AddCouplingDelta, DiagonalShift>;

std::string describe(const Actuator& act);

/// H_2 = H_1 + H_C. The uniform diagonal offset of the unperturbed chain is
/// kept, so H_2 - H_1 vanishes outside the actuator footprint.
/// Switching off an already-zero coupling appends a message to `warnings`.
SubspaceHamiltonian apply_actuator(const ChainSpec& spec, const Actuator& act,
                                   std::vector<std::string>* warnings = nullptr);

/// Multiplies every nonzero nearest-neighbour bond by (1 + epsilon * xi) with
/// independent standard Gaussian xi per bond. J^z of a bond receives the same
/// factor, so XY and Heisenberg chains keep their model class. For unit bonds
/// this is J_{n,n+1} = 1 + epsilon * xi.
ChainSpec sample_disordered_chain(const ChainSpec& base, double epsilon,
                                  std::uint64_t seed);

} // namespace spinwire
