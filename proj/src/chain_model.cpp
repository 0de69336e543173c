#include "spinwire/chain_model.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace spinwire
{

std::string_view to_string(ModelTag tag)
{
	switch(tag)
	{
	case ModelTag::XY: return "xy";
	case ModelTag::Heisenberg: return "heisenberg";
	case ModelTag::XYZGeneral: return "xyz";
	}
	return "unknown";
}

ModelTag model_tag_from_string(std::string_view name)
{
	if(name == "xy") return ModelTag::XY;
	if(name == "heisenberg") return ModelTag::Heisenberg;
	if(name == "xyz") return ModelTag::XYZGeneral;
	throw std::invalid_argument("unknown model '" + std::string(name)
	                            + "' (expected xy, heisenberg or xyz)");
}

void ChainSpec::validate() const
{
	if(n_spins < 2)
		throw std::invalid_argument("chain needs at least 2 spins");
	const auto n = static_cast<Eigen::Index>(n_spins);
	if(jx.rows() != n || jx.cols() != n || jz.rows() != n || jz.cols() != n)
		throw std::invalid_argument("coupling matrices must be n_spins x n_spins");
	if(!jx.allFinite() || !jz.allFinite())
		throw std::invalid_argument("coupling matrices must be finite");
	for(Eigen::Index i = 0; i < n; ++i)
	{
		if(jx(i, i) != 0.0 || jz(i, i) != 0.0)
			throw std::invalid_argument("self-coupling on the diagonal is not allowed");
		for(Eigen::Index j = i + 1; j < n; ++j)
		{
			if(jx(i, j) != jx(j, i) || jz(i, j) != jz(j, i))
				throw std::invalid_argument("coupling matrices must be symmetric");
		}
	}
	if(model == ModelTag::XY && !jz.isZero(0.0))
		throw std::invalid_argument("xy chain must have zero J^z");
	if(model == ModelTag::Heisenberg && jz != jx)
		throw std::invalid_argument("heisenberg chain must have J^z equal to J^x");
}

bool ChainSpec::is_nearest_neighbor() const
{
	for(Eigen::Index i = 0; i < jx.rows(); ++i)
		for(Eigen::Index j = i + 2; j < jx.cols(); ++j)
			if(jx(i, j) != 0.0 || jz(i, j) != 0.0) return false;
	return true;
}

ChainSpec uniform_chain(int n_spins, ModelTag model, double coupling, double jz_ratio)
{
	if(n_spins < 2) throw std::invalid_argument("chain needs at least 2 spins");
	const std::vector<double> jx(static_cast<std::size_t>(n_spins - 1), coupling);
	std::vector<double> jz(jx.size(), 0.0);
	if(model == ModelTag::Heisenberg) jz = jx;
	if(model == ModelTag::XYZGeneral)
		jz.assign(jx.size(), coupling * jz_ratio);
	return chain_from_bonds(jx, jz, model);
}

ChainSpec chain_from_bonds(const std::vector<double>& jx_bonds,
                           const std::vector<double>& jz_bonds, ModelTag model)
{
	if(jx_bonds.size() != jz_bonds.size())
		throw std::invalid_argument("jx and jz bond lists differ in length");
	ChainSpec spec;
	spec.n_spins = static_cast<int>(jx_bonds.size()) + 1;
	spec.model = model;
	spec.jx = Eigen::MatrixXd::Zero(spec.n_spins, spec.n_spins);
	spec.jz = Eigen::MatrixXd::Zero(spec.n_spins, spec.n_spins);
	for(std::size_t b = 0; b < jx_bonds.size(); ++b)
	{
		const auto i = static_cast<Eigen::Index>(b);
		spec.jx(i, i + 1) = spec.jx(i + 1, i) = jx_bonds[b];
		spec.jz(i, i + 1) = spec.jz(i + 1, i) = jz_bonds[b];
	}
	spec.validate();
	return spec;
}

double uniform_diagonal_offset(const ChainSpec& spec)
{
	return 0.5 * spec.jz.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().sum();
}

SubspaceHamiltonian build_subspace_hamiltonian(const ChainSpec& spec)
{
	spec.validate();
	const auto n = static_cast<Eigen::Index>(spec.n_spins);
	const double offset = uniform_diagonal_offset(spec);
	SubspaceHamiltonian h;
	h.matrix = spec.jx.cast<std::complex<double>>();
	for(Eigen::Index i = 0; i < n; ++i)
		h.matrix(i, i) = offset - spec.jz.row(i).sum();
	return h;
}

std::string describe(const Actuator& act)
{
	std::ostringstream os;
	std::visit(
	    [&os](const auto& a) {
		    using T = std::decay_t<decltype(a)>;
		    if constexpr(std::is_same_v<T, SwitchOffCoupling>)
			    os << "switch_off(" << a.m + 1 << "," << a.n + 1 << (a.include_jz ? ",jz" : "") << ")";
		    else if constexpr(std::is_same_v<T, AddCouplingDelta>)
			    os << "add_coupling(" << a.m + 1 << "," << a.n + 1 << "," << a.delta
			       << (a.include_jz ? ",jz" : "") << ")";
		    else
			    os << "diagonal_shift(" << a.site + 1 << "," << a.delta << ")";
	    },
	    act);
	return os.str();
}

namespace
{

void check_site(const ChainSpec& spec, int site)
{
	if(site < 0 || site >= spec.n_spins)
		throw std::invalid_argument("actuator site index out of range");
}

void check_bond(const ChainSpec& spec, int m, int n)
{
	check_site(spec, m);
	check_site(spec, n);
	if(m == n) throw std::invalid_argument("actuator bond needs two distinct sites");
}

} // namespace

SubspaceHamiltonian apply_actuator(const ChainSpec& spec, const Actuator& act,
                                   std::vector<std::string>* warnings)
{
	SubspaceHamiltonian h = build_subspace_hamiltonian(spec);
	// H_C is added entrywise so that everything outside the footprint stays bitwise equal to H_1;
	// a change dz of J^z_mn moves the diagonal at m and n by -dz (the uniform offset is kept)
	auto change_bond = [&](int m, int n, double dx, double dz) {
		h.matrix(m, n) += dx;
		h.matrix(n, m) += dx;
		h.matrix(m, m) -= dz;
		h.matrix(n, n) -= dz;
	};

	if(const auto* off = std::get_if<SwitchOffCoupling>(&act))
	{
		check_bond(spec, off->m, off->n);
		const double jx = spec.jx(off->m, off->n);
		const double jz = off->include_jz ? spec.jz(off->m, off->n) : 0.0;
		if(jx == 0.0 && jz == 0.0 && warnings)
			warnings->push_back("actuator switches off a coupling that is already zero");
		change_bond(off->m, off->n, -jx, -jz);
	}
	else if(const auto* add = std::get_if<AddCouplingDelta>(&act))
	{
		check_bond(spec, add->m, add->n);
		change_bond(add->m, add->n, add->delta, add->include_jz ? add->delta : 0.0);
	}
	else
	{
		const auto& shift = std::get<DiagonalShift>(act);
		check_site(spec, shift.site);
		h.matrix(shift.site, shift.site) += shift.delta;
	}
	return h;
}

ChainSpec sample_disordered_chain(const ChainSpec& base, double epsilon, std::uint64_t seed)
{
	if(!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
	base.validate();
	if(!base.is_nearest_neighbor())
		throw std::invalid_argument("disorder sampling needs a nearest-neighbour chain");

	ChainSpec out = base;
	out.seed = seed;
	out.epsilon = epsilon;
	std::mt19937_64 rng(seed);
	std::normal_distribution<double> gauss(0.0, 1.0);
	for(int i = 0; i + 1 < base.n_spins; ++i)
	{
		// one draw per bond, consumed even for zero bonds to keep streams aligned
		const double factor = 1.0 + epsilon * gauss(rng);
		if(base.jx(i, i + 1) == 0.0 && base.jz(i, i + 1) == 0.0) continue;
		out.jx(i, i + 1) = out.jx(i + 1, i) = base.jx(i, i + 1) * factor;
		out.jz(i, i + 1) = out.jz(i + 1, i) = base.jz(i, i + 1) * factor;
	}
	return out;
}

} // namespace spinwire
