#include "spinwire/scenarios.hpp"

#include "spinwire/parallel.hpp"
#include "spinwire/seeding.hpp"
#include "spinwire/serialization.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <set>

#ifndef SPINWIRE_VERSION
#define SPINWIRE_VERSION "0.0.0"
#endif

namespace spinwire
{

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view artifact_version() { return SPINWIRE_VERSION; }

namespace
{

struct ScenarioName
{
	Scenario scenario;
	const char* name;
};

constexpr ScenarioName kScenarios[] = {
    {Scenario::FlowTrace, "flow-trace"},
    {Scenario::UniformSweep, "uniform-sweep"},
    {Scenario::KtSweep, "kt-sweep"},
    {Scenario::DisorderEnsemble, "disorder-ensemble"},
    {Scenario::ClosedLoopBench, "closed-loop-bench"},
    {Scenario::BaselineScan, "baseline-scan"},
};

// stream 0 of the master seed draws the disorder of single-chain scenarios
constexpr std::uint64_t kChainStream = 0;

std::string join(const std::vector<std::string>& items, const char* sep = ", ")
{
	std::string out;
	for(std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
	return out;
}

std::vector<int> int_range(int from, int to, int step)
{
	std::vector<int> out;
	for(int v = from; v <= to; v += step) out.push_back(v);
	return out;
}

std::vector<double> real_range(double from, double to, double step)
{
	std::vector<double> out;
	const auto n = static_cast<long>(std::floor((to - from) / step + 1e-9));
	for(long i = 0; i <= n; ++i) out.push_back(from + static_cast<double>(i) * step);
	return out;
}

// first line holding `"key":`, 0 when absent
std::size_t line_of(const std::string& text, const std::string& key)
{
	const std::string needle = "\"" + key + "\"";
	for(auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1))
	{
		auto after = text.find_first_not_of(" \t\r\n", pos + needle.size());
		if(after != std::string::npos && text[after] == ':')
			return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
	}
	return 0;
}

using Setter = std::function<std::optional<std::string>(const json&)>;

Setter real(double& out)
{
	return [&out](const json& v) -> std::optional<std::string> {
		if(!v.is_number()) return "must be a number";
		out = v.get<double>();
		if(!std::isfinite(out)) return "must be finite";
		return std::nullopt;
	};
}

Setter opt_real(std::optional<double>& out)
{
	return [&out](const json& v) -> std::optional<std::string> {
		if(v.is_null())
		{
			out.reset();
			return std::nullopt;
		}
		if(!v.is_number()) return "must be a number or null";
		out = v.get<double>();
		return std::nullopt;
	};
}

template<typename Int>
Setter integer(Int& out)
{
	return [&out](const json& v) -> std::optional<std::string> {
		if(!v.is_number_integer()) return "must be an integer";
		out = v.get<Int>();
		return std::nullopt;
	};
}

Setter opt_integer(std::optional<int>& out)
{
	return [&out](const json& v) -> std::optional<std::string> {
		if(v.is_null())
		{
			out.reset();
			return std::nullopt;
		}
		if(!v.is_number_integer()) return "must be an integer or null";
		out = v.get<int>();
		return std::nullopt;
	};
}

Setter seed_value(std::uint64_t& out)
{
	return [&out](const json& v) -> std::optional<std::string> {
		if(!v.is_number_unsigned()) return "must be a non-negative integer";
		out = v.get<std::uint64_t>();
		return std::nullopt;
	};
}

// a list, or {"from": a, "to": b, "step": s} with both ends inclusive
Setter int_list(std::vector<int>& out)
{
	return [&out](const json& v) -> std::optional<std::string> {
		if(v.is_array())
		{
			out.clear();
			for(const auto& e : v)
			{
				if(!e.is_number_integer()) return "entries must be integers";
				out.push_back(e.get<int>());
			}
			return std::nullopt;
		}
		if(v.is_object())
		{
			for(const auto& item : v.items())
				if(item.key() != "from" && item.key() != "to" && item.key() != "step")
					return "unknown range key '" + item.key() + "'";
			const json step = v.value("step", json(1));
			if(!v.contains("from") || !v.contains("to") || !v["from"].is_number_integer() ||
			   !v["to"].is_number_integer() || !step.is_number_integer())
				return "range needs integer from, to and optional step";
			if(step.get<int>() < 1) return "range step must be >= 1";
			out = int_range(v["from"].get<int>(), v["to"].get<int>(), step.get<int>());
			return std::nullopt;
		}
		return "must be a list or a {from, to, step} range";
	};
}

Setter real_list(std::vector<double>& out)
{
	return [&out](const json& v) -> std::optional<std::string> {
		if(v.is_array())
		{
			out.clear();
			for(const auto& e : v)
			{
				if(!e.is_number()) return "entries must be numbers";
				out.push_back(e.get<double>());
			}
			return std::nullopt;
		}
		if(v.is_object())
		{
			for(const auto& item : v.items())
				if(item.key() != "from" && item.key() != "to" && item.key() != "step")
					return "unknown range key '" + item.key() + "'";
			if(!v.contains("from") || !v.contains("to") || !v.contains("step") ||
			   !v["from"].is_number() || !v["to"].is_number() || !v["step"].is_number())
				return "range needs numeric from, to and step";
			if(!(v["step"].get<double>() > 0.0)) return "range step must be positive";
			out = real_range(v["from"].get<double>(), v["to"].get<double>(), v["step"].get<double>());
			return std::nullopt;
		}
		return "must be a list or a {from, to, step} range";
	};
}

Setter path_value(std::optional<fs::path>& out, const fs::path& base_dir)
{
	return [&out, base_dir](const json& v) -> std::optional<std::string> {
		if(!v.is_string()) return "must be a path string";
		fs::path p = v.get<std::string>();
		if(p.is_relative() && !base_dir.empty()) p = base_dir / p;
		out = p.lexically_normal();
		return std::nullopt;
	};
}

json actuator_to_json(const Actuator& act)
{
	return std::visit(
	    [](const auto& a) -> json {
		    using T = std::decay_t<decltype(a)>;
		    if constexpr(std::is_same_v<T, SwitchOffCoupling>)
			    return {{"kind", "switch_off"}, {"sites", {a.m + 1, a.n + 1}}, {"include_jz", a.include_jz}};
		    else if constexpr(std::is_same_v<T, AddCouplingDelta>)
			    return {{"kind", "add_coupling"},
			            {"sites", {a.m + 1, a.n + 1}},
			            {"delta", a.delta},
			            {"include_jz", a.include_jz}};
		    else
			    return {{"kind", "diagonal_shift"}, {"site", a.site + 1}, {"delta", a.delta}};
	    },
	    act);
}

// sites of the actuator footprint, 0-based
std::vector<int> actuator_sites(const Actuator& act)
{
	return std::visit(
	    [](const auto& a) -> std::vector<int> {
		    using T = std::decay_t<decltype(a)>;
		    if constexpr(std::is_same_v<T, DiagonalShift>) return {a.site};
		    else return {a.m, a.n};
	    },
	    act);
}

std::vector<std::string> parse_actuator(const json& v, Actuator& out)
{
	if(!v.is_object()) return {"must be an object"};
	std::vector<std::string> errs;
	static const std::set<std::string> known = {"kind", "sites", "site", "delta", "include_jz"};
	for(const auto& item : v.items())
		if(!known.count(item.key())) errs.push_back("unknown key '" + item.key() + "'");

	const std::string kind = v.value("kind", std::string("switch_off"));
	std::pair<int, int> sites{1, 2};
	if(v.contains("sites"))
	{
		const auto& s = v["sites"];
		if(!s.is_array() || s.size() != 2 || !s[0].is_number_integer() || !s[1].is_number_integer())
			errs.push_back("sites must be two 1-based site indices");
		else
		{
			sites = {s[0].get<int>(), s[1].get<int>()};
			if(sites.first < 1 || sites.second < 1 || sites.first == sites.second)
				errs.push_back("sites must be two distinct 1-based indices");
		}
	}
	bool include_jz = false;
	if(v.contains("include_jz"))
	{
		if(!v["include_jz"].is_boolean()) errs.push_back("include_jz must be a boolean");
		else include_jz = v["include_jz"].get<bool>();
	}
	double delta = 0.0;
	if(v.contains("delta"))
	{
		if(!v["delta"].is_number()) errs.push_back("delta must be a number");
		else delta = v["delta"].get<double>();
	}

	if(kind == "switch_off")
	{
		if(v.contains("delta") || v.contains("site")) errs.push_back("switch_off takes only sites and include_jz");
		out = SwitchOffCoupling{sites.first - 1, sites.second - 1, include_jz};
	}
	else if(kind == "add_coupling")
	{
		if(!v.contains("delta")) errs.push_back("add_coupling needs delta");
		if(v.contains("site")) errs.push_back("add_coupling takes sites, not site");
		out = AddCouplingDelta{sites.first - 1, sites.second - 1, delta, include_jz};
	}
	else if(kind == "diagonal_shift")
	{
		int site = 1;
		if(!v.contains("site") || !v["site"].is_number_integer())
			errs.push_back("diagonal_shift needs an integer site");
		else site = v["site"].get<int>();
		if(site < 1) errs.push_back("site must be a 1-based index");
		if(!v.contains("delta")) errs.push_back("diagonal_shift needs delta");
		if(v.contains("sites") || v.contains("include_jz"))
			errs.push_back("diagonal_shift takes only site and delta");
		out = DiagonalShift{site - 1, delta};
	}
	else
		errs.push_back("kind must be one of switch_off, add_coupling, diagonal_shift");
	return errs;
}

std::vector<std::string> parse_oracle(const json& v, OracleConfig& out)
{
	if(!v.is_object()) return {"must be an object"};
	std::vector<std::string> errs;
	for(const auto& item : v.items())
		if(item.key() != "mode" && item.key() != "digits" && item.key() != "repetitions")
			errs.push_back("unknown key '" + item.key() + "'");
	if(v.contains("mode"))
	{
		try
		{
			out.mode = oracle_mode_from_string(v["mode"].get<std::string>());
		}
		catch(const std::exception&)
		{
			errs.push_back("mode must be one of exact, quantized, sampled");
		}
	}
	if(v.contains("digits"))
	{
		if(!v["digits"].is_number_integer()) errs.push_back("digits must be an integer");
		else out.digits = v["digits"].get<int>();
	}
	if(v.contains("repetitions"))
	{
		if(!v["repetitions"].is_number_integer()) errs.push_back("repetitions must be an integer");
		else out.repetitions = v["repetitions"].get<long>();
	}
	try
	{
		out.validate();
	}
	catch(const std::exception& e)
	{
		errs.push_back(e.what());
	}
	return errs;
}

const std::vector<std::string> kChainKeys = {"model", "jz_ratio", "n_spins", "epsilon", "chain_file", "actuator"};
const std::vector<std::string> kProblemKeys = {"k_segments", "t0", "t_max", "t_min", "threshold",
                                               "time_digits", "start_phase", "restarts", "max_iterations"};

std::vector<std::string> concat(std::initializer_list<std::vector<std::string>> parts)
{
	std::vector<std::string> out{"seed"};
	for(const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
	return out;
}

bool uses_single_chain(Scenario s)
{
	return s == Scenario::FlowTrace || s == Scenario::KtSweep || s == Scenario::ClosedLoopBench;
}

ChainSpec base_chain(const ScenarioConfig& c, int n_spins)
{
	if(c.chain_file) return read_chain_file(*c.chain_file);
	return uniform_chain(n_spins, c.model, 1.0, c.jz_ratio);
}

// chain of a single-chain scenario, disorder drawn from stream 0; chain files are used verbatim
ChainSpec scenario_chain(const ScenarioConfig& c)
{
	ChainSpec spec = base_chain(c, c.n_spins);
	if(!c.chain_file && c.epsilon > 0.0) spec = sample_disordered_chain(spec, c.epsilon, split_seed(c.seed, kChainStream));
	return spec;
}

} // namespace

std::string_view to_string(Scenario scenario)
{
	for(const auto& s : kScenarios)
		if(s.scenario == scenario) return s.name;
	return "unknown";
}

std::optional<Scenario> scenario_from_string(std::string_view name)
{
	for(const auto& s : kScenarios)
		if(name == s.name) return s.scenario;
	return std::nullopt;
}

const std::vector<std::string>& scenario_names()
{
	static const std::vector<std::string> names = [] {
		std::vector<std::string> out;
		for(const auto& s : kScenarios) out.emplace_back(s.name);
		return out;
	}();
	return names;
}

ConfigError::ConfigError(std::vector<std::string> messages)
    : std::runtime_error(join(messages, "\n")), messages_(std::move(messages))
{}

OptimizationProblem ScenarioConfig::problem() const
{
	OptimizationProblem p;
	p.k_max = k_segments;
	p.initial_time = t0;
	p.t_max = t_max;
	p.t_min = t_min;
	p.error_threshold = threshold;
	p.time_digits = time_digits;
	p.start_phase = start_phase;
	return p;
}

NewtonOptions ScenarioConfig::newton_options() const
{
	NewtonOptions o;
	o.max_iterations = max_iterations;
	return o;
}

ScenarioConfig default_config(Scenario scenario)
{
	ScenarioConfig c;
	c.scenario = scenario;
	switch(scenario)
	{
	case Scenario::FlowTrace:
		c.epsilon = 0.1;
		c.t0 = 95.474;
		c.t_max = 95.474;
		break;
	case Scenario::UniformSweep:
		c.n_values = int_range(4, 20, 2);
		c.restarts = 5;
		break;
	case Scenario::KtSweep:
		c.k_values = int_range(10, 40, 2);
		c.t0_values = real_range(30.0, 120.0, 10.0);
		break;
	case Scenario::DisorderEnsemble:
		c.epsilon = 0.1;
		break;
	case Scenario::ClosedLoopBench:
		c.algorithms.assign(std::begin(kAlgorithmNames), std::end(kAlgorithmNames));
		break;
	case Scenario::BaselineScan:
		c.n_values = int_range(2, 20, 1);
		break;
	}
	return c;
}

const std::vector<std::string>& allowed_keys(Scenario scenario)
{
	static const std::map<Scenario, std::vector<std::string>> table = {
	    {Scenario::FlowTrace, concat({kChainKeys, kProblemKeys, {"grid_step", "horizon", "sequence_file"}})},
	    {Scenario::UniformSweep,
	     concat({{"model", "jz_ratio", "n_values", "actuator", "k_per_site", "t0_per_site", "t_max_per_site",
	              "t_min", "threshold", "start_phase", "restarts", "max_iterations", "quantize_digits"}})},
	    {Scenario::KtSweep,
	     concat({kChainKeys, {"k_values", "t0_values", "t_max_factor", "t_min", "threshold", "start_phase",
	                          "restarts", "max_iterations"}})},
	    {Scenario::DisorderEnsemble,
	     concat({{"model", "jz_ratio", "n_spins", "epsilon", "ensemble_size", "actuator"}, kProblemKeys,
	             {"baseline_t_max", "coarse_step"}})},
	    {Scenario::ClosedLoopBench,
	     concat({kChainKeys, {"k_segments", "t0", "t_max", "t_min", "threshold", "start_phase", "max_iterations",
	                          "trials", "oracle", "algorithms", "budget", "gradient_step"}})},
	    {Scenario::BaselineScan, concat({{"model", "jz_ratio", "n_values", "baseline_t_max", "coarse_step"}})},
	};
	return table.at(scenario);
}

json config_to_json(const ScenarioConfig& c)
{
	json all = {
	    {"seed", c.seed},
	    {"model", std::string(to_string(c.model))},
	    {"jz_ratio", c.jz_ratio},
	    {"n_spins", c.n_spins},
	    {"n_values", c.n_values},
	    {"epsilon", c.epsilon},
	    {"ensemble_size", c.ensemble_size},
	    {"actuator", actuator_to_json(c.actuator)},
	    {"k_segments", c.k_segments},
	    {"t0", c.t0},
	    {"t_max", c.t_max},
	    {"t_min", c.t_min},
	    {"threshold", c.threshold},
	    {"time_digits", c.time_digits ? json(*c.time_digits) : json(nullptr)},
	    {"start_phase", std::string(to_string(c.start_phase))},
	    {"restarts", c.restarts},
	    {"max_iterations", c.max_iterations},
	    {"k_per_site", c.k_per_site},
	    {"t0_per_site", c.t0_per_site},
	    {"t_max_per_site", c.t_max_per_site},
	    {"quantize_digits", c.quantize_digits},
	    {"k_values", c.k_values},
	    {"t0_values", c.t0_values},
	    {"t_max_factor", c.t_max_factor},
	    {"grid_step", c.grid_step},
	    {"horizon", c.horizon ? json(*c.horizon) : json(nullptr)},
	    {"baseline_t_max", c.baseline_t_max},
	    {"coarse_step", c.coarse_step},
	    {"trials", c.trials},
	    {"oracle",
	     {{"mode", std::string(to_string(c.oracle.mode))},
	      {"digits", c.oracle.digits},
	      {"repetitions", c.oracle.repetitions}}},
	    {"algorithms", c.algorithms},
	    {"budget", c.budget},
	    {"gradient_step", c.gradient_step},
	};
	if(c.chain_file) all["chain_file"] = c.chain_file->string();
	if(c.sequence_file) all["sequence_file"] = c.sequence_file->string();

	json out = {{"schema_version", kConfigSchemaVersion}, {"scenario", std::string(to_string(c.scenario))}};
	for(const auto& key : allowed_keys(c.scenario))
		if(all.contains(key)) out[key] = all[key];
	if(c.chain_file)
		for(const char* key : {"model", "jz_ratio", "n_spins", "epsilon"}) out.erase(key);
	return out;
}

ScenarioConfig parse_config(const std::string& text, const fs::path& base_dir, std::optional<Scenario> expected)
{
	json root;
	try
	{
		root = json::parse(text);
	}
	catch(const json::parse_error& e)
	{
		throw ConfigError({e.what()});
	}
	if(!root.is_object()) throw ConfigError({"configuration must be a JSON object"});

	std::vector<std::string> errors;
	auto fail = [&](const std::string& key, const std::string& msg) {
		const auto dot = key.find('.');
		const std::size_t line = line_of(text, dot == std::string::npos ? key : key.substr(0, dot));
		errors.push_back((line ? "line " + std::to_string(line) + ": " : std::string()) + key + ": " + msg);
	};

	if(!root.contains("schema_version")) fail("schema_version", "missing");
	else if(!root["schema_version"].is_number_integer() || root["schema_version"].get<long>() != kConfigSchemaVersion)
		fail("schema_version", "must be " + std::to_string(kConfigSchemaVersion));

	std::optional<Scenario> scenario;
	if(!root.contains("scenario")) fail("scenario", "missing; valid scenarios: " + join(scenario_names()));
	else if(!root["scenario"].is_string()) fail("scenario", "must be a string");
	else
	{
		scenario = scenario_from_string(root["scenario"].get<std::string>());
		if(!scenario)
			fail("scenario", "unknown scenario '" + root["scenario"].get<std::string>() +
			                     "'; valid scenarios: " + join(scenario_names()));
	}
	if(scenario && expected && *scenario != *expected)
		fail("scenario", "config is for '" + std::string(to_string(*scenario)) + "' but '" +
		                     std::string(to_string(*expected)) + "' was requested");
	if(!scenario) throw ConfigError(errors);

	ScenarioConfig c = default_config(*scenario);
	const auto& allowed = allowed_keys(c.scenario);
	for(const auto& item : root.items())
	{
		if(item.key() == "schema_version" || item.key() == "scenario") continue;
		if(std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
			fail(item.key(), "unknown key for scenario " + std::string(to_string(c.scenario)));
	}

	const std::map<std::string, Setter> setters = {
	    {"seed", seed_value(c.seed)},
	    {"model",
	     [&](const json& v) -> std::optional<std::string> {
		     try
		     {
			     c.model = model_tag_from_string(v.get<std::string>());
			     return std::nullopt;
		     }
		     catch(const std::exception&)
		     {
			     return "must be one of xy, heisenberg, xyz";
		     }
	     }},
	    {"jz_ratio", real(c.jz_ratio)},
	    {"n_spins", integer(c.n_spins)},
	    {"n_values", int_list(c.n_values)},
	    {"epsilon", real(c.epsilon)},
	    {"ensemble_size", integer(c.ensemble_size)},
	    {"chain_file", path_value(c.chain_file, base_dir)},
	    {"k_segments", integer(c.k_segments)},
	    {"t0", real(c.t0)},
	    {"t_max", real(c.t_max)},
	    {"t_min", real(c.t_min)},
	    {"threshold", real(c.threshold)},
	    {"time_digits", opt_integer(c.time_digits)},
	    {"start_phase",
	     [&](const json& v) -> std::optional<std::string> {
		     try
		     {
			     c.start_phase = start_phase_from_string(v.get<std::string>());
			     return std::nullopt;
		     }
		     catch(const std::exception&)
		     {
			     return "must be on_first or off_first";
		     }
	     }},
	    {"restarts", integer(c.restarts)},
	    {"max_iterations", integer(c.max_iterations)},
	    {"k_per_site", real(c.k_per_site)},
	    {"t0_per_site", real(c.t0_per_site)},
	    {"t_max_per_site", real(c.t_max_per_site)},
	    {"quantize_digits", integer(c.quantize_digits)},
	    {"k_values", int_list(c.k_values)},
	    {"t0_values", real_list(c.t0_values)},
	    {"t_max_factor", real(c.t_max_factor)},
	    {"grid_step", real(c.grid_step)},
	    {"horizon", opt_real(c.horizon)},
	    {"sequence_file", path_value(c.sequence_file, base_dir)},
	    {"baseline_t_max", real(c.baseline_t_max)},
	    {"coarse_step", real(c.coarse_step)},
	    {"trials", integer(c.trials)},
	    {"algorithms",
	     [&](const json& v) -> std::optional<std::string> {
		     if(!v.is_array()) return "must be a list of algorithm names";
		     c.algorithms.clear();
		     for(const auto& e : v)
		     {
			     if(!e.is_string()) return "entries must be strings";
			     c.algorithms.push_back(e.get<std::string>());
		     }
		     return std::nullopt;
	     }},
	    {"budget", integer(c.budget)},
	    {"gradient_step", real(c.gradient_step)},
	};

	for(const auto& item : root.items())
	{
		const auto& key = item.key();
		if(std::find(allowed.begin(), allowed.end(), key) == allowed.end()) continue;
		if(key == "actuator")
		{
			for(const auto& msg : parse_actuator(item.value(), c.actuator)) fail("actuator", msg);
			continue;
		}
		if(key == "oracle")
		{
			for(const auto& msg : parse_oracle(item.value(), c.oracle)) fail("oracle", msg);
			continue;
		}
		if(auto msg = setters.at(key)(item.value())) fail(key, *msg);
	}

	// constraints between values
	const auto s = c.scenario;
	auto has = [&](const char* key) { return root.contains(key); };
	auto uses = [&](const char* key) {
		return std::find(allowed.begin(), allowed.end(), key) != allowed.end();
	};

	std::optional<ChainSpec> file_chain;
	if(c.chain_file)
	{
		for(const char* key : {"model", "jz_ratio", "n_spins", "epsilon"})
			if(has(key)) fail(key, "cannot be combined with chain_file");
		try
		{
			file_chain = read_chain_file(*c.chain_file);
			c.n_spins = file_chain->n_spins;
			c.model = file_chain->model;
			c.epsilon = 0.0;
		}
		catch(const std::exception& e)
		{
			fail("chain_file", std::string("cannot load: ") + e.what());
		}
	}
	if(uses("n_spins") && c.n_spins < 2) fail("n_spins", "must be >= 2");
	if(uses("n_values"))
	{
		if(c.n_values.empty()) fail("n_values", "must not be empty");
		for(int n : c.n_values)
			if(n < 2)
			{
				fail("n_values", "every entry must be >= 2");
				break;
			}
		auto sorted = c.n_values;
		std::sort(sorted.begin(), sorted.end());
		if(std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) fail("n_values", "duplicate entries");
	}
	if(uses("epsilon") && !(c.epsilon >= 0.0)) fail("epsilon", "must be >= 0");
	if(uses("ensemble_size") && c.ensemble_size < 1) fail("ensemble_size", "must be >= 1");
	if(uses("jz_ratio") && c.model != ModelTag::XYZGeneral && has("jz_ratio") && c.jz_ratio != 1.0)
		fail("jz_ratio", "only the xyz model takes a jz_ratio");

	if(uses("actuator"))
	{
		int n_min = c.n_spins;
		if(uses("n_values") && !c.n_values.empty()) n_min = *std::min_element(c.n_values.begin(), c.n_values.end());
		for(int site : actuator_sites(c.actuator))
			if(site >= n_min)
			{
				fail("actuator", "site " + std::to_string(site + 1) + " lies outside a chain of " +
				                     std::to_string(n_min) + " spins");
				break;
			}
	}

	if(uses("t_min") && !(c.t_min >= 0.0)) fail("t_min", "must be >= 0");
	if(uses("threshold") && !(c.threshold > 0.0 && c.threshold < 1.0)) fail("threshold", "must lie in (0, 1)");
	if(uses("restarts") && c.restarts < 1) fail("restarts", "must be >= 1");
	if(uses("max_iterations") && c.max_iterations < 1) fail("max_iterations", "must be >= 1");
	if(uses("k_segments"))
	{
		if(c.k_segments < 1) fail("k_segments", "must be >= 1");
		if(!(c.t0 > 0.0)) fail("t0", "must be positive");
		if(!(c.t_max > 0.0)) fail("t_max", "must be positive");
		if(c.t0 > c.t_max) fail("t0", "must not exceed t_max");
		if(c.k_segments >= 1 && c.t_min * c.k_segments > c.t_max)
			fail("t_min", "k_segments * t_min exceeds t_max; no feasible sequence");
	}
	if(uses("time_digits") && c.time_digits && (*c.time_digits < 1 || *c.time_digits > 15))
		fail("time_digits", "must lie in 1..15");
	if(uses("quantize_digits") && (c.quantize_digits < 1 || c.quantize_digits > 15))
		fail("quantize_digits", "must lie in 1..15");
	if(s == Scenario::UniformSweep)
	{
		if(!(c.k_per_site > 0.0)) fail("k_per_site", "must be positive");
		if(!(c.t0_per_site > 0.0)) fail("t0_per_site", "must be positive");
		if(c.t_max_per_site < c.t0_per_site) fail("t_max_per_site", "must be >= t0_per_site");
		for(int n : c.n_values)
		{
			const int k = std::max(1, static_cast<int>(std::lround(c.k_per_site * n)));
			if(c.t_min * k > c.t_max_per_site * n)
			{
				fail("t_min", "k * t_min exceeds t_max for N = " + std::to_string(n));
				break;
			}
		}
	}
	if(s == Scenario::KtSweep)
	{
		if(c.k_values.empty()) fail("k_values", "must not be empty");
		if(c.t0_values.empty()) fail("t0_values", "must not be empty");
		for(int k : c.k_values)
			if(k < 1)
			{
				fail("k_values", "every entry must be >= 1");
				break;
			}
		for(double t : c.t0_values)
			if(!(t > 0.0))
			{
				fail("t0_values", "every entry must be positive");
				break;
			}
		if(!(c.t_max_factor >= 1.0)) fail("t_max_factor", "must be >= 1");
		const bool bad = std::any_of(c.k_values.begin(), c.k_values.end(), [&](int k) {
			return std::any_of(c.t0_values.begin(), c.t0_values.end(),
			                   [&](double t) { return c.t_min * k > c.t_max_factor * t; });
		});
		if(bad) fail("t_min", "k * t_min exceeds t_max for some (K, T0) cell");
	}
	if(s == Scenario::FlowTrace)
	{
		if(!(c.grid_step > 0.0)) fail("grid_step", "must be positive");
		if(c.horizon && !(*c.horizon > 0.0)) fail("horizon", "must be positive");
		if(c.sequence_file)
		{
			try
			{
				const auto seq = read_sequence_file(*c.sequence_file);
				if(has("k_segments") || has("t0") || has("restarts"))
					fail("sequence_file", "cannot be combined with k_segments, t0 or restarts");
				(void)seq;
			}
			catch(const std::exception& e)
			{
				fail("sequence_file", std::string("cannot load: ") + e.what());
			}
		}
	}
	if(uses("baseline_t_max"))
	{
		if(!(c.baseline_t_max > 0.0)) fail("baseline_t_max", "must be positive");
		if(!(c.coarse_step > 0.0)) fail("coarse_step", "must be positive");
		else if(c.coarse_step > c.baseline_t_max) fail("coarse_step", "must not exceed baseline_t_max");
	}
	if(s == Scenario::ClosedLoopBench)
	{
		if(c.trials < 1) fail("trials", "must be >= 1");
		if(c.budget < 1) fail("budget", "must be >= 1");
		if(!(c.gradient_step >= 0.0)) fail("gradient_step", "must be >= 0 (0 selects the default)");
		if(c.algorithms.empty()) fail("algorithms", "must not be empty");
		std::set<std::string> seen;
		for(const auto& a : c.algorithms)
		{
			if(std::find(std::begin(kAlgorithmNames), std::end(kAlgorithmNames), a) == std::end(kAlgorithmNames))
				fail("algorithms", "unknown algorithm '" + a + "'; valid: genetic, simplex, newton1, newton2");
			if(!seen.insert(a).second) fail("algorithms", "duplicate algorithm '" + a + "'");
		}
	}
	if(errors.empty() && uses_single_chain(s))
	{
		try
		{
			(void)make_control_caches(scenario_chain(c), c.actuator);
		}
		catch(const std::exception& e)
		{
			fail("actuator", e.what());
		}
	}
	if(!errors.empty()) throw ConfigError(errors);
	return c;
}

ScenarioConfig load_config(const fs::path& path, std::optional<Scenario> expected)
{
	std::string text;
	try
	{
		text = read_text_file(path);
	}
	catch(const std::exception& e)
	{
		throw ConfigError({e.what()});
	}
	return parse_config(text, path.parent_path(), expected);
}

std::string sha256_hex(const std::string& data)
{
	unsigned char digest[EVP_MAX_MD_SIZE];
	unsigned int length = 0;
	if(EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
		throw std::runtime_error("SHA-256 computation failed");
	static const char* hex = "0123456789abcdef";
	std::string out;
	for(unsigned int i = 0; i < length; ++i)
	{
		out += hex[digest[i] >> 4];
		out += hex[digest[i] & 15];
	}
	return out;
}

namespace
{

struct Outputs
{
	std::vector<std::pair<std::string, std::string>> files; // name, content
	std::vector<InstanceFailure> failures;

	void add(std::string name, std::string content) { files.emplace_back(std::move(name), std::move(content)); }
};

class Progress
{
public:
	Progress(std::ostream* log, std::size_t total) : log_(log), total_(total) {}

	void done(const std::string& what)
	{
		if(!log_) return;
		const std::lock_guard lock(mutex_);
		*log_ << "[" << ++count_ << "/" << total_ << "] " << what << "\n" << std::flush;
	}

private:
	std::ostream* log_;
	std::size_t total_;
	std::size_t count_ = 0;
	std::mutex mutex_;
};

std::string describe_error(const std::exception& e) { return e.what(); }

void run_flow_trace(const ScenarioConfig& c, const RunOptions& o, Outputs& out)
{
	const ChainSpec spec = scenario_chain(c);
	const ControlCaches caches = make_control_caches(spec, c.actuator);
	const OptimizationProblem problem = c.problem();

	json record;
	SwitchingSequence seq;
	if(c.sequence_file)
	{
		seq = read_sequence_file(*c.sequence_file);
		const auto tr = transfer_fidelity(caches, seq);
		record = {{"durations", seq.durations},
		          {"start_phase", std::string(to_string(seq.start_phase))},
		          {"error", tr.error},
		          {"fidelity", tr.fidelity},
		          {"total_time", seq.total_time()},
		          {"source", "sequence_file"}};
	}
	else
	{
		const OptimizationResult r =
		    multistart(problem, caches, c.restarts, split_seed(c.seed, 1), c.newton_options(), o.jobs);
		seq = r.sequence;
		record = result_record(r, problem);
		if(o.log) *o.log << "optimised: error " << r.error << " at T = " << r.total_time << "\n";
	}

	const double horizon = c.horizon.value_or(seq.total_time());
	SwitchingSequence free_run{{horizon}, StartPhase::ActuatorOffFirst};
	CsvWriter csv({"series", "t", "population"});
	for(const auto& p : population_trace(caches, free_run, c.grid_step))
	{
		csv.cell(std::string("uncontrolled")).cell(p.t).cell(p.population);
		csv.end_row();
	}
	for(const auto& p : population_trace(caches, seq, c.grid_step))
	{
		csv.cell(std::string("controlled")).cell(p.t).cell(p.population);
		csv.end_row();
	}
	record["chain"] = chain_to_json(spec);
	record["actuator"] = describe(c.actuator);

	out.add("trace.csv", csv.str());
	out.add("sequence.txt", sequence_to_text(seq));
	out.add("chain.json", chain_to_json(spec).dump(2) + "\n");
	out.add("result.json", record.dump(2) + "\n");
}

void run_uniform_sweep(const ScenarioConfig& c, const RunOptions& o, Outputs& out)
{
	struct Row
	{
		int n = 0;
		OptimizationProblem problem;
		std::optional<OptimizationResult> result;
		std::optional<double> quantized;
		std::string failure;
	};
	std::vector<Row> rows(c.n_values.size());
	Progress progress(o.log, rows.size());
	parallel_for(rows.size(), o.jobs, [&](std::size_t i) {
		Row& row = rows[i];
		row.n = c.n_values[i];
		row.problem = c.problem();
		row.problem.k_max = std::max(1, static_cast<int>(std::lround(c.k_per_site * row.n)));
		row.problem.initial_time = c.t0_per_site * row.n;
		row.problem.t_max = c.t_max_per_site * row.n;
		try
		{
			const auto caches = make_control_caches(base_chain(c, row.n), c.actuator);
			row.result = multistart(row.problem, caches, c.restarts,
			                        split_seed(c.seed, static_cast<std::uint64_t>(row.n)), c.newton_options());
			row.quantized = quantize_times(caches, row.result->sequence, c.quantize_digits).error_after;
			progress.done("N = " + std::to_string(row.n) + " error " + format_double(row.result->error));
		}
		catch(const std::exception& e)
		{
			row.failure = describe_error(e);
			progress.done("N = " + std::to_string(row.n) + " failed");
		}
	});

	CsvWriter csv({"N", "K", "T", "error", "quantized_error", "fidelity_evaluations", "converged", "status"});
	json records = json::array();
	for(const Row& row : rows)
	{
		csv.cell(row.n).cell(row.problem.k_max);
		if(row.result)
		{
			csv.cell(row.result->total_time).cell(row.result->error).cell(*row.quantized);
			csv.cell(static_cast<long long>(row.result->fidelity_evaluations)).cell(row.result->converged ? 1 : 0);
			csv.cell(std::string("ok"));
			json rec = result_record(*row.result, row.problem);
			rec["N"] = row.n;
			rec["quantized_error"] = *row.quantized;
			records.push_back(std::move(rec));
		}
		else
		{
			csv.empty().empty().empty().empty().empty().cell(std::string("failed"));
			out.failures.push_back({"N=" + std::to_string(row.n), row.failure});
		}
		csv.end_row();
	}
	out.add("uniform_sweep.csv", csv.str());
	out.add("results.json", records.dump(2) + "\n");
}

void run_kt_sweep(const ScenarioConfig& c, const RunOptions& o, Outputs& out)
{
	const ControlCaches caches = make_control_caches(scenario_chain(c), c.actuator);
	struct Cell
	{
		int k = 0;
		double t0 = 0.0;
		double t_max = 0.0;
		std::optional<OptimizationResult> result;
		std::string failure;
	};
	std::vector<Cell> cells;
	for(int k : c.k_values)
		for(double t0 : c.t0_values) cells.push_back({k, t0, c.t_max_factor * t0, std::nullopt, {}});

	Progress progress(o.log, cells.size());
	parallel_for(cells.size(), o.jobs, [&](std::size_t i) {
		Cell& cell = cells[i];
		OptimizationProblem p = c.problem();
		p.k_max = cell.k;
		p.initial_time = cell.t0;
		p.t_max = cell.t_max;
		const std::uint64_t seed = split_seed(split_seed(c.seed, 1 + static_cast<std::uint64_t>(cell.k)),
		                                      static_cast<std::uint64_t>(std::llround(cell.t0 * 1000.0)));
		const std::string name = "K = " + std::to_string(cell.k) + ", T0 = " + format_double(cell.t0);
		try
		{
			cell.result = multistart(p, caches, c.restarts, seed, c.newton_options());
			progress.done(name + " error " + format_double(cell.result->error));
		}
		catch(const std::exception& e)
		{
			cell.failure = describe_error(e);
			progress.done(name + " failed");
		}
	});

	CsvWriter csv({"K", "T0", "T_max", "min_error", "log10_min_error", "best_T", "status"});
	for(const Cell& cell : cells)
	{
		csv.cell(cell.k).cell(cell.t0).cell(cell.t_max);
		if(cell.result)
		{
			const double e = cell.result->error;
			csv.cell(e).cell(std::log10(std::max(e, 1e-300))).cell(cell.result->total_time).cell(std::string("ok"));
		}
		else
		{
			csv.empty().empty().empty().cell(std::string("failed"));
			out.failures.push_back({"K=" + std::to_string(cell.k) + ",T0=" + format_double(cell.t0), cell.failure});
		}
		csv.end_row();
	}
	out.add("kt_sweep.csv", csv.str());
}

void run_disorder_ensemble(const ScenarioConfig& c, const RunOptions& o, Outputs& out)
{
	struct Member
	{
		std::uint64_t seed = 0;
		std::optional<PeakResult> baseline;
		std::optional<OptimizationResult> result;
		json chain;
		std::string failure;
	};
	std::vector<Member> members(static_cast<std::size_t>(c.ensemble_size));
	const ChainSpec base = uniform_chain(c.n_spins, c.model, 1.0, c.jz_ratio);
	const OptimizationProblem problem = c.problem();
	Progress progress(o.log, members.size());
	parallel_for(members.size(), o.jobs, [&](std::size_t i) {
		Member& m = members[i];
		m.seed = split_seed(c.seed, 1 + i);
		try
		{
			const ChainSpec spec = sample_disordered_chain(base, c.epsilon, m.seed);
			m.chain = chain_to_json(spec);
			const auto caches = make_control_caches(spec, c.actuator);
			m.baseline = uncontrolled_peak(caches.off, c.baseline_t_max, c.coarse_step);
			m.result = multistart(problem, caches, c.restarts, split_seed(m.seed, 1), c.newton_options());
			progress.done("chain " + std::to_string(i) + " baseline " + format_double(m.baseline->best_fidelity) +
			              " controlled " + format_double(m.result->fidelity));
		}
		catch(const std::exception& e)
		{
			m.failure = describe_error(e);
			progress.done("chain " + std::to_string(i) + " failed");
		}
	});

	CsvWriter csv({"chain", "chain_seed", "baseline_F", "baseline_T", "controlled_F", "controlled_T",
	               "controlled_error", "status"});
	json records = json::array();
	for(std::size_t i = 0; i < members.size(); ++i)
	{
		const Member& m = members[i];
		csv.cell(static_cast<long long>(i)).cell(std::to_string(m.seed));
		if(m.result)
		{
			csv.cell(m.baseline->best_fidelity).cell(m.baseline->best_time);
			csv.cell(m.result->fidelity).cell(m.result->total_time).cell(m.result->error).cell(std::string("ok"));
			json rec = result_record(*m.result, problem);
			rec["chain_index"] = i;
			rec["chain_seed"] = m.seed;
			rec["chain"] = m.chain;
			rec["baseline"] = {{"best_fidelity", m.baseline->best_fidelity}, {"best_time", m.baseline->best_time}};
			records.push_back(std::move(rec));
		}
		else
		{
			csv.empty().empty().empty().empty().empty().cell(std::string("failed"));
			out.failures.push_back({"chain=" + std::to_string(i), m.failure});
		}
		csv.end_row();
	}
	out.add("disorder_ensemble.csv", csv.str());
	out.add("results.json", records.dump(2) + "\n");
}

void run_closed_loop_bench(const ScenarioConfig& c, const RunOptions& o, Outputs& out)
{
	const ControlCaches caches = make_control_caches(scenario_chain(c), c.actuator);
	OracleConfig oracle = c.oracle;
	oracle.seed = split_seed(c.seed, 2);
	CompareOptions options;
	options.algorithms = c.algorithms;
	options.jobs = o.jobs;
	options.closed_loop.evaluation_budget = c.budget;
	options.closed_loop.gradient_step = c.gradient_step;
	options.closed_loop.max_iterations = c.max_iterations;
	options.newton.max_iterations = c.max_iterations;
	if(o.log) *o.log << "running " << c.trials << " trials of " << join(c.algorithms) << "\n" << std::flush;
	const BenchmarkReport report = compare_algorithms(c.problem(), caches, oracle, c.trials, split_seed(c.seed, 1), options);
	if(o.log)
		for(const auto& row : report.rows)
			*o.log << row.algorithm << ": success " << row.success_pct << "%, mean evaluations " << row.mean_evals
			       << "\n";
	json rep = report_to_json(report);
	rep["problem"] = problem_to_json(c.problem());
	out.add("table1.csv", report_to_csv(report));
	out.add("table1_trials.json", rep.dump(2) + "\n");
}

void run_baseline_scan(const ScenarioConfig& c, const RunOptions& o, Outputs& out)
{
	struct Row
	{
		int n = 0;
		std::optional<PeakResult> peak;
		std::string failure;
	};
	std::vector<Row> rows(c.n_values.size());
	Progress progress(o.log, rows.size());
	parallel_for(rows.size(), o.jobs, [&](std::size_t i) {
		Row& row = rows[i];
		row.n = c.n_values[i];
		try
		{
			const auto cache = spectral_decompose(build_subspace_hamiltonian(base_chain(c, row.n)));
			row.peak = uncontrolled_peak(cache, c.baseline_t_max, c.coarse_step);
			progress.done("N = " + std::to_string(row.n) + " best " + format_double(row.peak->best_fidelity));
		}
		catch(const std::exception& e)
		{
			row.failure = describe_error(e);
			progress.done("N = " + std::to_string(row.n) + " failed");
		}
	});
	CsvWriter csv({"N", "best_fidelity", "best_time"});
	for(const Row& row : rows)
	{
		if(!row.peak)
		{
			out.failures.push_back({"N=" + std::to_string(row.n), row.failure});
			continue;
		}
		csv.cell(row.n).cell(row.peak->best_fidelity).cell(row.peak->best_time);
		csv.end_row();
	}
	out.add("baseline.csv", csv.str());
}

} // namespace

RunSummary run_scenario(const ScenarioConfig& config, const RunOptions& options)
{
	const auto started = std::chrono::steady_clock::now();
	Outputs out;
	switch(config.scenario)
	{
	case Scenario::FlowTrace: run_flow_trace(config, options, out); break;
	case Scenario::UniformSweep: run_uniform_sweep(config, options, out); break;
	case Scenario::KtSweep: run_kt_sweep(config, options, out); break;
	case Scenario::DisorderEnsemble: run_disorder_ensemble(config, options, out); break;
	case Scenario::ClosedLoopBench: run_closed_loop_bench(config, options, out); break;
	case Scenario::BaselineScan: run_baseline_scan(config, options, out); break;
	}

	RunSummary summary;
	summary.failures = out.failures;
	summary.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

	fs::create_directories(options.out_dir);
	json files = json::array();
	for(const auto& [name, content] : out.files)
	{
		write_text_file(options.out_dir / name, content);
		summary.outputs.emplace_back(name);
		files.push_back({{"file", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
	}
	json failures = json::array();
	for(const auto& f : out.failures) failures.push_back({{"instance", f.instance}, {"message", f.message}});

	const json manifest = {{"artifact", "spinwire"},
	                       {"version", std::string(artifact_version())},
	                       {"scenario", std::string(to_string(config.scenario))},
	                       {"seed", config.seed},
	                       {"seed_rule", "child = splitmix64(master ^ splitmix64(stream + 1))"},
	                       {"config", config_to_json(config)},
	                       {"jobs", options.jobs},
	                       {"wall_time_s", summary.wall_time},
	                       {"outputs", files},
	                       {"failures", failures}};
	write_text_file(options.out_dir / "manifest.json", manifest.dump(2) + "\n");
	summary.outputs.emplace_back("manifest.json");
	return summary;
}

} // namespace spinwire
