#pragma once

#include "spinwire/chain_model.hpp"
#include "spinwire/closed_loop.hpp"
#include "spinwire/grad_newton.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spinwire
{

inline constexpr int kConfigSchemaVersion = 1;

std::string_view artifact_version();

enum class Scenario
{
	FlowTrace,
	UniformSweep,
	KtSweep,
	DisorderEnsemble,
	ClosedLoopBench,
	BaselineScan,
};

std::string_view to_string(Scenario scenario);
std::optional<Scenario> scenario_from_string(std::string_view name);
const std::vector<std::string>& scenario_names();

/// Every problem found in a configuration, one message per entry.
class ConfigError : public std::runtime_error
{
public:
	explicit ConfigError(std::vector<std::string> messages);

	[[nodiscard]] const std::vector<std::string>& messages() const { return messages_; }

private:
	std::vector<std::string> messages_;
};

/// Fully resolved scenario parameters. Keys that a scenario does not use are
/// rejected when parsing; the defaults below are overridden per scenario by
/// default_config().
struct ScenarioConfig
{
	Scenario scenario = Scenario::FlowTrace;
	std::uint64_t seed = 1;

	// chain
	ModelTag model = ModelTag::Heisenberg;
	double jz_ratio = 1.0;
	int n_spins = 10;
	std::vector<int> n_values;
	double epsilon = 0.0;
	int ensemble_size = 20;
	std::optional<std::filesystem::path> chain_file;
	Actuator actuator = SwitchOffCoupling{};

	// optimisation problem
	int k_segments = 40;
	double t0 = 100.0;
	double t_max = 110.0;
	double t_min = 0.0;
	double threshold = 1e-4;
	std::optional<int> time_digits;
	StartPhase start_phase = StartPhase::ActuatorOnFirst;
	int restarts = 10;
	int max_iterations = 500;

	// uniform-sweep: K, T_0 and T_max grow linearly with N
	double k_per_site = 4.0;
	double t0_per_site = 10.0;
	double t_max_per_site = 11.0;
	int quantize_digits = 4;

	// kt-sweep: T_max = t_max_factor * T_0
	std::vector<int> k_values;
	std::vector<double> t0_values;
	double t_max_factor = 1.0;

	// flow-trace
	double grid_step = 0.05;
	std::optional<double> horizon;
	std::optional<std::filesystem::path> sequence_file;

	// baselines
	double baseline_t_max = 4000.0;
	double coarse_step = 0.05;

	// closed-loop-bench
	int trials = 20;
	OracleConfig oracle;
	std::vector<std::string> algorithms;
	long budget = 20000;
	double gradient_step = 0.0;

	[[nodiscard]] OptimizationProblem problem() const;
	[[nodiscard]] NewtonOptions newton_options() const;
};

ScenarioConfig default_config(Scenario scenario);

/// Keys accepted for a scenario (top level; "actuator" and "oracle" are objects).
const std::vector<std::string>& allowed_keys(Scenario scenario);

/// Parses and validates a JSON configuration. Relative file references are
/// resolved against `base_dir`. When `expected` is set the config must name
/// that scenario. Throws ConfigError listing every problem found.
ScenarioConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {},
                            std::optional<Scenario> expected = std::nullopt);
ScenarioConfig load_config(const std::filesystem::path& path,
                           std::optional<Scenario> expected = std::nullopt);

/// Effective configuration with only the keys the scenario accepts.
nlohmann::json config_to_json(const ScenarioConfig& config);

struct RunOptions
{
	std::filesystem::path out_dir;
	int jobs = 1;
	std::ostream* log = nullptr; // progress messages; null for quiet runs
};

struct InstanceFailure
{
	std::string instance;
	std::string message;
};

struct RunSummary
{
	std::vector<std::filesystem::path> outputs; // relative to out_dir, manifest last
	std::vector<InstanceFailure> failures;
	double wall_time = 0.0;
};

/// Executes the scenario and writes its data files plus manifest.json into
/// options.out_dir. Data files depend only on the configuration.
RunSummary run_scenario(const ScenarioConfig& config, const RunOptions& options);

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& data);

} // namespace spinwire
