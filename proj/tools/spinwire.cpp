#include "spinwire/scenarios.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace
{

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Flags
{
	std::string config;
	std::optional<std::uint64_t> seed;
	std::string out;
	int jobs = 1;
	bool quiet = false;
};

void report_config_error(const spinwire::ConfigError& e)
{
	std::cerr << "configuration error:\n";
	for(const auto& msg : e.messages()) std::cerr << "  " << msg << "\n";
}

int run(spinwire::Scenario scenario, const Flags& flags)
{
	using namespace spinwire;
	ScenarioConfig config;
	try
	{
		config = flags.config.empty() ? default_config(scenario) : load_config(flags.config, scenario);
	}
	catch(const ConfigError& e)
	{
		report_config_error(e);
		return kExitConfig;
	}
	if(flags.seed) config.seed = *flags.seed;

	RunOptions options;
	options.out_dir = flags.out.empty() ? std::filesystem::path("out") / std::string(to_string(scenario))
	                                    : std::filesystem::path(flags.out);
	options.jobs = flags.jobs;
	options.log = flags.quiet ? nullptr : &std::cerr;
	try
	{
		const RunSummary summary = run_scenario(config, options);
		if(!flags.quiet)
		{
			for(const auto& f : summary.failures)
				std::cerr << "instance " << f.instance << " failed: " << f.message << "\n";
			std::cerr << "wrote " << summary.outputs.size() << " files to " << options.out_dir.string() << " in "
			          << summary.wall_time << " s\n";
		}
	}
	catch(const std::exception& e)
	{
		std::cerr << "error: " << e.what() << "\n";
		return kExitRuntime;
	}
	return kExitOk;
}

int validate(const std::string& path)
{
	try
	{
		const auto config = spinwire::load_config(path);
		std::cout << spinwire::config_to_json(config).dump(2) << "\n";
		return kExitOk;
	}
	catch(const spinwire::ConfigError& e)
	{
		report_config_error(e);
		return kExitConfig;
	}
}

} // namespace

int main(int argc, char** argv)
{
	CLI::App app{"Bang-bang switching control of spin-chain quantum wires"};
	app.set_version_flag("--version", std::string(spinwire::artifact_version()));
	app.require_subcommand(1);

	Flags flags;
	std::optional<spinwire::Scenario> chosen;
	for(const auto& name : spinwire::scenario_names())
	{
		auto* sub = app.add_subcommand(name, "run the " + name + " scenario");
		sub->add_option("--config", flags.config, "scenario configuration (JSON)")->check(CLI::ExistingFile);
		sub->add_option("--seed", flags.seed, "master seed, overrides the config");
		sub->add_option("--out", flags.out, "output directory (default out/<scenario>)");
		sub->add_option("--jobs", flags.jobs, "worker threads")->check(CLI::PositiveNumber);
		sub->add_flag("--quiet", flags.quiet, "suppress progress output");
		sub->callback([&chosen, name] { chosen = spinwire::scenario_from_string(name); });
	}
	std::string validate_path;
	auto* val = app.add_subcommand("validate", "check a configuration file and print the effective config");
	val->add_option("--config", validate_path, "scenario configuration (JSON)")->required()->check(CLI::ExistingFile);

	try
	{
		app.parse(argc, argv);
	}
	catch(const CLI::ParseError& e)
	{
		const int code = app.exit(e);
		return code == 0 ? kExitOk : kExitConfig;
	}

	if(val->parsed()) return validate(validate_path);
	return run(*chosen, flags);
}
