#pragma once

#include "spinwire/chain_model.hpp"
#include "spinwire/closed_loop.hpp"
#include "spinwire/grad_newton.hpp"
#include "spinwire/propagator.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace spinwire
{

inline constexpr int kChainSchemaVersion = 1;
inline constexpr int kCsvSchemaVersion = 1;

/// Shortest round-trip decimal representation; identical on every run.
std::string format_double(double value);

/// Chain file format (JSON):
///   {"schema_version": 1, "n_spins": N, "model": "xy"|"heisenberg"|"xyz",
///    "jx": [[m, n, J], ...], "jz": [[m, n, J], ...], "seed": s, "epsilon": e}
/// Bond site indices are 1-based; omitted pairs are uncoupled.
nlohmann::json chain_to_json(const ChainSpec& spec);
ChainSpec chain_from_json(const nlohmann::json& j);
void write_chain_file(const std::filesystem::path& path, const ChainSpec& spec);
ChainSpec read_chain_file(const std::filesystem::path& path);

/// Plain-text duration list: optional "# start_phase on_first|off_first"
/// header, then one duration per line. Blank lines and other '#' lines are
/// ignored.
std::string sequence_to_text(const SwitchingSequence& seq);
SwitchingSequence sequence_from_text(const std::string& text);
void write_sequence_file(const std::filesystem::path& path, const SwitchingSequence& seq);
SwitchingSequence read_sequence_file(const std::filesystem::path& path);

nlohmann::json problem_to_json(const OptimizationProblem& problem);
nlohmann::json result_to_json(const OptimizationResult& result);
nlohmann::json result_record(const OptimizationResult& result, const OptimizationProblem& problem);

/// Columns: t,population
std::string trace_to_csv(const std::vector<TracePoint>& trace);

/// Columns: algorithm,success_pct,mean_evals,mean_exe_s,mean_T,min_T
/// (min_T is empty when no trial succeeded)
std::string report_to_csv(const BenchmarkReport& report);
nlohmann::json report_to_json(const BenchmarkReport& report);

/// Small CSV builder that writes every double through format_double.
class CsvWriter
{
public:
	explicit CsvWriter(std::vector<std::string> header);

	CsvWriter& cell(double v);
	CsvWriter& cell(long long v);
	CsvWriter& cell(int v) { return cell(static_cast<long long>(v)); }
	CsvWriter& cell(const std::string& v);
	CsvWriter& empty();
	void end_row();

	[[nodiscard]] std::string str() const { return out_; }

private:
	void separator();

	std::size_t columns_;
	std::size_t in_row_ = 0;
	std::string out_;
};

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

} // namespace spinwire
