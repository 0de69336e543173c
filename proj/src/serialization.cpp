#include "spinwire/serialization.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spinwire
{

std::string format_double(double value)
{
	if(std::isnan(value)) return "nan";
	if(std::isinf(value)) return value > 0 ? "inf" : "-inf";
	std::array<char, 64> buf{};
	const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
	return {buf.data(), res.ptr};
}

nlohmann::json chain_to_json(const ChainSpec& spec)
{
	nlohmann::json jx = nlohmann::json::array(), jz = nlohmann::json::array();
	for(int m = 0; m < spec.n_spins; ++m)
		for(int n = m + 1; n < spec.n_spins; ++n)
		{
			if(spec.jx(m, n) != 0.0) jx.push_back({m + 1, n + 1, spec.jx(m, n)});
			if(spec.jz(m, n) != 0.0) jz.push_back({m + 1, n + 1, spec.jz(m, n)});
		}
	return {{"schema_version", kChainSchemaVersion},
	        {"n_spins", spec.n_spins},
	        {"model", std::string(to_string(spec.model))},
	        {"jx", jx},
	        {"jz", jz},
	        {"seed", spec.seed},
	        {"epsilon", spec.epsilon}};
}

ChainSpec chain_from_json(const nlohmann::json& j)
{
	static const std::vector<std::string> known = {"schema_version", "n_spins", "model", "jx",
	                                               "jz", "seed", "epsilon"};
	for(const auto& item : j.items())
		if(std::find(known.begin(), known.end(), item.key()) == known.end())
			throw std::invalid_argument("unknown chain key '" + item.key() + "'");
	if(j.value("schema_version", 0) != kChainSchemaVersion)
		throw std::invalid_argument("unsupported chain schema_version");

	ChainSpec spec;
	spec.n_spins = j.at("n_spins").get<int>();
	if(spec.n_spins < 2) throw std::invalid_argument("n_spins must be >= 2");
	spec.model = model_tag_from_string(j.at("model").get<std::string>());
	spec.seed = j.value("seed", std::uint64_t{0});
	spec.epsilon = j.value("epsilon", 0.0);
	spec.jx = Eigen::MatrixXd::Zero(spec.n_spins, spec.n_spins);
	spec.jz = Eigen::MatrixXd::Zero(spec.n_spins, spec.n_spins);
	auto fill = [&](const char* key, Eigen::MatrixXd& target) {
		if(!j.contains(key)) return;
		for(const auto& bond : j.at(key))
		{
			if(!bond.is_array() || bond.size() != 3)
				throw std::invalid_argument(std::string(key) + " bonds must be [m, n, value]");
			const int m = bond[0].get<int>() - 1, n = bond[1].get<int>() - 1;
			if(m < 0 || n < 0 || m >= spec.n_spins || n >= spec.n_spins || m == n)
				throw std::invalid_argument(std::string(key) + " bond has invalid site indices");
			target(m, n) = target(n, m) = bond[2].get<double>();
		}
	};
	fill("jx", spec.jx);
	fill("jz", spec.jz);
	spec.validate();
	return spec;
}

void write_chain_file(const std::filesystem::path& path, const ChainSpec& spec)
{
	write_text_file(path, chain_to_json(spec).dump(2) + "\n");
}

ChainSpec read_chain_file(const std::filesystem::path& path)
{
	return chain_from_json(nlohmann::json::parse(read_text_file(path)));
}

std::string sequence_to_text(const SwitchingSequence& seq)
{
	std::string out = "# start_phase " + std::string(to_string(seq.start_phase)) + "\n";
	for(double t : seq.durations) out += format_double(t) + "\n";
	return out;
}

SwitchingSequence sequence_from_text(const std::string& text)
{
	SwitchingSequence seq;
	std::istringstream in(text);
	std::string line;
	int line_no = 0;
	while(std::getline(in, line))
	{
		++line_no;
		const auto first = line.find_first_not_of(" \t\r");
		if(first == std::string::npos) continue;
		line = line.substr(first);
		while(!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
			line.pop_back();
		if(line[0] == '#')
		{
			std::istringstream words(line.substr(1));
			std::string key, value;
			if(words >> key >> value && key == "start_phase")
				seq.start_phase = start_phase_from_string(value);
			continue;
		}
		double v = 0.0;
		const auto res = std::from_chars(line.data(), line.data() + line.size(), v);
		if(res.ec != std::errc() || res.ptr != line.data() + line.size())
			throw std::invalid_argument("line " + std::to_string(line_no) + ": not a duration: " + line);
		seq.durations.push_back(v);
	}
	seq.validate();
	return seq;
}

void write_sequence_file(const std::filesystem::path& path, const SwitchingSequence& seq)
{
	write_text_file(path, sequence_to_text(seq));
}

SwitchingSequence read_sequence_file(const std::filesystem::path& path)
{
	return sequence_from_text(read_text_file(path));
}

nlohmann::json problem_to_json(const OptimizationProblem& p)
{
	nlohmann::json j = {{"k_max", p.k_max},
	                    {"t_max", p.t_max},
	                    {"t_min", p.t_min},
	                    {"initial_time", p.initial_time},
	                    {"error_threshold", p.error_threshold},
	                    {"start_phase", std::string(to_string(p.start_phase))}};
	j["time_digits"] = p.time_digits ? nlohmann::json(*p.time_digits) : nlohmann::json(nullptr);
	return j;
}

nlohmann::json result_to_json(const OptimizationResult& r)
{
	nlohmann::json j = {{"durations", r.sequence.durations},
	                    {"start_phase", std::string(to_string(r.sequence.start_phase))},
	                    {"error", r.error},
	                    {"fidelity", r.fidelity},
	                    {"total_time", r.total_time},
	                    {"iterations", r.iterations},
	                    {"fidelity_evaluations", r.fidelity_evaluations},
	                    {"gradient_evaluations", r.gradient_evaluations},
	                    {"wall_time", r.wall_time},
	                    {"converged", r.converged},
	                    {"seed", r.seed},
	                    {"stop_reason", r.stop_reason},
	                    {"restarts", r.restarts},
	                    {"regularized_steps", r.regularized_steps},
	                    {"gradient_fallbacks", r.gradient_fallbacks}};
	j["quantized_error"] =
	    r.quantized_error ? nlohmann::json(*r.quantized_error) : nlohmann::json(nullptr);
	return j;
}

nlohmann::json result_record(const OptimizationResult& result, const OptimizationProblem& problem)
{
	nlohmann::json j = result_to_json(result);
	j["problem"] = problem_to_json(problem);
	return j;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size())
{
	for(std::size_t i = 0; i < header.size(); ++i) out_ += (i ? "," : "") + header[i];
	out_ += "\n";
}

void CsvWriter::separator()
{
	if(in_row_ >= columns_) throw std::logic_error("csv row has too many cells");
	if(in_row_ > 0) out_ += ",";
	++in_row_;
}

CsvWriter& CsvWriter::cell(double v)
{
	separator();
	out_ += format_double(v);
	return *this;
}

CsvWriter& CsvWriter::cell(long long v)
{
	separator();
	out_ += std::to_string(v);
	return *this;
}

CsvWriter& CsvWriter::cell(const std::string& v)
{
	separator();
	if(v.find_first_of(",\"\n") == std::string::npos)
	{
		out_ += v;
		return *this;
	}
	out_ += '"';
	for(char c : v)
	{
		if(c == '"') out_ += '"';
		out_ += c;
	}
	out_ += '"';
	return *this;
}

CsvWriter& CsvWriter::empty()
{
	separator();
	return *this;
}

void CsvWriter::end_row()
{
	if(in_row_ != columns_) throw std::logic_error("csv row has too few cells");
	out_ += "\n";
	in_row_ = 0;
}

std::string trace_to_csv(const std::vector<TracePoint>& trace)
{
	CsvWriter csv({"t", "population"});
	for(const auto& p : trace)
	{
		csv.cell(p.t).cell(p.population);
		csv.end_row();
	}
	return csv.str();
}

std::string report_to_csv(const BenchmarkReport& report)
{
	CsvWriter csv({"algorithm", "success_pct", "mean_evals", "mean_exe_s", "mean_T", "min_T"});
	for(const auto& row : report.rows)
	{
		csv.cell(row.algorithm).cell(row.success_pct).cell(row.mean_evals).cell(row.mean_exe_s).cell(row.mean_T);
		if(row.min_T) csv.cell(*row.min_T);
		else csv.empty();
		csv.end_row();
	}
	return csv.str();
}

nlohmann::json report_to_json(const BenchmarkReport& report)
{
	nlohmann::json rows = nlohmann::json::array();
	for(const auto& row : report.rows)
	{
		nlohmann::json trials = nlohmann::json::array();
		for(const auto& t : row.trials)
		{
			nlohmann::json rec = result_to_json(t.result);
			rec["trial"] = t.trial;
			rec["trial_seed"] = t.seed;
			rec["success"] = t.success;
			rec["judged_error"] = t.judged_error;
			rec["exact_error"] = t.exact_error;
			trials.push_back(std::move(rec));
		}
		rows.push_back({{"algorithm", row.algorithm},
		                {"success_pct", row.success_pct},
		                {"mean_evals", row.mean_evals},
		                {"mean_exe_s", row.mean_exe_s},
		                {"mean_T", row.mean_T},
		                {"mean_T_all_trials", row.mean_T_all},
		                {"min_T", row.min_T ? nlohmann::json(*row.min_T) : nlohmann::json(nullptr)},
		                {"trials", std::move(trials)}});
	}
	return {{"rows", std::move(rows)}};
}

void write_text_file(const std::filesystem::path& path, const std::string& content)
{
	std::ofstream out(path, std::ios::binary);
	if(!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
	out << content;
	if(!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path)
{
	std::ifstream in(path, std::ios::binary);
	if(!in) throw std::runtime_error("cannot open " + path.string());
	std::ostringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

} // namespace spinwire
