#include "bricklayers/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "bricklayers/experiments.hpp"
#include "bricklayers/io.hpp"

namespace bricklayers
{

namespace
{

struct Overrides
{
	std::string config_path;
	std::string rate_path;
	std::optional<double> beta;
	std::optional<std::uint64_t> seed;
	std::optional<double> theta, theta_left, theta_right;
	std::vector<double> thetas;
	std::optional<int> lattice_size, window, replicas, block, sample_count, samples, grid, truncation, threads;
	std::optional<double> t_end, sample_interval, grid_min, grid_max, theta_step;
	std::string output_dir;
};

void add_options(CLI::App* app, Overrides& o)
{
	app->add_option("--config", o.config_path, "JSON configuration file");
	app->add_option("--rate", o.rate_path, "JSON rate-function file");
	app->add_option("--beta", o.beta, "EBL rates with this beta");
	app->add_option("--seed", o.seed, "random seed");
	app->add_option("--theta", o.theta);
	app->add_option("--theta-left", o.theta_left);
	app->add_option("--theta-right", o.theta_right);
	app->add_option("--thetas", o.thetas);
	app->add_option("--n,--lattice-size", o.lattice_size);
	app->add_option("--window", o.window);
	app->add_option("--t-end", o.t_end);
	app->add_option("--replicas", o.replicas);
	app->add_option("--block", o.block);
	app->add_option("--sample-count", o.sample_count);
	app->add_option("--samples", o.samples);
	app->add_option("--sample-interval", o.sample_interval);
	app->add_option("--grid", o.grid);
	app->add_option("--grid-min", o.grid_min);
	app->add_option("--grid-max", o.grid_max);
	app->add_option("--truncation", o.truncation);
	app->add_option("--theta-step", o.theta_step);
	app->add_option("--threads", o.threads);
	app->add_option("--output-dir", o.output_dir);
}

nlohmann::json read_json(const std::string& path, const std::string& field)
{
	std::ifstream is(path);
	if (!is)
		throw ConfigError(field, "cannot open " + path);
	try {
		return nlohmann::json::parse(is);
	} catch (const nlohmann::json::exception& e) {
		throw ConfigError(field, std::string("malformed JSON: ") + e.what());
	}
}

ExperimentConfig assemble(ExperimentKind kind, const Overrides& o)
{
	ExperimentConfig c =
	    config_from_json(kind, o.config_path.empty() ? nlohmann::json::object() : read_json(o.config_path, "config"));
	if (!o.rate_path.empty()) {
		try {
			c.rate = rate_function_from_json(read_json(o.rate_path, "rate"));
		} catch (const ConfigError&) {
			throw;
		} catch (const std::exception& e) {
			throw ConfigError("rate", e.what());
		}
	}
	if (o.beta) {
		if (!(*o.beta > 0.0))
			throw ConfigError("beta", "must be positive");
		c.rate = make_ebl(*o.beta);
	}
	if (o.seed) c.seed = o.seed;
	if (o.theta) c.theta = *o.theta;
	if (o.theta_left) c.theta_left = *o.theta_left;
	if (o.theta_right) c.theta_right = o.theta_right;
	if (!o.thetas.empty()) c.thetas = o.thetas;
	auto set = [](auto& field, const auto& value) {
		if (value) field = *value;
	};
	set(c.lattice_size, o.lattice_size);
	set(c.window, o.window);
	set(c.replicas, o.replicas);
	set(c.block, o.block);
	set(c.sample_count, o.sample_count);
	set(c.samples, o.samples);
	set(c.grid, o.grid);
	set(c.truncation, o.truncation);
	set(c.threads, o.threads);
	set(c.t_end, o.t_end);
	set(c.sample_interval, o.sample_interval);
	set(c.grid_min, o.grid_min);
	set(c.grid_max, o.grid_max);
	set(c.theta_step, o.theta_step);
	if (!o.output_dir.empty()) c.output_dir = o.output_dir;
	if (c.output_dir.empty()) {
		const char* env = std::getenv(kOutputDirEnv);
		c.output_dir = env && *env ? env : ".";
	}
	return c;
}

const char* describe(ExperimentKind k)
{
	switch (k) {
	case ExperimentKind::Marginal: return "one-site marginal, moments and flux at --theta";
	case ExperimentKind::Equilibrium: return "ring started from the product measure; site histogram vs exact";
	case ExperimentKind::Shock: return "step initial profile; block profiles and fitted front speed";
	case ExperimentKind::Tracer: return "defect tracer in its own frame; speed and nearby marginals";
	case ExperimentKind::VerifyStationary: return "exact residuals of the bulk generator at --thetas";
	case ExperimentKind::VerifyTheorem: return "tracer-frame residual scan over (theta_left, theta_right)";
	case ExperimentKind::Convexity: return "flux convexity table and certified interval";
	}
	return "";
}

}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
	CLI::App app{"Bricklayers' growth model: simulation and exact verification"};
	app.require_subcommand(1);
	Overrides o;
	std::vector<std::pair<CLI::App*, ExperimentKind>> subs;
	for (ExperimentKind k : {ExperimentKind::Marginal, ExperimentKind::Equilibrium, ExperimentKind::Shock,
	                         ExperimentKind::Tracer, ExperimentKind::VerifyStationary, ExperimentKind::VerifyTheorem,
	                         ExperimentKind::Convexity}) {
		CLI::App* sub = app.add_subcommand(kind_name(k), describe(k));
		add_options(sub, o);
		subs.emplace_back(sub, k);
	}

	std::vector<std::string> reversed(args.rbegin(), args.rend());
	try {
		app.parse(reversed);
	} catch (const CLI::CallForHelp&) {
		const CLI::App* shown = &app;
		for (const auto& [sub, k] : subs)
			if (sub->parsed()) shown = sub;
		out << shown->help();
		return kExitOk;
	} catch (const CLI::ParseError& e) {
		err << "error: " << e.what() << "\n";
		return kExitConfig;
	}

	ExperimentKind kind = ExperimentKind::Marginal;
	for (const auto& [sub, k] : subs)
		if (sub->parsed()) kind = k;

	ExperimentConfig config;
	try {
		config = assemble(kind, o);
		validate(config);
	} catch (const ConfigError& e) {
		err << "config error: " << e.what() << "\n";
		return kExitConfig;
	}

	ExperimentOutput result;
	try {
		result = run_experiment(config);
		std::filesystem::create_directories(config.output_dir);
		for (const auto& [name, text] : result.files)
			CsvWriter::write_text((std::filesystem::path(config.output_dir) / name).string(), text);
		const std::string summary = (std::filesystem::path(config.output_dir) / (kind_name(kind) + "_summary.json")).string();
		CsvWriter::write_text(summary, result.summary.dump(2) + "\n");
		out << "summary: " << summary << "\n";
	} catch (const ConfigError& e) {
		err << "config error: " << e.what() << "\n";
		return kExitConfig;
	} catch (const std::exception& e) {
		err << "runtime failure: " << e.what() << "\n";
		return kExitFailure;
	}

	if (result.summary["results"].contains("verdict"))
		out << "verdict: " << result.summary["results"]["verdict"].get<std::string>() << "\n";
	for (const auto& c : result.checks)
		out << (c.pass ? "PASS " : "FAIL ") << c.name << " value=" << format_double(c.value)
		    << " tolerance=" << format_double(c.tolerance) << "\n";
	return result.pass() ? kExitOk : kExitFailure;
}

}
