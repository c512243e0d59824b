#ifndef BRICKLAYERS_EXPERIMENTS_HPP
#define BRICKLAYERS_EXPERIMENTS_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "bricklayers/engine.hpp"
#include "bricklayers/gibbs.hpp"
#include "bricklayers/rates.hpp"
#include "bricklayers/tracer.hpp"
#include "bricklayers/verifier.hpp"

namespace bricklayers
{

enum class ExperimentKind
{
	Marginal,
	Equilibrium,
	Shock,
	Tracer,
	VerifyStationary,
	VerifyTheorem,
	Convexity,
};

std::string kind_name(ExperimentKind kind);
std::optional<ExperimentKind> parse_kind(const std::string& name);
bool is_stochastic(ExperimentKind kind);

/// Invalid or incomplete configuration; field() names the offending entry.
class ConfigError : public std::runtime_error
{
public:
	ConfigError(std::string field, const std::string& message)
	    : std::runtime_error(field + ": " + message), field_(std::move(field))
	{
	}
	const std::string& field() const { return field_; }

private:
	std::string field_;
};

struct ExperimentConfig
{
	ExperimentKind kind = ExperimentKind::Shock;
	std::optional<RateFunction> rate;
	std::optional<std::uint64_t> seed;

	double theta = 0.0;
	double theta_left = 1.0;
	std::optional<double> theta_right; ///< EBL default: theta_left - beta
	std::vector<double> thetas;        ///< verify-stationary

	int lattice_size = 2000;
	int window = 64;
	double t_end = 400.0;
	int replicas = 8;
	int block = 20;
	int sample_count = 20;       ///< profile snapshots after t = 0
	int samples = 100000;        ///< tracer marginal samples
	double sample_interval = 0.5;
	int grid = 41;
	double grid_min = -2.0;
	double grid_max = 2.0;
	int truncation = 10;
	double theta_step = 0.02;
	int threads = 0; ///< 0: hardware concurrency
	std::string output_dir;

	double speed_tolerance = 0.03;
	double far_field_sigmas = 4.0;
	double l1_tolerance = 0.05;
	int shock_window_blocks = 5;
	double tv_tolerance = 0.02;
	double residual_tolerance = 1e-10;

	double resolved_theta_right() const;
	nlohmann::json to_json() const;
};

/// Defaults for each experiment kind (sizes and horizons from the standard
/// runs); rate and seed stay unset.
ExperimentConfig default_config(ExperimentKind kind);

/// Overlays a JSON document on the defaults. Unknown keys are rejected.
ExperimentConfig config_from_json(ExperimentKind kind, const nlohmann::json& doc);

/// Checks required fields and ranges; throws ConfigError.
void validate(const ExperimentConfig& config);

struct CheckResult
{
	std::string name;
	double value = 0.0;
	double tolerance = 0.0;
	bool pass = false;
	std::string detail;

	nlohmann::json to_json() const;
};

/// Everything a run produces: named text files plus a summary.
struct ExperimentOutput
{
	nlohmann::json summary;
	std::vector<std::pair<std::string, std::string>> files;
	std::vector<CheckResult> checks;

	bool pass() const;
};

/// u_left if x < s t, else u_right. Throws for u_left < u_right.
double riemann_shock_solution(double u_left, double u_right, double s, double t, double x);

/// Runs fn(i) for i in [0, count) on up to `threads` workers; results keep
/// index order, so merging is independent of scheduling.
template <class Result, class Fn>
std::vector<Result> run_replicas(int count, int threads, Fn fn)
{
	std::vector<Result> out(static_cast<std::size_t>(count));
	if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
	threads = std::min(threads, count);
	if (threads <= 1) {
		for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = fn(i);
		return out;
	}
	std::vector<std::thread> pool;
	std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
	for (int w = 0; w < threads; ++w)
		pool.emplace_back([&, w] {
			try {
				for (int i = w; i < count; i += threads) out[static_cast<std::size_t>(i)] = fn(i);
			} catch (...) {
				errors[static_cast<std::size_t>(w)] = std::current_exception();
			}
		});
	for (auto& t : pool) t.join();
	for (auto& e : errors)
		if (e) std::rethrow_exception(e);
	return out;
}

struct ProfileRecord
{
	double t = 0.0;
	double x = 0.0;       ///< block center over N, 0.5 at the initial jump
	double u_hat = 0.0;   ///< replica mean of the block average
	double stderr_ = 0.0; ///< replica standard error
};

struct FrontPoint
{
	double t = 0.0;
	double position = 0.0; ///< sites right of the initial jump
	bool found = false;
};

struct ShockResult
{
	double u_left = 0.0, u_right = 0.0;
	double rh_speed = 0.0;
	std::vector<ProfileRecord> records;
	std::vector<FrontPoint> front;
	double fitted_speed = 0.0;
	double fitted_speed_stderr = 0.0;
	double relative_speed_error = 0.0;
	double l1_distance = 0.0;
	double l1_noise_floor = 0.0;
	double far_field_max_z = 0.0;
	int far_field_blocks = 0;
	bool boundary_hit = false;
	std::int64_t rejections = 0;
	std::int64_t events = 0;
};

ShockResult run_shock_profile(const ExperimentConfig& config);

struct TracerResult
{
	double theta_left = 0.0, theta_right = 0.0;
	SpeedEstimate speed;
	double analytic_speed = 0.0;
	std::optional<double> rh;
	ShiftedMarginalReport marginals;
	double stationarity_residual = 0.0; ///< max over the basis, exact
	Verdict stationarity = Verdict::NonZero;
	std::vector<std::pair<double, std::int64_t>> trajectory;
	std::vector<std::int64_t> origin_histogram;
	int histogram_lo = 0;
	std::int64_t rejections = 0;
};

TracerResult run_tracer_experiment(const ExperimentConfig& config);

struct ConvexityRow
{
	double theta, u, J, convexity;
};

struct ConvexityResult
{
	std::vector<ConvexityRow> rows;
	ConvexityInterval interval;
	bool discrete_convex = false; ///< second differences of J(u) > 0 on the interval
	double min_second_difference = 0.0;
	double symmetry_error = 0.0;  ///< max |u(theta) + u(-theta)|
	bool symmetric_rates = false;
};

ConvexityResult run_convexity_report(const ExperimentConfig& config);

struct EquilibriumResult
{
	std::vector<std::int64_t> histogram;
	int histogram_lo = 0;
	std::int64_t site_samples = 0;
	double tv = 0.0;
	double mean = 0.0;
	std::int64_t rejections = 0;
};

EquilibriumResult run_equilibrium(const ExperimentConfig& config);

/// Dispatches on config.kind and assembles files, checks and summary.
ExperimentOutput run_experiment(const ExperimentConfig& config);

}

#endif
