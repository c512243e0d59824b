#include "bricklayers/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "bricklayers/io.hpp"

namespace bricklayers
{

namespace
{

const std::map<ExperimentKind, std::string>& kind_names()
{
	static const std::map<ExperimentKind, std::string> names{
	    {ExperimentKind::Marginal, "marginal"},
	    {ExperimentKind::Equilibrium, "equilibrium"},
	    {ExperimentKind::Shock, "shock"},
	    {ExperimentKind::Tracer, "tracer"},
	    {ExperimentKind::VerifyStationary, "verify-stationary"},
	    {ExperimentKind::VerifyTheorem, "verify-theorem"},
	    {ExperimentKind::Convexity, "convexity"},
	};
	return names;
}

CheckResult check_below(std::string name, double value, double tolerance, std::string detail = {})
{
	return {std::move(name), value, tolerance, std::isfinite(value) && value < tolerance, std::move(detail)};
}

CheckResult check_flag(std::string name, bool ok, std::string detail = {})
{
	return {std::move(name), ok ? 1.0 : 0.0, 1.0, ok, std::move(detail)};
}

double sample_sd(const std::vector<double>& v)
{
	if (v.size() < 2) return 0.0;
	const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
	double ss = 0.0;
	for (double x : v) ss += (x - m) * (x - m);
	return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Least-squares slope of y against t with its standard error.
std::pair<double, double> fit_slope(const std::vector<double>& t, const std::vector<double>& y)
{
	const std::size_t n = t.size();
	if (n < 2) return {std::nan(""), std::nan("")};
	const double mt = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(n);
	const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
	double stt = 0.0, sty = 0.0;
	for (std::size_t k = 0; k < n; ++k) {
		stt += (t[k] - mt) * (t[k] - mt);
		sty += (t[k] - mt) * (y[k] - my);
	}
	const double slope = sty / stt;
	double rss = 0.0;
	for (std::size_t k = 0; k < n; ++k) {
		const double e = y[k] - my - slope * (t[k] - mt);
		rss += e * e;
	}
	const double se = n > 2 ? std::sqrt(rss / static_cast<double>(n - 2) / stt) : std::nan("");
	return {slope, se};
}

/// Linear-interpolated crossing of `level` by a decreasing block profile,
/// choosing the crossing closest to `guess`. Positions are block centers.
std::optional<double> level_crossing(const std::vector<double>& centers, const std::vector<double>& u, double level,
                                     double guess)
{
	std::optional<double> best;
	for (std::size_t k = 0; k + 1 < u.size(); ++k) {
		if (u[k] >= level && u[k + 1] < level) {
			const double f = (u[k] - level) / (u[k] - u[k + 1]);
			const double x = centers[k] + f * (centers[k + 1] - centers[k]);
			if (!best || std::abs(x - guess) < std::abs(*best - guess)) best = x;
		}
	}
	return best;
}

double number_field(const nlohmann::json& doc, const std::string& key)
{
	const auto& v = doc.at(key);
	if (!v.is_number())
		throw ConfigError(key, "expected a number");
	return v.get<double>();
}

int int_field(const nlohmann::json& doc, const std::string& key)
{
	const auto& v = doc.at(key);
	if (!v.is_number_integer())
		throw ConfigError(key, "expected an integer");
	return v.get<int>();
}

}

std::string kind_name(ExperimentKind kind) { return kind_names().at(kind); }

std::optional<ExperimentKind> parse_kind(const std::string& name)
{
	for (const auto& [k, n] : kind_names())
		if (n == name) return k;
	return std::nullopt;
}

bool is_stochastic(ExperimentKind kind)
{
	return kind == ExperimentKind::Equilibrium || kind == ExperimentKind::Shock || kind == ExperimentKind::Tracer;
}

// ---------------------------------------------------------------------------
// Configuration

double ExperimentConfig::resolved_theta_right() const
{
	if (theta_right) return *theta_right;
	if (rate && rate->is_ebl()) return theta_left - rate->beta();
	throw ConfigError("theta_right", "required unless the rates are EBL");
}

nlohmann::json ExperimentConfig::to_json() const
{
	nlohmann::json j;
	j["kind"] = kind_name(kind);
	if (rate) j["rate"] = bricklayers::to_json(*rate);
	if (seed) j["seed"] = *seed;
	switch (kind) {
	case ExperimentKind::Marginal:
	case ExperimentKind::Convexity:
		j["theta"] = theta;
		j["theta_step"] = theta_step;
		break;
	case ExperimentKind::Equilibrium:
		j["theta"] = theta;
		j["lattice_size"] = lattice_size;
		j["t_end"] = t_end;
		j["replicas"] = replicas;
		j["tv_tolerance"] = tv_tolerance;
		break;
	case ExperimentKind::Shock:
		j["theta_left"] = theta_left;
		j["theta_right"] = resolved_theta_right();
		j["lattice_size"] = lattice_size;
		j["t_end"] = t_end;
		j["replicas"] = replicas;
		j["block"] = block;
		j["sample_count"] = sample_count;
		j["speed_tolerance"] = speed_tolerance;
		j["far_field_sigmas"] = far_field_sigmas;
		j["l1_tolerance"] = l1_tolerance;
		j["shock_window_blocks"] = shock_window_blocks;
		break;
	case ExperimentKind::Tracer:
		j["theta_left"] = theta_left;
		j["theta_right"] = resolved_theta_right();
		j["window"] = window;
		j["t_end"] = t_end;
		j["samples"] = samples;
		j["sample_interval"] = sample_interval;
		j["tv_tolerance"] = tv_tolerance;
		break;
	case ExperimentKind::VerifyStationary:
		j["thetas"] = thetas;
		j["truncation"] = truncation;
		j["residual_tolerance"] = residual_tolerance;
		break;
	case ExperimentKind::VerifyTheorem:
		j["grid"] = grid;
		j["grid_min"] = grid_min;
		j["grid_max"] = grid_max;
		break;
	}
	return j;
}

ExperimentConfig default_config(ExperimentKind kind)
{
	ExperimentConfig c;
	c.kind = kind;
	switch (kind) {
	case ExperimentKind::Equilibrium:
		c.lattice_size = 256;
		c.t_end = 50.0;
		c.replicas = 391;
		break;
	case ExperimentKind::Tracer:
		c.t_end = 1e4;
		break;
	case ExperimentKind::VerifyStationary:
		c.thetas = {-1.0, 0.0, 0.7};
		break;
	default:
		break;
	}
	return c;
}

ExperimentConfig config_from_json(ExperimentKind kind, const nlohmann::json& doc)
{
	if (!doc.is_object())
		throw ConfigError("config", "expected a JSON object");
	ExperimentConfig c = default_config(kind);
	static const std::set<std::string> known{
	    "kind", "rate", "seed", "theta", "theta_left", "theta_right", "thetas", "lattice_size", "window", "t_end",
	    "replicas", "block", "sample_count", "samples", "sample_interval", "grid", "grid_min", "grid_max",
	    "truncation", "theta_step", "threads", "output_dir", "speed_tolerance", "far_field_sigmas", "l1_tolerance",
	    "shock_window_blocks", "tv_tolerance", "residual_tolerance"};
	for (const auto& [key, value] : doc.items())
		if (!known.count(key))
			throw ConfigError(key, "unknown field");

	if (doc.contains("kind")) {
		if (!doc["kind"].is_string() || parse_kind(doc["kind"].get<std::string>()) != kind)
			throw ConfigError("kind", "does not match the subcommand");
	}
	if (doc.contains("rate")) {
		try {
			c.rate = rate_function_from_json(doc["rate"]);
		} catch (const std::exception& e) {
			throw ConfigError("rate", e.what());
		}
	}
	if (doc.contains("seed")) {
		const auto& seed = doc["seed"];
		if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0))
			throw ConfigError("seed", "expected a nonnegative integer");
		c.seed = doc["seed"].get<std::uint64_t>();
	}
	auto num = [&](const char* key, double& out) {
		if (doc.contains(key)) out = number_field(doc, key);
	};
	auto integer = [&](const char* key, int& out) {
		if (doc.contains(key)) out = int_field(doc, key);
	};
	num("theta", c.theta);
	num("theta_left", c.theta_left);
	if (doc.contains("theta_right")) c.theta_right = number_field(doc, "theta_right");
	if (doc.contains("thetas")) {
		if (!doc["thetas"].is_array())
			throw ConfigError("thetas", "expected an array of numbers");
		c.thetas.clear();
		for (const auto& v : doc["thetas"]) {
			if (!v.is_number())
				throw ConfigError("thetas", "expected an array of numbers");
			c.thetas.push_back(v.get<double>());
		}
	}
	integer("lattice_size", c.lattice_size);
	integer("window", c.window);
	num("t_end", c.t_end);
	integer("replicas", c.replicas);
	integer("block", c.block);
	integer("sample_count", c.sample_count);
	integer("samples", c.samples);
	num("sample_interval", c.sample_interval);
	integer("grid", c.grid);
	num("grid_min", c.grid_min);
	num("grid_max", c.grid_max);
	integer("truncation", c.truncation);
	num("theta_step", c.theta_step);
	integer("threads", c.threads);
	if (doc.contains("output_dir")) {
		if (!doc["output_dir"].is_string())
			throw ConfigError("output_dir", "expected a string");
		c.output_dir = doc["output_dir"].get<std::string>();
	}
	num("speed_tolerance", c.speed_tolerance);
	num("far_field_sigmas", c.far_field_sigmas);
	num("l1_tolerance", c.l1_tolerance);
	integer("shock_window_blocks", c.shock_window_blocks);
	num("tv_tolerance", c.tv_tolerance);
	num("residual_tolerance", c.residual_tolerance);
	return c;
}

void validate(const ExperimentConfig& c)
{
	if (!c.rate)
		throw ConfigError("rate", "missing rate function (set --beta or the config field \"rate\")");
	if (is_stochastic(c.kind) && !c.seed)
		throw ConfigError("seed", "missing; stochastic runs need an explicit seed");
	const RateFunction& rf = *c.rate;
	const double limit = summable_theta_limit(rf);
	auto admissible = [&](const char* field, double theta) {
		if (!std::isfinite(theta) || std::abs(theta) >= limit)
			throw ConfigError(field, "outside the summable range of the rates");
		try {
			build_marginal(rf, theta);
		} catch (const std::exception& e) {
			throw ConfigError("rate", std::string("table too short for ") + field + ": " + e.what());
		}
	};
	switch (c.kind) {
	case ExperimentKind::Marginal:
	case ExperimentKind::Equilibrium:
		admissible("theta", c.theta);
		break;
	case ExperimentKind::Shock:
	case ExperimentKind::Tracer:
		admissible("theta_left", c.theta_left);
		admissible("theta_right", c.resolved_theta_right());
		break;
	case ExperimentKind::VerifyStationary:
		if (c.thetas.empty())
			throw ConfigError("thetas", "must not be empty");
		for (double t : c.thetas) admissible("thetas", t);
		break;
	default:
		break;
	}
	if (!(c.t_end > 0.0))
		throw ConfigError("t_end", "must be positive");
	if (c.replicas < 1)
		throw ConfigError("replicas", "must be at least 1");
	if (c.kind == ExperimentKind::Equilibrium && c.lattice_size < 3)
		throw ConfigError("lattice_size", "must be at least 3");
	if (c.kind == ExperimentKind::Shock) {
		if (c.block < 1 || c.lattice_size < 8 * c.block || c.lattice_size % c.block != 0)
			throw ConfigError("block", "must divide lattice_size into at least 8 blocks");
		if (c.sample_count < 2)
			throw ConfigError("sample_count", "must be at least 2");
		if (c.theta_left < c.resolved_theta_right())
			throw ConfigError("theta_left", "rarefaction ordering (theta_left < theta_right) is not supported");
	}
	if (c.kind == ExperimentKind::Tracer) {
		if (c.window < 3)
			throw ConfigError("window", "must be at least 3");
		if (c.samples < 100)
			throw ConfigError("samples", "must be at least 100");
		if (!(c.sample_interval > 0.0))
			throw ConfigError("sample_interval", "must be positive");
	}
	if (c.kind == ExperimentKind::VerifyTheorem && (c.grid < 2 || !(c.grid_max > c.grid_min)))
		throw ConfigError("grid", "needs at least two points on a nonempty range");
	if (c.kind == ExperimentKind::VerifyStationary && c.truncation < 5)
		throw ConfigError("truncation", "must be at least 5");
	if ((c.kind == ExperimentKind::Convexity || c.kind == ExperimentKind::Marginal) && !(c.theta_step > 0.0))
		throw ConfigError("theta_step", "must be positive");
}

nlohmann::json CheckResult::to_json() const
{
	nlohmann::json j{{"name", name}, {"value", value}, {"tolerance", tolerance}, {"pass", pass}};
	if (!detail.empty()) j["detail"] = detail;
	return j;
}

bool ExperimentOutput::pass() const
{
	return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

double riemann_shock_solution(double u_left, double u_right, double s, double t, double x)
{
	if (u_left < u_right)
		throw std::invalid_argument("rarefaction data (u_left < u_right) is out of scope");
	return x < s * t ? u_left : u_right;
}

// ---------------------------------------------------------------------------
// Shock

namespace
{

struct ReplicaProfile
{
	std::vector<std::vector<double>> blocks; ///< [sample time][block]
	std::int64_t rejections = 0;
	std::int64_t events = 0;
};

}

ShockResult run_shock_profile(const ExperimentConfig& c)
{
	validate(c);
	const RateFunction& rf = *c.rate;
	const double tl = c.theta_left, tr = c.resolved_theta_right();
	const int N = c.lattice_size, half = N / 2, nb = N / c.block;

	ShockResult res;
	res.u_left = mean_u(rf, tl);
	res.u_right = mean_u(rf, tr);
	const bool flat = tl == tr;
	res.rh_speed = flat ? 0.0 : rh_speed(rf, tl, tr);
	if (!flat && (half + res.rh_speed * c.t_end > N - N / 8.0 || half + res.rh_speed * c.t_end < N / 8.0))
		throw ConfigError("lattice_size", "too small: the predicted shock reaches the last eighth of the lattice");

	std::vector<double> times{0.0};
	for (int k = 1; k <= c.sample_count; ++k) times.push_back(c.t_end * k / c.sample_count);

	const Rng root(*c.seed);
	const auto replicas = run_replicas<ReplicaProfile>(c.replicas, c.threads, [&](int r) {
		Rng rng = root.split(static_cast<std::uint64_t>(r));
		LatticeState state(rf, sample_product(rf, tl, tr, N, half, rng), GhostProduct{tl, tr, half});
		ReplicaProfile out;
		SampleHooks hooks;
		hooks.times = times;
		hooks.on_sample = [&](const LatticeState& s, double) {
			std::vector<double> b(static_cast<std::size_t>(nb), 0.0);
			for (int i = 0; i < N; ++i) b[static_cast<std::size_t>(i / c.block)] += s.omega(i);
			for (double& v : b) v /= c.block;
			out.blocks.push_back(std::move(b));
		};
		const SimulationStats stats = simulate_until(state, c.t_end, rng, hooks);
		out.rejections = stats.rejections;
		out.events = stats.events;
		return out;
	});

	const int R = c.replicas;
	std::vector<double> centers(static_cast<std::size_t>(nb));
	for (int k = 0; k < nb; ++k) centers[static_cast<std::size_t>(k)] = (k + 0.5) * c.block - half;
	for (const auto& rep : replicas) {
		res.rejections += rep.rejections;
		res.events += rep.events;
	}

	const double mid = 0.5 * (res.u_left + res.u_right);
	std::vector<double> fit_t, fit_x;
	std::vector<std::vector<double>> replica_fronts(static_cast<std::size_t>(R));
	std::vector<double> final_mean;
	for (std::size_t ti = 0; ti < times.size(); ++ti) {
		std::vector<double> mean(static_cast<std::size_t>(nb), 0.0);
		for (int k = 0; k < nb; ++k) {
			std::vector<double> vals;
			for (const auto& rep : replicas) vals.push_back(rep.blocks[ti][static_cast<std::size_t>(k)]);
			const double m = std::accumulate(vals.begin(), vals.end(), 0.0) / R;
			mean[static_cast<std::size_t>(k)] = m;
			res.records.push_back({times[ti], (centers[static_cast<std::size_t>(k)] + half) / N, m,
			                       sample_sd(vals) / std::sqrt(static_cast<double>(R))});
		}
		if (!flat) {
			const double guess = res.rh_speed * times[ti];
			const auto x = level_crossing(centers, mean, mid, guess);
			res.front.push_back({times[ti], x.value_or(std::nan("")), x.has_value()});
			if (x && (*x + half < N / 8.0 || *x + half > N - N / 8.0)) res.boundary_hit = true;
			if (x && times[ti] > 0.0) {
				fit_t.push_back(times[ti]);
				fit_x.push_back(*x);
			}
			for (int r = 0; r < R; ++r) {
				const auto xr = level_crossing(centers, replicas[static_cast<std::size_t>(r)].blocks[ti], mid, guess);
				if (xr && times[ti] > 0.0) replica_fronts[static_cast<std::size_t>(r)].push_back(*xr);
			}
		}
		if (ti + 1 == times.size()) final_mean = mean;
	}

	if (!flat && !res.boundary_hit) {
		res.fitted_speed = fit_slope(fit_t, fit_x).first;
		res.relative_speed_error = std::abs(res.fitted_speed - res.rh_speed) / std::abs(res.rh_speed);
		std::vector<double> speeds;
		std::vector<double> t_pos(times.begin() + 1, times.end());
		for (const auto& fr : replica_fronts)
			if (fr.size() == t_pos.size()) speeds.push_back(fit_slope(t_pos, fr).first);
		res.fitted_speed_stderr = speeds.size() > 1 ? sample_sd(speeds) / std::sqrt(static_cast<double>(speeds.size()))
		                                            : std::nan("");
	}

	// Far field at t_end and the L1 distance to the step profile.
	const double var_l = variance(rf, tl), var_r = variance(rf, tr);
	const double front = flat ? 0.0 : (res.front.back().found ? res.front.back().position : res.rh_speed * c.t_end);
	const double jump = std::abs(res.u_left - res.u_right);
	double l1 = 0.0, floor = 0.0;
	for (int k = 0; k < nb; ++k) {
		const double x = centers[static_cast<std::size_t>(k)];
		const double u = final_mean[static_cast<std::size_t>(k)];
		const bool left_side = x < res.rh_speed * c.t_end;
		const double sigma = std::sqrt((left_side ? var_l : var_r) / (c.block * R));
		if (flat || std::abs(x - front) > N / 4.0) {
			const double target = x < front ? res.u_left : res.u_right;
			res.far_field_max_z = std::max(res.far_field_max_z, std::abs(u - target) / sigma);
			++res.far_field_blocks;
		}
		if (!flat && std::abs(x - res.rh_speed * c.t_end) > c.shock_window_blocks * c.block) {
			const double step = riemann_shock_solution(res.u_left, res.u_right, res.rh_speed, c.t_end, x);
			l1 += std::abs(u - step) * c.block / N / jump;
			floor += std::sqrt(2.0 / M_PI) * sigma * c.block / N / jump;
		}
	}
	res.l1_distance = l1;
	res.l1_noise_floor = floor;
	return res;
}

// ---------------------------------------------------------------------------
// Tracer

TracerResult run_tracer_experiment(const ExperimentConfig& c)
{
	validate(c);
	const RateFunction& rf = *c.rate;
	TracerResult res;
	res.theta_left = c.theta_left;
	res.theta_right = c.resolved_theta_right();
	const GibbsMarginal left = build_marginal(rf, res.theta_left);
	const GibbsMarginal right = build_marginal(rf, res.theta_right);
	res.analytic_speed = analytic_tracer_speed(right);
	if (res.theta_left != res.theta_right) res.rh = rh_speed(rf, res.theta_left, res.theta_right);

	const BasisReport stat = evaluate_basis(GeneratorKind::TracerFrame, rf, {res.theta_left, res.theta_right},
	                                        default_basis(), Evaluator::Factorized);
	res.stationarity_residual = stat.max_residual;
	res.stationarity = stat.verdict;

	Rng rng(*c.seed);
	TracerFrameState state(rf, res.theta_left, res.theta_right, c.window,
	                       TracerFrameState::sample_two_sided(rf, res.theta_left, res.theta_right, c.window, rng));
	res.speed = measure_tracer_speed(state, c.t_end, rng, 20, &res.trajectory);

	std::vector<double> sample_times;
	for (int k = 1; k <= c.samples; ++k) sample_times.push_back(c.t_end + k * c.sample_interval);
	FrameSamples samples;
	state.run_until(sample_times.back(), rng, sample_times,
	                [&](const TracerFrameState& s, double) { samples.record(s); });
	res.marginals = shifted_marginal_check(samples, left, right);
	res.rejections = state.rejections();

	const auto [lo, hi] = std::minmax_element(samples.origin.begin(), samples.origin.end());
	res.histogram_lo = *lo;
	res.origin_histogram.assign(static_cast<std::size_t>(*hi - *lo + 1), 0);
	for (int z : samples.origin) ++res.origin_histogram[static_cast<std::size_t>(z - *lo)];
	return res;
}

// ---------------------------------------------------------------------------
// Convexity

ConvexityResult run_convexity_report(const ExperimentConfig& c)
{
	validate(c);
	const RateFunction& rf = *c.rate;
	const ThetaInterval box = admissible_theta_box(rf);
	ConvexityResult res;
	res.interval = convexity_interval(rf, box, c.theta_step);
	const int steps = static_cast<int>(std::floor((box.hi - box.lo) / c.theta_step + 1e-9));
	for (int k = 0; k <= steps; ++k) {
		const double th = box.lo + k * c.theta_step;
		res.rows.push_back({th, mean_u(rf, th), flux_at_theta(rf, th), flux_convexity(rf, th)});
	}
	res.min_second_difference = kInf;
	for (std::size_t k = 1; k + 1 < res.rows.size(); ++k) {
		const auto &a = res.rows[k - 1], &b = res.rows[k], &d = res.rows[k + 1];
		if (a.theta < res.interval.theta_1 - 1e-12 || d.theta > res.interval.theta_2 + 1e-12) continue;
		const double second = 2.0 * ((d.J - b.J) / (d.u - b.u) - (b.J - a.J) / (b.u - a.u)) / (d.u - a.u);
		res.min_second_difference = std::min(res.min_second_difference, second);
	}
	res.discrete_convex = res.min_second_difference > 0.0;
	res.symmetric_rates = rf.is_ebl();
	for (const auto& row : res.rows) {
		const double mirror = -row.theta;
		if (mirror < box.lo || mirror > box.hi) continue;
		res.symmetry_error = std::max(res.symmetry_error, std::abs(row.u + mean_u(rf, mirror)));
	}
	return res;
}

// ---------------------------------------------------------------------------
// Equilibrium

EquilibriumResult run_equilibrium(const ExperimentConfig& c)
{
	validate(c);
	const RateFunction& rf = *c.rate;
	const GibbsMarginal m = build_marginal(rf, c.theta);
	const int cap = kDefaultSlopeCap;
	struct Replica
	{
		std::vector<std::int64_t> hist;
		std::int64_t rejections = 0;
	};
	const Rng root(*c.seed);
	const auto reps = run_replicas<Replica>(c.replicas, c.threads, [&](int r) {
		Rng rng = root.split(static_cast<std::uint64_t>(r));
		LatticeState state(rf, sample_product(rf, c.theta, c.theta, c.lattice_size, 0, rng), Ring{});
		const SimulationStats stats = simulate_until(state, c.t_end, rng);
		Replica out;
		out.hist.assign(static_cast<std::size_t>(2 * cap + 1), 0);
		for (int w : state.omega()) ++out.hist[static_cast<std::size_t>(w + cap)];
		out.rejections = stats.rejections;
		return out;
	});

	EquilibriumResult res;
	res.histogram.assign(static_cast<std::size_t>(2 * cap + 1), 0);
	for (const auto& r : reps) {
		for (std::size_t k = 0; k < r.hist.size(); ++k) res.histogram[k] += r.hist[k];
		res.rejections += r.rejections;
	}
	std::size_t first = 0, last = res.histogram.size() - 1;
	while (first < last && res.histogram[first] == 0) ++first;
	while (last > first && res.histogram[last] == 0) --last;
	std::vector<int> values;
	double sum = 0.0;
	for (std::size_t k = 0; k < res.histogram.size(); ++k) {
		res.site_samples += res.histogram[k];
		sum += static_cast<double>(res.histogram[k]) * (static_cast<int>(k) - cap);
	}
	res.mean = sum / static_cast<double>(res.site_samples);
	double covered = 0.0, tv = 0.0;
	for (std::size_t k = 0; k < res.histogram.size(); ++k) {
		const int z = static_cast<int>(k) - cap;
		const double p = m.pmf_at(z);
		covered += p;
		tv += std::abs(static_cast<double>(res.histogram[k]) / static_cast<double>(res.site_samples) - p);
	}
	res.tv = 0.5 * (tv + std::max(0.0, 1.0 - covered));
	res.histogram = std::vector<std::int64_t>(res.histogram.begin() + static_cast<std::ptrdiff_t>(first),
	                                          res.histogram.begin() + static_cast<std::ptrdiff_t>(last) + 1);
	res.histogram_lo = static_cast<int>(first) - cap;
	return res;
}

// ---------------------------------------------------------------------------
// Dispatch

namespace
{

std::string histogram_csv(const std::vector<std::int64_t>& counts, int lo, const nlohmann::json& header)
{
	CsvWriter w(header, {"z", "count"});
	for (std::size_t k = 0; k < counts.size(); ++k)
		w.row({static_cast<double>(lo + static_cast<int>(k)), static_cast<double>(counts[k])});
	return w.str();
}

ExperimentOutput output_marginal(const ExperimentConfig& c)
{
	const GibbsMarginal m = build_marginal(*c.rate, c.theta);
	const Moments mo = moments(m);
	ExperimentOutput out;
	out.files.emplace_back("marginal.csv", export_marginal(m));
	out.checks.push_back(check_below("normalization", std::abs(m.pmf.sum() - 1.0), 1e-12));
	out.checks.push_back(check_below("tail_bound", m.tail_bound, 1.000001 * kDefaultTailTarget));
	out.summary["results"] = {{"z_min", m.z_min},     {"z_max", m.z_max},          {"log_Z", m.log_Z},
	                          {"mean", mo.mean},      {"variance", mo.variance},   {"third_central", mo.third_central},
	                          {"tail_bound", m.tail_bound}};
	return out;
}

ExperimentOutput output_equilibrium(const ExperimentConfig& c)
{
	const EquilibriumResult r = run_equilibrium(c);
	ExperimentOutput out;
	nlohmann::json header{{"theta", c.theta}, {"lattice_size", c.lattice_size}, {"t_end", c.t_end},
	                      {"seed", *c.seed}, {"replicas", c.replicas}};
	out.files.emplace_back("equilibrium_histogram.csv", histogram_csv(r.histogram, r.histogram_lo, header));
	out.checks.push_back(check_below("single_site_tv", r.tv, c.tv_tolerance));
	out.checks.push_back(check_flag("no_cap_rejections", r.rejections == 0));
	out.summary["results"] = {{"tv", r.tv},
	                          {"site_samples", r.site_samples},
	                          {"mean", r.mean},
	                          {"exact_mean", mean_u(*c.rate, c.theta)},
	                          {"rejections", r.rejections}};
	return out;
}

ExperimentOutput output_shock(const ExperimentConfig& c)
{
	const ShockResult r = run_shock_profile(c);
	ExperimentOutput out;
	nlohmann::json header{{"theta_left", c.theta_left}, {"theta_right", c.resolved_theta_right()},
	                      {"lattice_size", c.lattice_size}, {"block", c.block}, {"seed", *c.seed},
	                      {"replicas", c.replicas}};
	CsvWriter profile(header, {"t", "x_block", "u_hat", "stderr"});
	for (const auto& p : r.records) profile.row({p.t, p.x, p.u_hat, p.stderr_});
	out.files.emplace_back("shock_profile.csv", profile.str());
	const bool flat = c.theta_left == c.resolved_theta_right();
	if (!flat) {
		CsvWriter front(header, {"t", "position"});
		for (const auto& f : r.front) front.row({f.t, f.position});
		out.files.emplace_back("shock_front.csv", front.str());
		out.checks.push_back(check_flag("shock_inside_lattice", !r.boundary_hit));
		out.checks.push_back(check_below("front_speed_relative_error", r.relative_speed_error, c.speed_tolerance));
		out.checks.push_back(check_below("l1_distance", r.l1_distance, c.l1_tolerance));
	}
	out.checks.push_back(check_below("far_field_max_z", r.far_field_max_z, c.far_field_sigmas));
	out.summary["results"] = {{"u_left", r.u_left},
	                          {"u_right", r.u_right},
	                          {"rh_speed", r.rh_speed},
	                          {"fitted_speed", r.fitted_speed},
	                          {"fitted_speed_replica_stderr", r.fitted_speed_stderr},
	                          {"relative_speed_error", r.relative_speed_error},
	                          {"l1_distance", r.l1_distance},
	                          {"l1_noise_floor", r.l1_noise_floor},
	                          {"far_field_max_z", r.far_field_max_z},
	                          {"far_field_blocks", r.far_field_blocks},
	                          {"boundary_hit", r.boundary_hit},
	                          {"events", r.events},
	                          {"rejections", r.rejections}};
	return out;
}

ExperimentOutput output_tracer(const ExperimentConfig& c)
{
	const TracerResult r = run_tracer_experiment(c);
	ExperimentOutput out;
	nlohmann::json header{{"theta_left", r.theta_left}, {"theta_right", r.theta_right}, {"window", c.window},
	                      {"seed", *c.seed}};
	if (c.rate->is_ebl()) header["beta"] = c.rate->beta();
	CsvWriter traj(header, {"time", "displacement"});
	for (const auto& [t, d] : r.trajectory) traj.row({t, static_cast<double>(d)});
	out.files.emplace_back("tracer_trajectory.csv", traj.str());
	out.files.emplace_back("tracer_origin_histogram.csv", histogram_csv(r.origin_histogram, r.histogram_lo, header));

	const bool stationary = r.stationarity == Verdict::ConsistentWithZero;
	if (stationary) {
		const double tol = std::max(3.0 * r.speed.std_error, 0.02 * std::abs(r.analytic_speed));
		out.checks.push_back(check_below("speed_vs_analytic", std::abs(r.speed.v_hat - r.analytic_speed), tol));
		if (r.rh)
			out.checks.push_back(check_below("analytic_vs_rh", std::abs(r.analytic_speed - *r.rh), 1e-10));
		out.checks.push_back(check_below("tv_shift", r.marginals.tv_shift, c.tv_tolerance));
		out.checks.push_back(check_below("tv_origin_exact", r.marginals.tv_origin_exact, c.tv_tolerance));
	}
	out.summary["results"] = {
	    {"v_hat", r.speed.v_hat},
	    {"v_stderr", r.speed.std_error},
	    {"left_jumps", r.speed.left_jumps},
	    {"right_jumps", r.speed.right_jumps},
	    {"analytic_speed", r.analytic_speed},
	    {"rh_speed", r.rh ? nlohmann::json(*r.rh) : nlohmann::json(nullptr)},
	    {"measure", stationary ? "stationary" : "non-stationary"},
	    {"stationarity_residual", r.stationarity_residual},
	    {"tv_shift", r.marginals.tv_shift},
	    {"tv_origin_exact", r.marginals.tv_origin_exact},
	    {"tv_left_exact", r.marginals.tv_left_exact},
	    {"far_correlation", r.marginals.far_correlation},
	    {"far_correlation_stderr", r.marginals.far_correlation_stderr},
	    {"marginal_samples", r.marginals.samples},
	    {"rejections", r.rejections}};
	return out;
}

ExperimentOutput output_verify_stationary(const ExperimentConfig& c)
{
	ExperimentOutput out;
	const auto basis = default_basis();
	CsvWriter table({{"truncation", c.truncation}, {"basis_size", basis.size()}},
	                {"theta", "max_residual", "max_tail_bound", "max_rounding_bound"});
	nlohmann::json per_theta = nlohmann::json::array();
	double worst = 0.0;
	bool consistent = true;
	for (double th : c.thetas) {
		const BasisReport b = evaluate_basis(GeneratorKind::TranslationInvariant, *c.rate, ThetaProfile::uniform(th),
		                                     basis, Evaluator::BruteForce, c.truncation);
		table.row({th, b.max_residual, b.max_tail_bound, b.max_rounding_bound});
		worst = std::max(worst, b.max_residual);
		consistent = consistent && b.verdict == Verdict::ConsistentWithZero;
		per_theta.push_back({{"theta", th},
		                     {"max_residual", b.max_residual},
		                     {"argmax", b.entries[b.argmax].basis},
		                     {"verdict", verdict_name(b.verdict)}});
	}
	out.files.emplace_back("stationary_residuals.csv", table.str());
	out.checks.push_back(check_below("max_residual", worst, c.residual_tolerance));
	out.checks.push_back(check_flag("all_consistent_with_zero", consistent));
	out.summary["results"] = {{"per_theta", per_theta}, {"max_residual", worst}};
	return out;
}

ExperimentOutput output_verify_theorem(const ExperimentConfig& c)
{
	const RateFunction& rf = *c.rate;
	const auto basis = default_basis();
	const auto grid = theta_grid(c.grid_min, c.grid_max, c.grid);
	const double step = (c.grid_max - c.grid_min) / (c.grid - 1);
	const ScanReport full = theorem_scan(rf, grid, grid, basis);
	const ScanReport diag = diagonal_scan(rf, grid, basis);
	ExperimentOutput out;
	nlohmann::json header{{"grid", c.grid}, {"grid_min", c.grid_min}, {"grid_max", c.grid_max},
	                      {"basis_size", basis.size()}};
	out.files.emplace_back("theorem_scan.csv", full.csv(header));
	out.files.emplace_back("diagonal_scan.csv", diag.csv(header));

	char verdict[128];
	if (full.any_consistent())
		std::snprintf(verdict, sizeof verdict, "EBL pair found at theta_l-theta_r=%.2f",
		              full.argmin_left - full.argmin_right);
	else
		std::snprintf(verdict, sizeof verdict, "no stationary two-sided product measure on the grid");

	if (rf.is_ebl()) {
		out.checks.push_back(check_flag("stationary_pair_found", full.any_consistent()));
		out.checks.push_back(check_below("argmin_offset_error",
		                                 std::abs(full.argmin_left - full.argmin_right - rf.beta()), step + 1e-9));
		out.checks.push_back(check_below("min_residual", full.min_residual, 1e-8));
		out.checks.push_back(check_flag("diagonal_never_stationary", !diag.any_consistent()));
	} else {
		out.checks.push_back(check_flag("no_stationary_pair", !full.any_consistent()));
		out.checks.push_back(
		    {"min_residual_above", full.min_residual, 1e-3, full.min_residual > 1e-3, "must exceed the tolerance"});
	}
	out.summary["results"] = {{"verdict", verdict}, {"scan", full.summary()}, {"diagonal", diag.summary()}};
	return out;
}

ExperimentOutput output_convexity(const ExperimentConfig& c)
{
	const ConvexityResult r = run_convexity_report(c);
	ExperimentOutput out;
	CsvWriter table({{"theta_step", c.theta_step}}, {"theta", "u", "J", "d2J_du2"});
	for (const auto& row : r.rows) table.row({row.theta, row.u, row.J, row.convexity});
	out.files.emplace_back("convexity.csv", table.str());
	out.checks.push_back(check_flag("interval_contains_zero", r.interval.theta_1 <= 0.0 && r.interval.theta_2 >= 0.0));
	out.checks.push_back(check_flag("discrete_convex_on_interval", r.discrete_convex));
	if (r.symmetric_rates) out.checks.push_back(check_below("mirror_symmetry_error", r.symmetry_error, 1e-9));
	out.summary["results"] = {{"theta_1", r.interval.theta_1},
	                          {"theta_2", r.interval.theta_2},
	                          {"left_sign_change", r.interval.left_sign_change},
	                          {"right_sign_change", r.interval.right_sign_change},
	                          {"min_second_difference", r.min_second_difference},
	                          {"symmetry_error", r.symmetry_error}};
	return out;
}

}

ExperimentOutput run_experiment(const ExperimentConfig& c)
{
	validate(c);
	ExperimentOutput out;
	switch (c.kind) {
	case ExperimentKind::Marginal: out = output_marginal(c); break;
	case ExperimentKind::Equilibrium: out = output_equilibrium(c); break;
	case ExperimentKind::Shock: out = output_shock(c); break;
	case ExperimentKind::Tracer: out = output_tracer(c); break;
	case ExperimentKind::VerifyStationary: out = output_verify_stationary(c); break;
	case ExperimentKind::VerifyTheorem: out = output_verify_theorem(c); break;
	case ExperimentKind::Convexity: out = output_convexity(c); break;
	}
	out.summary["inputs"] = c.to_json();
	out.summary["experiment"] = kind_name(c.kind);
	nlohmann::json files = nlohmann::json::array();
	for (const auto& f : out.files) files.push_back(f.first);
	out.summary["outputs"] = files;
	nlohmann::json checks = nlohmann::json::array();
	for (const auto& ch : out.checks) checks.push_back(ch.to_json());
	out.summary["checks"] = checks;
	out.summary["pass"] = out.pass();
	return out;
}

}
