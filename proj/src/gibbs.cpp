#include "bricklayers/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "bricklayers/io.hpp"

namespace bricklayers
{

namespace
{

constexpr int kEblSupportLimit = 100000;
constexpr int kBisectionCap = 200;

// log of the geometric tail sum w_edge * q / (1 - q); -inf when q == 0.
double log_geometric_tail(double log_w_edge, double log_q)
{
	if (log_q == -kInf) return -kInf;
	return log_w_edge + log_q - std::log1p(-std::exp(log_q));
}

// log r(n) with tables clamped to their last value; a lower bound for n
// beyond the domain because r is nondecreasing.
double log_rate_lower(const RateFunction& rf, int n)
{
	if (rf.is_ebl()) return rf.log_rate(n);
	return rf.log_rate(std::min(n, rf.domain_max()));
}

void check_theta(const RateFunction& rf, double theta)
{
	if (!std::isfinite(theta))
		throw std::domain_error("theta must be finite");
	const double limit = summable_theta_limit(rf);
	if (!(std::abs(theta) < limit))
		throw std::domain_error("theta=" + std::to_string(theta) + " outside (-theta_bar, theta_bar), limit " +
		                        std::to_string(limit));
}

}

double GibbsMarginal::log_pmf(int z) const
{
	if (in_support(z)) return log_weight[z - z_min] - log_Z;
	return theta * static_cast<double>(z) - log_rate_factorial(rf, std::abs(z)) - log_Z;
}

GibbsMarginal build_marginal(const RateFunction& rf, double theta, double tail_target)
{
	check_theta(rf, theta);
	if (!(tail_target > 0.0 && tail_target < 1.0))
		throw std::invalid_argument("tail_target must lie in (0, 1)");

	const int limit = rf.is_ebl() ? kEblSupportLimit : rf.domain_max();
	const double log_half_target = std::log(0.5 * tail_target);

	// Right side: lw(z) = lw(z-1) + theta - log r(z).
	std::vector<double> right{0.0};
	double peak = 0.0;
	double log_tail_right = kInf;
	for (int z = 0;; ++z) {
		peak = std::max(peak, right.back());
		const double log_q = theta - log_rate_lower(rf, z + 1);
		log_tail_right = log_q < 0.0 ? log_geometric_tail(right.back(), log_q) : kInf;
		if (log_tail_right - peak <= log_half_target && right.back() - peak <= log_half_target) break;
		if (z + 1 > limit) break;
		right.push_back(right.back() + theta - rf.log_rate(z + 1));
	}

	// Left side: lw(-n) = lw(-n+1) - theta - log r(n).
	std::vector<double> left{0.0};
	double log_tail_left = kInf;
	for (int n = 0;; ++n) {
		peak = std::max(peak, left.back());
		const double log_q = -theta - log_rate_lower(rf, n + 1);
		log_tail_left = log_q < 0.0 ? log_geometric_tail(left.back(), log_q) : kInf;
		if (log_tail_left - peak <= log_half_target && left.back() - peak <= log_half_target) break;
		if (n + 1 > limit) break;
		left.push_back(left.back() - theta - rf.log_rate(n + 1));
	}

	GibbsMarginal m;
	m.rf = rf;
	m.theta = theta;
	m.z_min = -static_cast<int>(left.size()) + 1;
	m.z_max = static_cast<int>(right.size()) - 1;
	const int n = m.z_max - m.z_min + 1;
	m.log_weight.resize(n);
	for (int k = 0; k < static_cast<int>(left.size()); ++k) m.log_weight[-k - m.z_min] = left[k];
	for (int k = 0; k < static_cast<int>(right.size()); ++k) m.log_weight[k - m.z_min] = right[k];

	m.log_Z = log_sum_exp(m.log_weight);
	m.tail_bound = std::exp(log_add_exp(log_tail_left, log_tail_right) - m.log_Z);
	if (!(m.tail_bound <= tail_target))
		throw std::domain_error("tail target " + std::to_string(tail_target) +
		                        " unachievable within the rate-function domain at theta=" + std::to_string(theta));

	m.pmf = (m.log_weight.array() - m.log_Z).exp().matrix();
	m.cdf.resize(n);
	CompensatedSum acc;
	for (int k = 0; k < n; ++k) {
		acc += m.pmf[k];
		m.cdf[k] = acc.value();
	}
	return m;
}

PartitionValue log_partition(const RateFunction& rf, double theta)
{
	const GibbsMarginal m = build_marginal(rf, theta);
	PartitionValue p;
	p.log_Z = m.log_Z;
	p.tail_bound = m.tail_bound;
	if (rf.is_ebl()) {
		p.quadratic = theta * theta / (2.0 * rf.beta());
		p.log_Z_tilde = m.log_Z - *p.quadratic;
	}
	return p;
}

double log_z_tilde(double beta, double m)
{
	if (!(beta > 0.0))
		throw std::invalid_argument("beta must be positive");
	const int centre = static_cast<int>(std::lround(m));
	std::vector<double> terms;
	// Stop once exp(-beta d^2 / 2) < 1e-40 relative to the central term.
	for (int d = 0;; ++d) {
		const double a = static_cast<double>(centre + d) - m;
		const double b = static_cast<double>(centre - d - 1) - m;
		const double ta = -0.5 * beta * a * a;
		const double tb = -0.5 * beta * b * b;
		terms.push_back(ta);
		terms.push_back(tb);
		if (ta < -92.0 && tb < -92.0) break;
	}
	return log_sum_exp(terms);
}

int sample(const GibbsMarginal& m, Rng& rng)
{
	const double u = rng.uniform() * m.cdf[m.size() - 1];
	const double* first = m.cdf.data();
	const double* last = first + m.size();
	const auto it = std::upper_bound(first, last, u);
	const int k = std::min(static_cast<int>(it - first), m.size() - 1);
	return m.z_min + k;
}

Moments moments(const GibbsMarginal& m)
{
	Moments out;
	CompensatedSum mean;
	for (int k = 0; k < m.size(); ++k) mean += static_cast<double>(m.z_min + k) * m.pmf[k];
	out.mean = mean.value();
	CompensatedSum v2, v3;
	for (int k = 0; k < m.size(); ++k) {
		const double d = static_cast<double>(m.z_min + k) - out.mean;
		v2 += d * d * m.pmf[k];
		v3 += d * d * d * m.pmf[k];
	}
	out.variance = v2.value();
	out.third_central = v3.value();
	const double reach = std::max(std::abs(m.z_min), std::abs(m.z_max)) + 2.0;
	out.tail_estimate = m.tail_bound * reach * reach * reach;
	return out;
}

double mean_u(const RateFunction& rf, double theta) { return moments(build_marginal(rf, theta)).mean; }
double variance(const RateFunction& rf, double theta) { return moments(build_marginal(rf, theta)).variance; }
double third_central(const RateFunction& rf, double theta) { return moments(build_marginal(rf, theta)).third_central; }

double expect_exp(const GibbsMarginal& m, const std::function<double(int)>& log_g)
{
	CompensatedSum s;
	for (int k = 0; k < m.size(); ++k) {
		const int z = m.z_min + k;
		s += std::exp(log_g(z) + m.log_weight[k] - m.log_Z);
	}
	return s.value();
}

double expect_rate(const GibbsMarginal& m, int sign, int shift)
{
	return expect_exp(m, [&](int z) { return m.rf.log_rate(sign * z + shift); });
}

ThetaInterval admissible_theta_box(const RateFunction& rf)
{
	const double b = std::min(summable_theta_limit(rf) - 0.5, 4.0);
	if (!(b > 0.0))
		throw std::domain_error("rate function admits no theta box (theta_bar <= 0.5)");
	return {-b, b};
}

double theta_of_u(const RateFunction& rf, double u, std::optional<ThetaInterval> bracket)
{
	const ThetaInterval box = bracket.value_or(admissible_theta_box(rf));
	double lo = box.lo, hi = box.hi;
	const double u_lo = mean_u(rf, lo);
	const double u_hi = mean_u(rf, hi);
	if (!(u >= u_lo && u <= u_hi))
		throw std::domain_error("u=" + std::to_string(u) + " outside attained range [" + std::to_string(u_lo) +
		                        ", " + std::to_string(u_hi) + "]");
	double mid = 0.5 * (lo + hi);
	for (int it = 0; it < kBisectionCap; ++it) {
		mid = 0.5 * (lo + hi);
		const double um = mean_u(rf, mid);
		if (std::abs(um - u) <= 1e-10) return mid;
		if (um < u)
			lo = mid;
		else
			hi = mid;
		if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(mid))) break;
	}
	return mid;
}

double flux_at_theta(const RateFunction& rf, double theta)
{
	const GibbsMarginal m = build_marginal(rf, theta);
	return expect_rate(m, +1, 0) + expect_rate(m, -1, 0);
}

FluxValue flux_J(const RateFunction& rf, double u)
{
	FluxValue f;
	f.theta = theta_of_u(rf, u);
	f.direct = flux_at_theta(rf, f.theta);
	f.closed_form = 2.0 * std::cosh(f.theta);
	return f;
}

double flux_convexity(const RateFunction& rf, double theta)
{
	const Moments mo = moments(build_marginal(rf, theta));
	const double up = mo.variance;
	return 2.0 * std::cosh(theta) / (up * up) - 2.0 * std::sinh(theta) * mo.third_central / (up * up * up);
}

ConvexityInterval convexity_interval(const RateFunction& rf, ThetaInterval scan, double grid_step)
{
	if (!(grid_step > 0.0))
		throw std::invalid_argument("grid_step must be positive");
	if (!(scan.lo <= 0.0 && scan.hi >= 0.0))
		throw std::invalid_argument("scan range must contain 0");
	ConvexityInterval ci;
	const double eps = 1e-9 * grid_step;
	for (int k = 1;; ++k) {
		const double t = k * grid_step;
		if (t > scan.hi + eps) break;
		if (!(flux_convexity(rf, t) > 0.0)) {
			ci.right_sign_change = true;
			break;
		}
		ci.theta_2 = t;
	}
	for (int k = 1;; ++k) {
		const double t = -k * grid_step;
		if (t < scan.lo - eps) break;
		if (!(flux_convexity(rf, t) > 0.0)) {
			ci.left_sign_change = true;
			break;
		}
		ci.theta_1 = t;
	}
	return ci;
}

double rh_speed(const RateFunction& rf, double theta_left, double theta_right)
{
	const GibbsMarginal ml = build_marginal(rf, theta_left);
	const GibbsMarginal mr = build_marginal(rf, theta_right);
	const double ul = moments(ml).mean;
	const double ur = moments(mr).mean;
	if (!(std::abs(ur - ul) > 1e-14))
		throw std::domain_error("Rankine-Hugoniot speed undefined for equal densities");
	const double jl = expect_rate(ml, +1, 0) + expect_rate(ml, -1, 0);
	const double jr = expect_rate(mr, +1, 0) + expect_rate(mr, -1, 0);
	return (jr - jl) / (ur - ul);
}

MomentMap build_moment_map(const RateFunction& rf, ThetaInterval range, double step)
{
	MomentMap mm;
	const int n = static_cast<int>(std::floor((range.hi - range.lo) / step + 1e-9)) + 1;
	for (int k = 0; k < n; ++k) {
		const double t = range.lo + k * step;
		const Moments mo = moments(build_marginal(rf, t));
		mm.theta.push_back(t);
		mm.u.push_back(mo.mean);
		mm.u_prime.push_back(mo.variance);
		mm.u_double_prime.push_back(mo.third_central);
	}
	return mm;
}

std::string export_marginal(const GibbsMarginal& m)
{
	nlohmann::json header;
	header["theta"] = m.theta;
	header["beta"] = m.rf.is_ebl() ? nlohmann::json(m.rf.beta()) : nlohmann::json(nullptr);
	header["log_Z"] = m.log_Z;
	header["tail_bound"] = m.tail_bound;
	std::ostringstream os;
	os << "# " << header.dump() << '\n' << "z,pmf\n";
	for (int k = 0; k < m.size(); ++k) os << (m.z_min + k) << ',' << format_double(m.pmf[k]) << '\n';
	return os.str();
}

}
