#ifndef BRICKLAYERS_GIBBS_HPP
#define BRICKLAYERS_GIBBS_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bricklayers/numeric.hpp"
#include "bricklayers/rates.hpp"

namespace bricklayers
{

inline constexpr double kDefaultTailTarget = 1e-15;

/// One-site canonical Gibbs measure mu^(theta)(z) ~ exp(theta z) / r(|z|)!,
/// truncated to [z_min, z_max] with a rigorous bound on the discarded mass.
/// The support also extends until the edge weights themselves are below the
/// target, so rate expectations E r(+-omega) lose at most e^(+-theta) times it.
///
/// The bound uses only monotonicity of r: beyond the support the weight
/// ratio w(z+1)/w(z) = e^theta / r(z+1) is dominated by its value at the
/// edge, so each tail is below a geometric series.
struct GibbsMarginal
{
	RateFunction rf;
	double theta = 0.0;
	int z_min = 0;
	int z_max = 0;
	Eigen::VectorXd log_weight; ///< theta z - log r(|z|)!, index z - z_min
	Eigen::VectorXd pmf;        ///< exp(log_weight - log_Z)
	Eigen::VectorXd cdf;        ///< running sums of pmf
	double log_Z = 0.0;         ///< log of the truncated normalizer
	double tail_bound = 0.0;    ///< upper bound on mass outside the support

	int size() const { return static_cast<int>(pmf.size()); }
	bool in_support(int z) const { return z >= z_min && z <= z_max; }

	/// pmf on the support, 0 outside.
	double pmf_at(int z) const { return in_support(z) ? pmf[z - z_min] : 0.0; }

	/// log mu(z) for any z the rate function can evaluate (not limited to the
	/// support); normalized by the truncated log_Z.
	double log_pmf(int z) const;
};

GibbsMarginal build_marginal(const RateFunction& rf, double theta, double tail_target = kDefaultTailTarget);

struct PartitionValue
{
	double log_Z = 0.0;
	double tail_bound = 0.0;
	/// EBL only: log Z(theta) = theta^2 / (2 beta) + log Z~(beta, theta / beta).
	std::optional<double> quadratic;
	std::optional<double> log_Z_tilde;
};

PartitionValue log_partition(const RateFunction& rf, double theta);

/// log Z~(beta, m) = log sum_z exp(-beta (z - m)^2 / 2), summed directly.
double log_z_tilde(double beta, double m);

/// Inverse-CDF draw from the truncated marginal.
int sample(const GibbsMarginal& m, Rng& rng);

struct Moments
{
	double mean = 0.0;
	double variance = 0.0;      ///< u'(theta)
	double third_central = 0.0; ///< u''(theta)
	double tail_estimate = 0.0; ///< rough bound on moment error from truncation
};

Moments moments(const GibbsMarginal& m);

double mean_u(const RateFunction& rf, double theta);
double variance(const RateFunction& rf, double theta);
double third_central(const RateFunction& rf, double theta);

/// E[exp(g(omega))] under the truncated marginal, with g given in log form.
/// Used for rate expectations that overflow when exponentiated alone.
double expect_exp(const GibbsMarginal& m, const std::function<double(int)>& log_g);

/// E[r(sign * omega + shift)].
double expect_rate(const GibbsMarginal& m, int sign, int shift);

struct ThetaInterval
{
	double lo = 0.0;
	double hi = 0.0;
};

/// Default scan box |theta| <= min(theta_bar - 0.5, 4).
ThetaInterval admissible_theta_box(const RateFunction& rf);

/// Bisection inverse of theta -> u(theta); |u(theta*) - u| <= 1e-10.
double theta_of_u(const RateFunction& rf, double u, std::optional<ThetaInterval> bracket = std::nullopt);

/// E(r(omega) + r(-omega)) under mu^(theta), by truncated summation.
double flux_at_theta(const RateFunction& rf, double theta);

struct FluxValue
{
	double theta = 0.0;
	double direct = 0.0;      ///< truncated expectation sum
	double closed_form = 0.0; ///< 2 cosh(theta)
};

FluxValue flux_J(const RateFunction& rf, double u);

/// d^2 J / du^2 at u = u(theta) from exact central moments:
/// 2 cosh(theta) / u'^2 - 2 sinh(theta) u'' / u'^3.
double flux_convexity(const RateFunction& rf, double theta);

struct ConvexityInterval
{
	double theta_1 = 0.0; ///< leftmost certified grid point (<= 0)
	double theta_2 = 0.0; ///< rightmost certified grid point (>= 0)
	bool left_sign_change = false;  ///< scan stopped at a non-positive value
	bool right_sign_change = false;
};

ConvexityInterval convexity_interval(const RateFunction& rf, ThetaInterval scan, double grid_step);

/// Rankine-Hugoniot speed (J(u_r) - J(u_l)) / (u_r - u_l), u = u(theta).
double rh_speed(const RateFunction& rf, double theta_left, double theta_right);

/// u, u', u'' tabulated on a theta grid.
struct MomentMap
{
	std::vector<double> theta;
	std::vector<double> u;
	std::vector<double> u_prime;
	std::vector<double> u_double_prime;
};

MomentMap build_moment_map(const RateFunction& rf, ThetaInterval range, double step);

/// Header line `# {json}` with theta, beta, log_Z, tail_bound, then `z,pmf` rows.
std::string export_marginal(const GibbsMarginal& m);

}

#endif
