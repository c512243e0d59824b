#ifndef BRICKLAYERS_VERIFIER_HPP
#define BRICKLAYERS_VERIFIER_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bricklayers/gibbs.hpp"
#include "bricklayers/numeric.hpp"
#include "bricklayers/rates.hpp"

namespace bricklayers
{

/// Bounded function of the slopes on sites [first, last].
///
/// Values are tabulated for every assignment in [-range, range]^width; any
/// assignment with a coordinate outside that box maps to outside_value.
class CylinderFunction
{
public:
	CylinderFunction(int first, int last, int range, std::vector<double> table, double outside_value = 0.0);

	static CylinderFunction indicator(int first, const std::vector<int>& pattern, int range);
	static CylinderFunction constant(int first, int last, int range, double value);
	static CylinderFunction random_table(int first, int last, int range, Rng& rng, double scale = 1.0);

	int first() const { return first_; }
	int last() const { return last_; }
	int width() const { return last_ - first_ + 1; }
	int range() const { return range_; }
	double outside_value() const { return outside_; }
	const std::vector<double>& table() const { return table_; }

	/// Flat table index of an assignment (omega_first, ..., omega_last), or
	/// nullopt if some coordinate is outside [-range, range].
	std::optional<std::size_t> index(const std::vector<int>& values) const;

	double operator()(const std::vector<int>& values) const;

	/// max |phi - outside_value|.
	double deviation_bound() const;

	std::string describe() const;

private:
	int first_, last_, range_;
	std::vector<double> table_;
	double outside_;
};

/// theta_i = theta_left for i <= -1 and theta_right for i >= 0.
struct ThetaProfile
{
	double theta_left = 0.0;
	double theta_right = 0.0;

	static ThetaProfile uniform(double theta) { return {theta, theta}; }
	double at(int site) const { return site < 0 ? theta_left : theta_right; }
};

enum class Verdict
{
	ConsistentWithZero,
	NonZero,
};

std::string verdict_name(Verdict v);

/// NonZero iff |residual| exceeds ten times the combined truncation and
/// rounding bound.
Verdict classify(double residual, double tail_bound, double rounding_bound);

struct ResidualReport
{
	double residual = 0.0;
	double tail_bound = 0.0;
	double rounding_bound = 0.0;
	std::string basis;
	Verdict verdict = Verdict::ConsistentWithZero;

	nlohmann::json to_json() const;
};

enum class GeneratorKind
{
	TranslationInvariant, ///< bulk generator, no tracer
	TracerFrame,          ///< generator seen from the tracer
};

/// E[L 1{omega_window = q}] for every pattern q in [-range, range]^width.
struct IndicatorResiduals
{
	int first = 0, last = 0, range = 0;
	std::vector<double> residual;
	std::vector<double> abs_sum;  ///< sum of |terms| entering each residual
	double tail_per_unit = 0.0;   ///< truncation bound for a function with |phi| <= 1

	ResidualReport report(const CylinderFunction& phi) const;
};

/// Exact summation over every assignment in [-M, M] of the sites the
/// generator touches, weighted by the exact one-site marginals.
IndicatorResiduals brute_force_indicator_residuals(GeneratorKind kind, const RateFunction& rf,
                                                   const ThetaProfile& profile, int first, int last, int range,
                                                   int truncation);

/// Same quantity without enumeration: every rate is a sum of one-site
/// functions and the measure is a product, so each term factorizes.
IndicatorResiduals factorized_indicator_residuals(GeneratorKind kind, const RateFunction& rf,
                                                  const ThetaProfile& profile, int first, int last, int range);

/// Number of assignments brute force would enumerate.
std::uint64_t brute_force_state_count(GeneratorKind kind, int first, int last, int truncation);
inline constexpr std::uint64_t kBruteForceBudget = 60'000'000;

ResidualReport translation_invariant_residual(const RateFunction& rf, double theta, const CylinderFunction& phi,
                                              int truncation);
ResidualReport tracer_residual(const RateFunction& rf, const ThetaProfile& profile, const CylinderFunction& phi,
                               int truncation);

/// Indicators of every pattern in [-3, 3] on the windows {0}, {-1,0}, {0,1}
/// and {-1,0,1}.
std::vector<CylinderFunction> default_basis();

enum class Evaluator
{
	BruteForce,
	Factorized,
};

struct BasisReport
{
	std::vector<ResidualReport> entries; ///< parallel to the basis
	double max_residual = 0.0;
	std::size_t argmax = 0;
	Verdict verdict = Verdict::ConsistentWithZero; ///< NonZero if any entry is
	double max_tail_bound = 0.0;
	double max_rounding_bound = 0.0;
};

/// Residuals of every basis function, grouped by window so each window is
/// summed once. truncation is ignored by the factorized evaluator.
BasisReport evaluate_basis(GeneratorKind kind, const RateFunction& rf, const ThetaProfile& profile,
                           const std::vector<CylinderFunction>& basis, Evaluator evaluator, int truncation = 0);

/// Integrand of the tracer stationarity condition after the change of
/// variables: E[L phi] = E[phi (A + B + C + D)].
struct AbcdTerms
{
	double A = 0.0, B = 0.0, C = 0.0, D = 0.0;
	double sum() const { return A + B + C + D; }
};

struct AbcdContext
{
	RateFunction rf;
	ThetaProfile profile;
	double log_z_left = 0.0;
	double log_z_right = 0.0;

	/// Z(theta_left) / Z(theta_right).
	double z_ratio() const;
};

AbcdContext make_abcd_context(const RateFunction& rf, const ThetaProfile& profile);

/// Terms for the assignment omega on sites first, first+1, ...; the
/// assignment must cover [-1, 1]. A runs over every bond inside it except -1.
AbcdTerms abcd_terms(const AbcdContext& ctx, int first, const std::vector<int>& omega);

/// E[phi (A+B+C+D)] by exact summation over the tracer box of phi.
ResidualReport abcd_expectation(const RateFunction& rf, const ThetaProfile& profile, const CylinderFunction& phi,
                                int truncation);

/// Defect H(a, b) of the finite-window speed identity for phi = sum of the
/// slopes on [a, b]: E[L phi] minus its four-term decomposition, both by exact
/// one-dimensional sums. Requires a < -1 and b > 1.
double speed_identity_defect(const RateFunction& rf, const ThetaProfile& profile, int a, int b);

struct ScanPoint
{
	double theta_left = 0.0;
	double theta_right = 0.0;
	double max_residual = 0.0;
	Verdict verdict = Verdict::NonZero;
};

struct ScanReport
{
	std::vector<ScanPoint> points;
	double min_residual = kInf;
	double argmin_left = 0.0;
	double argmin_right = 0.0;
	std::size_t consistent_count = 0;
	std::size_t basis_size = 0;

	bool any_consistent() const { return consistent_count > 0; }
	nlohmann::json summary() const;
	std::string csv(const nlohmann::json& header) const;
};

/// n evenly spaced points on [lo, hi] (endpoints included).
std::vector<double> theta_grid(double lo, double hi, int n);

/// Max-over-basis tracer residual at every (theta_left, theta_right) pair.
ScanReport theorem_scan(const RateFunction& rf, const std::vector<double>& left_grid,
                        const std::vector<double>& right_grid, const std::vector<CylinderFunction>& basis);

/// Pairs (theta, theta) only.
ScanReport diagonal_scan(const RateFunction& rf, const std::vector<double>& grid,
                         const std::vector<CylinderFunction>& basis);

/// Pairs (theta_right + c, theta_right) for each offset c.
ScanReport offset_scan(const RateFunction& rf, double theta_right, const std::vector<double>& offsets,
                       const std::vector<CylinderFunction>& basis);

}

#endif
