#ifndef BRICKLAYERS_RATES_HPP
#define BRICKLAYERS_RATES_HPP

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace bricklayers
{

enum class RateKind { Ebl, Tabulated };

/// Jump-rate map z -> r(z) of a bricklayers' model, stored as log r(z).
///
/// Every instance obtained from the public factories is positive,
/// nondecreasing and satisfies r(z) r(1 - z) = 1 on its domain (to 1e-12 in
/// log domain), so downstream code may use those identities without checks.
/// EBL rates are the closed form log r(z) = beta (z - 1/2) and are defined for
/// every z; tabulated rates live on [domain_min, domain_max] and refuse to
/// extrapolate.
class RateFunction
{
public:
	RateKind kind() const { return kind_; }
	bool is_ebl() const { return kind_ == RateKind::Ebl; }

	/// EBL parameter; NaN for tabulated rates.
	double beta() const { return beta_; }

	int domain_min() const { return z_first_; }
	int domain_max() const { return z_first_ + static_cast<int>(log_table_.size()) - 1; }
	bool in_domain(int z) const { return is_ebl() || (z >= domain_min() && z <= domain_max()); }

	/// Throws std::out_of_range outside the tabulated domain.
	double log_rate(int z) const;

	/// exp(log_rate(z)); throws std::overflow_error above exp(kMaxLogRate).
	double rate(int z) const;

	/// Builds a table without checking monotonicity or r(z) r(1-z) = 1.
	/// Diagnostic use only: lets tests confirm that broken rates are detected.
	static RateFunction unchecked_from_log_table(int z_first, std::vector<double> log_rates);

private:
	friend RateFunction make_ebl(double beta, int domain_bound);
	friend RateFunction make_tabulated_log(std::span<const double> log_a);
	friend RateFunction rate_function_from_json(const nlohmann::json& doc);

	void validate() const;

	RateKind kind_ = RateKind::Tabulated;
	double beta_ = 0.0;
	int z_first_ = 0;
	std::vector<double> log_table_;
};

/// Absolute log-domain tolerance for r(z) r(1 - z) = 1.
inline constexpr double kConsistencyTolerance = 1e-12;
inline constexpr int kDefaultDomainBound = 64;

/// Exponential bricklayers' rates r(z) = exp(-beta/2 + beta z).
/// The table over [-domain_bound, domain_bound] mirrors the closed form and
/// is what serialization and summation limits use.
RateFunction make_ebl(double beta, int domain_bound = kDefaultDomainBound);

/// General model from free values r(n) = a_n, n = 1..M, with a nondecreasing
/// and a_1 >= 1. Negative arguments follow from r(z) r(1 - z) = 1, so the
/// domain is [-M + 1, M].
RateFunction make_tabulated(std::span<const double> a);

/// Same as make_tabulated with log a_n supplied directly (no exp/log round trip).
RateFunction make_tabulated_log(std::span<const double> log_a);

/// log of r(n)! = prod_{y=1..n} r(y); n = 0 gives 0.
double log_rate_factorial(const RateFunction& rf, int n);

struct ThetaBar
{
	double value = 0.0;     ///< lim log r(n), or log r(domain_max) for tables
	bool lower_bound = false; ///< value is only a lower bound (finite table)
	bool diverging = false;   ///< tail increments suggest lim log r(n) = +inf
};

/// theta_bar = lim log r(n). EBL returns +inf. A finite table returns
/// log r(M) as a lower bound; it is flagged diverging when the last log-rate
/// increments are positive and not shrinking.
ThetaBar theta_bar(const RateFunction& rf);

/// Largest |theta| for which the one-site Gibbs weights are summable with a
/// rigorous geometric tail bound (theta_bar for EBL, log r(M) for tables).
double summable_theta_limit(const RateFunction& rf);

/// {"kind": "ebl", "beta": b, "domain_bound": M} or
/// {"kind": "tabulated", "table": [[z, log_rate], ...]}.
nlohmann::json to_json(const RateFunction& rf);
RateFunction rate_function_from_json(const nlohmann::json& doc);

/// EBL table a_n = exp(beta (n - 1/2)) in log form, n = 1..M.
std::vector<double> ebl_log_values(double beta, int M);

}

#endif
