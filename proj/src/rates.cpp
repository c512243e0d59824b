#include "bricklayers/rates.hpp"

#include <cmath>
#include <stdexcept>

#include "bricklayers/numeric.hpp"

namespace bricklayers
{

double RateFunction::log_rate(int z) const
{
	if (is_ebl())
		return beta_ * (static_cast<double>(z) - 0.5);
	if (z < domain_min() || z > domain_max())
		throw std::out_of_range("rate argument " + std::to_string(z) + " outside tabulated domain [" +
		                        std::to_string(domain_min()) + ", " + std::to_string(domain_max()) + "]");
	return log_table_[static_cast<std::size_t>(z - z_first_)];
}

double RateFunction::rate(int z) const
{
	const double lr = log_rate(z);
	if (lr > kMaxLogRate)
		throw std::overflow_error("rate r(" + std::to_string(z) + ") exceeds exp(700)");
	return std::exp(lr);
}

RateFunction RateFunction::unchecked_from_log_table(int z_first, std::vector<double> log_rates)
{
	RateFunction rf;
	rf.kind_ = RateKind::Tabulated;
	rf.beta_ = std::nan("");
	rf.z_first_ = z_first;
	rf.log_table_ = std::move(log_rates);
	return rf;
}

void RateFunction::validate() const
{
	if (log_table_.empty())
		throw std::invalid_argument("rate table is empty");
	for (std::size_t k = 0; k < log_table_.size(); ++k)
		if (!std::isfinite(log_table_[k]))
			throw std::invalid_argument("rate at z=" + std::to_string(z_first_ + static_cast<int>(k)) +
			                            " is not positive and finite");
	for (std::size_t k = 1; k < log_table_.size(); ++k)
		if (log_table_[k] < log_table_[k - 1])
			throw std::invalid_argument("rate is not monotone at z=" + std::to_string(z_first_ + static_cast<int>(k)));
	for (int z = domain_min(); z <= domain_max(); ++z) {
		const int mirror = 1 - z;
		if (mirror < domain_min() || mirror > domain_max()) continue;
		if (std::abs(log_rate(z) + log_rate(mirror)) > kConsistencyTolerance)
			throw std::invalid_argument("r(z) r(1-z) != 1 at z=" + std::to_string(z));
	}
}

RateFunction make_ebl(double beta, int domain_bound)
{
	if (!(beta > 0.0) || !std::isfinite(beta))
		throw std::invalid_argument("EBL beta must be positive and finite");
	if (domain_bound < 1)
		throw std::invalid_argument("domain bound must be positive");
	RateFunction rf;
	rf.kind_ = RateKind::Ebl;
	rf.beta_ = beta;
	rf.z_first_ = -domain_bound;
	rf.log_table_.resize(static_cast<std::size_t>(2 * domain_bound + 1));
	for (int z = -domain_bound; z <= domain_bound; ++z)
		rf.log_table_[static_cast<std::size_t>(z + domain_bound)] = beta * (static_cast<double>(z) - 0.5);
	return rf;
}

RateFunction make_tabulated_log(std::span<const double> log_a)
{
	const int M = static_cast<int>(log_a.size());
	if (M < 1)
		throw std::invalid_argument("rate table needs at least one value");
	for (int n = 0; n < M; ++n)
		if (!std::isfinite(log_a[n]))
			throw std::invalid_argument("a_" + std::to_string(n + 1) + " must be positive and finite");
	if (log_a[0] < 0.0)
		throw std::invalid_argument("a_1 < 1 breaks r(0) <= r(1)");
	for (int n = 1; n < M; ++n)
		if (log_a[n] < log_a[n - 1])
			throw std::invalid_argument("a is not nondecreasing at n=" + std::to_string(n + 1));

	// z in [-M+1, M]: r(n) = a_n for n >= 1, r(-n) = 1 / a_{n+1} for n >= 0.
	std::vector<double> table(static_cast<std::size_t>(2 * M));
	for (int z = -M + 1; z <= M; ++z) {
		const double v = z >= 1 ? log_a[z - 1] : -log_a[-z];
		table[static_cast<std::size_t>(z + M - 1)] = v;
	}
	RateFunction rf = RateFunction::unchecked_from_log_table(-M + 1, std::move(table));
	rf.validate();
	return rf;
}

RateFunction make_tabulated(std::span<const double> a)
{
	std::vector<double> log_a(a.size());
	for (std::size_t n = 0; n < a.size(); ++n) {
		if (!(a[n] > 0.0))
			throw std::invalid_argument("a_" + std::to_string(n + 1) + " must be positive");
		log_a[n] = std::log(a[n]);
	}
	return make_tabulated_log(log_a);
}

double log_rate_factorial(const RateFunction& rf, int n)
{
	if (n < 0)
		throw std::invalid_argument("r(n)! needs n >= 0");
	if (rf.is_ebl())
		return 0.5 * rf.beta() * static_cast<double>(n) * static_cast<double>(n);
	if (n > rf.domain_max())
		throw std::out_of_range("r(n)! requested beyond tabulated domain, n=" + std::to_string(n));
	CompensatedSum s;
	for (int y = 1; y <= n; ++y) s += rf.log_rate(y);
	return s.value();
}

ThetaBar theta_bar(const RateFunction& rf)
{
	if (rf.is_ebl())
		return {kInf, false, true};
	ThetaBar tb;
	const int top = rf.domain_max();
	tb.value = rf.log_rate(top);
	tb.lower_bound = true;
	const int lookback = std::min(4, top - rf.domain_min());
	bool diverging = lookback > 0;
	double prev = -kInf;
	for (int z = top - lookback + 1; z <= top; ++z) {
		const double d = rf.log_rate(z) - rf.log_rate(z - 1);
		if (!(d > 0.0) || d < prev - 1e-12) diverging = false;
		prev = d;
	}
	tb.diverging = diverging;
	return tb;
}

double summable_theta_limit(const RateFunction& rf)
{
	if (rf.is_ebl()) return kInf;
	return rf.log_rate(rf.domain_max());
}

nlohmann::json to_json(const RateFunction& rf)
{
	nlohmann::json doc;
	if (rf.is_ebl()) {
		doc["kind"] = "ebl";
		doc["beta"] = rf.beta();
		doc["domain_bound"] = rf.domain_max();
		return doc;
	}
	doc["kind"] = "tabulated";
	nlohmann::json table = nlohmann::json::array();
	for (int z = rf.domain_min(); z <= rf.domain_max(); ++z)
		table.push_back(nlohmann::json::array({z, rf.log_rate(z)}));
	doc["table"] = std::move(table);
	return doc;
}

RateFunction rate_function_from_json(const nlohmann::json& doc)
{
	if (!doc.is_object())
		throw std::invalid_argument("rate: expected an object");
	if (!doc.contains("kind") || !doc["kind"].is_string())
		throw std::invalid_argument("rate.kind: missing or not a string");
	const std::string kind = doc["kind"].get<std::string>();
	if (kind == "ebl") {
		if (!doc.contains("beta") || !doc["beta"].is_number())
			throw std::invalid_argument("rate.beta: missing or not a number");
		const int bound = doc.contains("domain_bound") ? doc["domain_bound"].get<int>() : kDefaultDomainBound;
		return make_ebl(doc["beta"].get<double>(), bound);
	}
	if (kind == "tabulated") {
		if (!doc.contains("table") || !doc["table"].is_array() || doc["table"].empty())
			throw std::invalid_argument("rate.table: missing or empty");
		const auto& table = doc["table"];
		RateFunction rf;
		rf.kind_ = RateKind::Tabulated;
		rf.beta_ = std::nan("");
		rf.z_first_ = table[0].at(0).get<int>();
		for (std::size_t k = 0; k < table.size(); ++k) {
			const auto& row = table[k];
			if (!row.is_array() || row.size() != 2)
				throw std::invalid_argument("rate.table[" + std::to_string(k) + "]: expected [z, log_rate]");
			if (row[0].get<int>() != rf.z_first_ + static_cast<int>(k))
				throw std::invalid_argument("rate.table[" + std::to_string(k) + "]: z values must be contiguous");
			rf.log_table_.push_back(row[1].get<double>());
		}
		rf.validate();
		return rf;
	}
	throw std::invalid_argument("rate.kind: unknown kind '" + kind + "'");
}

std::vector<double> ebl_log_values(double beta, int M)
{
	std::vector<double> v(static_cast<std::size_t>(M));
	for (int n = 1; n <= M; ++n) v[static_cast<std::size_t>(n - 1)] = beta * (static_cast<double>(n) - 0.5);
	return v;
}

}
