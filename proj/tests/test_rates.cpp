#include "doctest.h"

#include <cmath>
#include <vector>

#include "bricklayers/rates.hpp"

using namespace bricklayers;

namespace
{

// Independent closed form r(z) = exp(-beta/2) exp(beta z).
double ebl_rate(double beta, int z) { return std::exp(-beta / 2.0) * std::exp(beta * z); }

std::vector<double> perturbed_ebl(double beta, int M, int n, double factor)
{
	std::vector<double> a;
	for (int k = 1; k <= M; ++k) a.push_back(ebl_rate(beta, k));
	a[static_cast<std::size_t>(n - 1)] *= factor;
	return a;
}

}

TEST_CASE("ebl rates match the closed form and are consistent")
{
	for (double beta : {0.5, 1.0, 2.0}) {
		const RateFunction rf = make_ebl(beta);
		CHECK(rf.is_ebl());
		for (int z = -30; z <= 30; ++z) {
			CHECK(rf.rate(z) == doctest::Approx(ebl_rate(beta, z)).epsilon(1e-13));
			CHECK(std::abs(rf.log_rate(z) + rf.log_rate(1 - z)) <= 1e-12);
			CHECK(rf.log_rate(z + 1) >= rf.log_rate(z));
		}
	}
}

TEST_CASE("ebl beta = 1 spot values")
{
	const RateFunction rf = make_ebl(1.0);
	CHECK(rf.rate(0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
	CHECK(rf.rate(1) == doctest::Approx(std::exp(0.5)).epsilon(1e-15));
	CHECK(rf.rate(0) * rf.rate(1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("rate factorial: ebl closed form against a running product")
{
	for (double beta : {0.5, 1.0, 2.0}) {
		const RateFunction rf = make_ebl(beta);
		double running = 0.0;
		for (int n = 0; n <= 40; ++n) {
			if (n > 0) running += std::log(ebl_rate(beta, n));
			CHECK(log_rate_factorial(rf, n) == doctest::Approx(running).epsilon(1e-10));
			CHECK(log_rate_factorial(rf, n) == doctest::Approx(beta * n * n / 2.0).epsilon(1e-12));
		}
	}
}

TEST_CASE("tabulated rates: derived negative side and domain")
{
	const std::vector<double> a{1.5, 2.0, 4.0, 4.0, 9.0};
	const RateFunction rf = make_tabulated(a);
	CHECK_FALSE(rf.is_ebl());
	CHECK(rf.domain_min() == -4);
	CHECK(rf.domain_max() == 5);
	for (int n = 1; n <= 5; ++n) CHECK(rf.rate(n) == doctest::Approx(a[static_cast<std::size_t>(n - 1)]));
	CHECK(rf.rate(0) == doctest::Approx(1.0 / 1.5));
	for (int n = 1; n <= 4; ++n) CHECK(rf.rate(-n) == doctest::Approx(1.0 / a[static_cast<std::size_t>(n)]));
	CHECK_THROWS_AS(rf.rate(6), std::out_of_range);
	CHECK_THROWS_AS(rf.rate(-5), std::out_of_range);

	double running = 0.0;
	for (int n = 1; n <= 5; ++n) {
		running += std::log(a[static_cast<std::size_t>(n - 1)]);
		CHECK(log_rate_factorial(rf, n) == doctest::Approx(running).epsilon(1e-12));
	}
}

TEST_CASE("tabulated perturbations stay consistent and monotone")
{
	for (const auto& [n, factor] : std::vector<std::pair<int, double>>{{2, 1.1}, {3, 0.95}, {5, 1.3}}) {
		const RateFunction rf = make_tabulated(perturbed_ebl(1.0, 20, n, factor));
		for (int z = rf.domain_min(); z <= rf.domain_max(); ++z) {
			if (rf.in_domain(1 - z)) CHECK(std::abs(rf.log_rate(z) + rf.log_rate(1 - z)) <= 1e-12);
			if (z < rf.domain_max()) CHECK(rf.log_rate(z + 1) >= rf.log_rate(z));
		}
	}
}

TEST_CASE("tabulated from ebl log values reproduces ebl exactly")
{
	const auto logs = ebl_log_values(1.0, 30);
	const RateFunction tab = make_tabulated_log(logs);
	const RateFunction ebl = make_ebl(1.0);
	for (int z = tab.domain_min(); z <= tab.domain_max(); ++z) CHECK(tab.log_rate(z) == ebl.log_rate(z));
}

TEST_CASE("invalid tables are rejected")
{
	CHECK_THROWS_AS(make_tabulated(std::vector<double>{0.9, 2.0}), std::invalid_argument);
	CHECK_THROWS_AS(make_tabulated(std::vector<double>{2.0, 1.5}), std::invalid_argument);
	CHECK_THROWS_AS(make_tabulated(std::vector<double>{}), std::invalid_argument);
	CHECK_THROWS_AS(make_tabulated(std::vector<double>{1.0, -1.0}), std::invalid_argument);
	CHECK_THROWS_AS(make_ebl(0.0), std::invalid_argument);
	CHECK_THROWS_AS(make_ebl(-1.0), std::invalid_argument);
}

TEST_CASE("a_1 = 1 gives r(0) = r(1) = 1")
{
	const RateFunction rf = make_tabulated(std::vector<double>{1.0, 2.0, 3.0});
	CHECK(rf.rate(0) == doctest::Approx(1.0));
	CHECK(rf.rate(1) == doctest::Approx(1.0));
}

TEST_CASE("overflowing rates throw instead of returning inf")
{
	const RateFunction rf = make_ebl(2.0);
	CHECK_THROWS_AS(rf.rate(400), std::overflow_error);
	CHECK(std::isfinite(rf.log_rate(400)));
}

TEST_CASE("theta bar")
{
	CHECK(std::isinf(theta_bar(make_ebl(1.0)).value));
	CHECK(std::isinf(summable_theta_limit(make_ebl(1.0))));

	const RateFunction growing = make_tabulated(perturbed_ebl(1.0, 20, 2, 1.1));
	const ThetaBar g = theta_bar(growing);
	CHECK(g.lower_bound);
	CHECK(g.diverging);
	CHECK(g.value == doctest::Approx(19.5));

	std::vector<double> saturating;
	for (int n = 1; n <= 30; ++n) saturating.push_back(3.0 - 2.0 * std::pow(0.5, n - 1));
	const ThetaBar s = theta_bar(make_tabulated(saturating));
	CHECK_FALSE(s.diverging);
	CHECK(s.value == doctest::Approx(std::log(3.0)).epsilon(1e-6));
}

TEST_CASE("json round trip and field-named errors")
{
	const RateFunction ebl = make_ebl(1.5, 40);
	const RateFunction back = rate_function_from_json(to_json(ebl));
	CHECK(back.is_ebl());
	CHECK(back.beta() == 1.5);
	CHECK(back.domain_max() == ebl.domain_max());

	const RateFunction tab = make_tabulated(std::vector<double>{1.2, 2.5, 2.5, 7.0});
	const RateFunction tback = rate_function_from_json(to_json(tab));
	for (int z = tab.domain_min(); z <= tab.domain_max(); ++z) CHECK(tback.log_rate(z) == tab.log_rate(z));

	auto message = [](const nlohmann::json& doc) {
		try {
			rate_function_from_json(doc);
		} catch (const std::invalid_argument& e) {
			return std::string(e.what());
		}
		return std::string();
	};
	CHECK(message(nlohmann::json::object()).find("rate.kind") != std::string::npos);
	CHECK(message({{"kind", "ebl"}}).find("rate.beta") != std::string::npos);
	CHECK(message({{"kind", "tabulated"}}).find("rate.table") != std::string::npos);
	CHECK(message({{"kind", "nope"}}).find("rate.kind") != std::string::npos);
	CHECK(message({{"kind", "tabulated"}, {"table", {{0, 0.1}, {2, 0.3}}}}).find("contiguous") != std::string::npos);
}

TEST_CASE("unchecked tables bypass validation")
{
	const RateFunction broken = RateFunction::unchecked_from_log_table(-2, {-1.0, -0.2, -0.4, 0.5, 1.5});
	CHECK(broken.log_rate(0) == -0.4);
	CHECK(std::abs(broken.log_rate(0) + broken.log_rate(1)) > 1e-3);
}
