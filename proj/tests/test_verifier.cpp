#include "doctest.h"

#include <cmath>
#include <vector>

#include "bricklayers/gibbs.hpp"
#include "bricklayers/verifier.hpp"

using namespace bricklayers;

namespace
{

// Test-side E[L phi] by enumeration of the sites [lo, hi] around phi's
// window, written from the generator's move list.
double direct_generator_expectation(bool tracer, const RateFunction& rf, const ThetaProfile& profile,
                                    const CylinderFunction& phi, int M)
{
	const int lo = tracer ? std::min(phi.first() - 1, -1) : phi.first() - 1;
	const int hi = tracer ? std::max(phi.last() + 1, 1) : phi.last() + 1;
	const int n = hi - lo + 1;
	std::vector<GibbsMarginal> marg;
	for (int i = lo; i <= hi; ++i) marg.push_back(build_marginal(rf, profile.at(i)));
	auto r = [&](int z) { return std::exp(rf.log_rate(z)); };

	std::vector<int> w(static_cast<std::size_t>(n), -M);
	auto at = [&](const std::vector<int>& v, int site) { return v[static_cast<std::size_t>(site - lo)]; };
	auto read = [&](const std::vector<int>& v, int shift) {
		std::vector<int> win;
		for (int i = phi.first(); i <= phi.last(); ++i) win.push_back(at(v, i - shift));
		return phi(win);
	};
	auto moved = [&](std::vector<int> v, int bond) {
		v[static_cast<std::size_t>(bond - lo)] -= 1;
		v[static_cast<std::size_t>(bond + 1 - lo)] += 1;
		return v;
	};

	double total = 0.0;
	for (;;) {
		double p = 1.0;
		for (int i = lo; i <= hi; ++i) p *= std::exp(marg[static_cast<std::size_t>(i - lo)].log_pmf(at(w, i)));
		const double base = read(w, 0);
		double gen = 0.0;
		for (int b = phi.first() - 1; b <= phi.last(); ++b) {
			double rate = r(at(w, b)) + r(-at(w, b + 1));
			if (tracer && b == -1) rate = r(at(w, -1)) + r(-at(w, 0) - 1);
			gen += rate * (read(moved(w, b), 0) - base);
		}
		if (tracer) {
			const int w0 = at(w, 0);
			gen += (r(-w0) - r(-w0 - 1)) * (read(moved(w, -1), 1) - base);
			gen += (r(w0 + 1) - r(w0)) * (read(w, -1) - base);
		}
		total += p * gen;
		int s = n - 1;
		while (s >= 0 && w[static_cast<std::size_t>(s)] == M) w[static_cast<std::size_t>(s--)] = -M;
		if (s < 0) break;
		++w[static_cast<std::size_t>(s)];
	}
	return total;
}

RateFunction perturbed_table()
{
	std::vector<double> a;
	for (int k = 1; k <= 40; ++k) a.push_back(std::exp(k - 0.5));
	a[1] *= 1.1;
	return make_tabulated(a);
}

// Log table on [-40, 41] with log r(2) bumped and its partner r(-1) left alone.
RateFunction corrupted_table()
{
	std::vector<double> logs;
	for (int z = -40; z <= 41; ++z) logs.push_back(z - 0.5 + (z == 2 ? 0.3 : 0.0));
	return RateFunction::unchecked_from_log_table(-40, logs);
}

}

TEST_CASE("cylinder function indexing")
{
	const CylinderFunction ind = CylinderFunction::indicator(-1, {1, 0}, 2);
	CHECK(ind.width() == 2);
	CHECK(ind({1, 0}) == 1.0);
	CHECK(ind({0, 1}) == 0.0);
	CHECK(ind({5, 0}) == 0.0);
	CHECK(ind.index({-2, -2}) == std::size_t{0});
	CHECK(ind.index({-2, -1}) == std::size_t{1});
	CHECK(ind.index({-1, -2}) == std::size_t{5});
	CHECK_FALSE(ind.index({3, 0}));
	CHECK(ind.deviation_bound() == 1.0);

	const CylinderFunction c = CylinderFunction::constant(0, 1, 2, 3.5);
	CHECK(c({0, 0}) == 3.5);
	CHECK(c({9, 9}) == 3.5);
	CHECK(c.deviation_bound() == 0.0);
	CHECK_THROWS(CylinderFunction(0, 1, 1, std::vector<double>(4, 0.0)));

	CHECK(default_basis().size() == 7 + 49 + 49 + 343);
}

TEST_CASE("verdicts")
{
	CHECK(classify(1.1e-9, 1e-10, 0.0) == Verdict::NonZero);
	CHECK(classify(9e-10, 1e-10, 0.0) == Verdict::ConsistentWithZero);
	CHECK(classify(-1.1e-9, 0.0, 1e-10) == Verdict::NonZero);
	CHECK(verdict_name(Verdict::NonZero) != verdict_name(Verdict::ConsistentWithZero));
}

TEST_CASE("constant functions have zero residual")
{
	const RateFunction rf = make_ebl(1.0);
	const CylinderFunction c = CylinderFunction::constant(-1, 1, 3, 2.0);
	CHECK(translation_invariant_residual(rf, 0.4, c, 6).residual == 0.0);
	CHECK(tracer_residual(rf, {0.5, 0.5}, c, 6).residual == 0.0);
}

TEST_CASE("brute force matches the test-side generator sum")
{
	Rng rng(9);
	const RateFunction rf = make_ebl(1.0);
	for (const auto& [first, last] : std::vector<std::pair<int, int>>{{0, 0}, {-1, 0}, {0, 1}, {-1, 1}, {2, 3}, {-3, -2}}) {
		const CylinderFunction phi = CylinderFunction::random_table(first, last, 2, rng);
		for (const ThetaProfile& prof : {ThetaProfile{1.0, 0.0}, ThetaProfile{0.5, 0.5}, ThetaProfile{0.2, -0.7}}) {
			const double oracle = direct_generator_expectation(true, rf, prof, phi, 5);
			CHECK(std::abs(tracer_residual(rf, prof, phi, 5).residual - oracle) <= 1e-12);
		}
		const double oracle = direct_generator_expectation(false, rf, ThetaProfile::uniform(0.3), phi, 5);
		CHECK(std::abs(translation_invariant_residual(rf, 0.3, phi, 5).residual - oracle) <= 1e-12);
	}
}

TEST_CASE("factorized and brute-force evaluators agree")
{
	for (const RateFunction& rf : {make_ebl(1.0), perturbed_table()}) {
		for (const ThetaProfile& prof : {ThetaProfile{1.0, 0.0}, ThetaProfile{0.3, 0.3}, ThetaProfile{-0.4, 0.9}}) {
			for (GeneratorKind kind : {GeneratorKind::TranslationInvariant, GeneratorKind::TracerFrame}) {
				const ThetaProfile p = kind == GeneratorKind::TracerFrame ? prof : ThetaProfile::uniform(prof.theta_right);
				const auto brute = brute_force_indicator_residuals(kind, rf, p, -1, 1, 3, 9);
				const auto fact = factorized_indicator_residuals(kind, rf, p, -1, 1, 3);
				REQUIRE(brute.residual.size() == fact.residual.size());
				for (std::size_t k = 0; k < brute.residual.size(); ++k)
					CHECK(std::abs(brute.residual[k] - fact.residual[k]) <= 1e-9 + 10 * brute.tail_per_unit);
			}
		}
	}
}

TEST_CASE("product measures are stationary for the bulk generator")
{
	const RateFunction rf = make_ebl(1.0);
	const CylinderFunction phi = CylinderFunction::indicator(0, {0}, 3);
	const ResidualReport m10 = translation_invariant_residual(rf, 0.3, phi, 10);
	const ResidualReport m14 = translation_invariant_residual(rf, 0.3, phi, 14);
	CHECK(std::abs(m10.residual) < 1e-10);
	CHECK(std::abs(m14.residual) < 1e-10);
	CHECK(m10.verdict == Verdict::ConsistentWithZero);

	for (const RateFunction& r : {make_ebl(0.5), make_ebl(2.0), perturbed_table()})
		for (double theta : {-1.0, 0.0, 0.7}) {
			const BasisReport rep =
			    evaluate_basis(GeneratorKind::TranslationInvariant, r, ThetaProfile::uniform(theta), default_basis(),
			                   Evaluator::Factorized);
			CHECK(rep.verdict == Verdict::ConsistentWithZero);
			CHECK(rep.max_residual < 1e-10);
		}
}

TEST_CASE("inconsistent rates break stationarity")
{
	const RateFunction bad = corrupted_table();
	const BasisReport rep = evaluate_basis(GeneratorKind::TranslationInvariant, bad, ThetaProfile::uniform(0.0),
	                                       default_basis(), Evaluator::BruteForce, 8);
	CHECK(rep.max_residual > 1e-3);
	CHECK(rep.verdict == Verdict::NonZero);
}

TEST_CASE("two-sided measure is stationary only at the ebl offset")
{
	const RateFunction rf = make_ebl(1.0);
	const CylinderFunction phi = CylinderFunction::indicator(-1, {1, 0}, 3);
	const ResidualReport good = tracer_residual(rf, {1.0, 0.0}, phi, 12);
	CHECK(std::abs(good.residual) < 1e-8);
	CHECK(good.verdict == Verdict::ConsistentWithZero);
	const ResidualReport diag = tracer_residual(rf, {0.5, 0.5}, phi, 12);
	CHECK(std::abs(diag.residual) > 1e-3);
	CHECK(diag.verdict == Verdict::NonZero);

	const BasisReport basis = evaluate_basis(GeneratorKind::TracerFrame, rf, {1.0, 0.0}, default_basis(), Evaluator::Factorized);
	CHECK(basis.max_residual < 1e-8);
	CHECK(basis.verdict == Verdict::ConsistentWithZero);
}

TEST_CASE("residuals shrink with the truncation")
{
	const RateFunction rf = make_ebl(1.0);
	const CylinderFunction phi = CylinderFunction::indicator(-1, {1, 0}, 3);
	for (int M = 4; M <= 8; ++M) {
		const ResidualReport a = tracer_residual(rf, {1.0, 0.0}, phi, M);
		const ResidualReport b = tracer_residual(rf, {1.0, 0.0}, phi, M + 4);
		CHECK(std::abs(a.residual) <= a.tail_bound + a.rounding_bound);
		CHECK(std::abs(b.residual) <= b.tail_bound + b.rounding_bound);
		CHECK(a.verdict == Verdict::ConsistentWithZero);
		if (std::abs(b.residual) > 10.0 * b.rounding_bound) {
			const double shrink = std::abs(b.residual / a.residual);
			const double tail_ratio = b.tail_bound / a.tail_bound;
			CHECK(shrink <= 2.0 * tail_ratio);
		}
	}
}

TEST_CASE("abcd decomposition")
{
	for (double beta : {0.5, 1.0, 2.0}) {
		const double tr = -0.3;
		const AbcdContext ctx = make_abcd_context(make_ebl(beta), {tr + beta, tr});
		CHECK(ctx.z_ratio() == doctest::Approx(std::exp(beta / 2.0 + tr)).epsilon(1e-12));
	}

	const double beta = 1.0;
	const RateFunction rf = make_ebl(beta);
	const AbcdContext uni = make_abcd_context(rf, ThetaProfile::uniform(0.4));
	Rng rng(71);
	for (int k = 0; k < 50; ++k) {
		std::vector<int> w(4);
		for (int& x : w) x = static_cast<int>(rng.uniform() * 9.0) - 4;
		const AbcdTerms t = abcd_terms(uni, -2, w);
		const int wm1 = w[1], w0 = w[2];
		CHECK(t.C == doctest::Approx((1.0 - std::exp(-beta)) * std::exp(-w0 - 0.5)).epsilon(1e-12));
		CHECK(t.D == doctest::Approx((std::exp(beta) - 1.0) * std::exp(wm1 - 0.5)).epsilon(1e-12));
	}
	CHECK_THROWS(abcd_terms(uni, 0, {0, 0, 0}));

	for (const auto& [prof, count] : std::vector<std::pair<ThetaProfile, int>>{
	         {{1.0, 0.0}, 5}, {{0.5, 0.5}, 2}, {{0.8, -0.6}, 2}}) {
		for (int k = 0; k < count; ++k) {
			const CylinderFunction phi = CylinderFunction::random_table(-1, 1, 2, rng);
			const double direct = tracer_residual(rf, prof, phi, 9).residual;
			const double via = abcd_expectation(rf, prof, phi, 9).residual;
			CHECK(std::abs(direct - via) <= 1e-9);
		}
	}
}

TEST_CASE("speed identity defect vanishes")
{
	for (const RateFunction& rf : {make_ebl(1.0), perturbed_table()})
		for (const ThetaProfile& prof : {ThetaProfile{1.0, 0.0}, ThetaProfile{0.4, 0.4}, ThetaProfile{-0.2, 0.9}})
			for (int a : {-2, -4})
				for (int b : {2, 5}) CHECK(std::abs(speed_identity_defect(rf, prof, a, b)) <= 1e-12);
	CHECK_THROWS(speed_identity_defect(make_ebl(1.0), {1.0, 0.0}, -1, 2));
}

TEST_CASE("theorem scans")
{
	const RateFunction rf = make_ebl(1.0);
	const std::vector<CylinderFunction> basis = default_basis();
	const ScanReport scan = theorem_scan(rf, {0.5, 1.0, 1.5}, {-0.5, 0.0, 0.5}, basis);
	CHECK(scan.points.size() == 9);
	CHECK(scan.consistent_count == 3);
	for (const ScanPoint& p : scan.points)
		CHECK((p.verdict == Verdict::ConsistentWithZero) == (std::abs(p.theta_left - p.theta_right - 1.0) < 1e-12));
	CHECK(scan.min_residual < 1e-8);
	CHECK(scan.argmin_left - scan.argmin_right == doctest::Approx(1.0));

	const ScanReport diag = diagonal_scan(rf, theta_grid(-2.0, 2.0, 9), basis);
	CHECK_FALSE(diag.any_consistent());
	CHECK(diag.min_residual > 1e-3);

	const ScanReport offsets = offset_scan(rf, 0.0, theta_grid(0.5, 1.5, 21), basis);
	CHECK(offsets.argmin_left - offsets.argmin_right == doctest::Approx(1.0).epsilon(1e-9));
	CHECK(offsets.consistent_count == 1);

	const ScanReport tab = theorem_scan(perturbed_table(), theta_grid(-2.0, 2.0, 9), theta_grid(-2.0, 2.0, 9), basis);
	CHECK_FALSE(tab.any_consistent());
	CHECK(tab.min_residual > 1e-3);

	const std::string csv = scan.csv({{"beta", 1.0}});
	CHECK(csv.find("theta_l,theta_r,residual") != std::string::npos);
	CHECK(scan.summary().at("consistent_count").get<int>() == 3);
}

TEST_CASE("theta grid")
{
	const auto g = theta_grid(-2.0, 2.0, 41);
	CHECK(g.size() == 41);
	CHECK(g.front() == -2.0);
	CHECK(g.back() == 2.0);
	CHECK(g[20] == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
}
