#include "doctest.h"

#include <cmath>
#include <numeric>
#include <vector>

#include "bricklayers/engine.hpp"
#include "bricklayers/gibbs.hpp"

using namespace bricklayers;

namespace
{

double ebl_rate(int z) { return std::exp(z - 0.5); }

}

TEST_CASE("sum tree selection agrees with a linear scan")
{
	Rng rng(3);
	for (std::size_t n : {1u, 2u, 3u, 7u, 64u, 100u}) {
		SumTree tree(n);
		std::vector<double> w(n);
		for (std::size_t i = 0; i < n; ++i) {
			w[i] = (i % 3 == 1) ? 0.0 : rng.uniform() * 5.0;
			tree.set(i, w[i]);
		}
		double total = 0.0;
		for (double x : w) total += x;
		CHECK(tree.total() == doctest::Approx(total).epsilon(1e-14));
		for (int k = 0; k < 2000; ++k) {
			if (k % 10 == 0) {
				const std::size_t j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
				w[j] = rng.uniform() < 0.2 ? 0.0 : rng.uniform() * 3.0;
				tree.set(j, w[j]);
			}
			if (!(tree.total() > 0.0)) continue;
			const double u = rng.uniform() * tree.total();
			const std::size_t a = tree.select(u);
			CHECK(a == tree.select_linear(u));
			CHECK(w[a] > 0.0);
		}
	}
}

TEST_CASE("categorical and holding-time contracts")
{
	SumTree tree(3);
	tree.set(0, 0.0);
	tree.set(1, 1.0);
	tree.set(2, 3.0);
	Rng rng(2024);
	const int n = 100000;
	int hits = 0;
	double hold = 0.0;
	for (int k = 0; k < n; ++k) {
		if (tree.select(rng.uniform() * tree.total()) == 2) ++hits;
		hold += rng.exponential(tree.total());
	}
	const double p = 0.75;
	CHECK(std::abs(double(hits) / n - p) <= 3.0 * std::sqrt(p * (1 - p) / n));
	CHECK(std::abs(hold / n - 0.25) <= 3.0 * 0.25 / std::sqrt(double(n)));
}

TEST_CASE("bond rates")
{
	const RateFunction rf = make_ebl(1.0);
	LatticeState s(rf, {0, 0, 2, -1, 3}, Ring{});
	CHECK(s.bond_rate(0) == doctest::Approx(2.0 * std::exp(-0.5)).epsilon(1e-14));
	CHECK(s.bond_rate(0) == doctest::Approx(1.213061).epsilon(1e-6));
	CHECK(s.bond_rate(4) == doctest::Approx(ebl_rate(3) + ebl_rate(0)).epsilon(1e-14));
	for (int i = 0; i < s.size(); ++i) CHECK(s.bond_rate(i) == doctest::Approx(s.compute_bond_rate(i)).epsilon(1e-15));

	for (int a = -4; a <= 4; ++a) {
		for (int b = -4; b <= 4; ++b) {
			LatticeState x(rf, {a, b}, GhostProduct{0.0, 0.0, 1});
			LatticeState y(rf, {-b, -a}, GhostProduct{0.0, 0.0, 1});
			CHECK(x.bond_rate(0) == doctest::Approx(y.bond_rate(0)).epsilon(1e-14));
			LatticeState up(rf, {a + 1, b}, GhostProduct{0.0, 0.0, 1});
			LatticeState down(rf, {a, b - 1}, GhostProduct{0.0, 0.0, 1});
			CHECK(up.bond_rate(0) >= x.bond_rate(0));
			CHECK(down.bond_rate(0) >= x.bond_rate(0));
		}
	}
}

TEST_CASE("ghost boundary uses the reservoir mean rates")
{
	const RateFunction rf = make_ebl(1.0);
	LatticeState s(rf, {1, 0, -2}, GhostProduct{0.7, -0.4, 1});
	CHECK(s.first_bond() == -1);
	CHECK(s.ghost_mean_rate_left() == doctest::Approx(std::exp(0.7)).epsilon(1e-12));
	CHECK(s.ghost_mean_rate_right() == doctest::Approx(std::exp(0.4)).epsilon(1e-12));
	CHECK(s.bond_rate(-1) == doctest::Approx(std::exp(0.7) + ebl_rate(-1)).epsilon(1e-12));
	CHECK(s.bond_rate(2) == doctest::Approx(ebl_rate(-2) + std::exp(0.4)).epsilon(1e-12));
	CHECK(s.apply_move(-1));
	CHECK(s.omega(0) == 2);
	CHECK(s.apply_move(2));
	CHECK(s.omega(2) == -3);
	CHECK(s.total_rate() == doctest::Approx(s.recomputed_total_rate()).epsilon(1e-12));
}

TEST_CASE("apply move and height field")
{
	const RateFunction rf = make_ebl(1.0);
	LatticeState s(rf, {0, 2, -1, 0, 0}, Ring{});
	CHECK(height_field(LatticeState(rf, {0, 0, 0, 0}, Ring{})).h == std::vector<long long>{0, 0, 0, 0});
	CHECK(height_field(LatticeState(rf, {1, 1, 1}, Ring{})).h == std::vector<long long>{0, -1, -2});

	const auto before = height_field(s).h;
	REQUIRE(s.apply_move(1));
	CHECK(s.omega(1) == 1);
	CHECK(s.omega(2) == 0);
	const auto after = height_field(s).h;
	for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] - before[i] == (i == 1 ? 1 : 0));
	for (int i = 1; i < s.size(); ++i) CHECK(s.omega(i) == after[i - 1] - after[i]);

	LatticeState capped(rf, {-3, 3}, Ring{}, 3);
	CHECK_FALSE(capped.apply_move(0));
	CHECK(capped.rejections() == 1);
	CHECK(capped.omega() == std::vector<int>{-3, 3});
}

TEST_CASE("ring conserves the slope sum and the rate index stays exact")
{
	const RateFunction rf = make_ebl(1.0);
	Rng rng(11);
	LatticeState s(rf, sample_product(rf, 0.3, 0.3, 64, 64, rng), Ring{});
	const long long sum0 = s.slope_sum();
	for (int k = 0; k < 10000; ++k) {
		gillespie_step(s, rng);
		if (k % 1000 == 0)
			CHECK(std::abs(s.total_rate() - s.recomputed_total_rate()) <= 1e-9 * s.recomputed_total_rate());
		for (int v : s.omega()) REQUIRE(std::abs(v) <= s.slope_cap());
	}
	CHECK(s.slope_sum() == sum0);
	CHECK(s.rejections() == 0);
}

TEST_CASE("identical seeds reproduce identical event sequences")
{
	const RateFunction rf = make_ebl(1.0);
	auto run = [&](std::uint64_t seed) {
		Rng rng(seed);
		LatticeState s(rf, sample_product(rf, 1.0, 0.0, 40, 20, rng), GhostProduct{1.0, 0.0, 20});
		std::vector<std::string> log;
		SampleHooks hooks;
		hooks.on_event = [&](const EventRecord& e) { log.push_back(format_event(e)); };
		simulate_until(s, 5.0, rng, hooks);
		return log;
	};
	const auto a = run(77), b = run(77), c = run(78);
	CHECK(a == b);
	CHECK(a != c);
	CHECK_FALSE(a.empty());
}

TEST_CASE("simulate until: empty run fires hooks once")
{
	const RateFunction rf = make_ebl(1.0);
	LatticeState s(rf, {0, 1, -1}, Ring{});
	s.set_time(2.0);
	Rng rng(1);
	int fired = 0;
	SampleHooks hooks;
	hooks.on_sample = [&](const LatticeState&, double) { ++fired; };
	const SimulationStats st = simulate_until(s, 2.0, rng, hooks);
	CHECK(st.events == 0);
	CHECK(fired == 1);
	CHECK(s.omega() == std::vector<int>{0, 1, -1});
}

TEST_CASE("events per unit time are extensive")
{
	const RateFunction rf = make_ebl(1.0);
	const double theta = 0.4;
	const double t = 5.0;
	const int reps = 40;
	std::vector<double> per_site;
	for (int n : {200, 400}) {
		double sum = 0.0, sum2 = 0.0;
		for (int r = 0; r < reps; ++r) {
			Rng rng(static_cast<std::uint64_t>(n * 1000 + r));
			LatticeState s(rf, sample_product(rf, theta, theta, n, n, rng), Ring{});
			const double x = double(simulate_until(s, t, rng).events) / (n * t);
			sum += x;
			sum2 += x * x;
		}
		const double mean = sum / reps;
		const double se = std::sqrt((sum2 / reps - mean * mean) / (reps - 1));
		CHECK(std::abs(mean - 2.0 * std::cosh(theta)) <= 4.0 * se);
		per_site.push_back(mean);
	}
	CHECK(per_site[1] == doctest::Approx(per_site[0]).epsilon(0.1));
}

TEST_CASE("product measure stays stationary on a ring")
{
	const RateFunction rf = make_ebl(1.0);
	const double theta = 0.3;
	const GibbsMarginal m = build_marginal(rf, theta);
	std::vector<double> counts(static_cast<std::size_t>(m.size()), 0.0);
	double total = 0.0;
	// pairs at distance 2 and their product moments
	double sx = 0.0, sy = 0.0, sxy = 0.0, pairs = 0.0;
	for (int rep = 0; rep < 60; ++rep) {
		Rng rng(1000 + static_cast<std::uint64_t>(rep));
		LatticeState s(rf, sample_product(rf, theta, theta, 256, 256, rng), Ring{});
		simulate_until(s, 10.0, rng);
		for (int i = 0; i < s.size(); ++i) {
			counts[static_cast<std::size_t>(s.omega(i) - m.z_min)] += 1.0;
			total += 1.0;
		}
		for (int i = 0; i + 2 < s.size(); i += 4) {
			sx += s.omega(i);
			sy += s.omega(i + 2);
			sxy += double(s.omega(i)) * s.omega(i + 2);
			pairs += 1.0;
		}
	}
	double tv = 0.0;
	for (int z = m.z_min; z <= m.z_max; ++z) tv += std::abs(counts[static_cast<std::size_t>(z - m.z_min)] / total - m.pmf_at(z));
	CHECK(tv / 2.0 < 0.02);
	const double cov = sxy / pairs - (sx / pairs) * (sy / pairs);
	const double var = variance(rf, theta);
	CHECK(std::abs(cov) <= 4.0 * var / std::sqrt(pairs));
}

TEST_CASE("mirror symmetry in distribution")
{
	const RateFunction rf = make_ebl(1.0);
	const std::vector<int> start{2, -1, 0, 3, -2, 1, 0, 0};
	std::vector<int> mirrored(start.size());
	for (std::size_t i = 0; i < start.size(); ++i) mirrored[i] = -start[start.size() - 1 - i];
	const int reps = 20000;
	std::vector<double> a(start.size(), 0.0), b(start.size(), 0.0), a2(start.size(), 0.0);
	for (int r = 0; r < reps; ++r) {
		Rng r1(static_cast<std::uint64_t>(r)), r2(static_cast<std::uint64_t>(r) + 1000000);
		LatticeState x(rf, start, Ring{});
		LatticeState y(rf, mirrored, Ring{});
		simulate_until(x, 0.5, r1);
		simulate_until(y, 0.5, r2);
		for (std::size_t i = 0; i < start.size(); ++i) {
			a[i] += x.omega(static_cast<int>(i));
			a2[i] += double(x.omega(static_cast<int>(i))) * x.omega(static_cast<int>(i));
			b[i] += -y.omega(static_cast<int>(start.size() - 1 - i));
		}
	}
	for (std::size_t i = 0; i < start.size(); ++i) {
		const double mean = a[i] / reps;
		const double sd = std::sqrt(a2[i] / reps - mean * mean);
		CHECK(std::abs(mean - b[i] / reps) <= 4.0 * sd * std::sqrt(2.0 / reps));
	}
}

TEST_CASE("exact generator on a small ring")
{
	const RateFunction rf = make_ebl(1.0);
	const ExactGenerator gen = build_exact_generator(rf, 3, 2);
	CHECK(gen.state_count() == 125);
	for (int k = 0; k < gen.state_count(); ++k) CHECK(gen.encode(gen.decode(k)) == k);

	const Eigen::VectorXd ones = Eigen::VectorXd::Ones(gen.state_count());
	CHECK((gen.Q * ones).cwiseAbs().maxCoeff() <= 1e-12);

	// Off-diagonal entries recomputed from the move rule.
	for (int k = 0; k < gen.state_count(); ++k) {
		const std::vector<int> w = gen.decode(k);
		for (int i = 0; i < 3; ++i) {
			std::vector<int> v = w;
			v[static_cast<std::size_t>(i)] -= 1;
			v[static_cast<std::size_t>((i + 1) % 3)] += 1;
			if (std::abs(v[static_cast<std::size_t>(i)]) > 2 || std::abs(v[static_cast<std::size_t>((i + 1) % 3)]) > 2) continue;
			const double rate = ebl_rate(w[static_cast<std::size_t>(i)]) + ebl_rate(-w[static_cast<std::size_t>((i + 1) % 3)]);
			CHECK(gen.Q.coeff(k, gen.encode(v)) == doctest::Approx(rate).epsilon(1e-14));
		}
	}

	const Eigen::SparseMatrix<double, Eigen::RowMajor> P = cyclic_shift_matrix(gen);
	const Eigen::MatrixXd commutator = Eigen::MatrixXd(P * gen.Q) - Eigen::MatrixXd(gen.Q * P);
	CHECK(commutator.cwiseAbs().maxCoeff() <= 1e-12);

	const GibbsMarginal m = build_marginal(rf, 0.0);
	const Eigen::VectorXd pi = product_vector(gen, m);
	CHECK(pi.sum() == doctest::Approx(1.0).epsilon(1e-14));
	const Eigen::VectorXd residual = gen.Q.transpose() * pi;
	double tail = 0.0;
	for (int z = m.z_min; z <= m.z_max; ++z)
		if (std::abs(z) > 2) tail += m.pmf_at(z);
	CHECK(residual.norm() < 10.0 * tail);
	CHECK(residual.norm() > 0.0);
}

TEST_CASE("generator residual shrinks with the truncation")
{
	const RateFunction rf = make_ebl(1.0);
	const GibbsMarginal m = build_marginal(rf, 0.4);
	double previous = kInf;
	for (int M : {2, 3, 4, 5}) {
		const ExactGenerator gen = build_exact_generator(rf, 3, M);
		const Eigen::VectorXd residual = gen.Q.transpose() * product_vector(gen, m);
		CHECK(residual.lpNorm<1>() < previous / 2.0);
		previous = residual.lpNorm<1>();
	}
	CHECK(previous < 1e-3);
}

TEST_CASE("exports")
{
	const RateFunction rf = make_ebl(1.0);
	LatticeState s(rf, {1, -2, 0}, Ring{});
	const std::string snap = export_snapshot(s, {{"seed", 5}, {"beta", 1.0}});
	CHECK(snap.rfind("# ", 0) == 0);
	CHECK(snap.find("\"seed\":5") != std::string::npos);
	CHECK(snap.find("\"boundary\":\"ring\"") != std::string::npos);
	CHECK(snap.find("i,omega\n0,1\n1,-2\n2,0\n") != std::string::npos);
	const std::string hist = export_histogram({3, 0, 7}, -1, {{"seed", 5}});
	CHECK(hist.find("z,count\n-1,3\n0,0\n1,7\n") != std::string::npos);

	EventRecord e;
	e.time = 1.5;
	e.bond = -1;
	e.pre_left = kGhostSlope;
	e.pre_right = 0;
	e.post_left = kGhostSlope;
	e.post_right = 1;
	CHECK(format_event(e) == "1.5,-1,ghost,0,ghost,1,1");
}
