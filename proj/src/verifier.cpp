#include "bricklayers/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "bricklayers/io.hpp"

namespace bricklayers
{

namespace
{

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kRoundingFactor = 16.0 * kEps;

std::size_t ipow(std::size_t base, int e)
{
	std::size_t p = 1;
	for (int k = 0; k < e; ++k) p *= base;
	return p;
}

std::vector<int> decode_pattern(std::size_t index, int width, int range)
{
	const std::size_t side = static_cast<std::size_t>(2 * range + 1);
	std::vector<int> v(static_cast<std::size_t>(width));
	for (int k = width - 1; k >= 0; --k) {
		v[static_cast<std::size_t>(k)] = static_cast<int>(index % side) - range;
		index /= side;
	}
	return v;
}

/// c * r(sign * omega_site + shift)
struct RatePart
{
	int site;
	int sign;
	int shift;
	double coef;
};

/// Rate times [phi(T omega) - phi(omega)], with T an optional bond move
/// followed by the frame shift (tau_s omega)_i = omega_{i-s}.
struct Term
{
	std::vector<RatePart> rate;
	bool has_move = false;
	int bond = 0;
	int frame_shift = 0;

	int moved_delta(int site) const
	{
		if (!has_move) return 0;
		if (site == bond) return -1;
		if (site == bond + 1) return +1;
		return 0;
	}
};

/// Terms whose jump can change a function of the sites [first, last].
std::vector<Term> generator_terms(GeneratorKind kind, int first, int last)
{
	std::vector<Term> terms;
	const bool tracer = kind == GeneratorKind::TracerFrame;
	for (int b = first - 1; b <= last; ++b) {
		Term t;
		t.has_move = true;
		t.bond = b;
		if (tracer && b == -1)
			t.rate = {{-1, +1, 0, 1.0}, {0, -1, -1, 1.0}};
		else
			t.rate = {{b, +1, 0, 1.0}, {b + 1, -1, 0, 1.0}};
		terms.push_back(t);
	}
	if (tracer) {
		Term left;
		left.rate = {{0, -1, 0, 1.0}, {0, -1, -1, -1.0}};
		left.has_move = true;
		left.bond = -1;
		left.frame_shift = +1;
		terms.push_back(left);
		Term right;
		right.rate = {{0, +1, 1, 1.0}, {0, +1, 0, -1.0}};
		right.frame_shift = -1;
		terms.push_back(right);
	}
	return terms;
}

std::pair<int, int> term_box(const std::vector<Term>& terms, int first, int last)
{
	int lo = first, hi = last;
	for (const Term& t : terms) {
		for (const RatePart& p : t.rate) {
			lo = std::min(lo, p.site);
			hi = std::max(hi, p.site);
		}
		if (t.has_move) {
			lo = std::min(lo, t.bond);
			hi = std::max(hi, t.bond + 1);
		}
		lo = std::min(lo, first - t.frame_shift);
		hi = std::max(hi, last - t.frame_shift);
	}
	return {lo, hi};
}

/// Marginals of a two-sided profile, built once per side.
struct SiteMarginals
{
	GibbsMarginal left, right;
	explicit SiteMarginals(const RateFunction& rf, const ThetaProfile& p)
	    : left(build_marginal(rf, p.theta_left)), right(build_marginal(rf, p.theta_right))
	{
	}
	const GibbsMarginal& at(int site) const { return site < 0 ? left : right; }
	double tail() const { return std::max(left.tail_bound, right.tail_bound); }
};

double pmf_exact(const GibbsMarginal& m, int z)
{
	if (!m.rf.is_ebl() && std::abs(z) > m.rf.domain_max()) return 0.0;
	return std::exp(m.log_pmf(z));
}

/// sum over |z| > M of mu(z) f(z), by direct summation until the terms vanish.
double tail_sum(const GibbsMarginal& m, int M, const std::function<double(int)>& f)
{
	double s = 0.0;
	for (int sign : {-1, +1}) {
		for (int k = M + 1; k < M + 400; ++k) {
			const int z = sign * k;
			if (!m.rf.is_ebl() && (k > m.rf.domain_max() || !m.rf.in_domain(z + 1) || !m.rf.in_domain(-z - 1))) break;
			const double p = pmf_exact(m, z);
			const double term = p * f(z);
			s += term;
			if (p < 1e-300 || (k > M + 20 && term < 1e-30 * (s + 1e-300))) break;
		}
	}
	return s;
}

double eval_part(const RateFunction& rf, const RatePart& p, int z) { return p.coef * rf.rate(p.sign * z + p.shift); }

}

// ---------------------------------------------------------------------------
// CylinderFunction

CylinderFunction::CylinderFunction(int first, int last, int range, std::vector<double> table, double outside_value)
    : first_(first), last_(last), range_(range), table_(std::move(table)), outside_(outside_value)
{
	if (last < first || range < 0)
		throw std::invalid_argument("cylinder window must be nonempty with a nonnegative range");
	if (table_.size() != ipow(static_cast<std::size_t>(2 * range + 1), width()))
		throw std::invalid_argument("cylinder table size does not match window and range");
	for (double v : table_)
		if (!std::isfinite(v))
			throw std::invalid_argument("cylinder function must be bounded");
	if (!std::isfinite(outside_))
		throw std::invalid_argument("cylinder function must be bounded");
}

CylinderFunction CylinderFunction::indicator(int first, const std::vector<int>& pattern, int range)
{
	const int last = first + static_cast<int>(pattern.size()) - 1;
	CylinderFunction f = constant(first, last, range, 0.0);
	const auto idx = f.index(pattern);
	if (!idx)
		throw std::invalid_argument("indicator pattern outside the table range");
	f.table_[*idx] = 1.0;
	return f;
}

CylinderFunction CylinderFunction::constant(int first, int last, int range, double value)
{
	return CylinderFunction(first, last, range,
	                        std::vector<double>(ipow(static_cast<std::size_t>(2 * range + 1), last - first + 1), value),
	                        value);
}

CylinderFunction CylinderFunction::random_table(int first, int last, int range, Rng& rng, double scale)
{
	std::vector<double> t(ipow(static_cast<std::size_t>(2 * range + 1), last - first + 1));
	for (double& v : t) v = scale * (2.0 * rng.uniform() - 1.0);
	const double outside = scale * (2.0 * rng.uniform() - 1.0);
	return CylinderFunction(first, last, range, std::move(t), outside);
}

std::optional<std::size_t> CylinderFunction::index(const std::vector<int>& values) const
{
	if (static_cast<int>(values.size()) != width())
		throw std::invalid_argument("assignment width does not match the cylinder window");
	const std::size_t side = static_cast<std::size_t>(2 * range_ + 1);
	std::size_t idx = 0;
	for (int v : values) {
		if (v < -range_ || v > range_) return std::nullopt;
		idx = idx * side + static_cast<std::size_t>(v + range_);
	}
	return idx;
}

double CylinderFunction::operator()(const std::vector<int>& values) const
{
	const auto idx = index(values);
	return idx ? table_[*idx] : outside_;
}

double CylinderFunction::deviation_bound() const
{
	double m = 0.0;
	for (double v : table_) m = std::max(m, std::abs(v - outside_));
	return m;
}

std::string CylinderFunction::describe() const
{
	std::ostringstream os;
	os << "[" << first_ << "," << last_ << "]";
	std::size_t ones = 0, nonzero = 0, hit = 0;
	for (std::size_t k = 0; k < table_.size(); ++k) {
		if (table_[k] != 0.0) {
			++nonzero;
			hit = k;
		}
		if (table_[k] == 1.0) ++ones;
	}
	if (outside_ == 0.0 && nonzero == 1 && ones == 1) {
		os << " indicator (";
		const auto p = decode_pattern(hit, width(), range_);
		for (std::size_t k = 0; k < p.size(); ++k) os << (k ? "," : "") << p[k];
		os << ")";
	} else {
		os << " table range " << range_;
	}
	return os.str();
}

// ---------------------------------------------------------------------------
// Reports

std::string verdict_name(Verdict v) { return v == Verdict::NonZero ? "NonZero" : "ConsistentWithZero"; }

Verdict classify(double residual, double tail_bound, double rounding_bound)
{
	return std::abs(residual) > 10.0 * (tail_bound + rounding_bound) ? Verdict::NonZero : Verdict::ConsistentWithZero;
}

nlohmann::json ResidualReport::to_json() const
{
	return {{"residual", residual},
	        {"tail_bound", tail_bound},
	        {"rounding_bound", rounding_bound},
	        {"basis", basis},
	        {"verdict", verdict_name(verdict)}};
}

ResidualReport IndicatorResiduals::report(const CylinderFunction& phi) const
{
	if (phi.first() != first || phi.last() != last || phi.range() != range)
		throw std::invalid_argument("cylinder function does not match the indicator window");
	CompensatedSum res;
	double abs = 0.0;
	for (std::size_t p = 0; p < residual.size(); ++p) {
		const double c = phi.table()[p] - phi.outside_value();
		if (c == 0.0) continue;
		res += c * residual[p];
		abs += std::abs(c) * abs_sum[p];
	}
	ResidualReport r;
	r.residual = res.value();
	r.tail_bound = phi.deviation_bound() * tail_per_unit;
	r.rounding_bound = kRoundingFactor * abs + kEps * res.abs_sum();
	r.basis = phi.describe();
	r.verdict = classify(r.residual, r.tail_bound, r.rounding_bound);
	return r;
}

// ---------------------------------------------------------------------------
// Brute force

std::uint64_t brute_force_state_count(GeneratorKind kind, int first, int last, int truncation)
{
	const auto terms = generator_terms(kind, first, last);
	const auto [lo, hi] = term_box(terms, first, last);
	std::uint64_t n = 1;
	for (int s = lo; s <= hi; ++s) {
		n *= static_cast<std::uint64_t>(2 * truncation + 1);
		if (n > (1ULL << 62)) break;
	}
	return n;
}

IndicatorResiduals brute_force_indicator_residuals(GeneratorKind kind, const RateFunction& rf,
                                                   const ThetaProfile& profile, int first, int last, int range,
                                                   int truncation)
{
	if (truncation < range + 1)
		throw std::invalid_argument("truncation must exceed the table range");
	const std::uint64_t states = brute_force_state_count(kind, first, last, truncation);
	if (states > kBruteForceBudget)
		throw std::length_error("brute-force state space exceeds the budget");

	const auto terms = generator_terms(kind, first, last);
	const auto [lo, hi] = term_box(terms, first, last);
	const int n = hi - lo + 1;
	const int M = truncation;
	const int width = last - first + 1;
	const SiteMarginals marg(rf, profile);

	// Per-site weights over [-M, M] and rates over [-M-1, M+1].
	std::vector<std::vector<double>> pmf(static_cast<std::size_t>(n));
	for (int s = 0; s < n; ++s)
		for (int z = -M; z <= M; ++z) pmf[static_cast<std::size_t>(s)].push_back(pmf_exact(marg.at(lo + s), z));
	std::vector<double> rate;
	for (int z = -M - 1; z <= M + 1; ++z) rate.push_back(rf.rate(z));
	auto r = [&](int z) { return rate[static_cast<std::size_t>(z + M + 1)]; };

	const std::size_t side = static_cast<std::size_t>(2 * range + 1);
	const std::size_t entries = ipow(side, width);
	std::vector<double> sum(entries, 0.0), comp(entries, 0.0), abs(entries, 0.0);
	auto add = [&](std::size_t k, double x) {
		const double t = sum[k] + x;
		comp[k] += std::abs(sum[k]) >= std::abs(x) ? (sum[k] - t) + x : (x - t) + sum[k];
		sum[k] = t;
		abs[k] += std::abs(x);
	};

	std::vector<int> omega(static_cast<std::size_t>(n), -M);
	auto at = [&](int site) { return omega[static_cast<std::size_t>(site - lo)]; };
	auto pattern_index = [&](const Term* t) -> std::optional<std::size_t> {
		std::size_t idx = 0;
		for (int i = first; i <= last; ++i) {
			const int src = t ? i - t->frame_shift : i;
			const int v = at(src) + (t ? t->moved_delta(src) : 0);
			if (v < -range || v > range) return std::nullopt;
			idx = idx * side + static_cast<std::size_t>(v + range);
		}
		return idx;
	};

	for (;;) {
		double w = 1.0;
		for (int s = 0; s < n; ++s) w *= pmf[static_cast<std::size_t>(s)][static_cast<std::size_t>(omega[static_cast<std::size_t>(s)] + M)];
		if (w > 0.0) {
			const auto id = pattern_index(nullptr);
			for (const Term& t : terms) {
				double rt = 0.0;
				for (const RatePart& p : t.rate) rt += p.coef * r(p.sign * at(p.site) + p.shift);
				const double x = w * rt;
				const auto img = pattern_index(&t);
				if (img == id) continue;
				if (img) add(*img, x);
				if (id) add(*id, -x);
			}
		}
		int s = n - 1;
		while (s >= 0 && omega[static_cast<std::size_t>(s)] == M) omega[static_cast<std::size_t>(s--)] = -M;
		if (s < 0) break;
		++omega[static_cast<std::size_t>(s)];
	}

	IndicatorResiduals out;
	out.first = first;
	out.last = last;
	out.range = range;
	out.residual.resize(entries);
	out.abs_sum = abs;
	for (std::size_t k = 0; k < entries; ++k) out.residual[k] = sum[k] + comp[k];

	// Mass of configurations with some box site outside [-M, M], weighted by
	// each rate part; |phi(T omega) - phi(omega)| <= 2 for |phi| <= 1.
	double tail = 0.0;
	double full = 0.0;
	for (const Term& t : terms)
		for (const RatePart& p : t.rate) {
			const GibbsMarginal& mk = marg.at(p.site);
			auto f = [&](int z) { return std::abs(p.coef) * rf.rate(p.sign * z + p.shift); };
			const double ef = std::abs(p.coef) * expect_rate(mk, p.sign, p.shift);
			full += ef;
			for (int j = lo; j <= hi; ++j) {
				if (j == p.site)
					tail += tail_sum(mk, M, f);
				else
					tail += ef * tail_sum(marg.at(j), M, [](int) { return 1.0; });
			}
		}
	out.tail_per_unit = 2.0 * tail + 8.0 * marg.tail() * full;
	return out;
}

// ---------------------------------------------------------------------------
// Factorized

IndicatorResiduals factorized_indicator_residuals(GeneratorKind kind, const RateFunction& rf,
                                                  const ThetaProfile& profile, int first, int last, int range)
{
	const auto terms = generator_terms(kind, first, last);
	const int width = last - first + 1;
	const SiteMarginals marg(rf, profile);

	// E r(sign omega_k + shift) per rate part.
	std::vector<std::vector<double>> part_mean(terms.size());
	double full = 0.0;
	for (std::size_t ti = 0; ti < terms.size(); ++ti)
		for (const RatePart& p : terms[ti].rate) {
			part_mean[ti].push_back(expect_rate(marg.at(p.site), p.sign, p.shift));
			full += std::abs(p.coef) * part_mean[ti].back();
		}

	const std::size_t side = static_cast<std::size_t>(2 * range + 1);
	const std::size_t entries = ipow(side, width);
	IndicatorResiduals out;
	out.first = first;
	out.last = last;
	out.range = range;
	out.residual.assign(entries, 0.0);
	out.abs_sum.assign(entries, 0.0);

	std::vector<int> sites(static_cast<std::size_t>(width));
	std::vector<int> values(static_cast<std::size_t>(width));

	// E[f_part(omega_k) 1{omega_sites = values}] for a rate part of term ti.
	auto moment = [&](std::size_t ti, std::size_t pi) {
		const RatePart& p = terms[ti].rate[pi];
		double prob = 1.0;
		std::optional<int> fixed;
		for (int k = 0; k < width; ++k) {
			prob *= pmf_exact(marg.at(sites[static_cast<std::size_t>(k)]), values[static_cast<std::size_t>(k)]);
			if (sites[static_cast<std::size_t>(k)] == p.site) fixed = values[static_cast<std::size_t>(k)];
		}
		const double f = fixed ? eval_part(rf, p, *fixed) : p.coef * part_mean[ti][pi];
		return f * prob;
	};

	for (std::size_t idx = 0; idx < entries; ++idx) {
		const std::vector<int> q = decode_pattern(idx, width, range);
		CompensatedSum res;
		for (std::size_t ti = 0; ti < terms.size(); ++ti) {
			const Term& t = terms[ti];
			// Preimage of {(T omega)_F = q}: omega_{i-s} = q_i - moved_delta(i-s).
			bool identity = true;
			for (int k = 0; k < width; ++k) {
				const int i = first + k;
				const int src = i - t.frame_shift;
				sites[static_cast<std::size_t>(k)] = src;
				values[static_cast<std::size_t>(k)] = q[static_cast<std::size_t>(k)] - t.moved_delta(src);
				identity = identity && src == i && values[static_cast<std::size_t>(k)] == q[static_cast<std::size_t>(k)];
			}
			if (identity) continue;
			std::vector<double> inflow;
			for (std::size_t pi = 0; pi < t.rate.size(); ++pi) inflow.push_back(moment(ti, pi));
			for (int k = 0; k < width; ++k) {
				sites[static_cast<std::size_t>(k)] = first + k;
				values[static_cast<std::size_t>(k)] = q[static_cast<std::size_t>(k)];
			}
			for (std::size_t pi = 0; pi < t.rate.size(); ++pi) {
				res += inflow[pi];
				res += -moment(ti, pi);
			}
		}
		out.residual[idx] = res.value();
		out.abs_sum[idx] = res.abs_sum();
	}
	out.tail_per_unit = 8.0 * std::max(marg.tail(), kEps) * full;
	return out;
}

// ---------------------------------------------------------------------------
// Single-function entry points

ResidualReport translation_invariant_residual(const RateFunction& rf, double theta, const CylinderFunction& phi,
                                              int truncation)
{
	const auto ind = brute_force_indicator_residuals(GeneratorKind::TranslationInvariant, rf,
	                                                 ThetaProfile::uniform(theta), phi.first(), phi.last(),
	                                                 phi.range(), truncation);
	return ind.report(phi);
}

ResidualReport tracer_residual(const RateFunction& rf, const ThetaProfile& profile, const CylinderFunction& phi,
                               int truncation)
{
	const auto ind = brute_force_indicator_residuals(GeneratorKind::TracerFrame, rf, profile, phi.first(),
	                                                 phi.last(), phi.range(), truncation);
	return ind.report(phi);
}

std::vector<CylinderFunction> default_basis()
{
	constexpr int range = 3;
	std::vector<CylinderFunction> basis;
	for (const auto& [first, last] : std::vector<std::pair<int, int>>{{0, 0}, {-1, 0}, {0, 1}, {-1, 1}}) {
		const int width = last - first + 1;
		const std::size_t count = ipow(2 * range + 1, width);
		for (std::size_t idx = 0; idx < count; ++idx)
			basis.push_back(CylinderFunction::indicator(first, decode_pattern(idx, width, range), range));
	}
	return basis;
}

BasisReport evaluate_basis(GeneratorKind kind, const RateFunction& rf, const ThetaProfile& profile,
                           const std::vector<CylinderFunction>& basis, Evaluator evaluator, int truncation)
{
	std::map<std::tuple<int, int, int>, IndicatorResiduals> groups;
	BasisReport out;
	for (std::size_t k = 0; k < basis.size(); ++k) {
		const CylinderFunction& phi = basis[k];
		const auto key = std::make_tuple(phi.first(), phi.last(), phi.range());
		auto it = groups.find(key);
		if (it == groups.end()) {
			IndicatorResiduals ind =
			    evaluator == Evaluator::BruteForce
			        ? brute_force_indicator_residuals(kind, rf, profile, phi.first(), phi.last(), phi.range(), truncation)
			        : factorized_indicator_residuals(kind, rf, profile, phi.first(), phi.last(), phi.range());
			it = groups.emplace(key, std::move(ind)).first;
		}
		ResidualReport r = it->second.report(phi);
		if (std::abs(r.residual) > out.max_residual || k == 0) {
			out.max_residual = std::abs(r.residual);
			out.argmax = k;
		}
		if (r.verdict == Verdict::NonZero) out.verdict = Verdict::NonZero;
		out.max_tail_bound = std::max(out.max_tail_bound, r.tail_bound);
		out.max_rounding_bound = std::max(out.max_rounding_bound, r.rounding_bound);
		out.entries.push_back(std::move(r));
	}
	return out;
}

// ---------------------------------------------------------------------------
// A + B + C + D

double AbcdContext::z_ratio() const { return std::exp(log_z_left - log_z_right); }

AbcdContext make_abcd_context(const RateFunction& rf, const ThetaProfile& profile)
{
	AbcdContext ctx{rf, profile, 0.0, 0.0};
	ctx.log_z_left = build_marginal(rf, profile.theta_left).log_Z;
	ctx.log_z_right = build_marginal(rf, profile.theta_right).log_Z;
	return ctx;
}

AbcdTerms abcd_terms(const AbcdContext& ctx, int first, const std::vector<int>& omega)
{
	const int last = first + static_cast<int>(omega.size()) - 1;
	if (first > -1 || last < 1)
		throw std::invalid_argument("assignment must cover sites -1, 0 and 1");
	auto w = [&](int i) { return omega[static_cast<std::size_t>(i - first)]; };
	auto r = [&](int z) { return ctx.rf.rate(z); };
	auto th = [&](int i) { return ctx.profile.at(i); };

	AbcdTerms t;
	CompensatedSum a;
	for (int i = first; i < last; ++i) {
		if (i == -1) continue;
		const double tilt = std::exp(th(i) - th(i + 1));
		a += tilt * (r(w(i + 1)) + r(-w(i)));
		a += -r(w(i)) - r(-w(i + 1));
	}
	t.A = a.value();

	const double jump = std::exp(th(-1) - th(0));
	t.B = jump * (r(w(0)) + r(-w(-1)) * r(w(0)) / r(w(0) + 1)) - r(w(-1)) - r(-w(0)) - r(w(0) + 1) + r(w(0));

	// Only the j = 0 (C) and j = -1 (D) factors of the infinite products differ
	// from 1 under a two-sided profile.
	const double log_zl_over_zr = ctx.log_z_left - ctx.log_z_right;
	t.C = jump * r(-w(0)) * (1.0 - r(w(1)) / r(w(1) + 1)) *
	      std::exp((th(-1) - th(0)) * w(0) - log_zl_over_zr);
	t.D = (r(w(-1) + 1) - r(w(-1))) * std::exp((th(0) - th(-1)) * w(-1) + log_zl_over_zr);
	return t;
}

ResidualReport abcd_expectation(const RateFunction& rf, const ThetaProfile& profile, const CylinderFunction& phi,
                                int truncation)
{
	const int lo = std::min(phi.first() - 1, -1);
	const int hi = std::max(phi.last() + 1, 1);
	const int n = hi - lo + 1;
	const int M = truncation;
	std::uint64_t states = 1;
	for (int k = 0; k < n; ++k) states *= static_cast<std::uint64_t>(2 * M + 1);
	if (states > kBruteForceBudget)
		throw std::length_error("brute-force state space exceeds the budget");

	const AbcdContext ctx = make_abcd_context(rf, profile);
	const SiteMarginals marg(rf, profile);
	std::vector<std::vector<double>> pmf(static_cast<std::size_t>(n));
	for (int s = 0; s < n; ++s)
		for (int z = -M; z <= M; ++z) pmf[static_cast<std::size_t>(s)].push_back(pmf_exact(marg.at(lo + s), z));

	std::vector<int> omega(static_cast<std::size_t>(n), -M);
	std::vector<int> window(static_cast<std::size_t>(phi.width()));
	CompensatedSum total;
	for (;;) {
		double w = 1.0;
		for (int s = 0; s < n; ++s) w *= pmf[static_cast<std::size_t>(s)][static_cast<std::size_t>(omega[static_cast<std::size_t>(s)] + M)];
		for (int k = 0; k < phi.width(); ++k)
			window[static_cast<std::size_t>(k)] = omega[static_cast<std::size_t>(phi.first() + k - lo)];
		const double f = phi(window);
		if (w > 0.0 && f != 0.0) total += w * f * abcd_terms(ctx, lo, omega).sum();
		int s = n - 1;
		while (s >= 0 && omega[static_cast<std::size_t>(s)] == M) omega[static_cast<std::size_t>(s--)] = -M;
		if (s < 0) break;
		++omega[static_cast<std::size_t>(s)];
	}

	const auto ind = brute_force_indicator_residuals(GeneratorKind::TracerFrame, rf, profile, phi.first(), phi.last(),
	                                                 phi.range(), truncation);
	ResidualReport r;
	r.residual = total.value();
	r.tail_bound = std::max(std::abs(phi.outside_value()) + phi.deviation_bound(), 1.0) * ind.tail_per_unit;
	r.rounding_bound = kRoundingFactor * total.abs_sum();
	r.basis = phi.describe();
	r.verdict = classify(r.residual, r.tail_bound, r.rounding_bound);
	return r;
}

// ---------------------------------------------------------------------------
// Speed identity

double speed_identity_defect(const RateFunction& rf, const ThetaProfile& profile, int a, int b)
{
	if (!(a < -1 && b > 1))
		throw std::invalid_argument("speed identity needs a < -1 and b > 1");
	const SiteMarginals marg(rf, profile);
	auto er = [&](int site, int sign, int shift) { return expect_rate(marg.at(site), sign, shift); };
	auto mean = [&](int site) { return moments(marg.at(site)).mean; };

	const double left_rate = er(0, -1, 0) - er(0, -1, -1);
	const double right_rate = er(0, +1, 1) - er(0, +1, 0);

	// phi = omega_a + ... + omega_b: only bonds a-1 and b and the two frame
	// shifts change it.
	CompensatedSum generator;
	generator += er(a - 1, +1, 0) + er(a, -1, 0);
	generator += -(er(b, +1, 0) + er(b + 1, -1, 0));
	generator += left_rate * (mean(a - 1) - mean(b));
	generator += right_rate * (mean(b + 1) - mean(a));

	CompensatedSum split;
	split += er(a, +1, 0) + er(a, -1, 0);
	split += -(er(b, +1, 0) + er(b, -1, 0));
	split += left_rate * (mean(a) - mean(b));
	split += right_rate * (mean(b) - mean(a));
	return generator.value() - split.value();
}

// ---------------------------------------------------------------------------
// Scans

nlohmann::json ScanReport::summary() const
{
	return {{"points", points.size()},
	        {"basis_size", basis_size},
	        {"min_residual", min_residual},
	        {"argmin_theta_left", argmin_left},
	        {"argmin_theta_right", argmin_right},
	        {"argmin_offset", argmin_left - argmin_right},
	        {"consistent_count", consistent_count},
	        {"any_consistent", any_consistent()}};
}

std::string ScanReport::csv(const nlohmann::json& header) const
{
	CsvWriter w(header, {"theta_l", "theta_r", "residual"});
	for (const ScanPoint& p : points) w.row({p.theta_left, p.theta_right, p.max_residual});
	return w.str();
}

std::vector<double> theta_grid(double lo, double hi, int n)
{
	if (n < 2)
		throw std::invalid_argument("theta grid needs at least two points");
	std::vector<double> g(static_cast<std::size_t>(n));
	for (int k = 0; k < n; ++k) g[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / (n - 1);
	return g;
}

namespace
{

ScanReport scan_pairs(const RateFunction& rf, const std::vector<std::pair<double, double>>& pairs,
                      const std::vector<CylinderFunction>& basis)
{
	ScanReport rep;
	rep.basis_size = basis.size();
	for (const auto& [tl, tr] : pairs) {
		const BasisReport b = evaluate_basis(GeneratorKind::TracerFrame, rf, {tl, tr}, basis, Evaluator::Factorized);
		ScanPoint p{tl, tr, b.max_residual, b.verdict};
		if (p.max_residual < rep.min_residual) {
			rep.min_residual = p.max_residual;
			rep.argmin_left = tl;
			rep.argmin_right = tr;
		}
		if (p.verdict == Verdict::ConsistentWithZero) ++rep.consistent_count;
		rep.points.push_back(p);
	}
	return rep;
}

}

ScanReport theorem_scan(const RateFunction& rf, const std::vector<double>& left_grid,
                        const std::vector<double>& right_grid, const std::vector<CylinderFunction>& basis)
{
	std::vector<std::pair<double, double>> pairs;
	for (double tl : left_grid)
		for (double tr : right_grid) pairs.emplace_back(tl, tr);
	return scan_pairs(rf, pairs, basis);
}

ScanReport diagonal_scan(const RateFunction& rf, const std::vector<double>& grid,
                         const std::vector<CylinderFunction>& basis)
{
	std::vector<std::pair<double, double>> pairs;
	for (double t : grid) pairs.emplace_back(t, t);
	return scan_pairs(rf, pairs, basis);
}

ScanReport offset_scan(const RateFunction& rf, double theta_right, const std::vector<double>& offsets,
                       const std::vector<CylinderFunction>& basis)
{
	std::vector<std::pair<double, double>> pairs;
	for (double c : offsets) pairs.emplace_back(theta_right + c, theta_right);
	return scan_pairs(rf, pairs, basis);
}

}
