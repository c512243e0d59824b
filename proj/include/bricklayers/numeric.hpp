#ifndef BRICKLAYERS_NUMERIC_HPP
#define BRICKLAYERS_NUMERIC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>

namespace bricklayers
{

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Largest argument handed to exp() when turning log-rates into rates.
// exp(700) ~ 1e304 still leaves headroom for a handful of additions.
inline constexpr double kMaxLogRate = 700.0;

// log(sum_i exp(x_i)), stable for large |x_i|. Empty input gives -inf.
template<typename Range>
double log_sum_exp(const Range& xs)
{
	double hi = -kInf;
	for (double x : xs) hi = std::max(hi, x);
	if (!std::isfinite(hi)) return hi;
	double s = 0.0;
	for (double x : xs) s += std::exp(x - hi);
	return hi + std::log(s);
}

inline double log_add_exp(double a, double b)
{
	if (a < b) std::swap(a, b);
	if (a == -kInf) return a;
	return a + std::log1p(std::exp(b - a));
}

// Neumaier compensated summation. Also tracks sum |x| for rounding bounds.
class CompensatedSum
{
public:
	void add(double x)
	{
		const double t = sum_ + x;
		if (std::abs(sum_) >= std::abs(x))
			comp_ += (sum_ - t) + x;
		else
			comp_ += (x - t) + sum_;
		sum_ = t;
		abs_ += std::abs(x);
	}
	CompensatedSum& operator+=(double x) { add(x); return *this; }
	double value() const { return sum_ + comp_; }
	double abs_sum() const { return abs_; }

private:
	double sum_ = 0.0;
	double comp_ = 0.0;
	double abs_ = 0.0;
};

inline std::uint64_t splitmix64(std::uint64_t x)
{
	x += 0x9e3779b97f4a7c15ULL;
	x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
	x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
	return x ^ (x >> 31);
}

/// Seedable 64-bit generator with explicit stream splitting.
///
/// Uniform and exponential draws are derived from raw 64-bit output with
/// fixed formulas, so event sequences are bit-identical across standard
/// library implementations (std::*_distribution makes no such promise).
class Rng
{
public:
	explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(splitmix64(seed)) {}

	/// Independent stream for replica `stream`; deterministic in (seed, stream).
	Rng split(std::uint64_t stream) const
	{
		return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
	}

	std::uint64_t seed() const { return seed_; }
	std::uint64_t next() { return engine_(); }

	/// Uniform on [0, 1) with 53 random bits.
	double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

	/// Exponential with the given rate (rate > 0).
	double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

private:
	std::uint64_t seed_;
	std::mt19937_64 engine_;
};

}

#endif
