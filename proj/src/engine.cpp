#include "bricklayers/engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "bricklayers/io.hpp"

namespace bricklayers
{

SumTree::SumTree(std::size_t n) : n_(n)
{
	while (cap_ < std::max<std::size_t>(n, 1)) cap_ <<= 1;
	nodes_.assign(2 * cap_, 0.0);
}

void SumTree::set(std::size_t i, double w)
{
	std::size_t p = cap_ + i;
	nodes_[p] = w;
	for (p >>= 1; p >= 1; p >>= 1) nodes_[p] = nodes_[2 * p] + nodes_[2 * p + 1];
}

std::size_t SumTree::select(double u) const
{
	std::size_t p = 1;
	while (p < cap_) {
		const double left = nodes_[2 * p];
		if ((u >= left || left <= 0.0) && nodes_[2 * p + 1] > 0.0) {
			u -= left;
			p = 2 * p + 1;
		} else {
			p = 2 * p;
		}
	}
	return std::min(p - cap_, n_ - 1);
}

std::size_t SumTree::select_linear(double u) const
{
	std::size_t last_positive = 0;
	for (std::size_t i = 0; i < n_; ++i) {
		const double w = nodes_[cap_ + i];
		if (w <= 0.0) continue;
		last_positive = i;
		if (u < w) return i;
		u -= w;
	}
	return last_positive;
}

RateTable::RateTable(const RateFunction& rf, int lo, int hi) : lo_(lo)
{
	for (int z = lo; z <= hi; ++z) {
		if (!rf.in_domain(z))
			throw std::out_of_range("slope " + std::to_string(z) + " beyond rate-function domain");
		values_.push_back(rf.rate(z));
	}
}

std::string boundary_name(const Boundary& b)
{
	return std::holds_alternative<Ring>(b) ? "ring" : "ghost_product";
}

LatticeState::LatticeState(RateFunction rf, std::vector<int> omega, Boundary boundary, int slope_cap)
    : rf_(std::move(rf)), omega_(std::move(omega)), boundary_(boundary), cap_(slope_cap)
{
	if (omega_.size() < 2)
		throw std::invalid_argument("lattice needs at least two sites");
	if (cap_ < 1)
		throw std::invalid_argument("slope cap must be positive");
	for (int w : omega_)
		if (std::abs(w) > cap_)
			throw std::invalid_argument("initial slope " + std::to_string(w) + " exceeds cap " + std::to_string(cap_));
	table_ = RateTable(rf_, -cap_ - 2, cap_ + 2);
	if (const auto* g = std::get_if<GhostProduct>(&boundary_)) {
		ghost_left_ = expect_rate(build_marginal(rf_, g->theta_left), +1, 0);
		ghost_right_ = expect_rate(build_marginal(rf_, g->theta_right), -1, 0);
	}
	tree_ = SumTree(static_cast<std::size_t>(last_bond() - first_bond() + 1));
	for (int b = first_bond(); b <= last_bond(); ++b) refresh(b);
}

double LatticeState::compute_bond_rate(int i) const
{
	if (!valid_bond(i))
		throw std::out_of_range("bond " + std::to_string(i) + " not valid for this boundary");
	if (is_ring()) return table_(omega_[i]) + table_(-omega_[wrap(i + 1)]);
	if (i == -1) return ghost_left_ + table_(-omega_[0]);
	if (i == size() - 1) return table_(omega_[i]) + ghost_right_;
	return table_(omega_[i]) + table_(-omega_[i + 1]);
}

void LatticeState::refresh(int bond) { tree_.set(leaf(bond), compute_bond_rate(bond)); }

double LatticeState::recomputed_total_rate() const
{
	CompensatedSum s;
	for (int b = first_bond(); b <= last_bond(); ++b) s += compute_bond_rate(b);
	return s.value();
}

bool LatticeState::apply_move(int i)
{
	if (!valid_bond(i))
		throw std::out_of_range("bond " + std::to_string(i) + " not valid for this boundary");
	const int n = size();
	const bool has_left = is_ring() || i >= 0;
	const bool has_right = is_ring() || i + 1 < n;
	const int l = i;
	const int r = is_ring() ? wrap(i + 1) : i + 1;
	if ((has_left && omega_[l] - 1 < -cap_) || (has_right && omega_[r] + 1 > cap_)) {
		++rejections_;
		return false;
	}
	if (has_left) --omega_[l];
	if (has_right) ++omega_[r];

	if (is_ring()) {
		refresh(wrap(i - 1));
		refresh(i);
		refresh(wrap(i + 1));
	} else {
		for (int b = i - 1; b <= i + 1; ++b)
			if (valid_bond(b)) refresh(b);
	}
	return true;
}

long long LatticeState::slope_sum() const
{
	long long s = 0;
	for (int w : omega_) s += w;
	return s;
}

void LatticeState::set_omega(int i, int value)
{
	if (std::abs(value) > cap_)
		throw std::invalid_argument("slope exceeds cap");
	omega_[static_cast<std::size_t>(i)] = value;
	if (is_ring()) {
		refresh(wrap(i - 1));
		refresh(i);
	} else {
		refresh(i - 1);
		refresh(i);
	}
}

std::vector<int> sample_product(const RateFunction& rf, double theta_left, double theta_right, int n, int split, Rng& rng)
{
	const GibbsMarginal ml = build_marginal(rf, theta_left);
	const GibbsMarginal mr = build_marginal(rf, theta_right);
	std::vector<int> omega(static_cast<std::size_t>(n));
	for (int i = 0; i < n; ++i) omega[static_cast<std::size_t>(i)] = sample(i < split ? ml : mr, rng);
	return omega;
}

namespace
{

EventRecord execute_bond(LatticeState& state, int bond)
{
	EventRecord e;
	e.time = state.time();
	e.bond = bond;
	const int n = state.size();
	const int r = state.is_ring() ? (bond + 1) % n : bond + 1;
	const bool has_left = state.is_ring() || bond >= 0;
	const bool has_right = state.is_ring() || r < n;
	e.pre_left = has_left ? state.omega(bond) : kGhostSlope;
	e.pre_right = has_right ? state.omega(r) : kGhostSlope;
	e.accepted = state.apply_move(bond);
	e.post_left = has_left ? state.omega(bond) : kGhostSlope;
	e.post_right = has_right ? state.omega(r) : kGhostSlope;
	return e;
}

}

EventRecord gillespie_step(LatticeState& state, Rng& rng)
{
	const double total = state.total_rate();
	if (!(total > 0.0))
		throw std::logic_error("gillespie_step with zero total rate");
	state.set_time(state.time() + rng.exponential(total));
	return execute_bond(state, state.select_bond(rng.uniform() * total));
}

SimulationStats simulate_until(LatticeState& state, double t_end, Rng& rng, const SampleHooks& hooks)
{
	if (t_end < state.time())
		throw std::invalid_argument("t_end precedes the current time");
	SimulationStats stats;
	const std::int64_t rejected_before = state.rejections();
	std::vector<double> times = hooks.times;
	if (times.empty()) times.push_back(t_end);
	std::size_t next_sample = 0;
	while (next_sample < times.size() && times[next_sample] < state.time()) ++next_sample;

	auto fire_until = [&](double t) {
		while (next_sample < times.size() && times[next_sample] <= t) {
			if (hooks.on_sample) hooks.on_sample(state, times[next_sample]);
			++stats.samples;
			++next_sample;
		}
	};

	for (;;) {
		const double total = state.total_rate();
		const double dt = total > 0.0 ? rng.exponential(total) : kInf;
		const double t_next = state.time() + dt;
		if (t_next > t_end) {
			fire_until(t_end);
			state.set_time(t_end);
			break;
		}
		fire_until(t_next);
		state.set_time(t_next);

		const int bond = state.select_bond(rng.uniform() * total);
		if (hooks.on_event)
			hooks.on_event(execute_bond(state, bond));
		else
			state.apply_move(bond);
		++stats.events;
	}
	stats.rejections = state.rejections() - rejected_before;
	return stats;
}

std::vector<int> ExactGenerator::decode(int index) const
{
	std::vector<int> omega(static_cast<std::size_t>(sites));
	const int base = 2 * truncation + 1;
	for (int i = 0; i < sites; ++i) {
		omega[static_cast<std::size_t>(i)] = index % base - truncation;
		index /= base;
	}
	return omega;
}

int ExactGenerator::encode(const std::vector<int>& omega) const
{
	const int base = 2 * truncation + 1;
	int index = 0;
	for (int i = sites - 1; i >= 0; --i) index = index * base + (omega[static_cast<std::size_t>(i)] + truncation);
	return index;
}

ExactGenerator build_exact_generator(const RateFunction& rf, int sites, int truncation)
{
	if (sites < 2 || truncation < 0)
		throw std::invalid_argument("exact generator needs at least two sites and M >= 0");
	const double count = std::pow(2.0 * truncation + 1.0, sites);
	if (count > 1e6)
		throw std::length_error("state space (2M+1)^N exceeds 1e6");

	ExactGenerator gen;
	gen.sites = sites;
	gen.truncation = truncation;
	const int n_states = static_cast<int>(count);
	const RateTable table(rf, -truncation - 1, truncation + 1);

	std::vector<Eigen::Triplet<double>> triplets;
	triplets.reserve(static_cast<std::size_t>(n_states) * static_cast<std::size_t>(sites + 1));
	for (int s = 0; s < n_states; ++s) {
		std::vector<int> omega = gen.decode(s);
		double out = 0.0;
		for (int i = 0; i < sites; ++i) {
			const int j = (i + 1) % sites;
			if (omega[i] - 1 < -truncation || omega[j] + 1 > truncation) continue;
			const double rate = table(omega[i]) + table(-omega[j]);
			--omega[i];
			++omega[j];
			triplets.emplace_back(s, gen.encode(omega), rate);
			++omega[i];
			--omega[j];
			out += rate;
		}
		triplets.emplace_back(s, s, -out);
	}
	gen.Q.resize(n_states, n_states);
	gen.Q.setFromTriplets(triplets.begin(), triplets.end());
	return gen;
}

Eigen::VectorXd product_vector(const ExactGenerator& gen, const GibbsMarginal& m)
{
	Eigen::VectorXd pi(gen.state_count());
	for (int s = 0; s < gen.state_count(); ++s) {
		double logp = 0.0;
		for (int w : gen.decode(s)) logp += m.log_pmf(w);
		pi[s] = std::exp(logp);
	}
	pi /= pi.sum();
	return pi;
}

Eigen::SparseMatrix<double, Eigen::RowMajor> cyclic_shift_matrix(const ExactGenerator& gen)
{
	std::vector<Eigen::Triplet<double>> triplets;
	for (int s = 0; s < gen.state_count(); ++s) {
		const std::vector<int> omega = gen.decode(s);
		std::vector<int> shifted(omega.size());
		for (int i = 0; i < gen.sites; ++i) shifted[static_cast<std::size_t>((i + 1) % gen.sites)] = omega[static_cast<std::size_t>(i)];
		triplets.emplace_back(s, gen.encode(shifted), 1.0);
	}
	Eigen::SparseMatrix<double, Eigen::RowMajor> P(gen.state_count(), gen.state_count());
	P.setFromTriplets(triplets.begin(), triplets.end());
	return P;
}

HeightField height_field(const LatticeState& state)
{
	HeightField hf;
	hf.h.resize(static_cast<std::size_t>(state.size()));
	hf.h[0] = 0;
	for (int i = 1; i < state.size(); ++i)
		hf.h[static_cast<std::size_t>(i)] = hf.h[static_cast<std::size_t>(i - 1)] - state.omega(i);
	return hf;
}

std::string export_snapshot(const LatticeState& state, const nlohmann::json& header)
{
	nlohmann::json h = header;
	h["N"] = state.size();
	h["t"] = state.time();
	h["boundary"] = boundary_name(state.boundary());
	CsvWriter csv(h, {"i", "omega"});
	for (int i = 0; i < state.size(); ++i) csv.row({static_cast<double>(i), static_cast<double>(state.omega(i))});
	return csv.str();
}

std::string export_histogram(const std::vector<std::int64_t>& counts, int z_lo, const nlohmann::json& header)
{
	CsvWriter csv(header, {"z", "count"});
	for (std::size_t k = 0; k < counts.size(); ++k)
		csv.row({static_cast<double>(z_lo + static_cast<int>(k)), static_cast<double>(counts[k])});
	return csv.str();
}

std::string format_event(const EventRecord& e)
{
	std::ostringstream os;
	auto slot = [](int v) { return v == kGhostSlope ? std::string("ghost") : std::to_string(v); };
	os << format_double(e.time) << ',' << e.bond << ',' << slot(e.pre_left) << ',' << slot(e.pre_right) << ','
	   << slot(e.post_left) << ',' << slot(e.post_right) << ',' << (e.accepted ? 1 : 0);
	return os.str();
}

}
