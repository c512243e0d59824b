#include "bricklayers/tracer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace bricklayers
{

// ---------------------------------------------------------------------------
// Coupled pair

CoupledPairState::CoupledPairState(RateFunction rf, std::vector<int> omega_minus, int tracer_site,
                                   GhostProduct boundary, int slope_cap)
    : walls_(std::move(rf), std::move(omega_minus), boundary, slope_cap), q_(tracer_site)
{
	if (q_ < 1 || q_ > walls_.size() - 2)
		throw std::out_of_range("tracer must start in the lattice interior");
}

std::vector<int> CoupledPairState::omega_plus() const
{
	std::vector<int> plus = walls_.omega();
	++plus[static_cast<std::size_t>(q_)];
	return plus;
}

double CoupledPairState::tracer_right_rate() const
{
	const RateTable& r = walls_.rate_table();
	const int w = walls_.omega(q_);
	return r(w + 1) - r(w);
}

std::vector<CoupledMenuEntry> coupled_event_menu(const CoupledPairState& state)
{
	const LatticeState& w = state.walls();
	const int q = state.tracer();
	if (q < 1 || q > w.size() - 2)
		throw std::out_of_range("tracer at the lattice boundary");
	const RateTable& r = w.rate_table();
	const int wq = w.omega(q);
	std::vector<CoupledMenuEntry> menu;
	menu.push_back({CoupledEvent::TracerLeft, q - 1, r(-wq) - r(-wq - 1)});
	menu.push_back({CoupledEvent::BothAtLeft, q - 1, r(w.omega(q - 1)) + r(-wq - 1)});
	menu.push_back({CoupledEvent::TracerRight, q, r(wq + 1) - r(wq)});
	menu.push_back({CoupledEvent::BothAtRight, q, r(wq) + r(-w.omega(q + 1))});
	for (int b = w.first_bond(); b <= w.last_bond(); ++b)
		if (b != q - 1 && b != q) menu.push_back({CoupledEvent::Joint, b, w.bond_rate(b)});
	return menu;
}

void CoupledPairState::apply(const CoupledMenuEntry& entry)
{
	LatticeState& w = walls_;
	switch (entry.event) {
	case CoupledEvent::TracerLeft:
		if (w.apply_move(q_ - 1)) {
			--q_;
			++left_jumps_;
		}
		break;
	case CoupledEvent::BothAtLeft:
		w.apply_move(q_ - 1);
		break;
	case CoupledEvent::TracerRight:
		++q_;
		++right_jumps_;
		break;
	case CoupledEvent::BothAtRight:
		w.apply_move(q_);
		break;
	case CoupledEvent::Joint:
		w.apply_move(entry.bond);
		break;
	}
	if (q_ < 1 || q_ > w.size() - 2)
		throw std::runtime_error("tracer reached the lattice boundary");
}

CoupledMenuEntry CoupledPairState::pick(double u, Rng& rng) const
{
	const double joint_total = walls_.total_rate();
	if (u >= joint_total) return {CoupledEvent::TracerRight, q_, tracer_right_rate()};
	const int b = walls_.select_bond(u);
	if (b == q_ - 1) {
		// Rows TracerLeft + BothAtLeft add up to the indexed rate of bond Q-1.
		const RateTable& r = walls_.rate_table();
		const int wq = walls_.omega(q_);
		const double row1 = r(-wq) - r(-wq - 1);
		const double bond_total = walls_.bond_rate(b);
		return rng.uniform() * bond_total < row1 ? CoupledMenuEntry{CoupledEvent::TracerLeft, b, row1}
		                                         : CoupledMenuEntry{CoupledEvent::BothAtLeft, b, bond_total - row1};
	}
	if (b == q_) return {CoupledEvent::BothAtRight, b, walls_.bond_rate(b)};
	return {CoupledEvent::Joint, b, walls_.bond_rate(b)};
}

CoupledMenuEntry CoupledPairState::step(Rng& rng)
{
	const double total = total_rate();
	walls_.set_time(walls_.time() + rng.exponential(total));
	const CoupledMenuEntry entry = pick(rng.uniform() * total, rng);
	apply(entry);
	return entry;
}

void CoupledPairState::run_until(double t_end, Rng& rng)
{
	for (;;) {
		const double total = total_rate();
		const double t_next = time() + rng.exponential(total);
		if (t_next > t_end) break;
		walls_.set_time(t_next);
		apply(pick(rng.uniform() * total, rng));
	}
	walls_.set_time(t_end);
}

// ---------------------------------------------------------------------------
// Tracer frame

namespace
{

enum Leaf : int
{
	kGhostLeftLeaf = 0,
	kGhostRightLeaf = 1,
	kLeftJumpLeaf = 2,
	kRightJumpLeaf = 3,
};

void check_support_within_cap(const GibbsMarginal& m, int cap)
{
	if (m.z_min < -cap || m.z_max > cap)
		throw std::invalid_argument("marginal support exceeds the slope cap");
}

}

TracerFrameState::TracerFrameState(RateFunction rf, double theta_left, double theta_right, int half_width,
                                   std::vector<int> initial, int slope_cap)
    : rf_(std::move(rf)), theta_left_(theta_left), theta_right_(theta_right), k_(half_width), n_(2 * half_width + 1),
      cap_(slope_cap), table_(rf_, -slope_cap - 2, slope_cap + 2), left_marginal_(build_marginal(rf_, theta_left)),
      right_marginal_(build_marginal(rf_, theta_right)), sites_(std::move(initial)),
      tree_(static_cast<std::size_t>(2 * half_width + 1 + 4))
{
	if (k_ < 3)
		throw std::invalid_argument("tracer window half-width must be at least 3");
	if (static_cast<int>(sites_.size()) != n_)
		throw std::invalid_argument("initial window must have 2K+1 sites");
	for (int w : sites_)
		if (std::abs(w) > cap_)
			throw std::invalid_argument("initial slope exceeds cap");
	check_support_within_cap(left_marginal_, cap_);
	check_support_within_cap(right_marginal_, cap_);
	ghost_left_ = expect_rate(left_marginal_, +1, 0);
	ghost_right_ = expect_rate(right_marginal_, -1, 0);
	for (int b = -k_ - 1; b <= k_; ++b) refresh_bond(b);
	refresh_frame();
}

std::vector<int> TracerFrameState::sample_two_sided(const RateFunction& rf, double theta_left, double theta_right,
                                                    int half_width, Rng& rng)
{
	return sample_product(rf, theta_left, theta_right, 2 * half_width + 1, half_width, rng);
}

std::vector<int> TracerFrameState::window() const
{
	std::vector<int> w;
	for (int i = -k_; i <= k_; ++i) w.push_back(omega(i));
	return w;
}

double TracerFrameState::compute_bond(int b) const
{
	if (b == -k_ - 1) return ghost_left_ + table_(-omega(-k_));
	if (b == k_) return table_(omega(k_)) + ghost_right_;
	if (b == -1) return table_(omega(-1)) + table_(-omega(0) - 1);
	return table_(omega(b)) + table_(-omega(b + 1));
}

double TracerFrameState::bond_rate(int b) const
{
	if (b < -k_ - 1 || b > k_)
		throw std::out_of_range("logical bond outside the window");
	if (b == -k_ - 1) return tree_.get(static_cast<std::size_t>(n_ + kGhostLeftLeaf));
	if (b == k_) return tree_.get(static_cast<std::size_t>(n_ + kGhostRightLeaf));
	return tree_.get(phys(b));
}

double TracerFrameState::left_jump_rate() const { return table_(-omega(0)) - table_(-omega(0) - 1); }
double TracerFrameState::right_jump_rate() const { return table_(omega(0) + 1) - table_(omega(0)); }

void TracerFrameState::refresh_bond(int b)
{
	if (b == -k_ - 1)
		tree_.set(static_cast<std::size_t>(n_ + kGhostLeftLeaf), compute_bond(b));
	else if (b == k_)
		tree_.set(static_cast<std::size_t>(n_ + kGhostRightLeaf), compute_bond(b));
	else
		tree_.set(phys(b), compute_bond(b));
}

void TracerFrameState::refresh_frame()
{
	// The slot after logical K wraps to logical -K: no bond there.
	tree_.set(phys(k_), 0.0);
	for (int b : {-k_ - 1, -k_, -2, -1, 0, 1, k_ - 1, k_}) refresh_bond(b);
	tree_.set(static_cast<std::size_t>(n_ + kLeftJumpLeaf), left_jump_rate());
	tree_.set(static_cast<std::size_t>(n_ + kRightJumpLeaf), right_jump_rate());
}

double TracerFrameState::recomputed_total_rate() const
{
	CompensatedSum s;
	for (int b = -k_ - 1; b <= k_; ++b) s += compute_bond(b);
	s += left_jump_rate();
	s += right_jump_rate();
	return s.value();
}

std::vector<FrameMenuEntry> TracerFrameState::menu() const
{
	std::vector<FrameMenuEntry> m;
	m.push_back({FrameEvent::GhostLeft, -k_ - 1, bond_rate(-k_ - 1)});
	for (int b = -k_; b <= k_ - 1; ++b) m.push_back({FrameEvent::Bond, b, bond_rate(b)});
	m.push_back({FrameEvent::GhostRight, k_, bond_rate(k_)});
	m.push_back({FrameEvent::LeftJump, -1, left_jump_rate()});
	m.push_back({FrameEvent::RightJump, 0, right_jump_rate()});
	return m;
}

std::vector<FrameMenuEntry> frame_event_menu(const TracerFrameState& state) { return state.menu(); }

void TracerFrameState::shift(int direction, Rng& rng)
{
	if (direction > 0) {
		// tau_1: new omega_i = old omega_{i-1}; a left-reservoir site enters at -K.
		offset_ = (offset_ - 1 + n_) % n_;
		sites_[phys(-k_)] = sample(left_marginal_, rng);
	} else {
		// tau_{-1}: new omega_i = old omega_{i+1}; a right-reservoir site enters at K.
		offset_ = (offset_ + 1) % n_;
		sites_[phys(k_)] = sample(right_marginal_, rng);
	}
	refresh_frame();
}

bool TracerFrameState::apply(const FrameMenuEntry& entry, Rng& rng)
{
	switch (entry.event) {
	case FrameEvent::Bond: {
		const int b = entry.bond;
		int& l = sites_[phys(b)];
		int& r = sites_[phys(b + 1)];
		if (l - 1 < -cap_ || r + 1 > cap_) {
			++rejections_;
			return false;
		}
		--l;
		++r;
		for (int c = b - 1; c <= b + 1; ++c) refresh_bond(c);
		refresh_frame();
		return true;
	}
	case FrameEvent::GhostLeft: {
		int& r = sites_[phys(-k_)];
		if (r + 1 > cap_) {
			++rejections_;
			return false;
		}
		++r;
		refresh_frame();
		return true;
	}
	case FrameEvent::GhostRight: {
		int& l = sites_[phys(k_)];
		if (l - 1 < -cap_) {
			++rejections_;
			return false;
		}
		--l;
		refresh_frame();
		return true;
	}
	case FrameEvent::LeftJump: {
		int& l = sites_[phys(-1)];
		int& r = sites_[phys(0)];
		if (l - 1 < -cap_ || r + 1 > cap_) {
			++rejections_;
			return false;
		}
		--l;
		++r;
		++left_jumps_;
		shift(+1, rng);
		return true;
	}
	case FrameEvent::RightJump:
		++right_jumps_;
		shift(-1, rng);
		return true;
	}
	return false;
}

FrameMenuEntry TracerFrameState::step(Rng& rng)
{
	const double total = tree_.total();
	time_ += rng.exponential(total);
	const std::size_t leaf = tree_.select(rng.uniform() * total);
	FrameMenuEntry e{FrameEvent::Bond, 0, tree_.get(leaf)};
	if (leaf < static_cast<std::size_t>(n_)) {
		e.bond = logical_of_slot(leaf);
	} else {
		switch (static_cast<int>(leaf) - n_) {
		case kGhostLeftLeaf: e = {FrameEvent::GhostLeft, -k_ - 1, e.rate}; break;
		case kGhostRightLeaf: e = {FrameEvent::GhostRight, k_, e.rate}; break;
		case kLeftJumpLeaf: e = {FrameEvent::LeftJump, -1, e.rate}; break;
		default: e = {FrameEvent::RightJump, 0, e.rate}; break;
		}
	}
	apply(e, rng);
	return e;
}

void TracerFrameState::run_until(double t_end, Rng& rng, const std::vector<double>& sample_times,
                                 const std::function<void(const TracerFrameState&, double)>& observe)
{
	std::size_t next = 0;
	while (next < sample_times.size() && sample_times[next] < time_) ++next;
	for (;;) {
		const double total = tree_.total();
		const double t_next = time_ + rng.exponential(total);
		const double horizon = std::min(t_next, t_end);
		while (next < sample_times.size() && sample_times[next] <= horizon) {
			if (observe) observe(*this, sample_times[next]);
			++next;
		}
		if (t_next > t_end) {
			time_ = t_end;
			return;
		}
		time_ = t_next;
		const std::size_t leaf = tree_.select(rng.uniform() * total);
		if (leaf < static_cast<std::size_t>(n_)) {
			apply({FrameEvent::Bond, logical_of_slot(leaf), 0.0}, rng);
			continue;
		}
		switch (static_cast<int>(leaf) - n_) {
		case kGhostLeftLeaf: apply({FrameEvent::GhostLeft, -k_ - 1, 0.0}, rng); break;
		case kGhostRightLeaf: apply({FrameEvent::GhostRight, k_, 0.0}, rng); break;
		case kLeftJumpLeaf: apply({FrameEvent::LeftJump, -1, 0.0}, rng); break;
		default: apply({FrameEvent::RightJump, 0, 0.0}, rng); break;
		}
	}
}

// ---------------------------------------------------------------------------
// Speed and marginals

double analytic_tracer_speed(const GibbsMarginal& m)
{
	return expect_rate(m, +1, 1) - expect_rate(m, +1, 0) - expect_rate(m, -1, 0) + expect_rate(m, -1, -1);
}

SpeedEstimate measure_tracer_speed(TracerFrameState& state, double t_end, Rng& rng, int batches,
                                   std::vector<std::pair<double, std::int64_t>>* trajectory)
{
	const double t0 = state.time();
	if (!(t_end > t0))
		throw std::invalid_argument("tracer speed needs a positive elapsed time");
	batches = std::max(batches, 20);
	constexpr int kPointsPerBatch = 10;
	const double width = (t_end - t0) / batches;
	std::vector<double> marks;
	for (int k = 1; k <= batches * kPointsPerBatch; ++k) marks.push_back(t0 + k * width / kPointsPerBatch);
	marks.back() = t_end;

	const std::int64_t d0 = state.displacement();
	const std::int64_t l0 = state.left_jumps(), r0 = state.right_jumps();
	if (trajectory) trajectory->emplace_back(t0, d0);
	std::vector<std::int64_t> at_batch;
	int seen = 0;
	state.run_until(t_end, rng, marks, [&](const TracerFrameState& s, double t) {
		if (trajectory) trajectory->emplace_back(t, s.displacement());
		if (++seen % kPointsPerBatch == 0) at_batch.push_back(s.displacement());
	});

	SpeedEstimate est;
	est.elapsed = t_end - t0;
	est.batches = batches;
	est.v_hat = static_cast<double>(state.displacement() - d0) / est.elapsed;
	est.left_jumps = state.left_jumps() - l0;
	est.right_jumps = state.right_jumps() - r0;
	std::int64_t prev = d0;
	double ss = 0.0;
	for (std::int64_t d : at_batch) {
		const double v = static_cast<double>(d - prev) / width;
		ss += (v - est.v_hat) * (v - est.v_hat);
		prev = d;
	}
	est.std_error = std::sqrt(ss / (batches - 1) / batches);
	return est;
}

double tv_to_exact(const std::vector<int>& values, const GibbsMarginal& m, int shift)
{
	std::map<int, double> freq;
	for (int v : values) freq[v + shift] += 1.0;
	const double n = static_cast<double>(values.size());
	double tv = 0.0;
	double covered = 0.0;
	for (const auto& [z, c] : freq) {
		const double p = m.pmf_at(z);
		covered += p;
		tv += std::abs(c / n - p);
	}
	tv += std::max(0.0, 1.0 - covered);
	return 0.5 * tv;
}

double tv_empirical(const std::vector<int>& a, const std::vector<int>& b, int shift)
{
	std::map<int, std::pair<double, double>> freq;
	for (int v : a) freq[v].first += 1.0;
	for (int v : b) freq[v + shift].second += 1.0;
	const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
	double tv = 0.0;
	for (const auto& [z, c] : freq) tv += std::abs(c.first / na - c.second / nb);
	return 0.5 * tv;
}

ShiftedMarginalReport shifted_marginal_check(const FrameSamples& s, const GibbsMarginal& left, const GibbsMarginal& right)
{
	const std::size_t n = s.origin.size();
	if (n < 100 || s.minus_one.size() != n || s.minus_two.size() != n || s.plus_two.size() != n)
		throw std::invalid_argument("shifted marginal check needs at least 100 aligned samples");
	ShiftedMarginalReport rep;
	rep.samples = n;
	rep.tv_shift = tv_empirical(s.minus_one, s.origin, +1);
	rep.tv_origin_exact = tv_to_exact(s.origin, right);
	rep.tv_left_exact = tv_to_exact(s.minus_one, left);

	auto mean = [](const std::vector<int>& v) {
		return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
	};
	const double mx = mean(s.minus_two), my = mean(s.plus_two);
	double sxx = 0.0, syy = 0.0;
	for (std::size_t k = 0; k < n; ++k) {
		sxx += (s.minus_two[k] - mx) * (s.minus_two[k] - mx);
		syy += (s.plus_two[k] - my) * (s.plus_two[k] - my);
	}
	const double norm = std::sqrt(sxx * syy) / static_cast<double>(n);
	std::vector<double> prod(n);
	for (std::size_t k = 0; k < n; ++k) prod[k] = (s.minus_two[k] - mx) * (s.plus_two[k] - my) / norm;
	rep.far_correlation = std::accumulate(prod.begin(), prod.end(), 0.0) / static_cast<double>(n);

	// Batch means over consecutive blocks absorb the time correlation.
	const std::size_t batches = 20, width = n / batches;
	double ss = 0.0;
	for (std::size_t b = 0; b < batches; ++b) {
		const double bm = std::accumulate(prod.begin() + static_cast<std::ptrdiff_t>(b * width),
		                                  prod.begin() + static_cast<std::ptrdiff_t>((b + 1) * width), 0.0) /
		                  static_cast<double>(width);
		ss += (bm - rep.far_correlation) * (bm - rep.far_correlation);
	}
	rep.far_correlation_stderr = std::sqrt(ss / (batches - 1) / batches);
	return rep;
}

}
