#ifndef BRICKLAYERS_TRACER_HPP
#define BRICKLAYERS_TRACER_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bricklayers/engine.hpp"
#include "bricklayers/gibbs.hpp"

namespace bricklayers
{

/// Rows of the two-wall coupling at the discrepancy site Q, plus the
/// ordinary joint growth everywhere else.
enum class CoupledEvent
{
	TracerLeft,   ///< omega^- grows at bond Q-1, Q decreases
	BothAtLeft,   ///< both walls grow at bond Q-1
	TracerRight,  ///< only omega^+ grows at bond Q, Q increases
	BothAtRight,  ///< both walls grow at bond Q
	Joint,        ///< both walls grow at some bond away from Q
};

struct CoupledMenuEntry
{
	CoupledEvent event;
	int bond;
	double rate;
};

/// Two walls omega^- and omega^+ = omega^- + [i = Q] evolved by the
/// coupling; only omega^- is stored.
class CoupledPairState
{
public:
	CoupledPairState(RateFunction rf, std::vector<int> omega_minus, int tracer_site, GhostProduct boundary,
	                 int slope_cap = kDefaultSlopeCap);

	const LatticeState& walls() const { return walls_; }
	int tracer() const { return q_; }
	std::int64_t displacement() const { return right_jumps_ - left_jumps_; }
	std::int64_t left_jumps() const { return left_jumps_; }
	std::int64_t right_jumps() const { return right_jumps_; }
	double time() const { return walls_.time(); }

	std::vector<int> omega_plus() const;

	double total_rate() const { return walls_.total_rate() + tracer_right_rate(); }

	/// r(omega^-_Q + 1) - r(omega^-_Q).
	double tracer_right_rate() const;

	void apply(const CoupledMenuEntry& entry);
	CoupledMenuEntry step(Rng& rng);
	void run_until(double t_end, Rng& rng);

private:
	CoupledMenuEntry pick(double u, Rng& rng) const;

	LatticeState walls_;
	int q_;
	std::int64_t left_jumps_ = 0;
	std::int64_t right_jumps_ = 0;
};

/// Four coupling rows at bonds Q-1 and Q followed by one Joint entry per
/// other bond. Throws if Q is not interior.
std::vector<CoupledMenuEntry> coupled_event_menu(const CoupledPairState& state);

enum class FrameEvent
{
	Bond,       ///< ordinary or tracer-adjacent bond growth inside the window
	GhostLeft,  ///< bond between the left reservoir and site -K
	GhostRight, ///< bond between site K and the right reservoir
	LeftJump,   ///< bond -1 grows, then the frame shifts by tau_1
	RightJump,  ///< pure frame shift tau_{-1}
};

struct FrameMenuEntry
{
	FrameEvent event;
	int bond; ///< logical bond for Bond, otherwise unused
	double rate;
};

/// The omega^- process seen from the tracer, omega_i = omega^-_{Q+i}, on the
/// window i in [-K, K].
///
/// Sites live in a circular buffer; logical index 0 always addresses the
/// tracer, so frame shifts only move an offset. The site scrolling in at a
/// shift is drawn fresh from mu^(theta_left) (left end) or mu^(theta_right)
/// (right end), and the reservoirs beyond the window are heat-bath ghosts
/// with the same parameters.
class TracerFrameState
{
public:
	TracerFrameState(RateFunction rf, double theta_left, double theta_right, int half_width,
	                 std::vector<int> initial, int slope_cap = kDefaultSlopeCap);

	/// omega_i ~ mu^(theta_left) for i < 0 and mu^(theta_right) for i >= 0.
	static std::vector<int> sample_two_sided(const RateFunction& rf, double theta_left, double theta_right,
	                                         int half_width, Rng& rng);

	int half_width() const { return k_; }
	int omega(int logical) const { return sites_[phys(logical)]; }
	std::vector<int> window() const;
	double theta_left() const { return theta_left_; }
	double theta_right() const { return theta_right_; }

	double time() const { return time_; }
	std::int64_t displacement() const { return right_jumps_ - left_jumps_; }
	std::int64_t left_jumps() const { return left_jumps_; }
	std::int64_t right_jumps() const { return right_jumps_; }
	std::int64_t rejections() const { return rejections_; }

	/// Rate of logical bond b in [-K-1, K]; -K-1 and K are the ghost bonds.
	double bond_rate(int b) const;
	double left_jump_rate() const;
	double right_jump_rate() const;

	double total_rate() const { return tree_.total(); }
	double recomputed_total_rate() const;

	std::vector<FrameMenuEntry> menu() const;

	/// Applies an event; rng supplies the site scrolling in on a shift.
	/// Returns false when the slope cap rejects it.
	bool apply(const FrameMenuEntry& entry, Rng& rng);
	FrameMenuEntry step(Rng& rng);

	/// Advances to t_end, calling observe at each time in sample_times.
	void run_until(double t_end, Rng& rng, const std::vector<double>& sample_times = {},
	               const std::function<void(const TracerFrameState&, double)>& observe = {});

private:
	std::size_t phys(int logical) const
	{
		return static_cast<std::size_t>(((offset_ + logical + k_) % n_ + n_) % n_);
	}
	int logical_of_slot(std::size_t slot) const
	{
		return static_cast<int>((static_cast<int>(slot) - offset_ + 2 * n_) % n_) - k_;
	}
	double compute_bond(int b) const;
	void refresh_bond(int b);
	void refresh_frame();
	void shift(int direction, Rng& rng);

	RateFunction rf_;
	double theta_left_, theta_right_;
	int k_;
	int n_;
	int cap_;
	RateTable table_;
	GibbsMarginal left_marginal_, right_marginal_;
	double ghost_left_ = 0.0, ghost_right_ = 0.0;
	std::vector<int> sites_;
	int offset_ = 0;
	SumTree tree_;
	double time_ = 0.0;
	std::int64_t left_jumps_ = 0, right_jumps_ = 0, rejections_ = 0;
};

std::vector<FrameMenuEntry> frame_event_menu(const TracerFrameState& state);

/// E[r(omega+1) - r(omega)] - E[r(-omega) - r(-omega-1)] under the marginal.
double analytic_tracer_speed(const GibbsMarginal& marginal_at_origin);

struct SpeedEstimate
{
	double v_hat = 0.0;
	double std_error = 0.0;
	double elapsed = 0.0;
	int batches = 0;
	std::int64_t left_jumps = 0;
	std::int64_t right_jumps = 0;
};

/// Displacement / elapsed time over [time(), t_end], with the standard error
/// from batch means over equal time batches (at least 20). When trajectory
/// is given, (time, displacement) is appended ten times per batch.
SpeedEstimate measure_tracer_speed(TracerFrameState& state, double t_end, Rng& rng, int batches = 20,
                                   std::vector<std::pair<double, std::int64_t>>* trajectory = nullptr);

/// Slope samples near the tracer, one entry per observation time.
struct FrameSamples
{
	std::vector<int> minus_two, minus_one, origin, plus_two;
	void record(const TracerFrameState& s)
	{
		minus_two.push_back(s.omega(-2));
		minus_one.push_back(s.omega(-1));
		origin.push_back(s.omega(0));
		plus_two.push_back(s.omega(2));
	}
};

struct ShiftedMarginalReport
{
	std::size_t samples = 0;
	double tv_shift = 0.0;        ///< TV(law(omega_-1), law(omega_0 + 1))
	double tv_origin_exact = 0.0; ///< TV(law(omega_0), mu^(theta_right))
	double tv_left_exact = 0.0;   ///< TV(law(omega_-1), mu^(theta_left))
	double far_correlation = 0.0; ///< corr(omega_-2, omega_2)
	double far_correlation_stderr = 0.0;
};

ShiftedMarginalReport shifted_marginal_check(const FrameSamples& samples, const GibbsMarginal& left,
                                             const GibbsMarginal& right);

/// TV distance between an empirical sample and an exact marginal.
double tv_to_exact(const std::vector<int>& values, const GibbsMarginal& m, int shift = 0);

/// TV distance between two empirical samples; `shift` is added to the second.
double tv_empirical(const std::vector<int>& a, const std::vector<int>& b, int shift = 0);

}

#endif
