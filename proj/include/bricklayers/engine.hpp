#ifndef BRICKLAYERS_ENGINE_HPP
#define BRICKLAYERS_ENGINE_HPP

#include <climits>
#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "bricklayers/gibbs.hpp"
#include "bricklayers/numeric.hpp"
#include "bricklayers/rates.hpp"

namespace bricklayers
{

inline constexpr int kDefaultSlopeCap = 24;

/// Binary sum tree over nonnegative weights: O(log n) update and
/// proportional selection. Internal nodes are recomputed from their
/// children on every update, so totals never drift.
class SumTree
{
public:
	explicit SumTree(std::size_t n = 0);

	std::size_t size() const { return n_; }
	void set(std::size_t i, double w);
	double get(std::size_t i) const { return nodes_[cap_ + i]; }
	double total() const { return nodes_.empty() ? 0.0 : nodes_[1]; }

	/// Leaf i with prefix(i) <= u < prefix(i+1), for u in [0, total()).
	std::size_t select(double u) const;

	/// Same contract by linear scan; oracle for select().
	std::size_t select_linear(double u) const;

private:
	std::size_t n_ = 0;
	std::size_t cap_ = 1;
	std::vector<double> nodes_;
};

/// exp(log r(z)) cached on [lo, hi].
class RateTable
{
public:
	RateTable() = default;
	RateTable(const RateFunction& rf, int lo, int hi);
	double operator()(int z) const { return values_[static_cast<std::size_t>(z - lo_)]; }
	int lo() const { return lo_; }
	int hi() const { return lo_ + static_cast<int>(values_.size()) - 1; }

private:
	int lo_ = 0;
	std::vector<double> values_;
};

struct Ring
{
};

/// Open window with heat-bath reservoirs: the neighbor left of site 0 is a
/// fresh mu^(theta_left) draw and the neighbor right of site N-1 a fresh
/// mu^(theta_right) draw. Averaged over the ghost, the boundary bond rates are
/// E r(g) + r(-omega_0) and r(omega_{N-1}) + E r(-g). split_index only
/// affects initial sampling.
struct GhostProduct
{
	double theta_left = 0.0;
	double theta_right = 0.0;
	int split_index = 0;
};

using Boundary = std::variant<Ring, GhostProduct>;

std::string boundary_name(const Boundary& b);

inline constexpr int kGhostSlope = INT_MIN;

struct EventRecord
{
	double time = 0.0;
	int bond = 0;
	int pre_left = 0, pre_right = 0;   ///< (omega_i, omega_{i+1}); kGhostSlope for reservoir sides
	int post_left = 0, post_right = 0;
	bool accepted = true;
};

/// Finite lattice of slopes with an event clock and a bond-rate index.
///
/// Bonds are numbered by their left site: 0..N-1 on a ring (bond N-1 joins
/// sites N-1 and 0), -1..N-1 under GhostProduct.
class LatticeState
{
public:
	LatticeState(RateFunction rf, std::vector<int> omega, Boundary boundary, int slope_cap = kDefaultSlopeCap);

	int size() const { return static_cast<int>(omega_.size()); }
	const std::vector<int>& omega() const { return omega_; }
	int omega(int i) const { return omega_[static_cast<std::size_t>(i)]; }
	const Boundary& boundary() const { return boundary_; }
	const RateFunction& rates() const { return rf_; }
	const RateTable& rate_table() const { return table_; }
	int slope_cap() const { return cap_; }
	bool is_ring() const { return std::holds_alternative<Ring>(boundary_); }

	double time() const { return time_; }
	void set_time(double t) { time_ = t; }

	int first_bond() const { return is_ring() ? 0 : -1; }
	int last_bond() const { return size() - 1; }
	bool valid_bond(int i) const { return i >= first_bond() && i <= last_bond(); }

	/// Current indexed rate r(omega_i) + r(-omega_{i+1}).
	double bond_rate(int i) const { return tree_.get(leaf(i)); }

	/// Rate recomputed from the configuration, bypassing the index.
	double compute_bond_rate(int i) const;

	double total_rate() const { return tree_.total(); }
	double recomputed_total_rate() const;

	/// Bond whose cumulative-rate interval contains u in [0, total_rate()).
	int select_bond(double u) const { return static_cast<int>(tree_.select(u)) + first_bond(); }
	int select_bond_linear(double u) const { return static_cast<int>(tree_.select_linear(u)) + first_bond(); }

	/// (omega_i, omega_{i+1}) -> (omega_i - 1, omega_{i+1} + 1). Returns false
	/// and counts a rejection when a slope would leave [-cap, cap].
	bool apply_move(int i);

	std::int64_t rejections() const { return rejections_; }
	double ghost_mean_rate_left() const { return ghost_left_; }
	double ghost_mean_rate_right() const { return ghost_right_; }

	/// Sum of omega over the lattice (conserved on a ring).
	long long slope_sum() const;

	/// Directly overwrite a site and refresh the affected bond rates.
	void set_omega(int i, int value);

private:
	std::size_t leaf(int bond) const { return static_cast<std::size_t>(bond - first_bond()); }
	int wrap(int i) const { return (i % size() + size()) % size(); }
	void refresh(int bond);

	RateFunction rf_;
	std::vector<int> omega_;
	Boundary boundary_;
	int cap_;
	RateTable table_;
	SumTree tree_;
	double time_ = 0.0;
	double ghost_left_ = 0.0;
	double ghost_right_ = 0.0;
	std::int64_t rejections_ = 0;
};

/// Independent draws from mu^(theta_left) on [0, split) and mu^(theta_right)
/// on [split, n).
std::vector<int> sample_product(const RateFunction& rf, double theta_left, double theta_right, int n, int split, Rng& rng);

/// Exponential holding time at the current total rate, then a bond chosen in
/// proportion to its rate and moved. Requires total_rate() > 0.
EventRecord gillespie_step(LatticeState& state, Rng& rng);

struct SampleHooks
{
	/// Times at which on_sample fires (ascending). Empty: fire once at t_end.
	std::vector<double> times;
	std::function<void(const LatticeState&, double)> on_sample;
	/// Called after every event when set (event log).
	std::function<void(const EventRecord&)> on_event;
};

struct SimulationStats
{
	std::int64_t events = 0;
	std::int64_t rejections = 0;
	int samples = 0;
};

/// Runs events until the clock passes t_end; the pending event beyond t_end
/// is discarded (memoryless) and the clock is set to t_end.
SimulationStats simulate_until(LatticeState& state, double t_end, Rng& rng, const SampleHooks& hooks = {});

/// Rate matrix of the ring dynamics restricted to slopes in [-M, M].
/// Moves leaving the box are dropped; diagonals make every row sum to 0.
struct ExactGenerator
{
	int sites = 0;
	int truncation = 0;
	Eigen::SparseMatrix<double, Eigen::RowMajor> Q;

	int state_count() const { return static_cast<int>(Q.rows()); }
	std::vector<int> decode(int index) const;
	int encode(const std::vector<int>& omega) const;
};

ExactGenerator build_exact_generator(const RateFunction& rf, int sites, int truncation);

/// Product of one-site marginals on the generator's state space, renormalized
/// to sum to one over the box.
Eigen::VectorXd product_vector(const ExactGenerator& gen, const GibbsMarginal& m);

/// Permutation matrix of the cyclic shift omega_i -> omega_{i-1}.
Eigen::SparseMatrix<double, Eigen::RowMajor> cyclic_shift_matrix(const ExactGenerator& gen);

/// Column heights over the bonds: h_0 = 0 and h_i = h_{i-1} - omega_i, so
/// omega_i = h_{i-1} - h_i for i >= 1. A move at bond i >= 1 raises h_i alone.
struct HeightField
{
	std::vector<long long> h;
};

HeightField height_field(const LatticeState& state);

/// `# {json}` header then `i,omega`.
std::string export_snapshot(const LatticeState& state, const nlohmann::json& header);

/// Pooled histogram of slope values as `z,count` rows.
std::string export_histogram(const std::vector<std::int64_t>& counts, int z_lo, const nlohmann::json& header);

std::string format_event(const EventRecord& e);

}

#endif
