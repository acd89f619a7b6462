#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixhaz/hazards.hpp"
#include "mixhaz/optim.hpp"
#include "mixhaz/records.hpp"
#include "mixhaz/rng.hpp"
#include "mixhaz/simlab.hpp"

namespace mixhaz {

// ---------------------------------------------------------------------------
// non-stationary job-search model
// ---------------------------------------------------------------------------

// CRRA flow utility; sigma = 1 falls back to log
inline double crra_utility(double c, double sigma) {
	if (c <= 0.0)
		throw std::invalid_argument("crra_utility: consumption must be positive, got " +
		                            std::to_string(c));
	if (std::abs(sigma - 1.0) < 1e-12) return std::log(c);
	return (std::pow(c, 1.0 - sigma) - 1.0) / (1.0 - sigma);
}

// Environment of an unemployed worker: benefits last benefit_periods, the
// offer-arrival efficiency delta(d) is duration-dependent through the length
// of the delta vector and constant afterwards, and search effort s costs
// theta_cost * s^(1+rho) / (1+rho) per period. A type-nu worker searching
// with effort s at duration d finds a job with probability delta(d)*nu*s.
struct SearchConfig {
	double beta = 0.985;
	double sigma = 1.75;
	double wage = 1.0;
	double assets = 0.1;
	double benefit = 0.5;
	int benefit_periods = 3;
	double rho = 1.0;
	double theta_cost = 50.0;
	std::vector<double> delta = {1.0, 0.95, 0.95, 0.95};
	double fp_tol = 1e-14;
	int fp_max_iter = 500000;
	double damping = 0.5;

	double delta_at(int d) const {
		return d <= static_cast<int>(delta.size()) ? delta.at(d - 1) : delta.back();
	}
	double benefit_at(int d) const { return d <= benefit_periods ? benefit : 0.0; }
	// first duration from which the environment no longer changes
	int stationary_from() const {
		return std::max(benefit_periods + 1, static_cast<int>(delta.size()));
	}
};

struct TypeSolution {
	std::vector<double> value;   // V_u(d), d = 1..horizon
	std::vector<double> effort;  // s*(d)
	std::vector<double> hazard;  // delta(d) * nu * s*(d), clamped to [0,1]
	double value_employed = 0.0;
	double stationary_value = 0.0;
	bool effort_clamped = false;
};

namespace detail {

struct EffortChoice {
	double effort = 0.0;
	double hazard = 0.0;
	bool clamped = false;
};

// interior first-order condition with a corner at the probability bound
inline EffortChoice optimal_effort(const SearchConfig& cfg, double nu, int d, double v_employed,
                                   double v_next) {
	EffortChoice ch;
	const double eff = cfg.delta_at(d) * nu;  // job-finding probability per unit effort
	const double gain = cfg.beta * eff * (v_employed - v_next);
	if (gain <= 0.0) return ch;
	ch.effort = std::pow(gain / cfg.theta_cost, 1.0 / cfg.rho);
	if (eff * ch.effort > 1.0) {
		ch.effort = 1.0 / eff;
		ch.clamped = true;
	}
	ch.hazard = eff * ch.effort;
	return ch;
}

inline double effort_cost(const SearchConfig& cfg, double s) {
	return cfg.theta_cost * std::pow(s, 1.0 + cfg.rho) / (1.0 + cfg.rho);
}

// one application of the Bellman operator at duration d given V_u(d+1)
inline double bellman_rhs(const SearchConfig& cfg, double nu, int d, double v_employed,
                          double v_next, const EffortChoice& ch) {
	const double flow = crra_utility(cfg.benefit_at(d) + cfg.assets, cfg.sigma);
	return flow - effort_cost(cfg, ch.effort) +
	       cfg.beta * (ch.hazard * v_employed + (1.0 - ch.hazard) * v_next);
}

}  // namespace detail

// Solve the worker's problem for one type: damped fixed point for the
// stationary tail, then backward induction over the non-stationary head.
// Values, efforts and hazards are reported for d = 1..horizon.
inline TypeSolution solve_type(const SearchConfig& cfg, double nu, int horizon) {
	if (nu <= 0.0) throw std::invalid_argument("solve_type: type must be positive");
	if (cfg.beta <= 0.0 || cfg.beta >= 1.0)
		throw std::invalid_argument("solve_type: discount factor must lie in (0,1)");
	TypeSolution sol;
	sol.value_employed = crra_utility(cfg.wage + cfg.assets, cfg.sigma) / (1.0 - cfg.beta);

	// stationary tail: environment constant from d_stat on
	const int d_stat = cfg.stationary_from();
	double v = crra_utility(cfg.benefit_at(d_stat) + cfg.assets, cfg.sigma) / (1.0 - cfg.beta);
	bool fp_converged = false;
	for (int it = 0; it < cfg.fp_max_iter; ++it) {
		const auto ch = detail::optimal_effort(cfg, nu, d_stat, sol.value_employed, v);
		const double rhs = detail::bellman_rhs(cfg, nu, d_stat, sol.value_employed, v, ch);
		const double next = (1.0 - cfg.damping) * v + cfg.damping * rhs;
		if (std::abs(next - v) < cfg.fp_tol) {
			v = next;
			fp_converged = true;
			break;
		}
		v = next;
	}
	if (!fp_converged)
		throw std::runtime_error("solve_type: stationary value iteration did not converge");
	sol.stationary_value = v;

	const int n = std::max(horizon, d_stat);
	sol.value.assign(n, 0.0);
	sol.effort.assign(n, 0.0);
	sol.hazard.assign(n, 0.0);
	for (int d = n; d >= 1; --d) {
		const double v_next = d >= d_stat ? sol.stationary_value : sol.value[d];
		const auto ch = detail::optimal_effort(cfg, nu, d, sol.value_employed, v_next);
		sol.value[d - 1] = d >= d_stat
		                       ? sol.stationary_value
		                       : detail::bellman_rhs(cfg, nu, d, sol.value_employed, v_next, ch);
		sol.effort[d - 1] = ch.effort;
		sol.hazard[d - 1] = std::clamp(ch.hazard, 0.0, 1.0);
		sol.effort_clamped = sol.effort_clamped || ch.clamped;
	}
	sol.value.resize(horizon);
	sol.effort.resize(horizon);
	sol.hazard.resize(horizon);
	return sol;
}

// largest violation of the Bellman equation across reported durations,
// including the stationary fixed-point equation
inline double bellman_residual(const SearchConfig& cfg, double nu, const TypeSolution& sol) {
	double worst = 0.0;
	const int n = static_cast<int>(sol.value.size());
	const int d_stat = cfg.stationary_from();
	for (int d = 1; d <= n; ++d) {
		double v_next;
		if (d < n)
			v_next = sol.value[d];
		else if (d + 1 >= d_stat)
			v_next = sol.stationary_value;
		else
			continue;  // continuation truncated away by a short horizon
		const auto ch = detail::optimal_effort(cfg, nu, d, sol.value_employed, v_next);
		const double rhs = detail::bellman_rhs(cfg, nu, d, sol.value_employed, v_next, ch);
		worst = std::max(worst, std::abs(sol.value[d - 1] - rhs));
	}
	{
		const auto ch =
		    detail::optimal_effort(cfg, nu, d_stat, sol.value_employed, sol.stationary_value);
		const double rhs = detail::bellman_rhs(cfg, nu, d_stat, sol.value_employed,
		                                       sol.stationary_value, ch);
		worst = std::max(worst, std::abs(sol.stationary_value - rhs));
	}
	return worst;
}

// ---------------------------------------------------------------------------
// implied duration paths for a type mixture
// ---------------------------------------------------------------------------

struct TypeMixture {
	std::vector<double> nu;
	std::vector<double> prob;
};

struct SearchPaths {
	std::vector<double> observed;      // aggregate exit rate among survivors
	std::vector<double> structural;    // E[h(d | nu)] over the initial mixture
	std::vector<double> average_type;  // E[nu S(d-1)] / E[S(d-1)], survival-reweighted
	std::vector<std::vector<double>> type_hazard;  // per mixture component
};

inline SearchPaths search_paths(const SearchConfig& cfg, const TypeMixture& mix, int horizon) {
	if (mix.nu.empty() || mix.nu.size() != mix.prob.size())
		throw std::invalid_argument("search_paths: mixture components and weights must align");
	SearchPaths out;
	const std::size_t T = mix.nu.size();
	out.type_hazard.resize(T);
	std::vector<double> surv(T, 1.0);
	for (std::size_t t = 0; t < T; ++t)
		out.type_hazard[t] = solve_type(cfg, mix.nu[t], horizon).hazard;
	for (int d = 1; d <= horizon; ++d) {
		double num = 0.0, den = 0.0, str = 0.0, nudot = 0.0;
		for (std::size_t t = 0; t < T; ++t) {
			const double h = out.type_hazard[t][d - 1];
			num += mix.prob[t] * surv[t] * h;
			den += mix.prob[t] * surv[t];
			nudot += mix.prob[t] * surv[t] * mix.nu[t];
			str += mix.prob[t] * h;
		}
		if (den <= 0.0) throw std::runtime_error("search_paths: no surviving mass at d = " +
		                                         std::to_string(d));
		out.observed.push_back(num / den);
		out.structural.push_back(str);
		out.average_type.push_back(nudot / den);
		for (std::size_t t = 0; t < T; ++t) surv[t] *= 1.0 - out.type_hazard[t][d - 1];
	}
	return out;
}

// ---------------------------------------------------------------------------
// simulated panels from the search model
// ---------------------------------------------------------------------------

// Notice groups share everything except the first-period arrival efficiency
// delta(1), reflecting search that begins during the notice period.
struct SearchPanelSpec {
	std::vector<double> group_shares = {0.5, 0.5};
	std::vector<double> delta1 = {1.0, 1.25};
	TypeMixture types{{1.0, 0.5}, {0.5, 0.5}};
	int dbar = 4;
};

inline SearchConfig with_delta1(const SearchConfig& base, double d1) {
	SearchConfig cfg = base;
	cfg.delta.at(0) = d1;
	return cfg;
}

inline Panel simulate_search_panel(const SearchConfig& base, const SearchPanelSpec& spec, int n,
                                   std::uint64_t seed, int replication = 0) {
	const int G = static_cast<int>(spec.group_shares.size());
	if (static_cast<int>(spec.delta1.size()) != G)
		throw std::invalid_argument("simulate_search_panel: one delta(1) per notice group");
	const int T = static_cast<int>(spec.types.nu.size());
	std::vector<std::vector<std::vector<double>>> hz(G);
	for (int g = 0; g < G; ++g) {
		const SearchConfig cfg = with_delta1(base, spec.delta1[g]);
		hz[g].resize(T);
		for (int t = 0; t < T; ++t) hz[g][t] = solve_type(cfg, spec.types.nu[t], spec.dbar).hazard;
	}
	Panel panel;
	for (int g = 0; g < G; ++g) panel.notice_labels.push_back("g" + std::to_string(g));
	panel.rows.reserve(n);
	for (int i = 0; i < n; ++i) {
		Rng rng(seed, static_cast<std::uint64_t>(replication), static_cast<std::uint64_t>(i));
		const int g = rng.categorical(spec.group_shares);
		const int t = rng.categorical(spec.types.prob);
		DurationRecord rec;
		rec.id = i;
		rec.notice = g;
		rec.censored = true;
		rec.duration = spec.dbar + 1;
		for (int d = 1; d <= spec.dbar; ++d)
			if (rng.bernoulli(hz[g][t][d - 1])) {
				rec.duration = d;
				rec.censored = false;
				break;
			}
		panel.rows.push_back(rec);
	}
	return panel;
}

// ---------------------------------------------------------------------------
// calibration
// ---------------------------------------------------------------------------

// Free parameters: the duration profile delta(2..D_T) common to all groups,
// plus the type scale (single-type mode) or the low type and its complement
// share (two-type mode, high type normalized to 1). delta(1) is fixed per
// group. Targets are per-group observed exit-rate paths.
struct CalibrationSpec {
	bool two_type = false;
	std::vector<double> delta1 = {1.0, 1.25};
	int dbar = 4;
	int n_restarts = 5;
	double restart_jitter = 0.25;
	double fit_tol = 1e-8;
	double fail_above = 1e-2;
};

struct CalibrationResult {
	SearchConfig config;  // base config with calibrated delta tail (delta(1) of group 0)
	double nu = 1.0;      // single-type scale
	double nu_low = 0.5;
	double pi_high = 0.5;
	std::vector<double> delta_tail;  // delta(2..D_T)
	std::vector<std::string> target_names;
	std::vector<double> residuals;
	double max_abs_residual = 0.0;
	bool converged = false;
};

namespace detail {

struct CalibProblem {
	const SearchConfig* base;
	const CalibrationSpec* spec;
	const std::vector<std::vector<double>>* targets;

	int n_params() const {
		const int tail = static_cast<int>(base->delta.size()) - 1;
		return tail + (spec->two_type ? 2 : 1);
	}
	// transformed vector: log delta tail, then log nu (or log nu_low, logit pi)
	Eigen::VectorXd start() const {
		Eigen::VectorXd z(n_params());
		int at = 0;
		for (std::size_t d = 1; d < base->delta.size(); ++d) z[at++] = std::log(0.9);
		if (spec->two_type) {
			z[at++] = std::log(0.5);
			z[at++] = 0.0;  // pi = 0.5
		} else {
			z[at++] = std::log(0.7);
		}
		return z;
	}
	void unpack(const Eigen::VectorXd& z, SearchConfig& cfg, TypeMixture& mix) const {
		cfg = *base;
		int at = 0;
		for (std::size_t d = 1; d < cfg.delta.size(); ++d) cfg.delta[d] = std::exp(z[at++]);
		if (spec->two_type) {
			const double nu_low = std::exp(z[at++]);
			const double pi = 1.0 / (1.0 + std::exp(-z[at++]));
			mix.nu = {1.0, nu_low};
			mix.prob = {pi, 1.0 - pi};
		} else {
			mix.nu = {std::exp(z[at++])};
			mix.prob = {1.0};
		}
	}
	Eigen::VectorXd residuals(const Eigen::VectorXd& z) const {
		SearchConfig cfg;
		TypeMixture mix;
		unpack(z, cfg, mix);
		const int G = static_cast<int>(spec->delta1.size());
		Eigen::VectorXd r(G * spec->dbar);
		int at = 0;
		for (int g = 0; g < G; ++g) {
			const SearchPaths paths =
			    search_paths(with_delta1(cfg, spec->delta1[g]), mix, spec->dbar);
			for (int d = 1; d <= spec->dbar; ++d)
				r[at++] = paths.observed[d - 1] - (*targets)[g][d - 1];
		}
		return r;
	}
};

}  // namespace detail

// Least-squares fit of the free search-model parameters to per-group
// observed exit-rate targets: Nelder-Mead from jittered restarts, then a
// Levenberg-Marquardt polish from the best candidate.
inline CalibrationResult calibrate_search_model(const SearchConfig& base,
                                                const CalibrationSpec& spec,
                                                const std::vector<std::vector<double>>& targets,
                                                std::uint64_t seed = 31u) {
	if (targets.size() != spec.delta1.size())
		throw std::invalid_argument("calibrate_search_model: one target path per notice group");
	for (const auto& t : targets)
		if (static_cast<int>(t.size()) != spec.dbar)
			throw std::invalid_argument("calibrate_search_model: target path length must equal dbar");
	detail::CalibProblem prob{&base, &spec, &targets};
	auto safe_residuals = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
		try {
			return prob.residuals(z);
		} catch (const std::exception&) {
			return Eigen::VectorXd::Constant(
			    static_cast<int>(targets.size()) * spec.dbar, 1e4);
		}
	};
	auto objective = [&](const Eigen::VectorXd& z) { return safe_residuals(z).squaredNorm(); };

	Eigen::VectorXd best = prob.start();
	double best_val = objective(best);
	Rng rng(seed, 0xCA11B7A7E5EEDULL);
	for (int r = 0; r < spec.n_restarts; ++r) {
		Eigen::VectorXd z0 = prob.start();
		if (r > 0)
			for (int j = 0; j < z0.size(); ++j)
				z0[j] += spec.restart_jitter * (2.0 * rng.uniform() - 1.0);
		const OptimResult nm = nelder_mead(objective, z0, 0.1, 1e-16);
		if (nm.value < best_val) {
			best_val = nm.value;
			best = nm.x;
		}
	}
	const OptimResult lm = levenberg_marquardt(safe_residuals, best, 1e-18, 400);
	if (lm.value < best_val) {
		best_val = lm.value;
		best = lm.x;
	}

	CalibrationResult out;
	TypeMixture mix;
	prob.unpack(best, out.config, mix);
	out.delta_tail.assign(out.config.delta.begin() + 1, out.config.delta.end());
	if (spec.two_type) {
		out.nu_low = mix.nu[1];
		out.pi_high = mix.prob[0];
	} else {
		out.nu = mix.nu[0];
	}
	const Eigen::VectorXd r = safe_residuals(best);
	out.residuals.assign(r.data(), r.data() + r.size());
	out.max_abs_residual = r.size() ? r.cwiseAbs().maxCoeff() : 0.0;
	for (std::size_t g = 0; g < targets.size(); ++g)
		for (int d = 1; d <= spec.dbar; ++d)
			out.target_names.push_back("g" + std::to_string(g) + ":h(" + std::to_string(d) + ")");
	out.converged = out.max_abs_residual < spec.fail_above;
	return out;
}

}  // namespace mixhaz
